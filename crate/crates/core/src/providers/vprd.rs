//! VPRD v1 matrix files and the headerless CSV score-matrix alternative.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `VPRD`                           |
//! | 4      | 1    | version, always 1                      |
//! | 5      | 1    | dtype, 1 = f32                         |
//! | 6      | 1    | role, 0 = descriptors, 1 = scores      |
//! | 7      | 4    | rows (u32)                             |
//! | 11     | 4    | cols (u32)                             |
//! | 15     | 4·rows·cols | f32 values, row-major           |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VPRD";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 15;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?} at byte 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {version} at byte 4")]
    UnsupportedVersion { version: u8 },
    #[error("unsupported dtype {dtype} at byte 5")]
    UnsupportedDtype { dtype: u8 },
    #[error("unknown role {role} at byte 6")]
    UnknownRole { role: u8 },
    #[error("file truncated at byte {offset}: expected {expected} bytes in total")]
    TruncatedFile { offset: u64, expected: u64 },
    #[error("non-finite value at byte {offset}")]
    NonFiniteValue { offset: u64 },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("expected a {expected:?} file, found {found:?}")]
    WrongRole {
        expected: MatrixRole,
        found: MatrixRole,
    },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    Descriptors,
    Scores,
}

impl MatrixRole {
    fn code(self) -> u8 {
        match self {
            MatrixRole::Descriptors => 0,
            MatrixRole::Scores => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MatrixRole::Descriptors),
            1 => Some(MatrixRole::Scores),
            _ => None,
        }
    }
}

/// Dense row-major f32 matrix. One descriptor per row, or one query's scores
/// per row when used as a score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DescriptorMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, FormatError> {
        if rows == 0 || cols == 0 {
            return Err(FormatError::EmptyMatrix { rows, cols });
        }
        assert_eq!(data.len(), rows * cols, "data length must be rows * cols");
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFiniteValue {
                offset: (HEADER_LEN + 4 * i) as u64,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, FormatError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(FormatError::Csv {
                line: bad as u64 + 1,
                message: format!("expected {cols} values, found {}", rows[bad].len()),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub fn write_vprd<W: Write>(
    mut w: W,
    matrix: &DescriptorMatrix,
    role: MatrixRole,
) -> Result<(), FormatError> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32, role.code()])?;
    w.write_all(&(matrix.rows as u32).to_le_bytes())?;
    w.write_all(&(matrix.cols as u32).to_le_bytes())?;
    for v in &matrix.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_at<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    offset: u64,
    expected: u64,
) -> Result<(), FormatError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(FormatError::TruncatedFile {
                    offset: offset + filled as u64,
                    expected,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn read_vprd<R: Read>(mut r: R) -> Result<(DescriptorMatrix, MatrixRole), FormatError> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_at(&mut r, &mut header, 0, HEADER_LEN as u64)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    if header[4] != VERSION {
        return Err(FormatError::UnsupportedVersion { version: header[4] });
    }
    if header[5] != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype { dtype: header[5] });
    }
    let role =
        MatrixRole::from_code(header[6]).ok_or(FormatError::UnknownRole { role: header[6] })?;
    let rows = u32::from_le_bytes(header[7..11].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[11..15].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(FormatError::EmptyMatrix { rows, cols });
    }
    let count = rows * cols;
    let expected = (HEADER_LEN + 4 * count) as u64;
    let mut body = vec![0u8; 4 * count];
    read_exact_at(&mut r, &mut body, HEADER_LEN as u64, expected)?;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFiniteValue {
                offset: (HEADER_LEN + 4 * i) as u64,
            });
        }
        data.push(v);
    }
    Ok((DescriptorMatrix { rows, cols, data }, role))
}

pub fn save_vprd(
    path: impl AsRef<Path>,
    matrix: &DescriptorMatrix,
    role: MatrixRole,
) -> Result<(), FormatError> {
    write_vprd(BufWriter::new(File::create(path)?), matrix, role)
}

pub fn load_vprd(path: impl AsRef<Path>) -> Result<(DescriptorMatrix, MatrixRole), FormatError> {
    read_vprd(BufReader::new(File::open(path)?))
}

/// Loads a VPRD file that must carry the descriptor role.
pub fn load_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorMatrix, FormatError> {
    expect_role(load_vprd(path)?, MatrixRole::Descriptors)
}

fn expect_role(
    (m, role): (DescriptorMatrix, MatrixRole),
    expected: MatrixRole,
) -> Result<DescriptorMatrix, FormatError> {
    if role != expected {
        return Err(FormatError::WrongRole {
            expected,
            found: role,
        });
    }
    Ok(m)
}

/// Reads a headerless CSV score matrix: one query per line.
pub fn read_score_csv<R: Read>(r: R) -> Result<DescriptorMatrix, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let rec = rec.map_err(|e| FormatError::Csv {
            line,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| FormatError::Csv {
                        line,
                        message: format!("not a finite number: {f:?}"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    DescriptorMatrix::from_rows(&rows)
}

pub fn write_score_csv<W: Write>(w: W, m: &DescriptorMatrix) -> Result<(), FormatError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in 0..m.rows() {
        writer
            .write_record(m.row(r).iter().map(|v| v.to_string()))
            .map_err(|e| FormatError::Csv {
                line: r as u64 + 1,
                message: e.to_string(),
            })?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a score matrix (rows = queries, cols = references) from either a
/// VPRD file with the score role or a `.csv` file.
pub fn load_score_matrix(path: impl AsRef<Path>) -> Result<DescriptorMatrix, FormatError> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_score_csv(BufReader::new(File::open(path)?))
    } else {
        expect_role(load_vprd(path)?, MatrixRole::Scores)
    }
}
