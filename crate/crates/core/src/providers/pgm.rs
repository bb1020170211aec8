//! Binary PGM (P5) images, 8-bit only.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (P5) file")]
    NotP5,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("only 8-bit PGM is supported, maxval is {0}")]
    UnsupportedDepth(u32),
    #[error("PGM pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(
            pixels.len(),
            width * height,
            "pixel count must be width * height"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("missing {what}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::NotP5);
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedDepth(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(PgmError::BadHeader(
            "missing separator before pixel data".into(),
        ));
    }
    let data = &bytes[cur.pos + 1..];
    let expected = width * height;
    if data.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: data.len(),
        });
    }
    Ok(GrayImage::new(width, height, data[..expected].to_vec()))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 20);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height).unwrap();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PgmError> {
    decode_pgm(&fs::read(path)?)
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), PgmError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_comment() {
        let img = GrayImage::from_fn(3, 2, |x, y| (x * 10 + y) as u8);
        let bytes = encode_pgm(&img);
        assert_eq!(decode_pgm(&bytes).unwrap(), img);

        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(img.pixels());
        assert_eq!(decode_pgm(&commented).unwrap(), img);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0"),
            Err(PgmError::NotP5)
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\0\0"),
            Err(PgmError::UnsupportedDepth(65535))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\0"),
            Err(PgmError::Truncated {
                expected: 4,
                found: 1
            })
        ));
    }
}
