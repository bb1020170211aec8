//! Similarity score vectors, per-vector z-score normalization and the
//! append-only score stream that SIC walks backwards over.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("score vector is empty")]
    Empty,
    #[error("non-finite score {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("normalization needs at least 2 scores, got {0}")]
    TooShort(usize),
    #[error("score vector has {got} entries, stream expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Similarity scores of one query against every reference place.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ScoreError> {
        if values.is_empty() {
            return Err(ScoreError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ScoreError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, ScoreError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the highest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Indices sorted by descending score, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| num_cmp(self.0[b], self.0[a]).then(a.cmp(&b)));
        idx
    }

    /// The `k` best indices in [`ranking`](Self::ranking) order, without
    /// sorting the whole vector.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let k = k.min(self.0.len());
        if k == 0 {
            return Vec::new();
        }
        let cmp = |a: &usize, b: &usize| num_cmp(self.0[*b], self.0[*a]).then(a.cmp(b));
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, cmp);
            idx.truncate(k);
        }
        idx.sort_by(cmp);
        idx
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

// Values are finite, so this is total. Unlike `total_cmp` it ties -0.0 with 0.0.
fn num_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}

/// Mean and population standard deviation of one score vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub mean: f64,
    pub std_dev: f64,
}

impl NormalizationParams {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std_dev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub scores: ScoreVector,
    pub params: NormalizationParams,
    /// Set when every input score was identical. `scores` is then all zeros.
    pub degenerate: bool,
}

/// Z-score a vector with its own mean and population standard deviation so
/// that scores from different techniques share one value range.
pub fn normalize_scores(raw: &ScoreVector) -> Result<Normalized, ScoreError> {
    if raw.len() < 2 {
        return Err(ScoreError::TooShort(raw.len()));
    }
    let params = NormalizationParams::of(raw.as_slice());
    // A vector whose spread is lost in rounding is treated as flat.
    let flat = params.std_dev == 0.0
        || raw.as_slice().iter().all(|&v| v == raw[0])
        || params.std_dev <= f64::EPSILON * params.mean.abs();
    if flat {
        return Ok(Normalized {
            scores: ScoreVector(vec![0.0; raw.len()]),
            params,
            degenerate: true,
        });
    }
    let scores = raw
        .as_slice()
        .iter()
        .map(|v| (v - params.mean) / params.std_dev)
        .collect();
    Ok(Normalized {
        scores: ScoreVector(scores),
        params,
        degenerate: false,
    })
}

/// Time-ordered rows of score vectors for one technique. Rows are append-only.
#[derive(Debug, Clone, Default)]
pub struct ScoreStream {
    rows: Vec<ScoreVector>,
    width: Option<usize>,
    normalized: bool,
}

impl ScoreStream {
    /// A stream whose rows are stored exactly as appended.
    pub fn raw() -> Self {
        Self::default()
    }

    /// A stream that holds z-scored rows. [`ingest`](Self::ingest) normalizes
    /// before appending.
    pub fn normalized() -> Self {
        Self {
            normalized: true,
            ..Self::default()
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reference count N, once the first row fixed it.
    pub fn width(&self) -> Option<usize> {
        self.width
    }

    /// Appends `scores` verbatim and returns its query index.
    pub fn append(&mut self, scores: ScoreVector) -> Result<usize, ScoreError> {
        match self.width {
            Some(expected) if expected != scores.len() => {
                return Err(ScoreError::ShapeMismatch {
                    expected,
                    got: scores.len(),
                })
            }
            None => self.width = Some(scores.len()),
            _ => {}
        }
        self.rows.push(scores);
        Ok(self.rows.len() - 1)
    }

    /// Appends a raw row, normalizing it first when the stream is normalized.
    /// Returns the query index and whether the row was degenerate.
    pub fn ingest(&mut self, raw: ScoreVector) -> Result<(usize, bool), ScoreError> {
        if !self.normalized {
            return Ok((self.append(raw)?, false));
        }
        if let Some(expected) = self.width {
            if expected != raw.len() {
                return Err(ScoreError::ShapeMismatch {
                    expected,
                    got: raw.len(),
                });
            }
        }
        let n = normalize_scores(&raw)?;
        Ok((self.append(n.scores)?, n.degenerate))
    }

    pub fn row(&self, q: usize) -> Option<&ScoreVector> {
        self.rows.get(q)
    }

    pub fn get(&self, q: usize, i: usize) -> Option<f64> {
        self.rows.get(q).and_then(|r| r.0.get(i).copied())
    }
}
