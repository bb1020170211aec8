//! Sources of per-query score vectors.
//!
//! Every provider can score any query it knows about, in any order, and
//! returns the same vector each time. The adaptive controller relies on this
//! to rescore a window of recent frames with techniques that were switched
//! off while those frames were live.

pub mod hog;
pub mod pgm;
pub mod synthetic;
pub mod vprd;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::{normalize_scores, ScoreError, ScoreVector};

pub use hog::{hog_descriptor, HogConfig, HogError};
pub use pgm::{GrayImage, PgmError};
pub use synthetic::{NoiseModel, Segment, SyntheticProfile, SyntheticProvider};
pub use vprd::{
    load_descriptor_file, load_score_matrix, DescriptorMatrix, FormatError, MatrixRole,
};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("query {query} is outside the provider's {available} queries")]
    QueryOutOfRange { query: usize, available: usize },
    #[error("descriptor length mismatch: query has {query}, references have {reference}")]
    DimsMismatch { query: usize, reference: usize },
    #[error("zero-norm descriptor ({0})")]
    ZeroVector(&'static str),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: PgmError,
    },
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("invalid synthetic profile: {0}")]
    Profile(String),
    #[error("{0}")]
    Io(String),
}

/// Stable technique name, also used as a column prefix in logs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TechniqueId(String);

impl TechniqueId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TechniqueId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    NativeHog,
    PrecomputedDescriptors,
    PrecomputedScores,
    Synthetic,
}

pub trait TechniqueProvider: Send + Sync {
    fn id(&self) -> &TechniqueId;

    fn kind(&self) -> ProviderKind;

    /// Number of reference places N.
    fn reference_count(&self) -> usize;

    /// Number of queries the provider can score.
    fn query_count(&self) -> usize;

    /// Raw (unnormalized) scores of query `q` against every reference.
    fn score(&self, q: usize) -> Result<ScoreVector, ProviderError>;

    /// Rough per-query cost, informational only.
    fn cost_estimate_ms(&self) -> Option<f64> {
        None
    }
}

fn check_query(q: usize, available: usize) -> Result<(), ProviderError> {
    if q >= available {
        return Err(ProviderError::QueryOutOfRange {
            query: q,
            available,
        });
    }
    Ok(())
}

/// Cosine similarity of `query` against every row of `refs`.
pub fn cosine_score_vector(
    query: &[f32],
    refs: &DescriptorMatrix,
) -> Result<ScoreVector, ProviderError> {
    if query.len() != refs.cols() {
        return Err(ProviderError::DimsMismatch {
            query: query.len(),
            reference: refs.cols(),
        });
    }
    let qn = norm(query);
    if qn == 0.0 {
        return Err(ProviderError::ZeroVector("query"));
    }
    let mut out = Vec::with_capacity(refs.rows());
    for r in 0..refs.rows() {
        let row = refs.row(r);
        let rn = norm(row);
        if rn == 0.0 {
            return Err(ProviderError::ZeroVector("reference"));
        }
        let dot: f64 = query
            .iter()
            .zip(row)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        out.push((dot / (qn * rn)).clamp(-1.0, 1.0));
    }
    Ok(ScoreVector::new(out)?)
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt()
}

/// Rows of a precomputed query × reference score matrix.
#[derive(Debug, Clone)]
pub struct PrecomputedScores {
    id: TechniqueId,
    matrix: DescriptorMatrix,
    normalize: bool,
}

impl PrecomputedScores {
    pub fn new(id: impl Into<TechniqueId>, matrix: DescriptorMatrix) -> Self {
        Self {
            id: id.into(),
            matrix,
            normalize: false,
        }
    }

    pub fn from_file(id: impl Into<TechniqueId>, path: &Path) -> Result<Self, ProviderError> {
        let matrix = load_score_matrix(path).map_err(|source| ProviderError::Format {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(id, matrix))
    }

    /// Z-score rows on the way out instead of returning them verbatim.
    pub fn with_normalization(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }
}

impl TechniqueProvider for PrecomputedScores {
    fn id(&self) -> &TechniqueId {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::PrecomputedScores
    }

    fn reference_count(&self) -> usize {
        self.matrix.cols()
    }

    fn query_count(&self) -> usize {
        self.matrix.rows()
    }

    fn score(&self, q: usize) -> Result<ScoreVector, ProviderError> {
        check_query(q, self.matrix.rows())?;
        let row = ScoreVector::from_f32(self.matrix.row(q))?;
        if self.normalize && row.len() >= 2 {
            return Ok(normalize_scores(&row)?.scores);
        }
        Ok(row)
    }
}

/// Cosine scoring of precomputed query descriptors against reference descriptors.
#[derive(Debug, Clone)]
pub struct PrecomputedDescriptors {
    id: TechniqueId,
    references: DescriptorMatrix,
    queries: DescriptorMatrix,
}

impl PrecomputedDescriptors {
    pub fn new(
        id: impl Into<TechniqueId>,
        references: DescriptorMatrix,
        queries: DescriptorMatrix,
    ) -> Result<Self, ProviderError> {
        if references.cols() != queries.cols() {
            return Err(ProviderError::DimsMismatch {
                query: queries.cols(),
                reference: references.cols(),
            });
        }
        Ok(Self {
            id: id.into(),
            references,
            queries,
        })
    }

    pub fn from_files(
        id: impl Into<TechniqueId>,
        references: &Path,
        queries: &Path,
    ) -> Result<Self, ProviderError> {
        let load = |p: &Path| {
            load_descriptor_file(p).map_err(|source| ProviderError::Format {
                path: p.to_path_buf(),
                source,
            })
        };
        Self::new(id, load(references)?, load(queries)?)
    }
}

impl TechniqueProvider for PrecomputedDescriptors {
    fn id(&self) -> &TechniqueId {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::PrecomputedDescriptors
    }

    fn reference_count(&self) -> usize {
        self.references.rows()
    }

    fn query_count(&self) -> usize {
        self.queries.rows()
    }

    fn score(&self, q: usize) -> Result<ScoreVector, ProviderError> {
        check_query(q, self.queries.rows())?;
        cosine_score_vector(self.queries.row(q), &self.references)
    }
}

/// Native HOG technique over PGM image folders. Reference descriptors are
/// computed up front; query images are described on demand.
#[derive(Debug, Clone)]
pub struct HogProvider {
    id: TechniqueId,
    cfg: HogConfig,
    references: DescriptorMatrix,
    queries: Vec<PathBuf>,
}

/// `.pgm` files of a folder in lexicographic filename order.
pub fn list_pgm_files(dir: &Path) -> Result<Vec<PathBuf>, ProviderError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| ProviderError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

fn describe(path: &Path, cfg: &HogConfig) -> Result<Vec<f32>, ProviderError> {
    let img = pgm::load_pgm(path).map_err(|source| ProviderError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hog_descriptor(&img, cfg)?)
}

impl HogProvider {
    pub fn new(
        id: impl Into<TechniqueId>,
        cfg: HogConfig,
        reference_images: &[PathBuf],
        query_images: Vec<PathBuf>,
    ) -> Result<Self, ProviderError> {
        let dims = cfg.descriptor_len()?;
        if reference_images.is_empty() {
            return Err(ProviderError::Io("no reference images".into()));
        }
        let mut data = Vec::with_capacity(reference_images.len() * dims);
        for p in reference_images {
            data.extend(describe(p, &cfg)?);
        }
        let references =
            DescriptorMatrix::new(reference_images.len(), dims, data).map_err(|source| {
                ProviderError::Format {
                    path: reference_images[0].clone(),
                    source,
                }
            })?;
        Ok(Self {
            id: id.into(),
            cfg,
            references,
            queries: query_images,
        })
    }

    pub fn from_dirs(
        id: impl Into<TechniqueId>,
        cfg: HogConfig,
        references: &Path,
        queries: &Path,
    ) -> Result<Self, ProviderError> {
        Self::new(
            id,
            cfg,
            &list_pgm_files(references)?,
            list_pgm_files(queries)?,
        )
    }

    pub fn reference_descriptors(&self) -> &DescriptorMatrix {
        &self.references
    }
}

impl TechniqueProvider for HogProvider {
    fn id(&self) -> &TechniqueId {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::NativeHog
    }

    fn reference_count(&self) -> usize {
        self.references.rows()
    }

    fn query_count(&self) -> usize {
        self.queries.len()
    }

    fn score(&self, q: usize) -> Result<ScoreVector, ProviderError> {
        check_query(q, self.queries.len())?;
        let d = describe(&self.queries[q], &self.cfg)?;
        cosine_score_vector(&d, &self.references)
    }
}
