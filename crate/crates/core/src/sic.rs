//! Single-technique self-identification and correction.
//!
//! For the current query the top-K reference candidates are re-ranked by
//! their sequential consistency: the average normalized score along the
//! back-shifted diagonal `S[q+δ][c+δ]`, δ = -F'..=0, with the lookback
//! `F' = min(F, q, c)` clamped so neither index leaves the matrix. The
//! candidate with the highest average wins; if it is not the plain argmax,
//! the frame counts as corrected and the difference in averages is the
//! correction magnitude.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ProviderError, TechniqueProvider};
use crate::score::{ScoreError, ScoreStream, ScoreVector};

#[derive(Debug, Error)]
pub enum SicError {
    #[error("query {q} is outside the stream's {rows} rows")]
    QueryOutOfRange { q: usize, rows: usize },
    #[error("candidate {c} is outside the {n} reference places")]
    CandidateOutOfRange { c: usize, n: usize },
    #[error("expected query {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SicConfig {
    /// Number of candidates K taken from the top of the current scores.
    #[serde(default = "SicConfig::default_top_k")]
    pub top_k: usize,
    /// Maximum lookback F in frames.
    #[serde(default = "SicConfig::default_max_lookback")]
    pub max_lookback: usize,
    /// Whether the candidate's own current score (δ = 0) enters the average.
    #[serde(default = "SicConfig::default_include_current")]
    pub include_current: bool,
}

impl SicConfig {
    pub const DEFAULT_TOP_K: usize = 50;
    pub const DEFAULT_MAX_LOOKBACK: usize = 1000;

    fn default_top_k() -> usize {
        Self::DEFAULT_TOP_K
    }

    fn default_max_lookback() -> usize {
        Self::DEFAULT_MAX_LOOKBACK
    }

    fn default_include_current() -> bool {
        true
    }

    pub fn new(top_k: usize, max_lookback: usize) -> Self {
        Self {
            top_k,
            max_lookback,
            include_current: true,
        }
    }
}

impl Default for SicConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_TOP_K, Self::DEFAULT_MAX_LOOKBACK)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub query_index: usize,
    pub original_match: usize,
    pub corrected_match: usize,
    /// Consistency gain of the corrected match over the original; 0 when uncorrected.
    pub correction_magnitude: f64,
    /// Average consistency of `corrected_match`.
    pub winning_consistency: f64,
    pub corrected: bool,
}

/// Lookback actually usable for candidate `c` at query `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyWindow {
    pub effective_lookback: usize,
    /// Oldest query row touched, `q - effective_lookback`.
    pub lower_bound: usize,
}

impl ConsistencyWindow {
    pub fn new(q: usize, c: usize, max_lookback: usize) -> Self {
        let effective_lookback = max_lookback.min(q).min(c);
        Self {
            effective_lookback,
            lower_bound: q - effective_lookback,
        }
    }
}

fn check_indices(stream: &ScoreStream, q: usize, c: usize) -> Result<(), SicError> {
    if q >= stream.len() {
        return Err(SicError::QueryOutOfRange {
            q,
            rows: stream.len(),
        });
    }
    let n = stream.width().unwrap_or(0);
    if c >= n {
        return Err(SicError::CandidateOutOfRange { c, n });
    }
    Ok(())
}

/// Average score along the back-shifted diagonal ending at `(q, c)`.
pub fn consistency_score(
    stream: &ScoreStream,
    q: usize,
    c: usize,
    cfg: &SicConfig,
) -> Result<f64, SicError> {
    check_indices(stream, q, c)?;
    Ok(diagonal_average(stream, q, c, cfg))
}

fn diagonal_average(stream: &ScoreStream, q: usize, c: usize, cfg: &SicConfig) -> f64 {
    let w = ConsistencyWindow::new(q, c, cfg.max_lookback);
    let at = |k: usize| stream.row(q - k).expect("row in window")[c - k];
    let sum_past: f64 = (1..=w.effective_lookback).map(at).sum();
    if cfg.include_current {
        (sum_past + at(0)) / (w.effective_lookback + 1) as f64
    } else if w.effective_lookback == 0 {
        // Nothing behind the candidate: fall back to its own score.
        at(0)
    } else {
        sum_past / w.effective_lookback as f64
    }
}

/// Re-ranks the top-K candidates of query `q` by sequential consistency.
pub fn correct_query(
    stream: &ScoreStream,
    q: usize,
    cfg: &SicConfig,
) -> Result<CorrectionRecord, SicError> {
    let row = stream.row(q).ok_or(SicError::QueryOutOfRange {
        q,
        rows: stream.len(),
    })?;
    // Ranked by score then index, so the first strict maximum also wins the
    // consistency tie-break (higher original score, then lower index).
    let candidates = row.top_k(cfg.top_k.max(1));
    let original = candidates[0];
    let original_sc = diagonal_average(stream, q, original, cfg);
    let (mut best, mut best_sc) = (original, original_sc);
    for &c in &candidates[1..] {
        let sc = diagonal_average(stream, q, c, cfg);
        if sc > best_sc {
            best = c;
            best_sc = sc;
        }
    }
    let corrected = best != original;
    Ok(CorrectionRecord {
        query_index: q,
        original_match: original,
        corrected_match: best,
        correction_magnitude: if corrected {
            best_sc - original_sc
        } else {
            0.0
        },
        winning_consistency: best_sc,
        corrected,
    })
}

/// One technique's normalized score history starting at frame `start`.
///
/// Rows are local to the track: engine frame `start + i` is row `i`, so the
/// lookback of a technique that joined late never reaches frames it did not
/// score.
#[derive(Debug, Clone)]
pub struct SicTrack {
    start: usize,
    stream: ScoreStream,
    cfg: SicConfig,
}

impl SicTrack {
    pub fn new(start: usize, cfg: SicConfig) -> Self {
        Self::with_stream(start, cfg, ScoreStream::normalized())
    }

    /// A track over a caller-supplied stream, e.g. a raw one.
    pub fn with_stream(start: usize, cfg: SicConfig, stream: ScoreStream) -> Self {
        Self { start, stream, cfg }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// The engine frame this track expects next.
    pub fn next_frame(&self) -> usize {
        self.start + self.stream.len()
    }

    pub fn stream(&self) -> &ScoreStream {
        &self.stream
    }

    pub fn is_normalized(&self) -> bool {
        self.stream.is_normalized()
    }

    /// Appends raw scores for `frame` and corrects it.
    pub fn push(&mut self, frame: usize, raw: ScoreVector) -> Result<CorrectionRecord, SicError> {
        if frame != self.next_frame() {
            return Err(SicError::OutOfOrder {
                expected: self.next_frame(),
                got: frame,
            });
        }
        let (local, _) = self.stream.ingest(raw)?;
        let mut rec = correct_query(&self.stream, local, &self.cfg)?;
        rec.query_index = frame;
        Ok(rec)
    }
}

/// Runs SIC over the first `queries` frames of `provider`, strictly in order.
pub fn run_sic_over_dataset(
    provider: &dyn TechniqueProvider,
    queries: usize,
    cfg: &SicConfig,
) -> Result<Vec<CorrectionRecord>, SicError> {
    let mut track = SicTrack::new(0, *cfg);
    (0..queries)
        .map(|q| track.push(q, provider.score(q)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ScoreStream {
        let mut s = ScoreStream::normalized();
        for row in [
            [0.9, 0.1, 0.2, 0.0],
            [0.2, 0.8, 0.1, 0.3],
            [0.1, 0.5, 0.45, 0.2],
        ] {
            s.append(ScoreVector::new(row.to_vec()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn first_query_has_no_history() {
        let s = toy();
        for c in 0..4 {
            let sc = consistency_score(&s, 0, c, &SicConfig::new(3, 5)).unwrap();
            assert_eq!(sc, s.get(0, c).unwrap());
        }
    }

    #[test]
    fn diagonal_sum_and_candidate_clamp() {
        let s = toy();
        let cfg = SicConfig::new(2, 2);
        let sc = consistency_score(&s, 2, 2, &cfg).unwrap();
        assert!((sc - (0.9 + 0.8 + 0.45) / 3.0).abs() < 1e-12);
        let sc = consistency_score(&s, 2, 1, &cfg).unwrap();
        assert!((sc - 0.35).abs() < 1e-12);
        assert_eq!(ConsistencyWindow::new(2, 1, 2).effective_lookback, 1);
    }

    #[test]
    fn toy_correction() {
        let rec = correct_query(&toy(), 2, &SicConfig::new(2, 2)).unwrap();
        assert_eq!(rec.original_match, 1);
        assert_eq!(rec.corrected_match, 2);
        assert!(rec.corrected);
        assert!((rec.winning_consistency - 0.716_666_666_666_666_7).abs() < 1e-12);
        assert!((rec.correction_magnitude - 0.366_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_or_no_lookback_never_corrects() {
        let s = toy();
        for q in 0..3 {
            for cfg in [SicConfig::new(1, 2), SicConfig::new(4, 0)] {
                let rec = correct_query(&s, q, &cfg).unwrap();
                assert!(!rec.corrected);
                assert_eq!(rec.correction_magnitude, 0.0);
                assert_eq!(rec.corrected_match, s.row(q).unwrap().argmax());
            }
        }
    }

    #[test]
    fn index_errors() {
        let s = toy();
        let cfg = SicConfig::default();
        assert!(matches!(
            consistency_score(&s, 3, 0, &cfg),
            Err(SicError::QueryOutOfRange { q: 3, rows: 3 })
        ));
        assert!(matches!(
            consistency_score(&s, 0, 4, &cfg),
            Err(SicError::CandidateOutOfRange { c: 4, n: 4 })
        ));
        assert!(correct_query(&s, 7, &cfg).is_err());
    }

    #[test]
    fn excluding_current_score() {
        let s = toy();
        let cfg = SicConfig {
            include_current: false,
            ..SicConfig::new(2, 2)
        };
        let sc = consistency_score(&s, 2, 2, &cfg).unwrap();
        assert!((sc - (0.9 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(consistency_score(&s, 0, 1, &cfg).unwrap(), 0.1);
    }

    #[test]
    fn track_uses_global_frame_numbers() {
        let mut t = SicTrack::new(5, SicConfig::new(2, 3));
        let rec = t
            .push(5, ScoreVector::new(vec![0.1, 0.9, 0.3]).unwrap())
            .unwrap();
        assert_eq!(rec.query_index, 5);
        assert_eq!(rec.original_match, 1);
        assert!(matches!(
            t.push(7, ScoreVector::new(vec![0.1, 0.9, 0.3]).unwrap()),
            Err(SicError::OutOfOrder {
                expected: 6,
                got: 7
            })
        ));
    }
}
