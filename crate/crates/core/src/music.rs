//! Multi-technique arbitration: every technique corrects itself with SIC and
//! the frame goes to the technique whose corrected candidate is the most
//! sequentially consistent.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::providers::{TechniqueId, TechniqueProvider};
use crate::sic::{CorrectionRecord, SicConfig, SicError, SicTrack};

#[derive(Debug, Error)]
pub enum MusicError {
    #[error("no technique records to arbitrate")]
    NoTechniques,
    #[error("records mix query indices {0} and {1}")]
    MixedQueryIndices(usize, usize),
    #[error("technique {0} was scored on an unnormalized stream")]
    UnnormalizedStream(TechniqueId),
    #[error("selection window is empty")]
    EmptyWindow,
    #[error("providers disagree on dataset shape: {0}")]
    ShapeMismatch(String),
    #[error("{technique}: {source}")]
    Sic {
        technique: TechniqueId,
        #[source]
        source: SicError,
    },
}

/// One technique's SIC outcome for a frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TechniqueRecord {
    pub technique: TechniqueId,
    pub record: CorrectionRecord,
    /// Whether the record came from a z-scored stream.
    #[serde(skip)]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameArbitration {
    pub query_index: usize,
    pub winner: TechniqueId,
    pub prediction: usize,
    pub winner_consistency: f64,
    /// In registration order.
    pub per_technique: Vec<TechniqueRecord>,
}

impl FrameArbitration {
    pub fn record_for(&self, technique: &TechniqueId) -> Option<&CorrectionRecord> {
        self.per_technique
            .iter()
            .find(|r| &r.technique == technique)
            .map(|r| &r.record)
    }
}

/// Picks the technique with the highest winning consistency. Records are
/// expected in registration order; the earliest wins a tie.
pub fn arbitrate_frame(records: Vec<TechniqueRecord>) -> Result<FrameArbitration, MusicError> {
    let first = records.first().ok_or(MusicError::NoTechniques)?;
    let q = first.record.query_index;
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.record.query_index != q {
            return Err(MusicError::MixedQueryIndices(q, r.record.query_index));
        }
        if !r.normalized {
            return Err(MusicError::UnnormalizedStream(r.technique.clone()));
        }
        if r.record.winning_consistency > records[best].record.winning_consistency {
            best = i;
        }
    }
    let winner = &records[best];
    Ok(FrameArbitration {
        query_index: q,
        winner: winner.technique.clone(),
        prediction: winner.record.corrected_match,
        winner_consistency: winner.record.winning_consistency,
        per_technique: records,
    })
}

/// The last `capacity` arbitration winners, oldest first.
#[derive(Debug, Clone)]
pub struct SelectionHistory {
    capacity: usize,
    window: VecDeque<TechniqueId>,
}

impl SelectionHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(
            capacity >= 1,
            "selection window must hold at least one frame"
        );
        Self {
            capacity,
            window: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, winner: TechniqueId) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(winner);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &TechniqueId> {
        self.window.iter()
    }
}

/// Share of wins per technique, in ensemble order (zero for techniques that
/// never won).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageVector(Vec<(TechniqueId, f64)>);

impl CoverageVector {
    pub fn from_pairs(pairs: Vec<(TechniqueId, f64)>) -> Self {
        Self(pairs)
    }

    pub fn get(&self, technique: &TechniqueId) -> f64 {
        self.0
            .iter()
            .find(|(t, _)| t == technique)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn entries(&self) -> &[(TechniqueId, f64)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|(_, p)| p).sum()
    }
}

/// Coverage over `ensemble`. Winners not listed in `ensemble` are appended
/// after it in order of first appearance.
pub fn coverage(
    history: &SelectionHistory,
    ensemble: &[TechniqueId],
) -> Result<CoverageVector, MusicError> {
    if history.is_empty() {
        return Err(MusicError::EmptyWindow);
    }
    let mut counts: Vec<(TechniqueId, usize)> = ensemble.iter().map(|t| (t.clone(), 0)).collect();
    for w in history.iter() {
        match counts.iter_mut().find(|(t, _)| t == w) {
            Some((_, n)) => *n += 1,
            None => counts.push((w.clone(), 1)),
        }
    }
    let total = history.len() as f64;
    Ok(CoverageVector(
        counts
            .into_iter()
            .map(|(t, n)| (t, n as f64 / total))
            .collect(),
    ))
}

pub(crate) fn check_shapes(
    providers: &[Arc<dyn TechniqueProvider>],
) -> Result<(usize, usize), MusicError> {
    let first = providers.first().ok_or(MusicError::NoTechniques)?;
    let (n, q) = (first.reference_count(), first.query_count());
    for p in providers {
        if p.reference_count() != n || p.query_count() != q {
            return Err(MusicError::ShapeMismatch(format!(
                "{} is {}x{}, {} is {}x{}",
                first.id(),
                q,
                n,
                p.id(),
                p.query_count(),
                p.reference_count()
            )));
        }
    }
    let mut ids: Vec<&TechniqueId> = providers.iter().map(|p| p.id()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(MusicError::ShapeMismatch(format!(
            "duplicate technique id {}",
            w[0]
        )));
    }
    Ok((n, q))
}

/// Scores `frame` with each provider and runs its SIC track, fanning out
/// across techniques. Results come back in the order given.
pub(crate) fn score_frame(
    jobs: Vec<(&Arc<dyn TechniqueProvider>, &mut SicTrack)>,
    frame: usize,
) -> Result<Vec<TechniqueRecord>, MusicError> {
    jobs.into_par_iter()
        .map(|(provider, track)| {
            let technique = provider.id().clone();
            let record = provider
                .score(frame)
                .map_err(SicError::from)
                .and_then(|raw| track.push(frame, raw))
                .map_err(|source| MusicError::Sic {
                    technique: technique.clone(),
                    source,
                })?;
            Ok(TechniqueRecord {
                technique,
                record,
                normalized: track.is_normalized(),
            })
        })
        .collect()
}

/// Static ensemble: every technique runs on every frame.
pub struct MusicEngine {
    providers: Vec<Arc<dyn TechniqueProvider>>,
    tracks: Vec<SicTrack>,
    history: SelectionHistory,
    next_frame: usize,
}

impl MusicEngine {
    pub fn new(
        providers: Vec<Arc<dyn TechniqueProvider>>,
        sic: SicConfig,
        window: usize,
    ) -> Result<Self, MusicError> {
        check_shapes(&providers)?;
        let tracks = providers.iter().map(|_| SicTrack::new(0, sic)).collect();
        Ok(Self {
            providers,
            tracks,
            history: SelectionHistory::new(window),
            next_frame: 0,
        })
    }

    pub fn ensemble(&self) -> Vec<TechniqueId> {
        self.providers.iter().map(|p| p.id().clone()).collect()
    }

    pub fn history(&self) -> &SelectionHistory {
        &self.history
    }

    pub fn step(&mut self) -> Result<FrameArbitration, MusicError> {
        let frame = self.next_frame;
        let jobs = self.providers.iter().zip(self.tracks.iter_mut()).collect();
        let arb = arbitrate_frame(score_frame(jobs, frame)?)?;
        self.history.push(arb.winner.clone());
        self.next_frame += 1;
        Ok(arb)
    }
}

pub fn run_music_over_dataset(
    providers: Vec<Arc<dyn TechniqueProvider>>,
    queries: usize,
    sic: &SicConfig,
    window: usize,
) -> Result<Vec<FrameArbitration>, MusicError> {
    let mut engine = MusicEngine::new(providers, *sic, window)?;
    (0..queries).map(|_| engine.step()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, q: usize, sc: f64, m: usize) -> TechniqueRecord {
        TechniqueRecord {
            technique: id.into(),
            record: CorrectionRecord {
                query_index: q,
                original_match: m,
                corrected_match: m,
                correction_magnitude: 0.0,
                winning_consistency: sc,
                corrected: false,
            },
            normalized: true,
        }
    }

    fn history(ids: &[&str]) -> SelectionHistory {
        let mut h = SelectionHistory::new(ids.len().max(1));
        for id in ids {
            h.push((*id).into());
        }
        h
    }

    fn ids(names: &[&str]) -> Vec<TechniqueId> {
        names.iter().map(|&n| n.into()).collect()
    }

    #[test]
    fn single_technique_wins() {
        let a = arbitrate_frame(vec![rec("A", 3, -0.2, 7)]).unwrap();
        assert_eq!((a.winner.as_str(), a.prediction), ("A", 7));
    }

    #[test]
    fn highest_consistency_wins_and_ties_go_first() {
        let a = arbitrate_frame(vec![rec("A", 0, 0.9, 1), rec("B", 0, 0.4, 2)]).unwrap();
        assert_eq!(a.winner.as_str(), "A");
        let a = arbitrate_frame(vec![rec("A", 0, 0.4, 1), rec("B", 0, 0.9, 2)]).unwrap();
        assert_eq!((a.winner.as_str(), a.prediction), ("B", 2));
        let a = arbitrate_frame(vec![rec("A", 0, 0.5, 1), rec("B", 0, 0.5, 2)]).unwrap();
        assert_eq!(a.winner.as_str(), "A");
    }

    #[test]
    fn arbitration_errors() {
        assert!(matches!(
            arbitrate_frame(vec![]),
            Err(MusicError::NoTechniques)
        ));
        assert!(matches!(
            arbitrate_frame(vec![rec("A", 0, 0.5, 1), rec("B", 1, 0.5, 2)]),
            Err(MusicError::MixedQueryIndices(0, 1))
        ));
        let mut raw = rec("B", 0, 0.5, 2);
        raw.normalized = false;
        assert!(matches!(
            arbitrate_frame(vec![rec("A", 0, 0.5, 1), raw]),
            Err(MusicError::UnnormalizedStream(t)) if t.as_str() == "B"
        ));
    }

    #[test]
    fn coverage_counts() {
        let ens = ids(&["A", "B", "C", "D"]);
        let c = coverage(&history(&["A", "A", "B", "A"]), &ens).unwrap();
        assert_eq!(c.get(&"A".into()), 0.75);
        assert_eq!(c.get(&"B".into()), 0.25);
        assert_eq!(c.get(&"C".into()), 0.0);

        let c = coverage(&history(&["A"; 10]), &ens).unwrap();
        assert_eq!(c.get(&"A".into()), 1.0);

        let c = coverage(
            &history(&["A", "B", "C", "D", "A", "B", "A", "A", "B", "C"]),
            &ens,
        )
        .unwrap();
        let got: Vec<f64> = c.entries().iter().map(|(_, p)| *p).collect();
        assert_eq!(got, vec![0.4, 0.3, 0.2, 0.1]);
        assert!((c.total() - 1.0).abs() < 1e-12);

        assert!(matches!(
            coverage(&SelectionHistory::new(3), &ens),
            Err(MusicError::EmptyWindow)
        ));
    }

    #[test]
    fn history_evicts_oldest() {
        let mut h = SelectionHistory::new(2);
        for id in ["A", "B", "C"] {
            h.push(id.into());
        }
        let got: Vec<&str> = h.iter().map(TechniqueId::as_str).collect();
        assert_eq!(got, vec!["B", "C"]);
    }
}
