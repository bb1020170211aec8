//! Adaptive technique selection.
//!
//! The controller starts with the full ensemble for one window of `M`
//! frames, then keeps only the shortest coverage-ordered prefix of
//! techniques whose coverage reaches `E`. At the end of every later window
//! the concatenated correction magnitudes of the active subset are compared
//! with the previous window's by a paired t-test. A significant change
//! rescores the same window with every technique, re-runs arbitration over
//! it and selects a fresh subset.
//!
//! Techniques that were inactive restart their SIC history at the first
//! frame they score, so a rescored technique only looks back over the
//! window it was rescored on.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::music::{
    arbitrate_frame, check_shapes, coverage, score_frame, CoverageVector, FrameArbitration,
    MusicError, SelectionHistory, TechniqueRecord,
};
use crate::providers::{TechniqueId, TechniqueProvider};
use crate::sic::{CorrectionRecord, SicConfig, SicError, SicTrack};
use crate::stats::{paired_t_test, StatsError};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid adaptive configuration: {field}: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },
    #[error("coverage vector is empty")]
    EmptyCoverage,
    #[error("technique {technique} has {got} records for a {expected}-frame window")]
    WindowIncomplete {
        technique: TechniqueId,
        expected: usize,
        got: usize,
    },
    #[error("cannot rescore frames {start}..={end}: only the last {buffer} frames are buffered")]
    BufferUnderrun {
        start: usize,
        end: usize,
        buffer: usize,
    },
    #[error("all {0} frames have been processed")]
    Exhausted(usize),
    #[error(transparent)]
    Music(#[from] MusicError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Target cumulative coverage E of the active subset.
    #[serde(default = "AdaptiveConfig::default_threshold")]
    pub coverage_threshold: f64,
    /// Window length M in frames.
    #[serde(default = "AdaptiveConfig::default_window")]
    pub window: usize,
    /// Significance level of the re-selection test.
    #[serde(default = "AdaptiveConfig::default_alpha")]
    pub alpha: f64,
    /// Frames a provider must be able to rescore; defaults to `2 * window`.
    #[serde(default)]
    pub buffer: Option<usize>,
    #[serde(skip)]
    pub sic: SicConfig,
}

impl AdaptiveConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.7;
    pub const DEFAULT_WINDOW: usize = 10;
    pub const DEFAULT_ALPHA: f64 = 0.05;

    fn default_threshold() -> f64 {
        Self::DEFAULT_THRESHOLD
    }

    fn default_window() -> usize {
        Self::DEFAULT_WINDOW
    }

    fn default_alpha() -> f64 {
        Self::DEFAULT_ALPHA
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.unwrap_or(2 * self.window)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |field, message: String| Err(ControllerError::InvalidConfig { field, message });
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0) {
            return bad(
                "coverage_threshold",
                format!("must be in (0, 1], got {}", self.coverage_threshold),
            );
        }
        if self.window < 2 {
            return bad("window", format!("must be >= 2, got {}", self.window));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must be in (0, 1), got {}", self.alpha));
        }
        if self.buffer_len() < self.window {
            return bad(
                "buffer",
                format!(
                    "must be >= window ({}), got {}",
                    self.window,
                    self.buffer_len()
                ),
            );
        }
        if self.sic.top_k == 0 {
            return bad("top_k", "must be >= 1".into());
        }
        Ok(())
    }
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            coverage_threshold: Self::DEFAULT_THRESHOLD,
            window: Self::DEFAULT_WINDOW,
            alpha: Self::DEFAULT_ALPHA,
            buffer: None,
            sic: SicConfig::default(),
        }
    }
}

/// Cumulative coverage is compared with this much slack so that sums such
/// as 0.4 + 0.3 still reach 0.7.
const COVERAGE_SLACK: f64 = 1e-12;

/// Techniques by descending coverage (ties in `order`), cut at the shortest
/// prefix whose cumulative coverage reaches `threshold`. Never empty.
pub fn select_subset(
    cov: &CoverageVector,
    threshold: f64,
    order: &[TechniqueId],
) -> Result<Vec<TechniqueId>, ControllerError> {
    if cov.is_empty() {
        return Err(ControllerError::EmptyCoverage);
    }
    let rank = |t: &TechniqueId| order.iter().position(|o| o == t).unwrap_or(order.len());
    let mut ranked: Vec<(usize, &(TechniqueId, f64))> = cov.entries().iter().enumerate().collect();
    ranked.sort_by(|(ia, (ta, pa)), (ib, (tb, pb))| {
        pb.total_cmp(pa)
            .then(rank(ta).cmp(&rank(tb)))
            .then(ia.cmp(ib))
    });
    let mut subset = Vec::new();
    let mut cumulative = 0.0;
    for (_, (t, p)) in ranked {
        subset.push(t.clone());
        cumulative += p;
        if cumulative >= threshold - COVERAGE_SLACK {
            break;
        }
    }
    Ok(subset)
}

/// Concatenates each subset technique's `window` correction magnitudes, in
/// subset order then frame order.
pub fn window_correction_vector(
    records: &[(TechniqueId, Vec<CorrectionRecord>)],
    subset: &[TechniqueId],
    window: usize,
) -> Result<Vec<f64>, ControllerError> {
    let mut out = Vec::with_capacity(subset.len() * window);
    for t in subset {
        let recs = records
            .iter()
            .find(|(id, _)| id == t)
            .map_or(&[][..], |(_, r)| r.as_slice());
        if recs.len() != window {
            return Err(ControllerError::WindowIncomplete {
                technique: t.clone(),
                expected: window,
                got: recs.len(),
            });
        }
        out.extend(recs.iter().map(|r| r.correction_magnitude));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bootstrap,
    Monitoring,
    Reselecting,
}

/// Snapshot of the controller's selection state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleState {
    pub active_subset: Vec<TechniqueId>,
    pub baseline_correction: Vec<f64>,
    pub phase: Phase,
    pub frames_since_window_start: usize,
    pub last_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReselectionEvent {
    pub trigger_frame: usize,
    pub p_value: f64,
    pub old_subset: Vec<TechniqueId>,
    pub new_subset: Vec<TechniqueId>,
    pub coverage_at_trigger: CoverageVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControllerEvent {
    /// First subset chosen at the end of the bootstrap window.
    InitialSelection {
        frame: usize,
        subset: Vec<TechniqueId>,
        coverage: CoverageVector,
    },
    /// Window-boundary test that kept the subset; the baseline was refreshed.
    WindowAccepted {
        frame: usize,
        p_value: f64,
    },
    Reselection(ReselectionEvent),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub query_index: usize,
    pub prediction: usize,
    pub chosen_technique: TechniqueId,
    pub consistency: f64,
    /// Techniques that ran live on this frame, in ensemble order.
    pub scored: Vec<TechniqueId>,
    pub arbitration: FrameArbitration,
    pub events: Vec<ControllerEvent>,
}

pub struct AdaptiveController {
    cfg: AdaptiveConfig,
    providers: Vec<Arc<dyn TechniqueProvider>>,
    ids: Vec<TechniqueId>,
    tracks: Vec<Option<SicTrack>>,
    /// Active technique indices in selection order.
    active: Vec<usize>,
    baseline: Vec<f64>,
    phase: Phase,
    window_start: usize,
    window_records: Vec<Vec<CorrectionRecord>>,
    history: SelectionHistory,
    runs: Vec<usize>,
    queries: usize,
    last_p_value: Option<f64>,
    reselections: usize,
}

impl AdaptiveController {
    pub fn new(
        providers: Vec<Arc<dyn TechniqueProvider>>,
        cfg: AdaptiveConfig,
    ) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let (_, queries) = check_shapes(&providers)?;
        let ids: Vec<TechniqueId> = providers.iter().map(|p| p.id().clone()).collect();
        let k = providers.len();
        Ok(Self {
            tracks: (0..k).map(|_| Some(SicTrack::new(0, cfg.sic))).collect(),
            active: (0..k).collect(),
            window_records: vec![Vec::with_capacity(cfg.window); k],
            history: SelectionHistory::new(cfg.window),
            runs: Vec::with_capacity(queries),
            baseline: Vec::new(),
            phase: Phase::Bootstrap,
            window_start: 0,
            last_p_value: None,
            reselections: 0,
            cfg,
            providers,
            ids,
            queries,
        })
    }

    pub fn ensemble(&self) -> &[TechniqueId] {
        &self.ids
    }

    pub fn next_frame(&self) -> usize {
        self.runs.len()
    }

    pub fn is_done(&self) -> bool {
        self.next_frame() >= self.queries
    }

    /// Technique runs charged to each processed frame, rescoring included.
    pub fn technique_runs(&self) -> &[usize] {
        &self.runs
    }

    pub fn reselection_count(&self) -> usize {
        self.reselections
    }

    pub fn state(&self) -> EnsembleState {
        EnsembleState {
            active_subset: self.subset_ids(&self.active),
            baseline_correction: self.baseline.clone(),
            phase: self.phase,
            frames_since_window_start: self.next_frame() - self.window_start,
            last_p_value: self.last_p_value,
        }
    }

    fn subset_ids(&self, idx: &[usize]) -> Vec<TechniqueId> {
        idx.iter().map(|&i| self.ids[i].clone()).collect()
    }

    fn indices_of(&self, subset: &[TechniqueId]) -> Vec<usize> {
        subset
            .iter()
            .map(|t| {
                self.ids
                    .iter()
                    .position(|i| i == t)
                    .expect("subset drawn from ensemble")
            })
            .collect()
    }

    fn correction_vector(&self, subset: &[usize]) -> Result<Vec<f64>, ControllerError> {
        let records: Vec<(TechniqueId, Vec<CorrectionRecord>)> = subset
            .iter()
            .map(|&i| (self.ids[i].clone(), self.window_records[i].clone()))
            .collect();
        window_correction_vector(&records, &self.subset_ids(subset), self.cfg.window)
    }

    /// Processes the next frame.
    pub fn step(&mut self) -> Result<StepOutput, ControllerError> {
        let frame = self.next_frame();
        if frame >= self.queries {
            return Err(ControllerError::Exhausted(self.queries));
        }
        let mut live: Vec<usize> = match self.phase {
            Phase::Bootstrap => (0..self.ids.len()).collect(),
            _ => self.active.clone(),
        };
        live.sort_unstable();

        let records = {
            let mut wanted = vec![false; self.ids.len()];
            for &i in &live {
                wanted[i] = true;
            }
            let jobs = self
                .providers
                .iter()
                .zip(self.tracks.iter_mut())
                .enumerate()
                .filter(|(i, _)| wanted[*i])
                .map(|(_, (p, t))| (p, t.as_mut().expect("live technique has a track")))
                .collect();
            score_frame(jobs, frame)?
        };
        for (&i, r) in live.iter().zip(&records) {
            self.window_records[i].push(r.record);
        }
        let arbitration = arbitrate_frame(records)?;
        self.history.push(arbitration.winner.clone());
        self.runs.push(live.len());

        let mut events = Vec::new();
        if frame + 1 - self.window_start == self.cfg.window {
            events.push(self.close_window(frame)?);
            self.window_start = frame + 1;
            for w in &mut self.window_records {
                w.clear();
            }
        }

        Ok(StepOutput {
            query_index: frame,
            prediction: arbitration.prediction,
            chosen_technique: arbitration.winner.clone(),
            consistency: arbitration.winner_consistency,
            scored: self.subset_ids(&live),
            arbitration,
            events,
        })
    }

    fn close_window(&mut self, frame: usize) -> Result<ControllerEvent, ControllerError> {
        if self.phase == Phase::Bootstrap {
            let cov = coverage(&self.history, &self.ids)?;
            let subset = select_subset(&cov, self.cfg.coverage_threshold, &self.ids)?;
            self.set_active(self.indices_of(&subset));
            self.baseline = self.correction_vector(&self.active)?;
            self.phase = Phase::Monitoring;
            return Ok(ControllerEvent::InitialSelection {
                frame,
                subset,
                coverage: cov,
            });
        }

        let current = self.correction_vector(&self.active)?;
        let test = paired_t_test(&self.baseline, &current, self.cfg.alpha)?;
        self.last_p_value = Some(test.p_value);
        if !test.reject_h0 {
            self.baseline = current;
            return Ok(ControllerEvent::WindowAccepted {
                frame,
                p_value: test.p_value,
            });
        }
        self.reselect(frame, test.p_value)
            .map(ControllerEvent::Reselection)
    }

    fn set_active(&mut self, active: Vec<usize>) {
        for (i, track) in self.tracks.iter_mut().enumerate() {
            if !active.contains(&i) {
                *track = None;
            }
        }
        self.active = active;
    }

    /// Rescores the window that just closed with the whole ensemble and
    /// selects a new subset from it.
    fn reselect(
        &mut self,
        frame: usize,
        p_value: f64,
    ) -> Result<ReselectionEvent, ControllerError> {
        self.phase = Phase::Reselecting;
        let start = self.window_start;
        let buffer = self.cfg.buffer_len();
        if frame + 1 - start > buffer {
            return Err(ControllerError::BufferUnderrun {
                start,
                end: frame,
                buffer,
            });
        }

        let sic = self.cfg.sic;
        let inactive: Vec<usize> = (0..self.ids.len())
            .filter(|i| !self.active.contains(i))
            .collect();
        let rescored: Vec<(usize, SicTrack, Vec<CorrectionRecord>)> = inactive
            .par_iter()
            .map(|&i| {
                let provider = &self.providers[i];
                let mut track = SicTrack::new(start, sic);
                let recs = (start..=frame)
                    .map(|f| {
                        provider
                            .score(f)
                            .map_err(SicError::from)
                            .and_then(|raw| track.push(f, raw))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|source| MusicError::Sic {
                        technique: self.ids[i].clone(),
                        source,
                    })?;
                Ok((i, track, recs))
            })
            .collect::<Result<_, ControllerError>>()?;
        for (i, track, recs) in rescored {
            self.tracks[i] = Some(track);
            self.window_records[i] = recs;
        }
        for f in start..=frame {
            self.runs[f] = self.ids.len();
        }

        self.history.clear();
        for k in 0..=(frame - start) {
            let records = (0..self.ids.len())
                .map(|i| TechniqueRecord {
                    technique: self.ids[i].clone(),
                    record: self.window_records[i][k],
                    normalized: true,
                })
                .collect();
            self.history.push(arbitrate_frame(records)?.winner);
        }
        let cov = coverage(&self.history, &self.ids)?;
        let new_subset = select_subset(&cov, self.cfg.coverage_threshold, &self.ids)?;
        let old_subset = self.subset_ids(&self.active);
        self.set_active(self.indices_of(&new_subset));
        self.baseline = self.correction_vector(&self.active)?;
        self.phase = Phase::Monitoring;
        self.reselections += 1;
        Ok(ReselectionEvent {
            trigger_frame: frame,
            p_value,
            old_subset,
            new_subset,
            coverage_at_trigger: cov,
        })
    }
}

/// Everything an adaptive run produced.
#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub frames: Vec<StepOutput>,
    pub technique_runs: Vec<usize>,
    pub ensemble_size: usize,
}

impl AdaptiveRun {
    pub fn reselections(&self) -> impl Iterator<Item = &ReselectionEvent> {
        self.frames.iter().flat_map(|f| {
            f.events.iter().filter_map(|e| match e {
                ControllerEvent::Reselection(r) => Some(r),
                _ => None,
            })
        })
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.prediction).collect()
    }
}

pub fn run_amusic_over_dataset(
    providers: Vec<Arc<dyn TechniqueProvider>>,
    queries: usize,
    cfg: AdaptiveConfig,
) -> Result<AdaptiveRun, ControllerError> {
    let ensemble_size = providers.len();
    let mut ctl = AdaptiveController::new(providers, cfg)?;
    let frames = (0..queries.min(ctl.queries))
        .map(|_| ctl.step())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdaptiveRun {
        frames,
        technique_runs: ctl.runs,
        ensemble_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<TechniqueId> {
        names.iter().map(|&n| n.into()).collect()
    }

    fn cov(pairs: &[(&str, f64)]) -> CoverageVector {
        CoverageVector::from_pairs(pairs.iter().map(|&(t, p)| (t.into(), p)).collect())
    }

    #[test]
    fn selection_prefix() {
        let order = ids(&["A", "B", "C", "D"]);
        let c = cov(&[("A", 0.5), ("B", 0.3), ("C", 0.15), ("D", 0.05)]);
        assert_eq!(select_subset(&c, 0.7, &order).unwrap(), ids(&["A", "B"]));
        let c = cov(&[("A", 0.75), ("B", 0.25)]);
        assert_eq!(select_subset(&c, 0.7, &order).unwrap(), ids(&["A"]));
        let c = cov(&[("A", 0.25), ("B", 0.25), ("C", 0.25), ("D", 0.25)]);
        assert_eq!(
            select_subset(&c, 0.7, &order).unwrap(),
            ids(&["A", "B", "C"])
        );
    }

    #[test]
    fn selection_orders_by_coverage_then_ensemble() {
        let order = ids(&["A", "B", "C"]);
        let c = cov(&[("A", 0.2), ("B", 0.4), ("C", 0.4)]);
        assert_eq!(select_subset(&c, 0.7, &order).unwrap(), ids(&["B", "C"]));
        assert_eq!(
            select_subset(&c, 1.0, &order).unwrap(),
            ids(&["B", "C", "A"])
        );
        let c = cov(&[("A", 0.4), ("B", 0.3), ("C", 0.3)]);
        assert_eq!(select_subset(&c, 0.7, &order).unwrap(), ids(&["A", "B"]));
        assert!(matches!(
            select_subset(&cov(&[]), 0.7, &order),
            Err(ControllerError::EmptyCoverage)
        ));
    }

    fn recs(mags: &[f64]) -> Vec<CorrectionRecord> {
        mags.iter()
            .enumerate()
            .map(|(q, &m)| CorrectionRecord {
                query_index: q,
                original_match: q,
                corrected_match: if m > 0.0 { q + 1 } else { q },
                correction_magnitude: m,
                winning_consistency: 1.0,
                corrected: m > 0.0,
            })
            .collect()
    }

    #[test]
    fn correction_vector_concatenates_in_subset_order() {
        let r = vec![
            ("A".into(), recs(&[0.1, 0.0])),
            ("B".into(), recs(&[0.0, 0.3])),
        ];
        assert_eq!(
            window_correction_vector(&r, &ids(&["A", "B"]), 2).unwrap(),
            vec![0.1, 0.0, 0.0, 0.3]
        );
        assert_eq!(
            window_correction_vector(&r, &ids(&["B", "A"]), 2).unwrap(),
            vec![0.0, 0.3, 0.1, 0.0]
        );
        let one = vec![("A".into(), recs(&[0.0, 0.2, 0.0]))];
        assert_eq!(
            window_correction_vector(&one, &ids(&["A"]), 3).unwrap(),
            vec![0.0, 0.2, 0.0]
        );
        assert!(matches!(
            window_correction_vector(&r, &ids(&["A"]), 3),
            Err(ControllerError::WindowIncomplete {
                expected: 3,
                got: 2,
                ..
            })
        ));
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = AdaptiveConfig {
            coverage_threshold: 1.5,
            ..AdaptiveConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ControllerError::InvalidConfig {
                field: "coverage_threshold",
                ..
            })
        ));
        cfg.coverage_threshold = 0.7;
        cfg.window = 1;
        assert!(matches!(
            cfg.validate(),
            Err(ControllerError::InvalidConfig {
                field: "window",
                ..
            })
        ));
        cfg.window = 10;
        cfg.buffer = Some(5);
        assert!(matches!(
            cfg.validate(),
            Err(ControllerError::InvalidConfig {
                field: "buffer",
                ..
            })
        ));
        cfg.buffer = None;
        assert_eq!(cfg.buffer_len(), 20);
        assert!(cfg.validate().is_ok());
    }
}
