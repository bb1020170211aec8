//! Ground truth, prediction logs and the benchmark metrics: accuracy,
//! precision-recall sweep, PR-AUC and the proportion of technique runs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground truth listed for query {0}")]
    MissingGroundTruth(usize),
    #[error("query {query} ran {count} techniques, outside 1..={ensemble}")]
    CountOutOfRange {
        query: usize,
        count: usize,
        ensemble: usize,
    },
    #[error("prediction log is empty")]
    EmptyLog,
    #[error("ground truth for query {0} has an empty or inverted range")]
    BadRange(usize),
    #[error("prediction log line {line}: {message}")]
    MalformedLog { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which reference places count as a correct match for each query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruth {
    /// Query `q` matches references within `tolerance` frames of `q`.
    FrameAligned { tolerance: usize },
    /// Inclusive `[first, last]` reference ranges per query.
    Explicit {
        ranges: BTreeMap<usize, Vec<[usize; 2]>>,
    },
}

impl GroundTruth {
    pub fn frame_aligned(tolerance: usize) -> Self {
        GroundTruth::FrameAligned { tolerance }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if let GroundTruth::Explicit { ranges } = self {
            for (&q, r) in ranges {
                if r.is_empty() || r.iter().any(|[a, b]| a > b) {
                    return Err(EvalError::BadRange(q));
                }
            }
        }
        Ok(())
    }

    pub fn is_correct(&self, prediction: usize, q: usize) -> Result<bool, EvalError> {
        match self {
            GroundTruth::FrameAligned { tolerance } => Ok(prediction.abs_diff(q) <= *tolerance),
            GroundTruth::Explicit { ranges } => {
                let r = ranges.get(&q).ok_or(EvalError::MissingGroundTruth(q))?;
                Ok(r.iter()
                    .any(|&[lo, hi]| lo <= prediction && prediction <= hi))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub query_index: usize,
    pub prediction: usize,
    /// Value the PR sweep thresholds on.
    pub confidence: f64,
    pub technique_runs: usize,
    pub ensemble_size: usize,
    /// True on the frame whose window test triggered a re-selection.
    pub reselection: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    pub entries: Vec<PredictionEntry>,
}

impl PredictionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reselection_count(&self) -> usize {
        self.entries.iter().filter(|e| e.reselection).count()
    }

    pub fn ensemble_size(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.ensemble_size)
            .max()
            .unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut writer = csv::Writer::from_writer(w);
        for e in &self.entries {
            writer
                .serialize(e)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut entries = Vec::new();
        for (i, row) in reader.deserialize::<PredictionEntry>().enumerate() {
            let line = i as u64 + 2;
            let e = row.map_err(|e| EvalError::MalformedLog {
                line,
                message: e.to_string(),
            })?;
            if !e.confidence.is_finite() {
                return Err(EvalError::MalformedLog {
                    line,
                    message: "confidence is not finite".into(),
                });
            }
            entries.push(e);
        }
        Ok(Self { entries })
    }
}

fn correctness(log: &PredictionLog, gt: &GroundTruth) -> Result<Vec<bool>, EvalError> {
    log.entries
        .iter()
        .map(|e| gt.is_correct(e.prediction, e.query_index))
        .collect()
}

pub fn accuracy(log: &PredictionLog, gt: &GroundTruth) -> Result<f64, EvalError> {
    if log.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let ok = correctness(log, gt)?.into_iter().filter(|&c| c).count();
    Ok(ok as f64 / log.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

/// Sweeps a threshold down over the distinct confidence values. Queries at
/// or above the threshold are retained; recall is relative to all queries.
pub fn pr_curve_from(confidence: &[f64], correct: &[bool]) -> Vec<PrPoint> {
    assert_eq!(confidence.len(), correct.len());
    let total = confidence.len() as f64;
    let mut order: Vec<usize> = (0..confidence.len()).collect();
    order.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]));
    let mut points = Vec::new();
    let (mut retained, mut hits) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = confidence[order[i]];
        while i < order.len() && confidence[order[i]] == threshold {
            retained += 1;
            hits += usize::from(correct[order[i]]);
            i += 1;
        }
        points.push(PrPoint {
            precision: hits as f64 / retained as f64,
            recall: hits as f64 / total,
            threshold,
        });
    }
    points
}

pub fn pr_curve(log: &PredictionLog, gt: &GroundTruth) -> Result<Vec<PrPoint>, EvalError> {
    let correct = correctness(log, gt)?;
    let conf: Vec<f64> = log.entries.iter().map(|e| e.confidence).collect();
    Ok(pr_curve_from(&conf, &correct))
}

/// Trapezoidal area under precision over recall. The curve is held flat at
/// its first precision from recall 0 to its first point, so a perfect
/// ranking scores 1 however the sweep is sampled.
pub fn auc(points: &[PrPoint]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let mut area = first.recall * first.precision;
    for w in points.windows(2) {
        area += (w[1].recall - w[0].recall) * (w[1].precision + w[0].precision) / 2.0;
    }
    area.clamp(0.0, 1.0)
}

/// Mean fraction of the ensemble run per query.
pub fn ptr(log: &PredictionLog, ensemble_size: usize) -> Result<f64, EvalError> {
    if log.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let mut total = 0usize;
    for e in &log.entries {
        if e.technique_runs == 0 || e.technique_runs > ensemble_size {
            return Err(EvalError::CountOutOfRange {
                query: e.query_index,
                count: e.technique_runs,
                ensemble: ensemble_size,
            });
        }
        total += e.technique_runs;
    }
    Ok(total as f64 / (log.len() * ensemble_size) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub ptr: f64,
    pub reselection_count: usize,
    pub pr_points: Vec<PrPoint>,
}

pub fn evaluate(log: &PredictionLog, gt: &GroundTruth) -> Result<EvalReport, EvalError> {
    gt.validate()?;
    let pr_points = pr_curve(log, gt)?;
    Ok(EvalReport {
        queries: log.len(),
        accuracy: accuracy(log, gt)?,
        auc: auc(&pr_points),
        ptr: ptr(log, log.ensemble_size())?,
        reselection_count: log.reselection_count(),
        pr_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(conf: &[f64], preds: &[usize], runs: &[usize], ens: usize) -> PredictionLog {
        PredictionLog {
            entries: (0..conf.len())
                .map(|q| PredictionEntry {
                    query_index: q,
                    prediction: preds[q],
                    confidence: conf[q],
                    technique_runs: runs[q],
                    ensemble_size: ens,
                    reselection: false,
                })
                .collect(),
        }
    }

    #[test]
    fn frame_aligned_tolerance() {
        let gt = GroundTruth::frame_aligned(0);
        assert!(gt.is_correct(5, 5).unwrap());
        let gt = GroundTruth::frame_aligned(1);
        assert!(gt.is_correct(6, 5).unwrap());
        assert!(gt.is_correct(4, 5).unwrap());
        assert!(!gt.is_correct(7, 5).unwrap());
        let gt = GroundTruth::frame_aligned(10);
        assert!(gt.is_correct(20, 10).unwrap());
        assert!(!gt.is_correct(21, 10).unwrap());
    }

    #[test]
    fn explicit_ranges() {
        let gt = GroundTruth::Explicit {
            ranges: BTreeMap::from([(0, vec![[3, 5], [9, 9]])]),
        };
        assert!(gt.is_correct(4, 0).unwrap());
        assert!(gt.is_correct(9, 0).unwrap());
        assert!(!gt.is_correct(6, 0).unwrap());
        assert!(matches!(
            gt.is_correct(1, 1),
            Err(EvalError::MissingGroundTruth(1))
        ));
        let bad = GroundTruth::Explicit {
            ranges: BTreeMap::from([(0, vec![[5, 3]])]),
        };
        assert!(matches!(bad.validate(), Err(EvalError::BadRange(0))));
    }

    #[test]
    fn accuracy_counts() {
        let gt = GroundTruth::frame_aligned(0);
        let preds: Vec<usize> = (0..10).map(|q| if q < 7 { q } else { q + 5 }).collect();
        let log = log_of(&[1.0; 10], &preds, &[1; 10], 1);
        assert!((accuracy(&log, &gt).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(
            accuracy(&PredictionLog::default(), &gt),
            Err(EvalError::EmptyLog)
        ));
    }

    #[test]
    fn hand_swept_curve() {
        let pts = pr_curve_from(&[0.9, 0.8, 0.7, 0.6], &[true, true, false, true]);
        let got: Vec<(f64, f64)> = pts.iter().map(|p| (p.precision, p.recall)).collect();
        let want = [(1.0, 0.25), (1.0, 0.5), (2.0 / 3.0, 0.5), (0.75, 0.75)];
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12);
        }
        assert_eq!(pts.len(), 4);
    }

    #[test]
    fn ties_enter_together() {
        let pts = pr_curve_from(&[0.5, 0.9, 0.5], &[true, false, false]);
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[1].precision, pts[1].recall), (1.0 / 3.0, 1.0 / 3.0));
        let swapped = pr_curve_from(&[0.5, 0.9, 0.5], &[false, false, true]);
        assert_eq!(pts, swapped);
    }

    #[test]
    fn auc_extremes() {
        let perfect = pr_curve_from(&[0.9, 0.8, 0.7], &[true; 3]);
        assert_eq!(auc(&perfect), 1.0);
        let flat = pr_curve_from(&[0.5; 4], &[true; 4]);
        assert_eq!(auc(&flat), 1.0);
        let wrong = pr_curve_from(&[0.9, 0.8, 0.7], &[false; 3]);
        assert_eq!(auc(&wrong), 0.0);
        assert_eq!(auc(&[]), 0.0);
    }

    #[test]
    fn ptr_values() {
        let ones = log_of(&[0.0; 10], &[0; 10], &[1; 10], 4);
        assert_eq!(ptr(&ones, 4).unwrap(), 0.25);
        let all = log_of(&[0.0; 10], &[0; 10], &[4; 10], 4);
        assert_eq!(ptr(&all, 4).unwrap(), 1.0);
        let mixed = log_of(&[0.0; 10], &[0; 10], &[4, 4, 1, 1, 1, 1, 1, 1, 1, 1], 4);
        assert!((ptr(&mixed, 4).unwrap() - 0.4).abs() < 1e-15);
        let bad = log_of(&[0.0; 2], &[0; 2], &[5, 0], 4);
        assert!(matches!(
            ptr(&bad, 4),
            Err(EvalError::CountOutOfRange { query: 0, .. })
        ));
    }

    #[test]
    fn log_csv_round_trip() {
        let mut log = log_of(&[0.25, -1.5], &[3, 4], &[2, 1], 2);
        log.entries[1].reselection = true;
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "query_index,prediction,confidence,technique_runs,ensemble_size,reselection\n"
        ));
        assert_eq!(PredictionLog::read_csv(&buf[..]).unwrap(), log);
        assert!(matches!(
            PredictionLog::read_csv("query_index,prediction\n1,x\n".as_bytes()),
            Err(EvalError::MalformedLog { line: 2, .. })
        ));
    }
}
