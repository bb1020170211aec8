use music_vpr::eval::{
    auc, evaluate, pr_curve_from, ptr, GroundTruth, PredictionEntry, PredictionLog,
};
use proptest::prelude::*;

/// PR points by brute force: for each distinct confidence, rescan the log.
fn oracle_points(conf: &[f64], correct: &[bool]) -> Vec<(f64, f64)> {
    let mut levels: Vec<f64> = conf.to_vec();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.dedup();
    levels
        .iter()
        .map(|&t| {
            let kept: Vec<usize> = (0..conf.len()).filter(|&i| conf[i] >= t).collect();
            let hits = kept.iter().filter(|&&i| correct[i]).count() as f64;
            (hits / conf.len() as f64, hits / kept.len() as f64)
        })
        .collect()
}

/// Integrates the piecewise-linear curve, held flat before its first point,
/// with 10,000 midpoint samples per segment.
fn oracle_area(points: &[(f64, f64)]) -> f64 {
    const SUB: usize = 10_000;
    let mut knots = vec![(0.0, points[0].1)];
    knots.extend_from_slice(points);
    let mut area = 0.0;
    for w in knots.windows(2) {
        let ((r0, p0), (r1, p1)) = (w[0], w[1]);
        let h = (r1 - r0) / SUB as f64;
        for i in 0..SUB {
            let s = (i as f64 + 0.5) / SUB as f64;
            area += h * (p0 + s * (p1 - p0));
        }
    }
    area
}

fn log_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..12).prop_map(|v| v as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_subdivision_oracle((conf, correct) in log_strategy()) {
        let pts = pr_curve_from(&conf, &correct);
        let oracle = oracle_points(&conf, &correct);
        prop_assert_eq!(pts.len(), oracle.len());
        for (p, o) in pts.iter().zip(&oracle) {
            prop_assert!((p.recall - o.0).abs() < 1e-12 && (p.precision - o.1).abs() < 1e-12);
        }
        prop_assert!((auc(&pts) - oracle_area(&oracle)).abs() < 1e-9);
    }

    #[test]
    fn recall_never_decreases((conf, correct) in log_strategy()) {
        let pts = pr_curve_from(&conf, &correct);
        for w in pts.windows(2) {
            prop_assert!(w[1].recall >= w[0].recall);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        let a = auc(&pts);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ptr_is_bounded(ens in 1usize..6, runs in prop::collection::vec(0.0f64..1.0, 1..60)) {
        let log = PredictionLog {
            entries: runs
                .iter()
                .enumerate()
                .map(|(q, &u)| PredictionEntry {
                    query_index: q,
                    prediction: q,
                    confidence: 0.0,
                    technique_runs: 1 + (u * ens as f64) as usize % ens,
                    ensemble_size: ens,
                    reselection: false,
                })
                .collect(),
        };
        let v = ptr(&log, ens).unwrap();
        prop_assert!(v >= 1.0 / ens as f64 - 1e-15 && v <= 1.0 + 1e-15);
    }
}

#[test]
fn perfect_ranking_scores_one() {
    let conf = [0.9, 0.8, 0.7, 0.1];
    let correct = [true, true, true, false];
    assert!((auc(&pr_curve_from(&conf, &correct)) - 0.75).abs() < 1e-12);
    assert_eq!(auc(&pr_curve_from(&conf[..3], &correct[..3])), 1.0);
}

#[test]
fn single_technique_ptr_is_a_quarter() {
    let log = PredictionLog {
        entries: (0..40)
            .map(|q| PredictionEntry {
                query_index: q,
                prediction: q,
                confidence: q as f64,
                technique_runs: 1,
                ensemble_size: 4,
                reselection: false,
            })
            .collect(),
    };
    assert_eq!(ptr(&log, 4).unwrap(), 0.25);
    let report = evaluate(&log, &GroundTruth::frame_aligned(0)).unwrap();
    assert_eq!((report.accuracy, report.ptr, report.auc), (1.0, 0.25, 1.0));
}

#[test]
fn csv_round_trip() {
    let log = PredictionLog {
        entries: vec![PredictionEntry {
            query_index: 0,
            prediction: 3,
            confidence: 0.125,
            technique_runs: 2,
            ensemble_size: 3,
            reselection: true,
        }],
    };
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    assert_eq!(PredictionLog::read_csv(buf.as_slice()).unwrap(), log);
}
