use music_vpr::score::{normalize_scores, ScoreVector};
use proptest::prelude::*;

fn vectors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 2..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn zero_mean_unit_std(v in vectors(), scale in 1e-3f64..1e3, shift in -1e3f64..1e3) {
        let raw: Vec<f64> = v.iter().map(|x| x * scale + shift).collect();
        let n = normalize_scores(&ScoreVector::new(raw).unwrap()).unwrap();
        prop_assume!(!n.degenerate);
        let s = n.scores.as_slice();
        let len = s.len() as f64;
        let mean = s.iter().sum::<f64>() / len;
        let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_and_argmax_invariant(v in vectors()) {
        let raw = ScoreVector::new(v).unwrap();
        let n = normalize_scores(&raw).unwrap().scores;
        prop_assert_eq!(n.argmax(), raw.argmax());
        prop_assert_eq!(n.ranking(), raw.ranking());
    }

    #[test]
    fn idempotent(v in vectors()) {
        let once = normalize_scores(&ScoreVector::new(v).unwrap()).unwrap().scores;
        let twice = normalize_scores(&once).unwrap().scores;
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn top_k_is_ranking_prefix(v in prop::collection::vec((0u8..6).prop_map(f64::from), 1..50), k in 0usize..60) {
        let s = ScoreVector::new(v).unwrap();
        let r = s.ranking();
        prop_assert_eq!(s.top_k(k), r[..k.min(r.len())].to_vec());
    }
}

#[test]
fn flat_vector_is_degenerate() {
    let n = normalize_scores(&ScoreVector::new(vec![3.0; 7]).unwrap()).unwrap();
    assert!(n.degenerate);
    assert!(n.scores.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn signed_zeros_tie() {
    let s = ScoreVector::new(vec![-0.0, 0.0, -1.0]).unwrap();
    assert_eq!(s.argmax(), 0);
    assert_eq!(s.ranking(), vec![0, 1, 2]);
}
