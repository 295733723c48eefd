mod common;

use ftirpad::evaluation::{tdr_at_fdr, ScoreSet};
use ftirpad::rng;

#[test]
fn overlapping_populations_match_sweep() {
    let mut r = rng::stream(8, "populations", &[]);
    let live: Vec<f64> = (0..1000).map(|_| rng::gaussian(&mut r)).collect();
    let spoof: Vec<f64> = (0..1000).map(|_| 2.0 + 1.5 * rng::gaussian(&mut r)).collect();
    for target in [0.0, 0.001, 0.01, 0.05, 0.2] {
        let got = tdr_at_fdr(&ScoreSet::new(live.clone(), spoof.clone()), target).unwrap();
        let (tdr, threshold) = common::sweep_tdr(&live, &spoof, target);
        assert_eq!((got.tdr, got.threshold), (tdr, threshold), "target {target}");
        assert!(got.fdr <= target);
    }
}

#[test]
fn random_sets_match_sweep() {
    for seed in 0..200 {
        let (live, spoof) = common::random_score_set(seed);
        let got = tdr_at_fdr(&ScoreSet::new(live.clone(), spoof.clone()), 0.01).unwrap();
        assert_eq!((got.tdr, got.threshold), common::sweep_tdr(&live, &spoof, 0.01), "seed {seed}");
    }
}

#[test]
fn gate_rejections_never_lower_tdr() {
    for seed in 0..50 {
        let (live, spoof) = common::random_score_set(seed);
        let base = ScoreSet::new(live, spoof);
        let with = ScoreSet {
            rejected_spoof: 1 + seed as usize % 7,
            ..base.clone()
        };
        assert!(tdr_at_fdr(&with, 0.01).unwrap().tdr >= tdr_at_fdr(&base, 0.01).unwrap().tdr);
    }
}
