use mivabo::domain::ConstraintSet;
use mivabo::dual_decomp::{optimize, DualOptions, FactorGraph};
use mivabo::features::{FeatureConfig, FeatureExpansion};
use mivabo::rng::seeded;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

/// Grid maximum over feasible patterns: a lower bound on the true maximum.
fn enumerate_max(fg: &FactorGraph, n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for code in 0u32..(1 << n) {
        let xd: Vec<bool> = (0..n).map(|i| (code >> i) & 1 == 1).collect();
        if !fg.constraints.is_satisfied(&xd) {
            continue;
        }
        for g in 0..=200 {
            best = best.max(fg.objective(&xd, &[g as f64 / 200.0]));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_dual_value_bounds_every_primal(d in 2usize..=6, seed in 0u64..10_000, k in 0usize..3) {
        let fe = FeatureExpansion::new(
            d,
            1,
            &FeatureConfig { m_cont: 3, sigma: 1.0, seed, rff_scopes: None },
        )
        .unwrap();
        let mut rng = seeded(seed);
        let w: Vec<f64> = (0..fe.total()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let cs = if k == 0 { ConstraintSet::new(d) } else { ConstraintSet::cardinality(d, k) };
        let fg = FactorGraph::from_acquisition(&fe, &w, &cs).unwrap();
        let opts = DualOptions { steps: 40, ..Default::default() };
        let out = optimize(&fg, &opts, seed).unwrap();
        let truth = enumerate_max(&fg, d);
        prop_assert!(out.gap >= -1e-9);
        prop_assert!((fg.objective(&out.x_disc, &out.x_cont) - out.value).abs() < 1e-9);
        prop_assert!(cs.is_satisfied(&out.x_disc));
        for r in &out.history {
            prop_assert!(r.dual >= truth - 1e-6, "L = {} below max {}", r.dual, truth);
            prop_assert!(r.best_dual >= r.best_primal - 1e-9);
        }
    }
}
