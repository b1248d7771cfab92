use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vesselgnn_core::eval::confidence_interval;
use vesselgnn_core::hemo1d::{
    poiseuille_resistance, rcr_update, steady_state, Geometry1D, Model1D, RcrParams, Segment1D, SolverConfig,
    WallModel, BLOOD_VISCOSITY,
};
use vesselgnn_core::nn::{grad_check, Matrix, Mlp, MlpShape};
use vesselgnn_core::training::kfold_split;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steady_tube_matches_poiseuille(length in 2.0..20.0f64, radius in 0.3..1.5f64, q in 0.5..20.0f64) {
        let g = Geometry1D::single(Segment1D::uniform(length, radius, 20, 0.0)).unwrap();
        let mut bcs = BTreeMap::new();
        bcs.insert(0, RcrParams::resistance(500.0).unwrap());
        let m = Model1D::new(g, WallModel::rigid(), bcs).unwrap();
        let s = steady_state(&m, q, &SolverConfig::default()).unwrap();
        let p = m.pressures(&s).unwrap();
        let exact = poiseuille_resistance(BLOOD_VISCOSITY, length, radius).unwrap() * q;
        prop_assert!(((p[0] - p[19]) - exact).abs() < 1e-2 * exact);
    }

    #[test]
    fn windkessel_charges_monotonically(rd in 100.0..5000.0f64, c in 1e-5..1e-2f64, q in 0.1..10.0f64, dt in 1e-4..1e-1f64) {
        let bc = RcrParams::rcr(50.0, c, rd).unwrap();
        let mut pc = 0.0;
        for _ in 0..200 {
            let next = rcr_update(&bc, pc, q, dt).unwrap();
            prop_assert!(next >= pc && next <= q * rd * (1.0 + 1e-12));
            pc = next;
        }
    }

    #[test]
    fn folds_partition_sources(sources in 2usize..30, copies in 1usize..5, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= sources);
        let ids: Vec<(String, String)> = (0..sources)
            .flat_map(|s| (0..copies).map(move |c| (format!("s{s}_o{c}"), format!("s{s}"))))
            .collect();
        let plan = kfold_split(&ids, k, seed).unwrap();
        let source_of: BTreeMap<&String, &String> = ids.iter().map(|(i, s)| (i, s)).collect();
        let mut tested = BTreeSet::new();
        for fold in &plan.folds {
            prop_assert_eq!(fold.train.len() + fold.test.len(), ids.len());
            let test_sources: BTreeSet<_> = fold.test.iter().map(|i| source_of[i]).collect();
            prop_assert!(fold.train.iter().all(|i| !test_sources.contains(source_of[i])));
            for id in &fold.test {
                prop_assert!(tested.insert(id.clone()));
            }
        }
        prop_assert_eq!(tested.len(), ids.len());
    }

    #[test]
    fn interval_brackets_mean(values in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let ci = confidence_interval(&values).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((ci.mean - mean).abs() < 1e-12);
        prop_assert!(ci.low <= ci.mean && ci.mean <= ci.high);
        prop_assert_eq!(ci.n, values.len());
    }

    #[test]
    fn mlp_gradients_match_differences(input in 1usize..6, output in 1usize..4, hidden in 2usize..8, norm in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = MlpShape { input, hidden, hidden_layers: 2, output, layer_norm: norm };
        let mlp = Mlp::new(shape, &mut rng);
        let x = Matrix::from_vec(3, input, (0..3 * input).map(|i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect());
        prop_assert!(grad_check(&mlp, &x, 1e-5).unwrap().passed());
    }
}
