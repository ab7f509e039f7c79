//! Invariants that should hold for all inputs, exercised with proptest.

use exfactor_core::{
    constrained_fit, gram, k_exfactor, random_bootstrap, ridge_solve, select_alpha_gcv, EvalMode,
    LabeledTasks, Matrix, OutcomeProbabilityModel, PreferenceConstraint, WorkerModel,
};
use exfactor_testkit as tk;
use proptest::prelude::*;

fn task_matrix(max_n: usize, max_m: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        proptest::collection::vec(-1.0..1.0f64, n * m)
            .prop_map(move |data| Matrix::from_vec(n, m, data).unwrap())
    })
}

fn labeled(max_n: usize, max_m: usize) -> impl Strategy<Value = LabeledTasks> {
    task_matrix(max_n, max_m).prop_flat_map(|m| {
        proptest::collection::vec(proptest::bool::ANY, m.rows()).prop_map(move |bits| {
            let y = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            LabeledTasks::new(m.clone(), y).unwrap()
        })
    })
}

fn names(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("f{i}")).collect()
}

proptest! {
    #[test]
    fn gram_is_symmetric_with_nonnegative_diagonal(t in task_matrix(10, 5)) {
        let g = gram(&t).unwrap();
        for i in 0..g.rows() {
            prop_assert!(g.get(i, i) >= 0.0);
            for j in 0..g.cols() {
                prop_assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
    }

    #[test]
    fn prediction_is_linear_in_the_task(
        w in proptest::collection::vec(-2.0..2.0f64, 1..6),
        scale in -3.0..3.0f64,
    ) {
        let m = w.len();
        let model = WorkerModel::new(w, 0.0, names(m)).unwrap();
        let t1: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let t2: Vec<f64> = (0..m).map(|i| (i as f64 * 0.61).cos()).collect();
        let combo: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| scale * a + b).collect();
        let lhs = model.predict(&combo).unwrap();
        let rhs = scale * model.predict(&t1).unwrap() + model.predict(&t2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
    }

    #[test]
    fn mse_is_nonnegative_and_zero_on_replayed_predictions(data in labeled(10, 4)) {
        if let Ok(model) = WorkerModel::fit(&data, 0.1, names(data.factors().cols())) {
            let e = model.mse(&data).unwrap();
            prop_assert!(e >= 0.0);
            // relabel outcomes with the model's own predictions: zero error
            let preds: Vec<f64> = (0..data.len())
                .map(|i| model.predict(data.factors().row(i)).unwrap().clamp(0.0, 1.0))
                .collect();
            let replay = LabeledTasks::new(data.factors().clone(), preds.clone()).unwrap();
            let w: Vec<f64> = model.weights().to_vec();
            let replay_model = WorkerModel::new(w, 0.1, names(data.factors().cols())).unwrap();
            let replay_err = replay_model.mse(&replay).unwrap();
            let clamped = (0..data.len()).any(|i| {
                let raw = model.predict(data.factors().row(i)).unwrap();
                raw != preds[i]
            });
            if !clamped {
                prop_assert!(replay_err <= 1e-18);
            }
        }
    }

    #[test]
    fn ridge_norm_shrinks_as_alpha_grows(data in labeled(12, 4)) {
        let mut last = f64::INFINITY;
        for alpha in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let w = ridge_solve(data.factors(), data.outcomes(), alpha).unwrap();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= last + 1e-9, "norm {} after {} at alpha {}", norm, last, alpha);
            last = norm;
        }
    }

    #[test]
    fn least_squares_fit_is_locally_optimal(
        data in labeled(12, 4),
        dir in proptest::collection::vec(-1.0..1.0f64, 4),
    ) {
        if let Ok(w) = ridge_solve(data.factors(), data.outcomes(), 0.0) {
            let m = data.factors().cols();
            let obj = |w: &[f64]| tk::ridge_objective(data.factors(), data.outcomes(), 0.0, w);
            let base = obj(&w);
            for step in [1e-3, 1e-1] {
                let moved: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v + step * dir.get(i % m).copied().unwrap_or(0.0))
                    .collect();
                prop_assert!(obj(&moved) >= base - 1e-9 * (1.0 + base));
            }
        }
    }

    #[test]
    fn success_probability_is_a_probability_and_swaps_with_labels(
        data in labeled(20, 3),
        query_bits in proptest::collection::vec(0u8..3, 3),
    ) {
        let m = data.factors().cols();
        let query: Vec<f64> = (0..m).map(|i| query_bits[i % query_bits.len()] as f64).collect();
        let model = OutcomeProbabilityModel::fit(&data, 1.0).unwrap();
        let p = model.success_probability(&query).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));

        let flipped_y: Vec<f64> = data.outcomes().iter().map(|y| 1.0 - y).collect();
        let flipped = LabeledTasks::new(data.factors().clone(), flipped_y).unwrap();
        let fmodel = OutcomeProbabilityModel::fit(&flipped, 1.0).unwrap();
        let q = fmodel.success_probability(&query).unwrap();
        prop_assert!((p + q - 1.0).abs() <= 1e-12, "complement violated: {} + {}", p, q);
    }

    #[test]
    fn constrained_fit_always_returns_feasible_weights(
        data in labeled(12, 5),
        seed in any::<u64>(),
        count in 1usize..6,
    ) {
        let m = data.factors().cols();
        prop_assume!(m >= 2);
        let raw = tk::random_acyclic_constraints(m, count, 1e-3, seed);
        let cs: Vec<PreferenceConstraint> = raw
            .iter()
            .map(|&(hi, lo, mg)| PreferenceConstraint::new(hi, lo, mg).unwrap())
            .collect();
        let fit = constrained_fit(&data, 0.1, &cs, names(m)).unwrap();
        for &(hi, lo, mg) in &raw {
            prop_assert!(
                fit.weights()[hi] - fit.weights()[lo] >= mg - 1e-9,
                "violated ({}, {}): {:?}", hi, lo, fit.weights()
            );
        }
    }

    #[test]
    fn question_selection_never_grows_the_trace(t in task_matrix(10, 5), k in 0usize..4) {
        prop_assume!(k < t.cols());
        let full = k_exfactor(&t, 0, 0.5).unwrap();
        let cut = k_exfactor(&t, k, 0.5).unwrap();
        prop_assert!(cut.retained_trace <= full.retained_trace + 1e-12);
        prop_assert!(cut.retained_trace >= 0.0);
        prop_assert_eq!(cut.factor_indices.len(), k);
    }

    #[test]
    fn gcv_picks_from_the_grid(data in labeled(12, 3)) {
        let grid = [0.0, 1e-2, 1.0];
        let alpha = select_alpha_gcv(&data, &grid).unwrap();
        prop_assert!(grid.contains(&alpha));
    }

    #[test]
    fn random_bootstrap_ids_are_distinct_and_in_range(
        data in labeled(15, 3),
        b in 0usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(b <= data.len());
        let model = OutcomeProbabilityModel::fit(&data, 1.0).unwrap();
        let plan =
            random_bootstrap(data.factors(), b, &model, 0.01, EvalMode::Exact, seed).unwrap();
        prop_assert_eq!(plan.task_ids.len(), b);
        let mut sorted = plan.task_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), b);
        prop_assert!(plan.task_ids.iter().all(|&t| t < data.len()));
        prop_assert!(plan.expected_error >= 0.0);
    }
}
