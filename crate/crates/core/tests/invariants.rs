use proptest::prelude::*;

use relaxctl::experiments::{estimate_occupational_measure, run_trajectory_sweep, ExperimentConfig, RunOptions, Table};
use relaxctl::linalg::Matrix;
use relaxctl::reduction::static_map;
use relaxctl::system::{ControlBox, MatrixField, TwoScaleSystem};
use relaxctl::Vector;

fn scalar(x: f64) -> MatrixField {
    MatrixField::constant(Matrix::from_element(1, 1, x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn histogram_mass_is_one(a2 in -3.0..-0.3f64, beta in -1.0..1.0f64, start in -2.0..2.0f64, bins in 5usize..60) {
        let sys = TwoScaleSystem::new(
            scalar(1.0), scalar(a2), scalar(0.0), scalar(1.0),
            MatrixField::zeros(1, 1), MatrixField::zeros(1, 1),
            ControlBox::symmetric(1, 1.0).unwrap(), ControlBox::symmetric(1, 1.0).unwrap(), 0.1,
        ).unwrap();
        let z = Vector::zeros(1);
        let b = Vector::from_element(1, beta);
        let psi = static_map(&sys, &z).unwrap().eval(&b)[0];
        let lo = Vector::from_element(1, psi.min(start) - 1.0);
        let hi = Vector::from_element(1, psi.max(start) + 1.0);
        let h = estimate_occupational_measure(&sys, &z, &b, &Vector::from_element(1, start), 20.0, bins, &lo, &hi, 5000).unwrap();
        prop_assert!((h.total() - 1.0).abs() <= 1e-12);
        prop_assert!(h.mass.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn one_row_per_epsilon(eps in proptest::collection::vec(1e-3..0.5f64, 1..4)) {
        let mut eps = eps;
        eps.sort_by(|a, b| b.total_cmp(a));
        eps.dedup();
        let cfg = ExperimentConfig::from_json(&format!(
            r#"{{"name": "p", "system": {{"a1": [[1.0]], "a2": [[-1.0]], "b1": [[0.5]], "b2": [[1.0]],
                "omega_a": {{"lower": [-1], "upper": [1]}}, "omega_b": {{"lower": [-1], "upper": [1]}}, "z0": [0.3]}},
                "epsilons": {eps:?}, "horizon": 0.2, "step": 0.01}}"#
        )).unwrap();
        let t = run_trajectory_sweep(&cfg, &RunOptions::default()).unwrap();
        prop_assert_eq!(t.rows.len(), eps.len());
        prop_assert_eq!(t.rows[0].last().copied().flatten(), None);
    }

    #[test]
    fn csv_round_trips_exactly(rows in proptest::collection::vec(proptest::collection::vec(proptest::option::of(-1e6..1e6f64), 3), 0..8)) {
        let mut t = Table::new(vec!["a".into(), "b".into(), "c".into()]);
        for r in rows {
            t.push(r);
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Table::read_csv(buf.as_slice()).unwrap(), t);
    }
}
