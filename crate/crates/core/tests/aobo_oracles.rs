use approx::assert_abs_diff_eq;
use condproj::aobo::{cumulative_energy, curvature_curve, optimize_basis, select_k, BasisOptions};
use condproj::linalg::{orthonormality_error, principal_angles, Matrix};
use condproj::synthgen::{coupled_bases, planted_rank_matrix, redundant_text_matrix};
use proptest::prelude::*;

/// Curvature of sampled points with the same central-difference stencil,
/// written against the closed form rather than the library's curve type.
fn stencil_curvature(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let h = 1.0 / (n as f64 - 1.0);
    (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                let d1 = (y[i + 1] - y[i - 1]) / (2.0 * h);
                let d2 = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
                d2.abs() / (1.0 + d1 * d1).powf(1.5)
            }
        })
        .collect()
}

#[test]
fn parabola_curvature() {
    // y = x² on {0, 1/3, 2/3, 1}: min-max normalization is the identity,
    // y'' = 2 exactly, y' = 2x exactly at interior nodes.
    let x = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    let y: Vec<f64> = x.iter().map(|v| v * v).collect();
    let c = curvature_curve(&y).unwrap();
    for i in 1..3 {
        let slope = 2.0 * x[i];
        let expected = 2.0 / (1.0 + slope * slope).powf(1.5);
        assert_abs_diff_eq!(c.kappa[i], expected, epsilon = 1e-12);
    }
    assert_eq!(c.kappa[0], 0.0);
    assert_eq!(c.kappa[3], 0.0);
}

#[test]
fn elbow_at_three() {
    let sv = [10.0, 8.0, 6.0, 0.1, 0.1, 0.1];
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let e: Vec<f64> = sv
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    let y: Vec<f64> = e.iter().map(|v| (v - e[0]) / (e[5] - e[0])).collect();
    let oracle = stencil_curvature(&y);
    let best = (1..5).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap() + 1;
    assert_eq!(best, 3);

    let energy = cumulative_energy(&sv).unwrap();
    let c = curvature_curve(&energy.values).unwrap();
    for (a, b) in c.kappa.iter().zip(&oracle) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
    assert_eq!(select_k(&c.kappa, 6).k, 3);
}

#[test]
fn energy_hand_values() {
    let e = cumulative_energy(&[3.0, 2.0, 1.0]).unwrap().values;
    assert_abs_diff_eq!(e[0], 9.0 / 14.0, epsilon = 1e-15);
    assert_abs_diff_eq!(e[1], 13.0 / 14.0, epsilon = 1e-15);
    assert_eq!(e[2], 1.0);
}

#[test]
fn planted_rank_three_recovered() {
    let p = planted_rank_matrix(40, 16, 3, 1e4, 11).unwrap();
    let opts = BasisOptions {
        normalize_rows: false,
        k_override: None,
    };
    let (basis, report) = optimize_basis(&p.matrix, &opts).unwrap();
    assert_eq!(report.selected_k, 3);
    for a in principal_angles(basis.vectors(), &p.basis).unwrap() {
        assert!(a < 1e-3, "angle {a}");
    }
}

#[test]
fn redundant_inputs_collapse() {
    let b = coupled_bases(32, 3, 3, 0.1, 2).unwrap();
    let t = redundant_text_matrix(&b.target, 200, 0.01, 0.0, &b.noise, 9).unwrap();
    let (basis, report) = optimize_basis(&t, &BasisOptions::default()).unwrap();
    assert!(report.selected_k < 100);
    assert_eq!(basis.k(), 3);
}

#[test]
fn override_and_report_invariants() {
    let p = planted_rank_matrix(30, 12, 4, 50.0, 3).unwrap();
    let (b, r) = optimize_basis(
        &p.matrix,
        &BasisOptions {
            normalize_rows: true,
            k_override: Some(7),
        },
    )
    .unwrap();
    assert_eq!(b.k(), 7);
    assert!(r.k_overridden && !r.fallback_used);
    assert_eq!(r.normalized_y[0], 0.0);
    assert_abs_diff_eq!(*r.normalized_y.last().unwrap(), 1.0, epsilon = 1e-12);
    assert!(r.energy_curve.windows(2).all(|w| w[0] <= w[1]));
    assert!(orthonormality_error(b.vectors()) < 1e-12);
}

#[test]
fn short_spectrum_falls_back() {
    let t = Matrix::new(3, 4, vec![3.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    let (_, r) = optimize_basis(&t, &BasisOptions { normalize_rows: false, k_override: None }).unwrap();
    assert!(r.fallback_used);
    assert_eq!(r.selected_k, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn selection_invariant_under_rescaling(k in 1usize..6, seed in 0u64..500, scale in 0.01f64..100.0) {
        let p = planted_rank_matrix(24, 10, k, 30.0, seed).unwrap();
        let opts = BasisOptions { normalize_rows: false, k_override: None };
        let (_, a) = optimize_basis(&p.matrix, &opts).unwrap();
        let (_, b) = optimize_basis(&p.matrix.scale(scale), &opts).unwrap();
        prop_assert_eq!(a.selected_k, b.selected_k);
    }

    #[test]
    fn selected_k_within_rank(rows in 1usize..30, cols in 1usize..20, seed in 0u64..500) {
        let p = planted_rank_matrix(rows.max(cols), cols, 1, 2.0, seed).unwrap();
        let t = p.matrix.row_block(0, rows).unwrap();
        let (b, r) = optimize_basis(&t, &BasisOptions::default()).unwrap();
        prop_assert!(r.selected_k >= 1 && r.selected_k <= r.numerical_rank.max(1));
        prop_assert!(orthonormality_error(b.vectors()) < 1e-5);
    }
}
