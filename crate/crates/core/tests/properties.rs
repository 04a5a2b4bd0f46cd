//! Randomized invariants of the discrete operators, the elliptic solve and
//! the evolution.

use proptest::prelude::*;

use coldwave::dynamics::{evolve, PlasmaState, RunControl, StepOptions};
use coldwave::elliptic::{check_bounds, solve_b};
use coldwave::{Field, Grid, Scheme};

const N: usize = 64;

fn spectral() -> Grid {
    Grid::new(N, Scheme::Spectral).unwrap()
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

/// Low-degree trigonometric polynomial with `min(1 + eta) >= 0.1`.
fn density() -> impl Strategy<Value = Field> {
    (prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5), 0.01f64..0.9).prop_map(|(coeffs, depth)| {
        let grid = spectral();
        let raw = grid.field_from_fn(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let k = (i + 1) as f64;
                    (a * (k * x).cos() + b * (k * x).sin()) / (k * k)
                })
                .sum()
        });
        let (lo, _) = raw.min_with_index();
        if lo >= -1e-12 {
            grid.zeros()
        } else {
            raw.map(|v| -depth * v / lo)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_is_linear(f in samples(), g in samples(), c in -3.0f64..3.0) {
        for scheme in [Scheme::Spectral, Scheme::FiniteDifference2] {
            let grid = Grid::new(N, scheme).unwrap();
            let f = Field::from(f.clone());
            let g = Field::from(g.clone());
            let lhs = grid.dx(&f.axpy(c, &g));
            let rhs = grid.dx(&f).axpy(c, &grid.dx(&g));
            prop_assert!(lhs.axpy(-1.0, &rhs).max_abs() < 1e-10);
        }
    }

    #[test]
    fn parseval(f in samples()) {
        let grid = spectral();
        let f = Field::from(f);
        let quadrature = grid.l2_inner(&f, &f);
        let spectral_sum = grid.sobolev_norm_sq(&f, 0);
        prop_assert!((quadrature - spectral_sum).abs() <= 1e-12 * (1.0 + quadrature));
    }

    #[test]
    fn mollifier_is_contractive_and_self_adjoint(f in samples(), g in samples(), eps in 0.0f64..0.5) {
        let grid = spectral();
        let f = Field::from(f);
        let g = Field::from(g);
        let jf = grid.mollify(&f, eps);
        prop_assert!(grid.l2_norm(&jf) <= grid.l2_norm(&f) + 1e-12);
        let a = grid.l2_inner(&jf, &g);
        let b = grid.l2_inner(&f, &grid.mollify(&g, eps));
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn elliptic_bounds_hold(eta in density()) {
        let grid = spectral();
        let mag = solve_b(&grid, &eta, 1e-10).unwrap();
        prop_assert!(mag.residual_inf <= 1e-10);
        let report = check_bounds(&grid, &eta, &mag);
        prop_assert!(report.bound_satisfied, "{report:?}");
        prop_assert!(report.l2_b <= report.l2_eta + report.slack);
    }

    #[test]
    fn mean_of_b_equals_mean_of_eta(eta in density()) {
        // Integrating the elliptic equation kills the flux term.
        let grid = spectral();
        let b = solve_b(&grid, &eta, 1e-12).unwrap().b;
        prop_assert!((grid.integral(&b) - grid.integral(&eta)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_commutes_with_translation(eta in density(), shift in 1isize..N as isize, amp in -0.1f64..0.1) {
        let grid = spectral();
        let u = grid.field_from_fn(|x| amp * x.sin());
        let opts = StepOptions { dt: 0.01, ..StepOptions::default() };
        let control = RunControl { t_max: 0.1, output_stride: usize::MAX, ..RunControl::default() };
        let a = PlasmaState::new(eta.clone(), u.clone(), 0.0, 1e-6).unwrap();
        let b = PlasmaState::new(eta.shifted(shift), u.shifted(shift), 0.0, 1e-6).unwrap();
        let ra = evolve(&grid, &a, &opts, &control, |_| {}).unwrap();
        let rb = evolve(&grid, &b, &opts, &control, |_| {}).unwrap();
        prop_assert!(ra.completed() && rb.completed());
        let d_eta = rb.final_state.eta().axpy(-1.0, &ra.final_state.eta().shifted(shift)).max_abs();
        let d_u = rb.final_state.u().axpy(-1.0, &ra.final_state.u().shifted(shift)).max_abs();
        prop_assert!(d_eta.max(d_u) < 1e-10);

        let first = &ra.reports[0];
        let last = ra.reports.last().unwrap();
        prop_assert!((last.mass - first.mass).abs() < 1e-12);
        prop_assert!((last.momentum - first.momentum).abs() < 1e-10);
    }
}

#[test]
fn parity_is_preserved_under_fd() {
    let grid = Grid::new(N, Scheme::FiniteDifference2).unwrap();
    let eta = grid.field_from_fn(|x| 0.2 * x.cos() - 0.05 * (2.0 * x).cos());
    let u = grid.field_from_fn(|x| 0.1 * x.sin());
    let state = PlasmaState::new(eta, u, 0.0, 1e-6).unwrap();
    let opts = StepOptions { dt: 0.01, ..StepOptions::default() };
    let control = RunControl { t_max: 0.5, output_stride: usize::MAX, ..RunControl::default() };
    let run = evolve(&grid, &state, &opts, &control, |_| {}).unwrap();
    let end = run.final_state;
    assert!(end.eta().axpy(-1.0, &end.eta().reflected()).max_abs() < 1e-12);
    assert!(end.u().axpy(1.0, &end.u().reflected()).max_abs() < 1e-12);
}
