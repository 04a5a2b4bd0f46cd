//! Energy functional, minimum tracking and conservation monitors.
//!
//! The energy is `E = ||eta||_{H^2}^2 + ||u||_{H^3}^2 + max_x 1 / (1 + eta)`.
//! Its last term is controlled through the grid minimum `m(t) = min_x eta`,
//! which obeys `m'(t) = -u_x(argmin) (1 + m)` wherever it is differentiable.
//! All extrema are taken over collocation points.

use crate::dynamics::PlasmaState;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    pub h2_eta_sq: f64,
    pub h3_u_sq: f64,
    /// `max_x 1 / (1 + eta)`
    pub inv_min: f64,
    pub energy: f64,
    /// `min_x eta`
    pub m: f64,
    pub argmin_index: usize,
    pub ux_at_argmin: f64,
    /// `integral (1 + eta) dx`
    pub mass: f64,
    /// `integral (1 + eta) u dx`
    pub momentum: f64,
}

pub fn energy(grid: &Grid, state: &PlasmaState) -> Result<EnergyReport> {
    let eta = state.eta();
    let u = state.u();
    let (m, argmin_index) = eta.min_with_index();
    if !(1.0 + m > 0.0) {
        return Err(Error::Vacuum {
            min_density: 1.0 + m,
            index: argmin_index,
            threshold: 0.0,
        });
    }
    let h2_eta_sq = grid.sobolev_norm_sq(eta, 2);
    let h3_u_sq = grid.sobolev_norm_sq(u, 3);
    let inv_min = 1.0 / (1.0 + m);
    let ux = grid.dx(u);
    let density = eta.map(|e| 1.0 + e);
    Ok(EnergyReport {
        t: state.t(),
        h2_eta_sq,
        h3_u_sq,
        inv_min,
        energy: h2_eta_sq + h3_u_sq + inv_min,
        m,
        argmin_index,
        ux_at_argmin: ux[argmin_index],
        mass: grid.integral(&density),
        momentum: grid.l2_inner(&density, u),
    })
}

/// Sampled `m(t)` with predicted and observed rates.
#[derive(Debug, Clone, PartialEq)]
pub struct MinTrace {
    pub times: Vec<f64>,
    pub m_values: Vec<f64>,
    /// `-u_x(argmin) (1 + m)`
    pub predicted_rates: Vec<f64>,
    /// Centered differences of `m` (one-sided at the two ends).
    pub observed_rates: Vec<f64>,
}

impl MinTrace {
    pub fn new(times: Vec<f64>, m_values: Vec<f64>, predicted_rates: Vec<f64>) -> Result<Self> {
        if times.len() != m_values.len() || times.len() != predicted_rates.len() {
            return Err(Error::InvalidArgument("trace arrays differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("trace times must be strictly increasing".into()));
        }
        let observed_rates = finite_difference_rates(&times, &m_values);
        Ok(MinTrace {
            times,
            m_values,
            predicted_rates,
            observed_rates,
        })
    }

    pub fn from_reports(reports: &[EnergyReport]) -> Result<Self> {
        MinTrace::new(
            reports.iter().map(|r| r.t).collect(),
            reports.iter().map(|r| r.m).collect(),
            reports.iter().map(|r| -r.ux_at_argmin * (1.0 + r.m)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn finite_difference_rates(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (v[hi] - v[lo]) / (t[hi] - t[lo])
        })
        .collect()
}

/// Largest interior mismatch between the observed and predicted rate of `m`.
pub fn verify_min_law(trace: &MinTrace) -> f64 {
    let n = trace.len();
    if n < 3 {
        return 0.0;
    }
    (1..n - 1)
        .map(|i| (trace.observed_rates[i] - trace.predicted_rates[i]).abs())
        .fold(0.0, f64::max)
}

/// `m(t) > -1` at every sample.
pub fn check_positivity_persistence(trace: &MinTrace) -> bool {
    trace.m_values.iter().all(|&m| m > -1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    /// `E(t) / E(0)` per report.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// First time the ratio exceeds 4, if it does.
    pub first_exceed_time: Option<f64>,
    /// Max interior mismatch between the centered rate of `max 1/(1 + eta)`
    /// and `u_x(argmin) / (1 + m)`.
    pub reciprocal_rate_deviation: f64,
}

/// Local growth bound for the energy.
pub const ENERGY_GROWTH_BOUND: f64 = 4.0;

pub fn energy_budget(reports: &[EnergyReport]) -> Result<BudgetReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("energy budget needs at least two reports".into()));
    }
    let e0 = reports[0].energy;
    let ratios: Vec<f64> = reports.iter().map(|r| r.energy / e0).collect();
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first_exceed_time = reports
        .iter()
        .zip(&ratios)
        .find(|(_, &q)| q > ENERGY_GROWTH_BOUND)
        .map(|(r, _)| r.t);

    let times: Vec<f64> = reports.iter().map(|r| r.t).collect();
    let inv: Vec<f64> = reports.iter().map(|r| r.inv_min).collect();
    let observed = finite_difference_rates(&times, &inv);
    let n = reports.len();
    let reciprocal_rate_deviation = (1..n.saturating_sub(1))
        .map(|i| {
            let r = &reports[i];
            (observed[i] - r.ux_at_argmin / (1.0 + r.m)).abs()
        })
        .fold(0.0, f64::max);

    Ok(BudgetReport {
        ratios,
        max_ratio,
        first_exceed_time,
        reciprocal_rate_deviation,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dynamics::{evolve, RunControl, StepOptions};
    use crate::grid::{Field, Scheme};

    fn spectral(n: usize) -> Grid {
        Grid::new(n, Scheme::Spectral).unwrap()
    }

    #[test]
    fn rest_state_energy_is_one() {
        let g = spectral(32);
        let r = energy(&g, &PlasmaState::rest(&g)).unwrap();
        assert_eq!(r.energy, 1.0);
        assert_eq!(r.inv_min, 1.0);
        assert!((r.mass - 2.0 * PI).abs() < 1e-13);
        assert_eq!(r.momentum, 0.0);
    }

    #[test]
    fn constant_depletion_energy() {
        let g = spectral(32);
        let s = PlasmaState::new(Field::constant(32, -0.5), g.zeros(), 0.0, 1e-6).unwrap();
        let r = energy(&g, &s).unwrap();
        assert!((r.inv_min - 2.0).abs() < 1e-15);
        assert!((r.h2_eta_sq - 0.25 * 2.0 * PI).abs() < 1e-13);
        assert!((r.energy - (PI / 2.0 + 2.0)).abs() < 1e-13);
        assert!((r.inv_min * (1.0 + r.m) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trig_state_against_quadrature_oracle() {
        // Brute-force: integrate squares of analytic derivatives with the
        // trapezoid rule on a much finer grid.
        let g = spectral(64);
        let s = PlasmaState::new(
            g.field_from_fn(|x| 0.1 * x.cos()),
            g.field_from_fn(|x| 0.1 * x.sin()),
            0.0,
            1e-6,
        )
        .unwrap();
        let r = energy(&g, &s).unwrap();
        let quad = |f: &dyn Fn(f64) -> f64| {
            let n = 4096;
            let h = 2.0 * PI / n as f64;
            (0..n).map(|j| f(-PI + j as f64 * h).powi(2)).sum::<f64>() * h
        };
        // ||f||_{H^2}^2 = ||f||^2 + 2||f'||^2 + ||f''||^2, H^3 adds 3||f'||^2 + 3||f''||^2 + ||f'''||^2.
        let e = |x: f64| 0.1 * x.cos();
        let e1 = |x: f64| -0.1 * x.sin();
        let e2 = |x: f64| -0.1 * x.cos();
        let h2 = quad(&e) + 2.0 * quad(&e1) + quad(&e2);
        let v = |x: f64| 0.1 * x.sin();
        let v1 = |x: f64| 0.1 * x.cos();
        let v2 = |x: f64| -0.1 * x.sin();
        let v3 = |x: f64| -0.1 * x.cos();
        let h3 = quad(&v) + 3.0 * quad(&v1) + 3.0 * quad(&v2) + quad(&v3);
        assert!((r.h2_eta_sq - h2).abs() < 1e-13);
        assert!((r.h3_u_sq - h3).abs() < 1e-13);
        assert!((r.inv_min - 1.0 / 0.9).abs() < 1e-14);
        assert_eq!(g.points()[r.argmin_index], -PI);
        assert!((r.ux_at_argmin - (-0.1)).abs() < 1e-14);
        // momentum: integral (1 + 0.1 cos) 0.1 sin = 0
        assert!(r.momentum.abs() < 1e-15);
    }

    #[test]
    fn energy_is_translation_invariant() {
        let g = spectral(64);
        let eta = g.field_from_fn(|x| 0.2 * (x + 0.3).cos() - 0.1 * (3.0 * x).sin());
        let u = g.field_from_fn(|x| 0.1 * (2.0 * x).sin());
        let a = energy(&g, &PlasmaState::new(eta.clone(), u.clone(), 0.0, 1e-6).unwrap()).unwrap();
        let b = energy(&g, &PlasmaState::new(eta.shifted(7), u.shifted(7), 0.0, 1e-6).unwrap()).unwrap();
        assert!((a.energy - b.energy).abs() < 1e-12);
        assert!((a.h3_u_sq - b.h3_u_sq).abs() < 1e-12);
    }

    fn run_reports(eta0: impl Fn(f64) -> f64, u0: impl Fn(f64) -> f64, dt: f64, t_max: f64) -> Vec<EnergyReport> {
        let g = spectral(64);
        let s = PlasmaState::new(g.field_from_fn(eta0), g.field_from_fn(u0), 0.0, 1e-6).unwrap();
        let opts = StepOptions { dt, ..Default::default() };
        let control = RunControl { t_max, ..Default::default() };
        let run = evolve(&g, &s, &opts, &control, |_| {}).unwrap();
        assert!(run.completed());
        run.reports
    }

    #[test]
    fn min_law_on_equilibrium_is_exact() {
        let reports = run_reports(|_| 0.1, |_| 0.0, 0.01, 0.1);
        let trace = MinTrace::from_reports(&reports).unwrap();
        assert!(verify_min_law(&trace) < 1e-13);
        assert!(check_positivity_persistence(&trace));
        let budget = energy_budget(&reports).unwrap();
        assert!((budget.max_ratio - 1.0).abs() < 1e-13);
        assert_eq!(budget.first_exceed_time, None);
    }

    #[test]
    fn min_law_on_velocity_driven_run() {
        let reports = run_reports(|_| 0.0, |x| 0.05 * x.sin(), 1e-3, 0.5);
        let mut trace = MinTrace::from_reports(&reports).unwrap();
        let dev = verify_min_law(&trace);
        assert!(dev <= 1e-4, "deviation {dev:e}");
        assert!(check_positivity_persistence(&trace));

        // Negative control: dropping the observed rates exposes the prediction.
        trace.observed_rates.iter_mut().for_each(|r| *r = 0.0);
        let max_pred = trace.predicted_rates[1..trace.len() - 1]
            .iter()
            .fold(0.0_f64, |m, r| m.max(r.abs()));
        assert!(max_pred > 0.0);
        assert_eq!(verify_min_law(&trace), max_pred);

        let budget = energy_budget(&reports).unwrap();
        assert!(budget.reciprocal_rate_deviation < 1e-4);
        assert!(budget.max_ratio < ENERGY_GROWTH_BOUND);
    }

    #[test]
    fn positivity_negative_control() {
        let trace = MinTrace::new(vec![0.0, 0.1, 0.2], vec![-0.5, -1.01, -0.9], vec![0.0; 3]).unwrap();
        assert!(!check_positivity_persistence(&trace));
    }

    #[test]
    fn trace_validation() {
        assert!(MinTrace::new(vec![0.0, 0.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(MinTrace::new(vec![0.0, 1.0], vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(energy_budget(&[]).is_err());
    }

    #[test]
    fn budget_flags_growth() {
        let mk = |t: f64, energy: f64| EnergyReport {
            t,
            h2_eta_sq: 0.0,
            h3_u_sq: energy - 1.0,
            inv_min: 1.0,
            energy,
            m: 0.0,
            argmin_index: 0,
            ux_at_argmin: 0.0,
            mass: 0.0,
            momentum: 0.0,
        };
        let b = energy_budget(&[mk(0.0, 1.0), mk(0.5, 3.0), mk(1.0, 4.5)]).unwrap();
        assert_eq!(b.first_exceed_time, Some(1.0));
        assert_eq!(b.max_ratio, 4.5);
    }
}
