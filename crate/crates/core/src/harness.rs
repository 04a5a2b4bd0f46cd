//! Verification studies: spatial and temporal self-convergence, the
//! mollifier limit, and the steepening probe.
//!
//! Independent runs inside a study go through [`Execution`]; results are
//! assembled in input order, so a study is bit-reproducible regardless of
//! the policy.

use crate::config::{InitialCondition, SolverConfig};
use crate::diagnostics::{check_positivity_persistence, MinTrace};
use crate::dynamics::{evolve, PlasmaState, RunControl, RunResult, StopReason};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::output::{exit_code_for, exit_code_for_error, EXIT_CFL};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Dx, dt or epsilon of each compared run.
    pub parameter_values: Vec<f64>,
    /// L2 distance of each run from the reference.
    pub errors: Vec<f64>,
    /// Log-ratio slopes between consecutive entries.
    pub observed_orders: Vec<f64>,
    pub reference_description: String,
}

impl ConvergenceReport {
    /// `errors[i] / errors[i + 1]`
    pub fn error_ratios(&self) -> Vec<f64> {
        self.errors.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// Ratios of consecutive errors that both exceed `floor`; pairs already
    /// at roundoff say nothing about the convergence rate.
    pub fn resolved_ratios(&self, floor: f64) -> Vec<f64> {
        self.errors
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[0] / w[1])
            .collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# {}\nparameter,error,observed_order\n", self.reference_description);
        for (i, (p, e)) in self.parameter_values.iter().zip(&self.errors).enumerate() {
            let order = if i == 0 {
                String::new()
            } else {
                self.observed_orders
                    .get(i - 1)
                    .map(|o| crate::output::fmt_num(*o))
                    .unwrap_or_default()
            };
            s.push_str(&format!("{},{},{}\n", crate::output::fmt_num(*p), crate::output::fmt_num(*e), order));
        }
        s
    }
}

fn context(label: String) -> impl FnOnce(Error) -> Error {
    move |e| Error::Config(format!("{label}: {e}"))
}

fn slopes(params: &[f64], errors: &[f64]) -> Vec<f64> {
    params
        .windows(2)
        .zip(errors.windows(2))
        .map(|(p, e)| (e[0] / e[1]).ln() / (p[0] / p[1]).ln())
        .collect()
}

/// Run `config` on its own grid up to `t_end`, observing only the endpoints.
pub fn run_to(config: &SolverConfig, t_end: f64) -> Result<(Grid, RunResult)> {
    let grid = config.grid()?;
    let state0 = config.initial_state(&grid)?;
    let control = RunControl {
        t_max: t_end,
        output_stride: usize::MAX,
        ..config.run_control()
    };
    let run = evolve(&grid, &state0, &config.step_options(), &control, |_| {})?;
    Ok((grid, run))
}

fn completed_run(config: &SolverConfig, t_end: f64, label: String) -> Result<(Grid, PlasmaState, RunResult)> {
    let (grid, run) = run_to(config, t_end).map_err(context(label.clone()))?;
    if run.stop_reason != StopReason::Completed {
        return Err(Error::Config(format!(
            "{label}: run stopped early ({}): {}",
            run.stop_reason.as_str(),
            run.stop_message.clone().unwrap_or_default()
        )));
    }
    Ok((grid, run.final_state.clone(), run))
}

fn l2_distance(grid: &Grid, a: (&Field, &Field), b: (&Field, &Field)) -> f64 {
    let de = a.0.axpy(-1.0, b.0);
    let du = a.1.axpy(-1.0, b.1);
    (grid.l2_inner(&de, &de) + grid.l2_inner(&du, &du)).sqrt()
}

/// Reference runs must themselves pass basic invariant checks before use.
fn validate_reference(grid: &Grid, run: &RunResult, label: &str) -> Result<()> {
    let first = run.reports.first();
    let last = run.reports.last();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Config(format!("{label}: reference run has no reports")));
    };
    let trace = MinTrace::from_reports(&run.reports)?;
    let mass_drift = (last.mass - first.mass).abs();
    let scale = grid.length() * (1.0 + run.final_state.eta().max_abs());
    if !check_positivity_persistence(&trace) || mass_drift > 1e-9 * scale || !last.energy.is_finite() {
        return Err(Error::Config(format!(
            "{label}: reference failed invariant checks (mass drift {mass_drift:e})"
        )));
    }
    Ok(())
}

/// Spatial self-convergence over increasing `levels`; the finest level is the
/// reference and all fields are compared on the coarsest grid.
///
/// `errors[i]` is the distance of level `i` from the finest level.
/// `observed_orders` are computed from distances between consecutive levels,
/// `d_i = |q_i - q_{i+1}|`, as `log(d_i / d_{i+1}) / log(dx_i / dx_{i+1})`, which
/// does not depend on how close the finest level is to the limit.
pub fn refine_study(
    config: &SolverConfig,
    levels: &[usize],
    t_end: f64,
    exec: Execution,
) -> Result<ConvergenceReport> {
    if levels.len() < 2 {
        return Err(Error::Config("refine_study needs at least two levels".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("levels must be strictly increasing".into()));
    }
    if levels.iter().any(|&n| n % levels[0] != 0) {
        return Err(Error::Config("every level must be a multiple of the coarsest".into()));
    }
    if let InitialCondition::File(_) = config.initial_condition {
        return Err(Error::Config("file initial conditions cannot be resampled across levels".into()));
    }

    let runs = exec.map(levels, |&n| {
        let cfg = SolverConfig { n_points: n, ..config.clone() };
        completed_run(&cfg, t_end, format!("level n_points = {n}"))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;

    let coarse = &runs[0].0;
    let (fine_grid, _, fine_run) = runs.last().unwrap();
    validate_reference(fine_grid, fine_run, "finest level")?;

    let restricted: Vec<(Field, Field)> = runs
        .iter()
        .map(|(g, s, _)| Ok((coarse.restrict_from(g, s.eta())?, coarse.restrict_from(g, s.u())?)))
        .collect::<Result<_>>()?;
    let reference = restricted.last().unwrap();
    let errors: Vec<f64> = restricted[..restricted.len() - 1]
        .iter()
        .map(|(e, u)| l2_distance(coarse, (e, u), (&reference.0, &reference.1)))
        .collect();
    let spacing: Vec<f64> = runs.iter().map(|(g, _, _)| g.spacing()).collect();
    let successive: Vec<f64> = restricted
        .windows(2)
        .map(|w| l2_distance(coarse, (&w[0].0, &w[0].1), (&w[1].0, &w[1].1)))
        .collect();

    Ok(ConvergenceReport {
        parameter_values: spacing[..spacing.len() - 1].to_vec(),
        errors,
        observed_orders: slopes(&spacing[..spacing.len() - 1], &successive),
        reference_description: format!(
            "{} scheme, finest level n_points = {} as reference, t_end = {t_end}",
            config.scheme,
            levels.last().unwrap()
        ),
    })
}

/// Temporal self-convergence at fixed resolution against a run with
/// `min(dts) / 16`.
pub fn time_refine_study(
    config: &SolverConfig,
    dts: &[f64],
    t_end: f64,
    exec: Execution,
) -> Result<ConvergenceReport> {
    if dts.len() < 2 || dts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("time steps must be strictly decreasing, at least two".into()));
    }
    let reference_dt = dts.last().unwrap() / 16.0;
    let mut all: Vec<f64> = dts.to_vec();
    all.push(reference_dt);
    let runs = exec.map(&all, |&dt| {
        let cfg = SolverConfig { dt, ..config.clone() };
        completed_run(&cfg, t_end, format!("dt = {dt}"))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let (grid, reference, ref_run) = runs.last().unwrap();
    validate_reference(grid, ref_run, "reference dt")?;

    let errors: Vec<f64> = runs[..dts.len()]
        .iter()
        .map(|(_, s, _)| l2_distance(grid, (s.eta(), s.u()), (reference.eta(), reference.u())))
        .collect();
    Ok(ConvergenceReport {
        parameter_values: dts.to_vec(),
        observed_orders: slopes(dts, &errors),
        errors,
        reference_description: format!("RK4 with dt = {reference_dt} as reference, t_end = {t_end}"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub convergence: ConvergenceReport,
    /// Errors strictly decrease as epsilon decreases.
    pub monotone: bool,
}

impl EpsilonReport {
    pub fn verdict(&self) -> &'static str {
        if self.monotone {
            "PASSED"
        } else {
            "FAILED"
        }
    }
}

/// Distance of the mollified solution from the plain one at `t_end`, for
/// each epsilon.
pub fn epsilon_study(
    config: &SolverConfig,
    epsilons: &[f64],
    t_end: f64,
    exec: Execution,
) -> Result<EpsilonReport> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("epsilons must be strictly decreasing".into()));
    }
    let mut all = vec![0.0];
    all.extend_from_slice(epsilons);
    let runs = exec.map(&all, |&epsilon| {
        let cfg = SolverConfig { epsilon, ..config.clone() };
        completed_run(&cfg, t_end, format!("epsilon = {epsilon}"))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let (grid, plain, plain_run) = &runs[0];
    validate_reference(grid, plain_run, "unmollified run")?;

    let errors: Vec<f64> = runs[1..]
        .iter()
        .map(|(_, s, _)| l2_distance(grid, (s.eta(), s.u()), (plain.eta(), plain.u())))
        .collect();
    let convergence = ConvergenceReport {
        parameter_values: epsilons.to_vec(),
        observed_orders: slopes(epsilons, &errors),
        errors,
        reference_description: format!("unmollified run (epsilon = 0), t_end = {t_end}"),
    };
    let monotone = convergence.strictly_decreasing();
    Ok(EpsilonReport { convergence, monotone })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub amplitude: f64,
    pub stop_time: f64,
    /// `completed`, a breakdown reason, or `cfl_refused`.
    pub stop_reason: String,
    pub max_slope: f64,
    pub exit_code: i32,
    /// Every observed energy value was finite.
    pub finite_output: bool,
}

/// Runs `u0 = -a sin x`, `eta0 = 0` for each amplitude up to `config.t_max`.
pub fn steepening_probe(config: &SolverConfig, amplitudes: &[f64], exec: Execution) -> Result<Vec<ProbeRow>> {
    if amplitudes.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::Config("amplitudes must be nonnegative".into()));
    }
    let rows = exec.map(amplitudes, |&a| {
        let initial_condition = if a == 0.0 {
            InitialCondition::Rest
        } else {
            InitialCondition::SineVelocity {
                amplitude: -a,
                wavenumber: 1,
            }
        };
        let cfg = SolverConfig {
            initial_condition,
            ..config.clone()
        };
        let grid = cfg.grid()?;
        let state0 = cfg.initial_state(&grid)?;
        let control = RunControl {
            output_stride: usize::MAX,
            ..cfg.run_control()
        };
        match evolve(&grid, &state0, &cfg.step_options(), &control, |_| {}) {
            Ok(run) => Ok(ProbeRow {
                amplitude: a,
                stop_time: run.final_state.t(),
                stop_reason: run.stop_reason.as_str().to_string(),
                max_slope: run.max_slope,
                exit_code: exit_code_for(run.stop_reason),
                finite_output: run.reports.iter().all(|r| r.energy.is_finite()),
            }),
            Err(err @ Error::Cfl { .. }) => Ok(ProbeRow {
                amplitude: a,
                stop_time: 0.0,
                stop_reason: "cfl_refused".into(),
                max_slope: grid.dx(state0.u()).max_abs(),
                exit_code: exit_code_for_error(&err).max(EXIT_CFL),
                finite_output: true,
            }),
            Err(err) => Err(err),
        }
    });
    rows.into_iter().collect()
}

pub fn probe_table_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from("amplitude,stop_time,stop_reason,max_slope,exit_code\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            crate::output::fmt_num(r.amplitude),
            crate::output::fmt_num(r.stop_time),
            r.stop_reason,
            crate::output::fmt_num(r.max_slope),
            r.exit_code
        ));
    }
    s
}
