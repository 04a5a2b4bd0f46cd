//! Tendencies, the RK4 step and the run driver.

use crate::diagnostics::{energy, EnergyReport};
use crate::elliptic::{self, MagneticField};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Fields larger than this in magnitude count as blow-up.
pub const BLOWUP_MAGNITUDE: f64 = 1e8;

/// Density perturbation and velocity at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaState {
    eta: Field,
    u: Field,
    t: f64,
}

impl PlasmaState {
    /// Validates finiteness and `min(1 + eta) > vacuum_threshold`.
    pub fn new(eta: Field, u: Field, t: f64, vacuum_threshold: f64) -> Result<Self> {
        if eta.len() != u.len() {
            return Err(Error::InvalidArgument(format!(
                "eta has {} points but u has {}",
                eta.len(),
                u.len()
            )));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid time stamp {t}")));
        }
        check_magnitude(&eta, &u)?;
        elliptic::check_density(&eta, vacuum_threshold)?;
        Ok(PlasmaState { eta, u, t })
    }

    /// `n = 1`, `u = 0`.
    pub fn rest(grid: &Grid) -> Self {
        PlasmaState {
            eta: grid.zeros(),
            u: grid.zeros(),
            t: 0.0,
        }
    }

    pub fn eta(&self) -> &Field {
        &self.eta
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn into_parts(self) -> (Field, Field, f64) {
        (self.eta, self.u, self.t)
    }
}

fn check_magnitude(eta: &Field, u: &Field) -> Result<()> {
    if !eta.is_finite() || !u.is_finite() {
        return Err(Error::Blowup("non-finite field values".into()));
    }
    let peak = eta.max_abs().max(u.max_abs());
    if peak > BLOWUP_MAGNITUDE {
        return Err(Error::Blowup(format!("field magnitude {peak:e} exceeds {BLOWUP_MAGNITUDE:e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub deta_dt: Field,
    pub du_dt: Field,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub dt: f64,
    /// Mollifier width; `0` runs the unregularized system.
    pub epsilon: f64,
    pub elliptic_tol: f64,
    pub dealias_products: bool,
    pub vacuum_threshold: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            dt: 1e-3,
            epsilon: 0.0,
            elliptic_tol: 1e-10,
            dealias_products: false,
            vacuum_threshold: elliptic::VACUUM_THRESHOLD,
        }
    }
}

impl StepOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.elliptic_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "elliptic_tol must be positive, got {}",
                self.elliptic_tol
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Magnetic force `(1 + b) b_x / (1 + eta)`.
fn magnetic_force(grid: &Grid, eta: &Field, b: &Field) -> Field {
    let bx = grid.dx(b);
    Field::new(
        (0..eta.len())
            .map(|j| (1.0 + b[j]) * bx[j] / (1.0 + eta[j]))
            .collect(),
    )
}

fn product(grid: &Grid, f: &Field, g: &Field, dealias: bool) -> Field {
    let p = f.zip_map(g, |a, b| a * b);
    if dealias {
        grid.dealias(&p)
    } else {
        p
    }
}

fn tendency(grid: &Grid, eta: &Field, u: &Field, epsilon: f64, tol: f64, dealias: bool) -> Result<Tendency> {
    check_magnitude(eta, u)?;
    let mag = elliptic::solve_b(grid, eta, tol)?;
    let force = magnetic_force(grid, eta, &mag.b);

    if epsilon == 0.0 {
        let ux = grid.dx(u);
        let flux = grid.dx(&product(grid, u, eta, dealias));
        let deta_dt = Field::new((0..eta.len()).map(|j| -flux[j] - ux[j]).collect());
        let advect = product(grid, u, &ux, dealias);
        let du_dt = advect.zip_map(&force, |a, f| -a - f);
        return Ok(Tendency { deta_dt, du_dt });
    }

    let ju = grid.mollify(u, epsilon);
    let jeta = grid.mollify(eta, epsilon);
    let jux = grid.dx(&ju);
    let flux = grid.mollify(&grid.dx(&product(grid, &ju, &jeta, dealias)), epsilon);
    let transport = grid.mollify(&jux, epsilon);
    let deta_dt = flux.zip_map(&transport, |f, t| -f - t);
    let advect = grid.mollify(&product(grid, &ju, &jux, dealias), epsilon);
    let du_dt = advect.zip_map(&force, |a, f| -a - f);
    Ok(Tendency { deta_dt, du_dt })
}

/// `eta_t = -(u eta)_x - u_x`, `u_t = -u u_x - (1 + b) b_x / (1 + eta)` with
/// `b` solved from the current `eta`.
pub fn rhs(grid: &Grid, state: &PlasmaState, elliptic_tol: f64) -> Result<Tendency> {
    tendency(grid, &state.eta, &state.u, 0.0, elliptic_tol, false)
}

/// Mollified tendencies: every transport nonlinearity is wrapped as
/// `J(Ju * J eta)_x`, `J J u_x`, `J(Ju * J u_x)`; the magnetic force is left
/// unregularized.
pub fn rhs_mollified(grid: &Grid, state: &PlasmaState, epsilon: f64, elliptic_tol: f64) -> Result<Tendency> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    tendency(grid, &state.eta, &state.u, epsilon, elliptic_tol, false)
}

/// Tendency selected by `opts` (plain or mollified, optional dealiasing).
pub fn rhs_with(grid: &Grid, state: &PlasmaState, opts: &StepOptions) -> Result<Tendency> {
    tendency(grid, &state.eta, &state.u, opts.epsilon, opts.elliptic_tol, opts.dealias_products)
}

/// Classical four-stage Runge-Kutta step.
pub fn step_rk4(grid: &Grid, state: &PlasmaState, opts: &StepOptions) -> Result<PlasmaState> {
    opts.validate()?;
    let dt = opts.dt;
    let f = |eta: &Field, u: &Field| {
        tendency(grid, eta, u, opts.epsilon, opts.elliptic_tol, opts.dealias_products)
    };

    let k1 = f(&state.eta, &state.u)?;
    let k2 = f(
        &state.eta.axpy(0.5 * dt, &k1.deta_dt),
        &state.u.axpy(0.5 * dt, &k1.du_dt),
    )?;
    let k3 = f(
        &state.eta.axpy(0.5 * dt, &k2.deta_dt),
        &state.u.axpy(0.5 * dt, &k2.du_dt),
    )?;
    let k4 = f(&state.eta.axpy(dt, &k3.deta_dt), &state.u.axpy(dt, &k3.du_dt))?;

    let combine = |y: &Field, a: &Field, b: &Field, c: &Field, d: &Field| {
        Field::new(
            (0..y.len())
                .map(|j| y[j] + dt / 6.0 * (a[j] + 2.0 * b[j] + 2.0 * c[j] + d[j]))
                .collect(),
        )
    };
    let eta = combine(&state.eta, &k1.deta_dt, &k2.deta_dt, &k3.deta_dt, &k4.deta_dt);
    let u = combine(&state.u, &k1.du_dt, &k2.du_dt, &k3.du_dt, &k4.du_dt);
    PlasmaState::new(eta, u, state.t + dt, opts.vacuum_threshold)
}

/// Largest admissible step: `cfl_safety * dx / (max|u| + max sqrt((1 + b) / (1 + eta)))`.
pub fn cfl_limit(grid: &Grid, state: &PlasmaState, b: &Field, cfl_safety: f64) -> f64 {
    let wave_speed = (0..b.len())
        .map(|j| ((1.0 + b[j]) / (1.0 + state.eta[j])).max(0.0).sqrt())
        .fold(0.0_f64, f64::max);
    cfl_safety * grid.spacing() / (state.u.max_abs() + wave_speed)
}

/// Run-level controls that are not part of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    pub t_max: f64,
    pub cfl_safety: f64,
    /// Stop once `max |u_x|` exceeds this.
    pub slope_threshold: f64,
    /// Steps between observer calls; the initial and final states are always observed.
    pub output_stride: usize,
}

impl Default for RunControl {
    fn default() -> Self {
        RunControl {
            t_max: 1.0,
            cfl_safety: 0.5,
            slope_threshold: 1e6,
            output_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    Vacuum,
    Blowup,
    /// `max |u_x|` crossed the slope threshold.
    SlopeBreakdown,
    EllipticFailure,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Completed => "completed",
            StopReason::Vacuum => "vacuum",
            StopReason::Blowup => "blowup",
            StopReason::SlopeBreakdown => "slope_breakdown",
            StopReason::EllipticFailure => "elliptic_failure",
        }
    }

    fn from_error(err: &Error) -> Option<StopReason> {
        match err {
            Error::Vacuum { .. } => Some(StopReason::Vacuum),
            Error::Blowup(_) => Some(StopReason::Blowup),
            Error::Solve { .. } => Some(StopReason::EllipticFailure),
            _ => None,
        }
    }
}

/// What the observer sees at each output step.
#[derive(Debug)]
pub struct Observation<'a> {
    pub step: usize,
    pub state: &'a PlasmaState,
    pub magnetic: &'a MagneticField,
    pub report: &'a EnergyReport,
    pub max_abs_ux: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: PlasmaState,
    pub stop_reason: StopReason,
    pub stop_message: Option<String>,
    pub steps: usize,
    /// One report per observation, in time order.
    pub reports: Vec<EnergyReport>,
    /// Largest `max |u_x|` seen over all accepted steps.
    pub max_slope: f64,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.stop_reason == StopReason::Completed
    }
}

fn observe<F>(
    grid: &Grid,
    step: usize,
    state: &PlasmaState,
    opts: &StepOptions,
    max_abs_ux: f64,
    reports: &mut Vec<EnergyReport>,
    observer: &mut F,
) -> Result<()>
where
    F: FnMut(&Observation<'_>),
{
    let magnetic = elliptic::solve_b(grid, &state.eta, opts.elliptic_tol)?;
    let report = energy(grid, state)?;
    observer(&Observation {
        step,
        state,
        magnetic: &magnetic,
        report: &report,
        max_abs_ux,
    });
    reports.push(report);
    Ok(())
}

/// Advance from `state0` to `control.t_max`.
///
/// Returns `Err` only when the run cannot start (bad options, CFL guard,
/// invalid initial constraint). Physical breakdown during the run ends it
/// with the matching [`StopReason`].
pub fn evolve<F>(
    grid: &Grid,
    state0: &PlasmaState,
    opts: &StepOptions,
    control: &RunControl,
    mut observer: F,
) -> Result<RunResult>
where
    F: FnMut(&Observation<'_>),
{
    opts.validate()?;
    if !(control.t_max > state0.t) {
        return Err(Error::Config(format!(
            "t_max = {} must exceed the initial time {}",
            control.t_max, state0.t
        )));
    }
    if control.output_stride == 0 {
        return Err(Error::Config("output_stride must be at least 1".into()));
    }

    let initial_b = elliptic::solve_b(grid, &state0.eta, opts.elliptic_tol)?;
    let limit = cfl_limit(grid, state0, &initial_b.b, control.cfl_safety);
    if opts.dt > limit {
        return Err(Error::Cfl { dt: opts.dt, limit });
    }

    let span = control.t_max - state0.t;
    let n_steps = ((span / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut reports = Vec::new();
    let mut state = state0.clone();
    let mut max_slope = grid.dx(&state.u).max_abs();
    observe(grid, 0, &state, opts, max_slope, &mut reports, &mut observer)?;

    let mut stop = (StopReason::Completed, None);
    let mut steps = 0;
    for step in 1..=n_steps {
        let target = if step == n_steps {
            control.t_max
        } else {
            state0.t + step as f64 * opts.dt
        };
        let step_opts = StepOptions {
            dt: target - state.t,
            ..*opts
        };
        let next = match step_rk4(grid, &state, &step_opts) {
            Ok(s) => PlasmaState { t: target, ..s },
            Err(err) => {
                stop = (StopReason::from_error(&err).unwrap_or(StopReason::Blowup), Some(err.to_string()));
                break;
            }
        };
        state = next;
        steps = step;

        let slope = grid.dx(&state.u).max_abs();
        max_slope = max_slope.max(slope);
        let breakdown = slope > control.slope_threshold;
        if breakdown {
            stop = (
                StopReason::SlopeBreakdown,
                Some(format!(
                    "max |u_x| = {slope:e} exceeds {:e} at t = {}",
                    control.slope_threshold, state.t
                )),
            );
        }
        if breakdown || step % control.output_stride == 0 || step == n_steps {
            if let Err(err) = observe(grid, step, &state, opts, slope, &mut reports, &mut observer) {
                stop = (StopReason::from_error(&err).unwrap_or(StopReason::Blowup), Some(err.to_string()));
                break;
            }
        }
        if breakdown {
            break;
        }
    }

    Ok(RunResult {
        final_state: state,
        stop_reason: stop.0,
        stop_message: stop.1,
        steps,
        reports,
        max_slope,
    })
}
