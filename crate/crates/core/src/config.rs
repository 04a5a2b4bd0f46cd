//! Run configuration in a line-oriented `key = value` format.
//!
//! ```text
//! # comments start with '#'
//! n_points = 256
//! scheme = spectral
//! dt = 1e-3
//! t_max = 1.0
//! initial_condition = cosine_density(0.1, 1)
//! ```
//!
//! Required keys: `n_points`, `dt`, `t_max`, `initial_condition`. Unknown or
//! repeated keys are rejected. [`SolverConfig::to_text`] writes every key,
//! defaults included, and parses back to an identical config.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::{PlasmaState, RunControl, StepOptions};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `eta = 0`, `u = 0`
    Rest,
    /// `eta = a cos(k x)`, `u = 0`
    CosineDensity { amplitude: f64, wavenumber: u32 },
    /// `eta = 0`, `u = a sin(k x)`
    SineVelocity { amplitude: f64, wavenumber: u32 },
    /// Columns `x eta u [b]`, one row per grid point.
    File(PathBuf),
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Rest => write!(f, "rest"),
            InitialCondition::CosineDensity { amplitude, wavenumber } => {
                write!(f, "cosine_density({amplitude}, {wavenumber})")
            }
            InitialCondition::SineVelocity { amplitude, wavenumber } => {
                write!(f, "sine_velocity({amplitude}, {wavenumber})")
            }
            InitialCondition::File(path) => write!(f, "file({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n_points: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_max: f64,
    pub epsilon: f64,
    pub elliptic_tol: f64,
    pub cfl_safety: f64,
    pub vacuum_threshold: f64,
    pub slope_threshold: f64,
    pub output_stride: usize,
    pub output_dir: PathBuf,
    pub initial_condition: InitialCondition,
    pub dealias_products: bool,
    /// Extra snapshot times; the initial and final states are always written.
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    /// Config with every optional key at its default.
    pub fn new(n_points: usize, dt: f64, t_max: f64, initial_condition: InitialCondition) -> Self {
        SolverConfig {
            n_points,
            scheme: Scheme::Spectral,
            dt,
            t_max,
            epsilon: 0.0,
            elliptic_tol: 1e-10,
            cfl_safety: 0.5,
            vacuum_threshold: 1e-6,
            slope_threshold: 1e6,
            output_stride: 1,
            output_dir: PathBuf::from("output"),
            initial_condition,
            dealias_products: false,
            snapshot_times: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_config(text)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        parse_config(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_points, self.scheme)
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            dt: self.dt,
            epsilon: self.epsilon,
            elliptic_tol: self.elliptic_tol,
            dealias_products: self.dealias_products,
            vacuum_threshold: self.vacuum_threshold,
        }
    }

    pub fn run_control(&self) -> RunControl {
        RunControl {
            t_max: self.t_max,
            cfl_safety: self.cfl_safety,
            slope_threshold: self.slope_threshold,
            output_stride: self.output_stride,
        }
    }

    /// Sample the initial condition on `grid` and validate it.
    pub fn initial_state(&self, grid: &Grid) -> Result<PlasmaState> {
        let (eta, u) = match &self.initial_condition {
            InitialCondition::Rest => (grid.zeros(), grid.zeros()),
            InitialCondition::CosineDensity { amplitude, wavenumber } => {
                let k = *wavenumber as f64;
                (grid.field_from_fn(|x| amplitude * (k * x).cos()), grid.zeros())
            }
            InitialCondition::SineVelocity { amplitude, wavenumber } => {
                let k = *wavenumber as f64;
                (grid.zeros(), grid.field_from_fn(|x| amplitude * (k * x).sin()))
            }
            InitialCondition::File(path) => read_initial_file(path, grid.n_points())?,
        };
        PlasmaState::new(eta, u, 0.0, self.vacuum_threshold)
    }

    /// Every key in canonical order, in the grammar accepted by [`parse_config`].
    pub fn to_text(&self) -> String {
        let snapshots = self
            .snapshot_times
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("n_points", self.n_points.to_string());
        line("scheme", self.scheme.to_string());
        line("dt", self.dt.to_string());
        line("t_max", self.t_max.to_string());
        line("epsilon", self.epsilon.to_string());
        line("elliptic_tol", self.elliptic_tol.to_string());
        line("cfl_safety", self.cfl_safety.to_string());
        line("vacuum_threshold", self.vacuum_threshold.to_string());
        line("slope_threshold", self.slope_threshold.to_string());
        line("output_stride", self.output_stride.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("initial_condition", self.initial_condition.to_string());
        line("dealias_products", self.dealias_products.to_string());
        line("snapshot_times", snapshots);
        out
    }
}

fn validation(key: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| validation(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(validation(key, "must be finite"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = parse_f64(key, value)?;
    if v <= 0.0 {
        return Err(validation(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn parse_initial_condition(value: &str) -> Result<InitialCondition> {
    const KEY: &str = "initial_condition";
    if value == "rest" {
        return Ok(InitialCondition::Rest);
    }
    let (name, rest) = value
        .split_once('(')
        .ok_or_else(|| validation(KEY, format!("cannot parse `{value}`")))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| validation(KEY, format!("missing `)` in `{value}`")))?;
    let name = name.trim();
    if name == "file" {
        let path = args.trim();
        if path.is_empty() {
            return Err(validation(KEY, "file() needs a path"));
        }
        return Ok(InitialCondition::File(PathBuf::from(path)));
    }
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(validation(KEY, format!("{name} takes (amplitude, wavenumber), got `{args}`")));
    }
    let amplitude = parse_f64(KEY, parts[0])?;
    let wavenumber: u32 = parts[1]
        .parse()
        .map_err(|_| validation(KEY, format!("wavenumber `{}` must be a positive integer", parts[1])))?;
    if wavenumber == 0 {
        return Err(validation(KEY, "wavenumber must be a positive integer"));
    }
    match name {
        "cosine_density" => {
            let min_density = 1.0 - amplitude.abs();
            if min_density <= 0.0 {
                return Err(validation(
                    KEY,
                    format!("min(1 + eta0) = {min_density} <= 0 violates density positivity"),
                ));
            }
            Ok(InitialCondition::CosineDensity { amplitude, wavenumber })
        }
        "sine_velocity" => Ok(InitialCondition::SineVelocity { amplitude, wavenumber }),
        other => Err(validation(KEY, format!("unknown initial condition `{other}`"))),
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<SolverConfig> {
    let mut n_points = None;
    let mut dt = None;
    let mut t_max = None;
    let mut initial_condition = None;
    let mut cfg = SolverConfig::new(0, 0.0, 0.0, InitialCondition::Rest);
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        // Accept the typographic minus sign as well.
        let value = value.trim().replace('\u{2212}', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        seen.push(key.to_string());

        match key {
            "n_points" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| validation(key, format!("`{value}` is not a positive integer")))?;
                if !n.is_multiple_of(2) {
                    return Err(validation(key, "n_points must be even"));
                }
                if n < crate::grid::MIN_POINTS {
                    return Err(validation(key, format!("n_points must be at least {}", crate::grid::MIN_POINTS)));
                }
                n_points = Some(n);
            }
            "scheme" => cfg.scheme = value.parse().map_err(|m: String| validation(key, m))?,
            "dt" => dt = Some(positive(key, &value)?),
            "t_max" => t_max = Some(positive(key, &value)?),
            "epsilon" => {
                let e = parse_f64(key, &value)?;
                if e < 0.0 {
                    return Err(validation(key, "must be nonnegative"));
                }
                cfg.epsilon = e;
            }
            "elliptic_tol" => cfg.elliptic_tol = positive(key, &value)?,
            "cfl_safety" => cfg.cfl_safety = positive(key, &value)?,
            "vacuum_threshold" => cfg.vacuum_threshold = positive(key, &value)?,
            "slope_threshold" => cfg.slope_threshold = positive(key, &value)?,
            "output_stride" => {
                let s: usize = value
                    .parse()
                    .map_err(|_| validation(key, format!("`{value}` is not a positive integer")))?;
                if s == 0 {
                    return Err(validation(key, "must be at least 1"));
                }
                cfg.output_stride = s;
            }
            "output_dir" => {
                if value.is_empty() {
                    return Err(validation(key, "must not be empty"));
                }
                cfg.output_dir = PathBuf::from(value);
            }
            "initial_condition" => initial_condition = Some(parse_initial_condition(&value)?),
            "dealias_products" => {
                cfg.dealias_products = value
                    .parse()
                    .map_err(|_| validation(key, format!("`{value}` is not true/false")))?
            }
            "snapshot_times" => {
                let mut times = Vec::new();
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let t = parse_f64(key, part)?;
                    if t < 0.0 {
                        return Err(validation(key, "times must be nonnegative"));
                    }
                    times.push(t);
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(validation(key, "times must be strictly increasing"));
                }
                cfg.snapshot_times = times;
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }

    cfg.n_points = n_points.ok_or_else(|| validation("n_points", "required key is missing"))?;
    cfg.dt = dt.ok_or_else(|| validation("dt", "required key is missing"))?;
    cfg.t_max = t_max.ok_or_else(|| validation("t_max", "required key is missing"))?;
    cfg.initial_condition =
        initial_condition.ok_or_else(|| validation("initial_condition", "required key is missing"))?;

    if cfg.dt > cfg.t_max {
        return Err(validation("dt", format!("dt = {} exceeds t_max = {}", cfg.dt, cfg.t_max)));
    }
    if let InitialCondition::CosineDensity { wavenumber, .. } | InitialCondition::SineVelocity { wavenumber, .. } =
        cfg.initial_condition
    {
        if wavenumber as usize >= cfg.n_points / 2 {
            return Err(validation(
                "initial_condition",
                format!("wavenumber {wavenumber} is not resolved by {} points", cfg.n_points),
            ));
        }
    }
    Ok(cfg)
}

/// Whitespace- or comma-separated columns `x eta u [b]`; non-numeric lines
/// (headers, comments) are skipped.
fn read_initial_file(path: &Path, n_points: usize) -> Result<(Field, Field)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut eta = Vec::with_capacity(n_points);
    let mut u = Vec::with_capacity(n_points);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let nums: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        let Ok(nums) = nums else { continue };
        if nums.len() < 3 {
            return Err(validation("initial_condition", format!("row `{line}` has fewer than 3 columns")));
        }
        eta.push(nums[1]);
        u.push(nums[2]);
    }
    if eta.len() != n_points {
        return Err(validation(
            "initial_condition",
            format!("{} has {} rows, expected n_points = {n_points}", path.display(), eta.len()),
        ));
    }
    Ok((Field::new(eta), Field::new(u)))
}
