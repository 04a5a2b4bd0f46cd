//! Single-run orchestration and the files it writes.
//!
//! * `timeseries.csv`: header plus one row per observation, columns
//!   [`TIMESERIES_COLUMNS`].
//! * `snapshot_initial.csv`, `snapshot_final.csv` and one
//!   `snapshot_NNNN.csv` per requested snapshot time: columns `x,eta,u,b`.
//! * `manifest.cfg`: the resolved configuration in the input grammar, with
//!   the stop reason recorded as comment lines.
//!
//! Every number is written with 17 significant digits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::SolverConfig;
use crate::dynamics::{evolve, Observation, StopReason};
use crate::elliptic;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const TIMESERIES_COLUMNS: [&str; 10] = [
    "t",
    "energy",
    "h2_eta_sq",
    "h3_u_sq",
    "inv_min",
    "m",
    "mass",
    "momentum",
    "max_abs_ux",
    "elliptic_residual",
];

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CFL: i32 = 3;
pub const EXIT_VACUUM: i32 = 4;
pub const EXIT_BLOWUP: i32 = 5;
pub const EXIT_SLOPE: i32 = 6;
pub const EXIT_ELLIPTIC: i32 = 7;
/// A harness study ran but its acceptance gate failed.
pub const EXIT_STUDY_FAILED: i32 = 8;

pub fn exit_code_for(reason: StopReason) -> i32 {
    match reason {
        StopReason::Completed => EXIT_COMPLETED,
        StopReason::Vacuum => EXIT_VACUUM,
        StopReason::Blowup => EXIT_BLOWUP,
        StopReason::SlopeBreakdown => EXIT_SLOPE,
        StopReason::EllipticFailure => EXIT_ELLIPTIC,
    }
}

/// Exit code for an error that prevented a run from starting.
pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::Cfl { .. } => EXIT_CFL,
        Error::Io(_) => EXIT_IO,
        Error::Vacuum { .. } => EXIT_VACUUM,
        Error::Blowup(_) => EXIT_BLOWUP,
        Error::Solve { .. } => EXIT_ELLIPTIC,
        _ => EXIT_CONFIG,
    }
}

/// 17 significant digits; round-trips every `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// `None` when the run was refused before stepping.
    pub stop_reason: Option<StopReason>,
    pub message: Option<String>,
    pub exit_code: i32,
    pub rows: usize,
    pub final_time: f64,
    pub output_dir: PathBuf,
}

pub fn write_snapshot(path: &Path, grid: &Grid, eta: &Field, u: &Field, b: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,eta,u,b")?;
    for j in 0..grid.n_points() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_num(grid.points()[j]),
            fmt_num(eta[j]),
            fmt_num(u[j]),
            fmt_num(b[j])
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(config: &SolverConfig, dir: &Path, stop: &str, message: Option<&str>) -> Result<()> {
    let mut text = config.to_text();
    text.push_str(&format!("# stop_reason: {stop}\n"));
    if let Some(m) = message {
        text.push_str(&format!("# stop_message: {}\n", m.replace('\n', " ")));
    }
    fs::write(dir.join("manifest.cfg"), text)?;
    Ok(())
}

fn timeseries_row(obs: &Observation<'_>) -> String {
    let r = obs.report;
    [
        r.t,
        r.energy,
        r.h2_eta_sq,
        r.h3_u_sq,
        r.inv_min,
        r.m,
        r.mass,
        r.momentum,
        obs.max_abs_ux,
        obs.magnetic.residual_inf,
    ]
    .iter()
    .map(|&v| fmt_num(v))
    .collect::<Vec<_>>()
    .join(",")
}

/// Execute one configured run and write its files into `config.output_dir`.
///
/// Physical breakdown is reported through [`RunOutcome::exit_code`];
/// `Err` is returned only for I/O failures.
pub fn run(config: &SolverConfig) -> Result<RunOutcome> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;

    let refused = |err: Error| -> Result<RunOutcome> {
        let code = exit_code_for_error(&err);
        if let Error::Io(_) = err {
            return Err(err);
        }
        let label = if code == EXIT_CFL { "cfl_refused" } else { "refused" };
        write_manifest(config, &dir, label, Some(&err.to_string()))?;
        Ok(RunOutcome {
            stop_reason: None,
            message: Some(err.to_string()),
            exit_code: code,
            rows: 0,
            final_time: 0.0,
            output_dir: dir.clone(),
        })
    };

    let grid = match config.grid() {
        Ok(g) => g,
        Err(e) => return refused(e),
    };
    let state0 = match config.initial_state(&grid) {
        Ok(s) => s,
        Err(e) => return refused(e),
    };

    let mut rows: Vec<String> = Vec::new();
    let mut snapshot_queue = config.snapshot_times.iter().copied().enumerate().peekable();
    let mut io_error: Option<Error> = None;
    let mut last_snapshot: Option<(Field, Field, Field)> = None;

    let result = evolve(
        &grid,
        &state0,
        &config.step_options(),
        &config.run_control(),
        |obs| {
            rows.push(timeseries_row(obs));
            let s = obs.state;
            if obs.step == 0 {
                let p = dir.join("snapshot_initial.csv");
                if let Err(e) = write_snapshot(&p, &grid, s.eta(), s.u(), &obs.magnetic.b) {
                    io_error.get_or_insert(e);
                }
            }
            while let Some(&(idx, ts)) = snapshot_queue.peek() {
                if s.t() + 1e-12 < ts {
                    break;
                }
                let p = dir.join(format!("snapshot_{idx:04}.csv"));
                if let Err(e) = write_snapshot(&p, &grid, s.eta(), s.u(), &obs.magnetic.b) {
                    io_error.get_or_insert(e);
                }
                snapshot_queue.next();
            }
            last_snapshot = Some((s.eta().clone(), s.u().clone(), obs.magnetic.b.clone()));
        },
    );

    let run = match result {
        Ok(r) => r,
        Err(e) => return refused(e),
    };
    if let Some(e) = io_error {
        return Err(e);
    }

    let mut w = BufWriter::new(File::create(dir.join("timeseries.csv"))?);
    writeln!(w, "{}", TIMESERIES_COLUMNS.join(","))?;
    for row in &rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;

    // The final state is observed unless the run broke inside a step; then
    // the last accepted state is written, solved afresh if possible.
    let final_state = &run.final_state;
    let b = match &last_snapshot {
        Some((eta, _, b)) if eta == final_state.eta() => Some(b.clone()),
        _ => elliptic::solve_b(&grid, final_state.eta(), config.elliptic_tol).ok().map(|m| m.b),
    };
    let b = b.unwrap_or_else(|| grid.zeros());
    write_snapshot(&dir.join("snapshot_final.csv"), &grid, final_state.eta(), final_state.u(), &b)?;
    write_manifest(config, &dir, run.stop_reason.as_str(), run.stop_message.as_deref())?;

    Ok(RunOutcome {
        stop_reason: Some(run.stop_reason),
        message: run.stop_message.clone(),
        exit_code: exit_code_for(run.stop_reason),
        rows: rows.len(),
        final_time: final_state.t(),
        output_dir: dir,
    })
}

/// Parse a timeseries file back into rows of numbers (header skipped).
pub fn read_timeseries(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Io(format!("bad number `{v}` in {}", path.display())))
                })
                .collect()
        })
        .collect()
}
