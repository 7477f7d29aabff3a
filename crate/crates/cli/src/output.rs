//! Plot-ready CSV and JSON outputs.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back recovers every value bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ergosafe::harness::{GammaRun, ModeSummary, TrialRecord};
use ergosafe::optimizer::ViolationSummary;
use ergosafe::{FourierBasis, SafetyReport, Solution, Trajectory};
use serde::Serialize;

use crate::CliError;

pub fn float(x: f64) -> String {
    format!("{x:?}")
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// `t, robot_id, x_0..x_{n-1}, u_0..u_{m-1}`; the final state has no
/// control and leaves the `u` cells empty.
pub fn write_trajectories<W: Write>(out: W, robots: &[&Trajectory]) -> Result<(), CliError> {
    let first = robots
        .first()
        .ok_or_else(|| CliError::Usage("no trajectories to write".into()))?;
    let (n, m) = (first.state_dim(), first.control_dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "robot_id".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for (id, traj) in robots.iter().enumerate() {
        for t in 0..traj.horizon() {
            let mut row = vec![float(t as f64 * traj.dt()), id.to_string()];
            row.extend(traj.state(t).iter().map(|x| float(*x)));
            if t + 1 < traj.horizon() {
                row.extend(traj.control(t).iter().map(|u| float(*u)));
            } else {
                row.extend(std::iter::repeat_n(String::new(), m));
            }
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn trajectories_to_string(robots: &[&Trajectory]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_trajectories(&mut buf, robots)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

/// Inverse of [`write_trajectories`], one trajectory per `robot_id` in
/// ascending order.
pub fn read_trajectories<R: Read>(input: R) -> Result<Vec<Trajectory>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('u')).count();
    if header.len() != 2 + n + m || header.get(0) != Some("t") || header.get(1) != Some("robot_id") {
        return Err(CliError::Parse("trajectory csv: unexpected header".into()));
    }
    struct Acc {
        times: Vec<f64>,
        states: Vec<f64>,
        controls: Vec<f64>,
    }
    let mut robots: BTreeMap<usize, Acc> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let at = |col: usize| -> Result<f64, CliError> {
            let s = rec.get(col).unwrap_or("");
            s.parse::<f64>()
                .map_err(|e| CliError::Parse(format!("trajectory csv line {}: column {col}: {e}", line + 2)))
        };
        let id: usize = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::Parse(format!("trajectory csv line {}: robot_id: {e}", line + 2)))?;
        let acc = robots.entry(id).or_insert(Acc {
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
        });
        acc.times.push(at(0)?);
        for i in 0..n {
            acc.states.push(at(2 + i)?);
        }
        if rec.get(2 + n).is_some_and(|s| !s.is_empty()) {
            for i in 0..m {
                acc.controls.push(at(2 + n + i)?);
            }
        }
    }
    robots
        .into_values()
        .map(|acc| {
            let steps = acc.times.len().saturating_sub(1).max(1);
            let dt = acc.times.last().copied().unwrap_or(0.0) / steps as f64;
            Trajectory::from_parts(acc.states, acc.controls, n, m, dt).map_err(CliError::Invariant)
        })
        .collect()
}

/// Per-mode `k, Lambda_k, c_k, phi_k, |c_k - phi_k|`.
pub fn coverage_csv(basis: &FourierBasis, c: &[f64], phi: &[f64]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let v = basis.dim();
    let mut header: Vec<String> = (0..v).map(|i| format!("k{i}")).collect();
    header.extend(["lambda", "c_k", "phi_k", "abs_diff"].map(String::from));
    w.write_record(&header).map_err(csv_error)?;
    for idx in 0..basis.len() {
        let mut row: Vec<String> = basis.mode(idx).iter().map(|k| k.to_string()).collect();
        row.push(float(basis.weights()[idx]));
        row.push(float(c[idx]));
        row.push(float(phi[idx]));
        row.push(float((c[idx] - phi[idx]).abs()));
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// One row per (trial, mode). Contains no timings, so equal seeds give
/// byte-identical files.
pub fn trials_csv(records: &[TrialRecord]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let v = records.first().map_or(0, |r| r.start.len());
    let mut header: Vec<String> = ["trial", "mode", "seed"].map(String::from).to_vec();
    header.extend((0..v).map(|i| format!("start{i}")));
    header.extend((0..v).map(|i| format!("goal{i}")));
    header.extend(
        [
            "converged",
            "success",
            "collided",
            "metric",
            "plan_min_h",
            "executed_min_h",
            "rms_tracking_error",
            "terminal_violation",
            "barrier_violation",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row = vec![r.trial.to_string(), r.mode.to_string(), r.seed.to_string()];
        row.extend(r.start.iter().chain(&r.goal).map(|x| float(*x)));
        row.extend([
            r.converged.to_string(),
            r.success.to_string(),
            r.execution.collided.to_string(),
            float(r.metric),
            float(r.plan_min_h),
            float(r.execution.min_h),
            float(r.execution.rms_error),
            float(r.violation.terminal),
            float(r.violation.barrier),
        ]);
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

pub fn summary_csv(summary: &[ModeSummary]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mode", "trials", "converged", "successes", "success_pct", "converged_success_pct"])
        .map_err(csv_error)?;
    for s in summary {
        w.write_record([
            s.mode.to_string(),
            s.trials.to_string(),
            s.converged.to_string(),
            s.successes.to_string(),
            float(s.success_rate),
            float(s.converged_success_rate),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn gamma_sweep_csv(runs: &[GammaRun]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["gamma", "metric", "min_h", "converged"]).map_err(csv_error)?;
    for r in runs {
        w.write_record([float(r.gamma), float(r.metric()), float(r.min_h()), r.converged().to_string()])
            .map_err(csv_error)?;
    }
    finish(w)
}

/// Structured summary of one planning run.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub scenario: String,
    pub mode: String,
    pub robots: usize,
    pub metric: f64,
    pub objective: f64,
    pub control_cost: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub seconds: f64,
    pub violation: ViolationSummary,
    /// Smallest `h` over the horizon, per barrier.
    pub min_h: BTreeMap<String, f64>,
    pub audit: SafetyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
}

impl PlanReport {
    pub fn new(scenario: &str, robots: usize, sol: &Solution, audit: SafetyReport) -> Self {
        Self {
            scenario: scenario.to_string(),
            mode: sol.mode.to_string(),
            robots,
            metric: sol.metric,
            objective: sol.objective,
            control_cost: sol.control_cost,
            converged: sol.converged,
            outer_iterations: sol.outer_iterations,
            inner_iterations: sol.inner_iterations,
            seconds: sol.seconds,
            violation: sol.violation,
            min_h: audit.constraints.iter().map(|c| (c.name.clone(), c.min_h)).collect(),
            audit,
            min_separation: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
