//! Run artifacts. Every CSV opens with a `# clfqp <kind> schema_version=N`
//! line and every JSON document carries `schema_version`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use clfqp_core::resclf::{convergence_envelope, Resclf};
use clfqp_core::sim::{phase_portrait, SimLog, SummaryStats};
use serde::{Deserialize, Serialize};

use crate::error::{check_version, CliError, Result};
use crate::formats::{nullable, read_versioned, write_json};

pub const LOG_VERSION: u32 = 1;
pub const SUMMARY_VERSION: u32 = 1;
pub const PHASE_VERSION: u32 = 1;
pub const ENVELOPE_VERSION: u32 = 1;
pub const COMPARE_VERSION: u32 = 1;

/// Columns that hold wall-clock measurements and are excluded from
/// determinism checks.
pub const TIMING_COLUMNS: [&str; 1] = ["solve_us"];

/// `t,q...,dq...,u...,mu...,V,Vdot_fd,Vdot_pred,d1,d2...,d3...,status,solve_us`.
pub fn log_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    fn idx(p: &'static str, k: usize) -> impl Iterator<Item = String> {
        (0..k).map(move |i| format!("{p}{i}"))
    }
    h.extend(idx("q", n));
    h.extend(idx("dq", n));
    h.extend(idx("u", m));
    h.extend(idx("mu", m));
    h.extend(["V", "Vdot_fd", "Vdot_pred", "d1"].map(String::from));
    h.extend(idx("d2_", m));
    h.extend(idx("d3_", m));
    h.extend(["status", "solve_us"].map(String::from));
    h
}

/// Shortest text that reads back to the same bits, in exponent form for
/// very small or very large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl CsvOut {
    fn create(path: &Path, kind: &str, version: u32) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::write(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# clfqp {kind} schema_version={version}").map_err(|e| CliError::write(path, e))?;
        Ok(Self { inner: csv::Writer::from_writer(w), path: path.to_path_buf() })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| CliError::write(&self.path, e.into()))
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| CliError::write(&self.path, e))
    }
}

/// A CSV artifact read back: its header and raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses a numeric column; empty cells and `NaN` read as NaN.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name).ok_or_else(|| CliError::Internal(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|e| CliError::Internal(format!("column {name}: {e}"))))
            .collect()
    }

    /// The table without the named columns.
    pub fn without(&self, drop: &[&str]) -> Table {
        let keep: Vec<usize> = (0..self.header.len()).filter(|&i| !drop.contains(&self.header[i].as_str())).collect();
        Table {
            header: keep.iter().map(|&i| self.header[i].clone()).collect(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }
}

/// Reads a CSV artifact of the given kind, rejecting other kinds and
/// unknown schema versions.
pub fn read_table(path: &Path, kind: &'static str, supported: u32) -> Result<Table> {
    let file = File::open(path).map_err(|e| CliError::parse(path, e))?;
    let mut rd = BufReader::new(file);
    let mut first = String::new();
    rd.read_line(&mut first).map_err(|e| CliError::parse(path, e))?;
    let rest = first
        .trim_end()
        .strip_prefix("# clfqp ")
        .and_then(|s| s.strip_prefix(kind))
        .and_then(|s| s.strip_prefix(" schema_version="))
        .ok_or_else(|| CliError::parse(path, format!("expected a '# clfqp {kind} schema_version=N' line")))?;
    let version: u32 = rest.parse().map_err(|_| CliError::parse(path, format!("bad schema version '{rest}'")))?;
    check_version(kind, version, supported)?;
    let mut csv = csv::Reader::from_reader(rd);
    let header = csv.headers().map_err(|e| CliError::parse(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok(Table { header, rows })
}

pub fn write_log(path: &Path, log: &SimLog) -> Result<()> {
    let mut out = CsvOut::create(path, "log", LOG_VERSION)?;
    out.row(log_header(log.n, log.m))?;
    for t in &log.ticks {
        let mut r = vec![num(t.t)];
        r.extend(t.q.iter().chain(&t.dq).chain(&t.u).chain(&t.mu).map(|v| num(*v)));
        r.extend([t.v, t.vdot_fd, t.vdot_pred, t.d1].map(num));
        r.extend(t.d2.iter().chain(&t.d3).map(|v| num(*v)));
        r.push(t.status.as_str().to_string());
        r.push(num(t.solve_us));
        out.row(r)?;
    }
    out.finish()
}

pub fn read_log(path: &Path) -> Result<Table> {
    read_table(path, "log", LOG_VERSION)
}

/// Torso pitch (biped) or the first coordinate (linear chain) against its rate.
pub fn write_phase_portrait(path: &Path, log: &SimLog, coord: usize) -> Result<()> {
    let mut out = CsvOut::create(path, "phase_portrait", PHASE_VERSION)?;
    out.row(["t", "step", "coord", "q", "dq"])?;
    let steps = log.ticks.iter().map(|t| t.step);
    for ((t, q, dq), step) in phase_portrait(log, coord).into_iter().zip(steps) {
        out.row([num(t), step.to_string(), coord.to_string(), num(q), num(dq)])?;
    }
    out.finish()
}

/// `‖η(t)‖` next to the guaranteed bound from `‖η(0)‖`.
pub fn write_envelope(path: &Path, log: &SimLog, clf: &Resclf) -> Result<()> {
    let mut out = CsvOut::create(path, "envelope", ENVELOPE_VERSION)?;
    out.row(["t", "eta_norm", "bound"])?;
    let eta0 = log.ticks.first().map_or(0.0, |t| t.eta_norm);
    for t in &log.ticks {
        out.row([num(t.t), num(t.eta_norm), num(convergence_envelope(clf, t.t, eta0))])?;
    }
    out.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDoc {
    pub index: usize,
    pub duration: f64,
    #[serde(with = "nullable")]
    pub mean_eta: f64,
    #[serde(with = "nullable")]
    pub max_eta: f64,
    #[serde(with = "nullable")]
    pub max_v: f64,
    #[serde(with = "nullable")]
    pub v_end: f64,
    #[serde(with = "nullable")]
    pub poincare_residual: f64,
    pub outcome: String,
}

/// `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryDoc {
    pub schema_version: u32,
    pub scenario: String,
    pub plant: String,
    pub mode: String,
    pub saturation: String,
    pub outcome: String,
    pub outcome_detail: String,
    pub ticks: usize,
    pub steps_attempted: usize,
    pub steps_completed: usize,
    #[serde(with = "nullable")]
    pub mean_eta: f64,
    #[serde(with = "nullable")]
    pub max_eta: f64,
    #[serde(with = "nullable")]
    pub mean_step_eta: f64,
    #[serde(with = "nullable")]
    pub max_v: f64,
    pub frac_closed_form: f64,
    pub frac_optimal: f64,
    pub frac_max_iterations: f64,
    pub frac_infeasible: f64,
    pub frac_clamped: f64,
    pub frac_saturated: f64,
    #[serde(with = "nullable")]
    pub max_abs_d1: f64,
    #[serde(with = "nullable")]
    pub max_d2: f64,
    #[serde(with = "nullable")]
    pub max_d3: f64,
    #[serde(with = "nullable")]
    pub max_bound_violation_optimal: f64,
    #[serde(with = "nullable")]
    pub max_polish: f64,
    #[serde(with = "nullable")]
    pub median_solve_us: f64,
    #[serde(with = "nullable")]
    pub p99_solve_us: f64,
    #[serde(with = "nullable")]
    pub final_poincare_residual: f64,
    pub per_step: Vec<StepDoc>,
}

impl SummaryDoc {
    pub fn new(scenario: &str, plant: &str, mode: &str, saturation: &str, s: &SummaryStats, log: &SimLog) -> Self {
        Self {
            schema_version: SUMMARY_VERSION,
            scenario: scenario.into(),
            plant: plant.into(),
            mode: mode.into(),
            saturation: saturation.into(),
            outcome: s.outcome.clone(),
            outcome_detail: s.outcome_detail.clone(),
            ticks: s.ticks,
            steps_attempted: s.steps_attempted,
            steps_completed: s.steps_completed,
            mean_eta: s.mean_eta,
            max_eta: s.max_eta,
            mean_step_eta: s.mean_step_eta,
            max_v: s.max_v,
            frac_closed_form: s.frac_closed_form,
            frac_optimal: s.frac_optimal,
            frac_max_iterations: s.frac_max_iterations,
            frac_infeasible: s.frac_infeasible,
            frac_clamped: s.frac_clamped,
            frac_saturated: s.frac_saturated,
            max_abs_d1: s.max_abs_d1,
            max_d2: s.max_d2,
            max_d3: s.max_d3,
            max_bound_violation_optimal: s.max_bound_violation_optimal,
            max_polish: s.max_polish,
            median_solve_us: s.median_solve_us,
            p99_solve_us: s.p99_solve_us,
            final_poincare_residual: s.final_poincare_residual,
            per_step: log
                .steps
                .iter()
                .map(|st| StepDoc {
                    index: st.index,
                    duration: st.duration,
                    mean_eta: st.mean_eta,
                    max_eta: st.max_eta,
                    max_v: st.max_v,
                    v_end: st.v_end,
                    poincare_residual: st.poincare_residual,
                    outcome: st.outcome.label().to_string(),
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_versioned(path, "summary", SUMMARY_VERSION)
    }
}

/// One row of `compare.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub scenario: String,
    pub saturation: String,
    pub outcome: String,
    pub steps_completed: usize,
    pub steps_attempted: usize,
    pub mean_eta: f64,
    pub max_eta: f64,
    pub mean_step_eta: f64,
    pub max_v: f64,
    pub frac_saturated: f64,
    pub frac_non_optimal: f64,
    pub max_d1: f64,
    pub max_bound_violation_optimal: f64,
}

pub const COMPARE_HEADER: [&str; 13] = [
    "scenario",
    "saturation",
    "outcome",
    "steps_completed",
    "steps_attempted",
    "mean_eta",
    "max_eta",
    "mean_step_eta",
    "max_v",
    "frac_saturated",
    "frac_non_optimal",
    "max_d1",
    "max_bound_violation_optimal",
];

impl CompareRow {
    pub fn from_summary(s: &SummaryDoc) -> Self {
        Self {
            scenario: s.scenario.clone(),
            saturation: s.saturation.clone(),
            outcome: s.outcome.clone(),
            steps_completed: s.steps_completed,
            steps_attempted: s.steps_attempted,
            mean_eta: s.mean_eta,
            max_eta: s.max_eta,
            mean_step_eta: s.mean_step_eta,
            max_v: s.max_v,
            frac_saturated: s.frac_saturated,
            frac_non_optimal: s.frac_max_iterations + s.frac_infeasible,
            max_d1: s.max_abs_d1,
            max_bound_violation_optimal: s.max_bound_violation_optimal,
        }
    }
}

pub fn write_compare(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut out = CsvOut::create(path, "compare", COMPARE_VERSION)?;
    out.row(COMPARE_HEADER)?;
    for r in rows {
        out.row([
            r.scenario.clone(),
            r.saturation.clone(),
            r.outcome.clone(),
            r.steps_completed.to_string(),
            r.steps_attempted.to_string(),
            num(r.mean_eta),
            num(r.max_eta),
            num(r.mean_step_eta),
            num(r.max_v),
            num(r.frac_saturated),
            num(r.frac_non_optimal),
            num(r.max_d1),
            num(r.max_bound_violation_optimal),
        ])?;
    }
    out.finish()
}

pub fn read_compare(path: &Path) -> Result<Vec<CompareRow>> {
    let t = read_table(path, "compare", COMPARE_VERSION)?;
    if t.header != COMPARE_HEADER {
        return Err(CliError::parse(path, "unexpected compare.csv columns"));
    }
    let f = |s: &str| s.parse::<f64>().map_err(|e| CliError::parse(path, e));
    let u = |s: &str| s.parse::<usize>().map_err(|e| CliError::parse(path, e));
    t.rows
        .iter()
        .map(|r| {
            Ok(CompareRow {
                scenario: r[0].clone(),
                saturation: r[1].clone(),
                outcome: r[2].clone(),
                steps_completed: u(&r[3])?,
                steps_attempted: u(&r[4])?,
                mean_eta: f(&r[5])?,
                max_eta: f(&r[6])?,
                mean_step_eta: f(&r[7])?,
                max_v: f(&r[8])?,
                frac_saturated: f(&r[9])?,
                frac_non_optimal: f(&r[10])?,
                max_d1: f(&r[11])?,
                max_bound_violation_optimal: f(&r[12])?,
            })
        })
        .collect()
}
