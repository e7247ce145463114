//! File formats: sample logs, protocol sidecars, run configs and reports.
//!
//! Sample logs are CSV with the header `obs_id,t,mx,my,mz`: `obs_id` is the
//! protocol step (`-1` for pauses), `t` is seconds and the rates are rad/s
//! unless read or written with [`Units::Deg`]. Floats are written in the
//! shortest form that parses back to the same `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, Solver, SolverConfig};
use crate::evaluation::{ConvergenceRow, MonteCarloReport, SweepReport};
use crate::model::{BetaVector, CalibrationParams, GyroSample, Vec3, PARAM_NAMES};
use crate::protocol::{g_optimal_protocol, Protocol, SegmentationConfig};
use crate::simulator::SimConfig;

pub const LOG_HEADER: [&str; 5] = ["obs_id", "t", "mx", "my", "mz"];

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Unit of angular rates in logs and protocol sidecars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Rad,
    Deg,
}

impl Units {
    /// Multiplier taking a value in these units to rad/s.
    pub fn to_rad(self) -> f64 {
        match self {
            Units::Rad => 1.0,
            Units::Deg => std::f64::consts::PI / 180.0,
        }
    }
}

impl FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rad" => Ok(Units::Rad),
            "deg" => Ok(Units::Deg),
            _ => Err(Error::Parse(format!("unknown units {s:?} (expected rad or deg)"))),
        }
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ils" => Ok(Solver::Ils),
            "lm" => Ok(Solver::Lm),
            _ => Err(Error::Parse(format!("unknown solver {s:?} (expected ils or lm)"))),
        }
    }
}

/// A sample stream with its per-sample `obs_id` labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleLog {
    pub samples: Vec<GyroSample>,
    pub labels: Vec<i64>,
}

impl SampleLog {
    /// True when no sample carries a step label.
    pub fn is_unlabeled(&self) -> bool {
        self.labels.iter().all(|&l| l < 0)
    }
}

pub fn write_log<W: Write>(w: W, log: &SampleLog, units: Units) -> Result<()> {
    if log.samples.len() != log.labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} labels for {} samples",
            log.labels.len(),
            log.samples.len()
        )));
    }
    let scale = units.to_rad();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LOG_HEADER)?;
    for (s, id) in log.samples.iter().zip(&log.labels) {
        let m = s.m / scale;
        out.write_record([
            id.to_string(),
            s.t.to_string(),
            m.x.to_string(),
            m.y.to_string(),
            m.z.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a sample log. A log that does not end with a newline is taken to
/// be truncated and rejected, since its last row may be cut mid-number.
pub fn read_log<R: Read>(mut r: R, units: Units) -> Result<SampleLog> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        return Err(Error::Parse("log ends mid-line (truncated?)".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(LOG_HEADER) {
        return Err(Error::Parse(format!(
            "log header must be `{}`, found `{}`",
            LOG_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let scale = units.to_rad();
    let mut log = SampleLog::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing field {}", LOG_HEADER[i])))
        };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = field(i)?.parse().map_err(|_| {
                Error::Parse(format!("line {line}: bad {} value {:?}", LOG_HEADER[i], rec.get(i)))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("line {line}: non-finite {}", LOG_HEADER[i])));
            }
            Ok(v)
        };
        let id: i64 = field(0)?
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad obs_id {:?}", rec.get(0))))?;
        if id < -1 {
            return Err(Error::Parse(format!("line {line}: obs_id {id} < -1")));
        }
        log.labels.push(id);
        log.samples.push(GyroSample::new(
            num(1)?,
            Vec3::new(num(2)?, num(3)?, num(4)?) * scale,
        ));
    }
    if log.samples.is_empty() {
        return Err(Error::Parse("log has no samples".into()));
    }
    Ok(log)
}

pub fn read_log_file(path: &Path, units: Units) -> Result<SampleLog> {
    read_log(BufReader::new(File::open(path)?), units)
}

pub fn write_log_file(path: &Path, log: &SampleLog, units: Units) -> Result<()> {
    write_log(BufWriter::new(File::create(path)?), log, units)
}

/// Parses JSON, reporting line and column on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    from_json_str(&text, &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Protocol sidecar with commanded speeds in `units`.
pub fn read_protocol_file(path: &Path, units: Units) -> Result<Protocol> {
    let p: Protocol = read_json_file(path)?;
    let mut p = p;
    for s in &mut p.steps {
        s.omega *= units.to_rad();
    }
    p.validate()?;
    Ok(p)
}

pub fn write_protocol_file(path: &Path, protocol: &Protocol, units: Units) -> Result<()> {
    let mut p = protocol.clone();
    for s in &mut p.steps {
        s.omega /= units.to_rad();
    }
    write_json_file(path, &p)
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Options for every command. Unknown keys are rejected; omitted keys take
/// their defaults. Config files are always in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Commanded speed of the default protocol, rad/s.
    pub omega: f64,
    /// Explicit protocol, overriding `omega`.
    pub protocol: Option<Protocol>,
    pub method: Solver,
    pub solver: SolverConfig,
    pub sim: SimConfig,
    /// Simulated sensor; drawn from `sim` when absent.
    pub truth: Option<CalibrationParams>,
    /// Write simulated logs with every `obs_id` set to `-1`.
    pub unlabeled: bool,
    pub segmentation: SegmentationConfig,
    /// Estimate the reading noise variance from pause samples and remove it
    /// from the squared regressors before solving.
    pub noise_correction: bool,
    pub n_truths: usize,
    pub n_trials: usize,
    /// Sweep speeds, rad/s; `0.3..=3.0` step `0.1` when absent.
    pub grid: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            protocol: None,
            method: Solver::Ils,
            solver: SolverConfig::default(),
            sim: SimConfig::default(),
            truth: None,
            unlabeled: false,
            segmentation: SegmentationConfig::default(),
            noise_correction: true,
            n_truths: 30,
            n_trials: 500,
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = from_json_str(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidConfig(format!("omega must be > 0, got {}", self.omega)));
        }
        if let Some(p) = &self.protocol {
            p.validate()?;
        }
        if let Some(t) = &self.truth {
            t.validate()?;
        }
        if self.n_truths == 0 || self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_truths and n_trials must be >= 1".into()));
        }
        self.solver.validate()?;
        self.sim.validate()
    }

    /// The explicit protocol, or the six-step protocol at `omega`.
    pub fn resolved_protocol(&self) -> Result<Protocol> {
        match &self.protocol {
            Some(p) => Ok(p.clone()),
            None => g_optimal_protocol(self.omega, self.sim.sample_rate),
        }
    }

    pub fn hash(&self) -> Result<String> {
        Ok(config_hash(&serde_json::to_vec(self)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub tool_version: String,
}

/// Output of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: CalibrationParams,
    pub beta: BetaVector,
    pub iterations: usize,
    pub converged: bool,
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub meta: ReportMeta,
}

impl CalibrationReport {
    pub fn new(result: &EstimationResult, residuals: Vec<f64>, meta: ReportMeta) -> Self {
        Self {
            params: result.params,
            beta: result.beta,
            iterations: result.iterations,
            converged: result.converged,
            cost: result.final_cost,
            residuals,
            meta,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["param", "value"])?;
        for (name, v) in PARAM_NAMES.iter().zip(self.params.to_array()) {
            out.write_record([name.to_string(), v.to_string()])?;
        }
        for (i, v) in self.beta.0.iter().enumerate() {
            out.write_record([format!("beta{i}"), v.to_string()])?;
        }
        out.write_record(["iterations".into(), self.iterations.to_string()])?;
        out.write_record(["converged".into(), self.converged.to_string()])?;
        out.write_record(["cost".into(), self.cost.to_string()])?;
        out.flush()?;
        Ok(())
    }
}

/// Ground truth written next to a simulated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub params: CalibrationParams,
    /// Mounted rotation axis per nominal axis.
    pub axes: [[f64; 3]; 3],
    pub seed: u64,
}

/// One row per trial per parameter.
pub fn write_records_csv<W: Write>(w: W, report: &MonteCarloReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "truth_index", "trial", "solver", "param", "truth", "estimate", "error", "iterations", "converged",
    ])?;
    for r in &report.records {
        let truth = r.truth.to_array();
        let est = r.estimate.map(|e| e.to_array());
        for (j, name) in PARAM_NAMES.iter().enumerate() {
            let (e, err) = match est {
                Some(e) => (e[j].to_string(), (e[j] - truth[j]).to_string()),
                None => (String::new(), String::new()),
            };
            out.write_record([
                r.truth_index.to_string(),
                r.trial_index.to_string(),
                r.solver.to_string(),
                name.to_string(),
                truth[j].to_string(),
                e,
                err,
                r.iterations.to_string(),
                r.converged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per speed per parameter.
pub fn write_sweep_csv<W: Write>(w: W, sweep: &SweepReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["omega", "param", "mse", "min", "q1", "median", "q3", "max", "converged", "trials"])?;
    for p in &sweep.points {
        for s in &p.report.parameters {
            let q = s.quantiles;
            out.write_record([
                p.omega.to_string(),
                s.name.clone(),
                s.mse.to_string(),
                q.min.to_string(),
                q.q1.to_string(),
                q.median.to_string(),
                q.q3.to_string(),
                q.max.to_string(),
                p.report.converged.to_string(),
                p.report.trials.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per case per iterate.
pub fn write_convergence_csv<W: Write>(w: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["case".to_string(), "iteration".into(), "gamma".into()];
    header.extend((1..7).map(|i| format!("beta{i}")));
    header.extend(PARAM_NAMES.iter().map(|s| s.to_string()));
    out.write_record(&header)?;
    for (c, row) in rows.iter().enumerate() {
        for (i, (b, p)) in row.betas.iter().zip(&row.params).enumerate() {
            let mut rec = vec![c.to_string(), (i + 1).to_string()];
            rec.extend(b.0.iter().map(f64::to_string));
            rec.extend(p.to_array().iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Flag threshold of [`compare_reports`].
pub const AGREEMENT_BAR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDelta {
    pub param: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub threshold: f64,
    pub deltas: Vec<ParamDelta>,
    pub flagged: usize,
}

/// Per-parameter `b - a`, flagging `|delta| >= 1e-3`.
pub fn compare_reports(a: &CalibrationReport, b: &CalibrationReport) -> Comparison {
    let (pa, pb) = (a.params.to_array(), b.params.to_array());
    let deltas: Vec<ParamDelta> = PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let delta = pb[j] - pa[j];
            ParamDelta {
                param: name.to_string(),
                a: pa[j],
                b: pb[j],
                delta,
                flagged: delta.abs() >= AGREEMENT_BAR,
            }
        })
        .collect();
    Comparison {
        threshold: AGREEMENT_BAR,
        flagged: deltas.iter().filter(|d| d.flagged).count(),
        deltas,
    }
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["param", "a", "b", "delta", "flagged"])?;
        for d in &self.deltas {
            out.write_record([
                d.param.clone(),
                d.a.to_string(),
                d.b.to_string(),
                d.delta.to_string(),
                d.flagged.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `dir/stem.suffix` next to `path`, e.g. `run.truth.json` for `run.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}
