//! Commands behind the `gyrocal` binary.
//!
//! Every command is a plain function of a [`RunConfig`] (plus paths) so it
//! can be driven from code as well as from the command line. Outputs contain
//! no timestamps or host details: the same config and seed always produce
//! the same bytes.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::{residuals, solve};
use crate::evaluation::{
    convergence_cases, convergence_study, default_speed_grid, run_campaign, speed_sweep, CampaignConfig,
    ConvergenceRow, MonteCarloReport, SweepReport,
};
use crate::io::{
    compare_reports, read_json_file, read_log_file, read_protocol_file, sibling, to_json_string,
    write_convergence_csv, write_json_file, write_log_file, write_protocol_file, write_records_csv,
    write_sweep_csv, CalibrationReport, Comparison, ReportMeta, RunConfig, SampleLog, TruthRecord, Units,
    TOOL_VERSION,
};
use crate::model::GyroSample;
use crate::protocol::{segment_log, stationary_noise_variance, DWELL_LABEL};
use crate::simulator::{draw_truth, simulate_protocol_run, trial_rng};

/// Exit status when `compare --strict` finds a flagged delta.
pub const EXIT_DISAGREEMENT: i32 = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Files written by [`cmd_simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub log: PathBuf,
    pub truth: PathBuf,
    pub protocol: PathBuf,
}

/// Simulates one protocol execution and writes the sample log, the truth
/// record (`<stem>.truth.json`) and the protocol sidecar
/// (`<stem>.protocol.json`). Rates in the log and sidecar are in `units`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path, units: Units) -> Result<SimulateOutput> {
    cfg.validate()?;
    let protocol = cfg.resolved_protocol()?;
    let mut sim = cfg.sim;
    sim.sample_rate = protocol.sample_rate;
    let mut rng = trial_rng(sim.seed, 0);
    let truth = cfg.truth.unwrap_or_else(|| draw_truth(&sim, &mut rng));
    let run = simulate_protocol_run(&truth, &protocol, &sim, &mut rng)?;

    let labels = if cfg.unlabeled {
        vec![DWELL_LABEL; run.labels.len()]
    } else {
        run.labels
    };
    let log = SampleLog {
        samples: run.stream,
        labels,
    };
    let output = SimulateOutput {
        log: out.to_path_buf(),
        truth: sibling(out, "truth.json"),
        protocol: sibling(out, "protocol.json"),
    };
    write_log_file(&output.log, &log, units)?;
    write_json_file(
        &output.truth,
        &TruthRecord {
            params: truth,
            axes: run.axes.map(|a| [a.x, a.y, a.z]),
            seed: sim.seed,
        },
    )?;
    write_protocol_file(&output.protocol, &protocol, units)?;
    Ok(output)
}

/// Pause runs with `margin` samples trimmed from both ends, so that edge
/// samples of a mis-detected rotation do not leak into the noise estimate.
fn trimmed(ranges: Vec<Range<usize>>, margin: usize) -> impl Iterator<Item = Range<usize>> {
    ranges
        .into_iter()
        .filter(move |r| r.len() > 2 * margin + 1)
        .map(move |r| r.start + margin..r.end - margin)
}

/// Calibrates from a sample log.
///
/// The protocol comes from `protocol_path`, else from `<stem>.protocol.json`
/// beside the log when present, else from the config. Labelled logs are
/// split by `obs_id`; unlabelled logs by motion. With `noise_correction`
/// the reading variance measured during pauses is removed from the squared
/// regressors.
pub fn cmd_calibrate(
    log_path: &Path,
    protocol_path: Option<&Path>,
    cfg: &RunConfig,
    units: Units,
) -> Result<CalibrationReport> {
    cfg.validate()?;
    let log = read_log_file(log_path, units)?;
    let beside = sibling(log_path, "protocol.json");
    let protocol = match protocol_path {
        Some(p) => read_protocol_file(p, units)?,
        None if beside.is_file() => read_protocol_file(&beside, units)?,
        None => cfg.resolved_protocol()?,
    };
    let segmented = segment_log(&log.samples, &protocol, Some(&log.labels), &cfg.segmentation)?;

    let noise = if cfg.noise_correction {
        let margin = (cfg.segmentation.max_gap * protocol.sample_rate).ceil() as usize;
        let runs: Vec<&[GyroSample]> = trimmed(segmented.gaps(log.samples.len()), margin)
            .map(|r| &log.samples[r])
            .collect();
        stationary_noise_variance(runs)
    } else {
        None
    };
    let obs = segmented.observations(&protocol, noise.as_ref())?;
    let result = solve(&obs, &cfg.solver, cfg.method)?;
    if !result.converged {
        return Err(Error::NotConverged {
            iterations: result.iterations,
            last_step: f64::NAN,
        });
    }
    let meta = ReportMeta {
        seed: None,
        config_hash: cfg.hash()?,
        tool_version: TOOL_VERSION.into(),
    };
    Ok(CalibrationReport::new(&result, residuals(&result.beta, &obs)?, meta))
}

fn campaign(cfg: &RunConfig) -> CampaignConfig {
    CampaignConfig {
        sim: cfg.sim,
        solver_config: cfg.solver,
        solver: cfg.method,
        n_truths: cfg.n_truths,
        n_trials: cfg.n_trials,
        omega: cfg.omega,
    }
}

pub fn cmd_montecarlo(cfg: &RunConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    run_campaign(&campaign(cfg))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let grid = cfg.grid.clone().unwrap_or_else(default_speed_grid);
    speed_sweep(&campaign(cfg), &grid)
}

pub fn cmd_compare(a: &Path, b: &Path) -> Result<Comparison> {
    let ra: CalibrationReport = read_json_file(a)?;
    let rb: CalibrationReport = read_json_file(b)?;
    Ok(compare_reports(&ra, &rb))
}

/// Traces the iterative solver on the three high-gain / high-bias truths.
pub fn cmd_convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    let cases: Vec<_> = convergence_cases().into_iter().map(|t| (t, cfg.sim)).collect();
    convergence_study(&cases, cfg.omega, &cfg.solver)
}

/// A command with its positional arguments.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate,
    Calibrate { log: PathBuf, protocol: Option<PathBuf> },
    Montecarlo,
    Sweep,
    Compare { a: PathBuf, b: PathBuf, strict: bool },
    Convergence,
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub config: RunConfig,
    pub units: Units,
    pub format: Format,
    /// Output file; stdout when absent (except `simulate`, which needs a
    /// path and defaults to `gyro_log.csv`).
    pub out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    emit(out, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Runs a command and returns the process exit status.
pub fn run(cmd: &Command, opts: &Options) -> Result<i32> {
    let cfg = &opts.config;
    let out = opts.out.as_deref();
    let csv = opts.format == Format::Csv;
    match cmd {
        Command::Simulate => {
            let path = out.unwrap_or(Path::new("gyro_log.csv"));
            let written = cmd_simulate(cfg, path, opts.units)?;
            eprintln!(
                "wrote {}, {}, {}",
                written.log.display(),
                written.truth.display(),
                written.protocol.display()
            );
        }
        Command::Calibrate { log, protocol } => {
            let report = cmd_calibrate(log, protocol.as_deref(), cfg, opts.units)?;
            if csv {
                emit(out, |w| report.write_csv(w))?;
            } else {
                emit_json(out, &report)?;
            }
        }
        Command::Montecarlo => {
            let report = cmd_montecarlo(cfg)?;
            if csv {
                emit(out, |w| write_records_csv(w, &report))?;
            } else {
                emit_json(out, &report)?;
            }
        }
        Command::Sweep => {
            let report = cmd_sweep(cfg)?;
            if csv {
                emit(out, |w| write_sweep_csv(w, &report))?;
            } else {
                emit_json(out, &report)?;
            }
        }
        Command::Compare { a, b, strict } => {
            let cmp = cmd_compare(a, b)?;
            if csv {
                emit(out, |w| cmp.write_csv(w))?;
            } else {
                emit_json(out, &cmp)?;
            }
            if *strict && cmp.flagged > 0 {
                return Ok(EXIT_DISAGREEMENT);
            }
        }
        Command::Convergence => {
            let rows = cmd_convergence(cfg)?;
            if csv {
                emit(out, |w| write_convergence_csv(w, &rows))?;
            } else {
                emit_json(out, &rows)?;
            }
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CalibrationParams;
    use crate::simulator::SimConfig;
    use crate::Vec3;

    fn lsm_like() -> CalibrationParams {
        CalibrationParams::new(Vec3::new(1.18, 1.16, 1.14), Vec3::new(0.008, -0.010, -0.004)).unwrap()
    }

    #[test]
    fn noiseless_simulate_then_calibrate_recovers_truth() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            sim: SimConfig::noiseless().with_seed(4),
            truth: Some(lsm_like()),
            ..RunConfig::default()
        };
        cfg.solver.tolerance = 1e-13;
        let path = dir.path().join("run.csv");
        cmd_simulate(&cfg, &path, Units::Rad).unwrap();
        let rep = cmd_calibrate(&path, None, &cfg, Units::Rad).unwrap();
        for (a, b) in rep.params.to_array().iter().zip(lsm_like().to_array()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn unlabeled_log_calibrates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            sim: SimConfig::default().with_seed(2),
            truth: Some(lsm_like()),
            unlabeled: true,
            ..RunConfig::default()
        };
        let path = dir.path().join("u.csv");
        cmd_simulate(&cfg, &path, Units::Rad).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().skip(1).all(|l| l.starts_with("-1,")));
        let rep = cmd_calibrate(&path, None, &cfg, Units::Rad).unwrap();
        for (a, b) in rep.params.to_array().iter().zip(lsm_like().to_array()) {
            assert!((a - b).abs() < 2e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn degree_logs_calibrate_like_radian_logs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            sim: SimConfig::default().with_seed(6),
            truth: Some(lsm_like()),
            ..RunConfig::default()
        };
        let rad = dir.path().join("r.csv");
        let deg = dir.path().join("d.csv");
        cmd_simulate(&cfg, &rad, Units::Rad).unwrap();
        cmd_simulate(&cfg, &deg, Units::Deg).unwrap();
        let a = cmd_calibrate(&rad, None, &cfg, Units::Rad).unwrap();
        let b = cmd_calibrate(&deg, None, &cfg, Units::Deg).unwrap();
        for (x, y) in a.params.to_array().iter().zip(b.params.to_array()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_segment_is_a_segmentation_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let path = dir.path().join("m.csv");
        cmd_simulate(&cfg, &path, Units::Rad).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("5,")).collect();
        std::fs::write(&path, kept.join("\n") + "\n").unwrap();
        let err = cmd_calibrate(&path, None, &cfg, Units::Rad).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn trimmed_drops_edges() {
        let r: Vec<_> = trimmed(vec![0..10, 20..22], 2).collect();
        assert_eq!(r, vec![2..8]);
    }
}
