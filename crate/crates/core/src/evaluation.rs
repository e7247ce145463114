//! Monte-Carlo campaigns over simulated calibrations and the statistics
//! reported from them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{solve, solve_ils_with_history, Solver, SolverConfig};
use crate::model::{BetaVector, CalibrationParams, Vec3, PARAM_NAMES};
use crate::protocol::g_optimal_protocol;
use crate::simulator::{draw_truth, simulate_observations, trial_rng, SimConfig};

/// Salt separating truth streams from trial streams under one master seed.
const TRUTH_SALT: u64 = 0x7472_7574_6873;

/// Everything that defines a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub sim: SimConfig,
    pub solver_config: SolverConfig,
    pub solver: Solver,
    pub n_truths: usize,
    pub n_trials: usize,
    /// Commanded rotation speed, rad/s.
    pub omega: f64,
}

impl CampaignConfig {
    pub fn new(sim: SimConfig, n_truths: usize, n_trials: usize, omega: f64) -> Self {
        Self {
            sim,
            solver_config: SolverConfig::default(),
            solver: Solver::Ils,
            n_truths,
            n_trials,
            omega,
        }
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_truths == 0 || self.n_trials == 0 {
            return Err(Error::InvalidConfig(
                "n_truths and n_trials must be >= 1".into(),
            ));
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "omega must be > 0, got {}",
                self.omega
            )));
        }
        self.sim.validate()?;
        self.solver_config.validate()
    }

    /// RNG stream of truth `t`.
    pub fn truth(&self, t: usize) -> CalibrationParams {
        draw_truth(&self.sim, &mut trial_rng(self.sim.seed ^ TRUTH_SALT, t as u64))
    }

    /// Simulated observations of trial `r` on truth `t`.
    pub fn trial_observations(
        &self,
        truth: &CalibrationParams,
        t: usize,
        r: usize,
    ) -> Result<crate::estimator::ObservationSet> {
        let protocol = g_optimal_protocol(self.omega, self.sim.sample_rate)?;
        let stream = (t * self.n_trials + r) as u64;
        simulate_observations(truth, &protocol, &self.sim, &mut trial_rng(self.sim.seed, stream))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub truth_index: usize,
    pub trial_index: usize,
    pub truth: CalibrationParams,
    /// `None` when the solver failed.
    pub estimate: Option<CalibrationParams>,
    pub iterations: usize,
    pub converged: bool,
    pub solver: Solver,
}

impl TrialRecord {
    /// `estimate - truth` per parameter, when converged.
    pub fn errors(&self) -> Option<[f64; 6]> {
        let e = self.estimate?.to_array();
        let t = self.truth.to_array();
        Some(std::array::from_fn(|j| e[j] - t[j]))
    }
}

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub name: String,
    pub quantiles: Quantiles,
    pub mse: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Asymptotic standard error of the median, `sqrt(pi/2) * sd / sqrt(n)`.
    pub median_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: CampaignConfig,
    pub trials: usize,
    pub converged: usize,
    pub failed: usize,
    /// In `kx, ky, kz, bx, by, bz` order.
    pub parameters: Vec<ParamStats>,
    pub iteration_histogram: BTreeMap<usize, usize>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl MonteCarloReport {
    pub fn mse(&self) -> [f64; 6] {
        std::array::from_fn(|j| self.parameters[j].mse)
    }

    /// Mean MSE over the three scale factors.
    pub fn scale_mse(&self) -> f64 {
        self.parameters[..3].iter().map(|p| p.mse).sum::<f64>() / 3.0
    }

    /// Mean MSE over the three biases.
    pub fn bias_mse(&self) -> f64 {
        self.parameters[3..].iter().map(|p| p.mse).sum::<f64>() / 3.0
    }

    /// Errors of parameter `j` over converged trials, in trial order.
    pub fn errors_of(&self, j: usize) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.errors()).map(|e| e[j]).collect()
    }

    /// Fraction of converged errors of the given parameters inside `±band`.
    pub fn fraction_within(&self, params: &[usize], band: f64) -> f64 {
        let mut inside = 0usize;
        let mut total = 0usize;
        for e in self.records.iter().filter_map(|r| r.errors()) {
            for &j in params {
                total += 1;
                inside += usize::from(e[j].abs() <= band);
            }
        }
        if total == 0 {
            0.0
        } else {
            inside as f64 / total as f64
        }
    }
}

/// Per-parameter mean squared error over converged records.
pub fn mse(records: &[TrialRecord]) -> Result<[f64; 6]> {
    let errors: Vec<[f64; 6]> = records.iter().filter_map(|r| r.errors()).collect();
    if errors.is_empty() {
        return Err(Error::InvalidConfig("no converged records".into()));
    }
    let n = errors.len() as f64;
    Ok(std::array::from_fn(|j| {
        errors.iter().map(|e| e[j] * e[j]).sum::<f64>() / n
    }))
}

fn run_trial(cfg: &CampaignConfig, truth: &CalibrationParams, t: usize, r: usize) -> TrialRecord {
    let outcome = cfg
        .trial_observations(truth, t, r)
        .and_then(|obs| solve(&obs, &cfg.solver_config, cfg.solver));
    let (estimate, iterations, converged) = match outcome {
        Ok(res) => (Some(res.params), res.iterations, res.converged),
        Err(Error::NotConverged { iterations, .. }) => (None, iterations, false),
        Err(_) => (None, 0, false),
    };
    TrialRecord {
        truth_index: t,
        trial_index: r,
        truth: *truth,
        estimate,
        iterations,
        converged,
        solver: cfg.solver,
    }
}

/// Runs `n_truths x n_trials` independent simulated calibrations.
///
/// Each trial owns an RNG stream derived from the master seed and its
/// index, and results are collected in index order, so the report does not
/// depend on how trials are scheduled. Solver failures are counted, not
/// propagated.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let truths: Vec<CalibrationParams> = (0..cfg.n_truths).map(|t| cfg.truth(t)).collect();
    let records: Vec<TrialRecord> = (0..cfg.n_truths * cfg.n_trials)
        .into_par_iter()
        .map(|i| {
            let (t, r) = (i / cfg.n_trials, i % cfg.n_trials);
            run_trial(cfg, &truths[t], t, r)
        })
        .collect();
    Ok(summarize(*cfg, records))
}

/// Aggregates trial records into a report.
pub fn summarize(config: CampaignConfig, records: Vec<TrialRecord>) -> MonteCarloReport {
    let errors: Vec<[f64; 6]> = records.iter().filter_map(|r| r.errors()).collect();
    let n = errors.len() as f64;
    let parameters = (0..6)
        .map(|j| {
            let col: Vec<f64> = errors.iter().map(|e| e[j]).collect();
            let quantiles = Quantiles::of(&col).unwrap_or(Quantiles {
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
            });
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            let std_dev = var.sqrt();
            ParamStats {
                name: PARAM_NAMES[j].to_string(),
                quantiles,
                mse: col.iter().map(|v| v * v).sum::<f64>() / n,
                mean,
                std_dev,
                median_se: (std::f64::consts::PI / 2.0).sqrt() * std_dev / n.sqrt(),
            }
        })
        .collect();
    let mut iteration_histogram = BTreeMap::new();
    for r in records.iter().filter(|r| r.converged) {
        *iteration_histogram.entry(r.iterations).or_insert(0) += 1;
    }
    let converged = errors.len();
    MonteCarloReport {
        config,
        trials: records.len(),
        converged,
        failed: records.len() - converged,
        parameters,
        iteration_histogram,
        records,
    }
}

/// `0.3, 0.4, .., 3.0` rad/s.
pub fn default_speed_grid() -> Vec<f64> {
    (3..=30).map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: f64,
    pub report: MonteCarloReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega).collect()
    }

    pub fn scale_mse(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.report.scale_mse()).collect()
    }

    pub fn bias_mse(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.report.bias_mse()).collect()
    }
}

/// One campaign per grid speed. Every point reuses the same master seed, so
/// the same truths appear along the whole grid.
pub fn speed_sweep(cfg: &CampaignConfig, grid: &[f64]) -> Result<SweepReport> {
    if grid.is_empty() || grid.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidConfig("speed grid must be non-empty and positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("speed grid must be strictly increasing".into()));
    }
    let points = grid
        .iter()
        .map(|&omega| {
            let point = CampaignConfig { omega, ..*cfg };
            Ok(SweepPoint {
                omega,
                report: run_campaign(&point)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { points })
}

/// Ground truths of the three convergence regimes: high gain error, high
/// bias, and both.
pub fn convergence_cases() -> [CalibrationParams; 3] {
    [
        CalibrationParams {
            scale: Vec3::new(1.9074, 1.9529, 1.5635),
            bias: Vec3::new(0.0827, 0.0265, -0.0805),
        },
        CalibrationParams {
            scale: Vec3::new(1.0979, 1.1052, 0.9851),
            bias: Vec3::new(-0.1046, 0.1995, 0.1565),
        },
        CalibrationParams {
            scale: Vec3::new(1.5044, 1.6494, 1.5282),
            bias: Vec3::new(0.1483, -0.1282, 0.1794),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub truth: CalibrationParams,
    /// `beta^(1), beta^(2), ..` with `beta0` set to the gamma used for each.
    pub betas: Vec<BetaVector>,
    /// Parameters implied by each iterate.
    pub params: Vec<CalibrationParams>,
    pub iterations: usize,
    /// First iterate after which no parameter moves by more than `5e-5`
    /// (stable at four decimals).
    pub stable_at_four_decimals: usize,
}

/// Simulates one protocol run per case and traces the iterative solver.
pub fn convergence_study(
    cases: &[(CalibrationParams, SimConfig)],
    omega: f64,
    solver_config: &SolverConfig,
) -> Result<Vec<ConvergenceRow>> {
    cases
        .iter()
        .enumerate()
        .map(|(i, (truth, sim))| {
            let protocol = g_optimal_protocol(omega, sim.sample_rate)?;
            let obs = simulate_observations(truth, &protocol, sim, &mut trial_rng(sim.seed, i as u64))?;
            let (res, betas) = solve_ils_with_history(&obs, solver_config)?;
            let params = betas
                .iter()
                .map(|b| BetaVector::from_free(b.free())?.to_params())
                .collect::<Result<Vec<_>>>()?;
            let stable = params
                .windows(2)
                .position(|w| {
                    w[0].to_array()
                        .iter()
                        .zip(w[1].to_array())
                        .all(|(a, b)| (a - b).abs() <= 5e-5)
                })
                .map_or(params.len(), |p| p + 1);
            Ok(ConvergenceRow {
                truth: *truth,
                betas,
                params,
                iterations: res.iterations,
                stable_at_four_decimals: stable,
            })
        })
        .collect()
}

/// Per-axis mean squared error of raw and corrected readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter {
    pub before: Vec3,
    pub after: Vec3,
}

impl BeforeAfter {
    /// `before / after` per axis.
    pub fn ratio(&self) -> Vec3 {
        self.before.component_div(&self.after)
    }
}

pub fn before_after_metrics(actual: &[Vec3], raw: &[Vec3], calibrated: &[Vec3]) -> Result<BeforeAfter> {
    if actual.is_empty() || actual.len() != raw.len() || actual.len() != calibrated.len() {
        return Err(Error::InvalidConfig(format!(
            "series must be non-empty and aligned, got {}/{}/{}",
            actual.len(),
            raw.len(),
            calibrated.len()
        )));
    }
    let n = actual.len() as f64;
    let mse = |series: &[Vec3]| {
        series
            .iter()
            .zip(actual)
            .fold(Vec3::zeros(), |acc, (s, a)| acc + (s - a).component_mul(&(s - a)))
            / n
    };
    Ok(BeforeAfter {
        before: mse(raw),
        after: mse(calibrated),
    })
}

/// Largest per-parameter difference between the two solvers over
/// `n_datasets` shared simulated datasets (trials of truth 0..).
pub fn solver_agreement(cfg: &CampaignConfig, n_datasets: usize) -> Result<[f64; 6]> {
    cfg.validate()?;
    let diffs = (0..n_datasets)
        .into_par_iter()
        .map(|i| {
            let t = i / cfg.n_trials.max(1);
            let truth = cfg.truth(t);
            let obs = cfg.trial_observations(&truth, t, i % cfg.n_trials.max(1))?;
            let a = solve(&obs, &cfg.solver_config, Solver::Ils)?.params.to_array();
            let b = solve(&obs, &cfg.solver_config, Solver::Lm)?.params.to_array();
            Ok(std::array::from_fn::<f64, 6, _>(|j| (a[j] - b[j]).abs()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(diffs.iter().fold([0.0; 6], |acc, d| {
        std::array::from_fn(|j| acc[j].max(d[j]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(truth: CalibrationParams, estimate: CalibrationParams) -> TrialRecord {
        TrialRecord {
            truth_index: 0,
            trial_index: 0,
            truth,
            estimate: Some(estimate),
            iterations: 2,
            converged: true,
            solver: Solver::Ils,
        }
    }

    #[test]
    fn mse_of_exact_estimate_is_zero() {
        let p = CalibrationParams::identity();
        assert_eq!(mse(&[record(p, p)]).unwrap(), [0.0; 6]);
    }

    #[test]
    fn mse_of_symmetric_pair() {
        let p = CalibrationParams::identity();
        let e = 3e-3;
        let mut up = p;
        up.scale.x += e;
        let mut down = p;
        down.scale.x -= e;
        let m = mse(&[record(p, up), record(p, down)]).unwrap();
        assert_abs_diff_eq!(m[0], e * e, epsilon = 1e-18);
        assert_eq!(&m[1..], &[0.0; 5]);
    }

    #[test]
    fn mse_rejects_empty() {
        assert!(mse(&[]).is_err());
        let mut r = record(CalibrationParams::identity(), CalibrationParams::identity());
        r.estimate = None;
        r.converged = false;
        assert!(mse(&[r]).is_err());
    }

    #[test]
    fn quantiles_of_small_sets() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = Quantiles::of(&[1.0, 2.0]).unwrap();
        assert_eq!(q.median, 1.5);
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn noiseless_campaign_is_exact() {
        let mut cfg = CampaignConfig::new(SimConfig::noiseless().with_seed(5), 3, 4, 1.0);
        // the default 1e-6 step tolerance leaves ~1e-9 on the gains
        cfg.solver_config.tolerance = 1e-13;
        let rep = run_campaign(&cfg).unwrap();
        assert_eq!(rep.trials, 12);
        assert_eq!(rep.failed, 0);
        for p in &rep.parameters {
            assert!(p.quantiles.min.abs() < 1e-9 && p.quantiles.max.abs() < 1e-9);
            assert!(p.mse < 1e-18);
        }
    }

    #[test]
    fn campaign_mse_matches_recomputation() {
        let cfg = CampaignConfig::new(SimConfig::default().with_seed(9), 2, 10, 1.0);
        let rep = run_campaign(&cfg).unwrap();
        let direct = mse(&rep.records).unwrap();
        // independent recomputation straight from the raw records
        #[allow(clippy::needless_range_loop)]
        for j in 0..6 {
            let mut sum = 0.0;
            let mut n = 0.0;
            for r in &rep.records {
                let e = r.estimate.unwrap().to_array()[j] - r.truth.to_array()[j];
                sum += e * e;
                n += 1.0;
            }
            assert_abs_diff_eq!(rep.parameters[j].mse, sum / n, epsilon = 1e-18);
            assert_abs_diff_eq!(direct[j], sum / n, epsilon = 1e-18);
        }
        let ordered = rep.parameters.iter().all(|p| {
            let q = p.quantiles;
            q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max
        });
        assert!(ordered);
    }

    #[test]
    fn campaign_is_deterministic() {
        let cfg = CampaignConfig::new(SimConfig::default().with_seed(77), 2, 5, 1.0);
        let a = run_campaign(&cfg).unwrap();
        let b = run_campaign(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn sweep_validates_grid() {
        let cfg = CampaignConfig::new(SimConfig::noiseless(), 1, 1, 1.0);
        assert!(speed_sweep(&cfg, &[1.0, 1.0]).is_err());
        assert!(speed_sweep(&cfg, &[0.0, 1.0]).is_err());
        assert!(speed_sweep(&cfg, &[]).is_err());
        let rep = speed_sweep(&cfg, &[0.5, 1.0]).unwrap();
        assert_eq!(rep.omegas(), [0.5, 1.0]);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_speed_grid();
        assert_eq!(g.len(), 28);
        assert_eq!(g[0], 0.3);
        assert_eq!(g[7], 1.0);
        assert_eq!(*g.last().unwrap(), 3.0);
    }

    #[test]
    fn identity_convergence_is_immediate() {
        let rows = convergence_study(
            &[(CalibrationParams::identity(), SimConfig::noiseless())],
            1.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(rows[0].iterations <= 2);
        assert_eq!(rows[0].params.len(), rows[0].iterations);
    }

    #[test]
    fn before_after_cases() {
        let actual = vec![Vec3::new(1.0, -1.0, 0.5); 4];
        let raw: Vec<Vec3> = actual.iter().map(|a| a * 1.1).collect();
        let m = before_after_metrics(&actual, &raw, &actual).unwrap();
        assert_eq!(m.after, Vec3::zeros());
        assert!(m.before.x > 0.0);
        let same = before_after_metrics(&actual, &raw, &raw).unwrap();
        assert_eq!(same.before, same.after);
        assert!(before_after_metrics(&actual, &raw[..3], &actual).is_err());
    }
}
