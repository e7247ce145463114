//! Least-squares estimation of the six calibration parameters from averaged
//! observations.
//!
//! Each observation supplies one row of the regression
//!
//! ```text
//! y = beta0 + beta1 x1 + beta2 x2 + beta3 x3 + beta4 x4 + beta5 x5 + beta6 x6
//! ```
//!
//! with `x1..x3` the mean squared readings, `x4..x6` the mean readings and
//! `y` the squared rotation speed. `beta0` is tied to the other six
//! coefficients, so the problem is nonlinear. [`solve_ils`] handles that
//! constraint by fixed-point iteration on `beta0` around an ordinary
//! least-squares solve; [`solve_lm`] minimizes the same squared residual
//! directly over the physical parameters and serves as a cross-check.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BetaVector, CalibrationParams, Vec3};

/// Minimum number of observations: six free coefficients.
pub const MIN_OBSERVATIONS: usize = 6;

/// One averaged regression row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Mean of each reading component over the segment, rad/s.
    pub mean: Vec3,
    /// Mean of each squared reading component, (rad/s)^2.
    pub mean_sq: Vec3,
    /// Squared rotation speed, (rad/s)^2.
    pub response: f64,
}

impl Observation {
    /// Regressor row in `beta1..beta6` order: squares first, then linears.
    pub fn regressors(&self) -> [f64; 6] {
        [
            self.mean_sq.x,
            self.mean_sq.y,
            self.mean_sq.z,
            self.mean.x,
            self.mean.y,
            self.mean.z,
        ]
    }

    /// Model prediction of the response under `beta` (including `beta0`).
    pub fn predict(&self, beta: &BetaVector) -> f64 {
        let r = self.regressors();
        beta.0[0] + (0..6).map(|j| beta.0[j + 1] * r[j]).sum::<f64>()
    }

    /// Subtracts a per-axis measurement-noise variance from the mean squares.
    ///
    /// Averaging squared noisy readings adds the noise variance to every
    /// squared regressor. Removing it leaves the regression unbiased; the
    /// corrected row may then sit marginally below the Jensen bound.
    pub fn subtract_noise_variance(mut self, variance: &Vec3) -> Self {
        self.mean_sq -= variance;
        self
    }
}

/// An ordered set of at least six observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Observation>", into = "Vec<Observation>")]
pub struct ObservationSet {
    rows: Vec<Observation>,
}

impl TryFrom<Vec<Observation>> for ObservationSet {
    type Error = Error;

    fn try_from(rows: Vec<Observation>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<ObservationSet> for Vec<Observation> {
    fn from(s: ObservationSet) -> Self {
        s.rows
    }
}

impl ObservationSet {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        if rows.len() < MIN_OBSERVATIONS {
            return Err(Error::TooFewObservations {
                required: MIN_OBSERVATIONS,
                got: rows.len(),
            });
        }
        for (i, r) in rows.iter().enumerate() {
            let finite = r.regressors().iter().all(|v| v.is_finite()) && r.response.is_finite();
            if !finite || r.response < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "observation {i} is not finite or has a negative response"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Stopping threshold on the summed absolute change of `beta1..beta6`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest accepted condition number of the design matrix.
    pub condition_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            condition_bound: 1e12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "solver.tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "solver.max_iterations must be >= 1".into(),
            ));
        }
        if !(self.condition_bound > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "solver.condition_bound must be > 1, got {}",
                self.condition_bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Ils,
    Lm,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Ils => "ils",
            Solver::Lm => "lm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub params: CalibrationParams,
    pub beta: BetaVector,
    pub iterations: usize,
    /// Sum of squared residuals, (rad/s)^4.
    pub final_cost: f64,
    pub converged: bool,
}

/// Assembles the `n x 6` design matrix and the response vector, rejecting
/// designs whose condition number exceeds `condition_bound`.
pub fn build_design_matrix(
    obs: &ObservationSet,
    condition_bound: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = obs.len();
    let x = DMatrix::from_fn(n, 6, |i, j| obs.rows[i].regressors()[j]);
    let y = DVector::from_iterator(n, obs.rows.iter().map(|o| o.response));
    let condition = condition_number(&x);
    if !(condition <= condition_bound) {
        return Err(Error::SingularDesign {
            condition,
            bound: condition_bound,
        });
    }
    Ok((x, y))
}

/// Ratio of the largest to the smallest singular value (infinite when rank
/// deficient).
pub fn condition_number(x: &DMatrix<f64>) -> f64 {
    let sv = x.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Residuals `y_hat_i - y_i`, with `beta0` taken from the consistency
/// identity.
pub fn residuals(beta: &BetaVector, obs: &ObservationSet) -> Result<Vec<f64>> {
    let consistent = BetaVector::from_free(beta.free())?;
    Ok(obs
        .rows
        .iter()
        .map(|o| o.predict(&consistent) - o.response)
        .collect())
}

/// Sum of squared residuals, the objective both solvers minimize.
pub fn cost(beta: &BetaVector, obs: &ObservationSet) -> Result<f64> {
    Ok(residuals(beta, obs)?.iter().map(|r| r * r).sum())
}

/// Sum of absolute residuals, reported alongside [`cost`] as a diagnostic.
pub fn cost_abs(beta: &BetaVector, obs: &ObservationSet) -> Result<f64> {
    Ok(residuals(beta, obs)?.iter().map(|r| r.abs()).sum())
}

/// Thin-QR least-squares operator for a fixed design matrix.
struct LeastSquares {
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    fn new(x: DMatrix<f64>) -> Self {
        let qr = x.qr();
        Self {
            q_t: qr.q().transpose(),
            r: qr.r(),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> [f64; 6] {
        let qty = &self.q_t * rhs;
        let sol = self
            .r
            .solve_upper_triangular(&qty)
            .expect("R is invertible for a design that passed the condition check");
        let mut out = [0.0; 6];
        out.copy_from_slice(sol.as_slice());
        out
    }
}

/// Iterative least squares: alternate a `beta0` update from the consistency
/// identity with an ordinary least-squares solve for `beta1..beta6`.
pub fn solve_ils(obs: &ObservationSet, cfg: &SolverConfig) -> Result<EstimationResult> {
    solve_ils_traced(obs, cfg, None)
}

/// Same as [`solve_ils`], also recording every iterate `beta^(1), beta^(2), ..`.
pub fn solve_ils_with_history(
    obs: &ObservationSet,
    cfg: &SolverConfig,
) -> Result<(EstimationResult, Vec<BetaVector>)> {
    let mut history = Vec::new();
    let result = solve_ils_traced(obs, cfg, Some(&mut history))?;
    Ok((result, history))
}

fn solve_ils_traced(
    obs: &ObservationSet,
    cfg: &SolverConfig,
    mut history: Option<&mut Vec<BetaVector>>,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let (x, y) = build_design_matrix(obs, cfg.condition_bound)?;
    let ls = LeastSquares::new(x);

    let mut record = |free: &[f64; 6], gamma: f64| {
        if let Some(h) = history.as_deref_mut() {
            let mut b = [gamma; 7];
            b[1..].copy_from_slice(free);
            h.push(BetaVector(b));
        }
    };

    // beta0^(0) = 0
    let mut free = ls.solve(&y);
    record(&free, 0.0);
    let mut iterations = 1;
    loop {
        let gamma = BetaVector::from_free(free)?.beta0();
        let next = ls.solve(&y.add_scalar(-gamma));
        let step: f64 = next.iter().zip(&free).map(|(a, b)| (a - b).abs()).sum();
        free = next;
        iterations += 1;
        record(&free, gamma);
        if step <= cfg.tolerance {
            break;
        }
        if iterations >= cfg.max_iterations || !step.is_finite() {
            return Err(Error::NotConverged {
                iterations,
                last_step: step,
            });
        }
    }

    let beta = BetaVector::from_free(free)?;
    let params = beta.to_params()?;
    Ok(EstimationResult {
        params,
        beta,
        iterations,
        final_cost: cost(&beta, obs)?,
        converged: true,
    })
}

/// Levenberg-Marquardt over `[kx, ky, kz, bx, by, bz]`, starting from unit
/// gains and zero biases.
///
/// The residual of row `i` is `sum_j k_j^2 (s_ij + 2 b_j l_ij + b_j^2) - y_i`
/// with `s` the mean squares and `l` the means, i.e. the regression with
/// `beta0` eliminated.
pub fn solve_lm(obs: &ObservationSet, cfg: &SolverConfig) -> Result<EstimationResult> {
    cfg.validate()?;
    // same identifiability guard as the linear path
    build_design_matrix(obs, cfg.condition_bound)?;

    let rows = obs.rows();
    let eval = |p: &Vector6<f64>| -> (Vec<f64>, Vec<[f64; 6]>) {
        let mut r = Vec::with_capacity(rows.len());
        let mut jac = Vec::with_capacity(rows.len());
        for o in rows {
            let mut ri = -o.response;
            let mut ji = [0.0; 6];
            for a in 0..3 {
                let (k, b) = (p[a], p[a + 3]);
                let (s, l) = (o.mean_sq[a], o.mean[a]);
                let inner = s + 2.0 * b * l + b * b;
                ri += k * k * inner;
                ji[a] = 2.0 * k * inner;
                ji[a + 3] = 2.0 * k * k * (l + b);
            }
            r.push(ri);
            jac.push(ji);
        }
        (r, jac)
    };
    let half_sq = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let mut p = Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
    let (mut r, mut jac) = eval(&p);
    let mut f = half_sq(&r);
    let normal = |jac: &[[f64; 6]], r: &[f64]| {
        let mut a = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for (ji, ri) in jac.iter().zip(r) {
            let jv = Vector6::from_column_slice(ji);
            a += jv * jv.transpose();
            g += jv * *ri;
        }
        (a, g)
    };
    let (mut a, mut g) = normal(&jac, &r);
    let mut mu = 1e-3 * (0..6).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let mut nu = 2.0;

    const GTOL: f64 = 1e-15;
    const XTOL: f64 = 1e-15;

    let mut iterations = 0;
    let mut converged = g.amax() <= GTOL || f == 0.0;
    while !converged {
        if iterations >= cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                last_step: g.amax(),
            });
        }
        iterations += 1;

        let damped = a + Matrix6::identity() * mu;
        let Some(h) = damped.cholesky().map(|c| c.solve(&(-g))) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        if h.norm() <= XTOL * (p.norm() + XTOL) {
            converged = true;
            break;
        }
        let candidate = p + h;
        let physical = (0..3).all(|i| candidate[i] > 0.0);
        let (r_new, jac_new) = eval(&candidate);
        let f_new = half_sq(&r_new);
        let predicted = 0.5 * h.dot(&(h * mu - g));
        let rho = if predicted > 0.0 {
            (f - f_new) / predicted
        } else {
            -1.0
        };
        if physical && rho > 0.0 && f_new.is_finite() {
            p = candidate;
            r = r_new;
            jac = jac_new;
            f = f_new;
            (a, g) = normal(&jac, &r);
            mu *= f64::max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if g.amax() <= GTOL * (1.0 + f) || f == 0.0 {
                converged = true;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                // damping exhausted: no further decrease is representable
                converged = true;
            }
        }
    }

    let params = CalibrationParams::new(
        Vec3::new(p[0], p[1], p[2]),
        Vec3::new(p[3], p[4], p[5]),
    )?;
    let beta = params.to_beta();
    Ok(EstimationResult {
        params,
        beta,
        iterations,
        final_cost: 2.0 * f,
        converged,
    })
}

/// Dispatches to the selected solver.
pub fn solve(obs: &ObservationSet, cfg: &SolverConfig, solver: Solver) -> Result<EstimationResult> {
    match solver {
        Solver::Ils => solve_ils(obs, cfg),
        Solver::Lm => solve_lm(obs, cfg),
    }
}
