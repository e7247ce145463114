//! Six-parameter gyroscope error model.
//!
//! The true body rate `G` relates to the raw reading `M` through a diagonal
//! gain and an additive bias, per axis:
//!
//! ```text
//! g_j = k_j * (m_j + b_j)
//! ```
//!
//! Squaring and summing over the axes turns the constant-speed constraint
//! `|G|^2 = omega^2` into a regression that is linear in seven coefficients
//! (see [`BetaVector`]), one of which is a fixed function of the other six.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-component value: an angular velocity in rad/s or a unit direction.
pub type Vec3 = nalgebra::Vector3<f64>;

/// One timestamped triaxial reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroSample {
    /// Seconds since the start of the stream.
    pub t: f64,
    /// Raw angular velocity, rad/s.
    pub m: Vec3,
}

impl GyroSample {
    pub fn new(t: f64, m: Vec3) -> Self {
        Self { t, m }
    }
}

/// Per-axis scale factors (dimensionless) and biases (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRecord", into = "ParamsRecord")]
pub struct CalibrationParams {
    pub scale: Vec3,
    pub bias: Vec3,
}

/// Flat wire form, `{kx, ky, kz, bx, by, bz}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRecord {
    kx: f64,
    ky: f64,
    kz: f64,
    bx: f64,
    by: f64,
    bz: f64,
}

impl From<CalibrationParams> for ParamsRecord {
    fn from(p: CalibrationParams) -> Self {
        Self {
            kx: p.scale.x,
            ky: p.scale.y,
            kz: p.scale.z,
            bx: p.bias.x,
            by: p.bias.y,
            bz: p.bias.z,
        }
    }
}

impl TryFrom<ParamsRecord> for CalibrationParams {
    type Error = Error;

    fn try_from(r: ParamsRecord) -> Result<Self> {
        Self::new(Vec3::new(r.kx, r.ky, r.kz), Vec3::new(r.bx, r.by, r.bz))
    }
}

impl CalibrationParams {
    /// Validated constructor: every scale factor must be finite and positive,
    /// every bias finite.
    pub fn new(scale: Vec3, bias: Vec3) -> Result<Self> {
        let p = Self { scale, bias };
        p.validate()?;
        Ok(p)
    }

    /// Unit gains, zero biases.
    pub fn identity() -> Self {
        Self {
            scale: Vec3::repeat(1.0),
            bias: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..3 {
            let k = self.scale[j];
            if !k.is_finite() || k <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "scale factor {j} must be finite and > 0, got {k}"
                )));
            }
            if !self.bias[j].is_finite() {
                return Err(Error::InvalidParams(format!(
                    "bias {j} must be finite, got {}",
                    self.bias[j]
                )));
            }
        }
        Ok(())
    }

    /// Corrected rate from a raw reading: `g_j = k_j (m_j + b_j)`.
    pub fn apply(&self, measured: &Vec3) -> Vec3 {
        self.scale.component_mul(&(measured + self.bias))
    }

    /// Raw reading that a sensor with these parameters reports for the true
    /// rate `actual`: `m_j = g_j / k_j - b_j`.
    pub fn invert(&self, actual: &Vec3) -> Result<Vec3> {
        for j in 0..3 {
            if self.scale[j] == 0.0 || !self.scale[j].is_finite() {
                return Err(Error::ZeroScaleFactor {
                    axis: j,
                    value: self.scale[j],
                });
            }
        }
        Ok(actual.component_div(&self.scale) - self.bias)
    }

    pub fn to_beta(&self) -> BetaVector {
        let k2 = self.scale.component_mul(&self.scale);
        let cross = 2.0 * k2.component_mul(&self.bias);
        let beta0 = (0..3).map(|j| k2[j] * self.bias[j] * self.bias[j]).sum();
        BetaVector([
            beta0, k2.x, k2.y, k2.z, cross.x, cross.y, cross.z,
        ])
    }

    /// The six parameters in `[kx, ky, kz, bx, by, bz]` order.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.scale.x,
            self.scale.y,
            self.scale.z,
            self.bias.x,
            self.bias.y,
            self.bias.z,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            scale: Vec3::new(a[0], a[1], a[2]),
            bias: Vec3::new(a[3], a[4], a[5]),
        }
    }
}

/// Parameter names in [`CalibrationParams::to_array`] order.
pub const PARAM_NAMES: [&str; 6] = ["kx", "ky", "kz", "bx", "by", "bz"];

/// Regression coefficients `[beta0, beta1, .., beta6]`.
///
/// `beta1..beta3` multiply the squared readings, `beta4..beta6` the linear
/// readings, and `beta0` is the constant term `sum_j k_j^2 b_j^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BetaVector(pub [f64; 7]);

impl BetaVector {
    /// Builds a vector from the six free coefficients, filling `beta0` from
    /// the consistency identity.
    pub fn from_free(free: [f64; 6]) -> Result<Self> {
        let mut b = [0.0; 7];
        b[1..].copy_from_slice(&free);
        let mut beta = Self(b);
        beta.0[0] = beta.implied_beta0()?;
        Ok(beta)
    }

    pub fn beta0(&self) -> f64 {
        self.0[0]
    }

    /// `beta1..beta6`.
    pub fn free(&self) -> [f64; 6] {
        let mut f = [0.0; 6];
        f.copy_from_slice(&self.0[1..]);
        f
    }

    /// `beta4^2/(4 beta1) + beta5^2/(4 beta2) + beta6^2/(4 beta3)`.
    ///
    /// Fails if any squared-gain coefficient is not strictly positive.
    pub fn implied_beta0(&self) -> Result<f64> {
        self.check_gains()?;
        Ok((1..=3)
            .map(|j| self.0[j + 3] * self.0[j + 3] / (4.0 * self.0[j]))
            .sum())
    }

    fn check_gains(&self) -> Result<()> {
        for j in 1..=3 {
            let v = self.0[j];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::UnphysicalEstimate { index: j, value: v });
            }
        }
        Ok(())
    }

    /// `k_j = sqrt(beta_j)`, `b_j = beta_{j+3} / (2 beta_j)`.
    pub fn to_params(&self) -> Result<CalibrationParams> {
        self.check_gains()?;
        let b = &self.0;
        let scale = Vec3::new(b[1].sqrt(), b[2].sqrt(), b[3].sqrt());
        let bias = Vec3::new(
            b[4] / (2.0 * b[1]),
            b[5] / (2.0 * b[2]),
            b[6] / (2.0 * b[3]),
        );
        CalibrationParams::new(scale, bias)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(k: [f64; 3], b: [f64; 3]) -> CalibrationParams {
        CalibrationParams::new(Vec3::from(k), Vec3::from(b)).unwrap()
    }

    #[test]
    fn apply_identity() {
        let m = Vec3::new(0.5, -0.2, 0.1);
        assert_eq!(CalibrationParams::identity().apply(&m), m);
    }

    #[test]
    fn apply_normal_condition_parameters() {
        // k_j * (1 + b_j), computed by hand
        let p = params([0.9070, 1.0501, 0.8734], [0.0528, 0.0813, -0.0992]);
        let g = p.apply(&Vec3::repeat(1.0));
        assert_abs_diff_eq!(g.x, 0.9548896, epsilon = 1e-12);
        assert_abs_diff_eq!(g.y, 1.13547313, epsilon = 1e-12);
        assert_abs_diff_eq!(g.z, 0.78675872, epsilon = 1e-12);
    }

    #[test]
    fn apply_cancels_bias() {
        let p = params([1.3, 0.7, 1.9], [0.05, -0.02, 0.09]);
        assert_eq!(p.apply(&(-p.bias)), Vec3::zeros());
    }

    #[test]
    fn invert_simple_cases() {
        let id = CalibrationParams::identity();
        let g = Vec3::new(2.0, 0.0, -1.0);
        assert_eq!(id.invert(&g).unwrap(), g);

        let p = params([2.0; 3], [0.1; 3]);
        let m = p.invert(&Vec3::repeat(1.0)).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(m[j], 0.4, epsilon = 1e-15);
        }
    }

    #[test]
    fn invert_rejects_zero_scale() {
        let p = CalibrationParams {
            scale: Vec3::new(1.0, 0.0, 1.0),
            bias: Vec3::zeros(),
        };
        assert!(matches!(
            p.invert(&Vec3::repeat(1.0)),
            Err(Error::ZeroScaleFactor { axis: 1, .. })
        ));
        assert!(p.validate().is_err());
    }

    #[test]
    fn beta_of_identity() {
        let beta = CalibrationParams::identity().to_beta();
        assert_eq!(beta.0, [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(beta.to_params().unwrap(), CalibrationParams::identity());
    }

    #[test]
    fn beta_of_high_scale_case() {
        let beta = params([1.9074, 1.9529, 1.5635], [0.0827, 0.0265, -0.0805]).to_beta();
        // hand arithmetic: k^2, 2 k^2 b, sum k^2 b^2
        assert_abs_diff_eq!(beta.0[1], 3.63817476, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[2], 3.81381841, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[3], 2.44453225, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[4], 0.601754105304, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[5], 0.20213237573, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[6], -0.39356969225, epsilon = 1e-12);
        assert_abs_diff_eq!(beta.0[0], 0.0434019663458054, epsilon = 1e-12);
    }

    #[test]
    fn beta_to_params_rejects_non_positive_gain() {
        let beta = BetaVector([0.0, -0.01, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            beta.to_params(),
            Err(Error::UnphysicalEstimate { index: 1, .. })
        ));
        let beta = BetaVector([0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(beta.implied_beta0().is_err());
    }

    #[test]
    fn params_json_shape() {
        let p = params([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"kx":1.0,"ky":2.0,"kz":3.0,"bx":0.1,"by":0.2,"bz":0.3}"#);
        let back: CalibrationParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<CalibrationParams>(
            r#"{"kx":-1.0,"ky":2.0,"kz":3.0,"bx":0.1,"by":0.2,"bz":0.3}"#
        )
        .is_err());
    }

    fn arb_params() -> impl Strategy<Value = CalibrationParams> {
        (
            prop::array::uniform3(1e-3f64..=3.0),
            prop::array::uniform3(-0.5f64..=0.5),
        )
            .prop_map(|(k, b)| params(k, b))
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-5.0f64..5.0).prop_map(Vec3::from)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn apply_inverts_invert(p in arb_params(), g in arb_vec()) {
            let back = p.apply(&p.invert(&g).unwrap());
            prop_assert!((back - g).amax() < 1e-12);
        }

        #[test]
        fn beta_round_trip(p in arb_params()) {
            let back = p.to_beta().to_params().unwrap();
            for (a, b) in back.to_array().iter().zip(p.to_array()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn beta0_consistency(p in arb_params()) {
            let beta = p.to_beta();
            let implied = beta.implied_beta0().unwrap();
            prop_assert!((implied - beta.beta0()).abs() <= 1e-12 * (1.0 + beta.beta0()));
            prop_assert!(beta.beta0() >= 0.0);
        }

        #[test]
        fn squared_norm_matches_regression_form(p in arb_params(), m in arb_vec()) {
            // |G|^2 against the expanded linear-in-beta form with zero noise
            let lhs = p.apply(&m).norm_squared();
            let beta = p.to_beta().0;
            let rhs = beta[0]
                + beta[1] * m.x * m.x + beta[2] * m.y * m.y + beta[3] * m.z * m.z
                + beta[4] * m.x + beta[5] * m.y + beta[6] * m.z;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn normal_range_beta0_is_small(
            k in prop::array::uniform3(0.8f64..=1.2),
            b in prop::array::uniform3(-0.1f64..=0.1),
        ) {
            prop_assert!(params(k, b).to_beta().beta0() < 0.5);
        }
    }
}
