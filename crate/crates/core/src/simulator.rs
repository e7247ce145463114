//! Synthetic gyroscopes and synthetic protocol executions.
//!
//! A simulated run draws one mounting direction per nominal axis (shared by
//! the two opposite rotations about it), then for every sample draws the
//! instantaneous servo speed with white jitter, maps the true body rate
//! through the inverse sensor model and adds white Gaussian noise per axis.
//!
//! Squaring noisy readings inflates every mean square by the noise
//! variance. By default the simulator removes that known variance from the
//! squared regressors and uses the per-revolution mean of the squared
//! instantaneous speed as the response; both can be switched off to study
//! the uncorrected behaviour, which is biased low in the scale factors at
//! low speed.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Observation, ObservationSet};
use crate::model::{CalibrationParams, GyroSample, Vec3};
use crate::protocol::{average_revolution, Axis, Protocol, ProtocolStep, Segment, SegmentedLog, DWELL_LABEL};

/// Deterministic RNG for one independent stream (e.g. one Monte-Carlo
/// trial) under a master seed.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// `b ~ U(low, high)`.
    Uniform,
    /// `|b| ~ U(low, high)` with an equiprobable sign.
    SignedMagnitude,
}

/// Source of the response value of simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// Squared commanded speed.
    Commanded,
    /// Per-revolution mean of the squared instantaneous servo speed.
    MeanSquaredSpeed,
}

/// Optional periodic speed disturbance, off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vibration {
    /// Amplitude as a fraction of the commanded speed.
    pub amplitude_frac: f64,
    /// Hz.
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scale_range: [f64; 2],
    /// rad/s; interpreted according to `bias_mode`.
    pub bias_range: [f64; 2],
    pub bias_mode: BiasMode,
    /// Largest off-axis direction cosine of a mounted rotation axis.
    pub misalignment_max: f64,
    /// Standard deviation of the per-axis measurement noise, rad/s.
    pub noise_sigma: f64,
    /// Standard deviation of the per-sample speed jitter as a fraction of
    /// the current speed.
    pub speed_jitter_frac: f64,
    /// Hz.
    pub sample_rate: f64,
    pub seed: u64,
    pub response: ResponseModel,
    /// Subtract `noise_sigma^2` from the squared regressors.
    pub noise_correction: bool,
    pub vibration: Option<Vibration>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scale_range: [0.8, 1.2],
            bias_range: [-0.1, 0.1],
            bias_mode: BiasMode::Uniform,
            misalignment_max: 0.10,
            noise_sigma: 0.035,
            speed_jitter_frac: 0.05,
            sample_rate: 200.0,
            seed: 0,
            response: ResponseModel::MeanSquaredSpeed,
            noise_correction: true,
            vibration: None,
        }
    }
}

impl SimConfig {
    /// Poor-quality sensors: gains in `[1.2, 2.0]`, bias magnitudes in
    /// `[0.1, 0.2]` rad/s with random sign.
    pub fn extreme() -> Self {
        Self {
            scale_range: [1.2, 2.0],
            bias_range: [0.1, 0.2],
            bias_mode: BiasMode::SignedMagnitude,
            ..Self::default()
        }
    }

    /// Noise, jitter and misalignment all disabled.
    pub fn noiseless() -> Self {
        Self {
            misalignment_max: 0.0,
            noise_sigma: 0.0,
            speed_jitter_frac: 0.0,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let [klo, khi] = self.scale_range;
        if !(klo > 0.0 && klo <= khi && khi.is_finite()) {
            return bad(format!("scale_range must satisfy 0 < low <= high, got {klo}..{khi}"));
        }
        let [blo, bhi] = self.bias_range;
        if !(blo <= bhi && blo.is_finite() && bhi.is_finite()) {
            return bad(format!("bias_range must satisfy low <= high, got {blo}..{bhi}"));
        }
        if self.bias_mode == BiasMode::SignedMagnitude && blo < 0.0 {
            return bad("bias_range must be non-negative magnitudes for signed_magnitude".into());
        }
        if !(0.0..1.0).contains(&self.misalignment_max) {
            return bad(format!("misalignment_max must be in [0, 1), got {}", self.misalignment_max));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.speed_jitter_frac >= 0.0) || !self.speed_jitter_frac.is_finite() {
            return bad(format!("speed_jitter_frac must be >= 0, got {}", self.speed_jitter_frac));
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return bad(format!("sample_rate must be > 0, got {}", self.sample_rate));
        }
        if let Some(v) = self.vibration {
            if !(v.amplitude_frac >= 0.0 && v.frequency >= 0.0) {
                return bad("vibration amplitude and frequency must be >= 0".into());
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a ground-truth sensor: gains first (x, y, z), then biases.
pub fn draw_truth(cfg: &SimConfig, rng: &mut impl Rng) -> CalibrationParams {
    let scale = Vec3::from_fn(|_, _| uniform(rng, cfg.scale_range));
    let bias = Vec3::from_fn(|_, _| match cfg.bias_mode {
        BiasMode::Uniform => uniform(rng, cfg.bias_range),
        BiasMode::SignedMagnitude => {
            let mag = uniform(rng, cfg.bias_range);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        }
    });
    CalibrationParams { scale, bias }
}

/// Unit rotation axis near `nominal`: both off-axis components get a
/// magnitude drawn from `U(0, misalignment_max)` with random sign before
/// normalization.
pub fn draw_misaligned_axis(nominal: Axis, misalignment_max: f64, rng: &mut impl Rng) -> Vec3 {
    let mut v = nominal.unit();
    let n = nominal.index();
    for j in (0..3).filter(|&j| j != n) {
        let mag = misalignment_max * rng.random::<f64>();
        v[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    v.normalize()
}

/// Walks the samples of one rotation step, handing each sample index,
/// instantaneous signed speed and reading to `visit`.
fn walk_step(
    truth: &CalibrationParams,
    step: &ProtocolStep,
    axis: &Vec3,
    cfg: &SimConfig,
    rng: &mut impl Rng,
    mut visit: impl FnMut(usize, f64, Vec3),
) {
    let n = (cfg.sample_rate * step.duration()).round() as usize;
    let commanded = step.direction.sign() * step.omega;
    let jitter_sd = cfg.speed_jitter_frac * step.omega;
    for i in 0..n {
        let t = i as f64 / cfg.sample_rate;
        let mut speed = commanded + jitter_sd * rng.sample::<f64, _>(StandardNormal);
        if let Some(v) = cfg.vibration {
            speed += v.amplitude_frac * step.omega * (TAU * v.frequency * t).sin();
        }
        let g = axis * speed;
        let noise = Vec3::from_fn(|_, _| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal));
        let m = g.component_div(&truth.scale) - truth.bias + noise;
        visit(i, speed, m);
    }
}

/// Samples for one rotation step; timestamps start at zero.
pub fn simulate_step(
    truth: &CalibrationParams,
    step: &ProtocolStep,
    axis: &Vec3,
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Vec<GyroSample> {
    let mut out = Vec::with_capacity((cfg.sample_rate * step.duration()).round() as usize);
    walk_step(truth, step, axis, cfg, rng, |i, _, m| {
        out.push(GyroSample::new(i as f64 / cfg.sample_rate, m));
    });
    out
}

/// A complete simulated protocol execution.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    /// Continuous stream: a leading pause, then each rotation followed by
    /// its pause.
    pub stream: Vec<GyroSample>,
    /// `obs_id` per stream sample (`-1` during pauses).
    pub labels: Vec<i64>,
    /// True body rate per stream sample.
    pub rates: Vec<Vec3>,
    /// Ground-truth segmentation of `stream`.
    pub segments: SegmentedLog,
    pub observations: ObservationSet,
    /// Mounted rotation axis per nominal axis (x, y, z).
    pub axes: [Vec3; 3],
}

fn draw_axes(cfg: &SimConfig, rng: &mut impl Rng) -> [Vec3; 3] {
    Axis::ALL.map(|a| draw_misaligned_axis(a, cfg.misalignment_max, rng))
}

fn finish_observation(obs: Observation, mean_speed_sq: f64, cfg: &SimConfig) -> Observation {
    let mut o = obs;
    if cfg.response == ResponseModel::MeanSquaredSpeed {
        o.response = mean_speed_sq;
    }
    if cfg.noise_correction {
        o = o.subtract_noise_variance(&Vec3::repeat(cfg.noise_sigma * cfg.noise_sigma));
    }
    o
}

/// Runs `protocol` on a simulated sensor. The sample rate comes from `cfg`.
pub fn simulate_protocol_run(
    truth: &CalibrationParams,
    protocol: &Protocol,
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Result<ProtocolRun> {
    cfg.validate()?;
    truth.validate()?;
    protocol.validate()?;
    let axes = draw_axes(cfg, rng);
    let mut dwell_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let dwell_noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let dt = 1.0 / cfg.sample_rate;

    let mut stream = Vec::new();
    let mut labels = Vec::new();
    let mut rates = Vec::new();
    let mut segments = Vec::with_capacity(protocol.steps.len());
    let mut rows = Vec::with_capacity(protocol.steps.len());

    let mut pause = |stream: &mut Vec<GyroSample>, labels: &mut Vec<i64>, rates: &mut Vec<Vec3>, seconds: f64| {
        let n = (seconds * cfg.sample_rate).round() as usize;
        for _ in 0..n {
            let t = stream.len() as f64 * dt;
            let m = -truth.bias + Vec3::from_fn(|_, _| dwell_noise.sample(&mut dwell_rng));
            stream.push(GyroSample::new(t, m));
            labels.push(DWELL_LABEL);
            rates.push(Vec3::zeros());
        }
    };

    pause(&mut stream, &mut labels, &mut rates, protocol.steps[0].dwell_after);
    for (i, step) in protocol.steps.iter().enumerate() {
        let start = stream.len();
        let mut speed_sq = 0.0;
        let axis = axes[step.axis.index()];
        walk_step(truth, step, &axis, cfg, rng, |_, w, m| {
            speed_sq += w * w;
            rates.push(axis * w);
            let t = stream.len() as f64 * dt;
            stream.push(GyroSample::new(t, m));
            labels.push(i as i64);
        });
        let range = start..stream.len();
        let samples = stream[range.clone()].to_vec();
        let obs = average_revolution(&samples, step.omega)
            .map_err(|_| Error::EmptySegment { step: Some(i) })?;
        rows.push(finish_observation(obs, speed_sq / range.len() as f64, cfg));
        segments.push(Segment { step: i, range, samples });
        pause(&mut stream, &mut labels, &mut rates, step.dwell_after);
    }

    Ok(ProtocolRun {
        stream,
        labels,
        rates,
        segments: SegmentedLog { segments },
        observations: ObservationSet::new(rows)?,
        axes,
    })
}

/// Observations of [`simulate_protocol_run`] without materializing the
/// sample stream. Consumes the RNG identically, so both paths yield the same
/// observations for the same seed.
pub fn simulate_observations(
    truth: &CalibrationParams,
    protocol: &Protocol,
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Result<ObservationSet> {
    cfg.validate()?;
    truth.validate()?;
    protocol.validate()?;
    let axes = draw_axes(cfg, rng);
    let _dwell_seed: u64 = rng.random();

    let rows = protocol
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let (mut n, mut sum, mut sum_sq, mut speed_sq) = (0usize, Vec3::zeros(), Vec3::zeros(), 0.0);
            walk_step(truth, step, &axes[step.axis.index()], cfg, rng, |_, w, m| {
                n += 1;
                sum += m;
                sum_sq += m.component_mul(&m);
                speed_sq += w * w;
            });
            if n == 0 {
                return Err(Error::EmptySegment { step: Some(i) });
            }
            let nf = n as f64;
            let obs = Observation {
                mean: sum / nf,
                mean_sq: sum_sq / nf,
                response: step.omega * step.omega,
            };
            Ok(finish_observation(obs, speed_sq / nf, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationSet::new(rows)
}

/// Aligned time series from a sine-tracking run.
#[derive(Debug, Clone, Default)]
pub struct SineTrack {
    pub t: Vec<f64>,
    /// True body rate.
    pub actual: Vec<Vec3>,
    /// Sensor reading.
    pub raw: Vec<Vec3>,
    /// Reading corrected with the estimated parameters.
    pub calibrated: Vec<Vec3>,
}

/// Rotation at `amplitude * sin(2 pi freq t)` about `(1, 1, 1)/sqrt(3)`, so
/// every sensor axis sees the same projection.
pub fn simulate_sine_tracking(
    truth: &CalibrationParams,
    estimate: &CalibrationParams,
    amplitude: f64,
    freq: f64,
    duration: f64,
    cfg: &SimConfig,
    rng: &mut impl Rng,
) -> Result<SineTrack> {
    cfg.validate()?;
    truth.validate()?;
    estimate.validate()?;
    let axis = Vec3::repeat(1.0).normalize();
    let n = (duration * cfg.sample_rate).round() as usize;
    let mut track = SineTrack::default();
    for i in 0..n {
        let t = i as f64 / cfg.sample_rate;
        let nominal = amplitude * (TAU * freq * t).sin();
        let speed = nominal
            + cfg.speed_jitter_frac * nominal.abs() * rng.sample::<f64, _>(StandardNormal);
        let g = axis * speed;
        let noise = Vec3::from_fn(|_, _| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal));
        let raw = truth.invert(&g)? + noise;
        track.t.push(t);
        track.actual.push(g);
        track.raw.push(raw);
        track.calibrated.push(estimate.apply(&raw));
    }
    Ok(track)
}

/// Largest angle between a misaligned axis and its nominal direction when
/// both off-axis components reach `misalignment_max`.
pub fn misalignment_angle_bound(misalignment_max: f64) -> f64 {
    (misalignment_max / FRAC_1_SQRT_2).atan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{solve_ils, SolverConfig};
    use crate::protocol::g_optimal_protocol;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_ranges_give_identity() {
        let cfg = SimConfig {
            scale_range: [1.0, 1.0],
            bias_range: [0.0, 0.0],
            ..Default::default()
        };
        let mut rng = trial_rng(1, 0);
        for _ in 0..10 {
            assert_eq!(draw_truth(&cfg, &mut rng), CalibrationParams::identity());
        }
    }

    #[test]
    fn default_draw_means_match_midpoints() {
        let cfg = SimConfig::default();
        let mut rng = trial_rng(2, 0);
        let n = 100_000;
        let mut sum = [0.0; 6];
        for _ in 0..n {
            for (s, v) in sum.iter_mut().zip(draw_truth(&cfg, &mut rng).to_array()) {
                *s += v;
            }
        }
        // standard error of a uniform mean: width / sqrt(12 n)
        let se_k = 0.4 / (12.0 * n as f64).sqrt();
        let se_b = 0.2 / (12.0 * n as f64).sqrt();
        for j in 0..3 {
            assert!((sum[j] / n as f64 - 1.0).abs() < 3.0 * se_k);
            assert!((sum[j + 3] / n as f64).abs() < 3.0 * se_b);
        }
    }

    #[test]
    fn extreme_draws_stay_in_range() {
        let cfg = SimConfig::extreme();
        let mut rng = trial_rng(3, 0);
        let mut signs = [0usize; 2];
        for _ in 0..10_000 {
            let p = draw_truth(&cfg, &mut rng);
            for j in 0..3 {
                assert!((1.2..=2.0).contains(&p.scale[j]));
                assert!((0.1..=0.2).contains(&p.bias[j].abs()));
                signs[usize::from(p.bias[j] > 0.0)] += 1;
            }
        }
        assert!(signs[0] > 14_000 && signs[1] > 14_000);
    }

    #[test]
    fn misaligned_axis_properties() {
        let mut rng = trial_rng(4, 0);
        assert_eq!(draw_misaligned_axis(Axis::Y, 0.0, &mut rng), Axis::Y.unit());
        let bound = misalignment_angle_bound(0.1);
        assert_abs_diff_eq!(bound.to_degrees(), 8.0494669755, epsilon = 1e-8);
        for i in 0..100_000 {
            let a = Axis::ALL[i % 3];
            let v = draw_misaligned_axis(a, 0.1, &mut rng);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v[a.index()] > 0.0);
            let angle = v.dot(&a.unit()).clamp(-1.0, 1.0).acos();
            assert!(angle <= bound + 1e-12);
        }
    }

    #[test]
    fn ideal_step_readings() {
        let cfg = SimConfig::noiseless();
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let mut rng = trial_rng(5, 0);
        let s = simulate_step(&CalibrationParams::identity(), &p.steps[0], &Vec3::x(), &cfg, &mut rng);
        assert_eq!(s.len(), (200.0 * TAU).round() as usize);
        assert!(s.iter().all(|x| x.m == Vec3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn identity_sensor_reads_servo_speed() {
        let cfg = SimConfig {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let mut rng = trial_rng(6, 0);
        let axis = draw_misaligned_axis(Axis::Z, cfg.misalignment_max, &mut rng);
        let mut speeds = Vec::new();
        let mut norms = Vec::new();
        walk_step(&CalibrationParams::identity(), &p.steps[4], &axis, &cfg, &mut rng, |_, w, m| {
            speeds.push(w);
            norms.push(m.norm());
        });
        for (w, n) in speeds.iter().zip(&norms) {
            assert!((w.abs() - n).abs() < 1e-12);
        }
    }

    #[test]
    fn run_and_fast_path_agree() {
        let cfg = SimConfig::default();
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let truth = draw_truth(&cfg, &mut trial_rng(7, 0));
        let run = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(7, 1)).unwrap();
        let fast = simulate_observations(&truth, &p, &cfg, &mut trial_rng(7, 1)).unwrap();
        for (a, b) in run.observations.rows().iter().zip(fast.rows()) {
            assert_abs_diff_eq!((a.mean - b.mean).amax(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((a.mean_sq - b.mean_sq).amax(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(a.response, b.response, epsilon = 1e-14);
        }
        assert_eq!(run.labels.len(), run.stream.len());
        assert_eq!(run.segments.segments.len(), 6);
        assert!(run.stream.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn noiseless_run_recovers_truth() {
        let cfg = SimConfig::noiseless();
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let truth = CalibrationParams::new(
            Vec3::new(0.9070, 1.0501, 0.8734),
            Vec3::new(0.0528, 0.0813, -0.0992),
        )
        .unwrap();
        let run = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(8, 0)).unwrap();
        let est = solve_ils(&run.observations, &SolverConfig::default()).unwrap();
        for (a, b) in est.params.to_array().iter().zip(truth.to_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn true_rates_explain_noiseless_readings() {
        let cfg = SimConfig {
            noise_sigma: 0.0,
            ..SimConfig::default()
        };
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let truth = draw_truth(&cfg, &mut trial_rng(5, 0));
        let run = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(5, 1)).unwrap();
        assert_eq!(run.rates.len(), run.stream.len());
        for (s, g) in run.stream.iter().zip(&run.rates) {
            assert!((truth.apply(&s.m) - g).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = SimConfig::default();
        let p = g_optimal_protocol(1.0, cfg.sample_rate).unwrap();
        let truth = draw_truth(&cfg, &mut trial_rng(9, 0));
        let a = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(9, 1)).unwrap();
        let b = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(9, 1)).unwrap();
        assert_eq!(a.stream, b.stream);
        let c = simulate_protocol_run(&truth, &p, &cfg, &mut trial_rng(9, 2)).unwrap();
        assert_ne!(a.stream, c.stream);
    }

    #[test]
    fn sine_tracking_exact_when_estimate_is_truth() {
        let cfg = SimConfig::noiseless();
        let truth = CalibrationParams::new(Vec3::new(1.1, 0.9, 1.05), Vec3::new(0.02, -0.05, 0.07)).unwrap();
        let tr = simulate_sine_tracking(&truth, &truth, 1.0, 0.75, 4.0, &cfg, &mut trial_rng(10, 0)).unwrap();
        assert_eq!(tr.t.len(), 800);
        for (a, c) in tr.actual.iter().zip(&tr.calibrated) {
            assert!((a - c).amax() < 1e-12);
        }
    }

    #[test]
    fn sine_tracking_zero_amplitude() {
        let cfg = SimConfig::default();
        let truth = CalibrationParams::new(Vec3::new(1.1, 0.9, 1.05), Vec3::new(0.02, -0.05, 0.07)).unwrap();
        let tr = simulate_sine_tracking(&truth, &truth, 0.0, 0.75, 2.0, &cfg, &mut trial_rng(11, 0)).unwrap();
        assert!(tr.actual.iter().all(|g| *g == Vec3::zeros()));
        // calibrated = k * noise
        for (raw, cal) in tr.raw.iter().zip(&tr.calibrated) {
            let noise = raw + truth.bias;
            assert!((cal - truth.scale.component_mul(&noise)).amax() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            SimConfig { noise_sigma: -1.0, ..Default::default() },
            SimConfig { misalignment_max: 1.0, ..Default::default() },
            SimConfig { scale_range: [1.2, 0.8], ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
