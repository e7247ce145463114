//! Rotation protocol and reduction of sample streams to observations.
//!
//! The six-observation design rotates the sensor once about each of its
//! axes in both directions. At unit speed the linear regressors of the six
//! rows form
//!
//! ```text
//!  1  0  0
//! -1  0  0
//!  0  1  0
//!  0 -1  0
//!  0  0  1
//!  0  0 -1
//! ```
//!
//! Counter-clockwise rotation about an axis is a positive rate on that axis.

use std::f64::consts::TAU;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Observation, ObservationSet};
use crate::model::{CalibrationParams, GyroSample, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = Vec3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Negative rate on the rotation axis.
    Cw,
    /// Positive rate on the rotation axis.
    Ccw,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Cw => -1.0,
            Direction::Ccw => 1.0,
        }
    }
}

fn one() -> u32 {
    1
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolStep {
    pub axis: Axis,
    pub direction: Direction,
    /// Commanded speed, rad/s.
    pub omega: f64,
    #[serde(default = "one")]
    pub revolutions: u32,
    /// Pause after the rotation, seconds.
    #[serde(default = "three")]
    pub dwell_after: f64,
}

impl ProtocolStep {
    /// Rotation time for the configured number of revolutions.
    pub fn duration(&self) -> f64 {
        f64::from(self.revolutions) * TAU / self.omega
    }

    /// Signed unit-speed design row.
    pub fn design_row(&self) -> Vec3 {
        self.axis.unit() * self.direction.sign()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step omega must be > 0, got {}",
                self.omega
            )));
        }
        if self.revolutions == 0 {
            return Err(Error::InvalidConfig("step revolutions must be >= 1".into()));
        }
        if !(self.dwell_after >= 0.0) || !self.dwell_after.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step dwell_after must be >= 0, got {}",
                self.dwell_after
            )));
        }
        Ok(())
    }
}

/// Ordered rotation steps; step `i` produces the samples labelled `obs_id = i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub steps: Vec<ProtocolStep>,
    /// Hz.
    pub sample_rate: f64,
}

/// The six-step `[+X, -X, +Y, -Y, +Z, -Z]` protocol at speed `omega`, one
/// revolution per step with a three second pause after each.
pub fn g_optimal_protocol(omega: f64, sample_rate: f64) -> Result<Protocol> {
    let mut steps = Vec::with_capacity(6);
    for axis in Axis::ALL {
        for direction in [Direction::Ccw, Direction::Cw] {
            steps.push(ProtocolStep {
                axis,
                direction,
                omega,
                revolutions: 1,
                dwell_after: 3.0,
            });
        }
    }
    let p = Protocol { steps, sample_rate };
    p.validate()?;
    Ok(p)
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sample_rate must be > 0, got {}",
                self.sample_rate
            )));
        }
        if self.steps.len() < crate::estimator::MIN_OBSERVATIONS {
            return Err(Error::InvalidConfig(format!(
                "protocol needs at least {} steps, got {}",
                crate::estimator::MIN_OBSERVATIONS,
                self.steps.len()
            )));
        }
        self.steps.iter().try_for_each(ProtocolStep::validate)
    }

    /// Signed unit-speed design rows, one per step.
    pub fn ideal_design(&self) -> Vec<Vec3> {
        self.steps.iter().map(ProtocolStep::design_row).collect()
    }

    /// Observations a sensor with parameters `sensor` would produce under
    /// perfect alignment, constant speed and no noise.
    pub fn ideal_observations(&self, sensor: &CalibrationParams) -> Result<ObservationSet> {
        let rows = self
            .steps
            .iter()
            .map(|s| {
                let m = sensor.invert(&(s.design_row() * s.omega))?;
                Ok(Observation {
                    mean: m,
                    mean_sq: m.component_mul(&m),
                    response: s.omega * s.omega,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationSet::new(rows)
    }

    /// Number of samples spanned by step `i`'s rotation.
    pub fn step_samples(&self, i: usize) -> usize {
        (self.sample_rate * self.steps[i].duration()).round() as usize
    }

    /// Same protocol with every speed replaced by `omega`.
    pub fn with_omega(&self, omega: f64) -> Self {
        let mut p = self.clone();
        for s in &mut p.steps {
            s.omega = omega;
        }
        p
    }
}

/// Averages one rotation segment into a regression row.
///
/// The squared regressors are means of squared readings (not squares of the
/// mean), and the response is the squared commanded speed.
pub fn average_revolution(samples: &[GyroSample], omega: f64) -> Result<Observation> {
    if samples.is_empty() {
        return Err(Error::EmptySegment { step: None });
    }
    let n = samples.len() as f64;
    let (sum, sum_sq) = samples.iter().fold(
        (Vec3::zeros(), Vec3::zeros()),
        |(s, sq), x| (s + x.m, sq + x.m.component_mul(&x.m)),
    );
    Ok(Observation {
        mean: sum / n,
        mean_sq: sum_sq / n,
        response: omega * omega,
    })
}

/// Pooled per-axis sample variance over a set of stationary runs, each run
/// measured about its own mean. `None` when fewer than two samples in total
/// contribute.
pub fn stationary_noise_variance<'a, I>(runs: I) -> Option<Vec3>
where
    I: IntoIterator<Item = &'a [GyroSample]>,
{
    let mut ss = Vec3::zeros();
    let mut dof = 0usize;
    for run in runs {
        if run.len() < 2 {
            continue;
        }
        let n = run.len() as f64;
        let mean = run.iter().fold(Vec3::zeros(), |a, s| a + s.m) / n;
        for s in run {
            let d = s.m - mean;
            ss += d.component_mul(&d);
        }
        dof += run.len() - 1;
    }
    (dof > 0).then(|| ss / dof as f64)
}

/// Samples belonging to one protocol step.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub step: usize,
    /// Index range within the source stream.
    pub range: Range<usize>,
    pub samples: Vec<GyroSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedLog {
    pub segments: Vec<Segment>,
}

impl SegmentedLog {
    /// Index ranges of the source stream not covered by any segment.
    pub fn gaps(&self, stream_len: usize) -> Vec<Range<usize>> {
        let mut covered: Vec<Range<usize>> = self.segments.iter().map(|s| s.range.clone()).collect();
        covered.sort_by_key(|r| r.start);
        let mut gaps = Vec::new();
        let mut cursor = 0;
        for r in covered {
            if r.start > cursor {
                gaps.push(cursor..r.start);
            }
            cursor = cursor.max(r.end);
        }
        if cursor < stream_len {
            gaps.push(cursor..stream_len);
        }
        gaps
    }

    /// One observation per segment, optionally removing a known per-axis
    /// noise variance from the squared regressors.
    pub fn observations(
        &self,
        protocol: &Protocol,
        noise_variance: Option<&Vec3>,
    ) -> Result<ObservationSet> {
        let rows = self
            .segments
            .iter()
            .map(|seg| {
                let step = protocol.steps.get(seg.step).ok_or_else(|| {
                    Error::InvalidConfig(format!("segment for unknown step {}", seg.step))
                })?;
                let o = average_revolution(&seg.samples, step.omega)
                    .map_err(|_| Error::EmptySegment { step: Some(seg.step) })?;
                Ok(match noise_variance {
                    Some(v) => o.subtract_noise_variance(v),
                    None => o,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationSet::new(rows)
    }
}

/// Thresholds for splitting an unlabelled log at its pauses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    /// A sample is "moving" when its smoothed distance from the stationary
    /// reading exceeds this fraction of omega. A sensor with gain `k` reads
    /// `omega / k`, so this must stay below `1 / k`.
    pub motion_threshold: f64,
    /// Minimum run length as a fraction of one revolution's duration.
    pub min_duration: f64,
    /// Sub-threshold gaps up to this many seconds inside a run are bridged.
    pub max_gap: f64,
    /// Width of the moving average applied before thresholding, seconds.
    pub smoothing: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            motion_threshold: 0.25,
            min_duration: 0.5,
            max_gap: 0.1,
            smoothing: 0.1,
        }
    }
}

/// Label value of samples outside any rotation.
pub const DWELL_LABEL: i64 = -1;

/// Splits a sample stream into one segment per protocol step.
///
/// With labels (any label `>= 0` present), samples are grouped by label;
/// each label must be contiguous and every step must be present. Otherwise
/// segments are detected as runs of motion separated by pauses.
pub fn segment_log(
    samples: &[GyroSample],
    protocol: &Protocol,
    labels: Option<&[i64]>,
    cfg: &SegmentationConfig,
) -> Result<SegmentedLog> {
    match labels {
        Some(l) if l.iter().any(|&v| v >= 0) => segment_by_labels(samples, protocol, l),
        _ => segment_by_motion(samples, protocol, cfg),
    }
}

fn segment_by_labels(
    samples: &[GyroSample],
    protocol: &Protocol,
    labels: &[i64],
) -> Result<SegmentedLog> {
    if labels.len() != samples.len() {
        return Err(Error::Parse(format!(
            "{} labels for {} samples",
            labels.len(),
            samples.len()
        )));
    }
    let n_steps = protocol.steps.len();
    let mut ranges: Vec<Option<Range<usize>>> = vec![None; n_steps];
    let mut i = 0;
    while i < labels.len() {
        let label = labels[i];
        let start = i;
        while i < labels.len() && labels[i] == label {
            i += 1;
        }
        if label == DWELL_LABEL {
            continue;
        }
        if label < 0 {
            return Err(Error::Parse(format!("invalid obs_id {label}")));
        }
        let idx = label as usize;
        if idx >= n_steps {
            return Err(Error::SegmentCount {
                expected: n_steps,
                found: idx + 1,
            });
        }
        if ranges[idx].is_some() {
            return Err(Error::OverlappingLabels { label });
        }
        ranges[idx] = Some(start..i);
    }
    let found = ranges.iter().filter(|r| r.is_some()).count();
    if found != n_steps {
        return Err(Error::SegmentCount {
            expected: n_steps,
            found,
        });
    }
    let segments = ranges
        .into_iter()
        .enumerate()
        .map(|(step, r)| {
            let range = r.expect("all steps present");
            Segment {
                step,
                samples: samples[range.clone()].to_vec(),
                range,
            }
        })
        .collect();
    Ok(SegmentedLog { segments })
}

fn segment_by_motion(
    samples: &[GyroSample],
    protocol: &Protocol,
    cfg: &SegmentationConfig,
) -> Result<SegmentedLog> {
    let n_steps = protocol.steps.len();
    let slowest = protocol
        .steps
        .iter()
        .map(|s| s.omega)
        .fold(f64::INFINITY, f64::min);
    let shortest = protocol
        .steps
        .iter()
        .map(ProtocolStep::duration)
        .fold(f64::INFINITY, f64::min);
    let rate = protocol.sample_rate;
    let threshold = cfg.motion_threshold * slowest;
    let min_len = ((cfg.min_duration * shortest * rate).ceil() as usize).max(1);
    let max_gap = (cfg.max_gap * rate).round() as usize;
    let half = ((cfg.smoothing * rate / 2.0).round() as usize).max(1);

    // prefix sums of the readings: moving averages and segment fits in O(1)
    let mut sum = Vec::with_capacity(samples.len() + 1);
    let mut sum_sq = Vec::with_capacity(samples.len() + 1);
    sum.push(Vec3::zeros());
    sum_sq.push(0.0);
    for s in samples {
        sum.push(sum[sum.len() - 1] + s.m);
        sum_sq.push(sum_sq[sum_sq.len() - 1] + s.m.norm_squared());
    }
    let mean = |r: Range<usize>| (sum[r.end] - sum[r.start]) / r.len() as f64;
    // squared deviation of a segment about its own mean
    let sse = |r: Range<usize>| {
        if r.is_empty() {
            return 0.0;
        }
        let s = sum[r.end] - sum[r.start];
        sum_sq[r.end] - sum_sq[r.start] - s.norm_squared() / r.len() as f64
    };

    let n = samples.len();
    let smooth: Vec<Vec3> = (0..n)
        .map(|i| mean(i.saturating_sub(half)..(i + half + 1).min(n)))
        .collect();
    // every axis is at rest for the majority of a six-step run, so the
    // per-axis median is the stationary reading (minus the bias)
    let baseline = Vec3::from_fn(|a, _| {
        let mut v: Vec<f64> = smooth.iter().map(|m| m[a]).collect();
        v.sort_by(f64::total_cmp);
        v.get(v.len() / 2).copied().unwrap_or(0.0)
    });
    let moving = |i: usize| (smooth[i] - baseline).norm() > threshold;

    let mut runs: Vec<Range<usize>> = Vec::new();
    let mut i = 0;
    while i < n {
        if moving(i) {
            let start = i;
            while i < n && moving(i) {
                i += 1;
            }
            match runs.last_mut() {
                Some(prev) if start - prev.end <= max_gap => prev.end = i,
                _ => runs.push(start..i),
            }
        } else {
            i += 1;
        }
    }
    runs.retain(|r| r.len() >= min_len);

    if runs.len() != n_steps {
        return Err(Error::SegmentCount {
            expected: n_steps,
            found: runs.len(),
        });
    }

    // place each edge at the best two-level split of the raw readings near
    // the smoothed crossing
    let search = 2 * half + 2;
    let context = 4 * search;
    let refine = |edge: usize, lo_limit: usize, hi_limit: usize| -> usize {
        let lo = edge.saturating_sub(context).max(lo_limit);
        let hi = (edge + context).min(hi_limit);
        let from = edge.saturating_sub(search).max(lo + 1);
        let to = (edge + search).min(hi.saturating_sub(1));
        (from..=to)
            .min_by(|&a, &b| (sse(lo..a) + sse(a..hi)).total_cmp(&(sse(lo..b) + sse(b..hi))))
            .unwrap_or(edge)
    };
    let bounds: Vec<(usize, usize)> = runs.iter().map(|r| (r.start, r.end)).collect();
    let refined: Vec<Range<usize>> = bounds
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let prev_end = if k == 0 { 0 } else { bounds[k - 1].1 };
            let next_start = bounds.get(k + 1).map_or(n, |b| b.0);
            let mid = start + (end - start) / 2;
            let s = refine(start, prev_end, mid);
            let e = refine(end, mid, next_start);
            s..e.max(s + 1)
        })
        .collect();

    Ok(SegmentedLog {
        segments: refined
            .into_iter()
            .enumerate()
            .map(|(step, range)| Segment {
                step,
                samples: samples[range.clone()].to_vec(),
                range,
            })
            .collect(),
    })
}
