//! Motion-based segmentation of unlabelled simulated logs.

use gyrocal::protocol::{segment_log, SegmentationConfig};
use gyrocal::simulator::{draw_truth, simulate_protocol_run, trial_rng};
use gyrocal::{g_optimal_protocol, SimConfig};

fn boundary_error(omega: f64, sim: SimConfig, seed: u64) -> usize {
    let protocol = g_optimal_protocol(omega, sim.sample_rate).unwrap();
    let mut rng = trial_rng(seed, 0);
    let truth = draw_truth(&sim, &mut rng);
    let run = simulate_protocol_run(&truth, &protocol, &sim, &mut rng).unwrap();
    let found = segment_log(&run.stream, &protocol, None, &SegmentationConfig::default()).unwrap();
    run.segments
        .segments
        .iter()
        .zip(&found.segments)
        .map(|(a, b)| {
            assert_eq!(a.step, b.step);
            a.range.start.abs_diff(b.range.start).max(a.range.end.abs_diff(b.range.end))
        })
        .max()
        .unwrap()
}

#[test]
fn boundaries_within_two_samples_at_one_rad_per_second() {
    for seed in 0..20 {
        let err = boundary_error(1.0, SimConfig::default(), seed);
        assert!(err <= 2, "seed {seed}: {err} samples");
    }
}

#[test]
fn boundaries_hold_across_speeds_and_noise() {
    for omega in [0.3, 0.5, 2.0, 3.0] {
        for seed in 0..5 {
            assert!(boundary_error(omega, SimConfig::default(), seed) <= 2, "omega {omega} seed {seed}");
        }
    }
    for seed in 0..5 {
        let err = boundary_error(1.0, SimConfig::default().with_noise(0.2), seed);
        assert!(err <= 2, "sigma 0.2 seed {seed}: {err}");
    }
}

#[test]
fn labelled_and_detected_segments_give_the_same_estimate() {
    use gyrocal::{solve, Solver, SolverConfig};
    let sim = SimConfig::default();
    let protocol = g_optimal_protocol(1.0, sim.sample_rate).unwrap();
    let mut rng = trial_rng(44, 0);
    let truth = draw_truth(&sim, &mut rng);
    let run = simulate_protocol_run(&truth, &protocol, &sim, &mut rng).unwrap();
    let labelled = segment_log(&run.stream, &protocol, Some(&run.labels), &SegmentationConfig::default()).unwrap();
    let detected = segment_log(&run.stream, &protocol, None, &SegmentationConfig::default()).unwrap();
    let cfg = SolverConfig::default();
    let a = solve(&labelled.observations(&protocol, None).unwrap(), &cfg, Solver::Ils).unwrap();
    let b = solve(&detected.observations(&protocol, None).unwrap(), &cfg, Solver::Ils).unwrap();
    for (x, y) in a.params.to_array().iter().zip(b.params.to_array()) {
        assert!((x - y).abs() < 1e-3);
    }
}

#[test]
fn large_biases_do_not_look_like_motion() {
    // |b| up to 0.2 rad/s exceeds half of a 0.3 rad/s rotation
    for seed in 0..5 {
        let err = boundary_error(0.3, SimConfig::extreme(), seed);
        assert!(err <= 2, "seed {seed}: {err}");
    }
}
