//! Tracking a sinusoidal rotation before and after calibration.

use gyrocal::evaluation::before_after_metrics;
use gyrocal::simulator::{draw_truth, simulate_observations, simulate_sine_tracking, trial_rng};
use gyrocal::{g_optimal_protocol, solve, SimConfig, Solver, SolverConfig};

fn main() -> gyrocal::Result<()> {
    let cfg = SimConfig::default().with_seed(8);
    let mut rng = trial_rng(cfg.seed, 0);
    let truth = draw_truth(&cfg, &mut rng);
    let obs = simulate_observations(&truth, &g_optimal_protocol(1.0, cfg.sample_rate)?, &cfg, &mut rng)?;
    let estimate = solve(&obs, &SolverConfig::default(), Solver::Ils)?.params;

    let track = simulate_sine_tracking(&truth, &estimate, 1.0, 0.75, 20.0, &cfg, &mut rng)?;
    let m = before_after_metrics(&track.actual, &track.raw, &track.calibrated)?;
    for (i, axis) in ["x", "y", "z"].iter().enumerate() {
        println!(
            "{axis}: rms error {:.4} -> {:.4} rad/s",
            m.before[i].sqrt(),
            m.after[i].sqrt()
        );
    }
    // without reading noise the remaining error is the estimation error alone
    let quiet = SimConfig { noise_sigma: 0.0, ..cfg };
    let track = simulate_sine_tracking(&truth, &estimate, 1.0, 0.75, 20.0, &quiet, &mut rng)?;
    let m = before_after_metrics(&track.actual, &track.raw, &track.calibrated)?;
    println!("noise-free before/after mse ratio {:.0?}", m.ratio());
    Ok(())
}
