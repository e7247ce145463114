//! Noise-free calibration: six ideal rotations, both solvers.

use gyrocal::estimator::{solve_ils_with_history, solve_lm};
use gyrocal::{g_optimal_protocol, CalibrationParams, SolverConfig, Vec3};

fn main() -> gyrocal::Result<()> {
    let truth = CalibrationParams::new(
        Vec3::new(1.9074, 1.9529, 1.5635),
        Vec3::new(0.0827, 0.0265, -0.0805),
    )?;
    let protocol = g_optimal_protocol(1.0, 200.0)?;
    let obs = protocol.ideal_observations(&truth)?;

    let cfg = SolverConfig {
        tolerance: 1e-13,
        ..SolverConfig::default()
    };
    let (ils, history) = solve_ils_with_history(&obs, &cfg)?;
    println!("iterate  beta0 used");
    for (i, b) in history.iter().enumerate() {
        println!("{:>7}  {:.12}", i + 1, b.beta0());
    }
    let lm = solve_lm(&obs, &cfg)?;

    println!("\nparam    truth        ils          lm");
    let names = gyrocal::model::PARAM_NAMES;
    for (j, name) in names.iter().enumerate() {
        println!(
            "{name:<6} {:>11.8} {:>12.8} {:>12.8}",
            truth.to_array()[j],
            ils.params.to_array()[j],
            lm.params.to_array()[j]
        );
    }

    // the calibrated reading of a stationary sensor is zero
    let still = truth.invert(&Vec3::zeros())?;
    println!("\nstationary reading {still:.4?} -> {:.2e}", ils.params.apply(&still).norm());
    Ok(())
}
