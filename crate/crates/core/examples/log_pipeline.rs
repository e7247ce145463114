//! Simulated log on disk, calibrated with both solvers and compared, as the
//! `gyrocal` binary does it.

use gyrocal::cli::{cmd_calibrate, cmd_simulate};
use gyrocal::io::{compare_reports, RunConfig, Units};
use gyrocal::{CalibrationParams, SimConfig, Solver, Vec3};

fn main() -> gyrocal::Result<()> {
    let dir = std::env::temp_dir().join("gyrocal-example");
    std::fs::create_dir_all(&dir)?;
    let truth = CalibrationParams::new(Vec3::new(1.18, 1.16, 1.14), Vec3::new(0.008, -0.010, -0.004))?;
    let mut cfg = RunConfig {
        sim: SimConfig::default().with_seed(12),
        truth: Some(truth),
        ..RunConfig::default()
    };
    // a 60 deg/s protocol, written in degrees
    cfg.omega = 60f64.to_radians();
    let written = cmd_simulate(&cfg, &dir.join("lsm.csv"), Units::Deg)?;
    println!("log: {}", written.log.display());

    let ils = cmd_calibrate(&written.log, None, &cfg, Units::Deg)?;
    cfg.method = Solver::Lm;
    let lm = cmd_calibrate(&written.log, None, &cfg, Units::Deg)?;
    let cmp = compare_reports(&ils, &lm);
    println!("param  truth     ils        lm         delta");
    for (d, t) in cmp.deltas.iter().zip(truth.to_array()) {
        println!("{:<5} {t:>8.4} {:>10.6} {:>10.6} {:>10.1e}", d.param, d.a, d.b, d.delta);
    }
    println!("{} deltas at or above {}", cmp.flagged, cmp.threshold);
    Ok(())
}
