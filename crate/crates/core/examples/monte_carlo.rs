//! Error distribution of the estimates over random sensors.
//!
//! `cargo run --release --example monte_carlo -- 30 500` reproduces the
//! full-size campaign; the defaults are smaller.

use gyrocal::evaluation::{run_campaign, CampaignConfig};
use gyrocal::SimConfig;

fn main() -> gyrocal::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("counts"));
    let n_truths = args.next().unwrap_or(10);
    let n_trials = args.next().unwrap_or(100);

    for (label, sim) in [
        ("sigma 0.035", SimConfig::default()),
        ("sigma 0.2", SimConfig::default().with_noise(0.2)),
        ("extreme, sigma 0.035", SimConfig::extreme()),
    ] {
        let report = run_campaign(&CampaignConfig::new(sim.with_seed(1), n_truths, n_trials, 1.0))?;
        println!("{label}: {} trials, {} failed", report.trials, report.failed);
        println!("  param     min        q1         median     q3         max        mse");
        for p in &report.parameters {
            let q = p.quantiles;
            println!(
                "  {:<4} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e}",
                p.name, q.min, q.q1, q.median, q.q3, q.max, p.mse
            );
        }
    }
    Ok(())
}
