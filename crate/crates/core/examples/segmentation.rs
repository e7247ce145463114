//! Splitting an unlabelled log into its six rotations.

use gyrocal::protocol::{segment_log, SegmentationConfig};
use gyrocal::simulator::{draw_truth, simulate_protocol_run, trial_rng};
use gyrocal::{g_optimal_protocol, SimConfig};

fn main() -> gyrocal::Result<()> {
    let cfg = SimConfig::default().with_seed(21);
    let protocol = g_optimal_protocol(1.0, cfg.sample_rate)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let truth = draw_truth(&cfg, &mut rng);
    let run = simulate_protocol_run(&truth, &protocol, &cfg, &mut rng)?;

    // ignore the labels and look for motion instead
    let found = segment_log(&run.stream, &protocol, None, &SegmentationConfig::default())?;
    println!("step  axis dir   true range      detected");
    for (s, (want, got)) in protocol.steps.iter().zip(run.segments.segments.iter().zip(&found.segments)) {
        println!(
            "{:>4}  {:?}    {:<4}  {:>5}..{:<5}  {:>5}..{:<5}",
            want.step,
            s.axis,
            format!("{:?}", s.direction),
            want.range.start,
            want.range.end,
            got.range.start,
            got.range.end
        );
    }
    println!("\n{} samples, {} in pauses", run.stream.len(), found.gaps(run.stream.len()).iter().map(|g| g.len()).sum::<usize>());
    Ok(())
}
