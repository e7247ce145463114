//! Iterates of the fixed-point solver on three hard sensors.

use gyrocal::evaluation::{convergence_cases, convergence_study};
use gyrocal::{SimConfig, SolverConfig};

fn main() -> gyrocal::Result<()> {
    let cases: Vec<_> = convergence_cases()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, SimConfig::default().with_seed(100 + i as u64)))
        .collect();
    for row in convergence_study(&cases, 1.0, &SolverConfig::default())? {
        println!("truth {:?}", row.truth.to_array());
        for (i, p) in row.params.iter().enumerate() {
            let a = p.to_array();
            println!(
                "  {:>2}  k = {:.4} {:.4} {:.4}  b = {:+.4} {:+.4} {:+.4}",
                i + 1, a[0], a[1], a[2], a[3], a[4], a[5]
            );
        }
        println!(
            "  converged after {} iterates, stable to 4 decimals from iterate {}\n",
            row.iterations, row.stable_at_four_decimals
        );
    }
    Ok(())
}
