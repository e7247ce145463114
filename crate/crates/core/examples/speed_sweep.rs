//! Mean squared error of the estimates against rotation speed.

use gyrocal::evaluation::{default_speed_grid, speed_sweep, CampaignConfig};
use gyrocal::SimConfig;

fn main() -> gyrocal::Result<()> {
    let grid = default_speed_grid();
    let low = speed_sweep(&CampaignConfig::new(SimConfig::default().with_seed(3), 5, 40, 1.0), &grid)?;
    let high = speed_sweep(
        &CampaignConfig::new(SimConfig::default().with_noise(0.2).with_seed(3), 5, 40, 1.0),
        &grid,
    )?;
    println!("omega   scale mse    bias mse     scale mse (sigma 0.2)");
    for ((w, a), (b, c)) in grid
        .iter()
        .zip(low.scale_mse())
        .zip(low.bias_mse().into_iter().zip(high.scale_mse()))
    {
        println!("{w:>5.1}   {a:>10.3e}   {b:>10.3e}   {c:>10.3e}");
    }
    Ok(())
}
