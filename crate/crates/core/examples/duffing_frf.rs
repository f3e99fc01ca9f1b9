//! FRF sweeps of the linear and hardening Duffing oscillators.
//!
//! `cargo run --release --example duffing_frf`

use nlfrf::frf::{ExcitationGrid, SweepOptions};
use nlfrf::model::{duffing_preset, DuffingVariant};
use nlfrf::scenario::MdofScenario;
use nlfrf::sim::IntegratorConfig;

fn main() -> nlfrf::Result<()> {
    let grid = ExcitationGrid::duffing_default();
    for variant in [DuffingVariant::Linear, DuffingVariant::Hardening36, DuffingVariant::Hardening100] {
        let scenario = MdofScenario::new(duffing_preset(variant), IntegratorConfig::default());
        let frf = scenario.frf(None, &grid, &SweepOptions::default())?;
        let x1 = &frf.position[0];
        println!("{variant:?}: ||F0(x1)||_F = {:.4}", x1.frobenius_norm()?);
        for (a, w) in grid.amplitudes().iter().zip(x1.argmax_frequency_per_amplitude()) {
            let j = grid.frequencies().iter().position(|&f| f == w).unwrap_or(0);
            let i = grid.amplitudes().iter().position(|&v| v == *a).unwrap_or(0);
            println!("  a = {a:4.1}  peak at w = {w:5.3}  gamma = {:.4}", x1.gains[(i, j)]);
        }
    }
    Ok(())
}
