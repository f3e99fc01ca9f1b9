//! Three initial conditions of the hardening oscillator under `2 sin(6t)`
//! collapse onto one steady-state trajectory.
//!
//! `cargo run --release --example multi_ic_convergence`

use nlfrf::model::{duffing_preset, DuffingVariant};
use nlfrf::scenario::MdofScenario;
use nlfrf::sim::IntegratorConfig;

fn main() -> nlfrf::Result<()> {
    let scenario = MdofScenario::new(duffing_preset(DuffingVariant::Hardening36), IntegratorConfig::default());
    let report = scenario.multi_ic(None, 2.0, 6.0)?;
    println!("initial positions: {:?}", scenario.probe.initial_positions);
    for (k, (t, d)) in report.sample_times.iter().zip(&report.max_distance).enumerate() {
        if k % 500 == 0 {
            println!("t = {t:6.2}  max pairwise distance = {d:.3e}");
        }
    }
    println!("terminal distance {:.3e}", report.terminal_max_distance);
    if let Some(rate) = report.decay_rate {
        println!("fitted decay rate {rate:.3} 1/s (c/2m = 0.2)");
    }
    println!("converged below 1e-3: {}", report.converged(1e-3));
    Ok(())
}
