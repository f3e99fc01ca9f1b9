//! Adaptive PD tuning of the `k_c = 36` oscillator, then a time-domain check
//! at `a = 6, ω = 6`.
//!
//! `cargo run --release --example tune_duffing`

use nlfrf::config::{Plant, ScenarioConfig};
use nlfrf::model::HarmonicInput;
use nlfrf::tuner::{tune, TuneOptions};

fn peak_after(tr: &nlfrf::sim::Trajectory, settle: f64) -> f64 {
    tr.states()
        .zip(&tr.times)
        .filter(|(_, t)| **t >= settle)
        .map(|(x, _)| x[0].abs())
        .fold(0.0, f64::max)
}

fn main() -> nlfrf::Result<()> {
    let resolved = ScenarioConfig::preset("duffing-nonlinear-36")?.resolve()?;
    let Plant::Mdof(scenario) = &resolved.plant else { unreachable!("MDOF preset") };
    let history = tune(scenario, &resolved.grid, &resolved.adaptation, &TuneOptions::default())?;

    for r in history.records.iter().step_by(10).chain(history.last()) {
        println!(
            "iter {:3}  theta = ({:.3}, {:.3})  ||F|| = ({:.4}, {:.4})",
            r.iteration, r.theta_p[0], r.theta_d[0], r.fnorm_position[0], r.fnorm_velocity[0]
        );
    }
    println!("status {:?}", history.status);

    let gains = history.final_gains().expect("at least one record");
    let input = Some(HarmonicInput::new(6.0, 6.0)?);
    let open = scenario.simulate(None, input, &[0.0, 0.0], 60.0)?;
    let closed = scenario.simulate(Some(&gains), input, &[0.0, 0.0], 60.0)?;
    let (po, pc) = (peak_after(&open, 40.0), peak_after(&closed, 40.0));
    println!("steady peak: uncontrolled {po:.4}, controlled {pc:.4} ({:.0}% lower)", 100.0 * (1.0 - pc / po));
    Ok(())
}
