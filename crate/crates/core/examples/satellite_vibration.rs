//! Per-axis PD tuning of the tracking-controlled satellite and the RMS error
//! under reaction-wheel disturbance with and without the tuned term.
//!
//! `cargo run --release --example satellite_vibration`

use nlfrf::config::{Plant, ScenarioConfig};
use nlfrf::scenario::satellite_vibration_scenario;
use nlfrf::tracking::Disturbance;
use nlfrf::tuner::TuneOptions;

fn main() -> nlfrf::Result<()> {
    let r = ScenarioConfig::preset("satellite-rw")?.resolve()?;
    let Plant::Satellite { scenario, rw } = &r.plant else { unreachable!("satellite preset") };
    println!("target attitude (shadow set) {:?}", scenario.q_d.as_slice());
    for (a, w) in rw.harmonic_cells() {
        println!("wheel harmonic: amplitude {a:.4} N m at {w:.3} rad/s");
    }
    let options = TuneOptions { probe_tol: Some(r.probe.tol), ..Default::default() };
    let report = satellite_vibration_scenario(scenario, &Disturbance::Rw(rw.clone()), &r.adaptation, &r.grid, &options, &r.rms_window)?;
    let last = report.history.last().expect("records");
    println!("status {:?} after {} iterations", report.history.status, last.iteration);
    println!("theta_p = {:.3?}\ntheta_d = {:.3?}", last.theta_p, last.theta_d);
    if let Some(c) = report.comparison {
        println!("error RMS with u    {:?}", c.rms_controlled.map(|v| format!("{v:.3e}")));
        println!("error RMS without u {:?}", c.rms_uncontrolled.map(|v| format!("{v:.3e}")));
        println!("reduction {:.1}%", 100.0 * c.reduction);
    }
    Ok(())
}
