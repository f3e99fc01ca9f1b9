//! Energy-based attitude tracking: exponential decay of the sliding variable
//! `r`, the closed-loop residual, and torque-free conservation.
//!
//! `cargo run --release --example satellite_tracking`

use nalgebra::{Matrix3, Vector3};
use nlfrf::satellite::torque_free_drift;
use nlfrf::satellite::SatelliteParams;
use nlfrf::sim::{fit_decay_rate, integrate, IntegratorConfig};
use nlfrf::tracking::{Disturbance, Reference, SatelliteLoop, TrackingControllerConfig};

fn main() -> nlfrf::Result<()> {
    let params = SatelliteParams::default();
    let (e0, de, dm) = torque_free_drift(&params, Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.3, -0.2, 0.5), 1e-3, 100.0)?;
    println!("torque-free: E0 = {e0:.4} J, energy drift {de:.2e}, momentum drift {dm:.2e}");

    let lp = SatelliteLoop {
        params,
        tracking: TrackingControllerConfig::new(Matrix3::identity() * 20.0, Matrix3::identity() * 0.5, Matrix3::zeros())?,
        reference: Reference::Sinusoid {
            center: Vector3::new(0.1, 0.2, -0.1),
            amplitude: Vector3::new(0.05, 0.05, 0.05),
            omega: 0.1,
        },
        pd: None,
        disturbance: Disturbance::None,
    };
    let cfg = IntegratorConfig { step_h: 0.01, ..Default::default() };
    let tr = integrate(&lp, &[0.0; 6], (0.0, 300.0), &cfg)?;
    let mut times = Vec::new();
    let mut norms = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, x) in tr.states().enumerate() {
        let res = lp.r_residual(tr.times[k], x);
        worst = worst.max(res.residual / res.scale.max(f64::MIN_POSITIVE));
        times.push(tr.times[k]);
        norms.push(res.r.norm());
        if k % 5_000 == 0 {
            println!("t = {:6.1}  |r| = {:.3e}", tr.times[k], res.r.norm());
        }
    }
    println!("|r(T)| / |r(0)| = {:.3e}", norms.last().unwrap() / norms[0]);
    println!("fitted decay rate {:.4} 1/s", fit_decay_rate(&times, &norms).unwrap_or(f64::NAN));
    println!("worst relative residual {worst:.2e}");
    Ok(())
}
