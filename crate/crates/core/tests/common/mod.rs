//! Measurements shared by the integration and acceptance targets.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use nlfrf::satellite::{lagrangian_form, SatelliteParams};
use nlfrf::sim::{fit_decay_rate, integrate, IntegratorConfig};
use nlfrf::tracking::{Disturbance, Reference, SatelliteLoop, TrackingControllerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest `|vᵀ(Ḣ_s − 2C_s)v| / (‖v‖² ‖Ḣ_s‖)` over `samples` random states.
pub fn worst_skew_ratio(samples: usize, seed: u64) -> f64 {
    let params = SatelliteParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v3 = |r: f64| Vector3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = v3(0.57);
        let qd = v3(1.0);
        let v = v3(1.0);
        let lf = lagrangian_form(&params, &q, &qd).unwrap();
        let h = 1e-6;
        let hp = lagrangian_form(&params, &(q + qd * h), &qd).unwrap().h_s;
        let hm = lagrangian_form(&params, &(q - qd * h), &qd).unwrap().h_s;
        let hdot = (hp - hm) / (2.0 * h);
        let quad = v.dot(&((hdot - 2.0 * lf.c_s) * v)).abs();
        worst = worst.max(quad / (v.norm_squared() * hdot.norm().max(f64::MIN_POSITIVE)));
    }
    worst
}

pub struct TrackingRun {
    pub r0: f64,
    pub r_end: f64,
    pub decay_rate: f64,
    pub worst_residual: f64,
}

/// Tracks a slow sinusoidal attitude from rest at the origin with `Θ_r = 0`.
pub fn tracking_run(k_r: f64, horizon: f64) -> TrackingRun {
    let tracking = TrackingControllerConfig::new(
        Matrix3::identity() * k_r,
        Matrix3::identity() * 0.5,
        Matrix3::zeros(),
    )
    .unwrap();
    let lp = SatelliteLoop {
        params: SatelliteParams::default(),
        tracking,
        reference: Reference::Sinusoid {
            center: Vector3::new(0.1, 0.2, -0.1),
            amplitude: Vector3::new(0.05, 0.05, 0.05),
            omega: 0.1,
        },
        pd: None,
        disturbance: Disturbance::None,
    };
    let cfg = IntegratorConfig { step_h: 0.01, ..Default::default() };
    let tr = integrate(&lp, &[0.0; 6], (0.0, horizon), &cfg).unwrap();
    let mut norms = Vec::with_capacity(tr.len());
    let mut worst: f64 = 0.0;
    for (k, x) in tr.states().enumerate() {
        let res = lp.r_residual(tr.times[k], x);
        worst = worst.max(res.residual / res.scale.max(f64::MIN_POSITIVE));
        norms.push(res.r.norm());
    }
    TrackingRun {
        r0: norms[0],
        r_end: *norms.last().unwrap(),
        decay_rate: fit_decay_rate(&tr.times, &norms).unwrap_or(f64::NAN),
        worst_residual: worst,
    }
}
