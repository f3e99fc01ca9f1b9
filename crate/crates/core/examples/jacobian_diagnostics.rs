//! Symmetric-part definiteness of the Duffing Jacobian, with and without the
//! coordinate transform, open and closed loop.
//!
//! `cargo run --release --example jacobian_diagnostics`

use nlfrf::convergence::{sample_region_check, Transform};
use nlfrf::model::{duffing_preset, DuffingVariant};
use nlfrf::tuner::PdGains;

fn main() -> nlfrf::Result<()> {
    let bx = [(-2.0, 2.0), (-5.0, 5.0)];
    let gains = PdGains::diagonal(&[6.0], &[3.2]);
    for variant in [DuffingVariant::Linear, DuffingVariant::Hardening36] {
        let sys = duffing_preset(variant);
        for (label, g) in [("open", None), ("closed", Some(&gains))] {
            for t in [Transform::Identity, Transform::Upsilon] {
                let r = sample_region_check(&sys, g, &bx, 512, t, 0)?;
                println!(
                    "{variant:?} {label:6} {t:?}: lambda_max(sym) = {:9.4} at {:?} -> {:?}",
                    r.lambda_max_sym, r.worst_state, r.verdict
                );
            }
        }
    }
    Ok(())
}
