//! Energy-based tracking controller that renders the satellite loop convergent,
//! plus the closed-loop satellite vector field used by sweeps and simulations.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::model::HarmonicInput;
use crate::satellite::{
    eval_satellite_body_dynamics, jacobian_unchecked, lagrangian_form, lagrangian_form_unchecked, mrp_jacobian_rate,
    shadow_switch, RwDisturbanceModel, SatelliteParams,
};
use crate::sim::VectorField;

/// `K_r`, `Λ_r` and the adaptive part `Θ_r` of the tracking law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingControllerConfig {
    pub k_r: Matrix3<f64>,
    pub lambda_r: Matrix3<f64>,
    pub theta_r: Matrix3<f64>,
}

impl Default for TrackingControllerConfig {
    fn default() -> Self {
        Self {
            k_r: Matrix3::identity() * 2.0,
            lambda_r: Matrix3::identity() * 0.1,
            theta_r: Matrix3::zeros(),
        }
    }
}

fn is_symmetric(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

impl TrackingControllerConfig {
    pub fn new(k_r: Matrix3<f64>, lambda_r: Matrix3<f64>, theta_r: Matrix3<f64>) -> Result<Self> {
        if !is_symmetric(&k_r) || SymmetricEigen::new(k_r).eigenvalues.min() <= 0.0 {
            return Err(Error::InvalidArgument("K_r must be symmetric positive definite".into()));
        }
        let off_diag = lambda_r - Matrix3::from_diagonal(&lambda_r.diagonal());
        if off_diag.amax() != 0.0 || lambda_r.diagonal().min() <= 0.0 {
            return Err(Error::InvalidArgument("Lambda_r must be positive diagonal".into()));
        }
        if !is_symmetric(&theta_r) || SymmetricEigen::new(theta_r).eigenvalues.min() < -1e-12 {
            return Err(Error::InvalidArgument("Theta_r must be symmetric positive semidefinite".into()));
        }
        Ok(Self { k_r, lambda_r, theta_r })
    }
}

/// Desired attitude and its first two derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceState {
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    pub qddot: Vector3<f64>,
}

/// Desired attitude as a function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Constant(Vector3<f64>),
    /// `q_d(t) = center + amplitude ∘ sin(ω t)`.
    Sinusoid { center: Vector3<f64>, amplitude: Vector3<f64>, omega: f64 },
}

impl Reference {
    pub fn at(&self, t: f64) -> ReferenceState {
        match *self {
            Reference::Constant(q) => ReferenceState { q, qdot: Vector3::zeros(), qddot: Vector3::zeros() },
            Reference::Sinusoid { center, amplitude, omega } => {
                let (s, c) = (omega * t).sin_cos();
                ReferenceState {
                    q: center + amplitude * s,
                    qdot: amplitude * (omega * c),
                    qddot: amplitude * (-omega * omega * s),
                }
            }
        }
    }
}

/// `e = q − q_d`, `ė = q̇ − q̇_d`, `r = ė + Λ_r e`.
pub fn tracking_error(
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    q_d: &Vector3<f64>,
    qdot_d: &Vector3<f64>,
    lambda_r: &Matrix3<f64>,
) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let e = q - q_d;
    let edot = qdot - qdot_d;
    let r = edot + lambda_r * e;
    (e, edot, r)
}

/// Generalized torque `τ_s = H_s q̈^r + C_s q̇^r − (K_r + Θ_r)(q̇ − q̇^r)` with
/// `q̇^r = q̇_d − Λ_r e` and `q̈^r = q̈_d − Λ_r ė`. The body torque is `J_sᵀ τ_s`.
pub fn energy_tracking_control(
    params: &SatelliteParams,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    refs: &ReferenceState,
    config: &TrackingControllerConfig,
) -> Result<Vector3<f64>> {
    lagrangian_form(params, q, qdot)?;
    Ok(tracking_torque(params, q, qdot, refs, config))
}

fn tracking_torque(
    params: &SatelliteParams,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    refs: &ReferenceState,
    config: &TrackingControllerConfig,
) -> Vector3<f64> {
    let lf = lagrangian_form_unchecked(params, q, qdot);
    let (_, edot, r) = tracking_error(q, qdot, &refs.q, &refs.qdot, &config.lambda_r);
    let e = q - refs.q;
    let qr_dot = refs.qdot - config.lambda_r * e;
    let qr_ddot = refs.qddot - config.lambda_r * edot;
    lf.h_s * qr_ddot + lf.c_s * qr_dot - (config.k_r + config.theta_r) * r
}

/// External torque acting on the body.
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    None,
    /// `a sin(ω t)` along a fixed body direction.
    Harmonic { direction: Vector3<f64>, input: HarmonicInput },
    Rw(RwDisturbanceModel),
}

impl Disturbance {
    pub fn torque(&self, t: f64) -> Vector3<f64> {
        match self {
            Disturbance::None => Vector3::zeros(),
            Disturbance::Harmonic { direction, input } => direction * input.value(t),
            Disturbance::Rw(m) => m.torque(t),
        }
    }
}

/// Satellite under the tracking law, an optional PD term
/// `u_s = −Θ_p e − Θ_d ė` (in MRP coordinates) and a disturbance. State `(q, ω_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteLoop {
    pub params: SatelliteParams,
    pub tracking: TrackingControllerConfig,
    pub reference: Reference,
    pub pd: Option<(Matrix3<f64>, Matrix3<f64>)>,
    pub disturbance: Disturbance,
}

/// Terms of `H_s ṙ + (C_s + K_r + Θ_r) r = u_s + J⁻ᵀ w` at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RResidual {
    pub r: Vector3<f64>,
    pub residual: f64,
    pub scale: f64,
}

fn split(x: &[f64]) -> (Vector3<f64>, Vector3<f64>) {
    (Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]))
}

impl SatelliteLoop {
    /// PD torque in MRP coordinates.
    pub fn pd_term(&self, e: &Vector3<f64>, edot: &Vector3<f64>) -> Vector3<f64> {
        match &self.pd {
            Some((tp, td)) => -(tp * e) - td * edot,
            None => Vector3::zeros(),
        }
    }

    /// `(tracking body torque, PD body torque, disturbance)` at `(t, q, ω)`.
    pub fn torques(&self, t: f64, q: &Vector3<f64>, w: &Vector3<f64>) -> [Vector3<f64>; 3] {
        let j = jacobian_unchecked(q);
        let qdot = j * w;
        let refs = self.reference.at(t);
        let tau_s = tracking_torque(&self.params, q, &qdot, &refs, &self.tracking);
        let u_s = self.pd_term(&(q - refs.q), &(qdot - refs.qdot));
        let jt = j.transpose();
        [jt * tau_s, jt * u_s, self.disturbance.torque(t)]
    }

    /// Errors `e` (first three) and `ė` (last three) at state `x`.
    pub fn error_channels(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (q, w) = split(x);
        let refs = self.reference.at(t);
        let qdot = jacobian_unchecked(&q) * w;
        for k in 0..3 {
            out[k] = q[k] - refs.q[k];
            out[3 + k] = qdot[k] - refs.qdot[k];
        }
    }

    /// Closed-loop residual of the `r` dynamics at `(t, x)`.
    pub fn r_residual(&self, t: f64, x: &[f64]) -> RResidual {
        let (q, w) = split(x);
        let [tau, u, dist] = self.torques(t, &q, &w);
        let wdot = eval_satellite_body_dynamics(&self.params, &w, &(tau + u + dist));
        let qdot = jacobian_unchecked(&q) * w;
        let lf = lagrangian_form_unchecked(&self.params, &q, &qdot);
        let qddot = mrp_jacobian_rate(&q, &qdot) * w + lf.j * wdot;
        let refs = self.reference.at(t);
        let (e, edot, r) = tracking_error(&q, &qdot, &refs.q, &refs.qdot, &self.tracking.lambda_r);
        let qr_ddot = refs.qddot - self.tracking.lambda_r * edot;
        let rdot = qddot - qr_ddot;
        let terms = [
            lf.h_s * rdot,
            lf.c_s * r,
            (self.tracking.k_r + self.tracking.theta_r) * r,
            -self.pd_term(&e, &edot),
            -(lf.j_inv.transpose() * dist),
        ];
        let sum: Vector3<f64> = terms.iter().sum();
        let scale = terms.iter().map(|v| v.norm()).fold(0.0, f64::max);
        RResidual { r, residual: sum.norm(), scale }
    }
}

impl VectorField for SatelliteLoop {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let (q, w) = split(x);
        let [tau, u, dist] = self.torques(t, &q, &w);
        let qd = jacobian_unchecked(&q) * w;
        let wd = eval_satellite_body_dynamics(&self.params, &w, &(tau + u + dist));
        dx[..3].copy_from_slice(qd.as_slice());
        dx[3..].copy_from_slice(wd.as_slice());
    }

    fn project(&self, x: &mut [f64]) {
        shadow_switch(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tracking_error_examples() {
        let z = Vector3::zeros();
        let q = Vector3::new(0.2, -0.1, 0.3);
        let l2 = Matrix3::identity() * 2.0;
        let (_, _, r) = tracking_error(&q, &z, &q, &z, &l2);
        assert_eq!(r, z);
        let (e, edot, r) = tracking_error(&Vector3::new(1.0, 0.0, 0.0), &z, &z, &z, &l2);
        assert_eq!((e, edot, r), (Vector3::new(1.0, 0.0, 0.0), z, Vector3::new(2.0, 0.0, 0.0)));
        let e = Vector3::new(0.3, -0.4, 0.1);
        let (_, _, r) = tracking_error(&e, &(-(l2 * e)), &z, &z, &l2);
        assert!(r.norm() < 1e-15);
    }

    #[test]
    fn control_vanishes_at_perfect_tracking() {
        let p = SatelliteParams::default();
        let q = Vector3::new(0.1, 0.2, -0.3);
        let refs = ReferenceState { q, qdot: Vector3::zeros(), qddot: Vector3::zeros() };
        let tau = energy_tracking_control(&p, &q, &Vector3::zeros(), &refs, &Default::default()).unwrap();
        assert_eq!(tau, Vector3::zeros());
        let far = Vector3::new(1.1, 0.0, 0.0);
        assert!(energy_tracking_control(&p, &far, &Vector3::zeros(), &refs, &Default::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let i = Matrix3::identity();
        assert!(TrackingControllerConfig::new(i, i, Matrix3::zeros()).is_ok());
        assert!(TrackingControllerConfig::new(-i, i, Matrix3::zeros()).is_err());
        let mut l = i;
        l[(0, 1)] = 0.1;
        assert!(TrackingControllerConfig::new(i, l, Matrix3::zeros()).is_err());
        assert!(TrackingControllerConfig::new(i, i, -i).is_err());
    }

    #[test]
    fn sinusoid_reference_derivatives() {
        let r = Reference::Sinusoid {
            center: Vector3::new(0.1, 0.0, 0.0),
            amplitude: Vector3::new(0.2, 0.1, 0.05),
            omega: 0.7,
        };
        let (t, h) = (1.3, 1e-5);
        let fd = (r.at(t + h).q - r.at(t - h).q) / (2.0 * h);
        assert_relative_eq!(fd, r.at(t).qdot, epsilon = 1e-9);
        let fd2 = (r.at(t + h).qdot - r.at(t - h).qdot) / (2.0 * h);
        assert_relative_eq!(fd2, r.at(t).qddot, epsilon = 1e-9);
    }

    #[test]
    fn residual_is_zero_pointwise() {
        let lp = SatelliteLoop {
            params: SatelliteParams::default(),
            tracking: TrackingControllerConfig { theta_r: Matrix3::identity() * 0.5, ..Default::default() },
            reference: Reference::Constant(Vector3::new(-0.8, -0.4, 0.0)),
            pd: Some((Matrix3::identity() * 3.0, Matrix3::identity() * 7.0)),
            disturbance: Disturbance::Harmonic {
                direction: Vector3::new(0.0, 1.0, 0.0),
                input: HarmonicInput::new(0.3, 0.5).unwrap(),
            },
        };
        let x = [0.1, -0.2, 0.3, 0.05, -0.02, 0.1];
        let res = lp.r_residual(0.8, &x);
        assert!(res.residual <= 1e-12 * res.scale, "{res:?}");
    }
}
