//! Rigid-body attitude dynamics in Modified Rodrigues Parameters, the
//! Lagrangian-form transformation, and the reaction-wheel disturbance model.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{integrate, IntegratorConfig, VectorField};

/// Inertia of the rigid body (kg·m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteParams {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        Self::new(Matrix3::from_diagonal(&Vector3::new(10.0, 15.0, 20.0))).expect("valid inertia")
    }
}

impl SatelliteParams {
    pub fn new(inertia: Matrix3<f64>) -> Result<Self> {
        let scale = inertia.amax().max(f64::MIN_POSITIVE);
        if inertia.iter().any(|v| !v.is_finite()) || (inertia - inertia.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("inertia must be finite and symmetric".into()));
        }
        if SymmetricEigen::new(inertia).eigenvalues.min() <= 0.0 {
            return Err(Error::InvalidArgument("inertia must be positive definite".into()));
        }
        let inertia_inv = inertia.try_inverse().expect("positive definite");
        Ok(Self { inertia, inertia_inv })
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }
    pub fn inertia_inverse(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }
}

/// Attitude `q` and its rate `q̇`, kept inside the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrpAttitude {
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
}

impl MrpAttitude {
    pub fn new(q: Vector3<f64>, qdot: Vector3<f64>) -> Result<Self> {
        check_domain(&q)?;
        Ok(Self { q, qdot })
    }

    /// Same physical attitude, expressed with shadow MRPs; maps `q̇` consistently.
    pub fn shadow(&self) -> Self {
        let s2 = self.q.norm_squared();
        let q = -self.q / s2;
        let qdot = -self.qdot / s2 + self.q * (2.0 * self.q.dot(&self.qdot) / (s2 * s2));
        Self { q, qdot }
    }
}

/// `−q/|q|²`: the alternative MRP set for the same attitude.
pub fn shadow_set(q: &Vector3<f64>) -> Vector3<f64> {
    -q / q.norm_squared()
}

fn check_domain(q: &Vector3<f64>) -> Result<()> {
    let norm = q.norm();
    if norm < 1.0 {
        Ok(())
    } else {
        Err(Error::MrpDomain { norm })
    }
}

/// Cross-product matrix: `skew(v) u = v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn jacobian_unchecked(q: &Vector3<f64>) -> Matrix3<f64> {
    ((1.0 - q.norm_squared()) * Matrix3::identity() + 2.0 * skew(q) + 2.0 * q * q.transpose()) * 0.25
}

/// `J_s(q) = ¼[(1 − qᵀq) I + 2 skew(q) + 2 q qᵀ]`, so that `q̇ = J_s ω_s`.
pub fn mrp_kinematics_jacobian(q: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_domain(q)?;
    Ok(jacobian_unchecked(q))
}

/// Time derivative of `J_s` along `q̇`.
pub fn mrp_jacobian_rate(q: &Vector3<f64>, qdot: &Vector3<f64>) -> Matrix3<f64> {
    (-2.0 * q.dot(qdot) * Matrix3::identity()
        + 2.0 * skew(qdot)
        + 2.0 * (qdot * q.transpose() + q * qdot.transpose()))
        * 0.25
}

/// `ω̇_s = H⁻¹(τ − ω_s × H ω_s)`.
pub fn eval_satellite_body_dynamics(
    params: &SatelliteParams,
    omega: &Vector3<f64>,
    tau: &Vector3<f64>,
) -> Vector3<f64> {
    params.inertia_inv * (tau - omega.cross(&(params.inertia * omega)))
}

/// Inertia and Coriolis matrices in MRP coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianForm {
    pub h_s: Matrix3<f64>,
    pub c_s: Matrix3<f64>,
    pub j: Matrix3<f64>,
    pub j_inv: Matrix3<f64>,
    pub omega: Vector3<f64>,
}

/// `H_s = J⁻ᵀ H J⁻¹` and `C_s = −J⁻ᵀ H J⁻¹ J̇ J⁻¹ − J⁻ᵀ skew(H ω) J⁻¹` with `ω = J⁻¹ q̇`.
///
/// This factorization reproduces `H ω̇ + ω × H ω = τ` and makes `Ḣ_s − 2 C_s` skew-symmetric.
pub fn lagrangian_form(
    params: &SatelliteParams,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
) -> Result<LagrangianForm> {
    check_domain(q)?;
    Ok(lagrangian_form_unchecked(params, q, qdot))
}

pub(crate) fn lagrangian_form_unchecked(
    params: &SatelliteParams,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
) -> LagrangianForm {
    let j = jacobian_unchecked(q);
    let j_inv = j.try_inverse().expect("MRP Jacobian is invertible for finite q");
    let j_inv_t = j_inv.transpose();
    let omega = j_inv * qdot;
    let h = &params.inertia;
    let h_s = j_inv_t * h * j_inv;
    let jdot = mrp_jacobian_rate(q, qdot);
    let c_s = -(h_s * jdot * j_inv) - j_inv_t * skew(&(h * omega)) * j_inv;
    LagrangianForm { h_s, c_s, j, j_inv, omega }
}

/// `½ q̇ᵀ H_s(q) q̇`, equal to `½ ω_sᵀ H ω_s`.
pub fn kinetic_energy(params: &SatelliteParams, q: &Vector3<f64>, qdot: &Vector3<f64>) -> Result<f64> {
    let lf = lagrangian_form(params, q, qdot)?;
    Ok(0.5 * qdot.dot(&(lf.h_s * qdot)))
}

/// Wheel-speed unit used in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedUnit {
    #[default]
    #[serde(rename = "rev_per_s")]
    RevPerSec,
    #[serde(rename = "rad_per_s")]
    RadPerSec,
}

/// One harmonic of the wheel disturbance, with a phase per body axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwHarmonic {
    pub number: f64,
    pub amplitude: f64,
    pub phases: [f64; 3],
}

/// `w_rw,k(t) = Σ_i A_i Ω² sin(2π h_i Ω t + α_{i,k})` on each body axis `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwDisturbanceModel {
    pub harmonics: Vec<RwHarmonic>,
    /// Wheel speed in rev/s.
    pub wheel_speed: f64,
    pub seed: u64,
}

impl Default for RwDisturbanceModel {
    fn default() -> Self {
        Self::seeded(&[1.0, 2.0, 5.8], &[1e-4, 5e-5, 2e-5], 1.0, SpeedUnit::RevPerSec, 0)
            .expect("valid defaults")
    }
}

impl RwDisturbanceModel {
    /// Draws phases uniformly in `[0, 2π)` from `seed`.
    pub fn seeded(
        numbers: &[f64],
        amplitudes: &[f64],
        wheel_speed: f64,
        unit: SpeedUnit,
        seed: u64,
    ) -> Result<Self> {
        if numbers.len() != amplitudes.len() {
            return Err(Error::Dimension { expected: numbers.len(), got: amplitudes.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let harmonics = numbers
            .iter()
            .zip(amplitudes)
            .map(|(&number, &amplitude)| RwHarmonic {
                number,
                amplitude,
                phases: [0; 3].map(|_| rng.gen_range(0.0..2.0 * PI)),
            })
            .collect();
        let mut m = Self::with_phases(harmonics, wheel_speed, unit)?;
        m.seed = seed;
        Ok(m)
    }

    pub fn with_phases(harmonics: Vec<RwHarmonic>, wheel_speed: f64, unit: SpeedUnit) -> Result<Self> {
        for h in &harmonics {
            if !(h.number >= 1.0) || !(h.amplitude >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "harmonic needs number >= 1 and amplitude >= 0 (got {}, {})",
                    h.number, h.amplitude
                )));
            }
        }
        if !(wheel_speed >= 0.0 && wheel_speed.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid wheel speed {wheel_speed}")));
        }
        let wheel_speed = match unit {
            SpeedUnit::RevPerSec => wheel_speed,
            SpeedUnit::RadPerSec => wheel_speed / (2.0 * PI),
        };
        Ok(Self { harmonics, wheel_speed, seed: 0 })
    }

    /// Torque on each body axis at time `t`.
    pub fn torque(&self, t: f64) -> Vector3<f64> {
        let om = self.wheel_speed;
        let mut w = Vector3::zeros();
        for h in &self.harmonics {
            let amp = h.amplitude * om * om;
            let arg = 2.0 * PI * h.number * om * t;
            for k in 0..3 {
                w[k] += amp * (arg + h.phases[k]).sin();
            }
        }
        w
    }

    /// `(a, ω) = (A_i Ω², 2π h_i Ω)` per harmonic: where each line lands on an excitation grid.
    pub fn harmonic_cells(&self) -> Vec<(f64, f64)> {
        let om = self.wheel_speed;
        self.harmonics
            .iter()
            .map(|h| (h.amplitude * om * om, 2.0 * PI * h.number * om))
            .collect()
    }

    /// Lowest harmonic angular frequency (rad/s), if any harmonic is present.
    pub fn fundamental(&self) -> Option<f64> {
        self.harmonic_cells().into_iter().map(|c| c.1).reduce(f64::min)
    }
}

/// `rw_disturbance(model, t)`: torque per body axis.
pub fn rw_disturbance(model: &RwDisturbanceModel, t: f64) -> Vector3<f64> {
    model.torque(t)
}

/// Body-frame state `(q, ω)` under a torque law `τ(t, q, ω)`.
pub struct BodyField<T> {
    pub params: SatelliteParams,
    pub torque: T,
}

impl<T> BodyField<T>
where
    T: Fn(f64, &Vector3<f64>, &Vector3<f64>) -> Vector3<f64>,
{
    pub fn new(params: SatelliteParams, torque: T) -> Self {
        Self { params, torque }
    }
}

pub(crate) fn shadow_switch(x: &mut [f64]) {
    let s2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    if s2 > 1.0 {
        for v in &mut x[..3] {
            *v = -*v / s2;
        }
    }
}

impl<T> VectorField for BodyField<T>
where
    T: Fn(f64, &Vector3<f64>, &Vector3<f64>) -> Vector3<f64>,
{
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let q = Vector3::new(x[0], x[1], x[2]);
        let w = Vector3::new(x[3], x[4], x[5]);
        let qd = jacobian_unchecked(&q) * w;
        let tau = (self.torque)(t, &q, &w);
        let wd = eval_satellite_body_dynamics(&self.params, &w, &tau);
        dx[..3].copy_from_slice(qd.as_slice());
        dx[3..].copy_from_slice(wd.as_slice());
    }

    fn project(&self, x: &mut [f64]) {
        shadow_switch(x);
    }
}

/// Lagrangian-form state `(q, q̇)`: `H_s q̈ + C_s q̇ = τ_s(t, q, q̇)`.
pub struct LagrangianField<T> {
    pub params: SatelliteParams,
    pub torque: T,
}

impl<T> VectorField for LagrangianField<T>
where
    T: Fn(f64, &Vector3<f64>, &Vector3<f64>) -> Vector3<f64>,
{
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let q = Vector3::new(x[0], x[1], x[2]);
        let qd = Vector3::new(x[3], x[4], x[5]);
        let lf = lagrangian_form_unchecked(&self.params, &q, &qd);
        let tau = (self.torque)(t, &q, &qd);
        let qdd = lf
            .h_s
            .try_inverse()
            .expect("H_s is positive definite")
            * (tau - lf.c_s * qd);
        dx[..3].copy_from_slice(qd.as_slice());
        dx[3..].copy_from_slice(qdd.as_slice());
    }
}

/// Relative drift of kinetic energy and `‖H ω‖` along a torque-free body-frame run.
pub fn torque_free_drift(
    params: &SatelliteParams,
    q0: Vector3<f64>,
    omega0: Vector3<f64>,
    step: f64,
    duration: f64,
) -> Result<(f64, f64, f64)> {
    let field = BodyField::new(*params, |_, _: &Vector3<f64>, _: &Vector3<f64>| Vector3::zeros());
    let cfg = IntegratorConfig { step_h: step, ..Default::default() };
    let x0 = [q0.x, q0.y, q0.z, omega0.x, omega0.y, omega0.z];
    let tr = integrate(&field, &x0, (0.0, duration), &cfg)?;
    let energy = |x: &[f64]| -> Result<f64> {
        let q = Vector3::new(x[0], x[1], x[2]);
        let w = Vector3::new(x[3], x[4], x[5]);
        kinetic_energy(params, &q, &(mrp_kinematics_jacobian(&q)? * w))
    };
    let momentum = |x: &[f64]| (params.inertia() * Vector3::new(x[3], x[4], x[5])).norm();
    let e0 = energy(&x0)?;
    let m0 = momentum(&x0);
    let (mut de, mut dm) = (0.0f64, 0.0f64);
    for x in tr.states() {
        de = de.max((energy(x)? - e0).abs() / e0);
        dm = dm.max((momentum(x) - m0).abs() / m0);
    }
    Ok((e0, de, dm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        assert_eq!(
            skew(&Vector3::new(1.0, 0.0, 0.0)),
            Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)
        );
        let v = Vector3::new(0.3, -1.2, 2.5);
        let u = Vector3::new(-0.7, 0.1, 0.4);
        assert_relative_eq!(skew(&v) * u, v.cross(&u), epsilon = 1e-15);
        assert_eq!(skew(&v).transpose(), -skew(&v));
        assert!((skew(&v) * v).norm() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(mrp_kinematics_jacobian(&Vector3::zeros()).unwrap(), Matrix3::identity() * 0.25);
        let j = mrp_kinematics_jacobian(&Vector3::new(0.5, 0.0, 0.0)).unwrap();
        assert_relative_eq!(j[(0, 0)], 0.3125, epsilon = 1e-15);
        assert!(matches!(
            mrp_kinematics_jacobian(&Vector3::new(1.0, 0.0, 0.0)),
            Err(Error::MrpDomain { .. })
        ));
    }

    #[test]
    fn jacobian_rate_matches_finite_difference() {
        let q = Vector3::new(0.2, -0.3, 0.4);
        let qd = Vector3::new(0.5, 0.1, -0.7);
        let e = 1e-6;
        let fd = (jacobian_unchecked(&(q + qd * e)) - jacobian_unchecked(&(q - qd * e))) / (2.0 * e);
        assert_relative_eq!(mrp_jacobian_rate(&q, &qd), fd, epsilon = 1e-9);
    }

    #[test]
    fn body_dynamics_examples() {
        let p = SatelliteParams::default();
        assert_eq!(eval_satellite_body_dynamics(&p, &Vector3::zeros(), &Vector3::zeros()), Vector3::zeros());
        let sphere = SatelliteParams::new(Matrix3::identity()).unwrap();
        let w = Vector3::new(0.3, -2.0, 1.1);
        assert!(eval_satellite_body_dynamics(&sphere, &w, &Vector3::zeros()).norm() < 1e-15);
        // H = diag(2,1,1), ω = (0,1,1): Hω = (0,1,1) so ω × Hω = 0.
        let p2 = SatelliteParams::new(Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0))).unwrap();
        let wd = eval_satellite_body_dynamics(&p2, &Vector3::new(0.0, 1.0, 1.0), &Vector3::zeros());
        assert_eq!(wd, Vector3::zeros());
        // ω = (1,1,0): Hω = (2,1,0), ω × Hω = (0,0,-1), so ω̇ = (0,0,1).
        let wd = eval_satellite_body_dynamics(&p2, &Vector3::new(1.0, 1.0, 0.0), &Vector3::zeros());
        assert_relative_eq!(wd, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn lagrangian_form_at_origin() {
        let p = SatelliteParams::new(Matrix3::identity()).unwrap();
        let lf = lagrangian_form(&p, &Vector3::zeros(), &Vector3::zeros()).unwrap();
        assert_relative_eq!(lf.h_s, Matrix3::identity() * 16.0, epsilon = 1e-12);
        assert_eq!(lf.c_s, Matrix3::zeros());
        assert!(lagrangian_form(&p, &Vector3::new(0.0, 1.2, 0.0), &Vector3::zeros()).is_err());
    }

    #[test]
    fn lagrangian_form_reproduces_body_dynamics() {
        let p = SatelliteParams::default();
        let q = Vector3::new(0.3, -0.2, 0.5);
        let w = Vector3::new(0.4, 0.9, -0.3);
        let tau = Vector3::new(0.2, -0.1, 0.05);
        let j = jacobian_unchecked(&q);
        let qd = j * w;
        let wd = eval_satellite_body_dynamics(&p, &w, &tau);
        let qdd = mrp_jacobian_rate(&q, &qd) * w + j * wd;
        let lf = lagrangian_form(&p, &q, &qd).unwrap();
        let lhs = lf.h_s * qdd + lf.c_s * qd;
        let rhs = lf.j_inv.transpose() * tau;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn kinetic_energy_examples() {
        let p = SatelliteParams::new(Matrix3::identity()).unwrap();
        assert_eq!(kinetic_energy(&p, &Vector3::zeros(), &Vector3::zeros()).unwrap(), 0.0);
        assert_relative_eq!(
            kinetic_energy(&p, &Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0)).unwrap(),
            8.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rw_examples() {
        let zero = RwDisturbanceModel::seeded(&[1.0, 2.0], &[0.0, 0.0], 3.0, SpeedUnit::RevPerSec, 4).unwrap();
        assert_eq!(zero.torque(0.7), Vector3::zeros());
        let one = RwDisturbanceModel::with_phases(
            vec![RwHarmonic { number: 1.0, amplitude: 1.0, phases: [0.0; 3] }],
            2.0,
            SpeedUnit::RevPerSec,
        )
        .unwrap();
        assert_eq!(one.torque(0.0)[0], 0.0);
        assert_relative_eq!(one.torque(1.0 / 16.0)[0], 2.828, epsilon = 1e-3);
        let mut fast = one.clone();
        fast.wheel_speed = 4.0;
        // Peak of A Ω² sin(·) over a period.
        let peak = |m: &RwDisturbanceModel| {
            (0..4000).map(|k| m.torque(k as f64 * 1e-4)[0].abs()).fold(0.0, f64::max)
        };
        assert_relative_eq!(peak(&fast) / peak(&one), 4.0, epsilon = 1e-3);
    }

    #[test]
    fn rw_phases_are_reproducible() {
        let a = RwDisturbanceModel::seeded(&[1.0, 2.0, 5.8], &[1.0; 3], 1.0, SpeedUnit::RevPerSec, 9).unwrap();
        let b = RwDisturbanceModel::seeded(&[1.0, 2.0, 5.8], &[1.0; 3], 1.0, SpeedUnit::RevPerSec, 9).unwrap();
        let c = RwDisturbanceModel::seeded(&[1.0, 2.0, 5.8], &[1.0; 3], 1.0, SpeedUnit::RevPerSec, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.harmonics, c.harmonics);
        let rad = RwDisturbanceModel::seeded(&[1.0], &[1.0], 2.0 * PI, SpeedUnit::RadPerSec, 0).unwrap();
        assert_relative_eq!(rad.wheel_speed, 1.0);
        assert_relative_eq!(rad.harmonic_cells()[0].1, 2.0 * PI);
        assert!(RwDisturbanceModel::seeded(&[0.5], &[1.0], 1.0, SpeedUnit::RevPerSec, 0).is_err());
    }

    #[test]
    fn shadow_preserves_attitude_rotation() {
        // Rotation matrices of both MRP sets coincide.
        let rot = |q: &Vector3<f64>| {
            let s = skew(q);
            let s2 = q.norm_squared();
            Matrix3::identity() + (8.0 * s * s - 4.0 * (1.0 - s2) * s) / (1.0 + s2).powi(2)
        };
        let q = Vector3::new(1.0, 0.5, 0.0);
        assert_relative_eq!(rot(&q), rot(&shadow_set(&q)), epsilon = 1e-12);
        assert_relative_eq!(shadow_set(&q), Vector3::new(-0.8, -0.4, 0.0), epsilon = 1e-15);
        let att = MrpAttitude { q: Vector3::new(0.2, 0.3, -0.1), qdot: Vector3::new(0.1, -0.2, 0.3) };
        let back = att.shadow().shadow();
        assert_relative_eq!(back.q, att.q, epsilon = 1e-12);
        assert_relative_eq!(back.qdot, att.qdot, epsilon = 1e-12);
    }
}
