//! Multi-degree-of-freedom mechanical systems with odd polynomial stiffness.
//!
//! `M q̈ + C q̇ + K q + Φ(q) = Λ w + Γ u`, where `Φ_i(q) = Σ_p b_{i,2p+1} q_i^{2p+1}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::VectorField;
use crate::tuner::PdGains;

/// One odd power term `coefficient · q^(2·order + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub order: u32,
    pub coefficient: f64,
}

/// Immutable MDOF system description.
#[derive(Debug, Clone, PartialEq)]
pub struct MdofSystem {
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    nonlin: Vec<Vec<PolyTerm>>,
    input_map: DVector<f64>,
    actuator: DMatrix<f64>,
    mass_inv: DMatrix<f64>,
}

/// `w(t) = a sin(ω t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicInput {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

impl HarmonicInput {
    pub fn new(amplitude: f64, omega: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) || !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "harmonic input needs a > 0 and omega > 0 (got a = {amplitude}, omega = {omega})"
            )));
        }
        Ok(Self { amplitude, omega, phase: 0.0 })
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }
}

/// Which cubic stiffness the single-DOF Duffing oscillator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuffingVariant {
    /// `k_c = 36`, the tuning example.
    Hardening36,
    /// `k_c = 100`, the strongly hardening contour example.
    Hardening100,
    /// `k_c = 0`.
    Linear,
}

impl DuffingVariant {
    pub fn cubic_coefficient(self) -> f64 {
        match self {
            DuffingVariant::Hardening36 => 36.0,
            DuffingVariant::Hardening100 => 100.0,
            DuffingVariant::Linear => 0.0,
        }
    }
}

/// `m = 1`, `c = 0.4`, `k = 36` with the chosen cubic coefficient.
pub fn duffing_preset(variant: DuffingVariant) -> MdofSystem {
    let kc = variant.cubic_coefficient();
    let nonlin = if kc > 0.0 {
        vec![vec![PolyTerm { order: 1, coefficient: kc }]]
    } else {
        vec![vec![]]
    };
    MdofSystem::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.4),
        DMatrix::from_element(1, 1, 36.0),
        DVector::from_element(1, 1.0),
        nonlin,
    )
    .expect("Duffing preset is valid")
}

fn check_spd(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lmax = eig.max();
    let lmin = eig.min();
    if !(lmax > 0.0 && lmin > 1e-12 * lmax) {
        return Err(Error::InvalidArgument(format!(
            "{name} is not positive definite (eigenvalues in [{lmin:e}, {lmax:e}])"
        )));
    }
    Ok(())
}

impl MdofSystem {
    /// Builds a system with `Γ = I`. Validates SPD matrices and positive coefficients.
    pub fn new(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        input_map: DVector<f64>,
        nonlin: Vec<Vec<PolyTerm>>,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("system needs at least one DOF".into()));
        }
        check_spd("M", &mass, n)?;
        check_spd("C", &damping, n)?;
        check_spd("K", &stiffness, n)?;
        if input_map.len() != n {
            return Err(Error::Dimension { expected: n, got: input_map.len() });
        }
        if nonlin.len() != n {
            return Err(Error::Dimension { expected: n, got: nonlin.len() });
        }
        for (i, terms) in nonlin.iter().enumerate() {
            for t in terms {
                if t.order < 1 || !(t.coefficient > 0.0 && t.coefficient.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "DOF {i}: nonlinear term needs order >= 1 and coefficient > 0 (got p = {}, b = {})",
                        t.order, t.coefficient
                    )));
                }
            }
        }
        let mass_inv = mass
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("M is singular".into()))?;
        Ok(Self {
            actuator: DMatrix::identity(n, n),
            mass,
            damping,
            stiffness,
            nonlin,
            input_map,
            mass_inv,
        })
    }

    /// Replaces the actuator map `Γ`.
    pub fn with_actuator(mut self, actuator: DMatrix<f64>) -> Result<Self> {
        let n = self.n_q();
        if actuator.nrows() != n || actuator.ncols() != n {
            return Err(Error::Dimension { expected: n, got: actuator.nrows() });
        }
        self.actuator = actuator;
        Ok(self)
    }

    pub fn n_q(&self) -> usize {
        self.mass.nrows()
    }
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }
    pub fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.mass_inv
    }
    pub fn input_map(&self) -> &DVector<f64> {
        &self.input_map
    }
    pub fn actuator(&self) -> &DMatrix<f64> {
        &self.actuator
    }
    pub fn nonlinear_terms(&self) -> &[Vec<PolyTerm>] {
        &self.nonlin
    }
    pub fn is_linear(&self) -> bool {
        self.nonlin.iter().all(|t| t.is_empty())
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::Dimension { expected, got });
        }
        Ok(())
    }

    /// `Φ(q)`.
    pub fn eval_nonlinearity(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(q.len(), self.n_q())?;
        Ok(DVector::from_fn(self.n_q(), |i, _| phi(&self.nonlin[i], q[i])))
    }

    /// `Φ_J(q) = ∂Φ/∂q`, diagonal and non-negative.
    pub fn eval_nonlinearity_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(q.len(), self.n_q())?;
        Ok(DMatrix::from_diagonal(&DVector::from_fn(self.n_q(), |i, _| {
            dphi(&self.nonlin[i], q[i])
        })))
    }

    /// `ẋ` for state `x = (q, q̇)`, scalar excitation `w` (through `Λ`) and control `u`.
    pub fn eval_dynamics(&self, x: &DVector<f64>, w: f64, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n_q();
        self.check_len(x.len(), 2 * n)?;
        self.check_len(u.len(), n)?;
        let q = x.rows(0, n);
        let qd = x.rows(n, n);
        let phi_q = DVector::from_fn(n, |i, _| phi(&self.nonlin[i], q[i]));
        let force = &self.damping * qd + &self.stiffness * q + phi_q
            - &self.input_map * w
            - &self.actuator * u;
        let acc = -(&self.mass_inv * force);
        let mut dx = DVector::zeros(2 * n);
        dx.rows_mut(0, n).copy_from(&qd);
        dx.rows_mut(n, n).copy_from(&acc);
        Ok(dx)
    }

    /// Vector field of the PD loop `u = −Θ_p q − Θ_d q̇` (or open loop for `None`)
    /// under a harmonic input (or none).
    pub fn field(&self, gains: Option<&PdGains>, input: Option<HarmonicInput>) -> Result<MdofField> {
        let n = self.n_q();
        let mut k_eff = self.stiffness.clone();
        let mut c_eff = self.damping.clone();
        if let Some(g) = gains {
            if g.n() != n {
                return Err(Error::Dimension { expected: n, got: g.n() });
            }
            k_eff += &self.actuator * &g.theta_p;
            c_eff += &self.actuator * &g.theta_d;
        }
        let to_rows = |m: DMatrix<f64>| -> Vec<f64> {
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
        };
        Ok(MdofField {
            n,
            a_k: to_rows(&self.mass_inv * k_eff),
            a_c: to_rows(&self.mass_inv * c_eff),
            m_inv: to_rows(self.mass_inv.clone()),
            b_w: (&self.mass_inv * &self.input_map).iter().copied().collect(),
            nonlin: self.nonlin.clone(),
            input,
        })
    }
}

#[inline]
fn phi(terms: &[PolyTerm], q: f64) -> f64 {
    terms
        .iter()
        .map(|t| t.coefficient * q.powi(2 * t.order as i32 + 1))
        .sum()
}

#[inline]
fn dphi(terms: &[PolyTerm], q: f64) -> f64 {
    terms
        .iter()
        .map(|t| (2 * t.order + 1) as f64 * t.coefficient * q.powi(2 * t.order as i32))
        .sum()
}

/// Allocation-free closed-loop MDOF vector field (dense row-major storage).
#[derive(Debug, Clone)]
pub struct MdofField {
    n: usize,
    a_k: Vec<f64>,
    a_c: Vec<f64>,
    m_inv: Vec<f64>,
    b_w: Vec<f64>,
    nonlin: Vec<Vec<PolyTerm>>,
    input: Option<HarmonicInput>,
}

impl MdofField {
    pub fn input(&self) -> Option<HarmonicInput> {
        self.input
    }
}

impl VectorField for MdofField {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.n;
        let (q, qd) = x.split_at(n);
        let w = self.input.map_or(0.0, |h| h.value(t));
        dx[..n].copy_from_slice(qd);
        for i in 0..n {
            let row = i * n;
            let mut acc = self.b_w[i] * w;
            for j in 0..n {
                acc -= self.a_k[row + j] * q[j] + self.a_c[row + j] * qd[j];
                if !self.nonlin[j].is_empty() {
                    acc -= self.m_inv[row + j] * phi(&self.nonlin[j], q[j]);
                }
            }
            dx[n + i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn nonlinearity_values() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        assert_eq!(s.eval_nonlinearity(&v(&[0.0])).unwrap()[0], 0.0);
        assert_eq!(s.eval_nonlinearity(&v(&[1.0])).unwrap()[0], 36.0);
        assert_eq!(s.eval_nonlinearity(&v(&[-2.0])).unwrap()[0], -288.0);
        assert!(s.eval_nonlinearity(&v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn nonlinearity_jacobian_values() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        assert_eq!(s.eval_nonlinearity_jacobian(&v(&[0.0])).unwrap()[(0, 0)], 0.0);
        assert_eq!(s.eval_nonlinearity_jacobian(&v(&[1.0])).unwrap()[(0, 0)], 108.0);
        let s100 = duffing_preset(DuffingVariant::Hardening100);
        assert_eq!(s100.eval_nonlinearity_jacobian(&v(&[0.5])).unwrap()[(0, 0)], 75.0);
    }

    #[test]
    fn dynamics_examples() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        let u = v(&[0.0]);
        assert_eq!(s.eval_dynamics(&v(&[0.0, 0.0]), 0.0, &u).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(s.eval_dynamics(&v(&[1.0, 0.0]), 0.0, &u).unwrap().as_slice(), &[0.0, -72.0]);
        let d = s.eval_dynamics(&v(&[0.0, 1.0]), 2.0, &u).unwrap();
        assert_relative_eq!(d[0], 1.0);
        assert_relative_eq!(d[1], 1.6, epsilon = 1e-15);
    }

    #[test]
    fn presets() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        assert_eq!(s.mass()[(0, 0)], 1.0);
        assert_eq!(s.damping()[(0, 0)], 0.4);
        assert_eq!(s.stiffness()[(0, 0)], 36.0);
        assert_eq!(s.nonlinear_terms()[0], vec![PolyTerm { order: 1, coefficient: 36.0 }]);
        assert!(duffing_preset(DuffingVariant::Linear).is_linear());
        assert_eq!(
            duffing_preset(DuffingVariant::Hardening100).nonlinear_terms()[0][0].coefficient,
            100.0
        );
    }

    #[test]
    fn rejects_invalid_systems() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let neg = DMatrix::from_element(1, 1, -1.0);
        let lam = DVector::from_element(1, 1.0);
        assert!(MdofSystem::new(one.clone(), neg, one.clone(), lam.clone(), vec![vec![]]).is_err());
        let bad = vec![vec![PolyTerm { order: 1, coefficient: -3.0 }]];
        assert!(MdofSystem::new(one.clone(), one.clone(), one.clone(), lam.clone(), bad).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(MdofSystem::new(
            asym.clone(),
            asym.clone(),
            asym,
            DVector::zeros(2),
            vec![vec![], vec![]]
        )
        .is_err());
    }

    #[test]
    fn field_matches_eval_dynamics() {
        let s = MdofSystem::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 0.4]),
            DMatrix::from_row_slice(2, 2, &[40.0, -10.0, -10.0, 20.0]),
            v(&[1.0, 0.5]),
            vec![vec![PolyTerm { order: 1, coefficient: 5.0 }], vec![PolyTerm { order: 2, coefficient: 1.5 }]],
        )
        .unwrap();
        let g = PdGains::diagonal(&[3.0, 1.0], &[0.7, 0.2]);
        let input = HarmonicInput::new(2.0, 5.0).unwrap();
        let f = s.field(Some(&g), Some(input)).unwrap();
        let x = [0.3, -0.2, 0.5, 1.1];
        let t = 0.37;
        let mut dx = [0.0; 4];
        f.eval(t, &x, &mut dx);
        let xv = v(&x);
        let u = crate::tuner::pd_control(&g, &xv.rows(0, 2).into(), &xv.rows(2, 2).into()).unwrap();
        let want = s.eval_dynamics(&xv, input.value(t), &u).unwrap();
        for i in 0..4 {
            assert_relative_eq!(dx[i], want[i], epsilon = 1e-12);
        }
    }
}
