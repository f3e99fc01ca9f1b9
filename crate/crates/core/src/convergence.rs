//! Jacobians, the constant-metric generalized Jacobian `Υ J Υ⁻¹`, and
//! symmetric-part definiteness diagnostics over sampled state regions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MdofSystem;
use crate::tuner::PdGains;

const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Symmetric part negative definite.
    UniformlyNegative,
    /// Both contracting and expanding directions.
    Indefinite,
    /// Symmetric part positive semidefinite: no contracting direction.
    PositiveSomewhere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub lambda_max_sym: f64,
    pub worst_state: Vec<f64>,
    pub verdict: Verdict,
    pub samples: usize,
}

/// `[[0, I], [−M⁻¹(K + Φ_J(q)), −M⁻¹C]]`.
pub fn jacobian_open_loop(system: &MdofSystem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    assemble(system, None, x)
}

/// `[[0, I], [−M⁻¹(K + ΓΘ_p + Φ_J), −M⁻¹(C + ΓΘ_d)]]`.
pub fn jacobian_closed_loop(system: &MdofSystem, gains: &PdGains, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    assemble(system, Some(gains), x)
}

fn assemble(system: &MdofSystem, gains: Option<&PdGains>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = system.n_q();
    if x.len() != 2 * n {
        return Err(Error::Dimension { expected: 2 * n, got: x.len() });
    }
    let q: DVector<f64> = x.rows(0, n).into();
    let mut kk = system.stiffness() + system.eval_nonlinearity_jacobian(&q)?;
    let mut kc = system.damping().clone();
    if let Some(g) = gains {
        if g.n() != n {
            return Err(Error::Dimension { expected: n, got: g.n() });
        }
        kk += system.actuator() * &g.theta_p;
        kc += system.actuator() * &g.theta_d;
    }
    let minv = system.mass_inverse();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).fill_with_identity();
    j.view_mut((n, 0), (n, n)).copy_from(&(-(minv * kk)));
    j.view_mut((n, n), (n, n)).copy_from(&(-(minv * kc)));
    Ok(j)
}

/// `Υ = [[I, 0], [I, I]]`.
pub fn transformation_matrix(n_q: usize) -> DMatrix<f64> {
    let mut u = DMatrix::identity(2 * n_q, 2 * n_q);
    u.view_mut((n_q, 0), (n_q, n_q)).fill_with_identity();
    u
}

/// `Υ J Υ⁻¹` for a constant transform.
pub fn generalized_jacobian(j: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !upsilon.is_square() || upsilon.nrows() != j.nrows() || !j.is_square() {
        return Err(Error::InvalidArgument("J and Υ must be square and of equal size".into()));
    }
    let inv = upsilon
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("Υ is singular".into()))?;
    Ok(upsilon * j * inv)
}

/// Largest and smallest eigenvalue of `(A + Aᵀ)/2`.
fn sym_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.max(), eig.min())
}

fn classify(lmax: f64, lmin: f64) -> Verdict {
    if lmax < -DEFINITENESS_TOL {
        Verdict::UniformlyNegative
    } else if lmin < -DEFINITENESS_TOL {
        Verdict::Indefinite
    } else {
        Verdict::PositiveSomewhere
    }
}

/// Largest eigenvalue of the symmetric part and the resulting verdict.
pub fn definiteness_diagnostic(m: &DMatrix<f64>) -> Result<(f64, Verdict)> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    let (lmax, lmin) = sym_extremes(m);
    Ok((lmax, classify(lmax, lmin)))
}

/// Which constant metric to apply before the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Upsilon,
}

const PRIMES: [u64; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    out
}

/// Halton point `index` in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sampling supports up to {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Worst-case diagnostic over `n_samples` Halton points of `state_box` (plus its centre).
/// `seed` offsets the sequence start so distinct seeds give distinct, reproducible samples.
pub fn sample_region_check(
    system: &MdofSystem,
    gains: Option<&PdGains>,
    state_box: &[(f64, f64)],
    n_samples: usize,
    transform: Transform,
    seed: u64,
) -> Result<JacobianReport> {
    let n = system.n_q();
    if state_box.len() != 2 * n {
        return Err(Error::Dimension { expected: 2 * n, got: state_box.len() });
    }
    if state_box.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || hi < lo) {
        return Err(Error::InvalidArgument("state box bounds must be finite with lo <= hi".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let ups = match transform {
        Transform::Identity => None,
        Transform::Upsilon => Some(transformation_matrix(n)),
    };
    let point = |k: usize| -> DVector<f64> {
        if k == 0 {
            return DVector::from_iterator(2 * n, state_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)));
        }
        let u = halton(seed + k as u64, 2 * n);
        DVector::from_iterator(2 * n, state_box.iter().zip(u).map(|((lo, hi), u)| lo + (hi - lo) * u))
    };
    let evals: Vec<(f64, f64, usize)> = (0..=n_samples)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64, usize)> {
            let x = point(k);
            let j = assemble(system, gains, &x)?;
            let j = match &ups {
                Some(u) => generalized_jacobian(&j, u)?,
                None => j,
            };
            let (lmax, lmin) = sym_extremes(&j);
            Ok((lmax, lmin, k))
        })
        .collect::<Result<_>>()?;
    let (lmax, _, k) = evals
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, 0.0, 0), |acc, e| if e.0 > acc.0 { e } else { acc });
    let lmin = evals.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let verdict = if lmax < -DEFINITENESS_TOL {
        Verdict::UniformlyNegative
    } else if evals.iter().any(|e| e.1 >= -DEFINITENESS_TOL) {
        Verdict::PositiveSomewhere
    } else {
        classify(lmax, lmin)
    };
    Ok(JacobianReport {
        lambda_max_sym: lmax,
        worst_state: point(k).iter().copied().collect(),
        verdict,
        samples: n_samples + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{duffing_preset, DuffingVariant};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    #[test]
    fn open_loop_examples() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        assert_eq!(jacobian_open_loop(&s, &dvector![0.0, 0.0]).unwrap(), dmatrix![0.0, 1.0; -36.0, -0.4]);
        assert_eq!(jacobian_open_loop(&s, &dvector![1.0, 0.0]).unwrap(), dmatrix![0.0, 1.0; -144.0, -0.4]);
    }

    #[test]
    fn closed_loop_examples() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        let x = dvector![0.3, -0.2];
        assert_eq!(
            jacobian_closed_loop(&s, &PdGains::zeros(1), &x).unwrap(),
            jacobian_open_loop(&s, &x).unwrap()
        );
        let j = jacobian_closed_loop(&s, &PdGains::diagonal(&[7.1], &[2.6]), &dvector![0.0, 0.0]).unwrap();
        assert_relative_eq!(j, dmatrix![0.0, 1.0; -43.1, -3.0], epsilon = 1e-12);
    }

    #[test]
    fn transform_examples() {
        let u = transformation_matrix(1);
        assert_eq!(u, dmatrix![1.0, 0.0; 1.0, 1.0]);
        let inv = u.clone().try_inverse().unwrap();
        assert_eq!(&u * &inv, DMatrix::identity(2, 2));
        assert_eq!(u.determinant(), 1.0);
        assert_eq!(transformation_matrix(3).determinant(), 1.0);
    }

    #[test]
    fn generalized_examples() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        let j = jacobian_open_loop(&s, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(generalized_jacobian(&j, &DMatrix::identity(2, 2)).unwrap(), j);
        let g = generalized_jacobian(&j, &transformation_matrix(1)).unwrap();
        assert_relative_eq!(g, dmatrix![-1.0, 1.0; -36.6, 0.6], epsilon = 1e-12);
        assert!(generalized_jacobian(&j, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn diagnostic_examples() {
        let (l, v) = definiteness_diagnostic(&(-DMatrix::identity(3, 3))).unwrap();
        assert_eq!((l, v), (-1.0, Verdict::UniformlyNegative));
        let (l, v) = definiteness_diagnostic(&dmatrix![-1.0, 1.0; -36.6, 0.6]).unwrap();
        assert!(l > 0.0);
        assert_eq!(v, Verdict::Indefinite);
        let (l, v) = definiteness_diagnostic(&dmatrix![-2.0, 0.0; 0.0, -3.0]).unwrap();
        assert_relative_eq!(l, -2.0, epsilon = 1e-14);
        assert_eq!(v, Verdict::UniformlyNegative);
        assert_eq!(definiteness_diagnostic(&DMatrix::identity(2, 2)).unwrap().1, Verdict::PositiveSomewhere);
    }

    #[test]
    fn halton_is_low_discrepancy_and_deterministic() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(4, 2), vec![0.125, 4.0 / 9.0]);
        assert_eq!(halton(17, 5), halton(17, 5));
    }

    #[test]
    fn region_checks() {
        let lin = duffing_preset(DuffingVariant::Linear);
        let bx = [(-1.0, 1.0), (-1.0, 1.0)];
        let a = sample_region_check(&lin, None, &bx, 64, Transform::Identity, 0).unwrap();
        let b = sample_region_check(&lin, None, &bx, 8, Transform::Identity, 99).unwrap();
        assert_eq!(a.lambda_max_sym, b.lambda_max_sym);
        assert_eq!(a.verdict, b.verdict);

        let duff = duffing_preset(DuffingVariant::Hardening36);
        let r = sample_region_check(&duff, None, &bx, 64, Transform::Upsilon, 0).unwrap();
        assert_eq!(r.verdict, Verdict::Indefinite);
        assert!(sample_region_check(&duff, None, &bx[..1], 4, Transform::Upsilon, 0).is_err());
        assert!(sample_region_check(&duff, None, &bx, 0, Transform::Upsilon, 0).is_err());
    }

    #[test]
    fn derivative_gain_lowers_lambda_max() {
        let s = duffing_preset(DuffingVariant::Hardening36);
        let u = transformation_matrix(1);
        let x = dvector![0.4, -0.3];
        let lam = |td: f64| {
            let j = jacobian_closed_loop(&s, &PdGains::diagonal(&[2.0], &[td]), &x).unwrap();
            definiteness_diagnostic(&generalized_jacobian(&j, &u).unwrap()).unwrap().0
        };
        let vals: Vec<f64> = (0..=40).map(|k| lam(k as f64 * 0.25)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }
}
