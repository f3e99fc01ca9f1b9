//! PD vibration control and the FRF-driven gain adaptation loop.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frf::{ExcitationGrid, FrfMatrix, SweepOptions};
use crate::sim::MultiIcReport;

/// Proportional and derivative gain matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PdGains {
    pub theta_p: DMatrix<f64>,
    pub theta_d: DMatrix<f64>,
}

impl PdGains {
    pub fn diagonal(theta_p: &[f64], theta_d: &[f64]) -> Self {
        Self {
            theta_p: DMatrix::from_diagonal(&DVector::from_column_slice(theta_p)),
            theta_d: DMatrix::from_diagonal(&DVector::from_column_slice(theta_d)),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self { theta_p: DMatrix::zeros(n, n), theta_d: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.theta_p.nrows()
    }

    pub fn diag_p(&self) -> Vec<f64> {
        self.theta_p.diagonal().iter().copied().collect()
    }

    pub fn diag_d(&self) -> Vec<f64> {
        self.theta_d.diagonal().iter().copied().collect()
    }

    /// Smallest diagonal entry over both matrices.
    pub fn min_diagonal(&self) -> f64 {
        self.diag_p().into_iter().chain(self.diag_d()).fold(f64::INFINITY, f64::min)
    }
}

/// `u = −Θ_p q − Θ_d q̇`.
pub fn pd_control(gains: &PdGains, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
    let n = gains.n();
    for len in [q.len(), qdot.len(), gains.theta_d.nrows()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    Ok(-(&gains.theta_p * q) - &gains.theta_d * qdot)
}

/// Step sizes, targets and stopping rule of the adaptation law.
///
/// Per-axis vectors of length one broadcast to every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub gamma_p: Vec<f64>,
    pub gamma_d: Vec<f64>,
    pub delta_position: Vec<f64>,
    pub delta_velocity: Vec<f64>,
    pub theta_min_p: Vec<f64>,
    pub theta_min_d: Vec<f64>,
    pub max_iterations: usize,
    pub eps_tol: f64,
    /// Halve a channel's step after an overshoot (sign flip with growing |ε|).
    pub overshoot_guard: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            gamma_p: vec![120.0],
            gamma_d: vec![1.0],
            delta_position: vec![0.5],
            delta_velocity: vec![3.0],
            theta_min_p: vec![0.001],
            theta_min_d: vec![0.001],
            max_iterations: 50,
            eps_tol: 1e-2,
            overshoot_guard: true,
        }
    }
}

fn broadcast(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v.to_vec()),
        len => Err(Error::InvalidArgument(format!("{name} has {len} entries, expected 1 or {n}"))),
    }
}

/// [`AdaptationConfig`] resolved to `n` axes and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisConfig {
    pub gamma: [Vec<f64>; 2],
    pub delta: [Vec<f64>; 2],
    pub theta_min: [Vec<f64>; 2],
}

impl AdaptationConfig {
    pub fn resolve(&self, n: usize) -> Result<AxisConfig> {
        let c = AxisConfig {
            gamma: [broadcast("gamma_p", &self.gamma_p, n)?, broadcast("gamma_d", &self.gamma_d, n)?],
            delta: [
                broadcast("delta_position", &self.delta_position, n)?,
                broadcast("delta_velocity", &self.delta_velocity, n)?,
            ],
            theta_min: [
                broadcast("theta_min_p", &self.theta_min_p, n)?,
                broadcast("theta_min_d", &self.theta_min_d, n)?,
            ],
        };
        let all_pos = |v: &[Vec<f64>; 2]| v.iter().flatten().all(|x| *x > 0.0 && x.is_finite());
        if !all_pos(&c.gamma) || !all_pos(&c.delta) || !all_pos(&c.theta_min) {
            return Err(Error::InvalidArgument("gamma, delta and theta_min must be positive".into()));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::InvalidArgument("eps_tol must be positive".into()));
        }
        Ok(c)
    }

    /// Gains at the floor `Θ_min`.
    pub fn floor_gains(&self, n: usize) -> Result<PdGains> {
        let c = self.resolve(n)?;
        Ok(PdGains::diagonal(&c.theta_min[0], &c.theta_min[1]))
    }
}

/// One adaptation update with per-axis step multipliers `scale[channel][axis]`.
pub fn adaptation_step_scaled(
    gains: &PdGains,
    fnorm_position: &[f64],
    fnorm_velocity: &[f64],
    config: &AdaptationConfig,
    scale: &[Vec<f64>; 2],
) -> Result<PdGains> {
    let n = gains.n();
    let c = config.resolve(n)?;
    let fnorms = [fnorm_position, fnorm_velocity];
    for f in fnorms {
        if f.len() != n {
            return Err(Error::Dimension { expected: n, got: f.len() });
        }
        if f.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("F-norms must be >= 0".into()));
        }
    }
    let mut out = gains.clone();
    for (ch, theta) in [&mut out.theta_p, &mut out.theta_d].into_iter().enumerate() {
        for i in 0..n {
            let eps = fnorms[ch][i] - c.delta[ch][i];
            let candidate = theta[(i, i)] + scale[ch][i] * c.gamma[ch][i] * fnorms[ch][i] * eps;
            theta[(i, i)] = candidate.max(c.theta_min[ch][i]);
        }
    }
    Ok(out)
}

/// `Θ ← max(Θ + Γ ‖F‖ ε, Θ_min)` per channel and axis, with `ε = ‖F‖ − δ`.
pub fn adaptation_step(
    gains: &PdGains,
    fnorm_position: &[f64],
    fnorm_velocity: &[f64],
    config: &AdaptationConfig,
) -> Result<PdGains> {
    let n = gains.n();
    adaptation_step_scaled(gains, fnorm_position, fnorm_velocity, config, &[vec![1.0; n], vec![1.0; n]])
}

/// Position and velocity FRFs per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFrf {
    pub position: Vec<FrfMatrix>,
    pub velocity: Vec<FrfMatrix>,
}

impl AxisFrf {
    pub fn norms(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.position.iter().map(FrfMatrix::frobenius_norm).collect::<Result<_>>()?;
        let v = self.velocity.iter().map(FrfMatrix::frobenius_norm).collect::<Result<_>>()?;
        Ok((p, v))
    }

    pub fn all(&self) -> impl Iterator<Item = &FrfMatrix> {
        self.position.iter().chain(&self.velocity)
    }
}

/// A closed-loop scenario the tuner can sweep.
pub trait TunablePlant: Sync {
    fn axes(&self) -> usize;

    /// Per-axis FRFs of the loop closed with `gains`.
    fn sweep(&self, gains: &PdGains, grid: &ExcitationGrid, options: &SweepOptions) -> Result<AxisFrf>;

    /// Multi-initial-condition run at the grid's worst observable cell.
    fn probe(&self, gains: &PdGains, grid: &ExcitationGrid) -> Result<MultiIcReport>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningStatus {
    Converged,
    MaxIterations,
    SweepFailure,
}

/// One sweep of the tuning loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta_p: Vec<f64>,
    pub theta_d: Vec<f64>,
    pub fnorm_position: Vec<f64>,
    pub fnorm_velocity: Vec<f64>,
    pub eps_position: Vec<f64>,
    pub eps_velocity: Vec<f64>,
    /// Step multipliers applied after this record.
    pub step_scale_p: Vec<f64>,
    pub step_scale_d: Vec<f64>,
    /// Excluded from serialized output so re-runs stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl IterationRecord {
    pub fn gains(&self) -> PdGains {
        PdGains::diagonal(&self.theta_p, &self.theta_d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningHistory {
    pub records: Vec<IterationRecord>,
    pub status: TuningStatus,
    /// Terminal distance of the pre-tune convergence probe, if one ran.
    pub probe_distance: Option<f64>,
    /// Failure detail when `status` is `SweepFailure`.
    pub failure: Option<String>,
}

impl TuningHistory {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_gains(&self) -> Option<PdGains> {
        self.last().map(IterationRecord::gains)
    }

    pub fn min_gain(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.theta_p.iter().chain(&r.theta_d))
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Loop switches beyond the adaptation law itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub sweep: SweepOptions,
    /// Start gains; defaults to the floor.
    pub initial: Option<PdGains>,
    /// Terminal distance the probe must reach; `None` skips the probe.
    pub probe_tol: Option<f64>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { sweep: SweepOptions::default(), initial: None, probe_tol: Some(1e-3) }
    }
}

/// A channel is satisfied at `|ε| ≤ tol`, or when `ε < 0` with the gain already at its floor.
fn satisfied(eps: f64, gain: f64, floor: f64, tol: f64) -> bool {
    eps.abs() <= tol || (eps < 0.0 && gain <= floor)
}

/// Sweep → F-norms → adaptation step, until every channel is satisfied or
/// `max_iterations` steps have been taken.
pub fn tune<P: TunablePlant + ?Sized>(
    plant: &P,
    grid: &ExcitationGrid,
    config: &AdaptationConfig,
    options: &TuneOptions,
) -> Result<TuningHistory> {
    let n = plant.axes();
    let c = config.resolve(n)?;
    let mut gains = match &options.initial {
        Some(g) => {
            if g.n() != n {
                return Err(Error::Dimension { expected: n, got: g.n() });
            }
            let mut g = g.clone();
            for i in 0..n {
                g.theta_p[(i, i)] = g.theta_p[(i, i)].max(c.theta_min[0][i]);
                g.theta_d[(i, i)] = g.theta_d[(i, i)].max(c.theta_min[1][i]);
            }
            g
        }
        None => config.floor_gains(n)?,
    };

    let mut probe_distance = None;
    if let Some(tol) = options.probe_tol {
        let rep = plant.probe(&gains, grid)?;
        probe_distance = Some(rep.terminal_max_distance);
        if !rep.converged(tol) {
            return Err(Error::NotConvergent { distance: rep.terminal_max_distance });
        }
    }

    let start = Instant::now();
    let mut records = Vec::new();
    let mut scale = [vec![1.0; n], vec![1.0; n]];
    let mut prev_eps: Option<[Vec<f64>; 2]> = None;
    let mut iteration = 0;
    let (status, failure) = loop {
        let frf = match plant.sweep(&gains, grid, &options.sweep) {
            Ok(f) => f,
            Err(e @ (Error::SweepFailure { .. } | Error::Divergence { .. } | Error::FailedCells { .. })) => {
                break (TuningStatus::SweepFailure, Some(e.to_string()));
            }
            Err(e) => return Err(e),
        };
        let (fp, fv) = frf.norms()?;
        let eps = [
            fp.iter().zip(&c.delta[0]).map(|(f, d)| f - d).collect::<Vec<_>>(),
            fv.iter().zip(&c.delta[1]).map(|(f, d)| f - d).collect::<Vec<_>>(),
        ];
        let diag = [gains.diag_p(), gains.diag_d()];
        let done = (0..2).all(|ch| {
            (0..n).all(|i| satisfied(eps[ch][i], diag[ch][i], c.theta_min[ch][i], config.eps_tol))
        });

        if config.overshoot_guard {
            if let Some(prev) = &prev_eps {
                for ch in 0..2 {
                    for i in 0..n {
                        let (e, p) = (eps[ch][i], prev[ch][i]);
                        if e * p < 0.0 && e.abs() > p.abs() {
                            scale[ch][i] *= 0.5;
                        }
                    }
                }
            }
        }

        records.push(IterationRecord {
            iteration,
            theta_p: diag[0].clone(),
            theta_d: diag[1].clone(),
            fnorm_position: fp.clone(),
            fnorm_velocity: fv.clone(),
            eps_position: eps[0].clone(),
            eps_velocity: eps[1].clone(),
            step_scale_p: scale[0].clone(),
            step_scale_d: scale[1].clone(),
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if done {
            break (TuningStatus::Converged, None);
        }
        if iteration >= config.max_iterations {
            break (TuningStatus::MaxIterations, None);
        }
        gains = adaptation_step_scaled(&gains, &fp, &fv, config, &scale)?;
        prev_eps = Some(eps);
        iteration += 1;
    };

    Ok(TuningHistory { records, status, probe_distance, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn pd_control_examples() {
        let g = PdGains::diagonal(&[7.1], &[2.6]);
        assert_eq!(pd_control(&g, &dvector![0.0], &dvector![0.0]).unwrap()[0], 0.0);
        let u = pd_control(&g, &dvector![0.1], &dvector![-0.5]).unwrap()[0];
        assert!((u - 0.59).abs() < 1e-12);
        let z = PdGains::zeros(1);
        assert_eq!(pd_control(&z, &dvector![3.0], &dvector![-4.0]).unwrap()[0], 0.0);
        assert!(pd_control(&g, &dvector![0.0, 1.0], &dvector![0.0]).is_err());
    }

    #[test]
    fn adaptation_examples() {
        let cfg = AdaptationConfig::default();
        let g = PdGains::diagonal(&[3.0], &[2.0]);
        assert_eq!(adaptation_step(&g, &[0.5], &[3.0], &cfg).unwrap(), g);

        let floor = adaptation_step(&g, &[0.1], &[1.0], &cfg).unwrap();
        assert_eq!(floor, PdGains::diagonal(&[0.001], &[0.001]));

        let c2 = AdaptationConfig { gamma_p: vec![2.0], ..cfg };
        let next = adaptation_step(&g, &[0.6], &[3.0], &c2).unwrap();
        assert!((next.theta_p[(0, 0)] - 3.12).abs() < 1e-12);
        assert!(adaptation_step(&g, &[-0.1], &[3.0], &c2).is_err());
    }

    #[test]
    fn resolve_broadcasts_and_validates() {
        let c = AdaptationConfig { delta_position: vec![0.2, 0.1, 0.1], ..Default::default() };
        let r = c.resolve(3).unwrap();
        assert_eq!(r.gamma[0], vec![120.0; 3]);
        assert_eq!(r.delta[0], vec![0.2, 0.1, 0.1]);
        assert!(c.resolve(2).is_err());
        let bad = AdaptationConfig { theta_min_p: vec![0.0], ..Default::default() };
        assert!(bad.resolve(1).is_err());
    }

    #[test]
    fn stopping_rule() {
        assert!(satisfied(0.005, 3.0, 0.001, 0.01));
        assert!(satisfied(-0.3, 0.001, 0.001, 0.01));
        assert!(!satisfied(-0.3, 0.5, 0.001, 0.01));
        assert!(!satisfied(0.3, 0.001, 0.001, 0.01));
    }

    /// Linear-in-gain toy plant with an analytic fixed point.
    struct Toy {
        k: [f64; 2],
    }

    impl TunablePlant for Toy {
        fn axes(&self) -> usize {
            1
        }
        fn sweep(&self, g: &PdGains, grid: &ExcitationGrid, _: &SweepOptions) -> Result<AxisFrf> {
            let mk = |label: &str, v: f64| FrfMatrix {
                label: label.into(),
                grid: grid.clone(),
                gains: DMatrix::from_element(1, 1, v),
                failures: vec![],
            };
            Ok(AxisFrf {
                position: vec![mk("p", self.k[0] / (1.0 + g.theta_p[(0, 0)]))],
                velocity: vec![mk("v", self.k[1] / (1.0 + g.theta_d[(0, 0)]))],
            })
        }
        fn probe(&self, _: &PdGains, _: &ExcitationGrid) -> Result<MultiIcReport> {
            Ok(MultiIcReport {
                sample_times: vec![0.0],
                pairs: vec![],
                distances: vec![],
                max_distance: vec![0.0],
                terminal_max_distance: 0.0,
                decay_rate: None,
            })
        }
    }

    #[test]
    fn tunes_toy_plant_to_targets() {
        let grid = ExcitationGrid::new(vec![1.0], vec![1.0]).unwrap();
        let cfg = AdaptationConfig {
            gamma_p: vec![5.0],
            gamma_d: vec![0.5],
            max_iterations: 500,
            eps_tol: 1e-4,
            ..Default::default()
        };
        let h = tune(&Toy { k: [2.0, 9.0] }, &grid, &cfg, &TuneOptions::default()).unwrap();
        assert_eq!(h.status, TuningStatus::Converged);
        let last = h.last().unwrap();
        assert!((last.fnorm_position[0] - 0.5).abs() <= 1e-4);
        assert!((last.fnorm_velocity[0] - 3.0).abs() <= 1e-4);
        assert!((last.theta_p[0] - 3.0).abs() < 1e-2);
        assert!((last.theta_d[0] - 2.0).abs() < 1e-2);
        assert!(h.min_gain() >= 0.001);
    }

    #[test]
    fn converges_at_floor_when_already_below_target() {
        let grid = ExcitationGrid::new(vec![1.0], vec![1.0]).unwrap();
        let h = tune(&Toy { k: [0.1, 0.2] }, &grid, &AdaptationConfig::default(), &TuneOptions::default())
            .unwrap();
        assert_eq!(h.status, TuningStatus::Converged);
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.final_gains().unwrap(), PdGains::diagonal(&[0.001], &[0.001]));
    }

    #[test]
    fn reports_max_iterations() {
        let grid = ExcitationGrid::new(vec![1.0], vec![1.0]).unwrap();
        let cfg = AdaptationConfig { gamma_p: vec![1e-3], max_iterations: 3, ..Default::default() };
        let h = tune(&Toy { k: [2.0, 9.0] }, &grid, &cfg, &TuneOptions::default()).unwrap();
        assert_eq!(h.status, TuningStatus::MaxIterations);
        assert_eq!(h.records.len(), 4);
    }

    #[test]
    fn huge_tolerance_converges_immediately() {
        let grid = ExcitationGrid::new(vec![1.0], vec![1.0]).unwrap();
        let cfg = AdaptationConfig { eps_tol: 1e9, ..Default::default() };
        let h = tune(&Toy { k: [2.0, 9.0] }, &grid, &cfg, &TuneOptions::default()).unwrap();
        assert_eq!(h.status, TuningStatus::Converged);
        assert_eq!(h.records.len(), 1);
    }
}
