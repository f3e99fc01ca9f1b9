//! Tunable closed-loop scenarios: MDOF systems under PD control and the
//! tracking-controlled satellite under harmonic torque disturbances.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frf::{frf_sweep, ExcitationGrid, SweepOptions};
use crate::model::{HarmonicInput, MdofSystem};
use crate::satellite::{shadow_set, SatelliteParams};
use crate::sim::{detect_steady_state, integrate, multi_ic_convergence, IntegratorConfig, MultiIcReport, SteadyStateReport, Trajectory};
use crate::tracking::{Disturbance, Reference, SatelliteLoop, TrackingControllerConfig};
use crate::tuner::{tune, AdaptationConfig, AxisFrf, PdGains, TunablePlant, TuneOptions, TuningHistory};

/// Settings of the pre-tune multi-initial-condition probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Initial positions applied to every DOF (velocities zero).
    pub initial_positions: Vec<f64>,
    pub horizon: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { initial_positions: vec![-3.0, 3.0, 5.0], horizon: 60.0 }
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}_{i}")).collect()
    }
}

/// PD-controlled MDOF system excited through `Λ`.
#[derive(Debug, Clone)]
pub struct MdofScenario {
    pub system: MdofSystem,
    pub integrator: IntegratorConfig,
    pub probe: ProbeConfig,
}

impl MdofScenario {
    pub fn new(system: MdofSystem, integrator: IntegratorConfig) -> Self {
        Self { system, integrator, probe: ProbeConfig::default() }
    }

    /// Channel labels: positions `x1…` then velocities `x2…`.
    pub fn channel_labels(&self) -> Vec<String> {
        let n = self.system.n_q();
        let mut l = labels("x1", n);
        l.extend(labels("x2", n));
        l
    }

    /// Steady state of one excitation cell (`gains = None` is open loop).
    pub fn cell(
        &self,
        gains: Option<&PdGains>,
        a: f64,
        omega: f64,
        x0: Option<&[f64]>,
    ) -> Result<SteadyStateReport> {
        let input = HarmonicInput::new(a, omega)?;
        let f = self.system.field(gains, Some(input))?;
        let zero = vec![0.0; 2 * self.system.n_q()];
        detect_steady_state(&f, x0.unwrap_or(&zero), input.period(), zero.len(), |_, x, y| {
            y.copy_from_slice(x)
        }, &self.integrator)
    }

    /// FRF matrices for every channel (positions then velocities).
    pub fn frf(&self, gains: Option<&PdGains>, grid: &ExcitationGrid, options: &SweepOptions) -> Result<AxisFrf> {
        let mut mats = frf_sweep(grid, &self.channel_labels(), options, |a, w, x0| self.cell(gains, a, w, x0))?;
        let velocity = mats.split_off(self.system.n_q());
        Ok(AxisFrf { position: mats, velocity })
    }

    /// Undamped natural frequencies of the loop linearized at the origin.
    pub fn natural_frequencies(&self, gains: Option<&PdGains>) -> Vec<f64> {
        let mut k = self.system.stiffness().clone();
        if let Some(g) = gains {
            k += self.system.actuator() * &g.theta_p;
        }
        // M⁻¹K is similar to the symmetric L⁻¹KL⁻ᵀ with M = LLᵀ.
        let chol = nalgebra::Cholesky::new(self.system.mass().clone()).expect("M is SPD");
        let linv = chol.l().try_inverse().expect("L invertible");
        let sym = &linv * k * linv.transpose();
        let sym = (&sym + sym.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect()
    }

    /// Largest amplitude at the grid frequency closest to a natural frequency.
    pub fn worst_cell(&self, gains: Option<&PdGains>, grid: &ExcitationGrid) -> (f64, f64) {
        let wn = self.natural_frequencies(gains);
        let dist = |w: f64| wn.iter().map(|n| (w - n).abs()).fold(f64::INFINITY, f64::min);
        let w = grid
            .frequencies()
            .iter()
            .copied()
            .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
            .expect("grid is non-empty");
        (*grid.amplitudes().last().expect("grid is non-empty"), w)
    }

    /// Multi-IC run under `a sin(ω t)`.
    pub fn multi_ic(&self, gains: Option<&PdGains>, a: f64, omega: f64) -> Result<MultiIcReport> {
        let input = HarmonicInput::new(a, omega)?;
        let f = self.system.field(gains, Some(input))?;
        let n = self.system.n_q();
        let ics: Vec<Vec<f64>> = self
            .probe
            .initial_positions
            .iter()
            .map(|&p| {
                let mut x = vec![0.0; 2 * n];
                x[..n].fill(p);
                x
            })
            .collect();
        multi_ic_convergence(&f, &ics, input.period(), self.probe.horizon, &self.integrator)
    }

    /// Time response under `a sin(ω t)` with inputs `w`, `u…` recorded.
    pub fn simulate(
        &self,
        gains: Option<&PdGains>,
        input: Option<HarmonicInput>,
        x0: &[f64],
        duration: f64,
    ) -> Result<Trajectory> {
        let f = self.system.field(gains, input)?;
        let mut tr = integrate(&f, x0, (0.0, duration), &self.integrator)?;
        let n = self.system.n_q();
        let zeros = PdGains::zeros(n);
        let g = gains.unwrap_or(&zeros).clone();
        let mut names = vec!["w".to_string()];
        names.extend(labels("u", n));
        tr.record_inputs(names, move |t, x, out| {
            out[0] = input.map_or(0.0, |h| h.value(t));
            for i in 0..n {
                let mut u = 0.0;
                for j in 0..n {
                    u -= g.theta_p[(i, j)] * x[j] + g.theta_d[(i, j)] * x[n + j];
                }
                out[1 + i] = u;
            }
        });
        Ok(tr)
    }
}

impl TunablePlant for MdofScenario {
    fn axes(&self) -> usize {
        self.system.n_q()
    }

    fn sweep(&self, gains: &PdGains, grid: &ExcitationGrid, options: &SweepOptions) -> Result<AxisFrf> {
        self.frf(Some(gains), grid, options)
    }

    fn probe(&self, gains: &PdGains, grid: &ExcitationGrid) -> Result<MultiIcReport> {
        let (a, w) = self.worst_cell(Some(gains), grid);
        self.multi_ic(Some(gains), a, w)
    }
}

/// Tracking-controlled satellite with per-axis PD vibration gains.
#[derive(Debug, Clone)]
pub struct SatelliteScenario {
    pub params: SatelliteParams,
    pub tracking: TrackingControllerConfig,
    /// Desired attitude, already inside the unit ball.
    pub q_d: Vector3<f64>,
    /// Initial attitude and body rate for time-domain runs.
    pub q0: Vector3<f64>,
    pub omega0: Vector3<f64>,
    pub integrator: IntegratorConfig,
    pub probe_horizon: f64,
}

/// Gains as diagonal matrices.
fn diag_pair(g: &PdGains) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    if g.n() != 3 {
        return Err(Error::Dimension { expected: 3, got: g.n() });
    }
    Ok((
        Matrix3::from_iterator(g.theta_p.iter().copied()),
        Matrix3::from_iterator(g.theta_d.iter().copied()),
    ))
}

impl SatelliteScenario {
    /// Maps `q_d` to its shadow set when `|q_d| ≥ 1` so the target is reachable.
    pub fn new(
        params: SatelliteParams,
        tracking: TrackingControllerConfig,
        q_d: Vector3<f64>,
        integrator: IntegratorConfig,
    ) -> Self {
        let q_d = if q_d.norm() >= 1.0 { shadow_set(&q_d) } else { q_d };
        Self {
            params,
            tracking,
            q_d,
            q0: Vector3::zeros(),
            omega0: Vector3::zeros(),
            integrator,
            probe_horizon: 600.0,
        }
    }

    pub fn closed_loop(&self, gains: Option<&PdGains>, disturbance: Disturbance) -> Result<SatelliteLoop> {
        Ok(SatelliteLoop {
            params: self.params,
            tracking: self.tracking,
            reference: Reference::Constant(self.q_d),
            pd: gains.map(diag_pair).transpose()?,
            disturbance,
        })
    }

    pub fn channel_labels() -> Vec<String> {
        ["e1", "e2", "e3", "edot1", "edot2", "edot3"].map(String::from).to_vec()
    }

    /// Per-axis error peaks, maximized over excitation along each body axis.
    /// Cells start at rest on the target attitude.
    pub fn cell(&self, gains: Option<&PdGains>, a: f64, omega: f64) -> Result<SteadyStateReport> {
        let input = HarmonicInput::new(a, omega)?;
        let x0 = [self.q_d.x, self.q_d.y, self.q_d.z, 0.0, 0.0, 0.0];
        let mut combined: Option<SteadyStateReport> = None;
        for axis in 0..3 {
            let mut direction = Vector3::zeros();
            direction[axis] = 1.0;
            let lp = self.closed_loop(gains, Disturbance::Harmonic { direction, input })?;
            let rep = detect_steady_state(&lp, &x0, input.period(), 6, |t, x, y| lp.error_channels(t, x, y), &self.integrator)?;
            combined = Some(match combined {
                None => rep,
                Some(mut c) => {
                    c.converged &= rep.converged;
                    c.periods_used += rep.periods_used;
                    for (p, q) in c.peak_per_channel.iter_mut().zip(&rep.peak_per_channel) {
                        *p = p.max(*q);
                    }
                    c.window = rep.window;
                    c.final_state = rep.final_state;
                    c
                }
            });
        }
        Ok(combined.expect("three axes"))
    }

    pub fn frf(&self, gains: Option<&PdGains>, grid: &ExcitationGrid, options: &SweepOptions) -> Result<AxisFrf> {
        let mut mats = frf_sweep(grid, &Self::channel_labels(), options, |a, w, _| self.cell(gains, a, w))?;
        let velocity = mats.split_off(3);
        Ok(AxisFrf { position: mats, velocity })
    }

    /// Time response from `(q0, ω0)`. Inputs recorded: tracking torque, PD torque, disturbance.
    pub fn simulate(&self, gains: Option<&PdGains>, disturbance: Disturbance, duration: f64) -> Result<Trajectory> {
        let lp = self.closed_loop(gains, disturbance)?;
        let x0 = [self.q0.x, self.q0.y, self.q0.z, self.omega0.x, self.omega0.y, self.omega0.z];
        let mut tr = integrate(&lp, &x0, (0.0, duration), &self.integrator)?;
        let names = ["tau1", "tau2", "tau3", "u1", "u2", "u3", "w1", "w2", "w3"].map(String::from).to_vec();
        tr.record_inputs(names, |t, x, out| {
            let q = Vector3::new(x[0], x[1], x[2]);
            let w = Vector3::new(x[3], x[4], x[5]);
            for (k, v) in lp.torques(t, &q, &w).iter().enumerate() {
                out[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
            }
        });
        Ok(tr)
    }

    /// Per-axis RMS of `e = q − q_d` over samples with `t ≥ settle`.
    pub fn error_rms(&self, trajectory: &Trajectory, settle: f64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut count = 0usize;
        for (k, x) in trajectory.states().enumerate() {
            if trajectory.times[k] < settle {
                continue;
            }
            for i in 0..3 {
                acc[i] += (x[i] - self.q_d[i]).powi(2);
            }
            count += 1;
        }
        acc.map(|s| (s / count.max(1) as f64).sqrt())
    }
}

impl TunablePlant for SatelliteScenario {
    fn axes(&self) -> usize {
        3
    }

    fn sweep(&self, gains: &PdGains, grid: &ExcitationGrid, options: &SweepOptions) -> Result<AxisFrf> {
        self.frf(Some(gains), grid, options)
    }

    /// Three attitudes around the target under the largest amplitude at the lowest
    /// frequency, applied along all body axes.
    fn probe(&self, gains: &PdGains, grid: &ExcitationGrid) -> Result<MultiIcReport> {
        let a = *grid.amplitudes().last().expect("grid is non-empty");
        let w = grid.frequencies()[0];
        let input = HarmonicInput::new(a, w)?;
        let direction = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        let lp = self.closed_loop(Some(gains), Disturbance::Harmonic { direction, input })?;
        let offset = Vector3::new(0.05, -0.05, 0.05);
        let ics: Vec<Vec<f64>> = [self.q_d, self.q_d + offset, self.q_d - offset]
            .iter()
            .map(|q| vec![q.x, q.y, q.z, 0.0, 0.0, 0.0])
            .collect();
        multi_ic_convergence(&lp, &ics, input.period(), self.probe_horizon, &self.integrator)
    }
}

/// Error RMS with tuned gains versus the tracking law alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsComparison {
    pub rms_controlled: [f64; 3],
    pub rms_uncontrolled: [f64; 3],
    /// `1 − ‖rms_controlled‖ / ‖rms_uncontrolled‖`.
    pub reduction: f64,
}

impl RmsComparison {
    pub fn new(rms_controlled: [f64; 3], rms_uncontrolled: [f64; 3]) -> Self {
        let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let base = norm(&rms_uncontrolled);
        let reduction = if base > 0.0 { 1.0 - norm(&rms_controlled) / base } else { 0.0 };
        Self { rms_controlled, rms_uncontrolled, reduction }
    }
}

/// Time window of the RMS comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmsWindow {
    pub duration: f64,
    pub settle: f64,
}

impl Default for RmsWindow {
    fn default() -> Self {
        Self { duration: 3000.0, settle: 1500.0 }
    }
}

/// Compares steady-state error RMS under `disturbance` with and without the PD term.
pub fn compare_rms(
    scenario: &SatelliteScenario,
    gains: &PdGains,
    disturbance: &Disturbance,
    window: &RmsWindow,
) -> Result<RmsComparison> {
    let (with, without) = rayon::join(
        || scenario.simulate(Some(gains), disturbance.clone(), window.duration),
        || scenario.simulate(None, disturbance.clone(), window.duration),
    );
    Ok(RmsComparison::new(
        scenario.error_rms(&with?, window.settle),
        scenario.error_rms(&without?, window.settle),
    ))
}

/// Outcome of [`satellite_vibration_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteTuningReport {
    pub history: TuningHistory,
    pub comparison: Option<RmsComparison>,
}

/// Tunes the per-axis PD gains over `grid` and compares the error RMS under
/// `disturbance` (typically the wheel model) with the untuned loop.
pub fn satellite_vibration_scenario(
    scenario: &SatelliteScenario,
    disturbance: &Disturbance,
    adaptation: &AdaptationConfig,
    grid: &ExcitationGrid,
    options: &TuneOptions,
    window: &RmsWindow,
) -> Result<SatelliteTuningReport> {
    let history = tune(scenario, grid, adaptation, options)?;
    let comparison = match history.final_gains() {
        Some(g) if history.status != crate::tuner::TuningStatus::SweepFailure => {
            Some(compare_rms(scenario, &g, disturbance, window)?)
        }
        _ => None,
    };
    Ok(SatelliteTuningReport { history, comparison })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{duffing_preset, DuffingVariant};

    #[test]
    fn labels_follow_dof_count() {
        let s = MdofScenario::new(duffing_preset(DuffingVariant::Linear), IntegratorConfig::default());
        assert_eq!(s.channel_labels(), vec!["x1", "x2"]);
        assert_eq!(labels("x1", 2), vec!["x1_1", "x1_2"]);
    }

    #[test]
    fn worst_cell_is_resonance_nearest() {
        let s = MdofScenario::new(duffing_preset(DuffingVariant::Hardening36), IntegratorConfig::default());
        let grid = ExcitationGrid::duffing_default();
        assert_eq!(s.worst_cell(None, &grid), (6.0, 6.0));
        let g = PdGains::diagonal(&[13.0], &[1.0]);
        assert_eq!(s.worst_cell(Some(&g), &grid), (6.0, 7.125));
    }

    #[test]
    fn satellite_target_is_shadow_mapped() {
        let s = SatelliteScenario::new(
            SatelliteParams::default(),
            TrackingControllerConfig::default(),
            Vector3::new(1.0, 0.5, 0.0),
            IntegratorConfig::default(),
        );
        assert!((s.q_d - Vector3::new(-0.8, -0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rms_comparison_reduction() {
        let c = RmsComparison::new([0.1, 0.0, 0.0], [0.4, 0.0, 0.0]);
        assert!((c.reduction - 0.75).abs() < 1e-15);
        assert_eq!(RmsComparison::new([0.0; 3], [0.0; 3]).reduction, 0.0);
    }
}
