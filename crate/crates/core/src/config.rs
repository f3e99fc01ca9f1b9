//! Scenario files (TOML), the shipped presets, and their resolution into runnable objects.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::convergence::Transform;
use crate::error::{Error, Result};
use crate::frf::{inclusive_range, ExcitationGrid};
use crate::model::{MdofSystem, PolyTerm};
use crate::satellite::{RwDisturbanceModel, RwHarmonic, SatelliteParams, SpeedUnit};
use crate::scenario::{MdofScenario, ProbeConfig, RmsWindow, SatelliteScenario};
use crate::sim::IntegratorConfig;
use crate::tracking::TrackingControllerConfig;
use crate::tuner::AdaptationConfig;

/// Names of the bundled presets.
pub const PRESETS: [&str; 4] = ["duffing-linear", "duffing-nonlinear-36", "duffing-nonlinear-100", "satellite-rw"];

/// Source text of a bundled preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "duffing-linear" => Some(include_str!("../presets/duffing-linear.toml")),
        "duffing-nonlinear-36" => Some(include_str!("../presets/duffing-nonlinear-36.toml")),
        "duffing-nonlinear-100" => Some(include_str!("../presets/duffing-nonlinear-100.toml")),
        "satellite-rw" => Some(include_str!("../presets/satellite-rw.toml")),
        _ => None,
    }
}

/// Top-level scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub system: SystemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub adaptation: AdaptationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub tracking: Option<TrackingSection>,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Mdof(MdofSection),
    Satellite(SatelliteSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTerm {
    pub dof: usize,
    pub order: u32,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdofSection {
    pub mass: Vec<Vec<f64>>,
    pub damping: Vec<Vec<f64>>,
    pub stiffness: Vec<Vec<f64>>,
    pub input_map: Vec<f64>,
    #[serde(default)]
    pub actuator: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub nonlinearity: Vec<NonlinearTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSection {
    pub inertia: [[f64; 3]; 3],
    pub desired_attitude: [f64; 3],
    #[serde(default)]
    pub initial_attitude: [f64; 3],
    #[serde(default)]
    pub initial_rate: [f64; 3],
}

/// Either an explicit list or an inclusive `start:stop:step` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            AxisSpec::List(v) => Ok(v.clone()),
            AxisSpec::Range(r) => inclusive_range(r.start, r.stop, r.step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub amplitudes: AxisSpec,
    pub frequencies: AxisSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub enabled: bool,
    pub tol: f64,
    /// Initial positions (MDOF only).
    pub initial_positions: Vec<f64>,
    pub horizon: Option<f64>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self { enabled: true, tol: 1e-3, initial_positions: vec![-3.0, 3.0, 5.0], horizon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    pub k_r: [[f64; 3]; 3],
    pub lambda_r: [f64; 3],
    #[serde(default)]
    pub theta_r: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub wheel_speed: f64,
    #[serde(default)]
    pub speed_unit: SpeedUnit,
    pub harmonics: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Explicit phases per harmonic and axis; drawn from `seed` when absent.
    #[serde(default)]
    pub phases: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Harmonic input for MDOF runs; zero amplitude means unforced.
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    pub duration: Option<f64>,
    /// Start of the window for peak/RMS summaries.
    pub settle: Option<f64>,
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub initial_positions: Vec<f64>,
    pub amplitude: f64,
    pub frequency: f64,
    pub horizon: f64,
    pub tol: f64,
    /// `[lo, hi]` per state component; defaults to ±5 on every component.
    pub state_box: Option<Vec<[f64; 2]>>,
    pub samples: usize,
    pub transform: Transform,
    /// Torque-free satellite run: step, duration and initial body rate.
    pub energy_step: f64,
    pub energy_duration: f64,
    pub energy_rate: [f64; 3],
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            initial_positions: vec![-3.0, 3.0, 5.0],
            amplitude: 2.0,
            frequency: 6.0,
            horizon: 60.0,
            tol: 1e-3,
            state_box: None,
            samples: 256,
            transform: Transform::Upsilon,
            energy_step: 1e-3,
            energy_duration: 100.0,
            energy_rate: [0.3, -0.2, 0.5],
        }
    }
}

fn to_dmatrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{name} must be a non-empty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_matrix3(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// The system side of a resolved config.
#[derive(Debug, Clone)]
pub enum Plant {
    Mdof(MdofScenario),
    Satellite { scenario: SatelliteScenario, rw: RwDisturbanceModel },
}

/// A validated config turned into runnable objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub plant: Plant,
    pub grid: ExcitationGrid,
    pub adaptation: AdaptationConfig,
    pub integrator: IntegratorConfig,
    pub warm_start: bool,
    pub probe: ProbeSection,
    pub simulate: SimulateSection,
    pub convergence: ConvergenceSection,
    pub rms_window: RmsWindow,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let src = preset_source(name).ok_or_else(|| {
            Error::Config(format!("unknown preset '{name}' (available: {})", PRESETS.join(", ")))
        })?;
        Self::from_toml(src)
    }

    /// Loads `preset:NAME` or a file path.
    pub fn load(spec: &str) -> Result<Self> {
        match spec.strip_prefix("preset:") {
            Some(name) => Self::preset(name),
            None => Self::from_path(Path::new(spec)),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Validates every section and builds the scenario objects.
    pub fn resolve(&self) -> Result<Resolved> {
        self.integrator.validate().map_err(cfg_err)?;
        let grid = ExcitationGrid::new(self.grid.amplitudes.values().map_err(cfg_err)?, self.grid.frequencies.values().map_err(cfg_err)?)
            .map_err(cfg_err)?;
        let plant = match &self.system {
            SystemConfig::Mdof(m) => {
                if self.tracking.is_some() || self.disturbance.is_some() {
                    return Err(Error::Config("tracking/disturbance sections apply to satellite systems only".into()));
                }
                let n = m.mass.len();
                let mut nonlin = vec![Vec::new(); n];
                for t in &m.nonlinearity {
                    let slot = nonlin
                        .get_mut(t.dof)
                        .ok_or_else(|| Error::Config(format!("nonlinearity dof {} out of range", t.dof)))?;
                    slot.push(PolyTerm { order: t.order, coefficient: t.coefficient });
                }
                let mut sys = MdofSystem::new(
                    to_dmatrix("mass", &m.mass)?,
                    to_dmatrix("damping", &m.damping)?,
                    to_dmatrix("stiffness", &m.stiffness)?,
                    DVector::from_column_slice(&m.input_map),
                    nonlin,
                )
                .map_err(cfg_err)?;
                if let Some(a) = &m.actuator {
                    sys = sys.with_actuator(to_dmatrix("actuator", a)?).map_err(cfg_err)?;
                }
                let mut sc = MdofScenario::new(sys, self.integrator);
                sc.probe = ProbeConfig {
                    initial_positions: self.probe.initial_positions.clone(),
                    horizon: self.probe.horizon.unwrap_or(60.0),
                };
                Plant::Mdof(sc)
            }
            SystemConfig::Satellite(s) => {
                let params = SatelliteParams::new(to_matrix3(&s.inertia)).map_err(cfg_err)?;
                let t = self
                    .tracking
                    .as_ref()
                    .ok_or_else(|| Error::Config("satellite systems need a [tracking] section".into()))?;
                let tracking = TrackingControllerConfig::new(
                    to_matrix3(&t.k_r),
                    Matrix3::from_diagonal(&Vector3::from(t.lambda_r)),
                    to_matrix3(&t.theta_r),
                )
                .map_err(cfg_err)?;
                let mut sc = SatelliteScenario::new(params, tracking, Vector3::from(s.desired_attitude), self.integrator);
                sc.q0 = Vector3::from(s.initial_attitude);
                if sc.q0.norm() >= 1.0 {
                    return Err(Error::Config("initial_attitude must satisfy |q| < 1".into()));
                }
                sc.omega0 = Vector3::from(s.initial_rate);
                if let Some(h) = self.probe.horizon {
                    sc.probe_horizon = h;
                }
                let rw = match &self.disturbance {
                    None => RwDisturbanceModel::default(),
                    Some(d) => match &d.phases {
                        None => RwDisturbanceModel::seeded(&d.harmonics, &d.amplitudes, d.wheel_speed, d.speed_unit, self.seed),
                        Some(ph) => {
                            if ph.len() != d.harmonics.len() || d.amplitudes.len() != d.harmonics.len() {
                                return Err(Error::Config("harmonics, amplitudes and phases must have equal length".into()));
                            }
                            let hs = d
                                .harmonics
                                .iter()
                                .zip(&d.amplitudes)
                                .zip(ph)
                                .map(|((&number, &amplitude), &phases)| RwHarmonic { number, amplitude, phases })
                                .collect();
                            RwDisturbanceModel::with_phases(hs, d.wheel_speed, d.speed_unit).map(|mut m| {
                                m.seed = self.seed;
                                m
                            })
                        }
                    }
                    .map_err(cfg_err)?,
                };
                Plant::Satellite { scenario: sc, rw }
            }
        };
        let axes = match &plant {
            Plant::Mdof(m) => m.system.n_q(),
            Plant::Satellite { .. } => 3,
        };
        self.adaptation.resolve(axes).map_err(cfg_err)?;
        let rms_window = RmsWindow {
            duration: self.simulate.duration.unwrap_or(RmsWindow::default().duration),
            settle: self.simulate.settle.unwrap_or(RmsWindow::default().settle),
        };
        Ok(Resolved {
            plant,
            grid,
            adaptation: self.adaptation.clone(),
            integrator: self.integrator,
            warm_start: self.sweep.warm_start,
            probe: self.probe.clone(),
            simulate: self.simulate.clone(),
            convergence: self.convergence.clone(),
            rms_window,
            seed: self.seed,
        })
    }
}

/// Parses `"a0:a1:da,w0:w1:dw"` into a grid.
pub fn parse_grid_override(s: &str) -> Result<ExcitationGrid> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("grid override '{s}' must look like a0:a1:da,w0:w1:dw")));
    }
    let triple = |p: &str| -> Result<(f64, f64, f64)> {
        let v: Vec<f64> = p
            .split(':')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("grid override '{p}': {e}")))?;
        match v.as_slice() {
            [a, b, c] => Ok((*a, *b, *c)),
            _ => Err(Error::Config(format!("grid override '{p}' needs start:stop:step"))),
        }
    };
    ExcitationGrid::from_ranges(triple(parts[0])?, triple(parts[1])?).map_err(cfg_err)
}
