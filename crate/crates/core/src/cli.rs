//! The four subcommands behind the `nlfrf` binary.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::Vector3;
use serde::Serialize;

use crate::config::{parse_grid_override, AxisSpec, GridConfig, Plant, Resolved, ScenarioConfig};
use crate::convergence::{sample_region_check, JacobianReport, Transform};
use crate::error::{Error, Result};
use crate::frf::{FrfMatrix, SweepOptions};
use crate::io::{frf_csv, history_csv, to_json, trajectory_csv, GainsFile, OutputSet, RunManifest};
use crate::model::HarmonicInput;
use crate::satellite::torque_free_drift;
use crate::scenario::{satellite_vibration_scenario, ProbeConfig, RmsComparison};
use crate::sim::{MultiIcReport, Trajectory};
use crate::tracking::Disturbance;
use crate::tuner::{tune, TuneOptions, TuningHistory, TuningStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_MAX_ITERATIONS: i32 = 4;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Scenario file, or `preset:NAME`.
    #[arg(long)]
    pub config: String,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on sweep worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replace the excitation grid: "a0:a1:da,w0:w1:dw".
    #[arg(long = "grid-override")]
    pub grid_override: Option<String>,
    #[arg(long = "no-warm-start")]
    pub no_warm_start: bool,
}

/// Exit code for an error that ends a run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Divergence { .. } | Error::SweepFailure { .. } | Error::FailedCells { .. } | Error::NotConvergent { .. } => {
            EXIT_DIVERGENCE
        }
        _ => EXIT_FAILURE,
    }
}

/// Loads the config and applies flag overrides; the returned config is the effective snapshot.
pub fn prepare(args: &RunArgs) -> Result<(ScenarioConfig, Resolved, PathBuf)> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(g) = &args.grid_override {
        let grid = parse_grid_override(g)?;
        cfg.grid = GridConfig {
            amplitudes: AxisSpec::List(grid.amplitudes().to_vec()),
            frequencies: AxisSpec::List(grid.frequencies().to_vec()),
        };
    }
    if args.no_warm_start {
        cfg.sweep.warm_start = false;
    }
    let resolved = cfg.resolve()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, resolved, out))
}

struct Outcome {
    status: String,
    code: i32,
}

fn sweep_options(args: &RunArgs, r: &Resolved, abort: bool) -> SweepOptions {
    SweepOptions { jobs: args.jobs, warm_start: r.warm_start, abort_on_failure: abort }
}

fn run<F>(command: &str, args: &RunArgs, body: F) -> i32
where
    F: FnOnce(&Resolved, &mut OutputSet) -> Result<Outcome>,
{
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let (cfg, resolved, out_dir) = match prepare(args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let mut outputs = match OutputSet::new(&out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out_dir.display());
            return EXIT_FAILURE;
        }
    };
    let outcome = body(&resolved, &mut outputs).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Outcome { status: format!("error: {e}"), code: exit_code_for(&e) }
    });
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: cfg.seed,
        config: cfg.to_toml().unwrap_or_default(),
        started_unix_s: started,
        elapsed_s: clock.elapsed().as_secs_f64(),
        outputs: outputs.checksums().clone(),
        status: outcome.status.clone(),
        exit_code: outcome.code,
    };
    if let Err(e) = manifest.write(outputs.dir()) {
        eprintln!("error: writing manifest: {e}");
        return EXIT_FAILURE;
    }
    println!("{command}: {} (exit {}) -> {}", outcome.status, outcome.code, outputs.dir().display());
    outcome.code
}

fn write_frfs<'a>(out: &mut OutputSet, mats: impl Iterator<Item = &'a FrfMatrix>) -> Result<Vec<(usize, usize)>> {
    let mut failures = Vec::new();
    for m in mats {
        out.write(&format!("frf_{}.csv", m.label), &frf_csv(m))?;
        failures = m.failures.clone();
    }
    Ok(failures)
}

/// FRF sweep of the uncontrolled loop (open loop, or tracking law only for satellites).
pub fn cmd_frf(args: &RunArgs) -> i32 {
    run("frf", args, |r, out| {
        let opts = sweep_options(args, r, false);
        let frf = match &r.plant {
            Plant::Mdof(m) => m.frf(None, &r.grid, &opts)?,
            Plant::Satellite { scenario, .. } => scenario.frf(None, &r.grid, &opts)?,
        };
        let failures = write_frfs(out, frf.all())?;
        if failures.is_empty() {
            Ok(Outcome { status: "ok".into(), code: EXIT_OK })
        } else {
            let list: Vec<String> = failures
                .iter()
                .map(|&(i, j)| format!("(a={}, w={})", r.grid.amplitudes()[i], r.grid.frequencies()[j]))
                .collect();
            eprintln!("failed cells: {}", list.join(" "));
            Ok(Outcome { status: format!("failed-cells: {}", list.join(" ")), code: EXIT_DIVERGENCE })
        }
    })
}

fn history_outcome(h: &TuningHistory) -> Outcome {
    match h.status {
        TuningStatus::Converged => Outcome { status: "converged".into(), code: EXIT_OK },
        TuningStatus::MaxIterations => Outcome { status: "max-iterations".into(), code: EXIT_MAX_ITERATIONS },
        TuningStatus::SweepFailure => Outcome {
            status: format!("sweep-failure: {}", h.failure.clone().unwrap_or_default()),
            code: EXIT_DIVERGENCE,
        },
    }
}

fn write_history(out: &mut OutputSet, h: &TuningHistory) -> Result<()> {
    out.write("tuning_history.csv", &history_csv(h))?;
    out.write("tuning_history.json", &to_json(h)?)?;
    if let Some(g) = h.final_gains() {
        out.write("gains.json", &to_json(&GainsFile::from(&g))?)?;
    }
    Ok(())
}

/// Runs the adaptation loop and writes the history and final gains.
pub fn cmd_tune(args: &RunArgs) -> i32 {
    run("tune", args, |r, out| {
        let options = TuneOptions {
            sweep: sweep_options(args, r, true),
            initial: None,
            probe_tol: r.probe.enabled.then_some(r.probe.tol),
        };
        match &r.plant {
            Plant::Mdof(m) => {
                let h = tune(m, &r.grid, &r.adaptation, &options)?;
                write_history(out, &h)?;
                Ok(history_outcome(&h))
            }
            Plant::Satellite { scenario, rw } => {
                let rep = satellite_vibration_scenario(
                    scenario,
                    &Disturbance::Rw(rw.clone()),
                    &r.adaptation,
                    &r.grid,
                    &options,
                    &r.rms_window,
                )?;
                write_history(out, &rep.history)?;
                if let Some(c) = &rep.comparison {
                    out.write("rms_comparison.json", &to_json(c)?)?;
                }
                Ok(history_outcome(&rep.history))
            }
        }
    })
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    window_start: f64,
    peak_uncontrolled: Vec<f64>,
    peak_controlled: Option<Vec<f64>>,
}

fn peaks_after(tr: &Trajectory, n: usize, settle: f64) -> Vec<f64> {
    let mut p = vec![0.0f64; n];
    for (k, x) in tr.states().enumerate() {
        if tr.times[k] >= settle {
            for i in 0..n {
                p[i] = p[i].max(x[i].abs());
            }
        }
    }
    p
}

fn state_labels(n: usize) -> Vec<String> {
    let mut l: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
    l.extend((1..=n).map(|i| format!("qdot{i}")));
    l
}

/// Time responses with and without the PD term (gains file optional).
pub fn cmd_simulate(args: &RunArgs, gains_path: Option<&Path>) -> i32 {
    run("simulate", args, |r, out| {
        let gains = gains_path.map(GainsFile::load).transpose()?;
        match &r.plant {
            Plant::Mdof(m) => {
                let n = m.system.n_q();
                let a = r.simulate.amplitude.unwrap_or(0.0);
                let w = r.simulate.frequency.unwrap_or(6.0);
                let input = if a > 0.0 { Some(HarmonicInput::new(a, w).map_err(cfg)?) } else { None };
                let duration = r.simulate.duration.unwrap_or(60.0);
                let settle = r.simulate.settle.unwrap_or(duration / 2.0);
                let x0 = r.simulate.initial_state.clone().unwrap_or_else(|| vec![0.0; 2 * n]);
                if x0.len() != 2 * n {
                    return Err(Error::Config(format!("initial_state needs {} entries", 2 * n)));
                }
                let labels = state_labels(n);
                let open = m.simulate(None, input, &x0, duration)?;
                out.write("trajectory_uncontrolled.csv", &trajectory_csv(&open, &labels))?;
                let mut summary = SimulationSummary {
                    window_start: settle,
                    peak_uncontrolled: peaks_after(&open, n, settle),
                    peak_controlled: None,
                };
                if let Some(g) = &gains {
                    let closed = m.simulate(Some(g), input, &x0, duration)?;
                    out.write("trajectory_controlled.csv", &trajectory_csv(&closed, &labels))?;
                    summary.peak_controlled = Some(peaks_after(&closed, n, settle));
                }
                out.write("simulation_summary.json", &to_json(&summary)?)?;
            }
            Plant::Satellite { scenario, rw } => {
                let labels: Vec<String> =
                    ["q1", "q2", "q3", "w1", "w2", "w3"].map(String::from).to_vec();
                let dist = Disturbance::Rw(rw.clone());
                let window = r.rms_window;
                let without = scenario.simulate(None, dist.clone(), window.duration)?;
                out.write("trajectory_without_u.csv", &trajectory_csv(&without, &labels))?;
                let rms_without = scenario.error_rms(&without, window.settle);
                let rms_with = match &gains {
                    Some(g) => {
                        let with = scenario.simulate(Some(g), dist, window.duration)?;
                        out.write("trajectory_with_u.csv", &trajectory_csv(&with, &labels))?;
                        scenario.error_rms(&with, window.settle)
                    }
                    None => rms_without,
                };
                out.write("rms_comparison.json", &to_json(&RmsComparison::new(rms_with, rms_without))?)?;
            }
        }
        Ok(Outcome { status: "ok".into(), code: EXIT_OK })
    })
}

fn cfg(e: Error) -> Error {
    Error::Config(e.to_string())
}

#[derive(Debug, Serialize)]
struct MdofConvergenceReport {
    jacobian_identity: JacobianReport,
    jacobian_transformed: JacobianReport,
    transform: Transform,
    multi_ic: MultiIcReport,
    tol: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct EnergyReport {
    step: f64,
    duration: f64,
    energy_initial: f64,
    energy_drift: f64,
    momentum_drift: f64,
    tol: f64,
    passed: bool,
}

/// Jacobian diagnostics and the multi-IC experiment (MDOF), or the torque-free
/// conservation check (satellite).
pub fn cmd_converge_check(args: &RunArgs) -> i32 {
    run("converge-check", args, |r, out| {
        let c = &r.convergence;
        let passed = match &r.plant {
            Plant::Mdof(m) => {
                let n = m.system.n_q();
                let bx: Vec<(f64, f64)> = match &c.state_box {
                    Some(b) => b.iter().map(|v| (v[0], v[1])).collect(),
                    None => vec![(-5.0, 5.0); 2 * n],
                };
                let ident = sample_region_check(&m.system, None, &bx, c.samples, Transform::Identity, r.seed)
                    .map_err(cfg)?;
                let trans = sample_region_check(&m.system, None, &bx, c.samples, c.transform, r.seed).map_err(cfg)?;
                let mut sc = m.clone();
                sc.probe = ProbeConfig { initial_positions: c.initial_positions.clone(), horizon: c.horizon };
                let mic = sc.multi_ic(None, c.amplitude, c.frequency)?;
                let passed = mic.converged(c.tol);
                let mut csv = String::from("t,max_distance\n");
                for (t, d) in mic.sample_times.iter().zip(&mic.max_distance) {
                    csv.push_str(&format!("{},{}\n", crate::io::fmt_num(*t), crate::io::fmt_num(*d)));
                }
                out.write("multi_ic.csv", &csv)?;
                let rep = MdofConvergenceReport {
                    jacobian_identity: ident,
                    jacobian_transformed: trans,
                    transform: c.transform,
                    multi_ic: mic,
                    tol: c.tol,
                    passed,
                };
                out.write("convergence_report.json", &to_json(&rep)?)?;
                passed
            }
            Plant::Satellite { scenario, .. } => {
                let tol = 1e-6;
                let (e0, de, dm) = torque_free_drift(
                    &scenario.params,
                    scenario.q0,
                    Vector3::from(c.energy_rate),
                    c.energy_step,
                    c.energy_duration,
                )?;
                let rep = EnergyReport {
                    step: c.energy_step,
                    duration: c.energy_duration,
                    energy_initial: e0,
                    energy_drift: de,
                    momentum_drift: dm,
                    tol,
                    passed: de <= tol && dm <= tol,
                };
                out.write("energy_report.json", &to_json(&rep)?)?;
                rep.passed
            }
        };
        Ok(if passed {
            Outcome { status: "passed".into(), code: EXIT_OK }
        } else {
            Outcome { status: "check-failed".into(), code: EXIT_FAILURE }
        })
    })
}
