//! Fixed-step RK4 integration, periodic steady-state detection and
//! multi-initial-condition convergence experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time-dependent vector field `ẋ = f(t, x)` evaluated into a caller buffer.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);

    /// Post-step hook for chart switches (e.g. MRP shadow sets). Default: none.
    fn project(&self, _x: &mut [f64]) {}
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (**self).eval(t, x, dx)
    }
    fn project(&self, x: &mut [f64]) {
        (**self).project(x)
    }
}

/// Adapts a closure into a [`VectorField`].
#[derive(Clone)]
pub struct FnField<F> {
    dim: usize,
    f: F,
}

pub fn fn_field<F>(dim: usize, f: F) -> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    FnField { dim, f }
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, dx)
    }
}

/// Integrator and steady-state detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Nominal RK4 step (s). Per-period integration uses `T/n` with `n = max(⌈T/h⌉, 20)`.
    pub step_h: f64,
    pub max_periods: usize,
    pub ss_rel_tol: f64,
    pub measure_periods: usize,
    /// Periods always discarded before the convergence test.
    pub transient_periods: usize,
    /// Consecutive small changes required.
    pub stable_periods: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step_h: 0.01,
            max_periods: 500,
            ss_rel_tol: 1e-3,
            measure_periods: 3,
            transient_periods: 10,
            stable_periods: 3,
        }
    }
}

const EPS_FLOOR: f64 = 1e-12;
const MIN_STEPS_PER_PERIOD: usize = 20;

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step_h must be > 0, got {}", self.step_h)));
        }
        if self.max_periods == 0 || self.measure_periods == 0 || self.stable_periods == 0 {
            return Err(Error::InvalidArgument(
                "max_periods, measure_periods and stable_periods must be >= 1".into(),
            ));
        }
        if !(self.ss_rel_tol > 0.0) {
            return Err(Error::InvalidArgument("ss_rel_tol must be > 0".into()));
        }
        Ok(())
    }

    /// Steps per excitation period of length `period`.
    pub fn steps_per_period(&self, period: f64) -> usize {
        let n = (period / self.step_h - 1e-9).ceil().max(1.0) as usize;
        n.max(MIN_STEPS_PER_PERIOD)
    }
}

/// Classic fourth-order Runge-Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + h` in place.
    pub fn step<F: VectorField + ?Sized>(&mut self, f: &F, t: f64, x: &mut [f64], h: f64) {
        f.eval(t, x, &mut self.k1);
        offset(&mut self.tmp, x, &self.k1, 0.5 * h);
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k2);
        offset(&mut self.tmp, x, &self.k2, 0.5 * h);
        f.eval(t + 0.5 * h, &self.tmp, &mut self.k3);
        offset(&mut self.tmp, x, &self.k3, h);
        f.eval(t + h, &self.tmp, &mut self.k4);
        let stages = self.k1.iter().zip(&self.k2).zip(self.k3.iter().zip(&self.k4));
        for (xi, ((a, b), (c, d))) in x.iter_mut().zip(stages) {
            *xi += h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        }
        f.project(x);
    }
}

/// `out = x + c k`.
fn offset(out: &mut [f64], x: &[f64], k: &[f64], c: f64) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + c * ki;
    }
}

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { time: t })
    }
}

fn check_dim<F: VectorField + ?Sized>(f: &F, x0: &[f64]) -> Result<()> {
    if f.dim() != x0.len() {
        return Err(Error::Dimension { expected: f.dim(), got: x0.len() });
    }
    Ok(())
}

/// Uniformly sampled state history, with optional recorded input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    pub times: Vec<f64>,
    states: Vec<f64>,
    input_labels: Vec<String>,
    inputs: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }
    pub fn input_labels(&self) -> &[String] {
        &self.input_labels
    }
    /// Recorded inputs at sample `k` (empty until [`Trajectory::record_inputs`]).
    pub fn input(&self, k: usize) -> &[f64] {
        let m = self.input_labels.len();
        &self.inputs[k * m..(k + 1) * m]
    }

    /// Evaluates `f(t, x, out)` at every sample and stores the result as input channels.
    pub fn record_inputs<F>(&mut self, labels: Vec<String>, f: F)
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let m = labels.len();
        let mut inputs = vec![0.0; m * self.len()];
        for k in 0..self.len() {
            let x = &self.states[k * self.dim..(k + 1) * self.dim];
            f(self.times[k], x, &mut inputs[k * m..(k + 1) * m]);
        }
        self.input_labels = labels;
        self.inputs = inputs;
    }

    /// Component `i` as a time series.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|x| x[i]).collect()
    }
}

/// Integrates from `t_span.0` with fixed step `config.step_h`, recording every step.
/// The number of steps is `round((t1 − t0)/h)`, so the final time lies within half a step of `t1`.
pub fn integrate<F: VectorField + ?Sized>(
    f: &F,
    x0: &[f64],
    t_span: (f64, f64),
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    check_dim(f, x0)?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("t_span must be increasing, got ({t0}, {t1})")));
    }
    check_finite(x0, t0)?;
    let h = config.step_h;
    let steps = ((t1 - t0) / h).round().max(1.0) as usize;
    let dim = x0.len();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * dim);
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(dim);
    times.push(t0);
    states.extend_from_slice(&x);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rk.step(f, t, &mut x, h);
        let tn = t0 + (k + 1) as f64 * h;
        check_finite(&x, tn)?;
        times.push(tn);
        states.extend_from_slice(&x);
    }
    Ok(Trajectory { dim, times, states, input_labels: Vec::new(), inputs: Vec::new() })
}

/// Result of a periodic steady-state search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub converged: bool,
    pub periods_used: usize,
    pub peak_per_channel: Vec<f64>,
    pub window: (f64, f64),
    /// State at the end of the run, usable as a warm start.
    pub final_state: Vec<f64>,
}

/// Integrates period by period until successive per-period channel peaks settle, then
/// measures `sup |y|` over `measure_periods` further periods.
///
/// `observe(t, x, y)` writes the `n_channels` outputs for state `x`.
pub fn detect_steady_state<F, O>(
    f: &F,
    x0: &[f64],
    period: f64,
    n_channels: usize,
    observe: O,
    config: &IntegratorConfig,
) -> Result<SteadyStateReport>
where
    F: VectorField + ?Sized,
    O: Fn(f64, &[f64], &mut [f64]),
{
    config.validate()?;
    check_dim(f, x0)?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be > 0, got {period}")));
    }
    check_finite(x0, 0.0)?;
    let n = config.steps_per_period(period);
    let h = period / n as f64;
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let mut y = vec![0.0; n_channels];
    let mut step_index: u64 = 0;

    // Integrates one period, returning the per-channel peak over its samples.
    let mut run_period = |x: &mut Vec<f64>, include_start: bool| -> Result<Vec<f64>> {
        let mut peaks = vec![0.0f64; n_channels];
        if include_start {
            observe(step_index as f64 * h, x, &mut y);
            for (p, v) in peaks.iter_mut().zip(&y) {
                *p = p.max(v.abs());
            }
        }
        for _ in 0..n {
            let t = step_index as f64 * h;
            rk.step(f, t, x, h);
            step_index += 1;
            let tn = step_index as f64 * h;
            check_finite(x, tn)?;
            observe(tn, x, &mut y);
            for (p, v) in peaks.iter_mut().zip(&y) {
                *p = p.max(v.abs());
            }
        }
        Ok(peaks)
    };

    let mut prev: Option<Vec<f64>> = None;
    let mut stable = 0usize;
    let mut periods = 0usize;
    let mut converged = false;
    while periods < config.max_periods {
        let peaks = run_period(&mut x, periods == 0)?;
        periods += 1;
        if let Some(p) = &prev {
            let change = peaks
                .iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs() / a.max(EPS_FLOOR))
                .fold(0.0, f64::max);
            stable = if change < config.ss_rel_tol { stable + 1 } else { 0 };
        }
        prev = Some(peaks);
        if periods >= config.transient_periods && stable >= config.stable_periods {
            converged = true;
            break;
        }
    }

    if !converged {
        let t = periods as f64 * period;
        return Ok(SteadyStateReport {
            converged,
            periods_used: periods,
            peak_per_channel: prev.unwrap_or_else(|| vec![0.0; n_channels]),
            window: ((periods.saturating_sub(1)) as f64 * period, t),
            final_state: x,
        });
    }

    let t_start = periods as f64 * period;
    let mut peaks = vec![0.0f64; n_channels];
    for _ in 0..config.measure_periods {
        let p = run_period(&mut x, false)?;
        for (a, b) in peaks.iter_mut().zip(p) {
            *a = a.max(b);
        }
        periods += 1;
    }
    Ok(SteadyStateReport {
        converged,
        periods_used: periods,
        peak_per_channel: peaks,
        window: (t_start, periods as f64 * period),
        final_state: x,
    })
}

/// Pairwise distance history of trajectories started from different initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIcReport {
    pub sample_times: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// `distances[p][k]`: sup-norm distance of pair `p` at sample `k`.
    pub distances: Vec<Vec<f64>>,
    /// Largest pairwise distance at each sample.
    pub max_distance: Vec<f64>,
    pub terminal_max_distance: f64,
    /// Fitted exponential decay rate of `max_distance` (1/s); `None` when fewer than two
    /// samples exceed `1e-9`.
    pub decay_rate: Option<f64>,
}

impl MultiIcReport {
    pub fn converged(&self, tol: f64) -> bool {
        self.terminal_max_distance < tol
    }
}

const DECAY_FIT_FLOOR: f64 = 1e-9;

/// Least-squares slope of `ln d` versus `t`, negated.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &d)| d >= DECAY_FIT_FLOOR && d.is_finite())
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

/// Integrates every initial state under the same field and samples pairwise sup-norm
/// distances once per `input_period` (and at `horizon`).
pub fn multi_ic_convergence<F: VectorField + Sync + ?Sized>(
    f: &F,
    initial_states: &[Vec<f64>],
    input_period: f64,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<MultiIcReport> {
    config.validate()?;
    if initial_states.len() < 2 {
        return Err(Error::InvalidArgument("need at least two initial states".into()));
    }
    if !(horizon > 0.0) || !(input_period > 0.0) {
        return Err(Error::InvalidArgument("horizon and input period must be > 0".into()));
    }
    for x0 in initial_states {
        check_dim(f, x0)?;
        check_finite(x0, 0.0)?;
    }
    let n = config.steps_per_period(input_period);
    let h = input_period / n as f64;
    let total = (horizon / h).round().max(1.0) as usize;
    let sample_steps: Vec<usize> =
        (0..=total).filter(|k| k % n == 0 || *k == total).collect();
    let sample_times: Vec<f64> = sample_steps.iter().map(|&k| k as f64 * h).collect();

    use rayon::prelude::*;
    let runs: Vec<Vec<Vec<f64>>> = initial_states
        .par_iter()
        .map(|x0| -> Result<Vec<Vec<f64>>> {
            let mut x = x0.clone();
            let mut rk = Rk4::new(x.len());
            let mut out = Vec::with_capacity(sample_steps.len());
            out.push(x.clone());
            let mut next = 1;
            for k in 0..total {
                rk.step(f, k as f64 * h, &mut x, h);
                check_finite(&x, (k + 1) as f64 * h)?;
                if next < sample_steps.len() && sample_steps[next] == k + 1 {
                    out.push(x.clone());
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let m = initial_states.len();
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let distances: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, j)| {
            runs[i]
                .iter()
                .zip(&runs[j])
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    let max_distance: Vec<f64> = (0..sample_times.len())
        .map(|k| distances.iter().map(|d| d[k]).fold(0.0, f64::max))
        .collect();
    let terminal_max_distance = *max_distance.last().unwrap_or(&0.0);
    let decay_rate = fit_decay_rate(&sample_times, &max_distance);
    Ok(MultiIcReport {
        sample_times,
        pairs,
        distances,
        max_distance,
        terminal_max_distance,
        decay_rate,
    })
}
