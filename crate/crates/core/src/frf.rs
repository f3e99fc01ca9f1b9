//! Amplitude × frequency sweeps of steady-state peaks into FRF matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SteadyStateReport;

/// Excitation amplitudes (rows) and angular frequencies (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationGrid {
    amplitudes: Vec<f64>,
    frequencies: Vec<f64>,
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} list is empty")));
    }
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("{name} must be positive and finite")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// `start, start + step, …` up to `stop` inclusive (with a small tolerance).
pub fn inclusive_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidArgument(format!("bad range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

impl ExcitationGrid {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        check_axis("amplitudes", &amplitudes)?;
        check_axis("frequencies", &frequencies)?;
        Ok(Self { amplitudes, frequencies })
    }

    pub fn from_ranges(a: (f64, f64, f64), w: (f64, f64, f64)) -> Result<Self> {
        Self::new(inclusive_range(a.0, a.1, a.2)?, inclusive_range(w.0, w.1, w.2)?)
    }

    /// `a ∈ {0.5, 1, …, 6}`, `ω ∈ {3, 3.375, …, 9}` (12 × 17).
    pub fn duffing_default() -> Self {
        Self::from_ranges((0.5, 6.0, 0.5), (3.0, 9.0, 0.375)).expect("valid default grid")
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
    pub fn rows(&self) -> usize {
        self.amplitudes.len()
    }
    pub fn cols(&self) -> usize {
        self.frequencies.len()
    }
}

/// `γ = peak / a`.
pub fn amplification_gain(peak: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude must be > 0, got {a}")));
    }
    if !(peak >= 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be >= 0, got {peak}")));
    }
    Ok(peak / a)
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// What to do with failed cells when reducing an FRF to its norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Exclude,
    Abort,
}

/// Amplification gains of one output channel over a grid. Failed cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfMatrix {
    pub label: String,
    pub grid: ExcitationGrid,
    pub gains: DMatrix<f64>,
    pub failures: Vec<(usize, usize)>,
}

impl FrfMatrix {
    /// Norm over all cells; errors if any cell failed.
    pub fn frobenius_norm(&self) -> Result<f64> {
        if !self.failures.is_empty() {
            return Err(Error::FailedCells { label: self.label.clone(), count: self.failures.len() });
        }
        Ok(frobenius_norm(&self.gains))
    }

    pub fn frobenius_norm_with(&self, policy: FailurePolicy) -> Result<f64> {
        match policy {
            FailurePolicy::Abort => self.frobenius_norm(),
            FailurePolicy::Exclude => Ok(self
                .gains
                .iter()
                .filter(|v| v.is_finite())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()),
        }
    }

    /// Frequency of the largest gain on each amplitude row.
    pub fn argmax_frequency_per_amplitude(&self) -> Vec<f64> {
        (0..self.gains.nrows())
            .map(|i| {
                let row = self.gains.row(i);
                let j = (0..row.len())
                    .filter(|&j| row[j].is_finite())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap_or(0);
                self.grid.frequencies[j]
            })
            .collect()
    }
}

/// Sweep execution switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global pool, `Some(1)` runs serially.
    pub jobs: Option<usize>,
    /// Start each cell from the previous amplitude's final state in the same column.
    pub warm_start: bool,
    /// Return [`Error::SweepFailure`] when any cell fails.
    pub abort_on_failure: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { jobs: None, warm_start: false, abort_on_failure: true }
    }
}

/// Runs `work` on a pool capped at `jobs` threads (or inline for one job).
pub fn with_jobs<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

type CellOutcome = Result<Option<SteadyStateReport>>;

/// Evaluates `cell(a, ω, warm_state)` at every grid point and assembles one [`FrfMatrix`]
/// per label from `peak_per_channel / a`. A cell fails on divergence or when steady state
/// is not reached. Output is independent of scheduling.
pub fn frf_sweep<F>(
    grid: &ExcitationGrid,
    labels: &[String],
    options: &SweepOptions,
    cell: F,
) -> Result<Vec<FrfMatrix>>
where
    F: Fn(f64, f64, Option<&[f64]>) -> Result<SteadyStateReport> + Sync,
{
    let (r, s) = (grid.rows(), grid.cols());
    let run = |i: usize, j: usize, warm: Option<&[f64]>| -> CellOutcome {
        match cell(grid.amplitudes[i], grid.frequencies[j], warm) {
            Ok(rep) if rep.converged => Ok(Some(rep)),
            Ok(_) | Err(Error::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let column = |j: usize| -> Result<Vec<Option<SteadyStateReport>>> {
        let mut out = Vec::with_capacity(r);
        let mut warm: Option<Vec<f64>> = None;
        for i in 0..r {
            let rep = run(i, j, if options.warm_start { warm.as_deref() } else { None })?;
            warm = rep.as_ref().map(|x| x.final_state.clone());
            out.push(rep);
        }
        Ok(out)
    };

    let serial = options.jobs == Some(1);
    let columns: Vec<Vec<Option<SteadyStateReport>>> = if options.warm_start {
        if serial {
            (0..s).map(column).collect::<Result<_>>()?
        } else {
            with_jobs(options.jobs, || (0..s).into_par_iter().map(column).collect::<Result<Vec<_>>>())??
        }
    } else {
        let flat: Vec<Option<SteadyStateReport>> = if serial {
            (0..r * s).map(|k| run(k % r, k / r, None)).collect::<Result<_>>()?
        } else {
            with_jobs(options.jobs, || {
                (0..r * s).into_par_iter().map(|k| run(k % r, k / r, None)).collect::<Result<Vec<_>>>()
            })??
        };
        let mut it = flat.into_iter();
        (0..s).map(|_| it.by_ref().take(r).collect()).collect()
    };

    let mut failures = Vec::new();
    let mut mats: Vec<FrfMatrix> = labels
        .iter()
        .map(|l| FrfMatrix {
            label: l.clone(),
            grid: grid.clone(),
            gains: DMatrix::zeros(r, s),
            failures: Vec::new(),
        })
        .collect();
    for (j, col) in columns.iter().enumerate() {
        for (i, rep) in col.iter().enumerate() {
            match rep {
                Some(rep) => {
                    if rep.peak_per_channel.len() != labels.len() {
                        return Err(Error::Dimension {
                            expected: labels.len(),
                            got: rep.peak_per_channel.len(),
                        });
                    }
                    for (m, &p) in mats.iter_mut().zip(&rep.peak_per_channel) {
                        m.gains[(i, j)] = amplification_gain(p, grid.amplitudes[i])?;
                    }
                }
                None => {
                    failures.push((i, j));
                    for m in mats.iter_mut() {
                        m.gains[(i, j)] = f64::NAN;
                    }
                }
            }
        }
    }
    failures.sort_unstable();
    if !failures.is_empty() && options.abort_on_failure {
        return Err(Error::SweepFailure { cells: failures });
    }
    for m in mats.iter_mut() {
        m.failures = failures.clone();
    }
    Ok(mats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_examples() {
        assert_eq!(amplification_gain(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(amplification_gain(0.4167, 1.0).unwrap(), 0.4167);
        assert_eq!(amplification_gain(2.5, 5.0).unwrap(), 0.5);
        assert!(amplification_gain(1.0, 0.0).is_err());
        assert!(amplification_gain(1.0, -2.0).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(frobenius_norm(&DMatrix::zeros(3, 2)), 0.0);
        assert_eq!(frobenius_norm(&DMatrix::identity(2, 2)), 2f64.sqrt());
    }

    #[test]
    fn grid_validation() {
        let g = ExcitationGrid::duffing_default();
        assert_eq!((g.rows(), g.cols()), (12, 17));
        assert_eq!(g.amplitudes()[11], 6.0);
        assert_eq!(g.frequencies()[16], 9.0);
        assert_eq!(g.frequencies()[8], 6.0);
        assert!(ExcitationGrid::new(vec![], vec![1.0]).is_err());
        assert!(ExcitationGrid::new(vec![1.0, 0.5], vec![1.0]).is_err());
        assert!(ExcitationGrid::new(vec![1.0], vec![-1.0]).is_err());
        assert_eq!(inclusive_range(3.0, 9.0, 0.25).unwrap().len(), 25);
    }

    fn fake(a: f64, w: f64) -> Result<SteadyStateReport> {
        if w > 2.5 {
            return Err(Error::Divergence { time: 1.0 });
        }
        Ok(SteadyStateReport {
            converged: w < 2.0 || a < 1.5,
            periods_used: 1,
            peak_per_channel: vec![a * w, 2.0 * a],
            window: (0.0, 1.0),
            final_state: vec![],
        })
    }

    #[test]
    fn sweep_assembles_and_records_failures() {
        let grid = ExcitationGrid::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        let labels = vec!["x1".to_string(), "x2".to_string()];
        let opts = SweepOptions { abort_on_failure: false, jobs: Some(1), ..Default::default() };
        let m = frf_sweep(&grid, &labels, &opts, |a, w, _| fake(a, w)).unwrap();
        assert_eq!(m[0].gains[(0, 0)], 1.0);
        assert_eq!(m[0].gains[(1, 0)], 1.0);
        assert!(m[1].gains[(1, 1)].is_nan());
        assert_eq!(m[0].failures, vec![(0, 2), (1, 1), (1, 2)]);
        assert!(m[0].frobenius_norm().is_err());
        assert_eq!(m[0].frobenius_norm_with(FailurePolicy::Exclude).unwrap(), (1.0f64 + 1.0 + 4.0).sqrt());
        assert!(m[0].frobenius_norm_with(FailurePolicy::Abort).is_err());

        let abort = SweepOptions::default();
        match frf_sweep(&grid, &labels, &abort, |a, w, _| fake(a, w)) {
            Err(Error::SweepFailure { cells }) => assert_eq!(cells.len(), 3),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn argmax_per_row() {
        let grid = ExcitationGrid::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap();
        let m = FrfMatrix {
            label: "x".into(),
            grid,
            gains: DMatrix::from_row_slice(2, 3, &[0.1, 0.5, 0.2, 0.1, 0.2, 0.3]),
            failures: vec![],
        };
        assert_eq!(m.argmax_frequency_per_amplitude(), vec![2.0, 3.0]);
    }
}
