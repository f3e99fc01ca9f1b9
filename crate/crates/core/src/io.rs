//! CSV/JSON writers with round-trip precision, gains files, and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frf::FrfMatrix;
use crate::sim::Trajectory;
use crate::tuner::{PdGains, TuningHistory};

/// 17 significant digits; `nan` for failed cells.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Rows are amplitudes, columns frequencies; the header row and first column carry the grid.
pub fn frf_csv(m: &FrfMatrix) -> String {
    let mut s = String::from("amplitude\\omega");
    for w in m.grid.frequencies() {
        write!(s, ",{}", fmt_num(*w)).unwrap();
    }
    s.push('\n');
    for (i, a) in m.grid.amplitudes().iter().enumerate() {
        s.push_str(&fmt_num(*a));
        for j in 0..m.gains.ncols() {
            write!(s, ",{}", fmt_num(m.gains[(i, j)])).unwrap();
        }
        s.push('\n');
    }
    s
}

/// `iteration, theta_p…, theta_d…, fnorm_pos…, fnorm_vel…, eps_pos…, eps_vel…, scale_p…, scale_d…`.
pub fn history_csv(h: &TuningHistory) -> String {
    let n = h.records.first().map_or(0, |r| r.theta_p.len());
    let mut s = String::from("iteration");
    for group in ["theta_p", "theta_d", "fnorm_pos", "fnorm_vel", "eps_pos", "eps_vel", "scale_p", "scale_d"] {
        for i in 1..=n {
            write!(s, ",{group}_{i}").unwrap();
        }
    }
    s.push('\n');
    for r in &h.records {
        write!(s, "{}", r.iteration).unwrap();
        for v in [
            &r.theta_p,
            &r.theta_d,
            &r.fnorm_position,
            &r.fnorm_velocity,
            &r.eps_position,
            &r.eps_velocity,
            &r.step_scale_p,
            &r.step_scale_d,
        ] {
            for x in v {
                write!(s, ",{}", fmt_num(*x)).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

/// `t, <state labels>, <recorded inputs>`.
pub fn trajectory_csv(tr: &Trajectory, state_labels: &[String]) -> String {
    let mut s = String::from("t");
    for l in state_labels.iter().chain(tr.input_labels()) {
        write!(s, ",{l}").unwrap();
    }
    s.push('\n');
    let has_inputs = !tr.input_labels().is_empty();
    for k in 0..tr.len() {
        s.push_str(&fmt_num(tr.times[k]));
        for v in tr.state(k) {
            write!(s, ",{}", fmt_num(*v)).unwrap();
        }
        if has_inputs {
            for v in tr.input(k) {
                write!(s, ",{}", fmt_num(*v)).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Gain matrices as nested row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub theta_p: Vec<Vec<f64>>,
    pub theta_d: Vec<Vec<f64>>,
}

impl From<&PdGains> for GainsFile {
    fn from(g: &PdGains) -> Self {
        let rows = |m: &nalgebra::DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self { theta_p: rows(&g.theta_p), theta_d: rows(&g.theta_d) }
    }
}

impl GainsFile {
    pub fn to_gains(&self) -> Result<PdGains> {
        let n = self.theta_p.len();
        let mat = |rows: &Vec<Vec<f64>>| -> Result<nalgebra::DMatrix<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config("gains must be square matrices of equal size".into()));
            }
            Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        Ok(PdGains { theta_p: mat(&self.theta_p)?, theta_d: mat(&self.theta_d)? })
    }

    pub fn load(path: &Path) -> Result<PdGains> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read gains file {}: {e}", path.display())))?;
        let f: GainsFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("gains file {}: {e}", path.display())))?;
        f.to_gains()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files and their checksums for one run.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, checksums: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, content.as_bytes())?;
        self.checksums.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(path)
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.checksums
    }
}

/// Reproducibility record written last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Effective configuration (after flag overrides) as TOML.
    pub config: String,
    pub started_unix_s: f64,
    pub elapsed_s: f64,
    /// SHA-256 of each output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub status: String,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("manifest.json"), to_json(self)?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frf::ExcitationGrid;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn frf_csv_layout() {
        let grid = ExcitationGrid::new(vec![1.0, 2.0], vec![3.0, 4.0, 5.0]).unwrap();
        let m = FrfMatrix {
            label: "x1".into(),
            grid,
            gains: nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            failures: vec![],
        };
        let csv = frf_csv(&m);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("amplitude\\omega,3.0000000000000000e0"));
        assert_eq!(lines[2].split(',').nth(3).unwrap().parse::<f64>().unwrap(), 6.0);
    }

    #[test]
    fn gains_file_round_trip() {
        let g = PdGains::diagonal(&[7.1, 2.0], &[2.6, 1.0]);
        let f = GainsFile::from(&g);
        let json = serde_json::to_string(&f).unwrap();
        let back: GainsFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_gains().unwrap(), g);
        let bad = GainsFile { theta_p: vec![vec![1.0]], theta_d: vec![vec![1.0, 2.0]] };
        assert!(bad.to_gains().is_err());
    }

    #[test]
    fn atomic_write_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new(dir.path().join("sub")).unwrap();
        out.write("a.csv", "x\n1\n").unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("sub/a.csv")).unwrap(), "x\n1\n");
        assert_eq!(out.checksums()["a.csv"], sha256_hex(b"x\n1\n"));
        assert!(!dir.path().join("sub/.a.csv.tmp").exists());
    }
}
