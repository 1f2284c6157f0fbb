//! Run manifest: what was run, with which settings, and a digest of every file
//! written.

use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use enclosure_core::extraction::{AdmissibilityReport, ExtractionError, ExtractionResult};
use enclosure_core::forward_solver::SolveStats;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverSummary {
    pub role: String,
    pub steps: usize,
    pub dt: f64,
    pub h: f64,
    pub cfl_ratio: f64,
    pub max_abs: f64,
    pub fluid_cells: usize,
    pub wall_faces: usize,
}

impl SolverSummary {
    pub fn new(role: &str, s: &SolveStats) -> Self {
        Self {
            role: role.to_string(),
            steps: s.steps,
            dt: s.dt,
            h: s.h,
            cfl_ratio: s.cfl_ratio,
            max_abs: s.max_abs,
            fluid_cells: s.fluid_cells,
            wall_faces: s.wall_faces,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConditionEntry {
    pub name: String,
    pub statement: String,
    pub holds: Option<bool>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtractionSummary {
    pub status: String,
    pub reason: Option<String>,
    pub r_d_estimate: Option<f64>,
    pub slope: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    pub n_points: Option<usize>,
    pub r_squared: Option<f64>,
    pub qualitative_verdict: Option<String>,
}

impl ExtractionSummary {
    pub fn from_result(r: &Result<ExtractionResult, ExtractionError>) -> Self {
        match r {
            Ok(e) => Self {
                status: "ok".into(),
                reason: None,
                r_d_estimate: Some(e.r_d_estimate),
                slope: Some(e.slope),
                fit_window: Some([e.fit_window.0, e.fit_window.1]),
                n_points: Some(e.n_points),
                r_squared: Some(e.r_squared),
                qualitative_verdict: Some(e.qualitative_verdict.to_string()),
            },
            Err(err) => Self {
                status: "null".into(),
                reason: Some(err.to_string()),
                r_d_estimate: None,
                slope: None,
                fit_window: None,
                n_points: None,
                r_squared: None,
                qualitative_verdict: None,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub started: String,
    pub finished: String,
    pub seed: u64,
    pub threads: usize,
    pub backend: String,
    pub calibration: Option<String>,
    pub horizon: f64,
    pub eta: f64,
    /// `R_D(p)` when the obstacle is given in the config.
    pub r_d_known: Option<f64>,
    pub admissibility: Vec<ConditionEntry>,
    pub warnings: Vec<String>,
    pub solver: Vec<SolverSummary>,
    /// Recorded traces read by `invert`.
    #[serde(default)]
    pub inputs: Vec<FileEntry>,
    pub extraction: Option<ExtractionSummary>,
    pub admissible_points: Option<usize>,
    pub files: Vec<FileEntry>,
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn conditions(report: &AdmissibilityReport) -> Vec<ConditionEntry> {
    report
        .checks
        .iter()
        .map(|c| ConditionEntry {
            name: c.name.to_string(),
            statement: c.statement.to_string(),
            holds: c.holds,
            margin: c.margin,
        })
        .collect()
}

impl RunManifest {
    /// Writes `bytes` to `dir/name` and records its digest.
    pub fn write_file(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(dir, name)
    }

    /// Records a file already written under `dir`, replacing an older entry.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes =
            std::fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        let entry = FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        };
        match self.files.iter_mut().find(|f| f.path == name) {
            Some(f) => *f = entry,
            None => self.files.push(entry),
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == name)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Reads a listed file and checks it against its recorded digest.
    pub fn read_verified(&self, dir: &Path, name: &str) -> Result<Vec<u8>> {
        let Some(entry) = self.file(name) else {
            bail!("manifest does not list {name}");
        };
        let path = dir.join(name);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let digest = sha256_hex(&bytes);
        if digest != entry.sha256 {
            bail!(
                "{} changed since the run: sha256 {digest}, manifest has {}",
                path.display(),
                entry.sha256
            );
        }
        Ok(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> RunManifest {
        RunManifest {
            version: "test".into(),
            command: "run".into(),
            config_sha256: String::new(),
            started: timestamp(),
            finished: String::new(),
            seed: 0,
            threads: 1,
            backend: "sequential".into(),
            calibration: None,
            horizon: 1.9,
            eta: 0.9,
            r_d_known: Some(0.3),
            admissibility: vec![],
            warnings: vec![],
            solver: vec![],
            inputs: vec![],
            extraction: None,
            admissible_points: None,
            files: vec![],
        }
    }

    #[test]
    fn digest_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn files_are_recorded_and_verified() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = empty();
        m.write_file(dir.path(), "a.txt", b"one").unwrap();
        m.write_file(dir.path(), "a.txt", b"two").unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.read_verified(dir.path(), "a.txt").unwrap(), b"two");
        std::fs::write(dir.path().join("a.txt"), b"three").unwrap();
        assert!(m.read_verified(dir.path(), "a.txt").is_err());
        m.save(dir.path()).unwrap();
        let back = RunManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
    }
}
