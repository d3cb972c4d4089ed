//! Run manifests and the data-file header.
//!
//! A run directory holds three artifacts:
//!
//! * `data.jsonl` — append-only raw records: one deterministic header line,
//!   then one record per line (a rating for the rating study, a participant
//!   for the framing study).
//! * `manifest.json` — everything about the run: the resolved config, its
//!   hash, seeds, counts, and timestamps. Manifest plus data file suffice to
//!   reproduce any synthetic run exactly.
//! * `analysis.json` / `reports/` — derived artifacts (see `report`).
//!
//! The header line carries no timestamps, so identical configs produce
//! byte-identical data files; wall-clock facts live only in the manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Study};
use crate::error::CliError;

pub const DATA_FILE: &str = "data.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const REPORTS_DIR: &str = "reports";

/// First line of every data file. Deterministic in the resolved config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataHeader {
    pub format: String,
    pub run_id: String,
    pub study: Study,
    pub seed: u64,
    pub config_sha256: String,
    pub backend: String,
}

impl DataHeader {
    pub fn new(config: &RunConfig, study: Study, backend: &str) -> DataHeader {
        DataHeader {
            format: "influence-run-v1".into(),
            run_id: config.run_id(study),
            study,
            seed: config.run.seed,
            config_sha256: config.sha256(),
            backend: backend.into(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("header serializes");
        line.push('\n');
        line
    }
}

/// Everything about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub study: Study,
    /// Backend name as reported by the backend itself.
    pub backend: String,
    /// Model name forwarded with every completion request.
    pub model: String,
    pub seed: u64,
    /// Rating study: blocks of 100 participants (0 for the framing study).
    pub blocks: u32,
    /// Total participants the run covers.
    pub participants: u32,
    /// Hex SHA-256 of the resolved config below.
    pub config_sha256: String,
    /// The resolved configuration the run was executed with.
    pub config: RunConfig,
    /// Data file name within the run directory.
    pub data_file: String,
    /// Unix seconds when the run first started.
    pub started_unix: u64,
    /// Unix seconds when the run finished (absent while in progress).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    /// Completions rejected by the parser and re-rolled.
    pub rejections: u64,
    /// Completion calls made (including re-rolls).
    pub queries: u64,
    /// Record lines in the data file (header excluded).
    pub records: u64,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<RunManifest, CliError> {
        let path = Self::path_in(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::config(format!(
                "{} is not a run directory (no readable manifest): {e}",
                dir.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(Self::path_in(dir), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        let config = RunConfig::default();
        RunManifest {
            run_id: config.run_id(Study::Ite),
            study: Study::Ite,
            backend: "synthetic-ite".into(),
            model: "default".into(),
            seed: 0,
            blocks: 10,
            participants: 1000,
            config_sha256: config.sha256(),
            config,
            data_file: DATA_FILE.into(),
            started_unix: 1_700_000_000,
            finished_unix: None,
            rejections: 0,
            queries: 2000,
            records: 64_000,
        }
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        m.finished_unix = Some(1_700_000_100);
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn loading_a_non_run_directory_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = RunManifest::load(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn header_line_is_deterministic_in_the_config() {
        let config = RunConfig::default();
        let a = DataHeader::new(&config, Study::Ite, "synthetic-ite").to_line();
        let b = DataHeader::new(&config, Study::Ite, "synthetic-ite").to_line();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        let mut other = config.clone();
        other.run.seed = 5;
        assert_ne!(a, DataHeader::new(&other, Study::Ite, "synthetic-ite").to_line());
    }
}
