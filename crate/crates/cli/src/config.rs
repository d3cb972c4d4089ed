//! Run configuration.
//!
//! A run is configured by a single TOML file. Every key has a documented
//! default (the file — and any section in it — may be omitted entirely), and
//! unknown keys are errors, so a typo can never silently fall back to a
//! default. The resolved configuration is embedded in the run manifest and
//! hashed, which is what makes runs resumable and reproducible: same config,
//! same seed, same synthetic backend — same bytes.
//!
//! ```toml
//! [run]
//! study = "ite"        # which study this config is for: "ite" | "pfn"
//! seed = 42            # root seed for design, sampling, and synthetic noise
//! blocks = 10          # rating study: blocks of 100 participants
//! participants = 2153  # framing study: sampled participants
//! reroll_cap = 10      # completions rejected per participant before giving up
//!
//! [backend]
//! kind = "synthetic"   # "synthetic" | "http"
//! temperature = 1.0
//!
//! [synthetic]
//! offset = 0.26        # planted exposure shift (rating study)
//! tilt = -0.15
//!
//! [analysis]
//! resamples = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Which experiment a run administers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    /// Repeated-exposure rating study: blocks of 100 participants rate 100
    /// statements on four attributes, twice.
    Ite,
    /// Populist-framing study: sampled personas read one article variant and
    /// answer five agreement probes.
    Pfn,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Ite => "ite",
            Study::Pfn => "pfn",
        }
    }
}

/// Which completion backend answers the prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Built-in deterministic synthetic participants (no network).
    Synthetic,
    /// A remote completions endpoint.
    Http,
}

/// Planted ground truth for the synthetic framing-study population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PfnEffects {
    /// Nothing moves either outcome.
    Null,
    /// Strong frame effects and a modest deprivation slope.
    Planted,
}

/// The full run configuration. Every field of every section has a default;
/// unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub backend: BackendSection,
    pub inputs: InputsSection,
    pub population: PopulationSection,
    pub synthetic: SyntheticSection,
    pub analysis: AnalysisSection,
}

/// `[run]` — what to run and how much of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Which study this config is for. Default: the study of the subcommand
    /// that reads it; when set, it must match that subcommand.
    pub study: Option<Study>,
    /// Stable run identifier. Default: `<study>-<seed>-<hash8>` derived from
    /// the resolved config, so identical configs name identical runs.
    pub run_id: Option<String>,
    /// Root seed for the design, persona sampling, and synthetic completion
    /// noise. Default: 0.
    pub seed: u64,
    /// Rating study: number of 100-participant blocks. Default: 10.
    pub blocks: u32,
    /// Framing study: number of sampled participants. Default: 2153.
    pub participants: u32,
    /// How many rejected (unparseable) completions to re-roll per participant
    /// before the run fails. Default: 10.
    pub reroll_cap: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            study: None,
            run_id: None,
            seed: 0,
            blocks: 10,
            participants: 2153,
            reroll_cap: 10,
        }
    }
}

/// `[backend]` — completion backend selection and tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    /// `"synthetic"` (default) or `"http"`.
    pub kind: BackendKind,
    /// Completions endpoint for the HTTP backend.
    /// Default: `http://127.0.0.1:8000/v1/completions`.
    pub url: String,
    /// Environment variable holding the API key; empty means send no
    /// Authorization header. Default: `INFLUENCE_API_KEY`.
    pub api_key_env: String,
    /// Model name forwarded with every request. Default: `default`.
    pub model: String,
    /// Sampling temperature in [0, 2]. Default: 1.0.
    pub temperature: f64,
    /// Completion length cap. Default: 2048.
    pub max_tokens: u32,
    /// Retries after a transient failure (429, 5xx, transport). Default: 5.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry. Default: 250 ms.
    pub retry_base_ms: u64,
    /// Hard cap on completion calls for the whole run; 0 means unlimited.
    /// Default: 0.
    pub max_queries: u64,
    /// Participant pipelines in flight at once. Default: 4.
    pub concurrency: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Synthetic,
            url: "http://127.0.0.1:8000/v1/completions".into(),
            api_key_env: "INFLUENCE_API_KEY".into(),
            model: "default".into(),
            temperature: 1.0,
            max_tokens: 2048,
            max_retries: 5,
            retry_base_ms: 250,
            max_queries: 0,
            concurrency: 4,
        }
    }
}

/// `[inputs]` — experiment material files. Every path defaults to the
/// built-in corpus compiled into the library.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputsSection {
    /// Statement bank file (rating study). Default: built-in bank.
    pub bank: Option<PathBuf>,
    /// Prompt template directory. Default: built-in templates.
    pub templates: Option<PathBuf>,
    /// Article variant directory (framing study). Default: built-in articles.
    pub articles: Option<PathBuf>,
    /// Survey items file (framing study). Default: built-in items.
    pub survey: Option<PathBuf>,
    /// Country table file (framing study). Default: built-in table.
    pub countries: Option<PathBuf>,
}

/// `[population]` — framing-study persona sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationSection {
    /// Mean of the participant-level deprivation draw. Default: 4.30.
    pub deprivation_mean: f64,
    /// Standard deviation of that draw. Default: 1.61.
    pub deprivation_sd: f64,
    /// Per-item perturbation width around the participant draw. The default
    /// 0.33 is the calibrated width at which about half of all sampled
    /// triples come out identical (`calibrate-deprivation` reproduces it).
    pub perturb_sd: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        PopulationSection {
            deprivation_mean: 4.30,
            deprivation_sd: 1.61,
            perturb_sd: 0.33,
        }
    }
}

/// `[synthetic]` — ground truth of the built-in synthetic participants.
/// Ignored when the backend is `http`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    /// Planted additive exposure shift on mixed-truth pairs (rating study).
    /// Default: 0.0 (no effect).
    pub offset: f64,
    /// Planted slope on (base mean − scale midpoint) (rating study).
    /// Default: 0.0 (no effect).
    pub tilt: f64,
    /// Rating noise at temperature 1 (rating study). Default: the library's
    /// calibrated width.
    pub ite_noise_sd: Option<f64>,
    /// Framing-study ground truth: `"null"` (default) or `"planted"`.
    pub pfn_effects: PfnEffects,
    /// Per-probe noise at temperature 1 (framing study). Default: the
    /// library's calibrated width.
    pub pfn_noise_sd: Option<f64>,
    /// Seed of the synthetic population itself (per-statement baseline
    /// means). Default: `run.seed`.
    pub population_seed: Option<u64>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            offset: 0.0,
            tilt: 0.0,
            ite_noise_sd: None,
            pfn_effects: PfnEffects::Null,
            pfn_noise_sd: None,
            population_seed: None,
        }
    }
}

/// `[analysis]` — estimator settings used by `analyze` and the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Bootstrap resamples (rating study). Default: 10000.
    pub resamples: usize,
    /// Confidence level before correction. Default: 0.95.
    pub level: f64,
    /// Bonferroni correction count. Default: 16, the number of offset/tilt
    /// cells tested jointly.
    pub corrections: usize,
    /// Tolerated fraction of degenerate resamples. Default: 0.01.
    pub max_dropped: f64,
    /// Bootstrap seed. Default: `run.seed`.
    pub bootstrap_seed: Option<u64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            resamples: 10_000,
            level: 0.95,
            corrections: 16,
            max_dropped: 0.01,
            bootstrap_seed: None,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Overrides `run.seed`.
    pub seed: Option<u64>,
    /// Overrides `backend.url` and switches `backend.kind` to `http`.
    pub backend_url: Option<String>,
}

impl RunConfig {
    /// Load a config file, or the all-defaults config when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Apply command-line overrides.
    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if let Some(url) = &overrides.backend_url {
            self.backend.kind = BackendKind::Http;
            self.backend.url = url.clone();
        }
    }

    /// Check the config against the study the subcommand runs, and return
    /// that study.
    pub fn resolve_study(&self, subcommand: Study) -> Result<Study, CliError> {
        match self.run.study {
            Some(study) if study != subcommand => Err(CliError::config(format!(
                "config is for study \"{}\" but this subcommand runs \"{}\"",
                study.name(),
                subcommand.name()
            ))),
            _ => Ok(subcommand),
        }
    }

    /// Hex SHA-256 of the resolved config's canonical JSON form.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// The run identifier: `run.run_id` when set, otherwise
    /// `<study>-<seed>-<first 8 hash hex digits>`.
    pub fn run_id(&self, study: Study) -> String {
        match &self.run.run_id {
            Some(id) => id.clone(),
            None => format!("{}-{}-{}", study.name(), self.run.seed, &self.sha256()[..8]),
        }
    }

    /// Seed of the synthetic population (baseline means / coefficients).
    pub fn population_seed(&self) -> u64 {
        self.synthetic.population_seed.unwrap_or(self.run.seed)
    }

    /// Seed of the bootstrap resampling streams.
    pub fn bootstrap_seed(&self) -> u64 {
        self.analysis.bootstrap_seed.unwrap_or(self.run.seed)
    }
}
