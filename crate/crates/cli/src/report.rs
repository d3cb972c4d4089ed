//! Analysis artifacts and report rendering.
//!
//! `analyze` recomputes everything from the raw data file — never from other
//! derived artifacts — and stores the result as `analysis.json` in the run
//! directory. `report` renders files from that artifact (tables) or from the
//! raw records via the statistics engine (figure data); it does no
//! arithmetic of its own, so every emitted number is recomputable from the
//! raw JSONL alone.
//!
//! Report kinds and what they hold:
//!
//! * `table4` — offset/tilt per test attribute after mixed-attribute
//!   exposure, with corrected bootstrap intervals and p-values.
//! * `table5` — the same after same-attribute exposure.
//! * `table6` — outcome score descriptives of a framing run.
//! * `table7` — the framing/deprivation coefficient battery.
//! * `fig4_data` — per-statement exposure-phase rating means with intervals.
//! * `fig5_data` — per-statement truth means, unexposed vs mixed-exposed.
//!
//! Tables are written as both CSV (full-precision numbers) and plain text
//! (rounded, with significance stars); figure data is CSV only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use influence_core::stats::bootstrap::{run_two_way_bootstrap, BootstrapSettings};
use influence_core::stats::battery::run_battery;
use influence_core::stats::dataset::{IteDataset, IteRow, PfnDataset, PfnRow};
use influence_core::stats::stars;

use crate::config::Study;
use crate::error::CliError;
use crate::manifest::{RunManifest, ANALYSIS_FILE, REPORTS_DIR};
use crate::runner::{load_countries, load_records};

// ---------------------------------------------------------------------------
// Analysis artifact schema
// ---------------------------------------------------------------------------

/// The `analysis.json` artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "lowercase")]
pub enum Analysis {
    Ite(IteAnalysis),
    Pfn(PfnAnalysis),
}

/// Rating-study analysis: the two-way bootstrap over the 16 offset/tilt
/// components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteAnalysis {
    pub settings: BootstrapSettingsOut,
    /// Resamples that evaluated successfully / were dropped as degenerate.
    pub used: usize,
    pub dropped: usize,
    pub components: Vec<ComponentOut>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettingsOut {
    pub resamples: usize,
    pub level: f64,
    pub corrections: usize,
    pub seed: u64,
    pub max_dropped: f64,
}

/// One offset/tilt cell: `<class>/<attribute>/<parameter>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentOut {
    pub name: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Bonferroni-corrected two-sided p-value.
    pub p: f64,
}

/// Framing-study analysis: outcome descriptives plus the coefficient
/// battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfnAnalysis {
    pub descriptives: OutcomeDescriptives,
    pub rows: Vec<BatteryRowOut>,
    pub fits: Vec<FitOut>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDescriptives {
    pub persuasion: DescriptivesOut,
    pub mobilization: DescriptivesOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptivesOut {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// One battery report row: a named coefficient pulled from one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRowOut {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    pub outcome: String,
    pub model: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

/// One of the ten fits, in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOut {
    pub model: String,
    pub outcome: String,
    pub n: usize,
    pub clusters: usize,
    pub r_squared: f64,
    pub coefficients: Vec<CoefficientOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientOut {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

fn outcome_name(outcome: influence_core::stats::battery::Outcome) -> &'static str {
    match outcome {
        influence_core::stats::battery::Outcome::Persuasion => "persuasion",
        influence_core::stats::battery::Outcome::Mobilization => "mobilization",
    }
}

impl Analysis {
    pub fn load(dir: &Path) -> Result<Analysis, CliError> {
        let path = dir.join(ANALYSIS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::analysis(format!(
                "no analysis artifact ({e}); run `analyze` on {} first",
                dir.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::analysis(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("analysis serializes");
        text.push('\n');
        std::fs::write(dir.join(ANALYSIS_FILE), text)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Settings overridden on the `analyze` command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOverrides {
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
}

/// Recompute a run's analysis from its raw data and store it as
/// `analysis.json`.
pub fn analyze(dir: &Path, overrides: &AnalyzeOverrides) -> Result<Analysis, CliError> {
    let manifest = RunManifest::load(dir)?;
    let analysis = match manifest.study {
        Study::Ite => Analysis::Ite(analyze_ite(dir, &manifest, overrides)?),
        Study::Pfn => Analysis::Pfn(analyze_pfn(dir, &manifest)?),
    };
    analysis.save(dir)?;
    Ok(analysis)
}

fn analyze_ite(
    dir: &Path,
    manifest: &RunManifest,
    overrides: &AnalyzeOverrides,
) -> Result<IteAnalysis, CliError> {
    let (_, rows) = load_records::<IteRow>(dir, manifest)?;
    let dataset = IteDataset::from_rows(&rows)?;
    let section = &manifest.config.analysis;
    let settings = BootstrapSettings {
        resamples: overrides.resamples.unwrap_or(section.resamples),
        level: section.level,
        corrections: section.corrections,
        seed: overrides.seed.unwrap_or_else(|| manifest.config.bootstrap_seed()),
        max_dropped: section.max_dropped,
    };
    let report = run_two_way_bootstrap(&dataset.shift_statistic(), &settings)?;
    Ok(IteAnalysis {
        settings: BootstrapSettingsOut {
            resamples: settings.resamples,
            level: settings.level,
            corrections: settings.corrections,
            seed: settings.seed,
            max_dropped: settings.max_dropped,
        },
        used: report.used,
        dropped: report.dropped,
        components: report
            .outcomes
            .into_iter()
            .map(|o| ComponentOut {
                name: o.name,
                estimate: o.estimate,
                lo: o.lo,
                hi: o.hi,
                p: o.p,
            })
            .collect(),
    })
}

fn analyze_pfn(dir: &Path, manifest: &RunManifest) -> Result<PfnAnalysis, CliError> {
    let (_, rows) = load_records::<PfnRow>(dir, manifest)?;
    let countries = load_countries(manifest.config.inputs.countries.as_deref())?;
    let dataset = PfnDataset::from_rows(&rows, countries.len())?;
    let (persuasion, mobilization) = dataset.outcome_descriptives()?;
    let battery = run_battery(&dataset)?;

    let describe = |d: influence_core::stats::describe::Descriptives| DescriptivesOut {
        n: d.n,
        mean: d.mean,
        sd: d.sd,
        min: d.min,
        max: d.max,
    };
    Ok(PfnAnalysis {
        descriptives: OutcomeDescriptives {
            persuasion: describe(persuasion),
            mobilization: describe(mobilization),
        },
        rows: battery
            .rows
            .iter()
            .map(|row| BatteryRowOut {
                id: row.id.to_string(),
                hypothesis: row.hypothesis.map(str::to_string),
                outcome: outcome_name(row.outcome).into(),
                model: row.model.formula().into(),
                term: row.term.name().into(),
                estimate: row.coefficient.estimate,
                se: row.coefficient.se,
                t: row.coefficient.t,
                p: row.coefficient.p,
            })
            .collect(),
        fits: battery
            .fits
            .iter()
            .map(|fit| FitOut {
                model: fit.model.formula().into(),
                outcome: outcome_name(fit.outcome).into(),
                n: fit.result.n,
                clusters: fit.result.clusters,
                r_squared: fit.result.r_squared,
                coefficients: fit
                    .result
                    .coefficients
                    .iter()
                    .map(|c| CoefficientOut {
                        name: c.name.clone(),
                        estimate: c.estimate,
                        se: c.se,
                        t: c.t,
                        p: c.p,
                    })
                    .collect(),
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// The report kinds a run directory can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    #[value(name = "table4")]
    Table4,
    #[value(name = "table5")]
    Table5,
    #[value(name = "table6")]
    Table6,
    #[value(name = "table7")]
    Table7,
    #[value(name = "fig4_data")]
    Fig4Data,
    #[value(name = "fig5_data")]
    Fig5Data,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Table4 => "table4",
            ReportKind::Table5 => "table5",
            ReportKind::Table6 => "table6",
            ReportKind::Table7 => "table7",
            ReportKind::Fig4Data => "fig4_data",
            ReportKind::Fig5Data => "fig5_data",
        }
    }

    pub fn study(self) -> Study {
        match self {
            ReportKind::Table4
            | ReportKind::Table5
            | ReportKind::Fig4Data
            | ReportKind::Fig5Data => Study::Ite,
            ReportKind::Table6 | ReportKind::Table7 => Study::Pfn,
        }
    }

    /// All kinds a study's run can emit, in report order.
    pub fn all_for(study: Study) -> Vec<ReportKind> {
        match study {
            Study::Ite => vec![
                ReportKind::Table4,
                ReportKind::Table5,
                ReportKind::Fig4Data,
                ReportKind::Fig5Data,
            ],
            Study::Pfn => vec![ReportKind::Table6, ReportKind::Table7],
        }
    }
}

/// A rendered report: CSV always, text for the tables.
struct Rendered {
    csv: String,
    text: Option<String>,
}

/// Render the requested kinds (all of the study's kinds when empty) into
/// `<dir>/reports/`, returning the files written.
pub fn report(dir: &Path, kinds: &[ReportKind]) -> Result<Vec<PathBuf>, CliError> {
    let manifest = RunManifest::load(dir)?;
    let kinds: Vec<ReportKind> = if kinds.is_empty() {
        ReportKind::all_for(manifest.study)
    } else {
        kinds.to_vec()
    };
    for kind in &kinds {
        if kind.study() != manifest.study {
            return Err(CliError::config(format!(
                "report kind {} belongs to the \"{}\" study; this run is \"{}\"",
                kind.name(),
                kind.study().name(),
                manifest.study.name()
            )));
        }
    }

    let reports_dir = dir.join(REPORTS_DIR);
    std::fs::create_dir_all(&reports_dir)?;
    let mut written = Vec::new();
    for kind in kinds {
        let rendered = render(dir, &manifest, kind)?;
        let csv_path = reports_dir.join(format!("{}.csv", kind.name()));
        std::fs::write(&csv_path, rendered.csv)?;
        written.push(csv_path);
        if let Some(text) = rendered.text {
            let text_path = reports_dir.join(format!("{}.txt", kind.name()));
            std::fs::write(&text_path, text)?;
            written.push(text_path);
        }
    }
    Ok(written)
}

fn render(dir: &Path, manifest: &RunManifest, kind: ReportKind) -> Result<Rendered, CliError> {
    match kind {
        ReportKind::Table4 => {
            let analysis = load_ite_analysis(dir)?;
            Ok(render_shift_table(
                &analysis,
                "mixed",
                "Exposure shift after mixed-attribute exposure",
            ))
        }
        ReportKind::Table5 => {
            let analysis = load_ite_analysis(dir)?;
            Ok(render_shift_table(
                &analysis,
                "same",
                "Exposure shift after same-attribute exposure",
            ))
        }
        ReportKind::Table6 => {
            let analysis = load_pfn_analysis(dir)?;
            Ok(render_outcome_table(&analysis))
        }
        ReportKind::Table7 => {
            let analysis = load_pfn_analysis(dir)?;
            Ok(render_battery_table(&analysis))
        }
        ReportKind::Fig4Data => {
            let dataset = load_ite_dataset(dir, manifest)?;
            let level = manifest.config.analysis.level;
            Ok(render_fig4(&dataset, level))
        }
        ReportKind::Fig5Data => {
            let dataset = load_ite_dataset(dir, manifest)?;
            let level = manifest.config.analysis.level;
            Ok(render_fig5(&dataset, level))
        }
    }
}

fn load_ite_analysis(dir: &Path) -> Result<IteAnalysis, CliError> {
    match Analysis::load(dir)? {
        Analysis::Ite(a) => Ok(a),
        Analysis::Pfn(_) => Err(CliError::analysis(
            "analysis artifact is for the framing study",
        )),
    }
}

fn load_pfn_analysis(dir: &Path) -> Result<PfnAnalysis, CliError> {
    match Analysis::load(dir)? {
        Analysis::Pfn(a) => Ok(a),
        Analysis::Ite(_) => Err(CliError::analysis(
            "analysis artifact is for the rating study",
        )),
    }
}

fn load_ite_dataset(dir: &Path, manifest: &RunManifest) -> Result<IteDataset, CliError> {
    let (_, rows) = load_records::<IteRow>(dir, manifest)?;
    Ok(IteDataset::from_rows(&rows)?)
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Full-precision CSV number: shortest decimal form that round-trips.
fn num(value: f64) -> String {
    format!("{value}")
}

fn csv_row(fields: &[String]) -> String {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| {
            if f.contains(',') || f.contains('"') || f.contains('\n') {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect();
    let mut line = quoted.join(",");
    line.push('\n');
    line
}

const STARS_LEGEND: &str = "stars: * p<0.05  ** p<0.01  *** p<0.001";

/// One offset/tilt table (mixed or same exposure class).
fn render_shift_table(analysis: &IteAnalysis, class: &str, title: &str) -> Rendered {
    let prefix = format!("{class}/");
    let cells: Vec<&ComponentOut> = analysis
        .components
        .iter()
        .filter(|c| c.name.starts_with(&prefix))
        .collect();

    let mut csv = csv_row(&["attribute", "parameter", "estimate", "lo", "hi", "p"]
        .map(String::from));
    for cell in &cells {
        let mut parts = cell.name.split('/');
        let _class = parts.next().unwrap_or("");
        let attribute = parts.next().unwrap_or("");
        let parameter = parts.next().unwrap_or("");
        csv.push_str(&csv_row(&[
            attribute.to_string(),
            parameter.to_string(),
            num(cell.estimate),
            num(cell.lo),
            num(cell.hi),
            num(cell.p),
        ]));
    }

    let s = &analysis.settings;
    let mut text = String::new();
    let _ = writeln!(text, "{title}");
    let _ = writeln!(
        text,
        "{} bootstrap resamples; {:.0}% percentile intervals, Bonferroni x{}; \
         {} used, {} dropped",
        s.resamples,
        s.level * 100.0,
        s.corrections,
        analysis.used,
        analysis.dropped
    );
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "{:<12} {:>34}  {:>8}   {:>34}  {:>8}",
        "attribute", "offset [interval]", "p", "tilt [interval]", "p"
    );
    // Cells arrive as offset-then-tilt per attribute.
    for pair in cells.chunks(2) {
        let [offset, tilt] = pair else { continue };
        let attribute = offset.name.split('/').nth(1).unwrap_or("");
        let _ = writeln!(
            text,
            "{:<12} {:>34}  {:>8.4}   {:>34}  {:>8.4}",
            attribute,
            cell_text(offset),
            offset.p,
            cell_text(tilt),
            tilt.p
        );
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "{STARS_LEGEND}");
    Rendered { csv, text: Some(text) }
}

fn cell_text(cell: &ComponentOut) -> String {
    format!(
        "{:>6.2} [{:>6.2}, {:>6.2}] {:<3}",
        cell.estimate,
        cell.lo,
        cell.hi,
        stars(cell.p)
    )
}

/// Outcome descriptives table.
fn render_outcome_table(analysis: &PfnAnalysis) -> Rendered {
    let rows = [
        ("persuasion", &analysis.descriptives.persuasion),
        ("mobilization", &analysis.descriptives.mobilization),
    ];
    let mut csv = csv_row(&["outcome", "n", "mean", "sd", "min", "max"].map(String::from));
    for (name, d) in rows {
        csv.push_str(&csv_row(&[
            name.to_string(),
            d.n.to_string(),
            num(d.mean),
            num(d.sd),
            num(d.min),
            num(d.max),
        ]));
    }

    let mut text = String::new();
    let _ = writeln!(text, "Outcome scores");
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "{:<14} {:>6}  {:>12}  {:>5}  {:>5}",
        "outcome", "n", "mean (sd)", "min", "max"
    );
    for (name, d) in rows {
        let _ = writeln!(
            text,
            "{:<14} {:>6}  {:>12}  {:>5.2}  {:>5.2}",
            name,
            d.n,
            format!("{:.2} ({:.2})", d.mean, d.sd),
            d.min,
            d.max
        );
    }
    Rendered { csv, text: Some(text) }
}

/// The fourteen-row coefficient battery.
fn render_battery_table(analysis: &PfnAnalysis) -> Rendered {
    let mut csv = csv_row(
        &["id", "hypothesis", "outcome", "model", "term", "estimate", "se", "t", "p"]
            .map(String::from),
    );
    for row in &analysis.rows {
        csv.push_str(&csv_row(&[
            row.id.clone(),
            row.hypothesis.clone().unwrap_or_default(),
            row.outcome.clone(),
            row.model.clone(),
            row.term.clone(),
            num(row.estimate),
            num(row.se),
            num(row.t),
            num(row.p),
        ]));
    }

    let mut text = String::new();
    let _ = writeln!(text, "Framing and deprivation coefficients (country-clustered SEs)");
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "{:<5} {:<5} {:<13} {:<44} {:<6} {:>9} {:>8} {:>8} {:>8}",
        "row", "hyp", "outcome", "model", "term", "estimate", "se", "t", "p"
    );
    for row in &analysis.rows {
        let _ = writeln!(
            text,
            "{:<5} {:<5} {:<13} {:<44} {:<6} {:>9.3} {:>8.3} {:>8.2} {:>8.4} {}",
            row.id,
            row.hypothesis.as_deref().unwrap_or(""),
            row.outcome,
            row.model,
            row.term,
            row.estimate,
            row.se,
            row.t,
            row.p,
            stars(row.p)
        );
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "{STARS_LEGEND}");
    Rendered { csv, text: Some(text) }
}

/// Per-statement exposure-phase means with intervals.
fn render_fig4(dataset: &IteDataset, level: f64) -> Rendered {
    let mut csv =
        csv_row(&["statement", "attribute", "n", "mean", "lo", "hi"].map(String::from));
    for summary in dataset.exposure_summary(level) {
        csv.push_str(&csv_row(&[
            summary.statement.clone(),
            summary.attribute.name().to_string(),
            summary.n.to_string(),
            num(summary.mean),
            num(summary.lo),
            num(summary.hi),
        ]));
    }
    Rendered { csv, text: None }
}

/// Per-statement truth means, unexposed vs mixed-exposed.
fn render_fig5(dataset: &IteDataset, level: f64) -> Rendered {
    let mut csv = csv_row(
        &[
            "statement",
            "fresh_n",
            "fresh_mean",
            "fresh_lo",
            "fresh_hi",
            "exposed_n",
            "exposed_mean",
            "exposed_lo",
            "exposed_hi",
        ]
        .map(String::from),
    );
    for point in dataset.truth_shift_summary(level) {
        csv.push_str(&csv_row(&[
            point.statement.clone(),
            point.fresh.n.to_string(),
            num(point.fresh.mean),
            num(point.fresh.lo),
            num(point.fresh.hi),
            point.exposed.n.to_string(),
            num(point.exposed.mean),
            num(point.exposed.lo),
            num(point.exposed.hi),
        ]));
    }
    Rendered { csv, text: None }
}
