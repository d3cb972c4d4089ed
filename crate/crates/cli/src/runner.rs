//! Batch run orchestration.
//!
//! Both studies share one shape: a list of participants, a per-participant
//! pipeline (render prompts → complete → parse), and an append-only JSONL
//! data file. Participant pipelines run concurrently up to the configured
//! in-flight bound, but the writer is the single serialization point and
//! appends strictly in participant order — so the data file's bytes do not
//! depend on scheduling.
//!
//! Completions the parser rejects are re-rolled (the participant's whole
//! pipeline restarts) up to `run.reroll_cap` times; every rejection is
//! counted in the manifest. The built-in synthetic backends never produce a
//! rejectable completion, so a cap overrun there means a real defect.
//!
//! An interrupted run is resumed with `--resume`: the data file is scanned,
//! any torn trailing participant is truncated away, and the run restarts at
//! the first missing participant. Because every per-participant random
//! stream is keyed by participant id, a resumed synthetic run is
//! byte-identical to an uninterrupted one.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use influence_core::backend::{
    CompletionBackend, CompletionParams, QueryBudget, SyntheticIteBackend, SyntheticIteConfig,
    SyntheticPfnBackend, SyntheticPfnConfig,
};
use influence_core::bank::StatementBank;
use influence_core::design::{build_block, ParticipantDesign};
use influence_core::parse::{parse_ite_completion, parse_pfn_completion};
use influence_core::prompt::{
    ArticleKind, ArticleSet, ItePromptBuilder, PfnPromptBuilder, ProbeKind, PromptText,
    SurveyItems, TemplateSet,
};
use influence_core::sampler::{sample_deprivation, sample_profile, CountryTable};
use influence_core::seed::{self, tag};
use influence_core::stats::dataset::{ite_rows, PfnRow};
use rand::Rng;

use crate::config::{BackendKind, PfnEffects, RunConfig, Study};
use crate::error::CliError;
use crate::http::HttpBackend;
use crate::manifest::{now_unix, DataHeader, RunManifest, DATA_FILE};

/// Rating-study rows per participant: 32 exposure + 32 test.
const ITE_ROWS_PER_PARTICIPANT: usize = 64;

// ---------------------------------------------------------------------------
// Input material
// ---------------------------------------------------------------------------

pub fn load_bank(path: Option<&Path>) -> Result<StatementBank, CliError> {
    Ok(match path {
        Some(path) => StatementBank::load(path)?,
        None => StatementBank::builtin().clone(),
    })
}

pub fn load_templates(path: Option<&Path>) -> Result<TemplateSet, CliError> {
    Ok(match path {
        Some(path) => TemplateSet::from_dir(path)?,
        None => TemplateSet::builtin(),
    })
}

pub fn load_articles(path: Option<&Path>) -> Result<ArticleSet, CliError> {
    Ok(match path {
        Some(path) => ArticleSet::from_dir(path)?,
        None => ArticleSet::builtin(),
    })
}

pub fn load_survey(path: Option<&Path>) -> Result<SurveyItems, CliError> {
    Ok(match path {
        Some(path) => SurveyItems::load(path)?,
        None => SurveyItems::builtin(),
    })
}

pub fn load_countries(path: Option<&Path>) -> Result<CountryTable, CliError> {
    Ok(match path {
        Some(path) => CountryTable::load(path)?,
        None => CountryTable::builtin(),
    })
}

fn completion_params(config: &RunConfig) -> CompletionParams {
    CompletionParams {
        model: config.backend.model.clone(),
        temperature: config.backend.temperature,
        max_tokens: config.backend.max_tokens,
    }
}

fn ite_backend(
    config: &RunConfig,
    bank: &StatementBank,
) -> Result<Box<dyn CompletionBackend>, CliError> {
    match config.backend.kind {
        BackendKind::Http => Ok(Box::new(HttpBackend::from_config(&config.backend)?)),
        BackendKind::Synthetic => {
            let mut synth = SyntheticIteConfig::planted(
                bank,
                config.population_seed(),
                config.synthetic.offset,
                config.synthetic.tilt,
            );
            if let Some(sd) = config.synthetic.ite_noise_sd {
                synth.noise_sd = sd;
            }
            Ok(Box::new(SyntheticIteBackend::new(synth, config.run.seed)))
        }
    }
}

fn pfn_backend(
    config: &RunConfig,
    n_countries: usize,
) -> Result<Box<dyn CompletionBackend>, CliError> {
    match config.backend.kind {
        BackendKind::Http => Ok(Box::new(HttpBackend::from_config(&config.backend)?)),
        BackendKind::Synthetic => {
            let mut synth = match config.synthetic.pfn_effects {
                PfnEffects::Planted => SyntheticPfnConfig::planted_defaults(n_countries),
                PfnEffects::Null => SyntheticPfnConfig::null(n_countries),
            };
            if let Some(sd) = config.synthetic.pfn_noise_sd {
                synth.noise_sd = sd;
            }
            Ok(Box::new(SyntheticPfnBackend::new(synth, config.run.seed)))
        }
    }
}

// ---------------------------------------------------------------------------
// Shared run machinery
// ---------------------------------------------------------------------------

/// Why one pipeline pass over a participant did not produce rows.
enum PassFailure {
    /// The parser rejected a completion; the participant is re-rolled.
    Rejected(String),
    /// Unrecoverable (backend, budget, prompt construction).
    Failed(CliError),
}

impl From<CliError> for PassFailure {
    fn from(err: CliError) -> PassFailure {
        PassFailure::Failed(err)
    }
}

/// Shared counters and the completion entry point every pipeline uses.
struct Caller<'a> {
    backend: &'a dyn CompletionBackend,
    params: CompletionParams,
    budget: Option<QueryBudget>,
    queries: AtomicU64,
    rejections: AtomicU64,
}

impl<'a> Caller<'a> {
    fn new(backend: &'a dyn CompletionBackend, config: &RunConfig) -> Caller<'a> {
        Caller {
            backend,
            params: completion_params(config),
            budget: (config.backend.max_queries > 0)
                .then(|| QueryBudget::new(config.backend.max_queries)),
            queries: AtomicU64::new(0),
            rejections: AtomicU64::new(0),
        }
    }

    fn complete(&self, prompt: &PromptText) -> Result<String, CliError> {
        if let Some(budget) = &self.budget {
            budget.try_charge()?;
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.backend.complete(prompt, &self.params)?)
    }

    /// Run `pass` until it yields rows, re-rolling rejected completions up
    /// to the cap.
    fn with_rerolls<T>(
        &self,
        participant: u32,
        cap: u32,
        pass: impl Fn() -> Result<T, PassFailure>,
    ) -> Result<T, CliError> {
        let mut rejected = 0u32;
        loop {
            match pass() {
                Ok(rows) => return Ok(rows),
                Err(PassFailure::Failed(err)) => return Err(err),
                Err(PassFailure::Rejected(detail)) => {
                    self.rejections.fetch_add(1, Ordering::Relaxed);
                    rejected += 1;
                    if rejected > cap {
                        return Err(CliError::backend(format!(
                            "participant {participant}: completion rejected {rejected} times \
                             (cap {cap}); last rejection: {detail}"
                        )));
                    }
                }
            }
        }
    }
}

fn json_line<T: serde::Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("record serializes");
    line.push('\n');
    line
}

/// What a resume scan found in an existing data file.
#[derive(Debug)]
struct ResumePoint {
    /// Participants already fully persisted (a prefix of the run).
    complete: usize,
    /// File length after cutting any torn tail.
    truncate_to: u64,
}

/// Scan an existing data file against the expected header and group size.
///
/// Returns the number of fully-persisted leading participants and the byte
/// offset the file must be truncated to. A partial trailing line, a torn
/// participant group, or any undecodable tail is cut; a *mismatched* header
/// is an error — the directory belongs to a different run.
fn scan_existing(
    bytes: &[u8],
    expected_header: &str,
    rows_per_participant: usize,
) -> Result<ResumePoint, CliError> {
    let mut offset = 0usize;
    let mut lines = bytes.split_inclusive(|&b| b == b'\n');
    let Some(first) = lines.next().filter(|line| line.ends_with(b"\n")) else {
        // Empty file or torn header: start over.
        return Ok(ResumePoint { complete: 0, truncate_to: 0 });
    };
    if first != expected_header.as_bytes() {
        return Err(CliError::config(
            "existing data file belongs to a different run (header mismatch); \
             use a fresh output directory",
        ));
    }
    offset += first.len();

    let mut complete = 0usize;
    let mut truncate_to = offset as u64;
    let mut rows_in_group = 0usize;
    for line in lines {
        if !line.ends_with(b"\n") {
            break; // torn trailing line
        }
        let Ok(value) = serde_json::from_slice::<serde_json::Value>(line) else {
            break; // undecodable tail
        };
        let Some(pid) = value.get("participant").and_then(|p| p.as_u64()) else {
            break;
        };
        if pid != complete as u64 {
            break; // out-of-sequence tail
        }
        offset += line.len();
        rows_in_group += 1;
        if rows_in_group == rows_per_participant {
            complete += 1;
            rows_in_group = 0;
            truncate_to = offset as u64;
        }
    }
    Ok(ResumePoint { complete, truncate_to: truncate_to.min(bytes.len() as u64) })
}

/// Open the data file for a run, honoring `--resume`.
fn open_data_file(
    dir: &Path,
    header: &str,
    rows_per_participant: usize,
    resume: bool,
) -> Result<(BufWriter<File>, usize), CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(DATA_FILE);
    if path.exists() {
        if !resume {
            return Err(CliError::config(format!(
                "{} already contains a data file; pass --resume to continue it",
                dir.display()
            )));
        }
        let bytes = std::fs::read(&path)?;
        let point = scan_existing(&bytes, header, rows_per_participant)?;
        let mut file = OpenOptions::new().read(true).write(true).open(&path)?;
        file.set_len(point.truncate_to)?;
        file.seek(SeekFrom::End(0))?;
        let mut writer = BufWriter::new(file);
        if point.truncate_to == 0 {
            writer.write_all(header.as_bytes())?;
            writer.flush()?;
        }
        Ok((writer, point.complete))
    } else {
        let mut writer = BufWriter::new(File::create(&path)?);
        writer.write_all(header.as_bytes())?;
        writer.flush()?;
        Ok((writer, 0))
    }
}

/// Run participants `start..total` through `work` on a bounded worker pool,
/// appending each participant's lines in participant order.
fn run_pipeline<F>(
    writer: &mut BufWriter<File>,
    start: usize,
    total: usize,
    threads: usize,
    work: F,
) -> Result<(), CliError>
where
    F: Fn(usize) -> Result<Vec<String>, CliError> + Sync,
{
    if start >= total {
        return Ok(());
    }
    struct State {
        done: BTreeMap<usize, Vec<String>>,
        error: Option<CliError>,
        live_workers: usize,
    }
    let threads = threads.clamp(1, 64).min(total - start);
    let next = AtomicUsize::new(start);
    let stop = AtomicBool::new(false);
    let state = Mutex::new(State { done: BTreeMap::new(), error: None, live_workers: threads });
    let ready = Condvar::new();
    let mut write_error: Option<CliError> = None;

    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| {
                loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= total {
                        break;
                    }
                    match work(index) {
                        Ok(lines) => {
                            let mut st = state.lock().expect("pipeline lock");
                            st.done.insert(index, lines);
                            ready.notify_all();
                        }
                        Err(err) => {
                            stop.store(true, Ordering::Relaxed);
                            let mut st = state.lock().expect("pipeline lock");
                            st.error.get_or_insert(err);
                            ready.notify_all();
                            break;
                        }
                    }
                }
                let mut st = state.lock().expect("pipeline lock");
                st.live_workers -= 1;
                ready.notify_all();
            });
        }

        // This thread is the single writer; it drains completed participants
        // strictly in order.
        let mut expect = start;
        let mut st = state.lock().expect("pipeline lock");
        while expect < total {
            if let Some(lines) = st.done.remove(&expect) {
                drop(st);
                let flushed = lines
                    .iter()
                    .try_for_each(|line| writer.write_all(line.as_bytes()))
                    .and_then(|()| writer.flush());
                if let Err(err) = flushed {
                    write_error = Some(err.into());
                    stop.store(true, Ordering::Relaxed);
                    break;
                }
                expect += 1;
                st = state.lock().expect("pipeline lock");
                continue;
            }
            if st.error.is_some() || st.live_workers == 0 {
                break;
            }
            st = ready.wait(st).expect("pipeline lock");
        }
    });

    if let Some(err) = write_error {
        return Err(err);
    }
    let mut st = state.into_inner().expect("pipeline lock");
    if let Some(err) = st.error.take() {
        return Err(err);
    }
    Ok(())
}

/// Carry-over totals when resuming a run.
fn carried_totals(dir: &Path, resume: bool) -> (u64, u64, Option<u64>) {
    if !resume {
        return (0, 0, None);
    }
    match RunManifest::load(dir) {
        Ok(m) => (m.rejections, m.queries, Some(m.started_unix)),
        Err(_) => (0, 0, None),
    }
}

// ---------------------------------------------------------------------------
// Rating study
// ---------------------------------------------------------------------------

/// Execute a rating-study run into `dir` and return its manifest.
pub fn run_ite(config: &RunConfig, dir: &Path, resume: bool) -> Result<RunManifest, CliError> {
    let bank = load_bank(config.inputs.bank.as_deref())?;
    let templates = load_templates(config.inputs.templates.as_deref())?;
    let builder = ItePromptBuilder::new(&templates, &bank);
    let backend = ite_backend(config, &bank)?;

    let mut designs: Vec<ParticipantDesign> = Vec::new();
    for block_id in 0..config.run.blocks {
        designs.extend(build_block(&bank, block_id, config.run.seed)?.designs);
    }
    let total = designs.len();

    let header = DataHeader::new(config, Study::Ite, backend.name()).to_line();
    let (mut writer, start) = open_data_file(dir, &header, ITE_ROWS_PER_PARTICIPANT, resume)?;
    let (carried_rejections, carried_queries, carried_start) = carried_totals(dir, resume);

    let caller = Caller::new(backend.as_ref(), config);
    let started = carried_start.unwrap_or_else(now_unix);
    let mut manifest = RunManifest {
        run_id: config.run_id(Study::Ite),
        study: Study::Ite,
        backend: backend.name().into(),
        model: config.backend.model.clone(),
        seed: config.run.seed,
        blocks: config.run.blocks,
        participants: total as u32,
        config_sha256: config.sha256(),
        config: config.clone(),
        data_file: DATA_FILE.into(),
        started_unix: started,
        finished_unix: None,
        rejections: carried_rejections,
        queries: carried_queries,
        records: (start * ITE_ROWS_PER_PARTICIPANT) as u64,
        };
    manifest.save(dir)?;

    let work = |index: usize| -> Result<Vec<String>, CliError> {
        let design = &designs[index];
        let rows = caller.with_rerolls(design.participant_id, config.run.reroll_cap, || {
            ite_pass(&caller, &builder, design)
        })?;
        Ok(rows.iter().map(json_line).collect())
    };
    run_pipeline(&mut writer, start, total, config.backend.concurrency, work)?;

    manifest.rejections = carried_rejections + caller.rejections.load(Ordering::Relaxed);
    manifest.queries = carried_queries + caller.queries.load(Ordering::Relaxed);
    manifest.records = (total * ITE_ROWS_PER_PARTICIPANT) as u64;
    manifest.finished_unix = Some(now_unix());
    manifest.save(dir)?;
    Ok(manifest)
}

/// One full pass over one rating-study participant: exposure prompt, test
/// prompt (with the recap of the exposure answers), both parsed and checked
/// against the design.
fn ite_pass(
    caller: &Caller,
    builder: &ItePromptBuilder,
    design: &ParticipantDesign,
) -> Result<Vec<influence_core::stats::dataset::IteRow>, PassFailure> {
    let reject = |errors: Vec<influence_core::parse::ParseError>| {
        PassFailure::Rejected(
            errors.first().map(|e| e.to_string()).unwrap_or_else(|| "no ratings".into()),
        )
    };
    let exposure = builder.exposure_prompt(design).map_err(CliError::from)?;
    let text = caller.complete(&exposure)?;
    let earlier = parse_ite_completion(&text, &exposure).map_err(reject)?;
    let test = builder.test_prompt(design, &earlier).map_err(CliError::from)?;
    let text = caller.complete(&test)?;
    let later = parse_ite_completion(&text, &test).map_err(reject)?;
    let records: Vec<_> = earlier.into_iter().chain(later).collect();
    Ok(ite_rows(design, &records).map_err(CliError::from)?)
}

// ---------------------------------------------------------------------------
// Framing study
// ---------------------------------------------------------------------------

/// Execute a framing-study run into `dir` and return its manifest.
pub fn run_pfn(config: &RunConfig, dir: &Path, resume: bool) -> Result<RunManifest, CliError> {
    let templates = load_templates(config.inputs.templates.as_deref())?;
    let articles = load_articles(config.inputs.articles.as_deref())?;
    let survey = load_survey(config.inputs.survey.as_deref())?;
    let countries = load_countries(config.inputs.countries.as_deref())?;
    let builder = PfnPromptBuilder::new(&templates, &survey);
    let backend = pfn_backend(config, countries.len())?;

    let total = config.run.participants as usize;
    let header = DataHeader::new(config, Study::Pfn, backend.name()).to_line();
    let (mut writer, start) = open_data_file(dir, &header, 1, resume)?;
    let (carried_rejections, carried_queries, carried_start) = carried_totals(dir, resume);

    let caller = Caller::new(backend.as_ref(), config);
    let started = carried_start.unwrap_or_else(now_unix);
    let mut manifest = RunManifest {
        run_id: config.run_id(Study::Pfn),
        study: Study::Pfn,
        backend: backend.name().into(),
        model: config.backend.model.clone(),
        seed: config.run.seed,
        blocks: 0,
        participants: config.run.participants,
        config_sha256: config.sha256(),
        config: config.clone(),
        data_file: DATA_FILE.into(),
        started_unix: started,
        finished_unix: None,
        rejections: carried_rejections,
        queries: carried_queries,
        records: start as u64,
    };
    manifest.save(dir)?;

    let work = |index: usize| -> Result<Vec<String>, CliError> {
        let pid = index as u32;
        let row = caller.with_rerolls(pid, config.run.reroll_cap, || {
            pfn_pass(config, &caller, &builder, &countries, &articles, &survey, pid)
        })?;
        Ok(vec![json_line(&row)])
    };
    run_pipeline(&mut writer, start, total, config.backend.concurrency, work)?;

    manifest.rejections = carried_rejections + caller.rejections.load(Ordering::Relaxed);
    manifest.queries = carried_queries + caller.queries.load(Ordering::Relaxed);
    manifest.records = total as u64;
    manifest.finished_unix = Some(now_unix());
    manifest.save(dir)?;
    Ok(manifest)
}

/// One full pass over one framing-study participant: persona and article
/// sampled from the participant's own seed streams, then all survey probes
/// in order, holding everything but the final probe constant.
fn pfn_pass(
    config: &RunConfig,
    caller: &Caller,
    builder: &PfnPromptBuilder,
    countries: &CountryTable,
    articles: &ArticleSet,
    survey: &SurveyItems,
    pid: u32,
) -> Result<PfnRow, PassFailure> {
    let root = config.run.seed;
    let profile = sample_profile(countries, &mut seed::rng(root, &[tag::PROFILE, pid.into()]));
    let deprivation = sample_deprivation(
        config.population.deprivation_mean,
        config.population.deprivation_sd,
        config.population.perturb_sd,
        &mut seed::rng(root, &[tag::DEPRIVATION, pid.into()]),
    );
    let pick = seed::rng(root, &[tag::ARTICLE, pid.into()])
        .random_range(0..ArticleKind::ALL.len());
    let article = articles.get(ArticleKind::ALL[pick]);

    let mut persuasion = Vec::new();
    let mut mobilization = Vec::new();
    let mut raw = Vec::new();
    for probe in survey.probes() {
        let prompt = builder
            .probe_prompt(pid, &profile, &deprivation, article, probe)
            .map_err(CliError::from)?;
        let text = caller.complete(&prompt)?;
        let record = parse_pfn_completion(&text, &prompt)
            .map_err(|e| PassFailure::Rejected(e.to_string()))?;
        match probe.kind {
            ProbeKind::Persuasion => persuasion.push(record.rating.value()),
            ProbeKind::Mobilization => mobilization.push(record.rating.value()),
        }
        raw.push(record.raw_line);
    }
    Ok(PfnRow {
        participant: pid,
        profile,
        deprivation,
        article: article.kind,
        persuasion,
        mobilization,
        raw,
    })
}

// ---------------------------------------------------------------------------
// Data loading (for analyze/report)
// ---------------------------------------------------------------------------

/// Read a run's data file back: header plus one decoded record per line.
pub fn load_records<T: serde::de::DeserializeOwned>(
    dir: &Path,
    manifest: &RunManifest,
) -> Result<(DataHeader, Vec<T>), CliError> {
    let path = dir.join(&manifest.data_file);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::analysis(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: DataHeader = match lines.next() {
        Some(line) => serde_json::from_str(line)
            .map_err(|e| CliError::analysis(format!("bad data header: {e}")))?,
        None => return Err(CliError::analysis("data file is empty")),
    };
    if header.config_sha256 != manifest.config_sha256 {
        return Err(CliError::analysis(
            "data file and manifest disagree about the run config",
        ));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let record: T = serde_json::from_str(line).map_err(|e| {
            CliError::analysis(format!("data line {}: {e}", idx + 2))
        })?;
        records.push(record);
    }
    Ok((header, records))
}
