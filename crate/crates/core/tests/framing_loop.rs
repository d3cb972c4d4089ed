//! End-to-end framing-study loop on the synthetic population: sampled
//! personas → probe prompts → completions → parser → rows → dataset →
//! country-clustered regression battery, entirely offline.

use influence_core::backend::{
    CompletionBackend, CompletionParams, SyntheticPfnBackend, SyntheticPfnConfig,
};
use rand::Rng;
use influence_core::parse::parse_pfn_completion;
use influence_core::prompt::{
    ArticleKind, ArticleSet, PfnPromptBuilder, ProbeKind, SurveyItems, TemplateSet,
};
use influence_core::sampler::{sample_deprivation, sample_profile, CountryTable};
use influence_core::seed::{self, tag};
use influence_core::stats::battery::run_battery;
use influence_core::stats::dataset::{PfnDataset, PfnRow};

const ROOT_SEED: u64 = 20_260_815;
const PARTICIPANTS: u32 = 600;

/// Sample personas and drive each through its five probe prompts.
fn collect_participants(backend: &SyntheticPfnBackend, n: u32) -> Vec<PfnRow> {
    let table = CountryTable::builtin();
    let templates = TemplateSet::builtin();
    let items = SurveyItems::builtin();
    let articles = ArticleSet::builtin();
    let builder = PfnPromptBuilder::new(&templates, &items);
    let params = CompletionParams::default();

    let mut rows = Vec::new();
    for pid in 0..n {
        let profile = sample_profile(&table, &mut seed::rng(ROOT_SEED, &[tag::PROFILE, pid.into()]));
        let deprivation = sample_deprivation(
            4.30,
            1.61,
            0.8,
            &mut seed::rng(ROOT_SEED, &[tag::DEPRIVATION, pid.into()]),
        );
        let pick = seed::rng(ROOT_SEED, &[tag::ARTICLE, pid.into()])
            .random_range(0..ArticleKind::ALL.len());
        let article = articles.get(ArticleKind::ALL[pick]);

        let mut persuasion = Vec::new();
        let mut mobilization = Vec::new();
        let mut raw = Vec::new();
        for probe in items.probes() {
            let prompt = builder
                .probe_prompt(pid, &profile, &deprivation, article, probe)
                .expect("probe prompt renders");
            let completion = backend.complete(&prompt, &params).expect("synthetic backend");
            let record =
                parse_pfn_completion(&completion, &prompt).expect("synthetic completions parse");
            match probe.kind {
                ProbeKind::Persuasion => persuasion.push(record.rating.value()),
                ProbeKind::Mobilization => mobilization.push(record.rating.value()),
            }
            raw.push(record.raw_line);
        }
        rows.push(PfnRow {
            participant: pid,
            profile,
            deprivation,
            article: article.kind,
            persuasion,
            mobilization,
            raw,
        });
    }
    rows
}

#[test]
fn synthetic_loop_recovers_the_planted_framing_effects() {
    let n_countries = CountryTable::builtin().len();
    let cfg = SyntheticPfnConfig::planted_defaults(n_countries);
    let backend = SyntheticPfnBackend::new(cfg.clone(), ROOT_SEED);

    let rows = collect_participants(&backend, PARTICIPANTS);
    assert_eq!(rows.len(), PARTICIPANTS as usize);
    assert!(rows
        .iter()
        .all(|r| r.persuasion.len() == 2 && r.mobilization.len() == 3 && r.raw.len() == 5));

    // The loop is deterministic end to end.
    assert_eq!(rows, collect_participants(&backend, PARTICIPANTS));

    let data = PfnDataset::from_rows(&rows, n_countries).unwrap();
    let battery = run_battery(&data).unwrap();
    assert_eq!(battery.fits.len(), 10);
    assert_eq!(battery.rows.len(), 14);

    // Marginal frame targets and the deprivation slopes, as a model omitting
    // the interaction (or including the deprivation term) should see them.
    let (e_p, i_p) = cfg.persuasion.marginal_main_effects();
    let (e_m, i_m) = cfg.mobilization.marginal_main_effects();
    let planted = [
        ("h1a", e_p),
        ("h1b", i_p),
        ("h1c", cfg.persuasion.interaction),
        ("h2a", e_m),
        ("h2b", i_m),
        ("h2c", cfg.mobilization.interaction),
        ("d_p", cfg.persuasion.deprivation),
        ("d_m", cfg.mobilization.deprivation),
    ];
    for (id, target) in planted {
        let row = battery.rows.iter().find(|r| r.id == id).unwrap();
        let c = &row.coefficient;
        assert!(
            (c.estimate - target).abs() < 2.5 * c.se,
            "{id}: estimated {:.3} (se {:.3}), planted {target:.3}",
            c.estimate,
            c.se
        );
    }

    // Outcome descriptives land where the population puts them.
    let (p, m) = data.outcome_descriptives().unwrap();
    assert!((p.mean - 5.28).abs() < 0.15, "persuasion mean {:.3}", p.mean);
    assert!((m.mean - 5.74).abs() < 0.15, "mobilization mean {:.3}", m.mean);
    assert!(p.sd > 0.4 && p.sd < 1.2, "persuasion sd {:.3}", p.sd);
    assert!(m.sd > 0.4 && m.sd < 1.2, "mobilization sd {:.3}", m.sd);
}

#[test]
fn null_population_shows_no_framing_effects() {
    let n_countries = CountryTable::builtin().len();
    let backend = SyntheticPfnBackend::new(SyntheticPfnConfig::null(n_countries), ROOT_SEED + 1);
    let rows = collect_participants(&backend, 400);
    let data = PfnDataset::from_rows(&rows, n_countries).unwrap();
    let battery = run_battery(&data).unwrap();
    let flagged: Vec<_> = battery
        .rows
        .iter()
        .filter(|r| r.coefficient.p < 0.05)
        .map(|r| r.id)
        .collect();
    // 14 tests at alpha = 0.05: an occasional single flag is expected noise,
    // a systematic effect is not.
    assert!(flagged.len() <= 1, "null data flagged {flagged:?}");
}
