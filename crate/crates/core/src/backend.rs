//! Completion backends: the trait the runner drives, a shared query budget,
//! and the two built-in synthetic participant populations.
//!
//! The synthetic backends answer prompts from the structured item list the
//! prompt carries (never by re-parsing prose), emit canonical completion
//! lines, and draw their randomness from a seed derived from the backend
//! seed and the prompt text. That makes them deterministic for a fixed seed
//! at any temperature; temperature scales the rating noise, so temperature 0
//! removes it entirely.
//!
//! Both populations have known ground truth, so a run through the full
//! pipeline (design, prompts, completions, parsing, statistics) must recover
//! the configured effects — they are the end-to-end oracles for everything
//! downstream.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::bank::{Attribute, AttributeScale, Rating, Scale, StatementBank, SCALE_MIDPOINT};
use crate::prompt::{Phase, ProbeKind, PromptText};
use crate::seed::{self, tag};

/// Sampling parameters forwarded with every completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            model: "default".into(),
            temperature: 1.0,
            max_tokens: 2048,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model.is_empty() {
            return Err(BackendError::InvalidParams {
                detail: "model name is empty".into(),
            });
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidParams {
                detail: format!("temperature {} outside 0..=2", self.temperature),
            });
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidParams {
                detail: "max_tokens must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Backend failures.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("missing API credentials: {detail}")]
    AuthMissing { detail: String },
    #[error("rate limited (gave up after {attempts} attempts)")]
    RateLimited { attempts: u32 },
    #[error("transport failure: {detail}")]
    Transport { detail: String },
    #[error("backend error: {detail}")]
    Api { detail: String },
    #[error("query budget of {limit} completions exhausted")]
    BudgetExceeded { limit: u64 },
    #[error("invalid completion parameters: {detail}")]
    InvalidParams { detail: String },
    #[error("prompt does not fit this backend: {detail}")]
    WrongStudy { detail: String },
}

/// Anything that turns a prompt into completion text.
pub trait CompletionBackend: Send + Sync {
    /// Short stable name recorded in run manifests.
    fn name(&self) -> &'static str;

    fn complete(
        &self,
        prompt: &PromptText,
        params: &CompletionParams,
    ) -> Result<String, BackendError>;
}

/// A hard cap on total completion calls, shared across worker threads.
#[derive(Debug)]
pub struct QueryBudget {
    limit: u64,
    used: AtomicU64,
}

impl QueryBudget {
    pub fn new(limit: u64) -> QueryBudget {
        QueryBudget {
            limit,
            used: AtomicU64::new(0),
        }
    }

    /// Reserve one call, failing once the budget is spent.
    pub fn try_charge(&self) -> Result<(), BackendError> {
        let mut current = self.used.load(Ordering::Relaxed);
        loop {
            if current >= self.limit {
                return Err(BackendError::BudgetExceeded { limit: self.limit });
            }
            match self.used.compare_exchange_weak(
                current,
                current + 1,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => return Ok(()),
                Err(actual) => current = actual,
            }
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Relaxed)
    }
}

/// Which (exposure attribute, test attribute) pairs the exposure effect
/// applies to, indexed `[exposure][test]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectPairs(pub [[bool; 4]; 4]);

impl EffectPairs {
    /// No pair carries an effect.
    pub fn none() -> EffectPairs {
        EffectPairs([[false; 4]; 4])
    }

    /// The classic pattern: exposure under a *different* attribute shifts a
    /// later truth rating; nothing else moves.
    pub fn mixed_truth() -> EffectPairs {
        let mut pairs = [[false; 4]; 4];
        for e in Attribute::ALL {
            if e != Attribute::Truth {
                pairs[e.index()][Attribute::Truth.index()] = true;
            }
        }
        EffectPairs(pairs)
    }

    pub fn applies(&self, exposure: Attribute, test: Attribute) -> bool {
        self.0[exposure.index()][test.index()]
    }
}

/// Ground truth for the synthetic rating-study population.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIteConfig {
    /// Dispositional mean rating per (statement id, attribute).
    pub base_mean: HashMap<(String, Attribute), f64>,
    /// Rating noise standard deviation at temperature 1.
    pub noise_sd: f64,
    /// Additive shift applied to effect-carrying pairs.
    pub offset: f64,
    /// Slope on (base mean - scale midpoint) for effect-carrying pairs.
    pub tilt: f64,
    pub effect_pairs: EffectPairs,
}

/// Default rating noise for the synthetic rating-study population. Large
/// enough to dither the 1..=6 rounding, small enough that ratings rarely
/// clip at the scale ends and the sampling noise of per-statement means
/// stays well below their spread (noisy means attenuate the tilt fit).
pub const DEFAULT_ITE_NOISE_SD: f64 = 0.5;

impl SyntheticIteConfig {
    /// A population with the given planted effect on mixed-truth pairs.
    /// Base means are drawn once, uniformly in 2.0..5.0 per (statement,
    /// attribute), from `seed`; the wide spread is what identifies the tilt.
    pub fn planted(bank: &StatementBank, seed: u64, offset: f64, tilt: f64) -> SyntheticIteConfig {
        let mut rng = seed::rng(seed, &[tag::BASELINE]);
        let mut base_mean = HashMap::new();
        for statement in bank.iter() {
            for attr in Attribute::ALL {
                base_mean.insert(
                    (statement.id.clone(), attr),
                    rng.random_range(2.0..5.0),
                );
            }
        }
        SyntheticIteConfig {
            base_mean,
            noise_sd: DEFAULT_ITE_NOISE_SD,
            offset,
            tilt,
            effect_pairs: EffectPairs::mixed_truth(),
        }
    }

    /// A population with no exposure effect at all.
    pub fn null(bank: &StatementBank, seed: u64) -> SyntheticIteConfig {
        SyntheticIteConfig {
            effect_pairs: EffectPairs::none(),
            ..SyntheticIteConfig::planted(bank, seed, 0.0, 0.0)
        }
    }
}

/// One synthetic rating: the dispositional mean, shifted by the planted
/// effect when `exposure` and `test_attr` form an effect-carrying pair, plus
/// Gaussian noise scaled by `noise_scale`, rounded and clipped to 1..=6.
pub fn synth_ite_rate(
    cfg: &SyntheticIteConfig,
    statement_id: &str,
    test_attr: Attribute,
    exposure: Option<Attribute>,
    noise_scale: f64,
    rng: &mut impl Rng,
) -> Result<Rating, BackendError> {
    let base = *cfg
        .base_mean
        .get(&(statement_id.to_string(), test_attr))
        .ok_or_else(|| BackendError::WrongStudy {
            detail: format!("no base mean configured for statement `{statement_id}`"),
        })?;
    let mut mean = base;
    if let Some(exposure) = exposure {
        if cfg.effect_pairs.applies(exposure, test_attr) {
            mean += cfg.offset + cfg.tilt * (base - SCALE_MIDPOINT);
        }
    }
    let sd = cfg.noise_sd * noise_scale;
    let noisy = if sd > 0.0 {
        mean + Normal::new(0.0, sd).expect("sd >= 0").sample(rng)
    } else {
        mean
    };
    let value = noisy.round().clamp(1.0, 6.0) as u8;
    Ok(Rating::new(value, Scale::Attribute(test_attr)).expect("clipped into range"))
}

/// Synthetic population for the rating study.
pub struct SyntheticIteBackend {
    cfg: SyntheticIteConfig,
    seed: u64,
}

impl SyntheticIteBackend {
    pub fn new(cfg: SyntheticIteConfig, seed: u64) -> SyntheticIteBackend {
        SyntheticIteBackend { cfg, seed }
    }

    pub fn config(&self) -> &SyntheticIteConfig {
        &self.cfg
    }
}

impl CompletionBackend for SyntheticIteBackend {
    fn name(&self) -> &'static str {
        "synthetic-ite"
    }

    fn complete(
        &self,
        prompt: &PromptText,
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        if prompt.phase == Phase::Probe {
            return Err(BackendError::WrongStudy {
                detail: "rating-study backend received a probe prompt".into(),
            });
        }
        // Test prompts carry the recap of what this participant was exposed
        // to; anything not in it is rated fresh.
        let exposure_of: HashMap<&str, Attribute> = prompt
            .recap
            .iter()
            .map(|r| (r.id.as_str(), r.attribute))
            .collect();
        let mut rng = seed::rng(
            self.seed,
            &[tag::COMPLETION, seed::fnv1a(prompt.text.as_bytes())],
        );
        let mut out = String::new();
        for item in &prompt.expected {
            let attr = item.scale.attribute().ok_or_else(|| BackendError::WrongStudy {
                detail: "agreement item in a rating-study prompt".into(),
            })?;
            let exposure = exposure_of.get(item.id.as_str()).copied();
            let rating = synth_ite_rate(
                &self.cfg,
                &item.id,
                attr,
                exposure,
                params.temperature,
                &mut rng,
            )?;
            out.push_str(&format!(
                "\"{}\" | {}\n",
                item.text,
                AttributeScale::of(attr).label(rating)
            ));
        }
        Ok(out)
    }
}

/// Linear model behind one synthetic framing-study outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfnCoefficients {
    pub intercept: f64,
    /// Main effect of the anti-elitist frame.
    pub anti_elitist: f64,
    /// Main effect of the anti-immigrant frame.
    pub anti_immigrant: f64,
    /// Frame interaction (both frames together).
    pub interaction: f64,
    /// Slope on the deprivation score.
    pub deprivation: f64,
    pub deprivation_elitist: f64,
    pub deprivation_immigrant: f64,
    pub deprivation_interaction: f64,
    /// Additive country effects; the last entry is the reference level and
    /// should be zero.
    pub country: Vec<f64>,
}

impl PfnCoefficients {
    /// The linear predictor for one participant and probe.
    pub fn predict(
        &self,
        country_index: usize,
        anti_elitist: bool,
        anti_immigrant: bool,
        deprivation: f64,
    ) -> f64 {
        let e = f64::from(anti_elitist);
        let i = f64::from(anti_immigrant);
        let d = deprivation;
        self.intercept
            + self.country.get(country_index).copied().unwrap_or(0.0)
            + self.anti_elitist * e
            + self.anti_immigrant * i
            + self.interaction * e * i
            + self.deprivation * d
            + self.deprivation_elitist * d * e
            + self.deprivation_immigrant * d * i
            + self.deprivation_interaction * d * e * i
    }

    /// Build coefficients from *marginal* frame targets.
    ///
    /// When the two frames are assigned independently with probability 1/2
    /// each and a model omits the frame-interaction term, least squares
    /// attributes half of the interaction to each main effect. Generating
    /// with mains reduced by `interaction / 2` therefore makes the
    /// interaction-free fits land on the requested marginal values, while
    /// the model that includes the product recovers `interaction` itself.
    pub fn from_marginal_targets(
        intercept: f64,
        e_marginal: f64,
        i_marginal: f64,
        interaction: f64,
        deprivation: f64,
        country: Vec<f64>,
    ) -> PfnCoefficients {
        PfnCoefficients {
            intercept,
            anti_elitist: e_marginal - interaction / 2.0,
            anti_immigrant: i_marginal - interaction / 2.0,
            interaction,
            deprivation,
            deprivation_elitist: 0.0,
            deprivation_immigrant: 0.0,
            deprivation_interaction: 0.0,
            country,
        }
    }

    /// The frame main effects a model *without* the interaction term
    /// recovers in population (see [`PfnCoefficients::from_marginal_targets`]).
    pub fn marginal_main_effects(&self) -> (f64, f64) {
        (
            self.anti_elitist + self.interaction / 2.0,
            self.anti_immigrant + self.interaction / 2.0,
        )
    }
}

/// Ground truth for the synthetic framing-study population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPfnConfig {
    pub persuasion: PfnCoefficients,
    pub mobilization: PfnCoefficients,
    /// Per-probe rating noise standard deviation at temperature 1.
    pub noise_sd: f64,
}

/// Default per-probe noise for the synthetic framing-study population. Kept
/// small enough that ratings rarely clip at the scale ends, which would
/// otherwise attenuate the recovered coefficients.
pub const DEFAULT_PFN_NOISE_SD: f64 = 0.6;

fn default_country_effects(n_countries: usize) -> Vec<f64> {
    // Small, deterministic spread with the last (reference) country at zero.
    let mut effects: Vec<f64> = (0..n_countries)
        .map(|j| 0.04 * ((j % 5) as f64 - 2.0))
        .collect();
    if let Some(last) = effects.last_mut() {
        *last = 0.0;
    }
    effects
}

impl SyntheticPfnConfig {
    /// The default planted population: strong frame effects, a modest
    /// deprivation slope, and no deprivation-frame moderation.
    pub fn planted_defaults(n_countries: usize) -> SyntheticPfnConfig {
        SyntheticPfnConfig {
            persuasion: PfnCoefficients::from_marginal_targets(
                5.0,
                0.478,
                -0.927,
                0.541,
                0.149,
                default_country_effects(n_countries),
            ),
            mobilization: PfnCoefficients::from_marginal_targets(
                5.6,
                0.463,
                -1.090,
                0.324,
                0.125,
                default_country_effects(n_countries),
            ),
            noise_sd: DEFAULT_PFN_NOISE_SD,
        }
    }

    /// A population in which nothing moves either outcome.
    pub fn null(n_countries: usize) -> SyntheticPfnConfig {
        let flat = |intercept: f64| PfnCoefficients {
            intercept,
            anti_elitist: 0.0,
            anti_immigrant: 0.0,
            interaction: 0.0,
            deprivation: 0.0,
            deprivation_elitist: 0.0,
            deprivation_immigrant: 0.0,
            deprivation_interaction: 0.0,
            country: vec![0.0; n_countries],
        };
        SyntheticPfnConfig {
            persuasion: flat(4.0),
            mobilization: flat(4.0),
            noise_sd: DEFAULT_PFN_NOISE_SD,
        }
    }
}

/// One synthetic agreement rating: linear predictor plus Gaussian noise
/// scaled by `noise_scale`, rounded and clipped to 1..=7.
pub fn synth_pfn_rate(
    cfg: &SyntheticPfnConfig,
    country_index: usize,
    anti_elitist: bool,
    anti_immigrant: bool,
    deprivation: f64,
    probe_kind: ProbeKind,
    noise_scale: f64,
    rng: &mut impl Rng,
) -> Rating {
    let coef = match probe_kind {
        ProbeKind::Persuasion => &cfg.persuasion,
        ProbeKind::Mobilization => &cfg.mobilization,
    };
    let mean = coef.predict(country_index, anti_elitist, anti_immigrant, deprivation);
    let sd = cfg.noise_sd * noise_scale;
    let noisy = if sd > 0.0 {
        mean + Normal::new(0.0, sd).expect("sd >= 0").sample(rng)
    } else {
        mean
    };
    let value = noisy.round().clamp(1.0, 7.0) as u8;
    Rating::new(value, Scale::Agreement).expect("clipped into range")
}

/// Synthetic population for the framing study.
pub struct SyntheticPfnBackend {
    cfg: SyntheticPfnConfig,
    seed: u64,
}

impl SyntheticPfnBackend {
    pub fn new(cfg: SyntheticPfnConfig, seed: u64) -> SyntheticPfnBackend {
        SyntheticPfnBackend { cfg, seed }
    }

    pub fn config(&self) -> &SyntheticPfnConfig {
        &self.cfg
    }
}

impl CompletionBackend for SyntheticPfnBackend {
    fn name(&self) -> &'static str {
        "synthetic-pfn"
    }

    fn complete(
        &self,
        prompt: &PromptText,
        params: &CompletionParams,
    ) -> Result<String, BackendError> {
        params.validate()?;
        let Some(ctx) = prompt.pfn.as_ref() else {
            return Err(BackendError::WrongStudy {
                detail: "framing-study backend received a rating-study prompt".into(),
            });
        };
        if ctx.country_index >= self.cfg.persuasion.country.len() {
            return Err(BackendError::InvalidParams {
                detail: format!(
                    "country index {} outside the configured {} countries",
                    ctx.country_index,
                    self.cfg.persuasion.country.len()
                ),
            });
        }
        let mut rng = seed::rng(
            self.seed,
            &[tag::COMPLETION, seed::fnv1a(prompt.text.as_bytes())],
        );
        let rating = synth_pfn_rate(
            &self.cfg,
            ctx.country_index,
            ctx.anti_elitist,
            ctx.anti_immigrant,
            ctx.deprivation,
            ctx.probe_kind,
            params.temperature,
            &mut rng,
        );
        Ok(format!("{}\n", rating.value()))
    }
}
