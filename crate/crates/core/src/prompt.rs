//! Prompt construction for both studies.
//!
//! Three prompt types exist: rating-study exposure prompts, rating-study test
//! prompts (which replay the participant's earlier ratings before the new
//! list), and framing-study probe prompts (persona, three agreement ratings,
//! a news article, and a single probe, ending at the answer slot).
//!
//! Prompts are rendered from editable text templates with `{{placeholder}}`
//! slots. Rendering is strict — an unknown placeholder is an error, never
//! silently dropped — and pure: identical inputs produce byte-identical
//! prompt text. Every built prompt carries the machine-readable list of
//! items the completion must echo, so the parser and the synthetic
//! participants never re-derive structure from prose.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::{Attribute, AttributeScale, Rating, Scale, StatementBank};
use crate::design::ParticipantDesign;
use crate::parse::RatingRecord;
use crate::sampler::{DemographicProfile, DeprivationTriple, Gender};

/// Which kind of prompt a completion answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Rating-study exposure phase: 32 first-sight ratings.
    Exposure,
    /// Rating-study test phase: 32 ratings after the recap of earlier ones.
    Test,
    /// Framing-study probe: one agreement rating.
    Probe,
}

/// One item the completion must rate, in prompt order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedItem {
    /// Statement or probe id.
    pub id: String,
    /// Exact text the completion must echo (statements only).
    pub text: String,
    pub scale: Scale,
}

/// One earlier rating replayed in a test prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecapItem {
    pub id: String,
    pub text: String,
    pub attribute: Attribute,
    pub rating: Rating,
}

/// Framing-study context a probe prompt was built from, carried alongside
/// the text so synthetic participants answer from structure, not prose.
#[derive(Debug, Clone, PartialEq)]
pub struct PfnPromptContext {
    pub country_index: usize,
    pub anti_elitist: bool,
    pub anti_immigrant: bool,
    /// Mean of the participant's three deprivation ratings.
    pub deprivation: f64,
    pub probe_kind: ProbeKind,
}

/// A rendered prompt plus everything needed to interpret its completion.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptText {
    pub participant: u32,
    pub phase: Phase,
    /// The full prompt as sent to the backend.
    pub text: String,
    /// Items the completion must cover, in prompt order.
    pub expected: Vec<ExpectedItem>,
    /// Earlier ratings replayed in a test prompt (empty otherwise).
    pub recap: Vec<RecapItem>,
    /// Framing-study context (probe prompts only).
    pub pfn: Option<PfnPromptContext>,
}

/// Errors building prompts or loading their inputs.
#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("failed to read template input: {0}")]
    Io(#[from] std::io::Error),
    #[error("template syntax error: {detail}")]
    TemplateSyntax { detail: String },
    #[error("unknown template placeholder `{name}`")]
    UnknownPlaceholder { name: String },
    #[error("design references statement `{id}` missing from the bank")]
    MissingStatement { id: String },
    #[error("earlier ratings do not match the exposure design: {detail}")]
    RecapMismatch { detail: String },
    #[error("prompt needs ~{estimated} tokens, over the {budget}-token budget")]
    BudgetExceeded { estimated: usize, budget: usize },
    #[error("bad article set: {detail}")]
    BadArticles { detail: String },
    #[error("bad survey items (line {line}): {detail}")]
    BadSurveyItems { line: usize, detail: String },
}

/// Substitute `{{name}}` placeholders. Unknown or unclosed placeholders are
/// errors; unused variables are not.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            return Err(PromptError::TemplateSyntax {
                detail: "unclosed `{{` placeholder".into(),
            });
        };
        let name = after[..end].trim();
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, value)) => out.push_str(value),
            None => {
                return Err(PromptError::UnknownPlaceholder {
                    name: name.to_string(),
                })
            }
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// The three prompt templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub exposure: String,
    pub test: String,
    pub probe: String,
}

impl TemplateSet {
    /// Templates shipped with the crate.
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            exposure: include_str!("../data/templates/ite_exposure.txt").to_string(),
            test: include_str!("../data/templates/ite_test.txt").to_string(),
            probe: include_str!("../data/templates/pfn_probe.txt").to_string(),
        }
    }

    /// Load `ite_exposure.txt`, `ite_test.txt`, and `pfn_probe.txt` from a
    /// directory.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        Ok(TemplateSet {
            exposure: std::fs::read_to_string(dir.join("ite_exposure.txt"))?,
            test: std::fs::read_to_string(dir.join("ite_test.txt"))?,
            probe: std::fs::read_to_string(dir.join("pfn_probe.txt"))?,
        })
    }
}

/// Estimates how many tokens a backend will count for a text.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// Character-count heuristic: `ceil(chars / chars_per_token)`.
#[derive(Debug, Clone, Copy)]
pub struct CharsPerToken(pub f64);

impl TokenEstimator for CharsPerToken {
    fn estimate(&self, text: &str) -> usize {
        (text.chars().count() as f64 / self.0).ceil() as usize
    }
}

/// Default prompt-plus-completion token budget.
pub const DEFAULT_TOKEN_BUDGET: usize = 4000;

fn default_estimator() -> Box<dyn TokenEstimator> {
    Box::new(CharsPerToken(4.0))
}

/// Render the four scale definitions, one line per attribute.
fn scales_text() -> String {
    let mut out = String::new();
    for attr in Attribute::ALL {
        let scale = AttributeScale::of(attr);
        let labels: Vec<String> = (1..=6u8)
            .map(|v| scale.label(Rating::new(v, Scale::Attribute(attr)).expect("1..=6 valid")))
            .collect();
        out.push_str(&format!("{}: {}\n", attr.name(), labels.join(" | ")));
    }
    out.trim_end().to_string()
}

/// Render `# <CODE> | <text>` item lines in presentation order.
fn items_text(items: &[ExpectedItem]) -> String {
    let mut out = String::new();
    for item in items {
        let code = match item.scale {
            Scale::Attribute(attr) => attr.code(),
            Scale::Agreement => unreachable!("agreement items never appear in rating lists"),
        };
        out.push_str(&format!("# {code} | {}\n", item.text));
    }
    out.trim_end().to_string()
}

/// The longest canonical completion the expected items could produce, used
/// for budget checks.
fn worst_case_completion(expected: &[ExpectedItem]) -> String {
    let mut out = String::new();
    for item in expected {
        match item.scale {
            Scale::Attribute(attr) => {
                let scale = AttributeScale::of(attr);
                let (value, phrase) = (1..=6u8)
                    .map(|v| (v, scale.phrases[usize::from(v - 1)]))
                    .max_by_key(|(_, p)| p.len())
                    .expect("six phrases");
                out.push_str(&format!(
                    "\"{}\" | {}{}: {}\n",
                    item.text,
                    attr.code(),
                    value,
                    phrase
                ));
            }
            Scale::Agreement => out.push_str("7\n"),
        }
    }
    out
}

/// Builds exposure and test prompts for one bank and template set.
pub struct ItePromptBuilder<'a> {
    templates: &'a TemplateSet,
    bank: &'a StatementBank,
    token_budget: usize,
    estimator: Box<dyn TokenEstimator>,
}

impl<'a> ItePromptBuilder<'a> {
    pub fn new(templates: &'a TemplateSet, bank: &'a StatementBank) -> Self {
        ItePromptBuilder {
            templates,
            bank,
            token_budget: DEFAULT_TOKEN_BUDGET,
            estimator: default_estimator(),
        }
    }

    pub fn with_token_budget(mut self, budget: usize) -> Self {
        self.token_budget = budget;
        self
    }

    pub fn with_estimator(mut self, estimator: Box<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    fn expected_items(
        &self,
        items: &[(String, Attribute)],
    ) -> Result<Vec<ExpectedItem>, PromptError> {
        items
            .iter()
            .map(|(id, attr)| {
                let statement =
                    self.bank
                        .by_id(id)
                        .ok_or_else(|| PromptError::MissingStatement {
                            id: id.clone(),
                        })?;
                Ok(ExpectedItem {
                    id: id.clone(),
                    text: statement.text.clone(),
                    scale: Scale::Attribute(*attr),
                })
            })
            .collect()
    }

    fn check_budget(&self, text: &str, expected: &[ExpectedItem]) -> Result<(), PromptError> {
        let estimated = self.estimator.estimate(text)
            + self.estimator.estimate(&worst_case_completion(expected));
        if estimated > self.token_budget {
            return Err(PromptError::BudgetExceeded {
                estimated,
                budget: self.token_budget,
            });
        }
        Ok(())
    }

    /// The exposure-phase prompt for one participant.
    pub fn exposure_prompt(&self, design: &ParticipantDesign) -> Result<PromptText, PromptError> {
        let expected = self.expected_items(&design.exposure_items)?;
        let text = render_template(
            &self.templates.exposure,
            &[
                ("scales", scales_text().as_str()),
                ("items", items_text(&expected).as_str()),
            ],
        )?;
        self.check_budget(&text, &expected)?;
        Ok(PromptText {
            participant: design.participant_id,
            phase: Phase::Exposure,
            text,
            expected,
            recap: Vec::new(),
            pfn: None,
        })
    }

    /// The test-phase prompt for one participant. `earlier` must contain the
    /// participant's exposure-phase ratings, exactly one per exposure item.
    pub fn test_prompt(
        &self,
        design: &ParticipantDesign,
        earlier: &[RatingRecord],
    ) -> Result<PromptText, PromptError> {
        // Index earlier ratings by (statement, attribute) and require an
        // exact one-to-one match with the exposure design.
        let mut by_key: std::collections::HashMap<(&str, Attribute), Rating> =
            std::collections::HashMap::new();
        for record in earlier {
            let Scale::Attribute(attr) = record.scale else {
                return Err(PromptError::RecapMismatch {
                    detail: format!("record for `{}` is not an attribute rating", record.item),
                });
            };
            if by_key.insert((record.item.as_str(), attr), record.rating).is_some() {
                return Err(PromptError::RecapMismatch {
                    detail: format!("duplicate earlier rating for statement `{}`", record.item),
                });
            }
        }
        if by_key.len() != design.exposure_items.len() {
            return Err(PromptError::RecapMismatch {
                detail: format!(
                    "{} earlier ratings for {} exposure items",
                    by_key.len(),
                    design.exposure_items.len()
                ),
            });
        }
        let mut recap = Vec::with_capacity(design.exposure_items.len());
        for (id, attr) in &design.exposure_items {
            let rating = by_key.get(&(id.as_str(), *attr)).copied().ok_or_else(|| {
                PromptError::RecapMismatch {
                    detail: format!("no earlier rating for statement `{id}` on {attr}"),
                }
            })?;
            let statement = self
                .bank
                .by_id(id)
                .ok_or_else(|| PromptError::MissingStatement { id: id.clone() })?;
            recap.push(RecapItem {
                id: id.clone(),
                text: statement.text.clone(),
                attribute: *attr,
                rating,
            });
        }
        let recap_text: String = recap
            .iter()
            .map(|r| {
                format!(
                    "Earlier you rated the {} of \"{}\" as {}.\n",
                    r.attribute.name(),
                    r.text,
                    AttributeScale::of(r.attribute).label(r.rating)
                )
            })
            .collect();
        let expected = self.expected_items(&design.test_items)?;
        let text = render_template(
            &self.templates.test,
            &[
                ("scales", scales_text().as_str()),
                ("recap", recap_text.trim_end()),
                ("items", items_text(&expected).as_str()),
            ],
        )?;
        self.check_budget(&text, &expected)?;
        Ok(PromptText {
            participant: design.participant_id,
            phase: Phase::Test,
            text,
            expected,
            recap,
            pfn: None,
        })
    }
}

/// Article framing variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleKind {
    None,
    AntiElitist,
    AntiImmigrant,
    Both,
}

impl ArticleKind {
    pub const ALL: [ArticleKind; 4] = [
        ArticleKind::None,
        ArticleKind::AntiElitist,
        ArticleKind::AntiImmigrant,
        ArticleKind::Both,
    ];

    /// Whether the variant carries the anti-elitist frame.
    pub fn anti_elitist(self) -> bool {
        matches!(self, ArticleKind::AntiElitist | ArticleKind::Both)
    }

    /// Whether the variant carries the anti-immigrant frame.
    pub fn anti_immigrant(self) -> bool {
        matches!(self, ArticleKind::AntiImmigrant | ArticleKind::Both)
    }

    fn file_name(self) -> &'static str {
        match self {
            ArticleKind::None => "none.txt",
            ArticleKind::AntiElitist => "anti_elitist.txt",
            ArticleKind::AntiImmigrant => "anti_immigrant.txt",
            ArticleKind::Both => "both.txt",
        }
    }
}

/// One article text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleVariant {
    pub kind: ArticleKind,
    pub text: String,
}

/// The four article variants of one story.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleSet {
    variants: [ArticleVariant; 4],
}

impl ArticleSet {
    /// Build and validate a set from the four texts in [`ArticleKind::ALL`]
    /// order.
    pub fn new(texts: [String; 4]) -> Result<ArticleSet, PromptError> {
        let mut iter = texts.into_iter();
        let variants = ArticleKind::ALL.map(|kind| ArticleVariant {
            kind,
            text: iter.next().expect("four texts"),
        });
        let set = ArticleSet { variants };
        set.validate()?;
        Ok(set)
    }

    /// Articles shipped with the crate.
    pub fn builtin() -> ArticleSet {
        ArticleSet::new([
            include_str!("../data/articles/none.txt").to_string(),
            include_str!("../data/articles/anti_elitist.txt").to_string(),
            include_str!("../data/articles/anti_immigrant.txt").to_string(),
            include_str!("../data/articles/both.txt").to_string(),
        ])
        .expect("embedded articles must validate")
    }

    /// Load `none.txt`, `anti_elitist.txt`, `anti_immigrant.txt`, and
    /// `both.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<ArticleSet, PromptError> {
        let mut texts = Vec::with_capacity(4);
        for kind in ArticleKind::ALL {
            texts.push(std::fs::read_to_string(dir.join(kind.file_name()))?);
        }
        ArticleSet::new(texts.try_into().expect("four texts"))
    }

    /// The unframed text must be a strict content subset of every framed
    /// variant: all of its lines appear in the variant, which adds at least
    /// one line of its own.
    fn validate(&self) -> Result<(), PromptError> {
        let lines = |text: &str| -> Vec<String> {
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        };
        let base = lines(&self.get(ArticleKind::None).text);
        if base.is_empty() {
            return Err(PromptError::BadArticles {
                detail: "unframed article is empty".into(),
            });
        }
        for kind in [ArticleKind::AntiElitist, ArticleKind::AntiImmigrant, ArticleKind::Both] {
            let framed = lines(&self.get(kind).text);
            for line in &base {
                if !framed.contains(line) {
                    return Err(PromptError::BadArticles {
                        detail: format!(
                            "{kind:?} variant drops an unframed line: {line}"
                        ),
                    });
                }
            }
            if framed.len() <= base.len() {
                return Err(PromptError::BadArticles {
                    detail: format!("{kind:?} variant adds no framing content"),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, kind: ArticleKind) -> &ArticleVariant {
        &self.variants[ArticleKind::ALL
            .iter()
            .position(|k| *k == kind)
            .expect("kind in ALL")]
    }
}

/// What a probe measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Persuasion,
    Mobilization,
}

/// One agreement probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub id: String,
    pub kind: ProbeKind,
    pub text: String,
}

/// The framing study's fixed survey items: three deprivation statements and
/// five probes (two persuasion, three mobilization).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyItems {
    deprivation: Vec<(String, String)>,
    probes: Vec<Probe>,
}

impl SurveyItems {
    /// Parse `kind | id | text` records; `#` lines and blanks are skipped.
    pub fn parse(src: &str) -> Result<SurveyItems, PromptError> {
        let mut deprivation = Vec::new();
        let mut probes = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for (idx, raw) in src.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            let [kind, id, text] = fields.as_slice() else {
                return Err(PromptError::BadSurveyItems {
                    line: line_no,
                    detail: "expected `kind | id | text`".into(),
                });
            };
            if text.is_empty() || text.contains('"') {
                return Err(PromptError::BadSurveyItems {
                    line: line_no,
                    detail: "item text must be non-empty and free of `\"`".into(),
                });
            }
            if !ids.insert(id.to_string()) {
                return Err(PromptError::BadSurveyItems {
                    line: line_no,
                    detail: format!("duplicate item id `{id}`"),
                });
            }
            match *kind {
                "deprivation" => deprivation.push((id.to_string(), text.to_string())),
                "persuasion" => probes.push(Probe {
                    id: id.to_string(),
                    kind: ProbeKind::Persuasion,
                    text: text.to_string(),
                }),
                "mobilization" => probes.push(Probe {
                    id: id.to_string(),
                    kind: ProbeKind::Mobilization,
                    text: text.to_string(),
                }),
                other => {
                    return Err(PromptError::BadSurveyItems {
                        line: line_no,
                        detail: format!("unknown item kind `{other}`"),
                    })
                }
            }
        }
        let n_persuasion = probes.iter().filter(|p| p.kind == ProbeKind::Persuasion).count();
        let n_mobilization = probes.len() - n_persuasion;
        if deprivation.len() != 3 || n_persuasion != 2 || n_mobilization != 3 {
            return Err(PromptError::BadSurveyItems {
                line: 0,
                detail: format!(
                    "need 3 deprivation / 2 persuasion / 3 mobilization items, got {}/{}/{}",
                    deprivation.len(),
                    n_persuasion,
                    n_mobilization
                ),
            });
        }
        Ok(SurveyItems { deprivation, probes })
    }

    /// Items shipped with the crate.
    pub fn builtin() -> SurveyItems {
        SurveyItems::parse(include_str!("../data/survey_items.txt"))
            .expect("embedded survey items must parse")
    }

    pub fn load(path: &Path) -> Result<SurveyItems, PromptError> {
        SurveyItems::parse(&std::fs::read_to_string(path)?)
    }

    /// The three deprivation statements as `(id, text)`.
    pub fn deprivation(&self) -> &[(String, String)] {
        &self.deprivation
    }

    /// All five probes in file order.
    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }
}

/// Builds framing-study probe prompts.
pub struct PfnPromptBuilder<'a> {
    templates: &'a TemplateSet,
    items: &'a SurveyItems,
    token_budget: usize,
    estimator: Box<dyn TokenEstimator>,
}

impl<'a> PfnPromptBuilder<'a> {
    pub fn new(templates: &'a TemplateSet, items: &'a SurveyItems) -> Self {
        PfnPromptBuilder {
            templates,
            items,
            token_budget: DEFAULT_TOKEN_BUDGET,
            estimator: default_estimator(),
        }
    }

    pub fn with_token_budget(mut self, budget: usize) -> Self {
        self.token_budget = budget;
        self
    }

    pub fn with_estimator(mut self, estimator: Box<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    /// One probe prompt: persona, deprivation recap, article, probe, answer
    /// slot. The prompt text ends at the answer slot.
    pub fn probe_prompt(
        &self,
        participant: u32,
        profile: &DemographicProfile,
        deprivation: &DeprivationTriple,
        article: &ArticleVariant,
        probe: &Probe,
    ) -> Result<PromptText, PromptError> {
        let noun = match profile.gender {
            Gender::Female => "woman",
            Gender::Male => "man",
        };
        let demographics = format!(
            "You are a {}-year-old {} living in {}.\n\
             Your education level is {} on a scale from 1 to 7.\n\
             Your interest in politics is {} on a scale from 1 (none) to 5 (very high).\n\
             On a left-right political scale from 0 to 10 you place yourself at {}.",
            profile.age,
            noun,
            profile.country,
            profile.education,
            profile.political_interest,
            profile.ideology
        );
        let deprivation_text: String = self
            .items
            .deprivation()
            .iter()
            .zip(deprivation.ratings)
            .map(|((_, text), rating)| format!("- \"{text}\": {rating}\n"))
            .collect();
        let text = render_template(
            &self.templates.probe,
            &[
                ("demographics", demographics.as_str()),
                ("deprivation", deprivation_text.trim_end()),
                ("article", article.text.trim_end()),
                ("probe", probe.text.as_str()),
            ],
        )?;
        let expected = vec![ExpectedItem {
            id: probe.id.clone(),
            text: probe.text.clone(),
            scale: Scale::Agreement,
        }];
        let estimated = self.estimator.estimate(&text)
            + self.estimator.estimate(&worst_case_completion(&expected));
        if estimated > self.token_budget {
            return Err(PromptError::BudgetExceeded {
                estimated,
                budget: self.token_budget,
            });
        }
        Ok(PromptText {
            participant,
            phase: Phase::Probe,
            text,
            expected,
            recap: Vec::new(),
            pfn: Some(PfnPromptContext {
                country_index: profile.country_index,
                anti_elitist: article.kind.anti_elitist(),
                anti_immigrant: article.kind.anti_immigrant(),
                deprivation: deprivation.score,
                probe_kind: probe.kind,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_block;
    use crate::parse::parse_ite_completion;
    use crate::sampler::{DemographicProfile, DeprivationTriple, Gender};

    fn builder_fixtures() -> (&'static TemplateSet, &'static StatementBank) {
        static TPL: std::sync::OnceLock<TemplateSet> = std::sync::OnceLock::new();
        (
            TPL.get_or_init(TemplateSet::builtin),
            StatementBank::builtin(),
        )
    }

    #[test]
    fn render_substitutes_and_rejects_unknowns() {
        assert_eq!(
            render_template("a {{x}} b", &[("x", "1")]).unwrap(),
            "a 1 b"
        );
        assert!(matches!(
            render_template("a {{y}} b", &[("x", "1")]),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
        assert!(matches!(
            render_template("a {{x b", &[("x", "1")]),
            Err(PromptError::TemplateSyntax { .. })
        ));
    }

    #[test]
    fn exposure_prompt_lists_32_items_in_order() {
        let (templates, bank) = builder_fixtures();
        let block = build_block(bank, 0, 11).unwrap();
        let builder = ItePromptBuilder::new(templates, bank);
        let prompt = builder.exposure_prompt(&block.designs[0]).unwrap();
        assert_eq!(prompt.phase, Phase::Exposure);
        assert_eq!(prompt.expected.len(), 32);
        let body = prompt
            .text
            .split("<< statement list >>")
            .nth(1)
            .unwrap()
            .split("<< end list >>")
            .next()
            .unwrap();
        let lines: Vec<&str> = body.trim().lines().collect();
        assert_eq!(lines.len(), 32);
        for (line, item) in lines.iter().zip(&prompt.expected) {
            let code = item.scale.attribute().unwrap().code();
            assert_eq!(*line, format!("# {code} | {}", item.text));
        }
    }

    #[test]
    fn item_line_matches_canonical_example() {
        let (templates, bank) = builder_fixtures();
        // s011 is "Most frogs are green" in the builtin bank.
        let mut block = build_block(bank, 0, 3).unwrap();
        let design = &mut block.designs[0];
        design.exposure_items[0] = ("s011".to_string(), Attribute::Interest);
        let prompt = ItePromptBuilder::new(templates, bank)
            .exposure_prompt(design)
            .unwrap();
        assert!(prompt.text.contains("# I | Most frogs are green"));
    }

    #[test]
    fn recap_line_matches_canonical_example() {
        let (templates, bank) = builder_fixtures();
        let mut block = build_block(bank, 0, 3).unwrap();
        let design = &mut block.designs[0];
        design.exposure_items[0] = ("s011".to_string(), Attribute::Interest);
        let builder = ItePromptBuilder::new(templates, bank);
        let exposure = builder.exposure_prompt(design).unwrap();
        // Answer every exposure item with rating 2 and parse it back.
        let completion: String = exposure
            .expected
            .iter()
            .map(|item| {
                let attr = item.scale.attribute().unwrap();
                let scale = AttributeScale::of(attr);
                format!(
                    "\"{}\" | {}\n",
                    item.text,
                    scale.label(Rating::new(2, item.scale).unwrap())
                )
            })
            .collect();
        let records = parse_ite_completion(&completion, &exposure).unwrap();
        let test = builder.test_prompt(design, &records).unwrap();
        assert!(test.text.contains(
            "Earlier you rated the interest of \"Most frogs are green\" as I2: quite uninteresting."
        ));
        assert_eq!(test.recap.len(), 32);
        assert_eq!(test.expected.len(), 32);
    }

    #[test]
    fn test_prompt_requires_exact_recap() {
        let (templates, bank) = builder_fixtures();
        let block = build_block(bank, 0, 5).unwrap();
        let design = &block.designs[0];
        let builder = ItePromptBuilder::new(templates, bank);
        let exposure = builder.exposure_prompt(design).unwrap();
        let completion: String = exposure
            .expected
            .iter()
            .map(|item| {
                let attr = item.scale.attribute().unwrap();
                format!(
                    "\"{}\" | {}\n",
                    item.text,
                    AttributeScale::of(attr).label(Rating::new(3, item.scale).unwrap())
                )
            })
            .collect();
        let mut records = parse_ite_completion(&completion, &exposure).unwrap();
        records.pop();
        assert!(matches!(
            builder.test_prompt(design, &records),
            Err(PromptError::RecapMismatch { .. })
        ));
    }

    #[test]
    fn over_budget_prompt_fails_loudly() {
        let (templates, bank) = builder_fixtures();
        let block = build_block(bank, 0, 7).unwrap();
        let builder = ItePromptBuilder::new(templates, bank).with_token_budget(100);
        assert!(matches!(
            builder.exposure_prompt(&block.designs[0]),
            Err(PromptError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn prompts_are_deterministic() {
        let (templates, bank) = builder_fixtures();
        let block = build_block(bank, 0, 13).unwrap();
        let builder = ItePromptBuilder::new(templates, bank);
        let a = builder.exposure_prompt(&block.designs[7]).unwrap();
        let b = builder.exposure_prompt(&block.designs[7]).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a, b);
    }

    #[test]
    fn builtin_articles_validate_and_subset_fails() {
        let set = ArticleSet::builtin();
        assert!(set.get(ArticleKind::Both).text.len() > set.get(ArticleKind::None).text.len());
        // Dropping a base line from a framed variant must fail validation.
        let mut texts = [
            set.get(ArticleKind::None).text.clone(),
            set.get(ArticleKind::AntiElitist).text.clone(),
            set.get(ArticleKind::AntiImmigrant).text.clone(),
            set.get(ArticleKind::Both).text.clone(),
        ];
        texts[1] = texts[1].lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ArticleSet::new(texts),
            Err(PromptError::BadArticles { .. })
        ));
    }

    #[test]
    fn survey_items_validate_counts() {
        let items = SurveyItems::builtin();
        assert_eq!(items.deprivation().len(), 3);
        assert_eq!(items.probes().len(), 5);
        assert!(matches!(
            SurveyItems::parse("deprivation | d1 | only one\n"),
            Err(PromptError::BadSurveyItems { .. })
        ));
    }

    fn demo_profile() -> DemographicProfile {
        DemographicProfile {
            country_index: 0,
            country: "Austria".into(),
            gender: Gender::Female,
            age: 46,
            education: 4,
            political_interest: 3,
            ideology: 6,
        }
    }

    #[test]
    fn probe_prompt_ends_at_answer_slot_and_varies_only_in_probe() {
        let templates = TemplateSet::builtin();
        let items = SurveyItems::builtin();
        let articles = ArticleSet::builtin();
        let builder = PfnPromptBuilder::new(&templates, &items);
        let triple = DeprivationTriple {
            ratings: [5, 5, 4],
            score: 14.0 / 3.0,
        };
        let profile = demo_profile();
        let prompts: Vec<PromptText> = items
            .probes()
            .iter()
            .map(|probe| {
                builder
                    .probe_prompt(9, &profile, &triple, articles.get(ArticleKind::Both), probe)
                    .unwrap()
            })
            .collect();
        for p in &prompts {
            assert!(p.text.trim_end().ends_with("Your rating:"));
            assert_eq!(p.expected.len(), 1);
            assert_eq!(p.expected[0].scale, Scale::Agreement);
        }
        // All five prompts share the text before the probe statement.
        let prefix = |t: &str| t.split("Statement:").next().unwrap().to_string();
        let first = prefix(&prompts[0].text);
        for p in &prompts[1..] {
            assert_eq!(prefix(&p.text), first);
        }
        assert!(prompts[0].text.contains("You are a 46-year-old woman living in Austria."));
        assert!(prompts[0].text.contains("- \"I never received what I in fact deserved\": 5"));
        let ctx = prompts[0].pfn.as_ref().unwrap();
        assert!(ctx.anti_elitist && ctx.anti_immigrant);
        assert!((ctx.deprivation - 14.0 / 3.0).abs() < 1e-12);
    }
}
