//! The framing-regression battery.
//!
//! Five model shapes are each fitted to the two outcomes (persuasion and
//! mobilization) with country-clustered robust standard errors — ten fits.
//! Fourteen report rows pull one named coefficient each from those fits:
//! twelve hypothesis rows on the framing terms, plus the two deprivation
//! main-effect rows.

use nalgebra::{DMatrix, DVector};

use crate::stats::dataset::{PfnDataset, PfnObservation};
use crate::stats::ols::{ols_cluster_robust, Coefficient, RegressionResult};
use crate::stats::StatsError;

/// A regressor term over the framing flags E, I and the deprivation score D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    E,
    I,
    ExI,
    D,
    DxE,
    DxI,
    DxExI,
}

impl Term {
    /// Column name, also the report's regressor label.
    pub fn name(self) -> &'static str {
        match self {
            Term::E => "E",
            Term::I => "I",
            Term::ExI => "ExI",
            Term::D => "D",
            Term::DxE => "DxE",
            Term::DxI => "DxI",
            Term::DxExI => "DxExI",
        }
    }

    fn value(self, o: &PfnObservation) -> f64 {
        let e = o.elitist as u8 as f64;
        let i = o.immigrant as u8 as f64;
        let d = o.deprivation;
        match self {
            Term::E => e,
            Term::I => i,
            Term::ExI => e * i,
            Term::D => d,
            Term::DxE => d * e,
            Term::DxI => d * i,
            Term::DxExI => d * e * i,
        }
    }
}

/// Outcome variable of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Persuasion,
    Mobilization,
}

impl Outcome {
    pub fn short(self) -> &'static str {
        match self {
            Outcome::Persuasion => "P",
            Outcome::Mobilization => "M",
        }
    }

    fn value(self, o: &PfnObservation) -> f64 {
        match self {
            Outcome::Persuasion => o.persuasion,
            Outcome::Mobilization => o.mobilization,
        }
    }
}

/// The five model shapes. Every model also carries the country indicators
/// and an intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// C + (E + I)
    FramingMain,
    /// C + (E + I + ExI)
    FramingInteraction,
    /// C + (E + I) + D
    Deprivation,
    /// C + (E + I) + D + (DxE + DxI)
    DeprivationTwoWay,
    /// C + (E + I + ExI) + D + (DxE + DxI + DxExI)
    DeprivationThreeWay,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::FramingMain,
        ModelKind::FramingInteraction,
        ModelKind::Deprivation,
        ModelKind::DeprivationTwoWay,
        ModelKind::DeprivationThreeWay,
    ];

    /// The non-country regressors, in column order.
    pub fn terms(self) -> &'static [Term] {
        match self {
            ModelKind::FramingMain => &[Term::E, Term::I],
            ModelKind::FramingInteraction => &[Term::E, Term::I, Term::ExI],
            ModelKind::Deprivation => &[Term::E, Term::I, Term::D],
            ModelKind::DeprivationTwoWay => {
                &[Term::E, Term::I, Term::D, Term::DxE, Term::DxI]
            }
            ModelKind::DeprivationThreeWay => &[
                Term::E,
                Term::I,
                Term::ExI,
                Term::D,
                Term::DxE,
                Term::DxI,
                Term::DxExI,
            ],
        }
    }

    /// Human-readable model formula (country block abbreviated as `C`).
    pub fn formula(self) -> &'static str {
        match self {
            ModelKind::FramingMain => "C + (E + I)",
            ModelKind::FramingInteraction => "C + (E + I + ExI)",
            ModelKind::Deprivation => "C + (E + I) + D",
            ModelKind::DeprivationTwoWay => "C + (E + I) + D + (DxE + DxI)",
            ModelKind::DeprivationThreeWay => {
                "C + (E + I + ExI) + D + (DxE + DxI + DxExI)"
            }
        }
    }
}

/// One of the ten fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub model: ModelKind,
    pub outcome: Outcome,
    pub result: RegressionResult,
}

/// One report row: a named coefficient pulled from one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryRow {
    /// Stable row key, e.g. `h1a` or `d_p`.
    pub id: &'static str,
    /// Hypothesis label where one exists; the deprivation main-effect rows
    /// have none.
    pub hypothesis: Option<&'static str>,
    pub outcome: Outcome,
    pub term: Term,
    pub model: ModelKind,
    pub coefficient: Coefficient,
}

/// The full battery: ten fits plus the fourteen rows in report order.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    pub fits: Vec<ModelFit>,
    pub rows: Vec<BatteryRow>,
}

/// Report rows in table order: (key, hypothesis, outcome, term, model).
const ROWS: [(
    &str,
    Option<&str>,
    Outcome,
    Term,
    ModelKind,
); 14] = [
    ("h1a", Some("H1a"), Outcome::Persuasion, Term::E, ModelKind::FramingMain),
    ("h1b", Some("H1b"), Outcome::Persuasion, Term::I, ModelKind::FramingMain),
    ("h1c", Some("H1c"), Outcome::Persuasion, Term::ExI, ModelKind::FramingInteraction),
    ("h2a", Some("H2a"), Outcome::Mobilization, Term::E, ModelKind::FramingMain),
    ("h2b", Some("H2b"), Outcome::Mobilization, Term::I, ModelKind::FramingMain),
    ("h2c", Some("H2c"), Outcome::Mobilization, Term::ExI, ModelKind::FramingInteraction),
    ("d_p", None, Outcome::Persuasion, Term::D, ModelKind::Deprivation),
    ("d_m", None, Outcome::Mobilization, Term::D, ModelKind::Deprivation),
    ("h3a", Some("H3a"), Outcome::Persuasion, Term::DxE, ModelKind::DeprivationTwoWay),
    ("h3b", Some("H3b"), Outcome::Persuasion, Term::DxI, ModelKind::DeprivationTwoWay),
    ("h3c", Some("H3c"), Outcome::Persuasion, Term::DxExI, ModelKind::DeprivationThreeWay),
    ("h4a", Some("H4a"), Outcome::Mobilization, Term::DxE, ModelKind::DeprivationTwoWay),
    ("h4b", Some("H4b"), Outcome::Mobilization, Term::DxI, ModelKind::DeprivationTwoWay),
    ("h4c", Some("H4c"), Outcome::Mobilization, Term::DxExI, ModelKind::DeprivationThreeWay),
];

/// Fit one model/outcome combination. Countries are coded as indicator
/// columns for all but the table's last country, which the intercept
/// absorbs; every non-reference country must therefore appear in the data
/// or the design is rank deficient.
pub fn fit_model(
    data: &PfnDataset,
    model: ModelKind,
    outcome: Outcome,
) -> Result<ModelFit, StatsError> {
    let n = data.observations.len();
    let terms = model.terms();
    let n_indicators = data.n_countries - 1;
    let k = 1 + n_indicators + terms.len();

    let mut names: Vec<String> = Vec::with_capacity(k);
    names.push("const".into());
    for j in 0..n_indicators {
        names.push(format!("country_{j}"));
    }
    names.extend(terms.iter().map(|t| t.name().to_string()));
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();

    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut clusters = Vec::with_capacity(n);
    for (row, obs) in data.observations.iter().enumerate() {
        x[(row, 0)] = 1.0;
        if obs.country < n_indicators {
            x[(row, 1 + obs.country)] = 1.0;
        }
        for (j, term) in terms.iter().enumerate() {
            x[(row, 1 + n_indicators + j)] = term.value(obs);
        }
        y[row] = outcome.value(obs);
        clusters.push(obs.country);
    }

    let result = ols_cluster_robust(&name_refs, &x, &y, &clusters)?;
    Ok(ModelFit {
        model,
        outcome,
        result,
    })
}

/// Run all ten fits and extract the fourteen report rows.
pub fn run_battery(data: &PfnDataset) -> Result<Battery, StatsError> {
    let mut fits = Vec::with_capacity(10);
    for model in ModelKind::ALL {
        for outcome in [Outcome::Persuasion, Outcome::Mobilization] {
            fits.push(fit_model(data, model, outcome)?);
        }
    }
    let rows = ROWS
        .iter()
        .map(|&(id, hypothesis, outcome, term, model)| {
            let fit = fits
                .iter()
                .find(|f| f.model == model && f.outcome == outcome)
                .expect("all model/outcome combinations were fitted");
            let coefficient = fit
                .result
                .coefficient(term.name())
                .expect("every row term is a column of its model")
                .clone();
            BatteryRow {
                id,
                hypothesis,
                outcome,
                term,
                model,
                coefficient,
            }
        })
        .collect();
    Ok(Battery { fits, rows })
}
