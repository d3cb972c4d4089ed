//! Synthetic framing-study participants: demographics and relative
//! deprivation.
//!
//! Demographic profiles are drawn from a per-country table (country choice
//! weighted by sample size, then gender, age, education, political interest,
//! and left-right ideology from per-country marginals, rounded and clamped to
//! their ordinal scales). Relative deprivation is a triple of 7-point
//! agreement ratings built from one participant-level draw plus small
//! per-item perturbations; the perturbation width is calibrated so that a
//! target fraction of participants (by default about half) give three
//! identical ratings.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::seed::{self, tag};

/// Per-country sampling marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub name: String,
    /// Relative share of participants from this country.
    pub weight: f64,
    pub female_share: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Education on a 1-7 ordinal scale.
    pub education_mean: f64,
    pub education_sd: f64,
    /// Political interest on a 1-5 ordinal scale.
    pub interest_mean: f64,
    pub interest_sd: f64,
    /// Left-right ideology on a 0-10 ordinal scale.
    pub ideology_mean: f64,
    pub ideology_sd: f64,
}

/// The full country table.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryTable {
    rows: Vec<CountryRow>,
}

/// Errors loading tables or calibrating the deprivation perturbation.
#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("failed to read country table: {0}")]
    Io(#[from] std::io::Error),
    #[error("country table line {line}: {detail}")]
    BadTable { line: usize, detail: String },
    #[error("bad sampler parameter: {detail}")]
    BadParam { detail: String },
    #[error(
        "calibration cannot reach an identical-triple fraction of {target}; closest achieved {achieved:.4}"
    )]
    NoConvergence { target: f64, achieved: f64 },
}

const HEADER: &str = "country,weight,female_share,age_mean,age_sd,education_mean,education_sd,interest_mean,interest_sd,ideology_mean,ideology_sd";

impl CountryTable {
    /// Parse a comma-separated table. `#` lines and blanks are skipped; the
    /// first data line must be the canonical header.
    pub fn parse(src: &str) -> Result<CountryTable, SamplerError> {
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in src.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != HEADER {
                    return Err(SamplerError::BadTable {
                        line: line_no,
                        detail: format!("expected header `{HEADER}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 11 {
                return Err(SamplerError::BadTable {
                    line: line_no,
                    detail: format!("expected 11 fields, got {}", fields.len()),
                });
            }
            let num = |i: usize| -> Result<f64, SamplerError> {
                fields[i].parse().map_err(|_| SamplerError::BadTable {
                    line: line_no,
                    detail: format!("field `{}` is not a number", fields[i]),
                })
            };
            let row = CountryRow {
                name: fields[0].to_string(),
                weight: num(1)?,
                female_share: num(2)?,
                age_mean: num(3)?,
                age_sd: num(4)?,
                education_mean: num(5)?,
                education_sd: num(6)?,
                interest_mean: num(7)?,
                interest_sd: num(8)?,
                ideology_mean: num(9)?,
                ideology_sd: num(10)?,
            };
            if row.name.is_empty() {
                return Err(SamplerError::BadTable {
                    line: line_no,
                    detail: "empty country name".into(),
                });
            }
            if !(row.weight > 0.0) {
                return Err(SamplerError::BadTable {
                    line: line_no,
                    detail: "weight must be positive".into(),
                });
            }
            if !(0.0..=1.0).contains(&row.female_share) {
                return Err(SamplerError::BadTable {
                    line: line_no,
                    detail: "female_share must lie in [0, 1]".into(),
                });
            }
            for (name, sd) in [
                ("age_sd", row.age_sd),
                ("education_sd", row.education_sd),
                ("interest_sd", row.interest_sd),
                ("ideology_sd", row.ideology_sd),
            ] {
                if !(sd >= 0.0) {
                    return Err(SamplerError::BadTable {
                        line: line_no,
                        detail: format!("{name} must be non-negative"),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(SamplerError::BadTable {
                line: 0,
                detail: "table has no rows".into(),
            });
        }
        Ok(CountryTable { rows })
    }

    /// The 15-country placeholder table shipped with the crate.
    pub fn builtin() -> CountryTable {
        CountryTable::parse(include_str!("../data/countries.csv"))
            .expect("embedded country table must parse")
    }

    pub fn load(path: &std::path::Path) -> Result<CountryTable, SamplerError> {
        CountryTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> &[CountryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

/// One sampled participant persona.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub country_index: usize,
    pub country: String,
    pub gender: Gender,
    /// Clamped to 18..=90.
    pub age: u32,
    /// 1..=7.
    pub education: u8,
    /// 1..=5.
    pub political_interest: u8,
    /// 0..=10.
    pub ideology: u8,
}

fn sample_clamped(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    let normal = Normal::new(mean, sd).expect("validated sd >= 0");
    normal.sample(rng).round().clamp(lo, hi)
}

/// Draw one profile from the table.
pub fn sample_profile(table: &CountryTable, rng: &mut impl Rng) -> DemographicProfile {
    let weights: Vec<f64> = table.rows().iter().map(|r| r.weight).collect();
    let index = WeightedIndex::new(&weights)
        .expect("validated positive weights")
        .sample(rng);
    let row = &table.rows()[index];
    let female = rng.random_bool(row.female_share);
    DemographicProfile {
        country_index: index,
        country: row.name.clone(),
        gender: if female { Gender::Female } else { Gender::Male },
        age: sample_clamped(row.age_mean, row.age_sd, 18.0, 90.0, rng) as u32,
        education: sample_clamped(row.education_mean, row.education_sd, 1.0, 7.0, rng) as u8,
        political_interest: sample_clamped(row.interest_mean, row.interest_sd, 1.0, 5.0, rng) as u8,
        ideology: sample_clamped(row.ideology_mean, row.ideology_sd, 0.0, 10.0, rng) as u8,
    }
}

/// Three 7-point deprivation ratings and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeprivationTriple {
    pub ratings: [u8; 3],
    /// Mean of the three ratings.
    pub score: f64,
}

impl DeprivationTriple {
    pub fn identical(&self) -> bool {
        self.ratings[0] == self.ratings[1] && self.ratings[1] == self.ratings[2]
    }
}

fn clip_rating(value: f64) -> u8 {
    value.round().clamp(1.0, 7.0) as u8
}

/// Draw one deprivation triple: a participant-level normal draw
/// `N(mu, sigma)` plus an independent `N(0, perturb_sd)` perturbation per
/// item, rounded and clipped to 1..=7.
pub fn sample_deprivation(
    mu: f64,
    sigma: f64,
    perturb_sd: f64,
    rng: &mut impl Rng,
) -> DeprivationTriple {
    let base = Normal::new(mu, sigma).expect("sigma >= 0").sample(rng);
    let perturb = Normal::new(0.0, perturb_sd).expect("perturb_sd >= 0");
    let ratings = [(); 3].map(|_| clip_rating(base + perturb.sample(rng)));
    let score = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / 3.0;
    DeprivationTriple { ratings, score }
}

/// Result of calibrating the deprivation perturbation width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// Calibrated per-item perturbation standard deviation.
    pub perturb_sd: f64,
    /// Monte Carlo estimate of the identical-triple fraction at `perturb_sd`.
    pub achieved: f64,
    /// Draws per Monte Carlo evaluation.
    pub draws: usize,
}

/// Find the perturbation width at which the fraction of identical triples
/// hits `target` (within 0.005), by bisection against a Monte Carlo estimate
/// with common random numbers. Deterministic in `seed`.
pub fn calibrate_perturbation(
    mu: f64,
    sigma: f64,
    target: f64,
    seed: u64,
) -> Result<Calibration, SamplerError> {
    if !(sigma >= 0.0) {
        return Err(SamplerError::BadParam {
            detail: "sigma must be non-negative".into(),
        });
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(SamplerError::BadParam {
            detail: "target fraction must lie in (0, 1]".into(),
        });
    }
    const DRAWS: usize = 200_000;
    const TOLERANCE: f64 = 0.005;
    if target >= 1.0 {
        // Zero perturbation makes every triple identical.
        return Ok(Calibration { perturb_sd: 0.0, achieved: 1.0, draws: DRAWS });
    }
    // Common random numbers: one fixed set of standard-normal draws reused at
    // every candidate width, so the estimated fraction is a stable,
    // near-monotone function of the width and bisection converges.
    let mut rng = seed::rng(seed, &[tag::DEPRIVATION]);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let draws: Vec<[f64; 4]> = (0..DRAWS)
        .map(|_| [(); 4].map(|_| unit.sample(&mut rng)))
        .collect();
    let fraction_identical = |perturb_sd: f64| -> f64 {
        let identical = draws
            .iter()
            .filter(|z| {
                let base = mu + sigma * z[0];
                let r1 = clip_rating(base + perturb_sd * z[1]);
                let r2 = clip_rating(base + perturb_sd * z[2]);
                let r3 = clip_rating(base + perturb_sd * z[3]);
                r1 == r2 && r2 == r3
            })
            .count();
        identical as f64 / DRAWS as f64
    };
    let mut lo = 0.0;
    let mut hi = 0.25;
    while fraction_identical(hi) > target {
        hi *= 2.0;
        if hi > 32.0 {
            return Err(SamplerError::NoConvergence {
                target,
                achieved: fraction_identical(32.0),
            });
        }
    }
    let mut best = (hi, fraction_identical(hi));
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let p = fraction_identical(mid);
        if (p - target).abs() < (best.1 - target).abs() {
            best = (mid, p);
        }
        if (p - target).abs() < TOLERANCE {
            return Ok(Calibration { perturb_sd: mid, achieved: p, draws: DRAWS });
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SamplerError::NoConvergence {
        target,
        achieved: best.1,
    })
}
