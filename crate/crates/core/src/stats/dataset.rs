//! Raw run records and their aggregation into analyzable datasets.
//!
//! Runs persist one serialized row per rating ([`IteRow`]) or per participant
//! ([`PfnRow`]). The dataset types here index those rows into the structures
//! the estimators need: per-statement rating cells for the exposure-shift
//! table, and per-participant scores for the framing regressions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bank::{Attribute, SCALE_MIDPOINT};
use crate::design::{CellRole, ParticipantDesign};
use crate::parse::RatingRecord;
use crate::prompt::{ArticleKind, Phase};
use crate::sampler::{DemographicProfile, DeprivationTriple};
use crate::stats::bootstrap::{ResampleStatistic, ResampleWeights};
use crate::stats::describe::{describe, normal_ci, Descriptives};
use crate::stats::offset_tilt::fit_weighted;
use crate::stats::StatsError;

/// One rating from the rating study, as persisted to the run's data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteRow {
    pub participant: u32,
    pub block: u32,
    pub phase: Phase,
    pub statement: String,
    /// The attribute the rating was made on.
    pub attribute: Attribute,
    /// For test-phase rows, the attribute this statement was exposed with
    /// earlier ([`None`] = first sight). Always [`None`] for exposure rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposed_as: Option<Attribute>,
    /// 1..=6.
    pub rating: u8,
    /// Verbatim completion line the rating was parsed from.
    pub raw: String,
}

/// How a test-phase rating relates to the participant's exposure phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureClass {
    /// First sight of the statement.
    Fresh,
    /// Exposed earlier on the same attribute.
    Same,
    /// Exposed earlier on a different attribute (all such pairings pooled).
    Mixed,
}

impl ExposureClass {
    /// Classify a test rating on `test` given the earlier exposure attribute.
    pub fn of(test: Attribute, exposed_as: Option<Attribute>) -> Self {
        match exposed_as {
            None => ExposureClass::Fresh,
            Some(e) if e == test => ExposureClass::Same,
            Some(_) => ExposureClass::Mixed,
        }
    }
}

/// Convert one participant's parsed ratings into persistable rows.
///
/// Each record is checked against the design: the statement must be one the
/// participant uses, under the attribute the design assigned for that phase.
/// Test-phase rows are annotated with the attribute the statement was exposed
/// under earlier (`None` for first sight), which is what
/// [`IteDataset::from_rows`] later classifies on.
pub fn ite_rows(
    design: &ParticipantDesign,
    records: &[RatingRecord],
) -> Result<Vec<IteRow>, StatsError> {
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let bad = |detail: String| StatsError::BadData { detail };
        if record.participant != design.participant_id {
            return Err(bad(format!(
                "record for participant {} mixed into designs for {}",
                record.participant, design.participant_id
            )));
        }
        let Some(role) = design.cell_roles.get(&record.item) else {
            return Err(bad(format!(
                "participant {} never rates `{}`",
                design.participant_id, record.item
            )));
        };
        let Some(attribute) = record.scale.attribute() else {
            return Err(bad(format!("agreement-scale record for `{}`", record.item)));
        };
        let (assigned, exposed_as) = match (record.phase, *role) {
            (Phase::Exposure, CellRole::ExposureOnly { attribute }) => (attribute, None),
            (Phase::Exposure, CellRole::Both { exposure, .. }) => (exposure, None),
            (Phase::Test, CellRole::TestOnly { attribute }) => (attribute, None),
            (Phase::Test, CellRole::Both { exposure, test }) => (test, Some(exposure)),
            (phase, _) => {
                return Err(bad(format!(
                    "`{}` has no {:?}-phase role for participant {}",
                    record.item, phase, design.participant_id
                )));
            }
        };
        if attribute != assigned {
            return Err(bad(format!(
                "`{}` rated on {} where the design assigned {}",
                record.item,
                attribute.name(),
                assigned.name()
            )));
        }
        rows.push(IteRow {
            participant: record.participant,
            block: design.block_id,
            phase: record.phase,
            statement: record.item.clone(),
            attribute,
            exposed_as,
            rating: record.rating.value(),
            raw: record.raw_line.clone(),
        });
    }
    Ok(rows)
}

/// Ratings of one statement on one attribute, keyed by participant index.
type Cell = Vec<(usize, f64)>;

/// Indexed rating-study data.
///
/// Rows are grouped into per-statement cells: exposure-phase ratings by
/// attribute, and test-phase ratings split by [`ExposureClass`]. The
/// exposure-shift statistic and the figure summaries all read these cells.
/// A statement's *unexposed* mean pools every rating made without prior
/// exposure — exposure-phase ratings and test-phase first sights alike.
#[derive(Debug, Clone)]
pub struct IteDataset {
    participants: Vec<u32>,
    statements: Vec<String>,
    /// `fresh[s][t]`: test-phase first-sight ratings of statement `s` on
    /// attribute index `t`. Likewise for the other groups.
    fresh: Vec<[Cell; 4]>,
    same: Vec<[Cell; 4]>,
    mixed: Vec<[Cell; 4]>,
    exposure: Vec<[Cell; 4]>,
}

impl IteDataset {
    /// Index raw rows. Rejects out-of-range ratings, exposure rows that
    /// claim a prior exposure, and duplicate (participant, phase, statement)
    /// combinations.
    pub fn from_rows(rows: &[IteRow]) -> Result<Self, StatsError> {
        let mut participant_ids = BTreeSet::new();
        let mut statement_ids = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for row in rows {
            if row.phase == Phase::Probe {
                return Err(StatsError::BadData {
                    detail: format!("participant {}: probe row in rating-study data", row.participant),
                });
            }
            if !(1..=6).contains(&row.rating) {
                return Err(StatsError::BadData {
                    detail: format!(
                        "participant {}, statement {}: rating {} outside 1..=6",
                        row.participant, row.statement, row.rating
                    ),
                });
            }
            if row.phase == Phase::Exposure && row.exposed_as.is_some() {
                return Err(StatsError::BadData {
                    detail: format!(
                        "participant {}, statement {}: exposure row carries a prior exposure",
                        row.participant, row.statement
                    ),
                });
            }
            if row.statement.is_empty() {
                return Err(StatsError::BadData {
                    detail: format!("participant {}: empty statement id", row.participant),
                });
            }
            if !seen.insert((row.participant, row.phase, row.statement.clone())) {
                return Err(StatsError::BadData {
                    detail: format!(
                        "participant {}, statement {}: duplicate {:?}-phase rating",
                        row.participant, row.statement, row.phase
                    ),
                });
            }
            participant_ids.insert(row.participant);
            statement_ids.insert(row.statement.clone());
        }
        let participants: Vec<u32> = participant_ids.into_iter().collect();
        let statements: Vec<String> = statement_ids.into_iter().collect();
        if participants.len() < 2 || statements.len() < 2 {
            return Err(StatsError::InsufficientData {
                detail: format!(
                    "{} participants and {} statements; need at least 2 of each",
                    participants.len(),
                    statements.len()
                ),
            });
        }
        let p_index: BTreeMap<u32, usize> =
            participants.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let s_index: BTreeMap<&str, usize> = statements
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();

        let empty = || vec![<[Cell; 4]>::default(); statements.len()];
        let (mut fresh, mut same, mut mixed, mut exposure) = (empty(), empty(), empty(), empty());
        for row in rows {
            let p = p_index[&row.participant];
            let s = s_index[row.statement.as_str()];
            let t = row.attribute.index();
            let value = row.rating as f64;
            match row.phase {
                Phase::Exposure => exposure[s][t].push((p, value)),
                Phase::Test => match ExposureClass::of(row.attribute, row.exposed_as) {
                    ExposureClass::Fresh => fresh[s][t].push((p, value)),
                    ExposureClass::Same => same[s][t].push((p, value)),
                    ExposureClass::Mixed => mixed[s][t].push((p, value)),
                },
                Phase::Probe => unreachable!("rejected above"),
            }
        }
        Ok(Self {
            participants,
            statements,
            fresh,
            same,
            mixed,
            exposure,
        })
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_statements(&self) -> usize {
        self.statements.len()
    }

    pub fn statements(&self) -> &[String] {
        &self.statements
    }

    /// The 16-component exposure-shift statistic over this dataset.
    pub fn shift_statistic(&self) -> ExposureShiftStatistic<'_> {
        ExposureShiftStatistic { data: self }
    }

    /// Per-statement exposure-phase summaries (one point per statement and
    /// attribute that has data), with normal-approximation intervals.
    pub fn exposure_summary(&self, level: f64) -> Vec<StatementSummary> {
        let mut out = Vec::new();
        for (s, cells) in self.exposure.iter().enumerate() {
            for attribute in Attribute::ALL {
                if let Some(point) =
                    summarize_cells(&self.statements[s], attribute, &[&cells[attribute.index()]], level)
                {
                    out.push(point);
                }
            }
        }
        out
    }

    /// Per-statement fresh vs mixed-exposed truth summaries: the scatter
    /// behind the truth-shift picture. Statements missing either side are
    /// omitted.
    pub fn truth_shift_summary(&self, level: f64) -> Vec<TruthShiftPoint> {
        let t = Attribute::Truth.index();
        let mut out = Vec::new();
        for s in 0..self.statements.len() {
            let fresh = summarize_cells(
                &self.statements[s],
                Attribute::Truth,
                &[&self.exposure[s][t], &self.fresh[s][t]],
                level,
            );
            let mixed =
                summarize_cells(&self.statements[s], Attribute::Truth, &[&self.mixed[s][t]], level);
            if let (Some(fresh), Some(mixed)) = (fresh, mixed) {
                out.push(TruthShiftPoint {
                    statement: self.statements[s].clone(),
                    fresh,
                    exposed: mixed,
                });
            }
        }
        out
    }
}

/// Mean and interval of one statement's ratings on one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementSummary {
    pub statement: String,
    pub attribute: Attribute,
    pub n: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// One point of the fresh-vs-exposed truth scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthShiftPoint {
    pub statement: String,
    pub fresh: StatementSummary,
    pub exposed: StatementSummary,
}

fn summarize_cells(
    statement: &str,
    attribute: Attribute,
    cells: &[&Cell],
    level: f64,
) -> Option<StatementSummary> {
    let values: Vec<f64> = cells.iter().flat_map(|cell| cell.iter().map(|&(_, v)| v)).collect();
    if values.is_empty() {
        return None;
    }
    let (mean, lo, hi) = if values.len() == 1 {
        (values[0], values[0], values[0])
    } else {
        let d = describe(&values).expect("cell has >= 2 finite values");
        let (lo, hi) = normal_ci(d.mean, d.sd, d.n, level);
        (d.mean, lo, hi)
    };
    Some(StatementSummary {
        statement: statement.to_string(),
        attribute,
        n: values.len(),
        mean,
        lo,
        hi,
    })
}

/// The jointly bootstrapped table statistic: for each exposure class
/// (mixed, then same) and each test attribute, the offset and tilt of the
/// exposure-shift fit — 16 components, matching the Bonferroni family.
#[derive(Debug, Clone, Copy)]
pub struct ExposureShiftStatistic<'a> {
    data: &'a IteDataset,
}

/// Component order: mixed before same, attributes in canonical order,
/// offset before tilt.
pub fn shift_component_names() -> Vec<String> {
    let mut names = Vec::with_capacity(16);
    for class in ["mixed", "same"] {
        for attribute in Attribute::ALL {
            for parameter in ["offset", "tilt"] {
                names.push(format!("{class}/{}/{parameter}", attribute.name()));
            }
        }
    }
    names
}

impl ExposureShiftStatistic<'_> {
    /// Weighted mean over one or more cells pooled together; `None` when the
    /// pool is empty or none of its participants carry resample mass.
    fn pooled_mean(cells: &[&Cell], weights: &ResampleWeights) -> Option<f64> {
        let mut total = 0.0;
        let mut sum = 0.0;
        for cell in cells {
            for &(p, v) in cell.iter() {
                let w = weights.participant[p];
                total += w;
                sum += w * v;
            }
        }
        if total <= 0.0 {
            None
        } else {
            Some(sum / total)
        }
    }

    /// One class/attribute fit under the given weights. The unexposed mean
    /// pools every rating made without prior exposure: exposure-phase ratings
    /// and test-phase first sights.
    ///
    /// A statement contributes a point only when both of its means have mass
    /// under the weights; statements emptied by a resample drop out exactly
    /// like statements the draw never picked. The fit itself returning `None`
    /// (fewer than three points, or no spread left in the unexposed means)
    /// is what makes the statistic undefined for the resample.
    fn class_fit(
        &self,
        class_cells: &[[Cell; 4]],
        t: usize,
        weights: &ResampleWeights,
    ) -> Option<(f64, f64)> {
        let mut points = Vec::with_capacity(self.data.statements.len());
        for s in 0..self.data.statements.len() {
            let w_s = weights.statement[s];
            if w_s <= 0.0 {
                continue;
            }
            let unexposed = [&self.data.exposure[s][t], &self.data.fresh[s][t]];
            let Some(fresh) = Self::pooled_mean(&unexposed, weights) else {
                continue;
            };
            let Some(exposed) = Self::pooled_mean(&[&class_cells[s][t]], weights) else {
                continue;
            };
            points.push((fresh - SCALE_MIDPOINT, exposed - fresh, w_s));
        }
        let fit = fit_weighted(&points)?;
        Some((fit.offset, fit.tilt))
    }
}

impl ResampleStatistic for ExposureShiftStatistic<'_> {
    fn participants(&self) -> usize {
        self.data.participants.len()
    }

    fn statements(&self) -> usize {
        self.data.statements.len()
    }

    fn names(&self) -> Vec<String> {
        shift_component_names()
    }

    fn evaluate(&self, weights: &ResampleWeights) -> Option<Vec<f64>> {
        let mut values = Vec::with_capacity(16);
        for class_cells in [&self.data.mixed, &self.data.same] {
            for attribute in Attribute::ALL {
                let (offset, tilt) = self.class_fit(class_cells, attribute.index(), weights)?;
                values.push(offset);
                values.push(tilt);
            }
        }
        Some(values)
    }
}

/// One framing-study participant, as persisted to the run's data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfnRow {
    pub participant: u32,
    pub profile: DemographicProfile,
    pub deprivation: DeprivationTriple,
    pub article: ArticleKind,
    /// Two persuasion probe ratings (1..=7), in survey order.
    pub persuasion: Vec<u8>,
    /// Three mobilization probe ratings (1..=7), in survey order.
    pub mobilization: Vec<u8>,
    /// Verbatim completion per probe: persuasion probes, then mobilization.
    pub raw: Vec<String>,
}

impl PfnRow {
    /// Persuasion score: mean of the two persuasion ratings.
    pub fn p_score(&self) -> f64 {
        self.persuasion.iter().map(|&r| r as f64).sum::<f64>() / self.persuasion.len() as f64
    }

    /// Mobilization score: mean of the three mobilization ratings.
    pub fn m_score(&self) -> f64 {
        self.mobilization.iter().map(|&r| r as f64).sum::<f64>() / self.mobilization.len() as f64
    }
}

/// One participant reduced to the regression variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfnObservation {
    pub country: usize,
    pub elitist: bool,
    pub immigrant: bool,
    /// Relative-deprivation score (mean of the three ratings), in [1, 7].
    pub deprivation: f64,
    /// Persuasion score, in [1, 7].
    pub persuasion: f64,
    /// Mobilization score, in [1, 7].
    pub mobilization: f64,
}

/// Framing-study data ready for the regression battery.
#[derive(Debug, Clone, PartialEq)]
pub struct PfnDataset {
    pub observations: Vec<PfnObservation>,
    /// Total countries in the sampling table; the last one is the
    /// regression reference (coded by all indicator flags being zero).
    pub n_countries: usize,
}

impl PfnDataset {
    /// Reduce raw rows to regression observations. `n_countries` is the size
    /// of the country table the profiles were sampled from.
    pub fn from_rows(rows: &[PfnRow], n_countries: usize) -> Result<Self, StatsError> {
        if n_countries < 2 {
            return Err(StatsError::BadData {
                detail: format!("{n_countries} countries; need at least 2"),
            });
        }
        let mut seen = BTreeSet::new();
        let mut observations = Vec::with_capacity(rows.len());
        for row in rows {
            if !seen.insert(row.participant) {
                return Err(StatsError::BadData {
                    detail: format!("participant {}: duplicate row", row.participant),
                });
            }
            if row.profile.country_index >= n_countries {
                return Err(StatsError::BadData {
                    detail: format!(
                        "participant {}: country index {} outside table of {}",
                        row.participant, row.profile.country_index, n_countries
                    ),
                });
            }
            if row.persuasion.len() != 2 || row.mobilization.len() != 3 {
                return Err(StatsError::BadData {
                    detail: format!(
                        "participant {}: {} persuasion and {} mobilization ratings; need 2 and 3",
                        row.participant,
                        row.persuasion.len(),
                        row.mobilization.len()
                    ),
                });
            }
            for &r in row.persuasion.iter().chain(&row.mobilization) {
                if !(1..=7).contains(&r) {
                    return Err(StatsError::BadData {
                        detail: format!(
                            "participant {}: probe rating {} outside 1..=7",
                            row.participant, r
                        ),
                    });
                }
            }
            for &r in &row.deprivation.ratings {
                if !(1..=7).contains(&r) {
                    return Err(StatsError::BadData {
                        detail: format!(
                            "participant {}: deprivation rating {} outside 1..=7",
                            row.participant, r
                        ),
                    });
                }
            }
            observations.push(PfnObservation {
                country: row.profile.country_index,
                elitist: row.article.anti_elitist(),
                immigrant: row.article.anti_immigrant(),
                deprivation: row.deprivation.score,
                persuasion: row.p_score(),
                mobilization: row.m_score(),
            });
        }
        if observations.is_empty() {
            return Err(StatsError::InsufficientData {
                detail: "no framing-study rows".into(),
            });
        }
        Ok(Self {
            observations,
            n_countries,
        })
    }

    /// Descriptives of the per-participant persuasion and mobilization
    /// scores — the two-row outcome summary.
    pub fn outcome_descriptives(&self) -> Result<(Descriptives, Descriptives), StatsError> {
        let p: Vec<f64> = self.observations.iter().map(|o| o.persuasion).collect();
        let m: Vec<f64> = self.observations.iter().map(|o| o.mobilization).collect();
        Ok((describe(&p)?, describe(&m)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{Rating, Scale};
    use crate::sampler::Gender;

    fn ite_row(
        participant: u32,
        phase: Phase,
        statement: &str,
        attribute: Attribute,
        exposed_as: Option<Attribute>,
        rating: u8,
    ) -> IteRow {
        IteRow {
            participant,
            block: 0,
            phase,
            statement: statement.to_string(),
            attribute,
            exposed_as,
            rating,
            raw: String::new(),
        }
    }

    /// A complete miniature dataset: `n_statements` statements, every
    /// attribute covered in fresh, same, and mixed cells. Fresh level is set
    /// per statement; same-exposed ratings equal fresh, mixed-exposed get
    /// `boost` added.
    fn miniature(n_statements: usize, boost: i8) -> Vec<IteRow> {
        let fresh_level = |s: usize| 2 + (s % 4) as u8; // 2..=5, spread around 3.5
        let mut rows = Vec::new();
        let mut participant = 0u32;
        for s in 0..n_statements {
            let id = format!("s{s:02}");
            for t in Attribute::ALL {
                let other = Attribute::ALL[(t.index() + 1) % 4];
                let fresh = fresh_level(s);
                let exposed = (fresh as i8 + boost).clamp(1, 6) as u8;
                // Two raters per cell so the summaries have a spread of n=2.
                for _ in 0..2 {
                    rows.push(ite_row(participant, Phase::Test, &id, t, None, fresh));
                    rows.push(ite_row(participant + 1, Phase::Test, &id, t, Some(t), fresh));
                    rows.push(ite_row(participant + 2, Phase::Test, &id, t, Some(other), exposed));
                    rows.push(ite_row(participant + 3, Phase::Exposure, &id, t, None, fresh));
                    participant += 4;
                }
            }
        }
        rows
    }

    #[test]
    fn exposure_class_is_derived_from_attribute_pairing() {
        use Attribute::*;
        assert_eq!(ExposureClass::of(Truth, None), ExposureClass::Fresh);
        assert_eq!(ExposureClass::of(Truth, Some(Truth)), ExposureClass::Same);
        assert_eq!(ExposureClass::of(Truth, Some(Interest)), ExposureClass::Mixed);
        assert_eq!(ExposureClass::of(Importance, Some(Importance)), ExposureClass::Same);
    }

    #[test]
    fn component_names_are_class_major() {
        let names = shift_component_names();
        assert_eq!(names.len(), 16);
        assert_eq!(names[0], "mixed/truth/offset");
        assert_eq!(names[1], "mixed/truth/tilt");
        assert_eq!(names[7], "mixed/importance/tilt");
        assert_eq!(names[8], "same/truth/offset");
        assert_eq!(names[15], "same/importance/tilt");
    }

    #[test]
    fn constant_boost_appears_only_in_mixed_components() {
        let data = IteDataset::from_rows(&miniature(8, 1)).unwrap();
        let stat = data.shift_statistic();
        let unit = ResampleWeights::unit(data.n_participants(), data.n_statements());
        let values = stat.evaluate(&unit).unwrap();
        for (i, name) in shift_component_names().iter().enumerate() {
            let expected = if name.starts_with("mixed") && name.ends_with("offset") {
                1.0
            } else {
                0.0
            };
            assert!(
                (values[i] - expected).abs() < 1e-10,
                "{name}: {} vs {expected}",
                values[i]
            );
        }
    }

    #[test]
    fn zeroed_statement_weight_equals_removing_the_statement() {
        let rows = miniature(6, 1);
        let full = IteDataset::from_rows(&rows).unwrap();
        let dropped_id = full.statements()[2].clone();

        let mut weights = ResampleWeights::unit(full.n_participants(), full.n_statements());
        weights.statement[2] = 0.0;
        let via_weights = full.shift_statistic().evaluate(&weights).unwrap();

        let without: Vec<IteRow> = rows
            .iter()
            .filter(|r| r.statement != dropped_id)
            .cloned()
            .collect();
        let reduced = IteDataset::from_rows(&without).unwrap();
        let unit = ResampleWeights::unit(reduced.n_participants(), reduced.n_statements());
        let direct = reduced.shift_statistic().evaluate(&unit).unwrap();

        for (a, b) in via_weights.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn doubled_participant_weight_equals_duplicating_their_rows() {
        let mut rows = miniature(6, 2);
        // Perturb one rater so participant weights actually matter.
        rows[0].rating = 6;
        let full = IteDataset::from_rows(&rows).unwrap();
        let heavy = rows[0].participant;
        let heavy_idx = full
            .participants
            .iter()
            .position(|&p| p == heavy)
            .unwrap();

        let mut weights = ResampleWeights::unit(full.n_participants(), full.n_statements());
        weights.participant[heavy_idx] = 2.0;
        let via_weights = full.shift_statistic().evaluate(&weights).unwrap();

        let mut duplicated = rows.clone();
        let max = rows.iter().map(|r| r.participant).max().unwrap();
        for row in rows.iter().filter(|r| r.participant == heavy) {
            let mut copy = row.clone();
            copy.participant = max + 1;
            duplicated.push(copy);
        }
        let enlarged = IteDataset::from_rows(&duplicated).unwrap();
        let unit = ResampleWeights::unit(enlarged.n_participants(), enlarged.n_statements());
        let direct = enlarged.shift_statistic().evaluate(&unit).unwrap();

        for (a, b) in via_weights.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn statements_emptied_by_a_resample_drop_out_of_the_fit() {
        let rows = miniature(4, 1);
        let data = IteDataset::from_rows(&rows).unwrap();
        let mut weights = ResampleWeights::unit(data.n_participants(), data.n_statements());
        // Zero out every participant who rated statement 0 on truth without
        // prior exposure (the whole unexposed pool, both phases). The
        // statement drops out of the truth fits; three statements remain,
        // so the statistic stays defined.
        for &(p, _) in data.fresh[0][0].iter().chain(&data.exposure[0][0]) {
            weights.participant[p] = 0.0;
        }
        let reduced = data.shift_statistic().evaluate(&weights).expect("three points left");
        // It matches dropping the statement outright.
        let mut dropped = ResampleWeights::unit(data.n_participants(), data.n_statements());
        dropped.statement[0] = 0.0;
        let by_weight = data.shift_statistic().evaluate(&dropped).unwrap();
        assert!((reduced[0] - by_weight[0]).abs() < 1e-12);
        assert!((reduced[1] - by_weight[1]).abs() < 1e-12);

        // Emptying a second statement leaves two points: tilt unidentifiable,
        // the whole statistic undefined for this resample.
        for &(p, _) in data.fresh[1][0].iter().chain(&data.exposure[1][0]) {
            weights.participant[p] = 0.0;
        }
        assert!(data.shift_statistic().evaluate(&weights).is_none());
    }

    #[test]
    fn rating_rows_are_validated() {
        let ok = ite_row(0, Phase::Test, "s1", Attribute::Truth, None, 3);
        let mut bad_rating = ok.clone();
        bad_rating.rating = 7;
        let mut exposure_with_history = ok.clone();
        exposure_with_history.phase = Phase::Exposure;
        exposure_with_history.exposed_as = Some(Attribute::Truth);
        for rows in [
            vec![ok.clone(), bad_rating],
            vec![ok.clone(), exposure_with_history],
            vec![ok.clone(), ok.clone()], // duplicate
        ] {
            assert!(matches!(
                IteDataset::from_rows(&rows),
                Err(StatsError::BadData { .. })
            ));
        }
        assert!(matches!(
            IteDataset::from_rows(&[ok]),
            Err(StatsError::InsufficientData { .. })
        ));
    }

    #[test]
    fn summaries_report_cell_means_and_counts() {
        let data = IteDataset::from_rows(&miniature(6, 1)).unwrap();
        let exposure = data.exposure_summary(0.95);
        // 6 statements x 4 attributes, every cell populated.
        assert_eq!(exposure.len(), 24);
        for point in &exposure {
            assert_eq!(point.n, 2);
            assert!(point.lo <= point.mean && point.mean <= point.hi);
        }
        let shift = data.truth_shift_summary(0.95);
        assert_eq!(shift.len(), 6);
        for point in &shift {
            assert!((point.exposed.mean - point.fresh.mean - 1.0).abs() < 1e-12);
        }
    }

    fn pfn_row(participant: u32, country: usize, article: ArticleKind) -> PfnRow {
        PfnRow {
            participant,
            profile: DemographicProfile {
                country_index: country,
                country: format!("country {country}"),
                gender: Gender::Female,
                age: 40,
                education: 4,
                political_interest: 3,
                ideology: 5,
            },
            deprivation: DeprivationTriple {
                ratings: [4, 4, 5],
                score: 13.0 / 3.0,
            },
            article,
            persuasion: vec![5, 6],
            mobilization: vec![5, 6, 6],
            raw: vec!["5".into(), "6".into(), "5".into(), "6".into(), "6".into()],
        }
    }

    #[test]
    fn scores_are_means_of_probe_ratings() {
        let row = pfn_row(1, 0, ArticleKind::None);
        assert!((row.p_score() - 5.5).abs() < 1e-12);
        assert!((row.m_score() - 17.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn observations_carry_framing_flags() {
        let rows = vec![
            pfn_row(1, 0, ArticleKind::None),
            pfn_row(2, 1, ArticleKind::AntiElitist),
            pfn_row(3, 2, ArticleKind::AntiImmigrant),
            pfn_row(4, 3, ArticleKind::Both),
        ];
        let data = PfnDataset::from_rows(&rows, 15).unwrap();
        let flags: Vec<(bool, bool)> = data
            .observations
            .iter()
            .map(|o| (o.elitist, o.immigrant))
            .collect();
        assert_eq!(
            flags,
            vec![(false, false), (true, false), (false, true), (true, true)]
        );
        assert!((data.observations[0].deprivation - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pfn_rows_are_validated() {
        let ok = pfn_row(1, 0, ArticleKind::None);
        let mut bad_country = pfn_row(2, 20, ArticleKind::None);
        bad_country.participant = 2;
        let mut short_probes = pfn_row(3, 0, ArticleKind::None);
        short_probes.persuasion = vec![5];
        let mut bad_probe = pfn_row(4, 0, ArticleKind::None);
        bad_probe.mobilization = vec![5, 6, 8];
        let duplicate = ok.clone();
        for rows in [
            vec![ok.clone(), bad_country],
            vec![ok.clone(), short_probes],
            vec![ok.clone(), bad_probe],
            vec![ok.clone(), duplicate],
        ] {
            assert!(matches!(
                PfnDataset::from_rows(&rows, 15),
                Err(StatsError::BadData { .. })
            ));
        }
        assert!(matches!(
            PfnDataset::from_rows(&[], 15),
            Err(StatsError::InsufficientData { .. })
        ));
    }

    #[test]
    fn outcome_descriptives_summarize_scores() {
        let mut a = pfn_row(1, 0, ArticleKind::None);
        a.persuasion = vec![4, 4]; // P = 4
        let mut b = pfn_row(2, 1, ArticleKind::None);
        b.persuasion = vec![6, 6]; // P = 6
        let data = PfnDataset::from_rows(&[a, b], 15).unwrap();
        let (p, m) = data.outcome_descriptives().unwrap();
        assert!((p.mean - 5.0).abs() < 1e-12);
        assert!((p.sd - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((m.mean - 17.0 / 3.0).abs() < 1e-12);
        assert!(m.sd.abs() < 1e-12);
    }

    fn tiny_design() -> ParticipantDesign {
        let mut cell_roles = std::collections::BTreeMap::new();
        cell_roles.insert(
            "s-a".to_string(),
            CellRole::Both { exposure: Attribute::Interest, test: Attribute::Truth },
        );
        cell_roles.insert(
            "s-b".to_string(),
            CellRole::ExposureOnly { attribute: Attribute::Sentiment },
        );
        cell_roles.insert(
            "s-c".to_string(),
            CellRole::TestOnly { attribute: Attribute::Importance },
        );
        ParticipantDesign {
            participant_id: 7,
            block_id: 3,
            exposure_items: vec![
                ("s-a".to_string(), Attribute::Interest),
                ("s-b".to_string(), Attribute::Sentiment),
            ],
            test_items: vec![
                ("s-a".to_string(), Attribute::Truth),
                ("s-c".to_string(), Attribute::Importance),
            ],
            cell_roles,
        }
    }

    fn record(participant: u32, phase: Phase, item: &str, attr: Attribute, value: u8) -> RatingRecord {
        let scale = Scale::Attribute(attr);
        RatingRecord {
            participant,
            phase,
            item: item.to_string(),
            scale,
            rating: Rating::new(value, scale).unwrap(),
            raw_line: format!("echo of {item}"),
        }
    }

    #[test]
    fn rows_from_records_carry_design_exposure() {
        let design = tiny_design();
        let records = vec![
            record(7, Phase::Exposure, "s-a", Attribute::Interest, 3),
            record(7, Phase::Exposure, "s-b", Attribute::Sentiment, 2),
            record(7, Phase::Test, "s-a", Attribute::Truth, 5),
            record(7, Phase::Test, "s-c", Attribute::Importance, 4),
        ];
        let rows = ite_rows(&design, &records).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.block == 3 && r.participant == 7));
        assert_eq!(rows[0].exposed_as, None);
        assert_eq!(rows[1].exposed_as, None);
        assert_eq!(rows[2].exposed_as, Some(Attribute::Interest));
        assert_eq!(rows[2].rating, 5);
        assert_eq!(rows[2].raw, "echo of s-a");
        assert_eq!(rows[3].exposed_as, None);
    }

    #[test]
    fn rows_from_records_reject_design_mismatches() {
        let design = tiny_design();
        let cases = vec![
            // Someone else's record.
            record(8, Phase::Exposure, "s-a", Attribute::Interest, 3),
            // A statement this participant never uses.
            record(7, Phase::Exposure, "s-z", Attribute::Interest, 3),
            // Test-phase rating of an exposure-only statement.
            record(7, Phase::Test, "s-b", Attribute::Sentiment, 3),
            // Right statement and phase, wrong attribute.
            record(7, Phase::Test, "s-a", Attribute::Interest, 3),
        ];
        for case in cases {
            assert!(matches!(
                ite_rows(&design, &[case]),
                Err(StatsError::BadData { .. })
            ));
        }
    }
}
