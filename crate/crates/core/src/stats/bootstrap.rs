//! Two-way percentile bootstrap with multiplicity weights.
//!
//! Each resample draws participants and statements independently with
//! replacement and hands the resulting multiplicity weights to the statistic,
//! which re-evaluates itself under those weights. Confidence intervals are
//! percentile intervals with a Bonferroni-adjusted level, and p-values are
//! sign-flip fractions scaled by the same correction count, so `p < alpha`
//! holds exactly when the adjusted interval excludes zero.

use rand::Rng;

use crate::seed;
use crate::stats::StatsError;

/// Multiplicity weights for one resample: `participant[i]` counts how many
/// times participant `i` was drawn, likewise for statements.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleWeights {
    pub participant: Vec<f64>,
    pub statement: Vec<f64>,
}

impl ResampleWeights {
    /// Unit weights: every participant and statement counted once.
    pub fn unit(participants: usize, statements: usize) -> Self {
        Self {
            participant: vec![1.0; participants],
            statement: vec![1.0; statements],
        }
    }
}

/// A vector-valued statistic that can re-evaluate itself under resample
/// weights. Returning `None` marks the resample as degenerate (for example,
/// a cell lost all its mass); degenerate resamples are dropped and counted.
pub trait ResampleStatistic {
    fn participants(&self) -> usize;
    fn statements(&self) -> usize;
    /// One name per component, fixed across evaluations.
    fn names(&self) -> Vec<String>;
    fn evaluate(&self, weights: &ResampleWeights) -> Option<Vec<f64>>;
}

/// Bootstrap tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    /// Number of resamples.
    pub resamples: usize,
    /// Family-wise confidence level before correction, e.g. 0.95.
    pub level: f64,
    /// Bonferroni correction count (1 = none).
    pub corrections: usize,
    /// Root seed; resample `r` uses an independent stream derived from it.
    pub seed: u64,
    /// Maximum tolerated fraction of dropped (degenerate) resamples.
    pub max_dropped: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            level: 0.95,
            corrections: 1,
            seed: 0,
            max_dropped: 0.01,
        }
    }
}

impl BootstrapSettings {
    fn validate(&self) -> Result<(), StatsError> {
        if self.resamples < 100 {
            return Err(StatsError::BadData {
                detail: format!("{} resamples, need at least 100", self.resamples),
            });
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(StatsError::BadData {
                detail: format!("confidence level {} outside (0, 1)", self.level),
            });
        }
        if self.corrections == 0 {
            return Err(StatsError::BadData {
                detail: "correction count must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.max_dropped) {
            return Err(StatsError::BadData {
                detail: format!("max dropped fraction {} outside [0, 1)", self.max_dropped),
            });
        }
        Ok(())
    }

    /// One-sided tail mass after Bonferroni adjustment.
    fn tail(&self) -> f64 {
        (1.0 - self.level) / (2.0 * self.corrections as f64)
    }
}

/// Result for one component of the statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub name: String,
    /// Point estimate under unit weights.
    pub estimate: f64,
    /// Lower bound of the corrected percentile interval.
    pub lo: f64,
    /// Upper bound of the corrected percentile interval.
    pub hi: f64,
    /// Bonferroni-adjusted two-sided p-value against zero, capped at 1.
    pub p: f64,
}

/// Full bootstrap result.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub outcomes: Vec<BootstrapOutcome>,
    /// Resamples that evaluated successfully.
    pub used: usize,
    /// Resamples dropped as degenerate.
    pub dropped: usize,
}

/// Sorted-order indices of the percentile interval at one-sided tail mass
/// `q`: with `k = ceil(m * q)` the interval is `[sorted[k-1], sorted[m-k]]`.
/// `None` when `m` is too small to carve off both tails.
pub(crate) fn interval_indices(m: usize, q: f64) -> Option<(usize, usize)> {
    if m == 0 || q <= 0.0 || q >= 0.5 {
        return None;
    }
    let k = (m as f64 * q).ceil() as usize;
    let k = k.max(1);
    if k - 1 > m - k {
        return None;
    }
    Some((k - 1, m - k))
}

/// Two-sided sign-flip p-value with Bonferroni scaling, capped at 1:
/// `min(1, corrections * 2 * min(frac <= 0, frac >= 0))`.
pub(crate) fn two_sided_p(values: &[f64], corrections: usize) -> f64 {
    let m = values.len() as f64;
    let le = values.iter().filter(|&&v| v <= 0.0).count() as f64;
    let ge = values.iter().filter(|&&v| v >= 0.0).count() as f64;
    let raw = 2.0 * le.min(ge) / m;
    (corrections as f64 * raw).min(1.0)
}

fn draw_multiplicities<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

/// Run the two-way bootstrap: resample participants and statements, collect
/// the statistic's components, and summarize each with a corrected percentile
/// interval and p-value.
pub fn run_two_way_bootstrap<S: ResampleStatistic>(
    stat: &S,
    settings: &BootstrapSettings,
) -> Result<BootstrapReport, StatsError> {
    settings.validate()?;
    let names = stat.names();
    let unit = ResampleWeights::unit(stat.participants(), stat.statements());
    let estimates = stat.evaluate(&unit).ok_or_else(|| StatsError::BadData {
        detail: "statistic is degenerate under the full sample".into(),
    })?;
    if estimates.len() != names.len() {
        return Err(StatsError::BadData {
            detail: format!(
                "statistic produced {} values but declares {} names",
                estimates.len(),
                names.len()
            ),
        });
    }

    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(settings.resamples); names.len()];
    let mut dropped = 0usize;
    for r in 0..settings.resamples {
        let mut rng = seed::rng(settings.seed, &[seed::tag::BOOTSTRAP, r as u64]);
        let weights = ResampleWeights {
            participant: draw_multiplicities(&mut rng, stat.participants()),
            statement: draw_multiplicities(&mut rng, stat.statements()),
        };
        match stat.evaluate(&weights) {
            Some(values) if values.len() == names.len() => {
                for (series, value) in draws.iter_mut().zip(values) {
                    series.push(value);
                }
            }
            _ => dropped += 1,
        }
    }

    let used = settings.resamples - dropped;
    if dropped as f64 > settings.max_dropped * settings.resamples as f64 {
        return Err(StatsError::TooManyDropped {
            dropped,
            total: settings.resamples,
        });
    }

    let q = settings.tail();
    let (lo_idx, hi_idx) = interval_indices(used, q).ok_or_else(|| StatsError::InsufficientData {
        detail: format!("{used} resamples cannot resolve a tail of {q}"),
    })?;

    let outcomes = names
        .into_iter()
        .zip(estimates)
        .zip(draws)
        .map(|((name, estimate), mut series)| {
            let p = two_sided_p(&series, settings.corrections);
            series.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap draws must not be NaN"));
            BootstrapOutcome {
                name,
                estimate,
                lo: series[lo_idx],
                hi: series[hi_idx],
                p,
            }
        })
        .collect();

    Ok(BootstrapReport {
        outcomes,
        used,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Weighted mean of fixed per-participant values, shifted by `shift`.
    /// Ignores statement weights (they still vary per resample).
    struct ShiftedMean {
        values: Vec<f64>,
        shift: f64,
    }

    impl ResampleStatistic for ShiftedMean {
        fn participants(&self) -> usize {
            self.values.len()
        }
        fn statements(&self) -> usize {
            5
        }
        fn names(&self) -> Vec<String> {
            vec!["mean".into()]
        }
        fn evaluate(&self, weights: &ResampleWeights) -> Option<Vec<f64>> {
            let total: f64 = weights.participant.iter().sum();
            if total <= 0.0 {
                return None;
            }
            let mean = self
                .values
                .iter()
                .zip(&weights.participant)
                .map(|(v, w)| v * w)
                .sum::<f64>()
                / total;
            Some(vec![mean + self.shift])
        }
    }

    /// Drops whenever participant 0 is left out of the resample, which
    /// happens in roughly a third of resamples.
    struct FragileStat;

    impl ResampleStatistic for FragileStat {
        fn participants(&self) -> usize {
            40
        }
        fn statements(&self) -> usize {
            5
        }
        fn names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn evaluate(&self, weights: &ResampleWeights) -> Option<Vec<f64>> {
            if weights.participant[0] == 0.0 {
                return None;
            }
            Some(vec![1.0])
        }
    }

    #[test]
    fn interval_indices_match_hand_computation() {
        // m = 100, q = 0.025: k = ceil(2.5) = 3, interval = [s[2], s[97]].
        assert_eq!(interval_indices(100, 0.025), Some((2, 97)));
        // m = 10_000, q = 0.05 / 32 (Bonferroni 16): k = ceil(15.625) = 16.
        assert_eq!(interval_indices(10_000, 0.05 / 32.0), Some((15, 9984)));
        // Exactly integral m*q (1/32 is a binary fraction, so the product
        // is exact): k = 10.
        assert_eq!(interval_indices(320, 1.0 / 32.0), Some((9, 310)));
        // For any q < 0.5 the bounds exist, collapsing to a single order
        // statistic at worst.
        assert_eq!(interval_indices(3, 0.4), Some((1, 1)));
        // No draws, or tails covering everything, cannot be resolved.
        assert_eq!(interval_indices(0, 0.025), None);
        assert_eq!(interval_indices(100, 0.5), None);
        assert_eq!(interval_indices(100, 0.0), None);
    }

    #[test]
    fn p_value_counts_both_tails() {
        let values = [-1.0, -0.5, 0.5, 1.0, 2.0];
        // 2 of 5 at or below zero: p = 2 * 2/5 = 0.8.
        assert!((two_sided_p(&values, 1) - 0.8).abs() < 1e-12);
        // Bonferroni doubles it, capped at 1.
        assert!((two_sided_p(&values, 2) - 1.0).abs() < 1e-12);
        // Zero sits in both tails.
        let with_zero = [0.0, 1.0, 2.0, 3.0];
        assert!((two_sided_p(&with_zero, 1) - 0.5).abs() < 1e-12);
        // All positive: p = 0.
        assert_eq!(two_sided_p(&[1.0, 2.0], 1), 0.0);
    }

    /// The load-bearing invariant: the adjusted interval excludes zero
    /// exactly when the adjusted p-value is below 1 - level.
    #[test]
    fn interval_and_p_value_agree_on_significance() {
        for seed in 0..200u64 {
            let mut rng = crate::seed::rng(seed, &[0xB007]);
            let m = rng.random_range(100..400usize);
            let center: f64 = rng.random_range(-0.04..0.04);
            let values: Vec<f64> = (0..m)
                .map(|_| center + rng.random_range(-0.5..0.5f64))
                .collect();
            for corrections in [1usize, 4, 16] {
                let level = 0.95;
                let q = (1.0 - level) / (2.0 * corrections as f64);
                let Some((lo_idx, hi_idx)) = interval_indices(m, q) else {
                    continue;
                };
                let p = two_sided_p(&values, corrections);
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let excludes = sorted[lo_idx] > 0.0 || sorted[hi_idx] < 0.0;
                assert_eq!(
                    p < 1.0 - level,
                    excludes,
                    "seed {seed} corrections {corrections}: p = {p}, \
                     interval = [{}, {}]",
                    sorted[lo_idx],
                    sorted[hi_idx],
                );
            }
        }
    }

    #[test]
    fn recovers_a_clear_shift() {
        let stat = ShiftedMean {
            values: (0..50).map(|i| (i as f64) / 49.0 - 0.5).collect(),
            shift: 2.0,
        };
        let settings = BootstrapSettings {
            resamples: 400,
            seed: 7,
            ..Default::default()
        };
        let report = run_two_way_bootstrap(&stat, &settings).unwrap();
        let outcome = &report.outcomes[0];
        assert_eq!(report.dropped, 0);
        assert!((outcome.estimate - 2.0).abs() < 1e-12);
        assert!(outcome.lo > 1.5 && outcome.hi < 2.5);
        assert!(outcome.lo <= outcome.estimate && outcome.estimate <= outcome.hi);
        assert_eq!(outcome.p, 0.0);
    }

    #[test]
    fn centered_statistic_is_insignificant() {
        let stat = ShiftedMean {
            values: (0..50).map(|i| (i as f64) / 49.0 - 0.5).collect(),
            shift: 0.0,
        };
        let settings = BootstrapSettings {
            resamples: 400,
            seed: 11,
            ..Default::default()
        };
        let report = run_two_way_bootstrap(&stat, &settings).unwrap();
        let outcome = &report.outcomes[0];
        assert!(outcome.lo < 0.0 && outcome.hi > 0.0);
        assert!(outcome.p > 0.05);
    }

    #[test]
    fn corrections_widen_intervals_and_inflate_p() {
        let stat = ShiftedMean {
            values: (0..50).map(|i| (i as f64) / 49.0 - 0.5).collect(),
            shift: 0.02,
        };
        let base = BootstrapSettings {
            resamples: 1000,
            seed: 3,
            ..Default::default()
        };
        let plain = run_two_way_bootstrap(&stat, &base).unwrap();
        let corrected = run_two_way_bootstrap(
            &stat,
            &BootstrapSettings {
                corrections: 16,
                ..base
            },
        )
        .unwrap();
        assert!(corrected.outcomes[0].lo <= plain.outcomes[0].lo);
        assert!(corrected.outcomes[0].hi >= plain.outcomes[0].hi);
        assert!(corrected.outcomes[0].p >= plain.outcomes[0].p);
    }

    #[test]
    fn same_seed_reproduces_different_seed_varies() {
        // Quadratic spacing keeps resample means off a coarse lattice, so
        // distinct seeds cannot collide on the interval bounds by accident.
        let stat = ShiftedMean {
            values: (0..30).map(|i| (i * i) as f64 * 0.01).collect(),
            shift: 0.0,
        };
        let settings = BootstrapSettings {
            resamples: 200,
            seed: 42,
            ..Default::default()
        };
        let a = run_two_way_bootstrap(&stat, &settings).unwrap();
        let b = run_two_way_bootstrap(&stat, &settings).unwrap();
        assert_eq!(a, b);
        let c = run_two_way_bootstrap(
            &stat,
            &BootstrapSettings {
                seed: 43,
                ..settings
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn excessive_drops_are_an_error() {
        let settings = BootstrapSettings {
            resamples: 200,
            seed: 1,
            ..Default::default()
        };
        match run_two_way_bootstrap(&FragileStat, &settings) {
            Err(StatsError::TooManyDropped { dropped, total }) => {
                assert_eq!(total, 200);
                // Participant 0 misses a resample with probability
                // (1 - 1/40)^40, about 36%.
                assert!(dropped > 40, "dropped {dropped}");
            }
            other => panic!("expected drop guard to fire, got {other:?}"),
        }
    }

    #[test]
    fn settings_are_validated() {
        let stat = ShiftedMean {
            values: vec![1.0; 10],
            shift: 0.0,
        };
        for bad in [
            BootstrapSettings {
                resamples: 10,
                ..Default::default()
            },
            BootstrapSettings {
                level: 1.0,
                ..Default::default()
            },
            BootstrapSettings {
                corrections: 0,
                ..Default::default()
            },
            BootstrapSettings {
                max_dropped: 1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                run_two_way_bootstrap(&stat, &bad),
                Err(StatsError::BadData { .. })
            ));
        }
    }
}
