//! Descriptive statistics and correlation with Fisher-z intervals.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::stats::StatsError;

/// Basic descriptives; `sd` uses the n-1 denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Compute descriptives over at least two values.
pub fn describe(values: &[f64]) -> Result<Descriptives, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData {
            detail: format!("{} values, need at least 2 for a sample sd", values.len()),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::BadData {
            detail: "non-finite value in descriptives input".into(),
        });
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Descriptives { n, mean, sd, min, max })
}

/// Normal-approximation confidence interval for a mean: `mean +/- z * sd / sqrt(n)`.
pub fn normal_ci(mean: f64, sd: f64, n: usize, level: f64) -> (f64, f64) {
    let z = Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = z * sd / (n as f64).sqrt();
    (mean - half, mean + half)
}

/// Pearson correlation with a Fisher-z confidence interval and normal-theory
/// two-sided p-value against zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonFit {
    pub r: f64,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub p: f64,
}

/// Correlate two equal-length series (at least 4 points each). A perfect
/// correlation yields the degenerate interval `[r, r]` with `p = 0`.
pub fn pearson_ci(x: &[f64], y: &[f64], level: f64) -> Result<PearsonFit, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::BadData {
            detail: format!("length mismatch: {} vs {}", x.len(), y.len()),
        });
    }
    let n = x.len();
    if n < 4 {
        return Err(StatsError::InsufficientData {
            detail: format!("{n} points, need at least 4 for a Fisher-z interval"),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadData {
            detail: format!("confidence level {level} outside (0, 1)"),
        });
    }
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxy += (x[i] - xm) * (y[i] - ym);
        sxx += (x[i] - xm) * (x[i] - xm);
        syy += (y[i] - ym) * (y[i] - ym);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(StatsError::DegenerateDesign {
            detail: "a series is constant; correlation undefined".into(),
        });
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if (1.0 - r.abs()) < 1e-12 {
        return Ok(PearsonFit { r, n, lo: r, hi: r, p: 0.0 });
    }
    let z = r.atanh();
    let se = 1.0 / ((n as f64) - 3.0).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let crit = unit.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let lo = (z - crit * se).tanh();
    let hi = (z + crit * se).tanh();
    let p = 2.0 * unit.cdf(-(z.abs() / se));
    Ok(PearsonFit { r, n, lo, hi, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal as GaussDist};

    #[test]
    fn descriptives_match_hand_computation() {
        // Sum of squared deviations from the mean (5) is 32, so the sample
        // variance is 32/7.
        let d = describe(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(d.n, 8);
        assert!((d.mean - 5.0).abs() < 1e-12);
        assert!((d.sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(d.min, 2.0);
        assert_eq!(d.max, 9.0);
    }

    #[test]
    fn descriptives_reject_degenerate_input() {
        assert!(matches!(
            describe(&[1.0]),
            Err(StatsError::InsufficientData { .. })
        ));
        assert!(matches!(
            describe(&[1.0, f64::NAN]),
            Err(StatsError::BadData { .. })
        ));
    }

    #[test]
    fn normal_ci_is_symmetric_and_shrinks_with_n() {
        let (lo, hi) = normal_ci(10.0, 2.0, 100, 0.95);
        assert!((10.0 - lo - (hi - 10.0)).abs() < 1e-12);
        // z_{0.975} = 1.95996, so the half-width is 1.95996 * 2 / 10.
        assert!((hi - 10.0 - 0.391993).abs() < 1e-4);
        let (lo4, hi4) = normal_ci(10.0, 2.0, 400, 0.95);
        assert!(hi4 - lo4 < hi - lo);
    }

    /// Hand-computed oracle: x = (1..5), y = (2,1,4,3,5) gives r = 8/10.
    /// Fisher z = atanh(0.8) = ln(3), se = 1/sqrt(2), so at the 95% level
    /// the interval is tanh(ln 3 -/+ 1.95996/sqrt(2)) = (-0.2873, 0.9862)
    /// and p = 2 * Phi(-ln(3) * sqrt(2)) = 0.1203.
    #[test]
    fn pearson_matches_hand_computation() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        let fit = pearson_ci(&x, &y, 0.95).unwrap();
        assert!((fit.r - 0.8).abs() < 1e-12);
        assert!((fit.lo + 0.2796).abs() < 5e-4, "lo {}", fit.lo);
        assert!((fit.hi - 0.9862).abs() < 5e-4, "hi {}", fit.hi);
        assert!((fit.p - 0.1203).abs() < 5e-4, "p {}", fit.p);
    }

    #[test]
    fn perfect_correlation_degenerates() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let fit = pearson_ci(&x, &x, 0.95).unwrap();
        assert_eq!(fit.r, 1.0);
        assert_eq!((fit.lo, fit.hi), (1.0, 1.0));
        assert_eq!(fit.p, 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let fit = pearson_ci(&x, &neg, 0.95).unwrap();
        assert_eq!(fit.r, -1.0);
        assert_eq!((fit.lo, fit.hi), (-1.0, -1.0));
    }

    #[test]
    fn pearson_rejects_bad_input() {
        assert!(matches!(
            pearson_ci(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.95),
            Err(StatsError::InsufficientData { .. })
        ));
        assert!(matches!(
            pearson_ci(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0], 0.95),
            Err(StatsError::DegenerateDesign { .. })
        ));
        assert!(matches!(
            pearson_ci(&[1.0, 2.0], &[1.0, 2.0, 3.0], 0.95),
            Err(StatsError::BadData { .. })
        ));
    }

    /// Monte Carlo coverage: for bivariate-normal data with rho = 0.5 and
    /// n = 100, the 95% interval should cover the true value in roughly 95%
    /// of replicates (checked within +/- 2 percentage points).
    #[test]
    fn fisher_interval_has_nominal_coverage() {
        let rho: f64 = 0.5;
        let gauss = GaussDist::new(0.0, 1.0).unwrap();
        let mut covered = 0;
        let replicates = 1000;
        for rep in 0..replicates {
            let mut rng = crate::seed::rng(20_260_101, &[rep]);
            let mut x = Vec::with_capacity(100);
            let mut y = Vec::with_capacity(100);
            for _ in 0..100 {
                let a: f64 = gauss.sample(&mut rng);
                let b: f64 = gauss.sample(&mut rng);
                x.push(a);
                y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
            }
            let fit = pearson_ci(&x, &y, 0.95).unwrap();
            if fit.lo <= rho && rho <= fit.hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / replicates as f64;
        assert!(
            (coverage - 0.95).abs() <= 0.02,
            "coverage {coverage} outside 0.95 +/- 0.02"
        );
    }
}
