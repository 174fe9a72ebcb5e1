//! Small statistics toolkit: order-stable accumulators, binomial intervals, goodness-of-fit
//! tests and least-squares fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Running mean and second central moment (Welford), mergeable with Chan's update.
///
/// Merging in a fixed order gives bit-identical results independent of how the data
/// was split across workers, as long as the split points are fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn from_slice(xs: &[f64]) -> MeanVar {
        let mut acc = MeanVar::default();
        for &x in xs {
            acc.push(x);
        }
        acc
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Pairwise summation in the given order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Two-sided standard normal quantile for confidence level `level` (e.g. 0.95 → 1.96).
pub fn z_for_level(level: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error of a binomial proportion estimate.
pub fn proportion_std_err(successes: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

/// Whether two estimates agree within `k` combined standard errors.
pub fn agree_within(a: f64, se_a: f64, b: f64, se_b: f64, k: f64) -> bool {
    (a - b).abs() <= k * (se_a * se_a + se_b * se_b).sqrt()
}

/// Result of a hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: f64,
}

/// Asymptotic Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the Stephens small-sample correction.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    TestOutcome { statistic: d, p_value: kolmogorov_q(lambda), dof: na + nb }
}

/// Pearson χ² goodness of fit. Cells whose expected count is below `min_expected` are
/// pooled into one cell. `expected` must sum to the same total as `observed`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], min_expected: f64) -> TestOutcome {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < min_expected {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let dof = (cells.max(2) - 1) as f64;
    let chi = ChiSquared::new(dof).expect("positive dof");
    TestOutcome { statistic: stat, p_value: chi.sf(stat), dof }
}

/// Least-squares slope of `y = slope · x` through the origin.
pub fn slope_through_origin(x: &[f64], y: &[f64]) -> f64 {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    sxy / sxx
}

/// Weighted linear fit `y ≈ intercept + slope · x` with parameter standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

/// Weighted least squares with known per-point variances (`weights = 1/variance`).
/// Needs at least two distinct `x`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], weights: &[f64]) -> Option<LinearFit> {
    if x.len() < 2 || x.len() != y.len() || x.len() != weights.len() {
        return None;
    }
    let s: f64 = weights.iter().sum();
    let sx: f64 = weights.iter().zip(x).map(|(w, a)| w * a).sum();
    let sy: f64 = weights.iter().zip(y).map(|(w, b)| w * b).sum();
    let sxx: f64 = weights.iter().zip(x).map(|(w, a)| w * a * a).sum();
    let sxy: f64 = weights.iter().zip(x.iter().zip(y)).map(|(w, (a, b))| w * a * b).sum();
    let det = s * sxx - sx * sx;
    if det.abs() <= f64::EPSILON * s * sxx {
        return None;
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Some(LinearFit {
        intercept,
        slope,
        intercept_se: (sxx / det).sqrt(),
        slope_se: (s / det).sqrt(),
    })
}

/// Empirical quantile by linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distribution-free confidence bounds for the `q`-quantile from order statistics:
/// ranks `n q ∓ z √(n q (1-q))`, clamped to the sample.
pub fn quantile_bounds(sorted: &[f64], q: f64, z: f64) -> (f64, f64) {
    assert!(!sorted.is_empty());
    let n = sorted.len() as f64;
    let spread = z * (n * q * (1.0 - q)).sqrt();
    let lo = ((n * q - spread).floor().max(1.0) as usize).min(sorted.len()) - 1;
    let hi = ((n * q + spread).ceil().max(1.0) as usize).min(sorted.len()) - 1;
    (sorted[lo], sorted[hi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn merged_accumulators_match_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..200), split in 0usize..200) {
            let split = split.min(xs.len());
            let mut left = MeanVar::from_slice(&xs[..split]);
            let right = MeanVar::from_slice(&xs[split..]);
            left.merge(&right);
            let all = MeanVar::from_slice(&xs);
            prop_assert_eq!(left.count, all.count);
            prop_assert!((left.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
            prop_assert!((left.m2 - all.m2).abs() <= 1e-7 * (1.0 + all.m2.abs()));
        }

        #[test]
        fn wilson_contains_point_estimate(k in 0u64..1000, extra in 0u64..1000) {
            let n = k + extra + 1;
            let (lo, hi) = wilson_interval(k, n, 1.96);
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn wilson_known_value() {
        // 10 successes of 100 at z = 1.96: (0.0552, 0.1744).
        let (lo, hi) = wilson_interval(10, 100, 1.96);
        assert!((lo - 0.05523).abs() < 1e-4 && (hi - 0.17437).abs() < 1e-4);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| f64::from(i) / 500.0).collect();
        assert!(ks_two_sample(&a, &a).p_value > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let obs = [10, 20, 30, 40];
        let exp = [10.0, 20.0, 30.0, 40.0];
        let t = chi_square_gof(&obs, &exp, 5.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 3.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 - 2.0 * v).collect();
        let fit = weighted_linear_fit(&x, &y, &[1.0; 4]).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12 && (fit.intercept - 0.5).abs() < 1e-12);
        assert!(weighted_linear_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn quantiles() {
        let xs: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile(&xs, 0.99), 99.0);
        let (lo, hi) = quantile_bounds(&xs, 0.5, 2.0);
        assert!(lo < 50.0 && hi > 50.0);
    }
}
