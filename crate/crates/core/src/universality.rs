//! Eigenvector delocalization and the bulk two-point correlation against the sine kernel.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::ensemble::EnsembleSpec;
use crate::error::{invalid, LabError, Result};
use crate::report::{ReportRow, StatReport};
use crate::spectral::{sample_spectrum, semicircle_density, SpectralSample};
use crate::stats::{quantile, quantile_bounds, z_for_level, MeanVar};
use crate::trials::{split_failures, Executor};

/// Default pair-histogram bin width in rescaled units.
pub const DEFAULT_BIN_WIDTH: f64 = 0.25;

/// Quantiles reported by [`deloc_statistic`].
pub const DELOC_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];

const SINE_SERIES_CUTOFF: f64 = 1e-4;

/// `sin(πx)/(πx)`, equal to 1 at 0 and exactly 0 at nonzero integers.
pub fn sine_kernel(x: f64) -> f64 {
    if x.abs() < SINE_SERIES_CUTOFF {
        let t = (PI * x) * (PI * x);
        return 1.0 - t / 6.0 + t * t / 120.0;
    }
    let k = x.round();
    let r = x - k;
    if r == 0.0 {
        return 0.0;
    }
    let s = (PI * r).sin();
    let sin_pi_x = if k.rem_euclid(2.0) == 0.0 { s } else { -s };
    sin_pi_x / (PI * x)
}

/// `1 - S(s)²`, the rescaled two-point density of the sine process.
pub fn sine_two_point(s: f64) -> f64 {
    let k = sine_kernel(s);
    1.0 - k * k
}

/// `‖v‖_p · N^{1/2 - 1/p}`, with `p = ∞` meaning the maximum modulus.
pub fn normalized_lp_norm(v: &[Complex64], p: f64) -> f64 {
    let n = v.len() as f64;
    if p.is_infinite() {
        let max = v.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        return max * n.sqrt();
    }
    let sum: f64 = v.iter().map(|x| x.norm().powf(p)).sum();
    sum.powf(1.0 / p) * n.powf(0.5 - 1.0 / p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelocQuery {
    pub e: f64,
    /// Window half-width in units of `1/N`.
    pub k: f64,
    /// `p > 2`, possibly infinite.
    pub p: f64,
    pub trials: u64,
}

impl DelocQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.e.abs() < 2.0) {
            return Err(invalid(format!("energy must lie in the bulk |E| < 2, got {}", self.e)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(invalid(format!("K must be positive, got {}", self.k)));
        }
        if !(self.p > 2.0) {
            return Err(invalid(format!("p must exceed 2, got {}", self.p)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        Ok(())
    }
}

/// `M_v` of every eigenvector whose eigenvalue lies within `K/N` of `E`.
pub fn deloc_values(s: &SpectralSample, e: f64, k: f64, p: f64) -> Vec<f64> {
    let v = s.eigenvectors.as_ref().expect("eigenvectors required");
    let n = s.n();
    let half = k / n as f64;
    s.eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, mu)| (*mu - e).abs() <= half)
        .map(|(a, _)| {
            let col: Vec<Complex64> = (0..n).map(|i| v[(i, a)]).collect();
            normalized_lp_norm(&col, p)
        })
        .collect()
}

/// Distribution of `M_v` pooled over trials. Rows `deloc_max`, `deloc_mean` and
/// `deloc_q50/q90/q99`; quantile rows carry distribution-free 95% bounds `q_lo`, `q_hi`.
/// Every row carries the baselines `flat_baseline` (= 1) and `coordinate_baseline`.
pub fn deloc_statistic(spec: &EnsembleSpec, q: &DelocQuery, exec: &Executor) -> Result<StatReport> {
    q.validate()?;
    let results = exec.map(q.trials, |t| Ok(deloc_values(&sample_spectrum(spec, t, true)?, q.e, q.k, q.p)));
    let (per_trial, failed) = split_failures(results);
    let empty = per_trial.iter().filter(|v| v.is_empty()).count() as u64;
    let mut pooled: Vec<f64> = per_trial.into_iter().flatten().collect();
    if pooled.is_empty() {
        return Err(LabError::EmptySample("no eigenvalue fell in any window".into()));
    }
    let used = q.trials - failed - empty;
    let mut report = StatReport::new("deloc", q.trials);
    report.failed_trials = failed;
    let n = spec.n();
    let coordinate = if q.p.is_infinite() { (n as f64).sqrt() } else { (n as f64).powf(0.5 - 1.0 / q.p) };
    let acc = MeanVar::from_slice(&pooled);
    pooled.sort_by(f64::total_cmp);
    let row = |statistic: &str, estimate: f64, stderr: f64, extra: Vec<(String, f64)>| ReportRow {
        statistic: statistic.into(),
        e: q.e,
        scale: "micro".into(),
        n,
        k_or_eta: q.k,
        estimate,
        stderr,
        trials: used,
        seed: spec.seed(),
        extra: [
            vec![
                ("p".to_string(), q.p),
                ("vectors".into(), pooled.len() as f64),
                ("skipped_trials".into(), empty as f64),
                ("flat_baseline".into(), 1.0),
                ("coordinate_baseline".into(), coordinate),
            ],
            extra,
        ]
        .concat(),
    };
    report.rows.push(row("deloc_max", *pooled.last().expect("non-empty"), f64::NAN, vec![]));
    report.rows.push(row("deloc_mean", acc.mean, acc.std_err(), vec![]));
    let z = z_for_level(0.95);
    for qq in DELOC_QUANTILES {
        let (lo, hi) = quantile_bounds(&pooled, qq, z);
        let name = format!("deloc_q{}", (qq * 100.0).round());
        report.rows.push(row(&name, quantile(&pooled, qq), f64::NAN, vec![("q_lo".into(), lo), ("q_hi".into(), hi)]));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationQuery {
    pub e: f64,
    /// Bin centers, positive and at most `w`.
    pub s_grid: Vec<f64>,
    /// Half-width of the rescaled window `[-W, W]`.
    pub w: f64,
    pub bin_width: f64,
    pub trials: u64,
}

impl CorrelationQuery {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.e.abs() < 2.0) {
            return Err(invalid(format!("energy must lie in the bulk |E| < 2, got {}", self.e)));
        }
        if !(self.w > 0.0 && self.bin_width > 0.0) {
            return Err(invalid("window half-width and bin width must be positive"));
        }
        if self.s_grid.is_empty() || self.s_grid.iter().any(|&s| !(s > 0.0 && s <= self.w)) {
            return Err(invalid(format!("separations must lie in (0, W] with W = {}", self.w)));
        }
        let reach = self.w / (n as f64 * semicircle_density(self.e));
        if !((self.e - reach) > -2.0 && (self.e + reach) < 2.0) {
            return Err(invalid(format!(
                "window [E - {reach:.4}, E + {reach:.4}] leaves the bulk; reduce W or increase N"
            )));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        Ok(())
    }

    /// `[lo, hi)` of each bin, truncated at zero.
    pub fn bins(&self) -> Vec<(f64, f64)> {
        self.s_grid
            .iter()
            .map(|&s| ((s - self.bin_width / 2.0).max(0.0), s + self.bin_width / 2.0))
            .collect()
    }
}

/// Rescaled positions `Nρ_sc(E)(μ - E)` inside `[-W, W]`, ascending.
pub fn rescaled_window(sorted: &[f64], n: usize, e: f64, w: f64) -> Vec<f64> {
    let scale = n as f64 * semicircle_density(e);
    sorted.iter().map(|mu| scale * (mu - e)).filter(|x| x.abs() <= w).collect()
}

/// Pairs `i > j` with `x_i - x_j ∈ [lo, hi)` per bin; `x` ascending.
pub fn pair_counts(x: &[f64], bins: &[(f64, f64)]) -> Vec<u64> {
    let reach = bins.iter().fold(0.0f64, |m, b| m.max(b.1));
    let mut counts = vec![0u64; bins.len()];
    for i in 0..x.len() {
        for j in (0..i).rev() {
            let s = x[i] - x[j];
            if s >= reach {
                break;
            }
            for (c, &(lo, hi)) in counts.iter_mut().zip(bins) {
                if s >= lo && s < hi {
                    *c += 1;
                }
            }
        }
    }
    counts
}

/// Estimated rescaled two-point density `R₂(s)`: pair counts divided by the trial count
/// and by `∫_bin (2W - s) ds`, the measure of position pairs in the window with separation
/// in the bin. One `R2` row per bin, with `s_bin_center`, `R2_estimate`, `R2_stderr` and
/// `sine_target = 1 - S(s)²`.
pub fn two_point_correlation(spec: &EnsembleSpec, q: &CorrelationQuery, exec: &Executor) -> Result<StatReport> {
    let n = spec.n();
    q.validate(n)?;
    let bins = q.bins();
    let results = exec.map(q.trials, |t| {
        let s = sample_spectrum(spec, t, false)?;
        Ok(pair_counts(&rescaled_window(&s.eigenvalues, n, q.e, q.w), &bins))
    });
    let (counts, failed) = split_failures(results);
    if counts.is_empty() {
        return Err(LabError::EmptySample("every trial failed".into()));
    }
    let mut report = StatReport::new("corr", q.trials);
    report.failed_trials = failed;
    for (b, (&s, &(lo, hi))) in q.s_grid.iter().zip(&bins).enumerate() {
        let measure = (hi - lo) * (2.0 * q.w - (lo + hi) / 2.0);
        let mut acc = MeanVar::default();
        for c in &counts {
            acc.push(c[b] as f64 / measure);
        }
        let target = sine_two_point(s);
        report.rows.push(ReportRow {
            statistic: "R2".into(),
            e: q.e,
            scale: "micro".into(),
            n,
            k_or_eta: s,
            estimate: acc.mean,
            stderr: acc.std_err(),
            trials: acc.count,
            seed: spec.seed(),
            extra: vec![
                ("s_bin_center".into(), s),
                ("R2_estimate".into(), acc.mean),
                ("R2_stderr".into(), acc.std_err()),
                ("sine_target".into(), target),
                ("window_half_width".into(), q.w),
                ("bin_width".into(), hi - lo),
            ],
        });
    }
    Ok(report)
}
