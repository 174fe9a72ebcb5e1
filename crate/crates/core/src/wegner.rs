//! Probability of finding an eigenvalue in a microscopic window, and the tail of the
//! rescaled distance from a bulk energy to the next eigenvalue above it.

use crate::ensemble::EnsembleSpec;
use crate::invmom::check_hypothesis;
use crate::error::{invalid, LabError, Result};
use crate::report::{ReportRow, StatReport};
use crate::spectral::{counting, sample_spectrum, semicircle_density};
use crate::stats::{proportion_std_err, slope_through_origin, weighted_linear_fit, wilson_interval, z_for_level, MeanVar};
use crate::trials::{split_failures, Executor};

/// Smallest dimension for which the window bound is claimed.
pub const WEGNER_MIN_N: usize = 9;

/// Survival bins with fewer exceedances than this are left out of the tail fit.
pub const MIN_FIT_EXCEEDANCES: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerQuery {
    pub e: f64,
    pub kappa: f64,
    pub epsilon_grid: Vec<f64>,
    pub trials: u64,
}

impl WegnerQuery {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.e.abs() <= 2.0 - self.kappa) {
            return Err(invalid(format!(
                "energy {} outside the bulk |E| <= 2 - kappa = {}",
                self.e,
                2.0 - self.kappa
            )));
        }
        if self.epsilon_grid.is_empty() {
            return Err(invalid("epsilon grid is empty"));
        }
        if let Some(eps) = self.epsilon_grid.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(invalid(format!("epsilon must be positive, got {eps}")));
        }
        Ok(())
    }
}

/// Integer tallies of `𝒩_ε = #{μ ∈ [E - ε/2N, E + ε/2N]}` for one ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowTally {
    pub trials: u64,
    /// `#{trials with 𝒩_ε ≥ 1}`.
    pub hits: u64,
    pub sum_count: u64,
    pub sum_count_sq: u64,
}

impl WindowTally {
    /// `1{𝒩 ≥ 1} ≤ 𝒩 ≤ 𝒩²` summed over trials.
    pub fn chain_holds(&self) -> bool {
        self.hits <= self.sum_count && self.sum_count <= self.sum_count_sq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerTallies {
    pub epsilons: Vec<f64>,
    pub tallies: Vec<WindowTally>,
    pub failed_trials: u64,
}

/// Runs the trials and keeps per-ε integer tallies.
pub fn wegner_tallies(spec: &EnsembleSpec, q: &WegnerQuery, exec: &Executor) -> Result<WegnerTallies> {
    q.validate()?;
    let n = spec.n() as f64;
    let results = exec.map(q.trials, |t| {
        let s = sample_spectrum(spec, t, false)?;
        Ok(q.epsilon_grid
            .iter()
            .map(|eps| counting(&s.eigenvalues, q.e - eps / (2.0 * n), q.e + eps / (2.0 * n)) as u64)
            .collect::<Vec<u64>>())
    });
    let (counts, failed) = split_failures(results);
    if counts.is_empty() {
        return Err(LabError::EmptySample("every trial failed".into()));
    }
    let mut tallies = vec![WindowTally::default(); q.epsilon_grid.len()];
    for trial in &counts {
        for (t, &c) in tallies.iter_mut().zip(trial) {
            t.trials += 1;
            t.hits += u64::from(c >= 1);
            t.sum_count += c;
            t.sum_count_sq += c * c;
        }
    }
    Ok(WegnerTallies { epsilons: q.epsilon_grid.clone(), tallies, failed_trials: failed })
}

/// One `wegner` row per ε: estimate `P(𝒩_ε ≥ 1)` with extra columns `wilson_lo`,
/// `wilson_hi`, `ratio` (= P/ε), `ratio_stderr`, `mean_count`, `mean_count_stderr`,
/// `mean_count_sq`, `chain_holds`. Summary: `slope` (through the origin), `ratio_min`,
/// `ratio_max`, `chain_holds`.
pub fn wegner_probability(spec: &EnsembleSpec, q: &WegnerQuery, exec: &Executor) -> Result<StatReport> {
    let tallies = wegner_tallies(spec, q, exec)?;
    let mut report = StatReport::new("wegner", q.trials);
    report.failed_trials = tallies.failed_trials;
    if spec.n() < WEGNER_MIN_N {
        report.flags.push(format!(
            "N = {} is below {WEGNER_MIN_N}; the window bound is not claimed in this dimension",
            spec.n()
        ));
    }
    for law in [spec.offdiag(), spec.diag()] {
        if let Err(e) = check_hypothesis(law) {
            report.flags.push(format!("{e}; estimates are computed but the window bound is not claimed"));
        }
    }
    let z = z_for_level(0.95);
    let mut ratios = Vec::new();
    let mut probabilities = Vec::new();
    let mut all_chains = true;
    for (&eps, t) in tallies.epsilons.iter().zip(&tallies.tallies) {
        let p = t.hits as f64 / t.trials as f64;
        let se = proportion_std_err(t.hits, t.trials);
        let (lo, hi) = wilson_interval(t.hits, t.trials, z);
        let nf = t.trials as f64;
        let mean_count = t.sum_count as f64 / nf;
        let mean_sq = t.sum_count_sq as f64 / nf;
        let count_var = if t.trials > 1 {
            ((mean_sq - mean_count * mean_count) * nf / (nf - 1.0)).max(0.0)
        } else {
            f64::NAN
        };
        all_chains &= t.chain_holds();
        ratios.push(p / eps);
        probabilities.push(p);
        report.rows.push(ReportRow {
            statistic: "wegner".into(),
            e: q.e,
            scale: "micro".into(),
            n: spec.n(),
            k_or_eta: eps,
            estimate: p,
            stderr: se,
            trials: t.trials,
            seed: spec.seed(),
            extra: vec![
                ("wilson_lo".into(), lo),
                ("wilson_hi".into(), hi),
                ("ratio".into(), p / eps),
                ("ratio_stderr".into(), se / eps),
                ("mean_count".into(), mean_count),
                ("mean_count_stderr".into(), (count_var / nf).sqrt()),
                ("mean_count_sq".into(), mean_sq),
                ("chain_holds".into(), f64::from(u8::from(t.chain_holds()))),
                ("rho_sc".into(), semicircle_density(q.e)),
            ],
        });
    }
    report.summary.insert("slope".into(), slope_through_origin(&tallies.epsilons, &probabilities));
    report.summary.insert("ratio_min".into(), ratios.iter().copied().fold(f64::INFINITY, f64::min));
    report.summary.insert("ratio_max".into(), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    report.summary.insert("chain_holds".into(), f64::from(u8::from(all_chains)));
    Ok(report)
}

/// Rescaled distances `Δ = N(μ_{α+1} - E)` from `E` to the first eigenvalue above it,
/// where `μ_α` is the largest eigenvalue strictly below `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStatistic {
    pub e: f64,
    pub delta_samples: Vec<f64>,
    /// Trials with no eigenvalue below `E` or none at or above it.
    pub censored_count: u64,
    pub failed_trials: u64,
}

/// `N(μ_{α+1} - E)` for a sorted spectrum, `None` when `α` is undefined or equals `N`.
pub fn gap_above(sorted: &[f64], e: f64) -> Option<f64> {
    let below = sorted.partition_point(|&x| x < e);
    if below == 0 || below == sorted.len() {
        return None;
    }
    Some(sorted.len() as f64 * (sorted[below] - e))
}

pub(crate) fn validate_k_grid(k_grid: &[f64]) -> Result<()> {
    if k_grid.is_empty() {
        return Err(invalid("K grid is empty"));
    }
    if k_grid.iter().any(|&k| !(k > 0.0 && k.is_finite())) || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("K grid must be positive and strictly increasing"));
    }
    Ok(())
}

pub fn gap_statistic(spec: &EnsembleSpec, e: f64, trials: u64, exec: &Executor) -> Result<GapStatistic> {
    if !(e.abs() < 2.0) {
        return Err(invalid(format!("energy must lie in the bulk |E| < 2, got {e}")));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let results = exec.map(trials, |t| Ok(gap_above(&sample_spectrum(spec, t, false)?.eigenvalues, e)));
    let (gaps, failed) = split_failures(results);
    let censored_count = gaps.iter().filter(|g| g.is_none()).count() as u64;
    let delta_samples: Vec<f64> = gaps.into_iter().flatten().collect();
    if delta_samples.is_empty() {
        return Err(LabError::EmptySample("every trial was censored".into()));
    }
    Ok(GapStatistic { e, delta_samples, censored_count, failed_trials: failed })
}

/// Survival rows and the tail fit `(a, b, se_a, se_b, points)`.
pub(crate) struct Survival {
    pub rows: Vec<ReportRow>,
    pub fit: Option<(f64, f64, f64, f64, usize)>,
}

/// Survival rows `P(X ≥ K)` for each K, plus the fit `log P ≈ a - b √K` over bins with at
/// least [`MIN_FIT_EXCEEDANCES`] exceedances, weighted by the binomial variance of `log P̂`.
pub(crate) fn survival_rows(
    samples: &[f64],
    denominator: u64,
    k_grid: &[f64],
    template: &ReportRow,
) -> Survival {
    let z = z_for_level(0.95);
    let mut rows = Vec::new();
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for &k in k_grid {
        let hits = samples.iter().filter(|&&d| d >= k).count() as u64;
        let p = hits as f64 / denominator as f64;
        let (lo, hi) = wilson_interval(hits, denominator, z);
        if hits >= MIN_FIT_EXCEEDANCES && hits < denominator {
            xs.push(k.sqrt());
            ys.push(p.ln());
            ws.push(denominator as f64 * p / (1.0 - p));
        }
        let mut row = template.clone();
        row.k_or_eta = k;
        row.estimate = p;
        row.stderr = proportion_std_err(hits, denominator);
        row.trials = denominator;
        row.extra.splice(
            0..0,
            [("exceedances".to_string(), hits as f64), ("wilson_lo".into(), lo), ("wilson_hi".into(), hi)],
        );
        rows.push(row);
    }
    let fit = weighted_linear_fit(&xs, &ys, &ws)
        .map(|f| (f.intercept, -f.slope, f.intercept_se, f.slope_se, xs.len()));
    Survival { rows, fit }
}

pub(crate) fn insert_fit(report: &mut StatReport, fit: Option<(f64, f64, f64, f64, usize)>, what: &str) {
    match fit {
        Some((a, b, a_se, b_se, points)) => {
            report.summary.insert("fit_a".into(), a);
            report.summary.insert("fit_b".into(), b);
            report.summary.insert("fit_a_stderr".into(), a_se);
            report.summary.insert("fit_b_stderr".into(), b_se);
            report.summary.insert("fit_b_lower95".into(), b - z_for_level(0.95) * b_se);
            report.summary.insert("fit_points".into(), points as f64);
        }
        None => report.flags.push(format!(
            "{what}: fewer than two K values with at least {MIN_FIT_EXCEEDANCES} exceedances; no tail fit"
        )),
    }
}

/// Empirical survival of `Δ` over `k_grid` (statistic `gap_survival`) and the
/// stretched-exponential tail fit. Summary also carries `censored_fraction`.
pub fn gap_tail(
    spec: &EnsembleSpec,
    e: f64,
    k_grid: &[f64],
    trials: u64,
    exec: &Executor,
) -> Result<StatReport> {
    validate_k_grid(k_grid)?;
    let g = gap_statistic(spec, e, trials, exec)?;
    let mut report = StatReport::new("gaps", trials);
    report.failed_trials = g.failed_trials;
    let template = ReportRow {
        statistic: "gap_survival".into(),
        e,
        scale: "micro".into(),
        n: spec.n(),
        k_or_eta: 0.0,
        estimate: 0.0,
        stderr: 0.0,
        trials: 0,
        seed: spec.seed(),
        extra: vec![("censored".into(), g.censored_count as f64)],
    };
    let survival = survival_rows(&g.delta_samples, g.delta_samples.len() as u64, k_grid, &template);
    report.rows = survival.rows;
    insert_fit(&mut report, survival.fit, "gap tail");
    let valid = (g.delta_samples.len() as u64 + g.censored_count) as f64;
    report.summary.insert("censored_fraction".into(), g.censored_count as f64 / valid);
    report.summary.insert(
        "mean_delta".into(),
        MeanVar::from_slice(&g.delta_samples).mean,
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn query(eps: Vec<f64>, trials: u64) -> WegnerQuery {
        WegnerQuery { e: 0.0, kappa: 0.5, epsilon_grid: eps, trials }
    }

    #[test]
    fn rejects_bad_queries() {
        let spec = EnsembleSpec::gue(20, 1).unwrap();
        let exec = Executor::serial();
        assert!(wegner_probability(&spec, &query(vec![0.1], 0), &exec).is_err());
        assert!(wegner_probability(&spec, &query(vec![0.1, 0.0], 10), &exec).is_err());
        assert!(wegner_probability(&spec, &query(vec![-0.1], 10), &exec).is_err());
        let far = WegnerQuery { e: 1.8, ..query(vec![0.1], 10) };
        assert!(wegner_probability(&spec, &far, &exec).is_err());
    }

    #[test]
    fn small_dimension_is_flagged_but_computed() {
        let spec = EnsembleSpec::gue(5, 1).unwrap();
        let r = wegner_probability(&spec, &query(vec![0.5], 50), &Executor::serial()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.flags.len(), 1);
        let spec = EnsembleSpec::gue(9, 1).unwrap();
        let r = wegner_probability(&spec, &query(vec![0.5], 50), &Executor::serial()).unwrap();
        assert!(r.flags.is_empty());
    }

    #[test]
    fn entry_laws_without_density_are_flagged() {
        let bern: crate::distributions::EntryDistribution = "bernoulli:0.5".parse().unwrap();
        let spec = EnsembleSpec::with_default_diagonal(20, bern, 1).unwrap();
        let r = wegner_probability(&spec, &query(vec![0.5], 50), &Executor::serial()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.flags.iter().any(|f| f.contains("has no density")), "{:?}", r.flags);
    }

    #[test]
    fn tallies_obey_the_chain_and_nesting() {
        let spec = EnsembleSpec::gue(30, 4).unwrap();
        let eps = vec![0.5, 1.0, 4.0, 40.0];
        let t = wegner_tallies(&spec, &query(eps, 300), &Executor::serial()).unwrap();
        for w in t.tallies.windows(2) {
            // nested windows: exact, trial by trial
            assert!(w[0].hits <= w[1].hits && w[0].sum_count <= w[1].sum_count);
        }
        assert!(t.tallies.iter().all(WindowTally::chain_holds));
        // a window of width 40/N = 4/3 around 0 holds many eigenvalues
        assert!(t.tallies[3].sum_count > t.tallies[3].hits);
    }

    #[test]
    fn gap_above_examples() {
        assert_eq!(gap_above(&[-1.0, 0.5, 2.0], 0.0), Some(1.5));
        assert_eq!(gap_above(&[0.5, 2.0], 0.0), None);
        assert_eq!(gap_above(&[-0.5, -0.2], 0.0), None);
        // an eigenvalue exactly at E belongs above it
        assert_eq!(gap_above(&[-1.0, 0.0, 1.0], 0.0), Some(0.0));
    }

    proptest! {
        #[test]
        fn gap_is_nonnegative(mut xs in prop::collection::vec(-2.0f64..2.0, 2..40), e in -1.5f64..1.5) {
            xs.sort_by(f64::total_cmp);
            if let Some(d) = gap_above(&xs, e) {
                prop_assert!(d >= 0.0);
            }
        }
    }

    #[test]
    fn gap_survival_starts_at_one_and_decreases() {
        let spec = EnsembleSpec::gue(60, 8).unwrap();
        let r = gap_tail(&spec, 0.0, &[1e-9, 0.5, 1.0, 2.0, 4.0], 400, &Executor::serial()).unwrap();
        let p: Vec<f64> = r.rows.iter().map(|x| x.estimate).collect();
        assert_eq!(p[0], 1.0);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
        assert!(gap_tail(&spec, 0.0, &[2.0, 1.0], 10, &Executor::serial()).is_err());
        assert!(gap_tail(&spec, 2.5, &[1.0], 10, &Executor::serial()).is_err());
    }

    #[test]
    fn survival_fit_recovers_a_planted_tail() {
        // Δ = (log(1/U))², so P(Δ ≥ K) = exp(-√K): a = 0, b = 1
        let samples: Vec<f64> = (0..200_000)
            .map(|i| {
                let u = (i as f64 + 0.5) / 200_000.0;
                (-u.ln()).powi(2)
            })
            .collect();
        let template = ReportRow {
            statistic: "s".into(),
            e: 0.0,
            scale: "micro".into(),
            n: 1,
            k_or_eta: 0.0,
            estimate: 0.0,
            stderr: 0.0,
            trials: 0,
            seed: 0,
            extra: vec![],
        };
        let s = survival_rows(&samples, samples.len() as u64, &[1.0, 4.0, 9.0, 16.0], &template);
        let (a, b, _, _, points) = s.fit.unwrap();
        assert_eq!(points, 4);
        assert!(a.abs() < 1e-3 && (b - 1.0).abs() < 1e-3, "a={a} b={b}");
    }
}
