//! Histogram check of sampled 2 × 2 GUE spectra against the exact joint eigenvalue density.

use rand::Rng;

use crate::ensemble::{gue_log_joint_density, EnsembleSpec};
use crate::error::{invalid, LabError, Result};
use crate::quadrature::gauss_legendre;
use crate::report::{ReportRow, StatReport};
use crate::rng::{Domain, TrialStream};
use crate::spectral::sample_spectrum;
use crate::stats::chi_square_gof;
use crate::trials::Executor;

const BATCH: u64 = 4096;
const CELL_NODES: usize = 8;
/// Cells with a smaller expected count are pooled before the χ² statistic is formed.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GueHistogramQuery {
    /// Cells per axis.
    pub grid: usize,
    /// The grid covers `[-L, L]²`; everything outside is one extra cell.
    pub half_width: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Probability of each grid cell (row-major, first eigenvalue along rows) under the
/// symmetric joint density, followed by the outside cell.
pub fn cell_probabilities(grid: usize, half_width: f64) -> Result<Vec<f64>> {
    let (x, w) = gauss_legendre(CELL_NODES);
    let h = 2.0 * half_width / grid as f64;
    let mut probs = Vec::with_capacity(grid * grid + 1);
    for a in 0..grid {
        let xa = -half_width + a as f64 * h;
        for b in 0..grid {
            let yb = -half_width + b as f64 * h;
            let mut sum = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                for (yj, wj) in x.iter().zip(&w) {
                    let u = xa + 0.5 * h * (xi + 1.0);
                    let v = yb + 0.5 * h * (yj + 1.0);
                    sum += wi * wj * gue_log_joint_density(&[u, v])?.value.exp();
                }
            }
            probs.push(sum * 0.25 * h * h);
        }
    }
    let inside: f64 = probs.iter().sum();
    probs.push((1.0 - inside).max(0.0));
    Ok(probs)
}

fn cell_of(x: f64, y: f64, grid: usize, half_width: f64) -> usize {
    let h = 2.0 * half_width / grid as f64;
    let ix = ((x + half_width) / h).floor();
    let iy = ((y + half_width) / h).floor();
    if ix >= 0.0 && iy >= 0.0 && (ix as usize) < grid && (iy as usize) < grid {
        ix as usize * grid + iy as usize
    } else {
        grid * grid
    }
}

/// Samples 2 × 2 GUE matrices, lists each spectrum in a uniformly random order (so the
/// pair follows the symmetric density) and runs Pearson's χ² test on the grid counts.
/// One `gue_chi2` row whose estimate is the p-value.
pub fn gue_histogram_test(q: &GueHistogramQuery, exec: &Executor) -> Result<StatReport> {
    if q.grid == 0 || !(q.half_width > 0.0) || q.samples == 0 {
        return Err(invalid("grid, half-width and samples must be positive"));
    }
    let spec = EnsembleSpec::gue(2, q.seed)?;
    let cells = q.grid * q.grid + 1;
    let parts = exec.map(q.samples.div_ceil(BATCH), |i| {
        let mut counts = vec![0u64; cells];
        let mut failed = 0u64;
        for t in i * BATCH..((i + 1) * BATCH).min(q.samples) {
            let Ok(s) = sample_spectrum(&spec, t, false) else {
                failed += 1;
                continue;
            };
            let swap = TrialStream::new(q.seed, Domain::Auxiliary, t).sequential().random::<bool>();
            let (x, y) = if swap {
                (s.eigenvalues[1], s.eigenvalues[0])
            } else {
                (s.eigenvalues[0], s.eigenvalues[1])
            };
            counts[cell_of(x, y, q.grid, q.half_width)] += 1;
        }
        (counts, failed)
    });
    let mut observed = vec![0u64; cells];
    let mut failed = 0;
    for (c, f) in &parts {
        observed.iter_mut().zip(c).for_each(|(o, x)| *o += x);
        failed += f;
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(LabError::EmptySample("every sample failed".into()));
    }
    let expected: Vec<f64> = cell_probabilities(q.grid, q.half_width)?
        .into_iter()
        .map(|p| p * total as f64)
        .collect();
    let outcome = chi_square_gof(&observed, &expected, MIN_EXPECTED);
    let mut report = StatReport::new("gue-oracle", q.samples);
    report.failed_trials = failed;
    report.rows.push(ReportRow {
        statistic: "gue_chi2".into(),
        e: f64::NAN,
        scale: "joint".into(),
        n: 2,
        k_or_eta: q.grid as f64,
        estimate: outcome.p_value,
        stderr: f64::NAN,
        trials: total,
        seed: q.seed,
        extra: vec![
            ("chi2".into(), outcome.statistic),
            ("dof".into(), outcome.dof),
            ("half_width".into(), q.half_width),
        ],
    });
    report.summary.insert("chi2".into(), outcome.statistic);
    report.summary.insert("dof".into(), outcome.dof);
    report.summary.insert("p_value".into(), outcome.p_value);
    Ok(report)
}
