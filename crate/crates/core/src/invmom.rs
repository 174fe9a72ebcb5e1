//! Inverse moments `E (Σ_{j≤m} |b·u_j|²)^{-r}` of a random vector `b` with iid complex
//! coordinates against an orthonormal frame `u_1, …, u_m`.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::{EntryDistribution, ScoreIntegral};
use crate::error::{invalid, LabError, Result};
use crate::report::{ReportRow, StatReport};
use crate::rng::{Domain, TrialStream};
use crate::stats::MeanVar;
use crate::trials::Executor;

/// Samples per deterministic batch.
pub const BATCH_SIZE: u64 = 4096;

const ORTHONORMALITY_TOL: f64 = 1e-12;

/// `Γ(m - r)/Γ(m) = 1/((m-1)(m-2)⋯(m-r))`: the inverse moment for complex Gaussian
/// coordinates with `E|b_i|² = 1`, where the sum of `m` overlaps is Gamma(m, 1).
pub fn gaussian_oracle(m: usize, r: u32) -> Result<f64> {
    if r == 0 || m <= r as usize {
        return Err(invalid(format!("need m > r >= 1, got m = {m}, r = {r}")));
    }
    Ok(1.0 / (1..=r as usize).map(|i| (m - i) as f64).product::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameRule {
    StandardBasis,
    /// Modified Gram–Schmidt, left to right, of iid complex Gaussian columns drawn from
    /// the frame stream `(seed, dimension)`.
    RandomOrthonormal { seed: u64 },
    /// The first `m` rows of the unitary DFT matrix, `u_j(k) = e^{-2πi jk/d}/√d`.
    FourierRows,
    /// Caller-supplied columns; the dimension must match.
    Explicit(Mat<Complex64>),
}

impl FrameRule {
    pub fn label(&self) -> &'static str {
        match self {
            FrameRule::StandardBasis => "standard_basis",
            FrameRule::RandomOrthonormal { .. } => "random_orthonormal",
            FrameRule::FourierRows => "fourier_rows",
            FrameRule::Explicit(_) => "explicit",
        }
    }

    /// Builds `m` orthonormal vectors in dimension `d`.
    pub fn build(&self, d: usize, m: usize) -> Result<Frame> {
        if m == 0 || m > d {
            return Err(invalid(format!("cannot build {m} orthonormal vectors in dimension {d}")));
        }
        let columns: Vec<Vec<Complex64>> = match self {
            FrameRule::StandardBasis => (0..m)
                .map(|j| (0..d).map(|k| Complex64::new(f64::from(u8::from(j == k)), 0.0)).collect())
                .collect(),
            FrameRule::FourierRows => {
                let norm = 1.0 / (d as f64).sqrt();
                (0..m)
                    .map(|j| {
                        (0..d)
                            .map(|k| {
                                // reduce jk mod d before scaling to keep the phase accurate
                                let phase = -2.0 * PI * ((j * k) % d) as f64 / d as f64;
                                Complex64::from_polar(norm, phase)
                            })
                            .collect()
                    })
                    .collect()
            }
            FrameRule::RandomOrthonormal { seed } => {
                let mut stream = TrialStream::new(*seed, Domain::Frame, d as u64);
                let rng = stream.sequential();
                let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(m);
                for _ in 0..m {
                    let mut v: Vec<Complex64> = (0..d)
                        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                        .collect();
                    for u in &cols {
                        let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                        for (x, a) in v.iter_mut().zip(u) {
                            *x -= proj * a;
                        }
                    }
                    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= norm);
                    cols.push(v);
                }
                cols
            }
            FrameRule::Explicit(mat) => {
                if mat.nrows() != d || mat.ncols() < m {
                    return Err(invalid(format!(
                        "explicit frame is {}x{}, need {d} rows and at least {m} columns",
                        mat.nrows(),
                        mat.ncols()
                    )));
                }
                (0..m).map(|j| (0..d).map(|k| mat[(k, j)]).collect()).collect()
            }
        };
        Frame::new(columns)
    }
}

/// Orthonormal columns, stored densely up to the last row any column touches.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: Vec<Vec<Complex64>>,
    dim: usize,
    support: usize,
}

impl Frame {
    pub fn new(columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        if dim == 0 || columns.iter().any(|c| c.len() != dim) {
            return Err(invalid("frame columns must be non-empty and of equal length"));
        }
        let worst = orthonormality_error(&columns);
        if worst > ORTHONORMALITY_TOL {
            return Err(invalid(format!("frame is not orthonormal (deviation {worst:e})")));
        }
        let support = columns
            .iter()
            .filter_map(|c| c.iter().rposition(|x| *x != Complex64::new(0.0, 0.0)))
            .max()
            .map_or(0, |i| i + 1);
        let columns = columns.into_iter().map(|mut c| {
            c.truncate(support);
            c
        });
        Ok(Frame { columns: columns.collect(), dim, support })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Coordinates of `b` beyond this index never enter an overlap.
    pub fn support(&self) -> usize {
        self.support
    }

    /// `|b · u_j|²` for each column.
    pub fn overlaps(&self, b: &[Complex64], out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(&self.columns) {
            let dot: Complex64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            *o = dot.norm_sqr();
        }
    }
}

/// `max |⟨u_i, u_j⟩ - δ_ij|`.
pub fn orthonormality_error(columns: &[Vec<Complex64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in columns.iter().enumerate() {
        for (j, b) in columns.iter().enumerate().skip(i) {
            let g: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
    }
    worst
}

/// Refuses laws outside the regularity class: they need a density, a finite fourth power
/// score integral and a finite fourth moment.
pub fn check_hypothesis(law: &EntryDistribution) -> Result<()> {
    if !law.has_density() {
        return Err(LabError::NoDensity(law.to_string()));
    }
    match law.score_integral(4)? {
        ScoreIntegral::Finite(_) => {}
        ScoreIntegral::Divergent => {
            return Err(LabError::HypothesisFailed {
                law: law.to_string(),
                reason: "the fourth power score integral diverges".into(),
            })
        }
    }
    let m4 = law.fourth_moment()?;
    if !m4.is_finite() {
        return Err(LabError::HypothesisFailed { law: law.to_string(), reason: "infinite fourth moment".into() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseMomentQuery {
    /// Full dimensions; vectors live in dimension `N - 1`.
    pub n_grid: Vec<usize>,
    /// `(m, r)` pairs, `r ∈ {1, 2}`, `m > r`.
    pub pairs: Vec<(usize, u32)>,
    pub frame: FrameRule,
    /// Law of the real and imaginary parts of each coordinate.
    pub law: EntryDistribution,
    pub samples: u64,
    pub seed: u64,
}

impl InverseMomentQuery {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples must be at least 1"));
        }
        if self.n_grid.is_empty() || self.pairs.is_empty() {
            return Err(invalid("dimension grid and (m, r) pairs must be non-empty"));
        }
        let max_m = self.pairs.iter().map(|p| p.0).max().unwrap_or(0);
        for &(m, r) in &self.pairs {
            if r != 1 && r != 2 {
                return Err(invalid(format!("r must be 1 or 2, got {r}")));
            }
            if m <= r as usize {
                return Err(invalid(format!("need m > r, got m = {m}, r = {r}")));
            }
        }
        for &n in &self.n_grid {
            if n < 2 || max_m > n - 1 {
                return Err(invalid(format!("need 2 <= N and m <= N - 1, got N = {n}, m = {max_m}")));
            }
        }
        Ok(())
    }
}

/// Per-pair accumulators over one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseMomentEstimate {
    pub n: usize,
    pub pairs: Vec<(usize, u32)>,
    pub moments: Vec<MeanVar>,
    /// Draws with a vanishing denominator, excluded from every mean.
    pub rejected: u64,
}

fn batch(frame: &Frame, law: &EntryDistribution, pairs: &[(usize, u32)], seed: u64, d: usize, range: std::ops::Range<u64>) -> (Vec<MeanVar>, u64) {
    let mut acc = vec![MeanVar::default(); pairs.len()];
    let mut rejected = 0;
    let mut b = vec![Complex64::new(0.0, 0.0); frame.support()];
    let mut zeta = vec![0.0; frame.len()];
    let mut partial = vec![0.0; frame.len() + 1];
    for sample in range {
        let mut stream = TrialStream::new(seed, Domain::InverseMoment, sample);
        let rng = stream.entry(d as u64);
        for x in b.iter_mut() {
            *x = Complex64::new(law.draw(rng), law.draw(rng));
        }
        frame.overlaps(&b, &mut zeta);
        for (j, z) in zeta.iter().enumerate() {
            partial[j + 1] = partial[j] + z;
        }
        if pairs.iter().any(|&(m, _)| partial[m] <= 0.0) {
            rejected += 1;
            continue;
        }
        for (a, &(m, r)) in acc.iter_mut().zip(pairs) {
            a.push(partial[m].powi(-(r as i32)));
        }
    }
    (acc, rejected)
}

/// Estimates every pair at dimension `d = n - 1`. Sample `i` draws its coordinates from
/// the stream `(seed, i)` at an offset given by `d`, so the result does not depend on the
/// worker count and different dimensions use independent draws.
pub fn estimate_at(
    n: usize,
    pairs: &[(usize, u32)],
    frame_rule: &FrameRule,
    law: &EntryDistribution,
    samples: u64,
    seed: u64,
    exec: &Executor,
) -> Result<InverseMomentEstimate> {
    let d = n - 1;
    let m_max = pairs.iter().map(|p| p.0).max().unwrap_or(1);
    let frame = frame_rule.build(d, m_max)?;
    let batches = samples.div_ceil(BATCH_SIZE);
    let parts = exec.map(batches, |i| {
        let lo = i * BATCH_SIZE;
        batch(&frame, law, pairs, seed, d, lo..(lo + BATCH_SIZE).min(samples))
    });
    let mut moments = vec![MeanVar::default(); pairs.len()];
    let mut rejected = 0;
    for (acc, rej) in &parts {
        for (m, a) in moments.iter_mut().zip(acc) {
            m.merge(a);
        }
        rejected += rej;
    }
    if moments.iter().any(|m| m.count == 0) {
        return Err(LabError::EmptySample("every draw was degenerate".into()));
    }
    Ok(InverseMomentEstimate { n, pairs: pairs.to_vec(), moments, rejected })
}

/// One `inverse_moment` row per `(N, m, r)`; `K_or_eta` holds `m`. Extra columns: `r`,
/// `gaussian_oracle`, `rejected`. Summary: `max_ratio_to_oracle`.
pub fn estimate_inverse_moment(q: &InverseMomentQuery, exec: &Executor) -> Result<StatReport> {
    q.validate()?;
    check_hypothesis(&q.law)?;
    let mut report = StatReport::new("invmom", q.samples);
    let mut max_ratio: f64 = 0.0;
    for &n in &q.n_grid {
        let est = estimate_at(n, &q.pairs, &q.frame, &q.law, q.samples, q.seed, exec)?;
        report.failed_trials += est.rejected;
        for (&(m, r), acc) in est.pairs.iter().zip(&est.moments) {
            let oracle = gaussian_oracle(m, r)?;
            max_ratio = max_ratio.max(acc.mean / oracle);
            report.rows.push(ReportRow {
                statistic: "inverse_moment".into(),
                e: f64::NAN,
                scale: q.frame.label().into(),
                n,
                k_or_eta: m as f64,
                estimate: acc.mean,
                stderr: acc.std_err(),
                trials: acc.count,
                seed: q.seed,
                extra: vec![
                    ("r".into(), f64::from(r)),
                    ("gaussian_oracle".into(), oracle),
                    ("rejected".into(), est.rejected as f64),
                ],
            });
        }
    }
    report.summary.insert("max_ratio_to_oracle".into(), max_ratio);
    Ok(report)
}
