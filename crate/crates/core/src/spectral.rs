//! Eigendecomposition, eigenvalue counting, the semicircle law and density-of-states
//! estimation on macroscopic, mesoscopic and microscopic windows.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::ensemble::{sample_matrix, EnsembleSpec, WignerMatrix};
use crate::error::{invalid, LabError, Result};
use crate::report::{ReportRow, StatReport};
use crate::stats::MeanVar;
use crate::trials::{split_failures, Executor};

/// Eigenvalues returned by the solver with an imaginary part above this are rejected.
const MAX_IMAG_EIGENVALUE: f64 = 1e-10;

/// Sorted spectrum of one matrix, optionally with its eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Mat<Complex64>>,
    pub seed: u64,
    pub trial: u64,
}

/// Deviations measured by [`SpectralSample::check_against`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionResiduals {
    pub max_norm_error: f64,
    pub max_overlap: f64,
    /// `max_α ‖H v_α - μ_α v_α‖₂ / ‖H‖₂`.
    pub max_relative_residual: f64,
}

impl DecompositionResiduals {
    pub fn within_tolerance(&self) -> bool {
        self.max_norm_error <= 1e-10
            && self.max_overlap <= 1e-10
            && self.max_relative_residual <= 1e-8
    }
}

impl SpectralSample {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `#{α : a ≤ μ_α ≤ b}`.
    pub fn count(&self, a: f64, b: f64) -> usize {
        counting(&self.eigenvalues, a, b)
    }

    /// Unit norm, orthogonality and eigen-equation residuals of the eigenvectors.
    pub fn check_against(&self, h: &WignerMatrix) -> Option<DecompositionResiduals> {
        let v = self.eigenvectors.as_ref()?;
        let n = self.n();
        let gram = v.adjoint() * v;
        let mut max_norm_error: f64 = 0.0;
        let mut max_overlap: f64 = 0.0;
        for a in 0..n {
            max_norm_error = max_norm_error.max((gram[(a, a)].re - 1.0).abs());
            for b in 0..n {
                if a != b {
                    max_overlap = max_overlap.max(gram[(a, b)].norm());
                }
            }
        }
        let hv = &h.matrix * v;
        let spectral_norm = self
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let mut max_residual: f64 = 0.0;
        for a in 0..n {
            let mut r2 = 0.0;
            for i in 0..n {
                r2 += (hv[(i, a)] - v[(i, a)] * self.eigenvalues[a]).norm_sqr();
            }
            max_residual = max_residual.max(r2.sqrt());
        }
        Some(DecompositionResiduals {
            max_norm_error,
            max_overlap,
            max_relative_residual: max_residual / spectral_norm,
        })
    }
}

/// Dense Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigen_decompose(h: &WignerMatrix, want_vectors: bool) -> Result<SpectralSample> {
    let (eigenvalues, eigenvectors) = hermitian_eigen(&h.matrix, want_vectors)?;
    Ok(SpectralSample { eigenvalues, eigenvectors, seed: h.seed, trial: h.trial })
}

/// Eigenvalues (and optionally eigenvectors) of a Hermitian matrix given by its lower
/// triangle.
pub(crate) fn hermitian_eigen(
    m: &Mat<Complex64>,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Mat<Complex64>>)> {
    let (values, vectors) = if want_vectors {
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let mut values = Vec::with_capacity(m.nrows());
        for i in 0..m.nrows() {
            let z = s[i];
            if z.im.abs() > MAX_IMAG_EIGENVALUE {
                return Err(LabError::Eigensolver(format!("complex eigenvalue {z}")));
            }
            values.push(z.re);
        }
        (values, Some(evd.U().to_owned()))
    } else {
        let values = m
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
        (values, None)
    };
    if values.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Eigensolver("non-finite eigenvalue".into()));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(LabError::Eigensolver("eigenvalues not sorted".into()));
    }
    Ok((values, vectors))
}

/// Samples trial `trial` and decomposes it.
pub fn sample_spectrum(spec: &EnsembleSpec, trial: u64, want_vectors: bool) -> Result<SpectralSample> {
    eigen_decompose(&sample_matrix(spec, trial), want_vectors)
}

/// Number of sorted values in the closed interval `[a, b]`; zero when `a > b`.
pub fn counting(sorted: &[f64], a: f64, b: f64) -> usize {
    let lo = sorted.partition_point(|&x| x < a);
    let hi = sorted.partition_point(|&x| x <= b);
    hi.saturating_sub(lo)
}

/// The semicircle density `√(4 - E²)/(2π)` on `[-2, 2]`.
pub fn semicircle_density(e: f64) -> f64 {
    if e.abs() <= 2.0 {
        (4.0 - e * e).max(0.0).sqrt() / (2.0 * PI)
    } else {
        0.0
    }
}

/// Distribution function of the semicircle law.
pub fn semicircle_cdf(e: f64) -> f64 {
    if e <= -2.0 {
        return 0.0;
    }
    if e >= 2.0 {
        return 1.0;
    }
    let v = (e * (4.0 - e * e).sqrt() / 4.0 + (e / 2.0).asin()) / PI + 0.5;
    v.clamp(0.0, 1.0)
}

/// Window width rule for density-of-states estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleRule {
    /// Fixed width `eta`.
    Macro { eta: f64 },
    /// Width `N^{-theta}`, `0 < theta < 1`.
    Meso { theta: f64 },
    /// Width `K/N`.
    Micro { k: f64 },
}

/// Default mesoscopic exponent.
pub const DEFAULT_MESO_THETA: f64 = 0.5;

impl ScaleRule {
    pub fn width(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            ScaleRule::Macro { eta } => eta,
            ScaleRule::Meso { theta } => nf.powf(-theta),
            ScaleRule::Micro { k } => k / nf,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ScaleRule::Macro { .. } => "macro",
            ScaleRule::Meso { .. } => "meso",
            ScaleRule::Micro { .. } => "micro",
        }
    }

    /// The rule's own parameter (η, θ or K).
    pub fn parameter(&self) -> f64 {
        match *self {
            ScaleRule::Macro { eta } => eta,
            ScaleRule::Meso { theta } => theta,
            ScaleRule::Micro { k } => k,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScaleRule::Macro { eta } => eta > 0.0 && eta.is_finite(),
            ScaleRule::Meso { theta } => theta > 0.0 && theta < 1.0,
            ScaleRule::Micro { k } => k > 0.0 && k.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid {} scale parameter {}", self.label(), self.parameter())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `𝒩 / (N · width)`.
    PerUnitLength,
    /// `𝒩`.
    RawCount,
}

/// Density-of-states query. All rules share the same sampled matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DosQuery {
    pub e: f64,
    pub rules: Vec<ScaleRule>,
    pub normalization: Normalization,
    pub trials: u64,
}

/// Monte Carlo estimate of the eigenvalue density in `[E - w/2, E + w/2]` for each rule.
///
/// One `dos` row per rule, with extra columns `width`, `mean_count`, `rho_sc` (the target
/// semicircle density at `E`) and `rho_sc_window` (the semicircle mass of the window per
/// unit length).
pub fn dos_estimate(spec: &EnsembleSpec, q: &DosQuery, exec: &Executor) -> Result<StatReport> {
    if !(q.e.abs() < 2.0) {
        return Err(invalid(format!("energy must lie in the bulk |E| < 2, got {}", q.e)));
    }
    if q.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if q.rules.is_empty() {
        return Err(invalid("at least one scale rule is required"));
    }
    for r in &q.rules {
        r.validate()?;
    }
    let n = spec.n();
    let widths: Vec<f64> = q.rules.iter().map(|r| r.width(n)).collect();
    let results = exec.map(q.trials, |t| {
        let s = sample_spectrum(spec, t, false)?;
        Ok(widths
            .iter()
            .map(|w| s.count(q.e - w / 2.0, q.e + w / 2.0) as u64)
            .collect::<Vec<u64>>())
    });
    let (counts, failed) = split_failures(results);
    if counts.is_empty() {
        return Err(LabError::EmptySample("every trial failed".into()));
    }

    let mut report = StatReport::new("dos", q.trials);
    report.failed_trials = failed;
    for (i, (rule, &w)) in q.rules.iter().zip(&widths).enumerate() {
        let mut acc = MeanVar::default();
        let mut raw = MeanVar::default();
        for c in &counts {
            let x = c[i] as f64;
            raw.push(x);
            acc.push(match q.normalization {
                Normalization::PerUnitLength => x / (n as f64 * w),
                Normalization::RawCount => x,
            });
        }
        let window_mass = semicircle_cdf(q.e + w / 2.0) - semicircle_cdf(q.e - w / 2.0);
        report.rows.push(ReportRow {
            statistic: "dos".into(),
            e: q.e,
            scale: rule.label().into(),
            n,
            k_or_eta: rule.parameter(),
            estimate: acc.mean,
            stderr: acc.std_err(),
            trials: acc.count,
            seed: spec.seed(),
            extra: vec![
                ("width".into(), w),
                ("mean_count".into(), raw.mean),
                ("rho_sc".into(), semicircle_density(q.e)),
                ("rho_sc_window".into(), window_mass / w),
            ],
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use faer::mat;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn scalar_identity_spectrum() {
        let mut m = Mat::<Complex64>::zeros(4, 4);
        for i in 0..4 {
            m[(i, i)] = c(2.5);
        }
        let h = WignerMatrix::from_matrix(m).unwrap();
        let s = eigen_decompose(&h, true).unwrap();
        assert!(s.eigenvalues.iter().all(|&x| (x - 2.5).abs() < 1e-14));
        assert!(s.check_against(&h).unwrap().within_tolerance());
    }

    #[test]
    fn diagonal_and_offdiagonal_two_by_two() {
        let h = WignerMatrix::from_matrix(mat![[c(1.0), c(0.0)], [c(0.0), c(-1.0)]]).unwrap();
        let s = eigen_decompose(&h, true).unwrap();
        assert_eq!(s.eigenvalues, vec![-1.0, 1.0]);
        let v = s.eigenvectors.unwrap();
        // eigenvector of -1 is e_2 up to phase
        assert!((v[(1, 0)].norm() - 1.0).abs() < 1e-14 && v[(0, 0)].norm() < 1e-14);

        let r = 0.5f64.sqrt();
        let h = WignerMatrix::from_matrix(mat![[c(0.0), c(r)], [c(r), c(0.0)]]).unwrap();
        let s = eigen_decompose(&h, false).unwrap();
        assert!((s.eigenvalues[0] + r).abs() < 1e-15 && (s.eigenvalues[1] - r).abs() < 1e-15);
    }

    #[test]
    fn sampled_decompositions_satisfy_invariants() {
        let spec = EnsembleSpec::gue(40, 3).unwrap();
        for t in 0..5 {
            let h = sample_matrix(&spec, t);
            let s = eigen_decompose(&h, true).unwrap();
            let res = s.check_against(&h).unwrap();
            assert!(res.within_tolerance(), "{res:?}");
            let values_only = eigen_decompose(&h, false).unwrap();
            for (a, b) in s.eigenvalues.iter().zip(&values_only.eigenvalues) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn counting_examples() {
        let s = [-1.0, 0.0, 1.0];
        assert_eq!(counting(&s, -0.5, 0.5), 1);
        assert_eq!(counting(&s, -2.0, 2.0), 3);
        assert_eq!(counting(&[0.0, 0.5, 0.5, 1.0], 0.5, 0.5), 2);
        assert_eq!(counting(&s, f64::NEG_INFINITY, f64::INFINITY), 3);
        assert_eq!(counting(&s, 1.0, -1.0), 0);
    }

    proptest! {
        #[test]
        fn counting_is_monotone(mut xs in prop::collection::vec(-3.0f64..3.0, 1..60),
                                a in -3.0f64..3.0, len in 0.0f64..2.0, grow in 0.0f64..1.0) {
            xs.sort_by(f64::total_cmp);
            let inner = counting(&xs, a, a + len);
            let outer = counting(&xs, a - grow, a + len + grow);
            prop_assert!(inner <= outer);
            prop_assert_eq!(counting(&xs, f64::NEG_INFINITY, f64::INFINITY), xs.len());
        }
    }

    #[test]
    fn semicircle_values() {
        assert!((semicircle_density(0.0) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(semicircle_density(2.0), 0.0);
        assert_eq!(semicircle_density(-2.0), 0.0);
        assert_eq!(semicircle_density(2.5), 0.0);
        let q = integrate(semicircle_density, -2.0, 2.0, 8, 1e-13, 0.0);
        assert!((q.value - 1.0).abs() < 1e-10, "{}", q.value);
        assert_eq!(semicircle_cdf(0.0), 0.5);
        assert_eq!(semicircle_cdf(2.0), 1.0);
        assert_eq!(semicircle_cdf(-2.0), 0.0);
    }

    #[test]
    fn semicircle_cdf_matches_quadrature() {
        for e in [-1.9, -1.0, -0.3, 0.4, 1.2, 1.99] {
            let q = integrate(semicircle_density, -2.0, e, 8, 1e-13, 0.0);
            assert!((semicircle_cdf(e) - q.value).abs() < 1e-10, "E={e}");
        }
    }

    #[test]
    fn dos_counts_everything_in_a_huge_window() {
        let spec = EnsembleSpec::gue(2, 0).unwrap();
        let eta = 1e6;
        let q = DosQuery {
            e: 0.0,
            rules: vec![ScaleRule::Macro { eta }],
            normalization: Normalization::RawCount,
            trials: 1,
        };
        let r = dos_estimate(&spec, &q, &Executor::serial()).unwrap();
        assert_eq!(r.rows[0].estimate, 2.0);
        let q = DosQuery { normalization: Normalization::PerUnitLength, ..q };
        let r = dos_estimate(&spec, &q, &Executor::serial()).unwrap();
        assert_eq!(r.rows[0].estimate, 2.0 / (2.0 * eta));
    }

    #[test]
    fn dos_rejects_bad_queries() {
        let spec = EnsembleSpec::gue(10, 0).unwrap();
        let base = DosQuery {
            e: 0.0,
            rules: vec![ScaleRule::Micro { k: 5.0 }],
            normalization: Normalization::PerUnitLength,
            trials: 3,
        };
        let exec = Executor::serial();
        assert!(dos_estimate(&spec, &DosQuery { e: 2.0, ..base.clone() }, &exec).is_err());
        assert!(dos_estimate(&spec, &DosQuery { trials: 0, ..base.clone() }, &exec).is_err());
        let bad = DosQuery { rules: vec![ScaleRule::Micro { k: 0.0 }], ..base.clone() };
        assert!(dos_estimate(&spec, &bad, &exec).is_err());
        let bad = DosQuery { rules: vec![ScaleRule::Meso { theta: 1.5 }], ..base };
        assert!(dos_estimate(&spec, &bad, &exec).is_err());
    }

    #[test]
    fn macro_window_matches_integrated_semicircle() {
        let spec = EnsembleSpec::gue(500, 21).unwrap();
        let q = DosQuery {
            e: 0.0,
            rules: vec![ScaleRule::Macro { eta: 1.0 }],
            normalization: Normalization::PerUnitLength,
            trials: 20,
        };
        let r = dos_estimate(&spec, &q, &Executor::serial()).unwrap();
        let row = &r.rows[0];
        let target = semicircle_cdf(0.5) - semicircle_cdf(-0.5);
        assert!((row.estimate - target).abs() <= 3.0 * row.stderr, "{} vs {target} ± {}", row.estimate, row.stderr);
    }
}
