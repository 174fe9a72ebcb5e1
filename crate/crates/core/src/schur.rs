//! Diagonal resolvent entries through the Schur complement of a removed row, and the
//! spectral decomposition of the resulting denominator over the minor's eigenbasis.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use num_complex::Complex64;

use crate::ensemble::{sample_matrix, EnsembleSpec, WignerMatrix};
use crate::error::{invalid, LabError, Result};
use crate::report::{ReportRow, StatReport};
use crate::spectral::hermitian_eigen;
use crate::stats::{proportion_std_err, MeanVar};
use crate::trials::{split_failures, Executor};
use crate::wegner::{insert_fit, survival_rows, validate_k_grid};

/// Number of outside eigenvalues that defines the event Ω, and of α indices selected on it.
pub const OMEGA_OUTSIDE: usize = 6;
/// Number of β indices selected on the complement of Ω.
pub const OMEGA_INSIDE: usize = 3;
/// Smallest minor dimension for which the classification is defined.
pub const MIN_MINOR_DIM: usize = 8;

fn check_index(h: &WignerMatrix, j: usize) -> Result<()> {
    if j >= h.n() {
        return Err(invalid(format!("row index {j} out of range for N = {}", h.n())));
    }
    if h.n() < 2 {
        return Err(invalid("the Schur complement needs N >= 2"));
    }
    Ok(())
}

/// `H` with row and column `j` removed.
pub fn minor(h: &WignerMatrix, j: usize) -> Mat<Complex64> {
    let n = h.n();
    let keep = |i: usize| if i < j { i } else { i + 1 };
    Mat::from_fn(n - 1, n - 1, |a, b| h.matrix[(keep(a), keep(b))])
}

/// Row `j` of `H` without its diagonal entry.
pub fn removed_row(h: &WignerMatrix, j: usize) -> Vec<Complex64> {
    (0..h.n()).filter(|&k| k != j).map(|k| h.matrix[(j, k)]).collect()
}

/// `1 / (h_jj - z - a (B - z)⁻¹ a*)` with `a` the removed row and `B` the minor.
pub fn schur_diagonal(h: &WignerMatrix, j: usize, z: Complex64) -> Result<Complex64> {
    check_index(h, j)?;
    if z.im == 0.0 {
        return Err(invalid("spectral parameter must have nonzero imaginary part"));
    }
    let n = h.n();
    let mut shifted = minor(h, j);
    for i in 0..n - 1 {
        shifted[(i, i)] -= z;
    }
    let a = removed_row(h, j);
    let mut x = Mat::from_fn(n - 1, 1, |k, _| a[k].conj());
    shifted.partial_piv_lu().solve_in_place(x.as_mut());
    let mut quad = Complex64::new(0.0, 0.0);
    for k in 0..n - 1 {
        quad += a[k] * x[(k, 0)];
    }
    let value = 1.0 / (h.matrix[(j, j)] - z - quad);
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(LabError::Eigensolver("singular minor system".into()));
    }
    Ok(value)
}

/// `(H - z)⁻¹` by dense LU.
pub fn direct_resolvent(h: &WignerMatrix, z: Complex64) -> Result<Mat<Complex64>> {
    if z.im == 0.0 {
        return Err(invalid("spectral parameter must have nonzero imaginary part"));
    }
    let n = h.n();
    let mut shifted = h.matrix.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    Ok(shifted.partial_piv_lu().inverse())
}

/// `(H - z)⁻¹(j, j)` by solving `(H - z) x = e_j`.
pub fn direct_resolvent_diagonal(h: &WignerMatrix, j: usize, z: Complex64) -> Result<Complex64> {
    check_index(h, j)?;
    if z.im == 0.0 {
        return Err(invalid("spectral parameter must have nonzero imaginary part"));
    }
    let n = h.n();
    let mut shifted = h.matrix.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    let mut x = Mat::<Complex64>::zeros(n, 1);
    x[(j, 0)] = Complex64::new(1.0, 0.0);
    shifted.partial_piv_lu().solve_in_place(x.as_mut());
    Ok(x[(j, 0)])
}

/// `c = ε / (N²(λ - E)² + ε²)` and `d = N(λ - E) / (N²(λ - E)² + ε²)`.
pub fn cd_coefficients(lambda: f64, n: usize, e: f64, epsilon: f64) -> (f64, f64) {
    let x = n as f64 * (lambda - e);
    let den = x * x + epsilon * epsilon;
    (epsilon / den, x / den)
}

/// The removed row expressed in the minor's eigenbasis at the target `z = E + iε/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurDecomposition {
    pub j: usize,
    pub n: usize,
    pub h_jj: Complex64,
    pub minor_eigenvalues: Vec<f64>,
    /// `ζ_α = |b · u_α|²` with `b = √N a`.
    pub overlaps: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: f64,
    pub epsilon: f64,
    /// `‖b‖₂²`.
    pub b_norm_sq: f64,
}

/// Worst relative deviations of the decomposition's defining identities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecompositionCheck {
    pub parseval: f64,
    pub c_identity: f64,
    pub d_identity: f64,
    /// `true` when every `c > 0` and `sign d = sign(λ - E)`.
    pub signs_ok: bool,
}

impl SchurDecomposition {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.epsilon / self.n as f64)
    }

    /// `h_jj - z - (1/N) Σ ζ_α / (λ_α - z)`.
    pub fn spectral_denominator(&self) -> Complex64 {
        let z = self.z();
        let nf = self.n as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for (l, zeta) in self.minor_eigenvalues.iter().zip(&self.overlaps) {
            sum += *zeta / (Complex64::new(*l, 0.0) - z);
        }
        self.h_jj - z - sum / nf
    }

    /// Real and imaginary parts `(h_jj - E - Σ d ζ, -(ε/N + Σ c ζ))`.
    pub fn decomposed_denominator(&self) -> (f64, f64) {
        let dz: f64 = self.d.iter().zip(&self.overlaps).map(|(d, z)| d * z).sum();
        let cz: f64 = self.c.iter().zip(&self.overlaps).map(|(c, z)| c * z).sum();
        (self.h_jj.re - self.e - dz, -(self.epsilon / self.n as f64 + cz))
    }

    /// The diagonal resolvent entry from the spectral resolution of the minor.
    pub fn resolvent_from_spectrum(&self) -> Complex64 {
        1.0 / self.spectral_denominator()
    }

    pub fn check(&self) -> DecompositionCheck {
        let mut out = DecompositionCheck { signs_ok: true, ..Default::default() };
        let sum: f64 = self.overlaps.iter().sum();
        out.parseval = (sum - self.b_norm_sq).abs() / self.b_norm_sq.max(f64::MIN_POSITIVE);
        let nf = self.n as f64;
        for ((l, c), d) in self.minor_eigenvalues.iter().zip(&self.c).zip(&self.d) {
            let x = nf * (l - self.e);
            let den = x * x + self.epsilon * self.epsilon;
            out.c_identity = out.c_identity.max((c * den - self.epsilon).abs() / self.epsilon);
            let d_err = (d * den - x).abs() / x.abs().max(f64::MIN_POSITIVE);
            out.d_identity = out.d_identity.max(if x == 0.0 { (d * den).abs() } else { d_err });
            let sign_ok = if x == 0.0 { *d == 0.0 } else { d.signum() == x.signum() };
            out.signs_ok &= *c > 0.0 && sign_ok;
        }
        out
    }
}

/// Eigendecomposes the minor `B^{(j)}` and expresses the removed row in its eigenbasis.
pub fn decompose(h: &WignerMatrix, j: usize, e: f64, epsilon: f64) -> Result<SchurDecomposition> {
    check_index(h, j)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = h.n();
    let (lambda, u) = hermitian_eigen(&minor(h, j), true)?;
    let u = u.expect("eigenvectors requested");
    let scale = (n as f64).sqrt();
    let b: Vec<Complex64> = removed_row(h, j).into_iter().map(|x| x * scale).collect();
    let overlaps: Vec<f64> = (0..n - 1)
        .map(|alpha| {
            let mut dot = Complex64::new(0.0, 0.0);
            for (k, bk) in b.iter().enumerate() {
                dot += bk * u[(k, alpha)];
            }
            dot.norm_sqr()
        })
        .collect();
    let (c, d) = lambda.iter().map(|&l| cd_coefficients(l, n, e, epsilon)).unzip();
    Ok(SchurDecomposition {
        j,
        n,
        h_jj: h.matrix[(j, j)],
        minor_eigenvalues: lambda,
        overlaps,
        c,
        d,
        e,
        epsilon,
        b_norm_sq: b.iter().map(|x| x.norm_sqr()).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaIndices {
    /// Six selectable minor eigenvalues nearest to `E`, nearest first, and
    /// `Δ = N|λ_{α₆} - E|`.
    Omega { alphas: [usize; OMEGA_OUTSIDE], delta: f64 },
    /// Three minor eigenvalues nearest to `E`, all inside the window.
    Complement { betas: [usize; OMEGA_INSIDE] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaClassification {
    /// Minor eigenvalues with `|λ - E| > ε/2N`.
    pub outside: usize,
    pub indices: OmegaIndices,
}

impl OmegaClassification {
    pub fn omega(&self) -> bool {
        matches!(self.indices, OmegaIndices::Omega { .. })
    }

    pub fn delta(&self) -> Option<f64> {
        match self.indices {
            OmegaIndices::Omega { delta, .. } => Some(delta),
            OmegaIndices::Complement { .. } => None,
        }
    }
}

/// Classification from the minor spectrum alone; `n` is the full dimension.
///
/// On Ω the α's are taken among eigenvalues with `N|λ - E| ≥ ε` in order of increasing
/// distance, ties to the smaller index. Fewer than six such eigenvalues on Ω is an error.
pub fn classify_from_eigenvalues(lambda: &[f64], n: usize, e: f64, epsilon: f64) -> Result<OmegaClassification> {
    if lambda.len() < MIN_MINOR_DIM {
        return Err(invalid(format!(
            "the minor must have dimension at least {MIN_MINOR_DIM}, got {}",
            lambda.len()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let nf = n as f64;
    let scaled: Vec<f64> = lambda.iter().map(|l| nf * (l - e).abs()).collect();
    let outside = scaled.iter().filter(|&&x| x > epsilon / 2.0).count();
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| scaled[a].total_cmp(&scaled[b]).then(a.cmp(&b)));
    let indices = if outside >= OMEGA_OUTSIDE {
        let selectable: Vec<usize> = order.into_iter().filter(|&a| scaled[a] >= epsilon).take(OMEGA_OUTSIDE).collect();
        if selectable.len() < OMEGA_OUTSIDE {
            return Err(LabError::EmptySample(format!(
                "only {} minor eigenvalues satisfy N|λ - E| >= ε",
                selectable.len()
            )));
        }
        let alphas: [usize; OMEGA_OUTSIDE] = selectable.try_into().expect("six indices");
        OmegaIndices::Omega { alphas, delta: scaled[alphas[OMEGA_OUTSIDE - 1]] }
    } else {
        OmegaIndices::Complement { betas: [order[0], order[1], order[2]] }
    };
    Ok(OmegaClassification { outside, indices })
}

pub fn classify_omega(dec: &SchurDecomposition) -> Result<OmegaClassification> {
    classify_from_eigenvalues(&dec.minor_eigenvalues, dec.n, dec.e, dec.epsilon)
}

/// The ordering chains satisfied by `c` and `d` at the selected indices.
///
/// On Ω: `|d_{α₄}| > |d_{α₅}| > |d_{α₆}| > 1/(2Δ)` and `c_{α₁} > c_{α₂} > c_{α₃} > ε/(2Δ²)`,
/// with `≥` wherever the underlying distances tie. On the complement: `c_β > 1/(2ε)`.
pub fn chains_hold(dec: &SchurDecomposition, cls: &OmegaClassification) -> bool {
    let dist = |a: usize| (dec.n as f64 * (dec.minor_eigenvalues[a] - dec.e)).abs();
    let eps = dec.epsilon;
    let ordered = |hi: f64, lo: f64, tie: bool| if tie { hi >= lo } else { hi > lo };
    match cls.indices {
        OmegaIndices::Omega { alphas, delta } => {
            let d = |k: usize| dec.d[alphas[k]].abs();
            let c = |k: usize| dec.c[alphas[k]];
            let tie = |k: usize| dist(alphas[k]) == dist(alphas[k + 1]);
            ordered(d(3), d(4), tie(3))
                && ordered(d(4), d(5), tie(4))
                && ordered(d(5), 1.0 / (2.0 * delta), delta == eps)
                && ordered(c(0), c(1), tie(0))
                && ordered(c(1), c(2), tie(1))
                && ordered(c(2), eps / (2.0 * delta * delta), dist(alphas[2]) == delta && delta == eps)
        }
        OmegaIndices::Complement { betas } => betas.iter().all(|&b| dec.c[b] > 1.0 / (2.0 * eps)),
    }
}

/// Residuals of one matrix: Schur vs direct inversion and the decomposition identities,
/// maximized over all removed rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchurResiduals {
    pub schur_vs_direct: f64,
    pub spectral_vs_schur: f64,
    /// `|den|²` against `re² + im²` of the decomposed denominator.
    pub modulus_identity: f64,
    pub parseval: f64,
    pub cd_identity: f64,
    pub signs_ok: bool,
    pub imaginary_part_positive: bool,
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn schur_residuals(h: &WignerMatrix, e: f64, epsilon: f64) -> Result<SchurResiduals> {
    let n = h.n();
    let z = Complex64::new(e, epsilon / n as f64);
    let direct = direct_resolvent(h, z)?;
    let mut r = SchurResiduals { signs_ok: true, imaginary_part_positive: true, ..Default::default() };
    for j in 0..n {
        let s = schur_diagonal(h, j, z)?;
        r.schur_vs_direct = r.schur_vs_direct.max(rel(s, direct[(j, j)]));
        let dec = decompose(h, j, e, epsilon)?;
        r.spectral_vs_schur = r.spectral_vs_schur.max(rel(dec.resolvent_from_spectrum(), s));
        let den = dec.spectral_denominator();
        let (re, im) = dec.decomposed_denominator();
        let modulus = den.norm_sqr();
        r.modulus_identity = r.modulus_identity.max((re * re + im * im - modulus).abs() / modulus);
        let check = dec.check();
        r.parseval = r.parseval.max(check.parseval);
        r.cd_identity = r.cd_identity.max(check.c_identity.max(check.d_identity));
        r.signs_ok &= check.signs_ok;
        r.imaginary_part_positive &= -im > 0.0;
    }
    Ok(r)
}

/// One `schur_residual` row per trial (estimate = Schur vs direct relative deviation), plus
/// the maxima of every residual in the summary.
pub fn schur_check(spec: &EnsembleSpec, e: f64, epsilon: f64, trials: u64, exec: &Executor) -> Result<StatReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let results = exec.map(trials, |t| schur_residuals(&sample_matrix(spec, t), e, epsilon).map(|r| (t, r)));
    let (res, failed) = split_failures(results);
    let mut report = StatReport::new("schur-check", trials);
    report.failed_trials = failed;
    let mut worst = SchurResiduals { signs_ok: true, imaginary_part_positive: true, ..Default::default() };
    for (t, r) in &res {
        worst.schur_vs_direct = worst.schur_vs_direct.max(r.schur_vs_direct);
        worst.spectral_vs_schur = worst.spectral_vs_schur.max(r.spectral_vs_schur);
        worst.modulus_identity = worst.modulus_identity.max(r.modulus_identity);
        worst.parseval = worst.parseval.max(r.parseval);
        worst.cd_identity = worst.cd_identity.max(r.cd_identity);
        worst.signs_ok &= r.signs_ok;
        worst.imaginary_part_positive &= r.imaginary_part_positive;
        report.rows.push(ReportRow {
            statistic: "schur_residual".into(),
            e,
            scale: "micro".into(),
            n: spec.n(),
            k_or_eta: epsilon,
            estimate: r.schur_vs_direct,
            stderr: f64::NAN,
            trials: 1,
            seed: spec.seed(),
            extra: vec![
                ("trial".into(), *t as f64),
                ("spectral_vs_schur".into(), r.spectral_vs_schur),
                ("modulus_identity".into(), r.modulus_identity),
                ("parseval".into(), r.parseval),
                ("cd_identity".into(), r.cd_identity),
            ],
        });
    }
    let s = &mut report.summary;
    s.insert("max_schur_vs_direct".into(), worst.schur_vs_direct);
    s.insert("max_spectral_vs_schur".into(), worst.spectral_vs_schur);
    s.insert("max_modulus_identity".into(), worst.modulus_identity);
    s.insert("max_parseval".into(), worst.parseval);
    s.insert("max_cd_identity".into(), worst.cd_identity);
    s.insert("signs_ok".into(), f64::from(u8::from(worst.signs_ok)));
    s.insert("imaginary_part_positive".into(), f64::from(u8::from(worst.imaginary_part_positive)));
    Ok(report)
}

/// Per dimension in `n_grid`: the joint survival `P(Ω, Δ ≥ K)` (statistic `delta_survival`),
/// the frequency of Ω (`omega_frequency`) and the mean of `1_Ω Δ³` (`omega_delta_cubed`).
/// The first row and column are removed in every trial.
pub fn delta_tail(
    spec: &EnsembleSpec,
    n_grid: &[usize],
    e: f64,
    epsilon: f64,
    k_grid: &[f64],
    trials: u64,
    exec: &Executor,
) -> Result<StatReport> {
    validate_k_grid(k_grid)?;
    if !(e.abs() < 2.0) {
        return Err(invalid(format!("energy must lie in the bulk |E| < 2, got {e}")));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if n_grid.is_empty() {
        return Err(invalid("dimension grid is empty"));
    }
    let mut report = StatReport::new("delta-tail", trials);
    for &n in n_grid {
        if n < MIN_MINOR_DIM + 1 {
            return Err(invalid(format!("N must be at least {} for the Ω classification", MIN_MINOR_DIM + 1)));
        }
        let spec_n = spec.with_n(n)?;
        let results = exec.map(trials, |t| {
            let h = sample_matrix(&spec_n, t);
            let (lambda, _) = hermitian_eigen(&minor(&h, 0), false)?;
            Ok(classify_from_eigenvalues(&lambda, n, e, epsilon)?.delta())
        });
        let (deltas, failed) = split_failures(results);
        if deltas.is_empty() {
            return Err(LabError::EmptySample(format!("every trial failed at N = {n}")));
        }
        report.failed_trials += failed;
        let valid = deltas.len() as u64;
        let on_omega: Vec<f64> = deltas.iter().flatten().copied().collect();
        let hits = on_omega.len() as u64;
        let template = ReportRow {
            statistic: "delta_survival".into(),
            e,
            scale: "micro".into(),
            n,
            k_or_eta: 0.0,
            estimate: 0.0,
            stderr: 0.0,
            trials: valid,
            seed: spec_n.seed(),
            extra: vec![("epsilon".into(), epsilon)],
        };
        let survival = survival_rows(&on_omega, valid, k_grid, &template);
        report.rows.extend(survival.rows);
        let mut sub = StatReport::default();
        insert_fit(&mut sub, survival.fit, &format!("Δ tail at N = {n}"));
        report.absorb(sub, &format!("N{n}_"));

        let mut freq = template.clone();
        freq.statistic = "omega_frequency".into();
        freq.k_or_eta = epsilon;
        freq.estimate = hits as f64 / valid as f64;
        freq.stderr = proportion_std_err(hits, valid);
        report.rows.push(freq);

        let cubes = MeanVar::from_slice(
            &deltas.iter().map(|d| d.map_or(0.0, |x| x * x * x)).collect::<Vec<f64>>(),
        );
        let mut cubed = template.clone();
        cubed.statistic = "omega_delta_cubed".into();
        cubed.k_or_eta = epsilon;
        cubed.estimate = cubes.mean;
        cubed.stderr = cubes.std_err();
        report.rows.push(cubed);
    }
    Ok(report)
}
