//! Hermitian Wigner ensembles: specification, sampling, the GUE eigenvalue density and a
//! binary export format.
//!
//! Entry `(j, k)` with `j < k` is `(x + i y)/√N` with `x, y` iid from the off-diagonal law,
//! the diagonal is `x/√N` with `x` from the diagonal law, and the lower triangle is the
//! conjugate of the upper one. Draws are addressed by entry index: upper-triangle entries in
//! row-major order (real part then imaginary part from the entry's stream), followed by the
//! diagonal.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::distributions::{BuiltinLaw, EntryDistribution};
use crate::error::{invalid, LabError, Result};
use crate::rng::{Domain, TrialStream};

/// Required variance of each real component of an off-diagonal entry.
pub const OFFDIAG_COMPONENT_VARIANCE: f64 = 0.5;
/// Required variance of an (unscaled) diagonal entry.
pub const DIAG_VARIANCE: f64 = 1.0;
const VARIANCE_TOLERANCE: f64 = 1e-12;

/// Parameters of a Hermitian Wigner ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    n: usize,
    offdiag: EntryDistribution,
    diag: EntryDistribution,
    seed: u64,
}

impl EnsembleSpec {
    /// Validates the dimension and the variance normalization.
    pub fn new(
        n: usize,
        offdiag: EntryDistribution,
        diag: EntryDistribution,
        seed: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("matrix dimension must be at least 2, got {n}")));
        }
        if (offdiag.variance() - OFFDIAG_COMPONENT_VARIANCE).abs() > VARIANCE_TOLERANCE {
            return Err(invalid(format!(
                "off-diagonal components need E x_jk² = 1/2, got variance {}",
                offdiag.variance()
            )));
        }
        if (diag.variance() - DIAG_VARIANCE).abs() > VARIANCE_TOLERANCE {
            return Err(invalid(format!(
                "diagonal entries need E x_jj² = 1, got variance {}",
                diag.variance()
            )));
        }
        Ok(EnsembleSpec { n, offdiag, diag, seed })
    }

    /// Uses the off-diagonal family rescaled to unit variance on the diagonal.
    pub fn with_default_diagonal(n: usize, offdiag: EntryDistribution, seed: u64) -> Result<Self> {
        let diag = offdiag.rescaled(DIAG_VARIANCE)?;
        Self::new(n, offdiag, diag, seed)
    }

    /// The Gaussian Unitary Ensemble.
    pub fn gue(n: usize, seed: u64) -> Result<Self> {
        let off = crate::distributions::make_builtin(BuiltinLaw::Gaussian, 0.5, None)?;
        Self::with_default_diagonal(n, off, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offdiag(&self) -> &EntryDistribution {
        &self.offdiag
    }

    pub fn diag(&self) -> &EntryDistribution {
        &self.diag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same laws and seed at another dimension.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.offdiag.clone(), self.diag.clone(), self.seed)
    }

    /// Same laws and dimension with another master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        EnsembleSpec { seed, ..self.clone() }
    }
}

/// A sampled matrix with its provenance.
#[derive(Debug, Clone)]
pub struct WignerMatrix {
    pub matrix: Mat<Complex64>,
    pub seed: u64,
    pub trial: u64,
}

impl WignerMatrix {
    /// Wraps an explicit matrix (used for fixed test inputs). Requires exact Hermitian symmetry.
    pub fn from_matrix(matrix: Mat<Complex64>) -> Result<Self> {
        let m = WignerMatrix { matrix, seed: 0, trial: 0 };
        if m.matrix.nrows() != m.matrix.ncols() || !m.is_exactly_hermitian() {
            return Err(invalid("matrix must be square and exactly Hermitian"));
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.matrix[(j, k)]
    }

    /// `h_jk == conj(h_kj)` bit for bit, including real diagonal.
    pub fn is_exactly_hermitian(&self) -> bool {
        let n = self.n();
        (0..n).all(|j| (j..n).all(|k| self.get(j, k) == self.get(k, j).conj()))
    }

    /// `Tr H² = Σ |h_jk|²`.
    pub fn trace_of_square(&self) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for j in 0..n {
            for k in 0..n {
                total += self.get(j, k).norm_sqr();
            }
        }
        total
    }

    /// Writes the binary layout read by [`WignerMatrix::read_binary`]: the 8-byte magic
    /// `WGNRMAT1`, `N` as little-endian u64, then `N²` entries row-major, each as
    /// little-endian `f64` real part followed by imaginary part.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&(n as u64).to_le_bytes())?;
        for j in 0..n {
            for k in 0..n {
                let z = self.get(j, k);
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..8] != MATRIX_MAGIC {
            return Err(LabError::MatrixFormat("bad magic".into()));
        }
        let n = u64::from_le_bytes(header[8..].try_into().expect("8 bytes")) as usize;
        if n == 0 || n > 1 << 16 {
            return Err(LabError::MatrixFormat(format!("implausible dimension {n}")));
        }
        let mut buf = [0u8; 16];
        let mut matrix = Mat::<Complex64>::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
                matrix[(j, k)] = Complex64::new(re, im);
            }
        }
        Ok(WignerMatrix { matrix, seed: 0, trial: 0 })
    }
}

pub const MATRIX_MAGIC: &[u8; 8] = b"WGNRMAT1";

/// Entry index of position `(j, k)`. Both triangles of an off-diagonal pair share the
/// index of the upper entry; diagonal entries follow the `N(N-1)/2` upper entries.
pub fn entry_index(n: usize, j: usize, k: usize) -> u64 {
    assert!(j < n && k < n);
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    let (n, j, k) = (n as u64, j as u64, k as u64);
    if j == k {
        n * (n - 1) / 2 + j
    } else {
        j * n - j * (j + 1) / 2 + (k - j - 1)
    }
}

/// Entry indices feeding the minor obtained by deleting row and column `j`.
pub fn minor_entries(n: usize, j: usize) -> BTreeSet<u64> {
    let mut set = BTreeSet::new();
    for a in (0..n).filter(|&a| a != j) {
        for b in (a..n).filter(|&b| b != j) {
            set.insert(entry_index(n, a, b));
        }
    }
    set
}

/// Entry indices of row `j` with the diagonal entry removed.
pub fn row_entries(n: usize, j: usize) -> BTreeSet<u64> {
    (0..n).filter(|&k| k != j).map(|k| entry_index(n, j, k)).collect()
}

/// Samples trial `trial` of the ensemble. Pure in `(spec, trial)`.
pub fn sample_matrix(spec: &EnsembleSpec, trial: u64) -> WignerMatrix {
    let n = spec.n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut stream = TrialStream::new(spec.seed, Domain::Matrix, trial);
    let mut matrix = Mat::<Complex64>::zeros(n, n);
    for j in 0..n {
        for k in j + 1..n {
            let rng = stream.entry(entry_index(n, j, k));
            let x = spec.offdiag.draw(rng);
            let y = spec.offdiag.draw(rng);
            let z = Complex64::new(x * scale, y * scale);
            matrix[(j, k)] = z;
            matrix[(k, j)] = z.conj();
        }
    }
    for j in 0..n {
        let rng = stream.entry(entry_index(n, j, j));
        matrix[(j, j)] = Complex64::new(spec.diag.draw(rng) * scale, 0.0);
    }
    WignerMatrix { matrix, seed: spec.seed, trial }
}

/// Log of the GUE joint eigenvalue density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GueLogDensity {
    pub value: f64,
    /// True when the normalizing constant is included (N ≤ 4); otherwise `value` is the log
    /// of the unnormalized density `∏(μ_i - μ_j)² exp(-N/2 Σ μ²)`.
    pub normalized: bool,
}

/// Largest dimension for which the normalizing constant is computed.
pub const GUE_NORMALIZED_MAX_N: usize = 4;

/// Log joint density of the unordered eigenvalues of an `N × N` GUE matrix,
/// `const · ∏_{i<j} (μ_i - μ_j)² · exp(-(N/2) Σ μ_j²)`.
///
/// Coincident eigenvalues give `-∞`. For `N > 4` the constant is omitted and flagged.
pub fn gue_log_joint_density(eigenvalues: &[f64]) -> Result<GueLogDensity> {
    let n = eigenvalues.len();
    if n < 2 {
        return Err(invalid(format!("need at least 2 eigenvalues, got {n}")));
    }
    let nf = n as f64;
    let mut log = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            log += 2.0 * (eigenvalues[i] - eigenvalues[j]).abs().ln();
        }
    }
    log -= 0.5 * nf * eigenvalues.iter().map(|m| m * m).sum::<f64>();
    if n <= GUE_NORMALIZED_MAX_N {
        Ok(GueLogDensity { value: log - gue_log_partition(n), normalized: true })
    } else {
        Ok(GueLogDensity { value: log, normalized: false })
    }
}

/// Gauss–Hermite rule for weight `e^{-x²}` (Golub–Welsch).
pub fn gauss_hermite(points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = Mat::<f64>::zeros(points, points);
    for k in 1..points {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let evd = jacobi.self_adjoint_eigen(Side::Lower).expect("tridiagonal eigensolve");
    let nodes: Vec<f64> = (0..points).map(|i| evd.S().column_vector()[i]).collect();
    let weights: Vec<f64> = (0..points)
        .map(|i| std::f64::consts::PI.sqrt() * evd.U()[(0, i)].powi(2))
        .collect();
    (nodes, weights)
}

/// `log ∫ ∏_{i<j}(μ_i - μ_j)² e^{-(N/2)Σμ²} dμ`, computed by a tensor Gauss–Hermite rule
/// after substituting `μ = x √(2/N)`. The integrand is a polynomial of degree `2(N-1)` per
/// variable against `e^{-x²}`, which `N + 1` nodes integrate exactly.
fn gue_log_partition(n: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(n + 1);
    let points = nodes.len();
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        let mut vdm = 1.0;
        for a in 0..n {
            w *= weights[idx[a]];
            for b in a + 1..n {
                vdm *= (nodes[idx[a]] - nodes[idx[b]]).powi(2);
            }
        }
        total += w * vdm;
        // odometer
        let mut pos = 0;
        loop {
            if pos == n {
                let nf = n as f64;
                let jac = (0.5 * nf + 0.5 * nf * (nf - 1.0)) * (2.0 / nf).ln();
                return total.ln() + jac;
            }
            idx[pos] += 1;
            if idx[pos] < points {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
