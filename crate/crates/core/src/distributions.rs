//! Scalar entry laws: samplers, densities, score functions and the regularity functionals
//! that gate the Wegner-type estimates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::quadrature;
use crate::rng::{Domain, TrialStream};

/// Absolute tolerance of every density functional computed here.
pub const QUADRATURE_ABS_TOL: f64 = 1e-10;
/// Integrals larger than this are reported as divergent.
pub const DIVERGENCE_CAP: f64 = 1e12;
/// Gaussian-type tails are truncated where the density drops below this value.
const TAIL_DENSITY_CUTOFF: f64 = 1e-300;

/// The built-in families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinLaw {
    Gaussian,
    Uniform,
    /// Symmetric two-point law. Has no density.
    Bernoulli,
    /// Two-point law convolved with a centred Gaussian of width `sigma_mix`.
    SmoothedBernoulli,
}

impl BuiltinLaw {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinLaw::Gaussian => "gaussian",
            BuiltinLaw::Uniform => "uniform",
            BuiltinLaw::Bernoulli => "bernoulli",
            BuiltinLaw::SmoothedBernoulli => "smoothed_bernoulli",
        }
    }
}

impl FromStr for BuiltinLaw {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(BuiltinLaw::Gaussian),
            "uniform" => Ok(BuiltinLaw::Uniform),
            "bernoulli" => Ok(BuiltinLaw::Bernoulli),
            "smoothed_bernoulli" => Ok(BuiltinLaw::SmoothedBernoulli),
            other => Err(LabError::UnknownLaw(other.to_string())),
        }
    }
}

/// A centred scalar law with declared variance.
///
/// Immutable once built; sampling takes the generator explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    law: BuiltinLaw,
    variance: f64,
    /// Width of the Gaussian smoothing; only set for [`BuiltinLaw::SmoothedBernoulli`].
    sigma_mix: Option<f64>,
}

/// Value of a score integral `∫ (h'/h)^p h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreIntegral {
    Finite(f64),
    Divergent,
}

impl ScoreIntegral {
    pub fn is_finite(self) -> bool {
        matches!(self, ScoreIntegral::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ScoreIntegral::Finite(v) => Some(v),
            ScoreIntegral::Divergent => None,
        }
    }
}

/// Builds one of the built-in laws with mean zero and the requested variance.
///
/// `sigma_mix` is required for `smoothed_bernoulli` (with `0 < sigma_mix < √variance`) and
/// rejected for every other family.
pub fn make_builtin(
    law: BuiltinLaw,
    variance: f64,
    sigma_mix: Option<f64>,
) -> Result<EntryDistribution> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(invalid(format!("variance must be positive, got {variance}")));
    }
    match (law, sigma_mix) {
        (BuiltinLaw::SmoothedBernoulli, Some(s)) => {
            if !(s > 0.0 && s * s < variance) {
                return Err(invalid(format!(
                    "smoothed_bernoulli needs 0 < sigma_mix < sqrt(variance) = {}, got {s}",
                    variance.sqrt()
                )));
            }
        }
        (BuiltinLaw::SmoothedBernoulli, None) => {
            return Err(invalid("smoothed_bernoulli requires sigma_mix"));
        }
        (_, Some(_)) => {
            return Err(invalid(format!("{} takes no sigma_mix", law.name())));
        }
        (_, None) => {}
    }
    Ok(EntryDistribution { law, variance, sigma_mix })
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl EntryDistribution {
    pub fn law(&self) -> BuiltinLaw {
        self.law
    }

    pub fn name(&self) -> &'static str {
        self.law.name()
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma_mix(&self) -> Option<f64> {
        self.sigma_mix
    }

    pub fn has_density(&self) -> bool {
        self.law != BuiltinLaw::Bernoulli
    }

    /// Half-width of the uniform support.
    fn uniform_half_width(&self) -> f64 {
        (3.0 * self.variance).sqrt()
    }

    /// Location `a` of the two atoms (or mixture centres) of the Bernoulli families.
    fn atom(&self) -> f64 {
        match self.sigma_mix {
            Some(s) => (self.variance - s * s).sqrt(),
            None => self.variance.sqrt(),
        }
    }

    /// Exponent ν with `E exp(ν x²) < ∞`. Metadata only.
    pub fn subgaussian_nu(&self) -> f64 {
        match self.law {
            BuiltinLaw::Gaussian => 1.0 / (4.0 * self.variance),
            BuiltinLaw::SmoothedBernoulli => {
                let s = self.sigma_mix.expect("smoothed law has sigma_mix");
                1.0 / (4.0 * s * s)
            }
            // bounded support: any ν works
            BuiltinLaw::Uniform | BuiltinLaw::Bernoulli => 1.0 / self.variance,
        }
    }

    /// The density `h(s)`, or `None` for laws without one.
    pub fn density(&self, s: f64) -> Option<f64> {
        match self.law {
            BuiltinLaw::Gaussian => {
                let sd = self.variance.sqrt();
                Some(std_normal_pdf(s / sd) / sd)
            }
            BuiltinLaw::Uniform => {
                let a = self.uniform_half_width();
                Some(if s.abs() <= a { 0.5 / a } else { 0.0 })
            }
            BuiltinLaw::Bernoulli => None,
            BuiltinLaw::SmoothedBernoulli => {
                let sig = self.sigma_mix?;
                let a = self.atom();
                Some(0.5 * (std_normal_pdf((s - a) / sig) + std_normal_pdf((s + a) / sig)) / sig)
            }
        }
    }

    /// The score `h'(s)/h(s)`, where the density is differentiable at `s`.
    ///
    /// The uniform law has score 0 strictly inside its support and none at or beyond the
    /// edges.
    pub fn score(&self, s: f64) -> Option<f64> {
        match self.law {
            BuiltinLaw::Gaussian => Some(-s / self.variance),
            BuiltinLaw::Uniform => (s.abs() < self.uniform_half_width()).then_some(0.0),
            BuiltinLaw::Bernoulli => None,
            BuiltinLaw::SmoothedBernoulli => {
                let sig2 = self.sigma_mix? * self.sigma_mix?;
                let a = self.atom();
                Some((-s + a * (a * s / sig2).tanh()) / sig2)
            }
        }
    }

    /// Same family rescaled to a new variance (the shape is kept, so `sigma_mix` scales too).
    pub fn rescaled(&self, variance: f64) -> Result<EntryDistribution> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(invalid(format!("variance must be positive, got {variance}")));
        }
        let scale = (variance / self.variance).sqrt();
        make_builtin(self.law, variance, self.sigma_mix.map(|s| s * scale))
    }

    /// Draws one value.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            BuiltinLaw::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                z * self.variance.sqrt()
            }
            BuiltinLaw::Uniform => {
                let a = self.uniform_half_width();
                rng.random_range(-a..=a)
            }
            BuiltinLaw::Bernoulli => {
                let a = self.atom();
                if rng.random::<bool>() {
                    a
                } else {
                    -a
                }
            }
            BuiltinLaw::SmoothedBernoulli => {
                let a = self.atom();
                let centre = if rng.random::<bool>() { a } else { -a };
                let z: f64 = rng.sample(StandardNormal);
                centre + self.sigma_mix.expect("smoothed law has sigma_mix") * z
            }
        }
    }

    /// `n` iid draws, fully determined by `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut stream = TrialStream::new(seed, Domain::Sample, 0);
        let rng = stream.sequential();
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Finite interval carrying all of the density's mass that is representable in `f64`.
    fn integration_range(&self) -> Option<(f64, f64)> {
        match self.law {
            BuiltinLaw::Bernoulli => None,
            BuiltinLaw::Uniform => {
                let a = self.uniform_half_width();
                Some((-a, a))
            }
            BuiltinLaw::Gaussian | BuiltinLaw::SmoothedBernoulli => {
                let mut l = self.variance.sqrt();
                while self.density(l)? >= TAIL_DENSITY_CUTOFF {
                    l *= 1.25;
                }
                Some((-l, l))
            }
        }
    }

    /// `∫ f(s) h(s) ds` over the (truncated) support.
    fn integrate_against_density(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = self
            .integration_range()
            .ok_or_else(|| LabError::NoDensity(self.to_string()))?;
        let q = quadrature::integrate(
            |s| {
                let h = self.density(s).unwrap_or(0.0);
                if h == 0.0 {
                    0.0
                } else {
                    f(s) * h
                }
            },
            lo,
            hi,
            256,
            QUADRATURE_ABS_TOL,
            1e-13,
        );
        Ok(q.value)
    }

    /// Total mass of the density (should be 1).
    pub fn density_mass(&self) -> Result<f64> {
        self.integrate_against_density(|_| 1.0)
    }

    /// `∫ s^4 h(s) ds`.
    pub fn fourth_moment(&self) -> Result<f64> {
        match self.law {
            BuiltinLaw::Bernoulli => Ok(self.variance * self.variance),
            _ => self.integrate_against_density(|s| s.powi(4)),
        }
    }

    /// `∫ (h'/h)^power h ds` for `power ∈ {2, 4}`.
    ///
    /// Laws without a density are an error. The uniform law's density jumps at the edges,
    /// so its score integral is reported as divergent.
    pub fn score_integral(&self, power: u32) -> Result<ScoreIntegral> {
        if power != 2 && power != 4 {
            return Err(invalid(format!("score integral power must be 2 or 4, got {power}")));
        }
        if !self.has_density() {
            return Err(LabError::NoDensity(self.to_string()));
        }
        if self.law == BuiltinLaw::Uniform {
            return Ok(ScoreIntegral::Divergent);
        }
        let value = self.integrate_against_density(|s| {
            self.score(s).expect("smooth law has a score").powi(power as i32)
        })?;
        if !value.is_finite() || value > DIVERGENCE_CAP {
            Ok(ScoreIntegral::Divergent)
        } else {
            Ok(ScoreIntegral::Finite(value))
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.variance)?;
        if let Some(s) = self.sigma_mix {
            write!(f, ":{s}")?;
        }
        Ok(())
    }
}

impl FromStr for EntryDistribution {
    type Err = LabError;

    /// Parses `name:variance[:sigma_mix]`, e.g. `gaussian:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(LabError::MalformedLaw(s.to_string()));
        }
        let law: BuiltinLaw = parts[0].parse()?;
        let variance: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| LabError::MalformedLaw(s.to_string()))?;
        let sigma_mix = parts
            .get(2)
            .map(|p| p.trim().parse::<f64>().map_err(|_| LabError::MalformedLaw(s.to_string())))
            .transpose()?;
        make_builtin(law, variance, sigma_mix)
    }
}
