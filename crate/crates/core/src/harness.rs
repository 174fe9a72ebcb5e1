//! Run configuration, study dispatch and artifact persistence.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{json, Value};

use crate::distributions::EntryDistribution;
use crate::ensemble::{gue_log_joint_density, EnsembleSpec};
use crate::error::{invalid, Result};
use crate::invmom::{estimate_inverse_moment, FrameRule, InverseMomentQuery};
use crate::oracle::{gue_histogram_test, GueHistogramQuery};
use crate::report::{ReportRow, StatReport};
use crate::schur::{delta_tail, schur_check};
use crate::spectral::{dos_estimate, DosQuery, Normalization, ScaleRule};
use crate::trials::Executor;
use crate::universality::{deloc_statistic, two_point_correlation, CorrelationQuery, DelocQuery};
use crate::wegner::{gap_tail, wegner_probability, WegnerQuery};

/// A study and its parameters. Dimension, laws, seed and trial count live in [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub enum Study {
    Dos { e: f64, rules: Vec<ScaleRule>, normalization: Normalization },
    Wegner { e: f64, kappa: f64, epsilon_grid: Vec<f64> },
    Gaps { e: f64, k_grid: Vec<f64> },
    /// Ω-restricted tail of the six-nearest spread of the first row's minor.
    DeltaTail { e: f64, epsilon: f64, k_grid: Vec<f64>, n_grid: Vec<usize> },
    Deloc { e: f64, k: f64, p: f64 },
    Corr { e: f64, s_grid: Vec<f64>, w: f64, bin_width: f64 },
    InvMom { n_grid: Vec<usize>, pairs: Vec<(usize, u32)>, frame: FrameRule, law: EntryDistribution },
    SchurCheck { e: f64, epsilon: f64 },
    GueOracle { grid: usize, half_width: f64 },
    GueDensity { eigenvalues: Vec<f64> },
}

fn frame_json(f: &FrameRule) -> Value {
    match f {
        FrameRule::RandomOrthonormal { seed } => json!({"rule": f.label(), "seed": seed}),
        _ => json!({"rule": f.label()}),
    }
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Dos { .. } => "dos",
            Study::Wegner { .. } => "wegner",
            Study::Gaps { .. } => "gaps",
            Study::DeltaTail { .. } => "delta-tail",
            Study::Deloc { .. } => "deloc",
            Study::Corr { .. } => "corr",
            Study::InvMom { .. } => "invmom",
            Study::SchurCheck { .. } => "schur-check",
            Study::GueOracle { .. } => "gue-oracle",
            Study::GueDensity { .. } => "gue-density",
        }
    }

    pub fn to_json(&self) -> Value {
        let params = match self {
            Study::Dos { e, rules, normalization } => json!({
                "E": e,
                "rules": rules.iter().map(|r| json!({"scale": r.label(), "parameter": r.parameter()})).collect::<Vec<_>>(),
                "normalization": match normalization { Normalization::PerUnitLength => "per_unit_length", Normalization::RawCount => "raw_count" },
            }),
            Study::Wegner { e, kappa, epsilon_grid } => json!({"E": e, "kappa": kappa, "eps": epsilon_grid}),
            Study::Gaps { e, k_grid } => json!({"E": e, "K": k_grid}),
            Study::DeltaTail { e, epsilon, k_grid, n_grid } => {
                json!({"E": e, "eps": epsilon, "K": k_grid, "N_grid": n_grid})
            }
            Study::Deloc { e, k, p } => json!({"E": e, "K": k, "p": if p.is_infinite() { json!("inf") } else { json!(p) }}),
            Study::Corr { e, s_grid, w, bin_width } => json!({"E": e, "s": s_grid, "W": w, "bin_width": bin_width}),
            Study::InvMom { n_grid, pairs, frame, law } => json!({
                "N_grid": n_grid, "pairs": pairs, "frame": frame_json(frame), "law": law.to_string(),
            }),
            Study::SchurCheck { e, epsilon } => json!({"E": e, "eps": epsilon}),
            Study::GueOracle { grid, half_width } => json!({"grid": grid, "half_width": half_width}),
            Study::GueDensity { eigenvalues } => json!({"eigenvalues": eigenvalues}),
        };
        json!({"study": self.name(), "parameters": params})
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub study: Study,
    /// Ensemble with dimension and master seed.
    pub spec: EnsembleSpec,
    pub trials: u64,
    pub jobs: usize,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    /// The command line, echoed into the manifest.
    pub argv: Vec<String>,
}

/// Parses the off-diagonal law `name:variance[:sigma_mix]` and an optional diagonal law.
/// Without one, the diagonal uses the off-diagonal family at unit variance.
pub fn parse_spec(offdiag: &str, diag: Option<&str>, n: usize, seed: u64) -> Result<EnsembleSpec> {
    let off: EntryDistribution = offdiag.parse()?;
    match diag {
        Some(d) => EnsembleSpec::new(n, off, d.parse()?, seed),
        None => EnsembleSpec::with_default_diagonal(n, off, seed),
    }
}

/// Everything needed to reproduce a run, plus when it ran.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub trials: u64,
    pub jobs: usize,
    pub requested_trials: u64,
    pub failed_trials: u64,
    pub flags: Vec<String>,
    pub outputs: Vec<String>,
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: StatReport,
    pub manifest: RunManifest,
    pub manifest_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        for path in self.out_csv.iter().chain(&self.out_json) {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(invalid(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "study": self.study.to_json(),
            "N": self.spec.n(),
            "offdiag": self.spec.offdiag().to_string(),
            "diag": self.spec.diag().to_string(),
            "seed": self.spec.seed(),
            "trials": self.trials,
        })
    }

    /// Where the manifest goes: next to the CSV, else next to the JSON.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.out_csv.as_ref().or(self.out_json.as_ref()).map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    }
}

/// Computes the study's report without touching the filesystem.
pub fn execute(config: &RunConfig, exec: &Executor) -> Result<StatReport> {
    let spec = &config.spec;
    let trials = config.trials;
    match &config.study {
        Study::Dos { e, rules, normalization } => dos_estimate(
            spec,
            &DosQuery { e: *e, rules: rules.clone(), normalization: *normalization, trials },
            exec,
        ),
        Study::Wegner { e, kappa, epsilon_grid } => wegner_probability(
            spec,
            &WegnerQuery { e: *e, kappa: *kappa, epsilon_grid: epsilon_grid.clone(), trials },
            exec,
        ),
        Study::Gaps { e, k_grid } => gap_tail(spec, *e, k_grid, trials, exec),
        Study::DeltaTail { e, epsilon, k_grid, n_grid } => delta_tail(spec, n_grid, *e, *epsilon, k_grid, trials, exec),
        Study::Deloc { e, k, p } => deloc_statistic(spec, &DelocQuery { e: *e, k: *k, p: *p, trials }, exec),
        Study::Corr { e, s_grid, w, bin_width } => two_point_correlation(
            spec,
            &CorrelationQuery { e: *e, s_grid: s_grid.clone(), w: *w, bin_width: *bin_width, trials },
            exec,
        ),
        Study::InvMom { n_grid, pairs, frame, law } => estimate_inverse_moment(
            &InverseMomentQuery {
                n_grid: n_grid.clone(),
                pairs: pairs.clone(),
                frame: frame.clone(),
                law: law.clone(),
                samples: trials,
                seed: spec.seed(),
            },
            exec,
        ),
        Study::SchurCheck { e, epsilon } => schur_check(spec, *e, *epsilon, trials, exec),
        Study::GueOracle { grid, half_width } => gue_histogram_test(
            &GueHistogramQuery { grid: *grid, half_width: *half_width, samples: trials, seed: spec.seed() },
            exec,
        ),
        Study::GueDensity { eigenvalues } => {
            let d = gue_log_joint_density(eigenvalues)?;
            let mut report = StatReport::new("gue-density", 1);
            report.rows.push(ReportRow {
                statistic: "gue_log_density".into(),
                e: f64::NAN,
                scale: "joint".into(),
                n: eigenvalues.len(),
                k_or_eta: f64::NAN,
                estimate: d.value,
                stderr: 0.0,
                trials: 1,
                seed: spec.seed(),
                extra: vec![("normalized".into(), f64::from(u8::from(d.normalized)))],
            });
            if !d.normalized {
                report.flags.push("normalizing constant omitted for N > 4".into());
            }
            Ok(report)
        }
    }
}

fn seeds_of(config: &RunConfig) -> Vec<u64> {
    let mut seeds = vec![config.spec.seed()];
    if let Study::InvMom { frame: FrameRule::RandomOrthonormal { seed }, .. } = &config.study {
        seeds.push(*seed);
    }
    seeds
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs the study and writes the CSV, JSON and manifest that were asked for.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let started = timestamp();
    let exec = Executor::new(config.jobs)?;
    let report = execute(config, &exec)?;
    let mut outputs = Vec::new();
    if let Some(path) = &config.out_csv {
        report.write_csv(BufWriter::new(File::create(path)?))?;
        outputs.push(path.display().to_string());
    }
    if let Some(path) = &config.out_json {
        report.write_json(BufWriter::new(File::create(path)?))?;
        outputs.push(path.display().to_string());
    }
    let manifest = RunManifest {
        tool: "wigner-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        argv: config.argv.clone(),
        config: config.to_json(),
        master_seed: config.spec.seed(),
        seeds: seeds_of(config),
        trials: config.trials,
        jobs: exec.jobs(),
        requested_trials: report.requested_trials,
        failed_trials: report.failed_trials,
        flags: report.flags.clone(),
        outputs,
        started,
        finished: timestamp(),
    };
    let manifest_path = config.manifest_path();
    if let Some(path) = &manifest_path {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        std::io::Write::write_all(&mut w, b"\n")?;
    }
    Ok(RunOutcome { report, manifest, manifest_path })
}
