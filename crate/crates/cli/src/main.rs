use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use wigner_lab::harness::{parse_spec, run, RunConfig, Study};
use wigner_lab::invmom::FrameRule;
use wigner_lab::spectral::{Normalization, ScaleRule, DEFAULT_MESO_THETA};
use wigner_lab::universality::DEFAULT_BIN_WIDTH;
use wigner_lab::LabError;

/// Monte Carlo spectral statistics of Wigner matrices.
#[derive(Debug, Parser)]
#[command(name = "wigner-lab", version)]
struct Cli {
    /// Master seed; every random stream is derived from it and the trial index.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Trials (or samples, for invmom and gue-oracle).
    #[arg(long, global = true, default_value_t = 1000)]
    trials: u64,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, env = "WIGNER_LAB_JOBS", default_value_t = 1)]
    jobs: usize,
    /// CSV output; printed to stdout when absent. The manifest goes to <path>.manifest.json.
    #[arg(long, global = true)]
    out_csv: Option<PathBuf>,
    #[arg(long, global = true)]
    out_json: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Ensemble {
    /// Off-diagonal component law, name:variance[:sigma_mix].
    #[arg(long, default_value = "gaussian:0.5")]
    spec: String,
    /// Diagonal law; defaults to the off-diagonal family at unit variance.
    #[arg(long)]
    diag: Option<String>,
    #[arg(long = "N", default_value_t = 100)]
    n: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Density of states on macroscopic, mesoscopic and microscopic windows.
    Dos {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        /// Fixed window widths.
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
        /// Width N^{-theta}.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        /// Width K/N.
        #[arg(long = "K", value_delimiter = ',')]
        k: Vec<f64>,
        /// Report raw counts instead of counts per unit length.
        #[arg(long)]
        raw: bool,
    },
    /// Probability of an eigenvalue in [E - eps/2N, E + eps/2N].
    Wegner {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Tail of the rescaled gap above E; with --omega-eps, the six-nearest spread of a minor.
    Gaps {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        #[arg(long = "K", value_delimiter = ',', default_value = "1,2,4,8,16")]
        k: Vec<f64>,
        #[arg(long)]
        omega_eps: Option<f64>,
        /// Dimensions for --omega-eps; defaults to --N.
        #[arg(long, value_delimiter = ',')]
        n_grid: Vec<usize>,
    },
    /// Normalized l^p norms of eigenvectors with eigenvalue within K/N of E.
    Deloc {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        #[arg(long = "K", default_value_t = 5.0)]
        k: f64,
        /// p > 2, or "inf".
        #[arg(long, default_value = "4")]
        p: String,
    },
    /// Rescaled two-point correlation against 1 - S(s)^2.
    Corr {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        #[arg(long = "W", default_value_t = 10.0)]
        w: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1,1.25,1.5,1.75,2,2.5,3")]
        s: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
        bin_width: f64,
    },
    /// Inverse moments of overlap sums against an orthonormal frame.
    Invmom {
        /// Law of the real and imaginary parts.
        #[arg(long, default_value = "gaussian:0.5")]
        law: String,
        #[arg(long, value_delimiter = ',', default_value = "3")]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        r: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        n_grid: Vec<usize>,
        /// standard_basis, random_orthonormal or fourier_rows.
        #[arg(long, default_value = "standard_basis")]
        frame: String,
        #[arg(long, default_value_t = 0)]
        frame_seed: u64,
        /// Overrides --trials.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Schur complement against direct inversion, with the decomposition identities.
    SchurCheck {
        #[command(flatten)]
        ensemble: Ensemble,
        #[arg(long = "E", default_value_t = 0.0, allow_negative_numbers = true)]
        e: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// 2 x 2 GUE histogram against the joint eigenvalue density, or the log density at
    /// given eigenvalues.
    GueOracle {
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eigenvalues: Vec<f64>,
    },
}

fn frame_rule(name: &str, seed: u64) -> Result<FrameRule, LabError> {
    match name {
        "standard_basis" => Ok(FrameRule::StandardBasis),
        "random_orthonormal" => Ok(FrameRule::RandomOrthonormal { seed }),
        "fourier_rows" => Ok(FrameRule::FourierRows),
        other => Err(LabError::InvalidParameter(format!("unknown frame `{other}`"))),
    }
}

fn parse_p(p: &str) -> Result<f64, LabError> {
    if p.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    p.parse().map_err(|_| LabError::InvalidParameter(format!("cannot parse p = `{p}`")))
}

fn build(cli: Cli, argv: Vec<String>) -> Result<RunConfig, LabError> {
    let seed = cli.seed;
    let mut trials = cli.trials;
    let spec_of = |e: &Ensemble| parse_spec(&e.spec, e.diag.as_deref(), e.n, seed);
    let (spec, study) = match cli.command {
        Command::Dos { ensemble, e, eta, theta, k, raw } => {
            let mut rules: Vec<ScaleRule> = eta.into_iter().map(|eta| ScaleRule::Macro { eta }).collect();
            rules.extend(theta.into_iter().map(|theta| ScaleRule::Meso { theta }));
            rules.extend(k.into_iter().map(|k| ScaleRule::Micro { k }));
            if rules.is_empty() {
                rules.push(ScaleRule::Meso { theta: DEFAULT_MESO_THETA });
            }
            let normalization = if raw { Normalization::RawCount } else { Normalization::PerUnitLength };
            (spec_of(&ensemble)?, Study::Dos { e, rules, normalization })
        }
        Command::Wegner { ensemble, e, kappa, eps } => {
            (spec_of(&ensemble)?, Study::Wegner { e, kappa, epsilon_grid: eps })
        }
        Command::Gaps { ensemble, e, k, omega_eps, n_grid } => {
            let spec = spec_of(&ensemble)?;
            let study = match omega_eps {
                Some(epsilon) => {
                    let n_grid = if n_grid.is_empty() { vec![ensemble.n] } else { n_grid };
                    Study::DeltaTail { e, epsilon, k_grid: k, n_grid }
                }
                None => Study::Gaps { e, k_grid: k },
            };
            (spec, study)
        }
        Command::Deloc { ensemble, e, k, p } => (spec_of(&ensemble)?, Study::Deloc { e, k, p: parse_p(&p)? }),
        Command::Corr { ensemble, e, w, s, bin_width } => {
            (spec_of(&ensemble)?, Study::Corr { e, s_grid: s, w, bin_width })
        }
        Command::Invmom { law, m, r, n_grid, frame, frame_seed, samples } => {
            let pairs: Vec<(usize, u32)> =
                m.iter().flat_map(|&m| r.iter().map(move |&r| (m, r))).filter(|&(m, r)| m > r as usize).collect();
            if pairs.is_empty() {
                return Err(LabError::InvalidParameter("no (m, r) pair with m > r".into()));
            }
            if let Some(s) = samples {
                trials = s;
            }
            let law = law.parse()?;
            let spec = parse_spec("gaussian:0.5", None, 2, seed)?;
            (spec, Study::InvMom { n_grid, pairs, frame: frame_rule(&frame, frame_seed)?, law })
        }
        Command::SchurCheck { ensemble, e, eps } => (spec_of(&ensemble)?, Study::SchurCheck { e, epsilon: eps }),
        Command::GueOracle { grid, half_width, eigenvalues } => {
            let study = if eigenvalues.is_empty() {
                Study::GueOracle { grid, half_width }
            } else {
                Study::GueDensity { eigenvalues }
            };
            (parse_spec("gaussian:0.5", None, 2, seed)?, study)
        }
    };
    Ok(RunConfig { study, spec, trials, jobs: cli.jobs, out_csv: cli.out_csv, out_json: cli.out_json, argv })
}

fn error_record(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return error_record("usage", e.render().to_string().trim()),
    };
    let config = match build(cli, argv) {
        Ok(c) => c,
        Err(e) => return error_record(e.kind(), &e.to_string()),
    };
    match run(&config) {
        Ok(outcome) => {
            for flag in &outcome.report.flags {
                eprintln!("{}", json!({"warning": flag}));
            }
            if config.out_csv.is_none() {
                let mut out = std::io::stdout().lock();
                if out.write_all(outcome.report.to_csv().as_bytes()).is_err() {
                    return error_record("io", "cannot write to stdout");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => error_record(e.kind(), &e.to_string()),
    }
}
