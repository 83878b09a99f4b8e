use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sodsim::datagen::{gen_lowerbound_dataset, gen_pu_dataset, Example, LowerBoundConfig, PuConfig};
use sodsim::experiments::{
    classification_metrics, grid_minimize_theta, run_lowerbound_study, run_pu_comparison,
    write_lowerbound_csv, write_pu_csv, write_slope_csv, LowerBoundStudyConfig, PuStudyConfig,
};
use sodsim::isotonic::{predict_link, StepLink};
use sodsim::linalg::RngHandle;
use sodsim::solver;

use crate::config::{parse_config, Config};
use crate::error::{CliError, CliResult};
use crate::io::{create, read_dataset, write_dataset, write_json, write_link};

const EXIT_HELP: &str = "\
Exit status:
  0  success
  2  usage or configuration error
  3  data error (unreadable file, bad CSV schema, dimension mismatch)
  4  numerical error (degenerate input, stalled sampler)";

#[derive(Debug, Parser)]
#[command(name = "sodsim", version, about = "Sparse monotone single-index estimation and simulation studies", after_help = EXIT_HELP)]
pub struct Cli {
    /// TOML config with [data], [sodsim], [baselines], [experiment] sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Config override `section.key=value`; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for replication fan-out.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_defaults: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit SOD-SIM to a dataset CSV; writes fit.json and link.csv.
    Fit {
        /// Dataset with columns x_1..x_p,y (defaults to data.input).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score a test CSV with a saved fit; writes metrics.json.
    Eval {
        /// Fit produced by `fit` (defaults to <out>/fit.json).
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Test dataset (defaults to data.test).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Decision threshold (defaults to experiment.threshold).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Draw one PU dataset; writes pu_data.csv.
    SimulatePu,
    /// SOD-SIM versus sparse logistic regression on PU data; writes pu_comparison.csv.
    PuStudy,
    /// θ-grid convergence-rate study; writes lowerbound.csv and slope.csv.
    Lowerbound,
    /// θ-grid global minimizer on a two-column dataset; writes gridmin.json.
    Gridmin {
        /// Two-column dataset (defaults to data.input, else a generated one).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub index: usize,
    pub value: f64,
}

/// Serialized SOD-SIM fit. `index` is zero-based (column `x_{index+1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub p: usize,
    pub s: usize,
    pub u_hat: Vec<Coefficient>,
    pub iterations: usize,
    pub converged: bool,
    pub loss: f64,
    pub loss_trace: Vec<f64>,
    pub knots: Vec<f64>,
    pub levels: Vec<f64>,
}

impl FitRecord {
    pub fn dense_u(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.p];
        for c in &self.u_hat {
            u[c.index] = c.value;
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub n: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub brier: f64,
    /// `null` when the test labels hold a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridminRecord {
    pub theta: f64,
    pub u: [f64; 2],
    pub loss: f64,
    pub increment: f64,
}

fn input_path(flag: Option<PathBuf>, fallback: &Option<String>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("no {what} given (use --input or the config)")))
}

pub fn cmd_fit(cfg: &Config, input: &Path, out: &Path) -> CliResult<FitRecord> {
    let data = read_dataset(input)?;
    let mut sod = cfg.sodsim_config()?;
    sod.record_trajectory = true;
    let fit = solver::fit(&data.x, &data.y, &sod)?;
    let record = FitRecord {
        p: data.x.n_cols(),
        s: sod.s.get(),
        u_hat: fit
            .u_hat
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(index, &value)| Coefficient { index, value })
            .collect(),
        iterations: fit.iterations,
        converged: fit.converged,
        loss: fit.loss,
        loss_trace: fit
            .trajectory
            .unwrap_or_default()
            .iter()
            .map(|t| t.loss)
            .collect(),
        knots: fit.link.knots().to_vec(),
        levels: fit.link.levels().to_vec(),
    };
    write_json(&out.join("fit.json"), &record)?;
    write_link(&out.join("link.csv"), &fit.link)?;
    Ok(record)
}

pub fn read_fit(path: &Path) -> CliResult<FitRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let record: FitRecord = serde_json::from_str(&text).map_err(|e| CliError::schema(path, e.to_string()))?;
    if let Some(c) = record.u_hat.iter().find(|c| c.index >= record.p) {
        return Err(CliError::schema(
            path,
            format!("coefficient index {} ≥ p = {}", c.index, record.p),
        ));
    }
    Ok(record)
}

pub fn cmd_eval(fit: &FitRecord, test: &Path, threshold: f64, out: &Path) -> CliResult<MetricsRecord> {
    let data = read_dataset(test)?;
    if data.x.n_cols() != fit.p {
        return Err(sodsim::Error::DimensionMismatch(format!(
            "fit has p = {}, test data has p = {}",
            fit.p,
            data.x.n_cols()
        ))
        .into());
    }
    let link = StepLink::new(fit.knots.clone(), fit.levels.clone())?;
    let scores = data.x.matvec(&fit.dense_u());
    let probs: Vec<f64> = scores
        .iter()
        .map(|&s| predict_link(&link, s).clamp(0.0, 1.0))
        .collect();
    let m = classification_metrics(&probs, &data.y, threshold)?;
    let record = MetricsRecord {
        n: data.y.len(),
        threshold,
        accuracy: m.accuracy,
        f1: m.f1,
        brier: m.brier,
        auc: m.auc,
    };
    write_json(&out.join("metrics.json"), &record)?;
    Ok(record)
}

pub fn cmd_simulate_pu(cfg: &Config, seed: u64, out: &Path) -> CliResult<()> {
    let mut pu = PuConfig::with_defaults(cfg.data.p, RngHandle::new(seed, 0))?;
    pu.n_pos = cfg.data.n_pos;
    pu.n_unl = cfg.data.n_unl;
    pu.rho = cfg.data.rho;
    let data = gen_pu_dataset(&pu)?;
    write_dataset(&out.join("pu_data.csv"), &data)
}

pub fn pu_study_config(cfg: &Config, seed: u64) -> CliResult<PuStudyConfig> {
    Ok(PuStudyConfig {
        ps: cfg.experiment.ps.clone(),
        reps: cfg.experiment.reps,
        n_pos: cfg.data.n_pos,
        n_unl: cfg.data.n_unl,
        rho: cfg.data.rho,
        sodsim: cfg.sodsim_config()?,
        logistic: cfg.logistic_config(),
        folds: cfg.baselines.folds,
        lambda_count: cfg.baselines.lambda_count,
        lambda_ratio: cfg.baselines.lambda_ratio,
        seed,
    })
}

pub fn cmd_pu_study(cfg: &Config, seed: u64, out: &Path) -> CliResult<()> {
    let rows = run_pu_comparison(&pu_study_config(cfg, seed)?)?;
    for r in rows.iter().filter(|r| r.failed > 0) {
        log::warn!(
            "{} p={}: {} replications excluded",
            r.method,
            r.tag("p").unwrap_or("?"),
            r.failed
        );
    }
    let path = out.join("pu_comparison.csv");
    write_pu_csv(&rows, create(&path)?).map_err(|e| CliError::io(&path, e))
}

fn example_of(k: u8) -> Example {
    if k == 2 {
        Example::Two
    } else {
        Example::One
    }
}

pub fn lowerbound_study_config(cfg: &Config, example: Example, seed: u64) -> LowerBoundStudyConfig {
    let mut study = LowerBoundStudyConfig::new(example);
    study.ns = cfg.experiment.ns.clone();
    study.reps = cfg.experiment.reps;
    study.increment = cfg.experiment.increment;
    study.epsilon = cfg.data.epsilon;
    study.sigma = cfg.data.sigma.unwrap_or(study.sigma);
    study.sd1 = cfg.data.sd1.unwrap_or(study.sd1);
    study.sd2 = cfg.data.sd2.unwrap_or(study.sd2);
    study.seed = seed;
    study
}

pub fn cmd_lowerbound(cfg: &Config, seed: u64, out: &Path) -> CliResult<()> {
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &k in &cfg.experiment.examples {
        let example = example_of(k);
        let study = run_lowerbound_study(&lowerbound_study_config(cfg, example, seed))?;
        rows.extend(study.rows);
        slopes.push((example, study.slope));
    }
    let path = out.join("lowerbound.csv");
    write_lowerbound_csv(&rows, create(&path)?).map_err(|e| CliError::io(&path, e))?;
    let path = out.join("slope.csv");
    write_slope_csv(&slopes, create(&path)?).map_err(|e| CliError::io(&path, e))
}

pub fn cmd_gridmin(cfg: &Config, input: Option<PathBuf>, seed: u64, out: &Path) -> CliResult<GridminRecord> {
    let (x, y) = match input.or_else(|| cfg.data.input.as_ref().map(PathBuf::from)) {
        Some(path) => {
            let d = read_dataset(&path)?;
            (d.x, d.y)
        }
        None => {
            let mut lb = LowerBoundConfig::new(cfg.example(), cfg.data.n, RngHandle::new(seed, 0));
            lb.epsilon = cfg.data.epsilon;
            lb.sigma = cfg.data.sigma.unwrap_or(lb.sigma);
            lb.sd1 = cfg.data.sd1.unwrap_or(lb.sd1);
            lb.sd2 = cfg.data.sd2.unwrap_or(lb.sd2);
            let d = gen_lowerbound_dataset(&lb)?;
            (d.x, d.y)
        }
    };
    let fit = grid_minimize_theta(&x, &y, cfg.experiment.increment)?;
    let record = GridminRecord {
        theta: fit.theta,
        u: fit.u,
        loss: fit.loss,
        increment: cfg.experiment.increment,
    };
    write_json(&out.join("gridmin.json"), &record)?;
    Ok(record)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = parse_config(cli.config.as_deref(), &cli.overrides)?;
    if cli.print_defaults {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let command = cli
        .command
        .ok_or_else(|| CliError::Usage("no subcommand given (see --help)".into()))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let (seed, out) = (cli.seed, cli.out.as_path());

    let dispatch = move || -> CliResult<()> {
        match command {
            Command::Fit { input } => {
                let input = input_path(input, &cfg.data.input, "input dataset")?;
                cmd_fit(&cfg, &input, out).map(drop)
            }
            Command::Eval {
                fit,
                input,
                threshold,
            } => {
                let fit = read_fit(&fit.unwrap_or_else(|| out.join("fit.json")))?;
                let input = input_path(input, &cfg.data.test, "test dataset")?;
                cmd_eval(&fit, &input, threshold.unwrap_or(cfg.experiment.threshold), out).map(drop)
            }
            Command::SimulatePu => cmd_simulate_pu(&cfg, seed, out),
            Command::PuStudy => cmd_pu_study(&cfg, seed, out),
            Command::Lowerbound => cmd_lowerbound(&cfg, seed, out),
            Command::Gridmin { input } => cmd_gridmin(&cfg, input, seed, out).map(drop),
        }
    };
    match cli.threads {
        Some(0) => Err(CliError::RangeViolation {
            key: "--threads".into(),
            reason: "must be at least 1".into(),
        }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?
            .install(dispatch),
        None => dispatch(),
    }
}
