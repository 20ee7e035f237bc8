//! Command-line front end and the CSV/JSON result writers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::circuits::CircuitSpec;
use crate::diff::{finite_diff_gradient, gradient};
use crate::experiments::{self, Cell, ConfigError, ExperimentConfig, ExperimentId, ExperimentResult, DEFAULT_SEED};
use crate::noise::{sample_kicks, KickStream, NoiseModel};
use crate::trainer::{loss_on_kicks, train, NoiseMode, Sampling, TrainConfig};

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("cannot create output directory {path}: {source}")]
    CreateDir { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot serialize {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Parser)]
#[command(
    name = "difga",
    version,
    about = "Differentiable Gaussian error mitigation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one of the named experiments and write its table.
    Run {
        experiment_id: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Single training run with explicit parameters.
    Train {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Phase-diagram style run over a custom eta/delta grid.
    Sweep {
        /// Comma-separated transmissivities.
        #[arg(long, value_delimiter = ',')]
        etas: Vec<f64>,
        /// Comma-separated jitter strengths.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Compare forward-mode gradients with central differences on random
    /// circuits.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// List the available experiments.
    List,
}

#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Monte-Carlo samples per evaluation (K).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub ancillas: Option<usize>,
    #[arg(long, env = "DIFGA_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Reuse one set of noise samples for every step (`--frozen-noise false`
    /// forces fresh samples).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub frozen_noise: Option<bool>,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CommonOpts {
    /// Folds the flags into the defaults of `id`.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), ConfigError> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("eta", self.eta.map(|v| v.to_string()));
        push("delta", self.delta.map(|v| v.to_string()));
        push("kappa", self.kappa.map(|v| v.to_string()));
        push("samples", self.samples.map(|v| v.to_string()));
        push("steps", self.steps.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("ancillas", self.ancillas.map(|v| v.to_string()));
        push("frozen_noise", self.frozen_noise.map(|v| v.to_string()));
        push("eval_samples", self.eval_samples.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("override `{kv}` is not KEY=VALUE")))?;
            pairs.push((k.trim().to_string(), v.to_string()));
        }
        config.seed = self.seed;
        for (k, v) in pairs {
            config.set(&k, &v)?;
        }
        config.validate()
    }
}

/// Shortest decimal that parses back to the same `f64`; scientific notation
/// outside `[1e-5, 1e16)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn cell_text(cell: &Cell) -> String {
    match cell {
        Cell::Int(n) => n.to_string(),
        Cell::Num(x) => format_number(*x),
        Cell::Text(s) => s.clone(),
        Cell::Missing => String::new(),
    }
}

pub fn write_csv(result: &ExperimentResult, path: &Path) -> Result<(), WriteError> {
    let csv_err = |source| WriteError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&result.columns).map_err(csv_err)?;
    for row in &result.rows {
        w.write_record(row.values.iter().map(cell_text)).map_err(csv_err)?;
    }
    w.flush().map_err(|source| WriteError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json(result: &ExperimentResult, path: &Path) -> Result<(), WriteError> {
    let text = serde_json::to_string_pretty(result).map_err(|source| WriteError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| WriteError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<experiment_id>.csv` and/or `<experiment_id>.json` into `out`.
pub fn write_results(result: &ExperimentResult, out: &Path, format: Format) -> Result<Vec<PathBuf>, WriteError> {
    fs::create_dir_all(out).map_err(|source| WriteError::CreateDir {
        path: out.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if matches!(format, Format::Csv | Format::Both) {
        let path = out.join(format!("{}.csv", result.experiment_id));
        write_csv(result, &path)?;
        written.push(path);
    }
    if matches!(format, Format::Json | Format::Both) {
        let path = out.join(format!("{}.json", result.experiment_id));
        write_json(result, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn report(result: &ExperimentResult, opts: &CommonOpts) -> anyhow::Result<bool> {
    let paths = write_results(result, &opts.out, opts.format)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    for (k, v) in &result.summary {
        println!("{k} = {}", cell_text(v));
    }
    for (i, row) in result.rows.iter().enumerate() {
        if let Some(e) = &row.error {
            eprintln!("row {i} failed: {e}");
        }
    }
    Ok(result.all_rows_ok())
}

fn run_train(opts: &CommonOpts) -> anyhow::Result<bool> {
    let mut config = ExperimentConfig::defaults(ExperimentId::ParamDynamics);
    config.deltas = vec![0.0];
    config.samples = vec![16];
    config.sampling = Sampling::Fresh;
    opts.apply(&mut config)?;
    let spec = &config.circuit;
    let delta = config.deltas[0];
    let model = NoiseModel {
        delta,
        kappa: config.kappa,
        samples: config.samples[0],
        seed: config.seed,
    };
    let mode = if delta == 0.0 {
        NoiseMode::GaussianOnly
    } else {
        NoiseMode::NgAware
    };
    let cfg = TrainConfig {
        learning_rate: config.learning_rate,
        steps: config.steps,
        init: None,
        noise_mode: mode,
        sampling: config.sampling,
    };
    let rec = train(spec, &model, &cfg)?;
    println!("initial_loss = {}", format_number(rec.initial_loss()));
    println!("final_loss = {}", format_number(rec.final_loss()));
    let params: Vec<String> = rec.final_params.as_slice().iter().map(|&x| format_number(x)).collect();
    println!("final_params = [{}]", params.join(", "));
    println!("wall_time_s = {}", format_number(rec.wall_time));
    if matches!(opts.format, Format::Json | Format::Both) {
        fs::create_dir_all(&opts.out)?;
        let path = opts.out.join("train.json");
        #[derive(Serialize)]
        struct Out<'a> {
            config: &'a ExperimentConfig,
            record: &'a crate::trainer::TrainRecord,
        }
        fs::write(
            &path,
            serde_json::to_string_pretty(&Out {
                config: &config,
                record: &rec,
            })?,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

/// Largest normalized discrepancy `|ad − fd| / max(1e-8, 1e-5·|fd|)` over
/// `cases` random circuits; `<= 1` means every coordinate agrees.
pub fn gradcheck(cases: usize, seed: u64) -> anyhow::Result<f64> {
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = move || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let spec = CircuitSpec {
            eta: 0.3 + 0.65 * unit(),
            num_ancillas: (unit() * 4.0) as usize % 4,
            ..CircuitSpec::default()
        };
        let model = NoiseModel::new(0.7 * unit(), 4, seed ^ case as u64);
        let kicks = sample_kicks(&model, spec.num_ancillas, KickStream::Training(0));
        let theta: Vec<f64> = (0..spec.num_recovery_params()).map(|_| unit() - 0.5).collect();
        let ad = gradient(|p| loss_on_kicks(&spec, p, &kicks).expect("valid circuit"), &theta)?;
        let fd = finite_diff_gradient(
            |p| loss_on_kicks(&spec, p, &kicks).expect("valid circuit"),
            &theta,
            1e-6,
        )?;
        for (a, f) in ad.iter().zip(&fd) {
            worst = worst.max((a - f).abs() / (1e-5 * f.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

/// Runs the parsed command; `Ok(false)` means some requested rows failed.
pub fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::List => {
            for id in ExperimentId::ALL {
                println!("{:<20} {}", id.as_str(), id.description());
            }
            Ok(true)
        }
        Command::Run { experiment_id, opts } => {
            let id: ExperimentId = experiment_id.parse()?;
            let mut config = ExperimentConfig::defaults(id);
            opts.apply(&mut config)?;
            let result = experiments::run(&config)?;
            report(&result, &opts)
        }
        Command::Train { opts } => run_train(&opts),
        Command::Sweep { etas, deltas, opts } => {
            let mut config = ExperimentConfig::defaults(ExperimentId::PhaseDiagram);
            if !etas.is_empty() {
                config.etas = etas;
            }
            if !deltas.is_empty() {
                config.deltas = deltas;
            }
            opts.apply(&mut config)?;
            let result = experiments::run(&config)?;
            report(&result, &opts)
        }
        Command::Gradcheck { cases, opts } => {
            let worst = gradcheck(cases, opts.seed)?;
            let ok = worst <= 1.0;
            println!(
                "gradcheck: {cases} cases, worst normalized error {} -> {}",
                format_number(worst),
                if ok { "ok" } else { "FAILED" }
            );
            Ok(ok)
        }
    }
}
