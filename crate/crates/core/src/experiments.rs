//! The eight reproduction experiments, their configuration snapshot and the
//! tabular result type shared with the writers.
//!
//! Grid rows are independent and run on the rayon pool; each row draws its
//! noise from `seed ^ row_index`. Results are assembled in grid order, so the
//! output never depends on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{ideal_expectations, CircuitSpec, RecoveryParams};
use crate::gaussian::entanglement_degradation;
use crate::noise::{KickStream, NoiseModel, DEFAULT_KAPPA};
use crate::trainer::{loss, train, NoiseMode, Sampling, TrainConfig, TrainError, TrainRecord};

/// Largest phase-jitter standard deviation accepted by the harness.
pub const MAX_DELTA: f64 = 0.8;
/// Floor applied before taking `log10` of a final loss.
pub const LOG_FLOOR: f64 = 1e-30;

pub const ETA_GRID: [f64; 7] = [0.30, 0.41, 0.52, 0.63, 0.74, 0.85, 0.95];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown override key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{value}` for `{key}`")]
    Unparsable { key: String, value: String },
    #[error("{field} = {value} outside the documented range [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    LossSweep,
    SmVsMm,
    PhaseDiagram,
    Generalization,
    CriticalThreshold,
    ModeScaling,
    ParamDynamics,
    RuntimeVsK,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::LossSweep,
        ExperimentId::SmVsMm,
        ExperimentId::PhaseDiagram,
        ExperimentId::Generalization,
        ExperimentId::CriticalThreshold,
        ExperimentId::ModeScaling,
        ExperimentId::ParamDynamics,
        ExperimentId::RuntimeVsK,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::LossSweep => "loss_sweep",
            ExperimentId::SmVsMm => "sm_vs_mm",
            ExperimentId::PhaseDiagram => "phase_diagram",
            ExperimentId::Generalization => "generalization",
            ExperimentId::CriticalThreshold => "critical_threshold",
            ExperimentId::ModeScaling => "mode_scaling",
            ExperimentId::ParamDynamics => "param_dynamics",
            ExperimentId::RuntimeVsK => "runtime_vs_k",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::LossSweep => "Gaussian loss sweep over the transmissivity grid",
            ExperimentId::SmVsMm => "single-mode vs two-mode baseline and mitigated loss",
            ExperimentId::PhaseDiagram => "final loss over a (delta, eta) grid",
            ExperimentId::Generalization => "Gaussian-trained vs jitter-trained recovery under held-out jitter",
            ExperimentId::CriticalThreshold => "baseline vs mitigated error as jitter grows",
            ExperimentId::ModeScaling => "baseline and mitigated error vs number of ancillas",
            ExperimentId::ParamDynamics => "per-step recovery parameter trajectories",
            ExperimentId::RuntimeVsK => "training wall time vs Monte-Carlo sample count",
        }
    }

    /// Fixed CSV header. `param_dynamics` has one `p{i}` column per recovery
    /// parameter, hence the argument.
    pub fn columns(self, num_params: usize) -> Vec<String> {
        let fixed: &[&str] = match self {
            ExperimentId::LossSweep => &["eta", "baseline_loss", "final_loss", "degradation_DT"],
            ExperimentId::SmVsMm => &["variant", "final_loss"],
            ExperimentId::PhaseDiagram => &["delta", "eta", "log10_final_loss"],
            ExperimentId::Generalization => &["delta", "gauss_trained_error", "ng_trained_error"],
            ExperimentId::CriticalThreshold => &["delta", "baseline_error", "mitigated_error"],
            ExperimentId::ModeScaling => &["total_modes", "baseline_error", "mitigated_error"],
            ExperimentId::ParamDynamics => &["step", "loss"],
            ExperimentId::RuntimeVsK => &["samples_K", "seconds", "slowdown"],
        };
        let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        if self == ExperimentId::ParamDynamics {
            cols.extend((0..num_params).map(|i| format!("p{i}")));
        }
        cols
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// Everything an experiment run depends on. Serialized verbatim next to the
/// results so a run can be repeated from its output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: ExperimentId,
    pub circuit: CircuitSpec,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub ancillas: Vec<usize>,
    /// Monte-Carlo sample counts `K`; only `runtime_vs_k` uses more than one.
    pub samples: Vec<usize>,
    pub kappa: f64,
    pub eval_samples: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub sampling: Sampling,
    /// Timing repeats per row (`runtime_vs_k` only); the median is reported.
    pub repeats: usize,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 42;

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        let circuit = CircuitSpec::default();
        let mut cfg = Self {
            experiment_id: id,
            etas: vec![circuit.eta],
            circuit,
            deltas: vec![0.0],
            ancillas: vec![1],
            samples: vec![16],
            kappa: DEFAULT_KAPPA,
            eval_samples: 256,
            learning_rate: 0.06,
            steps: 60,
            sampling: Sampling::Frozen,
            repeats: 1,
            seed: DEFAULT_SEED,
        };
        match id {
            ExperimentId::LossSweep => cfg.etas = ETA_GRID.to_vec(),
            ExperimentId::SmVsMm => {
                cfg.ancillas = vec![0, 1];
                cfg.steps = 40;
            }
            ExperimentId::PhaseDiagram => {
                cfg.etas = ETA_GRID.to_vec();
                cfg.deltas = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
                cfg.steps = 30;
            }
            ExperimentId::Generalization => {
                cfg.deltas = vec![0.0, 0.14, 0.28, 0.42, 0.70];
                cfg.sampling = Sampling::Fresh;
            }
            ExperimentId::CriticalThreshold => {
                cfg.deltas = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
            }
            ExperimentId::ModeScaling => {
                cfg.ancillas = vec![0, 1, 2, 3];
                cfg.deltas = vec![0.3];
            }
            ExperimentId::ParamDynamics => {
                cfg.deltas = vec![0.3];
                cfg.samples = vec![32];
            }
            ExperimentId::RuntimeVsK => {
                cfg.deltas = vec![0.3];
                cfg.samples = vec![4, 8, 16, 32];
                cfg.steps = 20;
                cfg.sampling = Sampling::Fresh;
                cfg.repeats = 11;
            }
        }
        cfg
    }

    /// Applies one `key=value` override. Scalar grid keys (`eta`, `delta`,
    /// `samples`, `ancillas`) collapse the corresponding grid to one point.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Unparsable {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
            value.split(',').map(|v| num(key, v)).collect()
        }
        let c = &mut self.circuit;
        match key {
            "r_s" => c.r_s = num(key, value)?,
            "phi_s" => c.phi_s = num(key, value)?,
            "alpha" => c.alpha = num(key, value)?,
            "alpha_im" => c.alpha_im = num(key, value)?,
            "r_a" => c.r_a = num(key, value)?,
            "phi_a" => c.phi_a = num(key, value)?,
            "theta_bs" => c.theta_bs = num(key, value)?,
            "phi_bs" => c.phi_bs = num(key, value)?,
            "eta" => {
                c.eta = num(key, value)?;
                self.etas = vec![c.eta];
            }
            "etas" => self.etas = list(key, value)?,
            "ancillas" | "num_ancillas" => {
                c.num_ancillas = num(key, value)?;
                self.ancillas = vec![c.num_ancillas];
            }
            "ancilla_grid" => self.ancillas = list(key, value)?,
            "delta" => self.deltas = vec![num(key, value)?],
            "deltas" => self.deltas = list(key, value)?,
            "samples" => self.samples = vec![num(key, value)?],
            "sample_grid" => self.samples = list(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            "lr" | "learning_rate" => self.learning_rate = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "repeats" => self.repeats = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "frozen_noise" => {
                let frozen: bool = num(key, value)?;
                self.sampling = if frozen { Sampling::Frozen } else { Sampling::Fresh };
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn range(field: &'static str, value: f64, min: f64, max: f64) -> Result<(), ConfigError> {
            if (min..=max).contains(&value) {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { field, value, min, max })
            }
        }
        fn positive(field: &str, value: usize) -> Result<(), ConfigError> {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{field} must be >= 1")));
            }
            Ok(())
        }
        self.circuit
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        range("eta", self.circuit.eta, 0.0, 1.0)?;
        for &eta in &self.etas {
            range("eta", eta, 0.0, 1.0)?;
        }
        for &delta in &self.deltas {
            range("delta", delta, 0.0, MAX_DELTA)?;
        }
        range("kappa", self.kappa, 0.0, 10.0)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "learning_rate = {} must be > 0",
                self.learning_rate
            )));
        }
        positive("steps", self.steps)?;
        positive("eval_samples", self.eval_samples)?;
        positive("repeats", self.repeats)?;
        for &k in &self.samples {
            positive("samples", k)?;
        }
        for &n in &self.ancillas {
            range("ancillas", n as f64, 0.0, 16.0)?;
        }
        for (field, empty) in [
            ("etas", self.etas.is_empty()),
            ("deltas", self.deltas.is_empty()),
            ("ancillas", self.ancillas.is_empty()),
            ("samples", self.samples.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::Invalid(format!("{field} grid is empty")));
            }
        }
        Ok(())
    }

    fn model(&self, delta: f64, samples: usize, seed: u64) -> NoiseModel {
        NoiseModel {
            delta,
            kappa: self.kappa,
            samples,
            seed,
        }
    }

    fn train_config(&self, steps: usize, noise_mode: NoiseMode) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            steps,
            init: None,
            noise_mode,
            sampling: self.sampling,
        }
    }

    /// Error of `params` under `model` using this run's evaluation protocol:
    /// the training samples themselves when frozen, otherwise the held-out
    /// stream with `eval_samples` draws.
    fn evaluate(&self, spec: &CircuitSpec, model: &NoiseModel, params: &[f64]) -> Result<f64, TrainError> {
        match self.sampling {
            Sampling::Frozen => loss(spec, params, model, Sampling::Frozen.stream(0)),
            Sampling::Fresh => {
                let held_out = NoiseModel {
                    samples: self.eval_samples,
                    ..model.clone()
                };
                loss(spec, params, &held_out, KickStream::Evaluation)
            }
        }
    }
}

/// One CSV cell. Non-finite numbers are stored as `Missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Missing
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Num(x) => Some(x),
            Cell::Int(n) => Some(n as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Seed the row's noise was drawn from.
    pub seed: u64,
    pub values: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment_id: ExperimentId,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub summary: BTreeMap<String, Cell>,
    pub config_snapshot: ExperimentConfig,
}

impl ExperimentResult {
    pub fn all_rows_ok(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of one column, `None` for missing cells.
    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        match self.column_index(name) {
            Some(i) => self.rows.iter().map(|r| r.values[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Cell::as_f64)
    }
}

/// `(1 − √η)²·(2α)²·cos^{2n}(θ)`: zero-recovery, jitter-free loss of the
/// circuit with `n` ancillas.
pub fn baseline_error_closed_form(
    eta: f64,
    alpha: f64,
    theta_bs: f64,
    num_ancillas: usize,
) -> Result<f64, ConfigError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ConfigError::OutOfRange {
            field: "eta",
            value: eta,
            min: 0.0,
            max: 1.0,
        });
    }
    let c2 = theta_bs.cos().powi(2);
    Ok((1.0 - eta.sqrt()).powi(2) * (2.0 * alpha).powi(2) * c2.powi(num_ancillas as i32))
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult, ConfigError> {
    config.validate()?;
    let (rows, summary) = match config.experiment_id {
        ExperimentId::LossSweep => loss_sweep(config),
        ExperimentId::SmVsMm => sm_vs_mm(config),
        ExperimentId::PhaseDiagram => phase_diagram(config),
        ExperimentId::Generalization => generalization(config),
        ExperimentId::CriticalThreshold => critical_threshold(config),
        ExperimentId::ModeScaling => mode_scaling(config),
        ExperimentId::ParamDynamics => param_dynamics(config),
        ExperimentId::RuntimeVsK => runtime_vs_k(config),
    };
    Ok(ExperimentResult {
        experiment_id: config.experiment_id,
        columns: config.experiment_id.columns(config.circuit.num_recovery_params()),
        rows,
        summary,
        config_snapshot: config.clone(),
    })
}

pub fn run_loss_sweep() -> ExperimentResult {
    run_default(ExperimentId::LossSweep)
}

pub fn run_sm_vs_mm() -> ExperimentResult {
    run_default(ExperimentId::SmVsMm)
}

pub fn run_phase_diagram() -> ExperimentResult {
    run_default(ExperimentId::PhaseDiagram)
}

pub fn run_generalization() -> ExperimentResult {
    run_default(ExperimentId::Generalization)
}

pub fn run_critical_threshold() -> ExperimentResult {
    run_default(ExperimentId::CriticalThreshold)
}

pub fn run_mode_scaling() -> ExperimentResult {
    run_default(ExperimentId::ModeScaling)
}

pub fn run_param_dynamics() -> ExperimentResult {
    run_default(ExperimentId::ParamDynamics)
}

pub fn run_runtime_vs_k() -> ExperimentResult {
    run_default(ExperimentId::RuntimeVsK)
}

fn run_default(id: ExperimentId) -> ExperimentResult {
    run(&ExperimentConfig::defaults(id)).expect("default configurations are valid")
}

type Summary = BTreeMap<String, Cell>;

/// Runs `f` for every task on the pool. A failed task keeps its key cells and
/// fills the remaining `width` columns with `Missing`.
fn grid_rows<T, K, F>(tasks: &[T], base_seed: u64, width: usize, keys: K, f: F) -> Vec<Row>
where
    T: Sync,
    K: Fn(&T) -> Vec<Cell> + Sync,
    F: Fn(&T, u64) -> Result<Vec<Cell>, TrainError> + Sync,
{
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let seed = base_seed ^ i as u64;
            let mut values = keys(task);
            match f(task, seed) {
                Ok(rest) => {
                    values.extend(rest);
                    Row {
                        seed,
                        values,
                        error: None,
                    }
                }
                Err(e) => {
                    values.resize(width, Cell::Missing);
                    Row {
                        seed,
                        values,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

fn degradation_key(eta: f64) -> String {
    format!("degradation_DT[eta={eta}]")
}

fn degradation_cell(eta: f64) -> Cell {
    entanglement_degradation(eta).map(Cell::num).unwrap_or(Cell::Missing)
}

fn single_eta_summary(config: &ExperimentConfig) -> Summary {
    let mut s = Summary::new();
    s.insert("degradation_DT".into(), degradation_cell(config.circuit.eta));
    s
}

fn loss_sweep(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let rows = grid_rows(
        &config.etas,
        config.seed,
        4,
        |&eta| vec![Cell::num(eta)],
        |&eta, seed| {
            let spec = config.circuit.clone().with_eta(eta);
            let model = NoiseModel::gaussian(seed);
            let rec = train(
                &spec,
                &model,
                &config.train_config(config.steps, NoiseMode::GaussianOnly),
            )?;
            Ok(vec![
                Cell::num(rec.initial_loss()),
                Cell::num(rec.final_loss()),
                degradation_cell(eta),
            ])
        },
    );
    (rows, Summary::new())
}

fn sm_vs_mm(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let names = |n: usize| match n {
        0 => ("sm_base".to_string(), "sm_mitigated".to_string()),
        1 => ("mm_base".to_string(), "mm_mitigated".to_string()),
        n => (format!("ancillas{n}_base"), format!("ancillas{n}_mitigated")),
    };
    let pairs: Vec<(u64, Result<TrainRecord, TrainError>)> = config
        .ancillas
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let seed = config.seed ^ i as u64;
            let spec = config.circuit.clone().with_ancillas(n);
            let cfg = config.train_config(config.steps, NoiseMode::GaussianOnly);
            (seed, train(&spec, &NoiseModel::gaussian(seed), &cfg))
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (&n, (seed, result)) in config.ancillas.iter().zip(pairs) {
        let (base, mitigated) = names(n);
        let (b, m, error) = match result {
            Ok(rec) => (Cell::num(rec.initial_loss()), Cell::num(rec.final_loss()), None),
            Err(e) => (Cell::Missing, Cell::Missing, Some(e.to_string())),
        };
        rows.push(Row {
            seed,
            values: vec![Cell::Text(base), b],
            error: error.clone(),
        });
        rows.push(Row {
            seed,
            values: vec![Cell::Text(mitigated), m],
            error,
        });
    }
    (rows, single_eta_summary(config))
}

fn phase_diagram(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let grid: Vec<(f64, f64)> = config
        .deltas
        .iter()
        .flat_map(|&d| config.etas.iter().map(move |&e| (d, e)))
        .collect();
    let k = config.samples[0];
    let rows = grid_rows(
        &grid,
        config.seed,
        3,
        |&(d, e)| vec![Cell::num(d), Cell::num(e)],
        |&(delta, eta), seed| {
            let spec = config.circuit.clone().with_eta(eta);
            let model = config.model(delta, k, seed);
            let rec = train(&spec, &model, &config.train_config(config.steps, NoiseMode::NgAware))?;
            let err = config.evaluate(&spec, &model, rec.final_params.as_slice())?;
            Ok(vec![Cell::num(err.max(LOG_FLOOR).log10())])
        },
    );
    let summary = config
        .etas
        .iter()
        .map(|&eta| (degradation_key(eta), degradation_cell(eta)))
        .collect();
    (rows, summary)
}

fn generalization(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let spec = &config.circuit;
    let k = config.samples[0];
    let rows = grid_rows(
        &config.deltas,
        config.seed,
        3,
        |&d| vec![Cell::num(d)],
        |&delta, seed| {
            let model = config.model(delta, k, seed);
            let held_out = NoiseModel {
                samples: config.eval_samples,
                ..model.clone()
            };
            let mut errors = Vec::with_capacity(2);
            for mode in [NoiseMode::GaussianOnly, NoiseMode::NgAware] {
                let rec = train(spec, &model, &config.train_config(config.steps, mode))?;
                let err: f64 = loss(spec, rec.final_params.as_slice(), &held_out, KickStream::Evaluation)?;
                errors.push(Cell::num(err));
            }
            Ok(errors)
        },
    );
    (rows, single_eta_summary(config))
}

fn critical_threshold(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let spec = &config.circuit;
    let k = config.samples[0];
    let zeros = RecoveryParams::zeros(spec);
    let rows = grid_rows(
        &config.deltas,
        config.seed,
        3,
        |&d| vec![Cell::num(d)],
        |&delta, seed| {
            let model = config.model(delta, k, seed);
            let baseline = config.evaluate(spec, &model, zeros.as_slice())?;
            let rec = train(spec, &model, &config.train_config(config.steps, NoiseMode::NgAware))?;
            let mitigated = config.evaluate(spec, &model, rec.final_params.as_slice())?;
            Ok(vec![Cell::num(baseline), Cell::num(mitigated)])
        },
    );
    let mut summary = single_eta_summary(config);
    let threshold = rows
        .iter()
        .find(|r| match (r.values[1].as_f64(), r.values[2].as_f64()) {
            (Some(b), Some(m)) => m > 0.10 * b,
            _ => false,
        })
        .map(|r| r.values[0].clone())
        .unwrap_or_else(|| Cell::Text("none".into()));
    summary.insert("critical_delta".into(), threshold);
    (rows, summary)
}

fn mode_scaling(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let delta = config.deltas[0];
    let k = config.samples[0];
    let rows = grid_rows(
        &config.ancillas,
        config.seed,
        3,
        |&n| vec![Cell::Int(config.circuit.clone().with_ancillas(n).total_modes() as u64)],
        |&n, seed| {
            let spec = config.circuit.clone().with_ancillas(n);
            let zeros = RecoveryParams::zeros(&spec);
            let baseline: f64 = loss(
                &spec,
                zeros.as_slice(),
                &NoiseModel::gaussian(seed),
                KickStream::Evaluation,
            )?;
            let model = config.model(delta, k, seed);
            let rec = train(&spec, &model, &config.train_config(config.steps, NoiseMode::NgAware))?;
            let mitigated = config.evaluate(&spec, &model, rec.final_params.as_slice())?;
            Ok(vec![Cell::num(baseline), Cell::num(mitigated)])
        },
    );
    let mut summary = single_eta_summary(config);
    let baselines: Vec<Option<f64>> = rows.iter().map(|r| r.values[1].as_f64()).collect();
    for (i, pair) in baselines.windows(2).enumerate() {
        if let [Some(a), Some(b)] = pair {
            summary.insert(format!("baseline_ratio[{}]", i + 1), Cell::num(b / a));
        }
    }
    (rows, summary)
}

fn param_dynamics(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let spec = &config.circuit;
    let delta = config.deltas[0];
    let model = config.model(delta, config.samples[0], config.seed);
    let p = spec.num_recovery_params();
    let mut summary = single_eta_summary(config);
    let rec = match train(spec, &model, &config.train_config(config.steps, NoiseMode::NgAware)) {
        Ok(rec) => rec,
        Err(e) => {
            let row = Row {
                seed: config.seed,
                values: vec![Cell::Missing; 2 + p],
                error: Some(e.to_string()),
            };
            return (vec![row], summary);
        }
    };
    let rows = rec
        .loss_history
        .iter()
        .zip(&rec.param_history)
        .enumerate()
        .map(|(step, (&l, params))| {
            let mut values = vec![Cell::Int(step as u64), Cell::num(l)];
            values.extend(params.iter().map(|&x| Cell::num(x)));
            Row {
                seed: config.seed,
                values,
                error: None,
            }
        })
        .collect();

    let last = rec.final_params.as_slice();
    let dominant = (0..p)
        .max_by(|&a, &b| last[a].abs().total_cmp(&last[b].abs()))
        .unwrap_or(0);
    let others_final = (0..p)
        .filter(|&i| i != dominant)
        .map(|i| last[i].abs())
        .fold(0.0, f64::max);
    let others_path = rec
        .param_history
        .iter()
        .flat_map(|ps| {
            ps.iter()
                .enumerate()
                .filter(|&(i, _)| i != dominant)
                .map(|(_, x)| x.abs())
        })
        .fold(0.0, f64::max);
    summary.insert("dominant_index".into(), Cell::Int(dominant as u64));
    summary.insert("dominant_value".into(), Cell::num(last[dominant]));
    summary.insert("max_abs_other_final".into(), Cell::num(others_final));
    summary.insert("max_abs_other_trajectory".into(), Cell::num(others_path));
    if let Ok((x_ideal, _)) = ideal_expectations(spec) {
        let deficit = (1.0 - spec.eta.sqrt() * (-delta * delta / 2.0).exp()) * x_ideal / 2.0;
        summary.insert("deficit_oracle".into(), Cell::num(deficit));
    }
    summary.insert(
        "loss_drop_decades".into(),
        Cell::num((rec.initial_loss() / rec.final_loss().max(LOG_FLOOR)).log10()),
    );
    (rows, summary)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy * sxy / (sxx * syy)
}

// Timed rows run on the calling thread so the pool does not distort the
// scaling. After one untimed warm-up pass, repeats go round-robin over the
// rows, so a slow stretch of wall time hits every K alike.
fn runtime_vs_k(config: &ExperimentConfig) -> (Vec<Row>, Summary) {
    let spec = &config.circuit;
    let delta = config.deltas[0];
    // (samples_K column, K used for training, mode, seed)
    let mut jobs = vec![(0, 1, NoiseMode::GaussianOnly, config.seed)];
    for (i, &k) in config.samples.iter().enumerate() {
        jobs.push((k, k, NoiseMode::NgAware, config.seed ^ (i as u64 + 1)));
    }
    let cfgs: Vec<(NoiseModel, TrainConfig)> = jobs
        .iter()
        .map(|&(_, k, mode, seed)| (config.model(delta, k, seed), config.train_config(config.steps, mode)))
        .collect();

    let mut times: Vec<Result<Vec<f64>, TrainError>> = cfgs.iter().map(|_| Ok(Vec::new())).collect();
    for pass in 0..=config.repeats {
        for ((model, cfg), slot) in cfgs.iter().zip(times.iter_mut()) {
            let Ok(secs) = slot else { continue };
            match train(spec, model, cfg) {
                Ok(rec) if pass > 0 => secs.push(rec.wall_time),
                Ok(_) => {}
                Err(e) => *slot = Err(e),
            }
        }
    }
    let medians: Vec<Result<f64, TrainError>> = times.into_iter().map(|t| t.map(median)).collect();

    let reference = medians[0].as_ref().ok().copied();
    let rows: Vec<Row> = jobs
        .iter()
        .zip(&medians)
        .map(|(&(col, _, _, seed), t)| match t {
            Ok(t) => Row {
                seed,
                values: vec![
                    Cell::Int(col as u64),
                    Cell::num(*t),
                    reference.map(|r| Cell::num(t / r)).unwrap_or(Cell::Missing),
                ],
                error: None,
            },
            Err(e) => Row {
                seed,
                values: vec![Cell::Int(col as u64), Cell::Missing, Cell::Missing],
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut summary = single_eta_summary(config);
    let timed: Vec<(f64, f64)> = rows[1..]
        .iter()
        .filter_map(|r| Some((r.values[0].as_f64()?, r.values[1].as_f64()?)))
        .collect();
    if timed.len() >= 2 {
        let (ks, ts): (Vec<f64>, Vec<f64>) = timed.iter().copied().unzip();
        summary.insert("r_squared".into(), Cell::num(linear_fit_r2(&ks, &ts)));
        let (k0, t0) = timed[0];
        let (k1, t1) = timed[timed.len() - 1];
        summary.insert(format!("runtime_ratio[{k1}/{k0}]"), Cell::num(t1 / t0));
    }
    (rows, summary)
}
