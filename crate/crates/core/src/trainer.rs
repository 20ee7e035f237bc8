//! Quadrature-matching objective and plain gradient-descent training.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{ideal_expectations, CircuitError, CircuitSpec, PhaseKicks, RecoveryParams};
use crate::diff::{try_value_and_gradient, DiffError, Scalar};
use crate::noise::{mc_expectations, sample_kicks, KickStream, NoiseError, NoiseModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameter/gradient length mismatch: {params} vs {grad}")]
    LengthMismatch { params: usize, grad: usize },
    #[error("non-finite loss or gradient at step {step}: {source}")]
    NonFinite { step: usize, source: DiffError },
}

impl From<CircuitError> for TrainError {
    fn from(e: CircuitError) -> Self {
        TrainError::Noise(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Train against loss only; phase jitter is switched off.
    GaussianOnly,
    /// Train against the Monte-Carlo mixture.
    NgAware,
}

/// How kick samples evolve across optimisation steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// New kick sets each step, drawn from stream `Training(step)`.
    Fresh,
    /// One kick set reused for every step (common random numbers).
    Frozen,
}

impl Sampling {
    pub fn stream(self, step: usize) -> KickStream {
        match self {
            Sampling::Fresh => KickStream::Training(step as u64),
            Sampling::Frozen => KickStream::Training(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Starting parameters; zeros when absent.
    pub init: Option<Vec<f64>>,
    pub noise_mode: NoiseMode,
    pub sampling: Sampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.06,
            steps: 60,
            init: None,
            noise_mode: NoiseMode::NgAware,
            sampling: Sampling::Fresh,
        }
    }
}

impl TrainConfig {
    pub fn new(steps: usize, noise_mode: NoiseMode) -> Self {
        Self {
            steps,
            noise_mode,
            ..Self::default()
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(TrainError::InvalidConfig("steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// Loss before each update plus the loss after the last one.
    pub loss_history: Vec<f64>,
    /// Parameters matching each `loss_history` entry.
    pub param_history: Vec<Vec<f64>>,
    pub final_params: RecoveryParams,
    /// Wall-clock seconds.
    pub wall_time: f64,
}

impl TrainRecord {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history always has steps + 1 entries")
    }

    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }
}

/// `(Δx)² + (Δp)²` between ideal and noisy signal expectations.
pub fn quadrature_loss<T: Scalar>(ideal: (f64, f64), noisy: (T, T)) -> T {
    let dx = -noisy.0 + ideal.0;
    let dp = -noisy.1 + ideal.1;
    dx.clone() * dx + dp.clone() * dp
}

/// Loss of the Monte-Carlo mean over fixed kick sets.
pub fn loss_on_kicks<T: Scalar>(spec: &CircuitSpec, recovery: &[T], kick_sets: &[PhaseKicks]) -> Result<T, TrainError> {
    let ideal = ideal_expectations(spec)?;
    let noisy = mc_expectations(spec, recovery, kick_sets)?;
    Ok(quadrature_loss(ideal, noisy))
}

/// Kick sets for `model` on `stream`; a single zero kick when `δ = 0`.
pub fn kicks_for(model: &NoiseModel, num_ancillas: usize, stream: KickStream) -> Result<Vec<PhaseKicks>, TrainError> {
    model.validate()?;
    if model.is_gaussian() {
        return Ok(vec![PhaseKicks::none(num_ancillas)]);
    }
    Ok(sample_kicks(model, num_ancillas, stream))
}

/// Objective for `recovery` under `model`, using the samples of `stream`.
pub fn loss<T: Scalar>(
    spec: &CircuitSpec,
    recovery: &[T],
    model: &NoiseModel,
    stream: KickStream,
) -> Result<T, TrainError> {
    let kicks = kicks_for(model, spec.num_ancillas, stream)?;
    loss_on_kicks(spec, recovery, &kicks)
}

/// `θ − lr·∇`.
pub fn gd_step(theta: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>, TrainError> {
    if theta.len() != grad.len() {
        return Err(TrainError::LengthMismatch {
            params: theta.len(),
            grad: grad.len(),
        });
    }
    Ok(theta.iter().zip(grad).map(|(t, g)| t - lr * g).collect())
}

/// Loss value and gradient w.r.t. the recovery parameters on fixed kicks.
pub fn loss_and_gradient(
    spec: &CircuitSpec,
    theta: &[f64],
    kick_sets: &[PhaseKicks],
) -> Result<(f64, Vec<f64>), TrainError> {
    try_value_and_gradient(|p| loss_on_kicks(spec, p, kick_sets), theta)
}

/// Runs `config.steps` gradient-descent updates from `config.init`.
pub fn train(spec: &CircuitSpec, model: &NoiseModel, config: &TrainConfig) -> Result<TrainRecord, TrainError> {
    config.validate()?;
    spec.validate()?;
    let model = match config.noise_mode {
        NoiseMode::GaussianOnly => NoiseModel {
            delta: 0.0,
            ..model.clone()
        },
        NoiseMode::NgAware => model.clone(),
    };
    model.validate()?;

    let p = spec.num_recovery_params();
    let mut theta = match &config.init {
        Some(init) if init.len() != p => {
            return Err(TrainError::InvalidConfig(format!(
                "init has {} parameters, circuit needs {p}",
                init.len()
            )))
        }
        Some(init) => init.clone(),
        None => vec![0.0; p],
    };

    let start = Instant::now();
    let frozen = if config.sampling == Sampling::Frozen {
        Some(kicks_for(&model, spec.num_ancillas, Sampling::Frozen.stream(0))?)
    } else {
        None
    };
    let kicks_at = |step: usize| -> Result<Vec<PhaseKicks>, TrainError> {
        match &frozen {
            Some(k) => Ok(k.clone()),
            None => kicks_for(&model, spec.num_ancillas, config.sampling.stream(step)),
        }
    };
    let with_step = |step: usize| {
        move |e: TrainError| match e {
            TrainError::Diff(source) => TrainError::NonFinite { step, source },
            other => other,
        }
    };

    let mut loss_history = Vec::with_capacity(config.steps + 1);
    let mut param_history = Vec::with_capacity(config.steps + 1);
    for step in 0..config.steps {
        let kicks = kicks_at(step)?;
        let (value, grad) = loss_and_gradient(spec, &theta, &kicks).map_err(with_step(step))?;
        loss_history.push(value);
        param_history.push(theta.clone());
        theta = gd_step(&theta, &grad, config.learning_rate)?;
    }
    let kicks = kicks_at(config.steps)?;
    let last: f64 = loss_on_kicks(spec, &theta, &kicks)?;
    if !last.is_finite() {
        return Err(TrainError::NonFinite {
            step: config.steps,
            source: DiffError::NonFiniteValue,
        });
    }
    loss_history.push(last);
    param_history.push(theta.clone());

    Ok(TrainRecord {
        loss_history,
        param_history,
        final_params: RecoveryParams(theta),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Post-training loss on the held-out evaluation stream of `model`.
pub fn evaluate_held_out(spec: &CircuitSpec, params: &RecoveryParams, model: &NoiseModel) -> Result<f64, TrainError> {
    loss(spec, params.as_slice(), model, KickStream::Evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_losses() {
        let sm = CircuitSpec::default().with_ancillas(0);
        let g = NoiseModel::gaussian(0);
        let l: f64 = loss(&sm, RecoveryParams::zeros(&sm).as_slice(), &g, KickStream::Training(0)).unwrap();
        assert!((l - 0.170906).abs() < 1e-6, "{l}");

        let mm = CircuitSpec::default();
        let l: f64 = loss(&mm, RecoveryParams::zeros(&mm).as_slice(), &g, KickStream::Training(0)).unwrap();
        let closed = (1.0 - 0.55f64.sqrt()).powi(2) * 2.56 * 0.7f64.cos().powi(2);
        assert!((l - closed).abs() < 1e-14, "{l}");
        assert!((l - 0.099970).abs() < 1e-5, "{l}");

        let lossless = mm.with_eta(1.0);
        let l: f64 = loss(&lossless, &[0.0; 6], &g, KickStream::Training(0)).unwrap();
        assert!(l.abs() < 1e-28, "{l}");
    }

    #[test]
    fn gd_step_examples() {
        assert_eq!(gd_step(&[0.0], &[2.0], 0.06).unwrap(), vec![-0.12]);
        assert_eq!(gd_step(&[0.3, -1.0], &[0.0, 0.0], 0.06).unwrap(), vec![0.3, -1.0]);
        assert!(matches!(
            gd_step(&[0.0], &[1.0, 2.0], 0.1),
            Err(TrainError::LengthMismatch { .. })
        ));

        let mut theta = vec![1.0];
        for _ in 0..60 {
            theta = gd_step(&theta, &[2.0 * theta[0]], 0.06).unwrap();
        }
        let expected = (1.0f64 - 2.0 * 0.06).powi(60);
        assert!((theta[0] - expected).abs() < 1e-15);
        // squared error contracts by (1 - 2 lr)^120
        assert!((theta[0].powi(2) - 2.1e-7).abs() < 0.1e-7);
    }

    #[test]
    fn mm_training_converges() {
        let spec = CircuitSpec::default();
        let rec = train(
            &spec,
            &NoiseModel::gaussian(1),
            &TrainConfig::new(40, NoiseMode::NgAware),
        )
        .unwrap();
        assert_eq!(rec.loss_history.len(), 41);
        assert_eq!(rec.param_history.len(), 41);
        assert!(rec.final_loss() <= 1e-20, "{}", rec.final_loss());
        for w in rec.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn lossless_training_stays_at_zero() {
        let spec = CircuitSpec::default().with_eta(1.0);
        let rec = train(
            &spec,
            &NoiseModel::gaussian(1),
            &TrainConfig::new(10, NoiseMode::GaussianOnly),
        )
        .unwrap();
        assert!(rec.loss_history.iter().all(|&l| l <= 1e-28));
    }

    #[test]
    fn gaussian_only_ignores_delta_and_is_bitwise_reproducible() {
        let spec = CircuitSpec::default();
        let noisy = NoiseModel::new(0.5, 8, 3);
        let cfg = TrainConfig::new(15, NoiseMode::GaussianOnly);
        let a = train(&spec, &noisy, &cfg).unwrap();
        let b = train(&spec, &NoiseModel::gaussian(99), &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.param_history, b.param_history);
    }

    #[test]
    fn known_optimum_has_vanishing_gradient() {
        let spec = CircuitSpec::default();
        let ideal = ideal_expectations(&spec).unwrap();
        let kicks = vec![PhaseKicks::none(1)];
        let (nx, np) = mc_expectations::<f64>(&spec, &[0.0; 6], &kicks).unwrap();
        let opt = [0.0, (ideal.0 - nx) / 2.0, (ideal.1 - np) / 2.0, 0.0, 0.0, 0.0];
        let (l, g) = loss_and_gradient(&spec, &opt, &kicks).unwrap();
        assert!(l <= 1e-28, "{l}");
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-10, "{norm}");
    }

    #[test]
    fn config_validation() {
        let spec = CircuitSpec::default();
        let m = NoiseModel::gaussian(0);
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&spec, &m, &bad_lr), Err(TrainError::InvalidConfig(_))));
        let bad_steps = TrainConfig::new(0, NoiseMode::GaussianOnly);
        assert!(matches!(
            train(&spec, &m, &bad_steps),
            Err(TrainError::InvalidConfig(_))
        ));
        let bad_init = TrainConfig {
            init: Some(vec![0.0; 3]),
            ..TrainConfig::default()
        };
        assert!(matches!(train(&spec, &m, &bad_init), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn non_finite_loss_reports_the_step() {
        let spec = CircuitSpec::default();
        let cfg = TrainConfig {
            init: Some(vec![0.0, 1e200, 0.0, 0.0, 0.0, 0.0]),
            ..TrainConfig::new(3, NoiseMode::GaussianOnly)
        };
        let err = train(&spec, &NoiseModel::gaussian(0), &cfg).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { step: 0, .. }), "{err:?}");
    }
}
