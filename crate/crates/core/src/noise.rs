//! Seeded phase-jitter sampling and the Monte-Carlo mixture estimator.
//!
//! Kicks are drawn from a ChaCha8 stream keyed by `(seed, stream id)`; the
//! training stream id is the optimisation step, so re-evaluating a step
//! reproduces its samples exactly. Normal variates use the Box–Muller
//! transform on 53-bit uniforms, both outputs of each pair consumed in order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{build_noisy, signal_expectations, CircuitError, CircuitSpec, PhaseKicks};
use crate::diff::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("no kick sets to average over")]
    NoSamples,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

pub const DEFAULT_KAPPA: f64 = 0.6;

/// Phase-jitter model: `ε_s ~ N(0, δ²)`, `ε_a ~ N(0, (κδ)²)` per ancilla.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub delta: f64,
    pub kappa: f64,
    pub samples: usize,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(delta: f64, samples: usize, seed: u64) -> Self {
        Self {
            delta,
            kappa: DEFAULT_KAPPA,
            samples,
            seed,
        }
    }

    /// No phase jitter: the estimator collapses to the deterministic circuit.
    pub fn gaussian(seed: u64) -> Self {
        Self::new(0.0, 1, seed)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(NoiseError::InvalidModel(format!("delta {} must be >= 0", self.delta)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(NoiseError::InvalidModel(format!("kappa {} must be >= 0", self.kappa)));
        }
        if self.samples == 0 {
            return Err(NoiseError::InvalidModel("sample count K must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_gaussian(&self) -> bool {
        self.delta == 0.0
    }
}

/// Which independent sample stream to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KickStream {
    /// Samples used by optimisation step `n`.
    Training(u64),
    /// Held-out stream for post-training evaluation.
    Evaluation,
}

impl KickStream {
    fn id(self) -> u64 {
        match self {
            KickStream::Training(step) => step & !(1 << 63),
            KickStream::Evaluation => 1 << 63,
        }
    }
}

/// Standard normal variates from a seeded ChaCha8 stream via Box–Muller.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: KickStream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.id());
        Self { rng, spare: None }
    }

    // (0, 1]
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Draws `model.samples` kick sets for a circuit with `num_ancillas` ancillas.
pub fn sample_kicks(model: &NoiseModel, num_ancillas: usize, stream: KickStream) -> Vec<PhaseKicks> {
    if model.is_gaussian() {
        return vec![PhaseKicks::none(num_ancillas); model.samples];
    }
    let mut normals = NormalStream::new(model.seed, stream);
    let anc_std = model.kappa * model.delta;
    (0..model.samples)
        .map(|_| {
            let signal = model.delta * normals.next_normal();
            let ancillas = (0..num_ancillas).map(|_| anc_std * normals.next_normal()).collect();
            PhaseKicks { signal, ancillas }
        })
        .collect()
}

/// Arithmetic mean of the signal expectations over the given kick sets,
/// summed in slice order.
pub fn mc_expectations<T: Scalar>(
    spec: &CircuitSpec,
    recovery: &[T],
    kick_sets: &[PhaseKicks],
) -> Result<(T, T), NoiseError> {
    let (first, rest) = kick_sets.split_first().ok_or(NoiseError::NoSamples)?;
    let (mut sx, mut sp) = signal_expectations(&build_noisy(spec, recovery, first)?);
    for kicks in rest {
        let (x, p) = signal_expectations(&build_noisy(spec, recovery, kicks)?);
        sx = sx + x;
        sp = sp + p;
    }
    let inv = 1.0 / kick_sets.len() as f64;
    Ok((sx * inv, sp * inv))
}

/// Monte-Carlo expectations for `model` on `stream`. With `δ = 0` this is
/// exactly the single deterministic circuit evaluation.
pub fn model_expectations<T: Scalar>(
    spec: &CircuitSpec,
    recovery: &[T],
    model: &NoiseModel,
    stream: KickStream,
) -> Result<(T, T), NoiseError> {
    model.validate()?;
    if model.is_gaussian() {
        return mc_expectations(spec, recovery, &[PhaseKicks::none(spec.num_ancillas)]);
    }
    let kicks = sample_kicks(model, spec.num_ancillas, stream);
    mc_expectations(spec, recovery, &kicks)
}
