//! Differentiable Gaussian error mitigation for continuous-variable photonic
//! circuits.
//!
//! The crate simulates multi-mode Gaussian circuits in the moment picture,
//! injects optical loss and Monte-Carlo phase jitter, and trains a local
//! rotation + displacement recovery layer by forward-mode gradient descent so
//! the signal-mode quadrature expectations match the noise-free circuit.

pub mod circuits;
pub mod cli;
pub mod diff;
pub mod experiments;
pub mod gaussian;
pub mod noise;
pub mod trainer;

pub use circuits::{build_ideal, build_noisy, signal_expectations, CircuitSpec, PhaseKicks, RecoveryParams};
pub use diff::{finite_diff_gradient, gradient, seed_parameters, Dual, Scalar};
pub use experiments::{baseline_error_closed_form, Cell, ExperimentConfig, ExperimentId, ExperimentResult};
pub use gaussian::{entanglement_degradation, AffineSymplectic, GaussianState};
pub use noise::{mc_expectations, sample_kicks, KickStream, NoiseModel};
pub use trainer::{gd_step, train, NoiseMode, Sampling, TrainConfig, TrainRecord};
