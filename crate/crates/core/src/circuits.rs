//! Circuit family: ideal resource state, lossy/jittered circuit with an
//! environment mode, and the trainable rotation + displacement recovery layer.
//!
//! Mode layout for the noisy circuit: `0` signal, `1..=num_ancillas`
//! ancillas, last index environment. The ideal circuit has no environment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::Scalar;
use crate::gaussian::{GaussianError, GaussianState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("invalid circuit spec: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} recovery parameters, got {got}")]
    RecoveryLength { expected: usize, got: usize },
    #[error("expected {expected} ancilla kicks, got {got}")]
    KickLength { expected: usize, got: usize },
}

/// Fixed (non-trainable) circuit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub r_s: f64,
    pub phi_s: f64,
    pub alpha: f64,
    #[serde(default)]
    pub alpha_im: f64,
    pub r_a: f64,
    pub phi_a: f64,
    pub theta_bs: f64,
    pub phi_bs: f64,
    pub num_ancillas: usize,
    pub eta: f64,
}

impl Default for CircuitSpec {
    /// The canonical configuration: `(r_s, φ_s, α) = (0.6, 0.3, 0.8)`,
    /// `(r_a, φ_a) = (0.4, 0.1)`, entangler `(0.7, 0.2)`, one ancilla, `η = 0.55`.
    fn default() -> Self {
        Self {
            r_s: 0.60,
            phi_s: 0.30,
            alpha: 0.80,
            alpha_im: 0.0,
            r_a: 0.40,
            phi_a: 0.10,
            theta_bs: 0.70,
            phi_bs: 0.20,
            num_ancillas: 1,
            eta: 0.55,
        }
    }
}

impl CircuitSpec {
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_ancillas(mut self, num_ancillas: usize) -> Self {
        self.num_ancillas = num_ancillas;
        self
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CircuitError::InvalidSpec(format!("eta {} outside [0, 1]", self.eta)));
        }
        let fields = [
            ("r_s", self.r_s),
            ("phi_s", self.phi_s),
            ("alpha", self.alpha),
            ("alpha_im", self.alpha_im),
            ("r_a", self.r_a),
            ("phi_a", self.phi_a),
            ("theta_bs", self.theta_bs),
            ("phi_bs", self.phi_bs),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(CircuitError::InvalidSpec(format!("{name} is not finite")));
        }
        Ok(())
    }

    /// Signal plus ancillas; the modes the recovery layer acts on.
    pub fn corrected_modes(&self) -> usize {
        1 + self.num_ancillas
    }

    /// Total modes of the noisy circuit (environment included).
    pub fn total_modes(&self) -> usize {
        self.corrected_modes() + 1
    }

    pub fn env_mode(&self) -> usize {
        self.corrected_modes()
    }

    pub fn num_recovery_params(&self) -> usize {
        3 * self.corrected_modes()
    }

    /// Prepares modes `0..=num_ancillas` of `state` as the entangled resource.
    fn prepare<T: Scalar>(&self, state: &mut GaussianState<T>) -> Result<(), CircuitError> {
        state.apply_squeezing(0, self.r_s, self.phi_s)?.apply_displacement(
            0,
            T::constant(self.alpha),
            T::constant(self.alpha_im),
        )?;
        for a in 1..=self.num_ancillas {
            state.apply_squeezing(a, self.r_a, self.phi_a)?;
        }
        for a in 1..=self.num_ancillas {
            state.apply_beamsplitter(0, a, self.theta_bs, self.phi_bs)?;
        }
        Ok(())
    }
}

/// Flattened recovery parameters `(φ₀, Re β₀, Im β₀, φ₁, Re β₁, Im β₁, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams(pub Vec<f64>);

impl RecoveryParams {
    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self(vec![0.0; spec.num_recovery_params()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn phi(&self, mode: usize) -> f64 {
        self.0[3 * mode]
    }

    pub fn beta(&self, mode: usize) -> (f64, f64) {
        (self.0[3 * mode + 1], self.0[3 * mode + 2])
    }
}

/// One realisation of the phase jitter: a signal angle and one per ancilla.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PhaseKicks {
    pub signal: f64,
    pub ancillas: Vec<f64>,
}

impl PhaseKicks {
    pub fn none(num_ancillas: usize) -> Self {
        Self {
            signal: 0.0,
            ancillas: vec![0.0; num_ancillas],
        }
    }
}

/// Noise-free target state (no environment mode).
pub fn build_ideal(spec: &CircuitSpec) -> Result<GaussianState<f64>, CircuitError> {
    spec.validate()?;
    let mut state = GaussianState::vacuum(spec.corrected_modes())?;
    spec.prepare(&mut state)?;
    Ok(state)
}

/// Prepared state after loss and phase kicks, before any recovery.
pub fn build_noisy_uncorrected(spec: &CircuitSpec, kicks: &PhaseKicks) -> Result<GaussianState<f64>, CircuitError> {
    spec.validate()?;
    if kicks.ancillas.len() != spec.num_ancillas {
        return Err(CircuitError::KickLength {
            expected: spec.num_ancillas,
            got: kicks.ancillas.len(),
        });
    }
    let mut state = GaussianState::vacuum(spec.total_modes())?;
    spec.prepare(&mut state)?;
    state.apply_loss_via_env(0, spec.env_mode(), spec.eta)?;
    state.apply_rotation(0, kicks.signal)?;
    for (a, &eps) in kicks.ancillas.iter().enumerate() {
        state.apply_rotation(a + 1, eps)?;
    }
    Ok(state)
}

/// Applies the recovery layer: per corrected mode, rotate by `φⱼ` then
/// displace by `βⱼ`.
pub fn apply_recovery<T: Scalar>(
    state: &mut GaussianState<T>,
    spec: &CircuitSpec,
    recovery: &[T],
) -> Result<(), CircuitError> {
    if recovery.len() != spec.num_recovery_params() {
        return Err(CircuitError::RecoveryLength {
            expected: spec.num_recovery_params(),
            got: recovery.len(),
        });
    }
    for (mode, p) in recovery.chunks_exact(3).enumerate() {
        state
            .apply_rotation(mode, p[0].clone())?
            .apply_displacement(mode, p[1].clone(), p[2].clone())?;
    }
    Ok(())
}

/// Full noisy circuit with recovery, generic over the scalar type so the
/// recovery parameters may carry tangents.
pub fn build_noisy<T: Scalar>(
    spec: &CircuitSpec,
    recovery: &[T],
    kicks: &PhaseKicks,
) -> Result<GaussianState<T>, CircuitError> {
    let mut state = build_noisy_uncorrected(spec, kicks)?.lift::<T>();
    apply_recovery(&mut state, spec, recovery)?;
    Ok(state)
}

/// `(⟨x̂₀⟩, ⟨p̂₀⟩)`.
pub fn signal_expectations<T: Scalar>(state: &GaussianState<T>) -> (T, T) {
    (state.mean()[0].clone(), state.mean()[1].clone())
}

/// Signal expectations of the ideal circuit.
pub fn ideal_expectations(spec: &CircuitSpec) -> Result<(f64, f64), CircuitError> {
    Ok(signal_expectations(&build_ideal(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ideal_examples() {
        let spec = CircuitSpec::default();
        let (x, p) = ideal_expectations(&spec).unwrap();
        assert!(close(x.hypot(p), 1.6 * 0.7f64.cos(), 1e-12));
        assert!(close(x.abs(), 1.223694, 1e-4));
        assert!(close(p, 0.0, 1e-15));

        let (x, p) = ideal_expectations(&spec.clone().with_ancillas(0)).unwrap();
        assert_eq!((x, p), (1.6, 0.0));

        let zero_alpha = CircuitSpec {
            alpha: 0.0,
            ..CircuitSpec::default()
        };
        assert!(build_ideal(&zero_alpha).unwrap().mean().iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn noisy_examples() {
        let spec = CircuitSpec::default();
        let sm = spec.clone().with_ancillas(0);
        let st = build_noisy(&sm, &RecoveryParams::zeros(&sm).0, &PhaseKicks::none(0)).unwrap();
        let (x, _) = signal_expectations(&st);
        assert!(close(x, 0.55f64.sqrt() * 1.6, 1e-12));
        assert!(close(x, 1.186595, 1e-5));

        let st = build_noisy(&spec, &RecoveryParams::zeros(&spec).0, &PhaseKicks::none(1)).unwrap();
        let (x, p) = signal_expectations(&st);
        assert!(close(x, 0.55f64.sqrt() * 1.6 * 0.7f64.cos(), 1e-12));
        assert!(close(x, 0.907472, 1e-4));
        assert!(close(p, 0.0, 1e-15));

        let lossless = spec.clone().with_eta(1.0);
        let st = build_noisy(&lossless, &RecoveryParams::zeros(&lossless).0, &PhaseKicks::none(1)).unwrap();
        let (xi, pi) = ideal_expectations(&lossless).unwrap();
        let (x, p) = signal_expectations(&st);
        assert!(close(x, xi, 1e-12) && close(p, pi, 1e-12));
    }

    #[test]
    fn length_mismatches_are_rejected() {
        let spec = CircuitSpec::default();
        assert_eq!(
            build_noisy::<f64>(&spec, &[0.0; 6], &PhaseKicks::none(2)).unwrap_err(),
            CircuitError::KickLength { expected: 1, got: 2 }
        );
        assert_eq!(
            build_noisy::<f64>(&spec, &[0.0; 3], &PhaseKicks::none(1)).unwrap_err(),
            CircuitError::RecoveryLength { expected: 6, got: 3 }
        );
        let bad = spec.with_eta(1.5);
        assert!(matches!(build_ideal(&bad), Err(CircuitError::InvalidSpec(_))));
    }

    #[test]
    fn recovery_rotates_then_displaces() {
        let spec = CircuitSpec::default().with_ancillas(0);
        let base = build_noisy::<f64>(&spec, &[0.0; 3], &PhaseKicks::none(0)).unwrap();
        let (x0, p0) = signal_expectations(&base);
        let phi: f64 = 0.4;
        let st = build_noisy(&spec, &[phi, 0.1, -0.2], &PhaseKicks::none(0)).unwrap();
        let (x, p) = signal_expectations(&st);
        assert!(close(x, x0 * phi.cos() - p0 * phi.sin() + 0.2, 1e-14));
        assert!(close(p, x0 * phi.sin() + p0 * phi.cos() - 0.4, 1e-14));
    }

    #[test]
    fn environment_is_untouched_by_recovery_and_kicks() {
        let spec = CircuitSpec::default().with_ancillas(2);
        let kicks = PhaseKicks {
            signal: 0.3,
            ancillas: vec![0.1, -0.2],
        };
        let a = build_noisy(&spec, &[0.0; 9], &kicks).unwrap();
        let b = build_noisy(&spec, &[0.5, 0.1, 0.2, -0.3, 0.0, 0.4, 0.2, 0.2, 0.2], &kicks).unwrap();
        let env = spec.env_mode();
        // the environment only couples through the loss; recovery cannot change its marginal
        assert_eq!(a.mean_x(env).unwrap(), b.mean_x(env).unwrap());
        assert_eq!(a.cov(2 * env, 2 * env), b.cov(2 * env, 2 * env));
    }
}
