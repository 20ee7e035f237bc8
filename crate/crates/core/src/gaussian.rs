//! Multi-mode Gaussian states in the first/second-moment picture.
//!
//! Conventions: ħ = 2, so the vacuum covariance is the identity and a
//! coherent amplitude `α` shifts the mean by `(2 Re α, 2 Im α)`. Quadratures
//! are interleaved as `(x₀, p₀, x₁, p₁, …)`.
//!
//! States are generic over [`Scalar`] so the same primitives propagate plain
//! `f64` moments or dual numbers carrying parameter tangents.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::diff::Scalar;

/// Tolerance on `|Σ − Σᵀ|` accepted by [`GaussianState::validate`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Slack below 1 allowed for symplectic eigenvalues.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("a Gaussian state needs at least one mode")]
    ZeroModes,
    #[error("mode index {mode} out of range for {num_modes} modes")]
    ModeOutOfRange { mode: usize, num_modes: usize },
    #[error("two-mode operation needs distinct modes, got {0} twice")]
    SameMode(usize),
    #[error("transmissivity {0} outside [0, 1]")]
    Transmissivity(f64),
    #[error("non-finite parameter `{0}`")]
    NonFiniteParameter(&'static str),
    #[error("state has non-finite entries")]
    NonFiniteState,
    #[error("covariance is not symmetric (max deviation {0:e})")]
    Asymmetric(f64),
    #[error("unphysical covariance: smallest symplectic eigenvalue {0}")]
    Unphysical(f64),
}

pub type Result<T, E = GaussianError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<T = f64> {
    num_modes: usize,
    mean: Vec<T>,
    // row-major 2M × 2M
    cov: Vec<T>,
}

fn check_finite(v: f64, name: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(GaussianError::NonFiniteParameter(name))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(GaussianError::Transmissivity(eta))
    }
}

/// `[[cos φ, −sin φ], [sin φ, cos φ]]`, row-major.
pub fn rotation_block<T: Scalar>(phi: &T) -> [T; 4] {
    let (c, s) = (phi.cos(), phi.sin());
    [c.clone(), -s.clone(), s, c]
}

/// `cosh r · I − sinh r · [[cos φ, sin φ], [sin φ, −cos φ]]`, row-major.
pub fn squeezing_block(r: f64, phi: f64) -> [f64; 4] {
    let (ch, sh) = (r.cosh(), r.sinh());
    let (c, s) = (phi.cos(), phi.sin());
    [ch - sh * c, -sh * s, -sh * s, ch + sh * c]
}

/// Real 4×4 action on `(x_a, p_a, x_b, p_b)` of
/// `a → cos θ·a − e^{−iφ} sin θ·b`, `b → e^{iφ} sin θ·a + cos θ·b`.
pub fn beamsplitter_block(theta: f64, phi: f64) -> [f64; 16] {
    let (c, s) = (theta.cos(), theta.sin());
    let (cp, sp) = (phi.cos(), phi.sin());
    #[rustfmt::skip]
    let m = [
        c,       0.0,      -s * cp, -s * sp,
        0.0,     c,         s * sp, -s * cp,
        s * cp, -s * sp,    c,       0.0,
        s * sp,  s * cp,    0.0,     c,
    ];
    m
}

impl<T: Scalar> GaussianState<T> {
    /// Vacuum of `num_modes` modes: zero mean, identity covariance.
    pub fn vacuum(num_modes: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(GaussianError::ZeroModes);
        }
        let n = 2 * num_modes;
        let mut cov = vec![T::zero(); n * n];
        for i in 0..n {
            cov[i * n + i] = T::constant(1.0);
        }
        Ok(Self {
            num_modes,
            mean: vec![T::zero(); n],
            cov,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.num_modes
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self, i: usize, j: usize) -> &T {
        &self.cov[i * self.dim() + j]
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.num_modes {
            Ok(())
        } else {
            Err(GaussianError::ModeOutOfRange {
                mode,
                num_modes: self.num_modes,
            })
        }
    }

    pub fn mean_x(&self, mode: usize) -> Result<T> {
        self.check_mode(mode)?;
        Ok(self.mean[2 * mode].clone())
    }

    pub fn mean_p(&self, mode: usize) -> Result<T> {
        self.check_mode(mode)?;
        Ok(self.mean[2 * mode + 1].clone())
    }

    /// Applies the local symplectic `block` (k×k, row-major) acting on the
    /// phase-space indices `idx`: `μ → Sμ`, `Σ → SΣSᵀ`.
    fn apply_local(&mut self, idx: &[usize], block: &[T]) {
        let k = idx.len();
        let n = self.dim();
        let mix = |vals: &[T], row: usize| -> T {
            let mut acc = block[row * k].clone() * vals[0].clone();
            for c in 1..k {
                acc = acc + block[row * k + c].clone() * vals[c].clone();
            }
            acc
        };

        let old: Vec<T> = idx.iter().map(|&i| self.mean[i].clone()).collect();
        for (r, &i) in idx.iter().enumerate() {
            self.mean[i] = mix(&old, r);
        }
        // rows: Σ ← SΣ
        for col in 0..n {
            let old: Vec<T> = idx.iter().map(|&i| self.cov[i * n + col].clone()).collect();
            for (r, &i) in idx.iter().enumerate() {
                self.cov[i * n + col] = mix(&old, r);
            }
        }
        // columns: Σ ← ΣSᵀ
        for row in 0..n {
            let old: Vec<T> = idx.iter().map(|&j| self.cov[row * n + j].clone()).collect();
            for (r, &j) in idx.iter().enumerate() {
                self.cov[row * n + j] = mix(&old, r);
            }
        }
    }

    /// Phase rotation `exp(−iφ a†a)`: `x → x cos φ − p sin φ`, `p → x sin φ + p cos φ`.
    pub fn apply_rotation(&mut self, mode: usize, phi: T) -> Result<&mut Self> {
        self.check_mode(mode)?;
        check_finite(phi.value(), "phi")?;
        self.apply_local(&[2 * mode, 2 * mode + 1], &rotation_block(&phi));
        Ok(self)
    }

    /// Single-mode squeezing with magnitude `r` along angle `phi`.
    pub fn apply_squeezing(&mut self, mode: usize, r: f64, phi: f64) -> Result<&mut Self> {
        self.check_mode(mode)?;
        check_finite(r, "r")?;
        check_finite(phi, "phi")?;
        if r == 0.0 {
            return Ok(self);
        }
        let block = squeezing_block(r, phi).map(T::constant);
        self.apply_local(&[2 * mode, 2 * mode + 1], &block);
        Ok(self)
    }

    /// Displacement by `β = re + i·im`; shifts the mean by `(2 re, 2 im)`.
    pub fn apply_displacement(&mut self, mode: usize, re: T, im: T) -> Result<&mut Self> {
        self.check_mode(mode)?;
        check_finite(re.value(), "re")?;
        check_finite(im.value(), "im")?;
        let x = self.mean[2 * mode].clone() + re * 2.0;
        let p = self.mean[2 * mode + 1].clone() + im * 2.0;
        self.mean[2 * mode] = x;
        self.mean[2 * mode + 1] = p;
        Ok(self)
    }

    pub fn apply_beamsplitter(&mut self, mode_a: usize, mode_b: usize, theta: f64, phi: f64) -> Result<&mut Self> {
        self.check_mode(mode_a)?;
        self.check_mode(mode_b)?;
        if mode_a == mode_b {
            return Err(GaussianError::SameMode(mode_a));
        }
        check_finite(theta, "theta")?;
        check_finite(phi, "phi")?;
        let block = beamsplitter_block(theta, phi).map(T::constant);
        let idx = [2 * mode_a, 2 * mode_a + 1, 2 * mode_b, 2 * mode_b + 1];
        self.apply_local(&idx, &block);
        Ok(self)
    }

    /// Optical loss as a beam splitter `(mode, env_mode)` at angle `arccos √η`.
    /// `env_mode` is expected to hold vacuum.
    pub fn apply_loss_via_env(&mut self, mode: usize, env_mode: usize, eta: f64) -> Result<&mut Self> {
        check_eta(eta)?;
        self.apply_beamsplitter(mode, env_mode, eta.sqrt().acos(), 0.0)
    }

    /// The pure-loss channel acting on `mode` directly (environment traced out).
    pub fn apply_loss_channel(&mut self, mode: usize, eta: f64) -> Result<&mut Self> {
        self.check_mode(mode)?;
        check_eta(eta)?;
        let n = self.dim();
        let t = eta.sqrt();
        let local = [2 * mode, 2 * mode + 1];
        for &i in &local {
            self.mean[i] = self.mean[i].clone() * t;
        }
        for i in 0..n {
            for j in 0..n {
                let (li, lj) = (local.contains(&i), local.contains(&j));
                let v = &mut self.cov[i * n + j];
                if li && lj {
                    let noise = if i == j { 1.0 - eta } else { 0.0 };
                    *v = v.clone() * eta + noise;
                } else if li || lj {
                    *v = v.clone() * t;
                }
            }
        }
        Ok(self)
    }

    /// Reduced state with `mode` traced out.
    pub fn discard_mode(&self, mode: usize) -> Result<GaussianState<T>> {
        self.check_mode(mode)?;
        if self.num_modes == 1 {
            return Err(GaussianError::ZeroModes);
        }
        let n = self.dim();
        let keep: Vec<usize> = (0..n).filter(|&i| i / 2 != mode).collect();
        let mean = keep.iter().map(|&i| self.mean[i].clone()).collect();
        let cov = keep
            .iter()
            .flat_map(|&i| keep.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.cov[i * n + j].clone())
            .collect();
        Ok(GaussianState {
            num_modes: self.num_modes - 1,
            mean,
            cov,
        })
    }

    /// Drops tangent information.
    pub fn primal(&self) -> GaussianState<f64> {
        GaussianState {
            num_modes: self.num_modes,
            mean: self.mean.iter().map(Scalar::value).collect(),
            cov: self.cov.iter().map(Scalar::value).collect(),
        }
    }
}

impl GaussianState<f64> {
    /// Builds a state from raw moments, validating the state invariants.
    pub fn from_moments(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || !n.is_multiple_of(2) || cov.nrows() != n || cov.ncols() != n {
            return Err(GaussianError::ZeroModes);
        }
        let state = Self {
            num_modes: n / 2,
            mean,
            cov: (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| cov[(i, j)])
                .collect(),
        };
        state.validate()?;
        Ok(state)
    }

    /// Lifts every moment to a constant of scalar type `T`.
    pub fn lift<T: Scalar>(&self) -> GaussianState<T> {
        GaussianState {
            num_modes: self.num_modes,
            mean: self.mean.iter().map(|&v| T::constant(v)).collect(),
            cov: self.cov.iter().map(|&v| T::constant(v)).collect(),
        }
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.cov)
    }

    /// Symplectic spectrum in ascending order (one value per mode).
    ///
    /// Computed as the singular values of `Σ^{1/2} Ω Σ^{1/2}`, which come in
    /// degenerate pairs.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let cov = self.cov_matrix();
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let root_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&root_vals) * eig.eigenvectors.transpose();
        let a = &root * symplectic_form(self.num_modes) * &root;
        let ata = a.transpose() * &a;
        let mut nu2: Vec<f64> = SymmetricEigen::new(ata).eigenvalues.iter().copied().collect();
        nu2.sort_by(f64::total_cmp);
        nu2.chunks(2)
            .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
            .collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.cov[i * n + j] - self.cov[j * n + i]).abs());
            }
        }
        worst
    }

    /// Checks finiteness, symmetry and the uncertainty principle.
    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().chain(&self.cov).any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFiniteState);
        }
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(GaussianError::Asymmetric(asym));
        }
        let min = self.symplectic_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < 1.0 - PHYSICALITY_TOL {
            return Err(GaussianError::Unphysical(min));
        }
        Ok(())
    }

    /// Applies a general affine symplectic map to the whole state.
    pub fn apply_affine(&self, map: &AffineSymplectic) -> Result<GaussianState<f64>> {
        if map.num_modes() != self.num_modes {
            return Err(GaussianError::ModeOutOfRange {
                mode: map.num_modes(),
                num_modes: self.num_modes,
            });
        }
        let mean = &map.s * self.mean_vector() + &map.d;
        let cov = &map.s * self.cov_matrix() * map.s.transpose();
        let n = self.dim();
        Ok(GaussianState {
            num_modes: self.num_modes,
            mean: mean.iter().copied().collect(),
            cov: (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| cov[(i, j)])
                .collect(),
        })
    }
}

/// `Ω = ⊕ [[0, 1], [−1, 0]]`.
pub fn symplectic_form(num_modes: usize) -> DMatrix<f64> {
    let n = 2 * num_modes;
    let mut omega = DMatrix::zeros(n, n);
    for m in 0..num_modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    omega
}

/// Phase-space map `μ → Sμ + d`, `Σ → SΣSᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSymplectic {
    pub s: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl AffineSymplectic {
    pub fn identity(num_modes: usize) -> Self {
        let n = 2 * num_modes;
        Self {
            s: DMatrix::identity(n, n),
            d: DVector::zeros(n),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.s.nrows() / 2
    }

    fn embed(num_modes: usize, idx: &[usize], block: &[f64]) -> Self {
        let mut map = Self::identity(num_modes);
        let k = idx.len();
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                map.s[(i, j)] = block[r * k + c];
            }
        }
        map
    }

    pub fn rotation(num_modes: usize, mode: usize, phi: f64) -> Self {
        Self::embed(num_modes, &[2 * mode, 2 * mode + 1], &rotation_block(&phi))
    }

    pub fn squeezing(num_modes: usize, mode: usize, r: f64, phi: f64) -> Self {
        Self::embed(num_modes, &[2 * mode, 2 * mode + 1], &squeezing_block(r, phi))
    }

    pub fn displacement(num_modes: usize, mode: usize, re: f64, im: f64) -> Self {
        let mut map = Self::identity(num_modes);
        map.d[2 * mode] = 2.0 * re;
        map.d[2 * mode + 1] = 2.0 * im;
        map
    }

    pub fn beamsplitter(num_modes: usize, a: usize, b: usize, theta: f64, phi: f64) -> Self {
        let idx = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1];
        Self::embed(num_modes, &idx, &beamsplitter_block(theta, phi))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineSymplectic) -> Self {
        Self {
            s: &next.s * &self.s,
            d: &next.s * &self.d + &next.d,
        }
    }

    /// `max |SΩSᵀ − Ω|`.
    pub fn symplectic_defect(&self) -> f64 {
        let omega = symplectic_form(self.num_modes());
        (&self.s * &omega * self.s.transpose() - omega).abs().max()
    }
}

/// Entanglement degradation `min{det N / (1 + det M)², 1}` of the pure-loss
/// channel with `M = √η·I₂`, `N = (1 − η)·I₂`.
pub fn entanglement_degradation(eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let det_n = (1.0 - eta) * (1.0 - eta);
    let det_m = eta;
    Ok((det_n / ((1.0 + det_m) * (1.0 + det_m))).min(1.0))
}
