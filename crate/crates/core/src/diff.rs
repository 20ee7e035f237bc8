//! Forward-mode differentiation with multi-slot dual numbers.
//!
//! Every circuit primitive is written against the [`Scalar`] trait, so the
//! same code path evaluates plain `f64` circuits and [`Dual`] circuits that
//! carry one tangent slot per trainable parameter. [`finite_diff_gradient`]
//! is the independent oracle used to check [`gradient`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("parameter vector is empty")]
    EmptyParameters,
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite function value")]
    NonFiniteValue,
    #[error("non-finite derivative in parameter slot {slot}")]
    NonFiniteTangent { slot: usize },
    #[error("non-finite function value at parameter slot {slot} (perturbed by {offset:+e})")]
    NonFiniteProbe { slot: usize, offset: f64 },
}

/// Numeric type the Gaussian engine is generic over.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Add<f64, Output = Self>
{
    /// A value that does not depend on any trainable parameter.
    fn constant(v: f64) -> Self;
    /// The primal value.
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sinh(&self) -> Self;
    fn cosh(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn acos(&self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sinh(&self) -> Self {
        f64::sinh(*self)
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn acos(&self) -> Self {
        f64::acos(*self)
    }
}

/// A value together with its partial derivatives w.r.t. `P` parameters.
///
/// An empty tangent vector is the zero tangent of a constant; it combines
/// with tangents of any length. Two non-empty tangent vectors must agree in
/// length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub tangents: Vec<f64>,
}

impl Dual {
    pub fn new(value: f64, tangents: Vec<f64>) -> Self {
        Self { value, tangents }
    }

    /// Derivative w.r.t. slot `i` (zero for constants).
    pub fn tangent(&self, i: usize) -> f64 {
        self.tangents.get(i).copied().unwrap_or(0.0)
    }

    fn scaled(&self, value: f64, factor: f64) -> Dual {
        Dual {
            value,
            // structural zeros stay zero even when `factor` is infinite
            tangents: self
                .tangents
                .iter()
                .map(|&t| if t == 0.0 { 0.0 } else { t * factor })
                .collect(),
        }
    }

    // value, a.tangents * ca + b.tangents * cb
    fn combine(value: f64, a: &Dual, ca: f64, b: &Dual, cb: f64) -> Dual {
        let tangents = match (a.tangents.is_empty(), b.tangents.is_empty()) {
            (true, true) => Vec::new(),
            (false, true) => a.tangents.iter().map(|t| t * ca).collect(),
            (true, false) => b.tangents.iter().map(|t| t * cb).collect(),
            (false, false) => {
                debug_assert_eq!(a.tangents.len(), b.tangents.len(), "tangent length mismatch");
                a.tangents
                    .iter()
                    .zip(&b.tangents)
                    .map(|(x, y)| x * ca + y * cb)
                    .collect()
            }
        };
        Dual { value, tangents }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::combine(self.value + rhs.value, &self, 1.0, &rhs, 1.0)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::combine(self.value - rhs.value, &self, 1.0, &rhs, -1.0)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::combine(self.value * rhs.value, &self, rhs.value, &rhs, self.value)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scaled(-self.value, -1.0)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        self.scaled(self.value * rhs, rhs)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(mut self, rhs: f64) -> Dual {
        self.value += rhs;
        self
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual {
            value: v,
            tangents: Vec::new(),
        }
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn sin(&self) -> Self {
        self.scaled(self.value.sin(), self.value.cos())
    }
    fn cos(&self) -> Self {
        self.scaled(self.value.cos(), -self.value.sin())
    }
    fn sinh(&self) -> Self {
        self.scaled(self.value.sinh(), self.value.cosh())
    }
    fn cosh(&self) -> Self {
        self.scaled(self.value.cosh(), self.value.sinh())
    }
    fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.scaled(s, 0.5 / s)
    }
    fn acos(&self) -> Self {
        let d = -1.0 / (1.0 - self.value * self.value).sqrt();
        self.scaled(self.value.acos(), d)
    }
}

/// Lifts `theta` into duals: element `i` has value `theta[i]` and tangent `e_i`.
pub fn seed_parameters(theta: &[f64]) -> Result<Vec<Dual>, DiffError> {
    if theta.is_empty() {
        return Err(DiffError::EmptyParameters);
    }
    let p = theta.len();
    Ok(theta
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut tangents = vec![0.0; p];
            tangents[i] = 1.0;
            Dual::new(v, tangents)
        })
        .collect())
}

/// Like [`value_and_gradient`] for objectives that can fail.
pub fn try_value_and_gradient<F, E>(f: F, theta: &[f64]) -> Result<(f64, Vec<f64>), E>
where
    F: FnOnce(&[Dual]) -> Result<Dual, E>,
    E: From<DiffError>,
{
    let seeded = seed_parameters(theta)?;
    let out = f(&seeded)?;
    if !out.value.is_finite() {
        return Err(DiffError::NonFiniteValue.into());
    }
    let grad: Vec<f64> = (0..theta.len()).map(|i| out.tangent(i)).collect();
    if let Some(slot) = grad.iter().position(|g| !g.is_finite()) {
        return Err(DiffError::NonFiniteTangent { slot }.into());
    }
    Ok((out.value, grad))
}

/// Evaluates `f` once on seeded duals, returning `(f(theta), grad f(theta))`.
pub fn value_and_gradient<F>(f: F, theta: &[f64]) -> Result<(f64, Vec<f64>), DiffError>
where
    F: FnOnce(&[Dual]) -> Dual,
{
    try_value_and_gradient(|t| Ok::<_, DiffError>(f(t)), theta)
}

/// Gradient of `f` at `theta` by forward-mode propagation.
pub fn gradient<F>(f: F, theta: &[f64]) -> Result<Vec<f64>, DiffError>
where
    F: FnOnce(&[Dual]) -> Dual,
{
    value_and_gradient(f, theta).map(|(_, g)| g)
}

/// Central-difference gradient `(f(θ+h eᵢ) − f(θ−h eᵢ)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>, DiffError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(DiffError::InvalidStep(h));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let plus = f(&probe);
        if !plus.is_finite() {
            return Err(DiffError::NonFiniteProbe { slot: i, offset: h });
        }
        probe[i] = theta[i] - h;
        let minus = f(&probe);
        if !minus.is_finite() {
            return Err(DiffError::NonFiniteProbe { slot: i, offset: -h });
        }
        probe[i] = theta[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeding_is_unit_basis() {
        let s = seed_parameters(&[0.0, 0.0]).unwrap();
        assert_eq!(s[0], Dual::new(0.0, vec![1.0, 0.0]));
        assert_eq!(s[1], Dual::new(0.0, vec![0.0, 1.0]));

        let s = seed_parameters(&[0.0; 6]).unwrap();
        for (i, d) in s.iter().enumerate() {
            for j in 0..6 {
                assert_eq!(d.tangents[j], if i == j { 1.0 } else { 0.0 });
            }
        }

        let s = seed_parameters(&[0.06]).unwrap();
        assert_eq!(s[0].value, 0.06);
        assert_eq!(s[0].tangents, vec![1.0]);

        assert_eq!(seed_parameters(&[]), Err(DiffError::EmptyParameters));
    }

    #[test]
    fn square_and_constant() {
        let g = gradient(|t| t[0].clone() * t[0].clone(), &[3.0]).unwrap();
        assert_eq!(g, vec![6.0]);
        let g = gradient(|_| Dual::constant(2.5), &[1.0, -2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn product_rule_holds() {
        let a = Dual::new(2.0, vec![1.0, 3.0]);
        let b = Dual::new(-5.0, vec![0.5, 4.0]);
        let p = a.clone() * b.clone();
        assert_eq!(p.value, -10.0);
        assert_eq!(p.tangents, vec![2.0 * 0.5 + -5.0 * 1.0, 2.0 * 4.0 + -5.0 * 3.0]);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        type Pair = (fn(&Dual) -> Dual, fn(f64) -> f64);
        let x = 0.37;
        let cases: Vec<Pair> = vec![
            (|d| d.sin(), f64::sin),
            (|d| d.cos(), f64::cos),
            (|d| d.sinh(), f64::sinh),
            (|d| d.cosh(), f64::cosh),
            (|d| d.sqrt(), f64::sqrt),
            (|d| d.acos(), f64::acos),
        ];
        for (dual_fn, real_fn) in cases {
            let g = gradient(|t| dual_fn(&t[0]), &[x]).unwrap();
            let fd = finite_diff_gradient(|t| real_fn(t[0]), &[x], 1e-6).unwrap();
            assert!((g[0] - fd[0]).abs() < 1e-8, "{} vs {}", g[0], fd[0]);
        }
    }

    #[test]
    fn finite_differences_on_simple_functions() {
        let g = finite_diff_gradient(|t| t[0] * t[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        for h in [1e-1, 1.0, 3.0] {
            let g = finite_diff_gradient(|t| 2.0 * t[0] - 7.0 * t[1] + 1.0, &[0.3, 0.4], h).unwrap();
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 7.0).abs() < 1e-12);
        }
        assert_eq!(
            finite_diff_gradient(|t| t[0], &[1.0], 0.0),
            Err(DiffError::InvalidStep(0.0))
        );
        assert!(matches!(
            finite_diff_gradient(|t| (t[0] - 1.0).sqrt(), &[1.0], 1e-3),
            Err(DiffError::NonFiniteProbe { slot: 0, .. })
        ));
    }

    #[test]
    fn non_finite_tangent_names_the_slot() {
        // d/dx sqrt(x) at 0 is infinite; slot 1 carries the sqrt argument
        let r = gradient(|t| t[0].clone() + t[1].sqrt(), &[1.0, 0.0]);
        assert_eq!(r, Err(DiffError::NonFiniteTangent { slot: 1 }));
        let r = gradient(|t| (t[0].clone() + -2.0).sqrt(), &[1.0]);
        assert_eq!(r, Err(DiffError::NonFiniteValue));
    }
}
