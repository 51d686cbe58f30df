//! Truncated eigenbasis representation of the triple `V ⊂ H ⊂ V*`.
//!
//! Coefficients are stored against the orthonormal eigenbasis of `A` in `H`,
//! so the `V` and `V*` norms are diagonal reweightings by `λ_i` and `1/λ_i`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Floating-point slack on the ball constraint `‖x‖_H ≤ 1`.
pub const BALL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(LabError::invalid("spectrum needs at least one eigenvalue"));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(LabError::invalid(format!(
                "eigenvalues must be finite and positive, got {bad}"
            )));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(LabError::invalid("eigenvalues must be non-decreasing"));
        }
        Ok(Spectrum { eigenvalues })
    }

    /// `λ_i = scale · i^exponent` for `i = 1..=dim`.
    pub fn power_law(dim: usize, scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0) || !exponent.is_finite() || exponent < 0.0 {
            return Err(LabError::invalid(
                "power-law spectrum needs scale > 0 and exponent >= 0",
            ));
        }
        Self::new((1..=dim).map(|i| scale * (i as f64).powf(exponent)).collect())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `λ_{n+1}`, the first eigenvalue outside `H_n`. `None` when `n ≥ M`.
    pub fn lambda_next(&self, n: usize) -> Option<f64> {
        self.eigenvalues.get(n).copied()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn check(&self, x: &StateVector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Coefficients `⟨x, e_i⟩` of a state in the truncated basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub(crate) Vec<f64>);

impl StateVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LabError::invalid("state coefficients must be finite"));
        }
        Ok(StateVector(coeffs))
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    /// `amplitude · e_index`, with `index` 1-based like the eigenbasis.
    pub fn unit(dim: usize, index: usize, amplitude: f64) -> Result<Self> {
        if index == 0 || index > dim {
            return Err(LabError::invalid(format!(
                "mode index {index} outside 1..={dim}"
            )));
        }
        let mut v = vec![0.0; dim];
        v[index - 1] = amplitude;
        Self::new(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, s: f64) -> StateVector {
        StateVector(self.0.iter().map(|a| a * s).collect())
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A state known to lie in `D = {‖x‖_H ≤ 1}` (up to [`BALL_EPS`]).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallState {
    inner: StateVector,
}

impl BallState {
    pub fn new(inner: StateVector) -> Result<Self> {
        let norm = norm_h(&inner);
        if norm > 1.0 + BALL_EPS {
            return Err(LabError::OutsideBall { norm });
        }
        Ok(BallState { inner })
    }

    pub(crate) fn from_projected(inner: StateVector) -> Self {
        debug_assert!(norm_h(&inner) <= 1.0 + BALL_EPS);
        BallState { inner }
    }

    pub fn origin(dim: usize) -> Self {
        BallState {
            inner: StateVector::zeros(dim),
        }
    }

    pub fn inner(&self) -> &StateVector {
        &self.inner
    }

    pub fn into_inner(self) -> StateVector {
        self.inner
    }
}

impl Deref for BallState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.inner
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn weighted_norm_sq(a: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(w).map(|(x, l)| l * x * x).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm_h(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn norm_v(x: &StateVector, s: &Spectrum) -> Result<f64> {
    s.check(x)?;
    Ok(weighted_norm_sq(x, s.eigenvalues()).sqrt())
}

pub fn norm_v_star(x: &StateVector, s: &Spectrum) -> Result<f64> {
    s.check(x)?;
    Ok(x
        .iter()
        .zip(s.eigenvalues())
        .map(|(c, l)| c * c / l)
        .sum::<f64>()
        .sqrt())
}

/// `π_N x`: keep the first `n` coefficients.
pub fn project_modes(x: &StateVector, n: usize) -> Result<StateVector> {
    if n > x.len() {
        return Err(LabError::invalid(format!(
            "cannot project onto {n} modes of a {}-dimensional state",
            x.len()
        )));
    }
    let mut out = x.clone();
    out.0[n..].iter_mut().for_each(|c| *c = 0.0);
    Ok(out)
}

/// Radial projection onto `D`; returns the projected state and `projected − x`.
pub fn project_ball(x: &StateVector) -> (BallState, StateVector) {
    let mut projected = x.clone();
    let mut correction = StateVector::zeros(x.len());
    project_ball_in_place(&mut projected.0, &mut correction.0);
    (BallState::from_projected(projected), correction)
}

/// In-place radial projection. Writes `projected − original` into `correction`
/// and returns the pre-projection norm when the projection was active.
#[inline]
pub(crate) fn project_ball_in_place(x: &mut [f64], correction: &mut [f64]) -> Option<f64> {
    let norm = norm_h(x);
    if norm > 1.0 {
        let inv = 1.0 / norm;
        for (c, d) in x.iter_mut().zip(correction.iter_mut()) {
            let projected = *c * inv;
            *d = projected - *c;
            *c = projected;
        }
        Some(norm)
    } else {
        correction.iter_mut().for_each(|d| *d = 0.0);
        None
    }
}
