//! Positive test functions `f` on the ball with known `‖∇f‖_∞` and
//! `‖∇ log f‖_∞` (gradients taken in `‖·‖_H`, suprema over `D`).

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{dot, norm_h, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    /// `f(x) = e^{c⟨v,x⟩}`.
    ExponentialLinear,
    /// `f(x) = c`, with `c > 0`.
    Constant,
    /// `f(x) = 1 + ½ clamp(c⟨v,x⟩, −1, 1)`.
    ClippedLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    pub direction: StateVector,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind, direction: StateVector, scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(LabError::invalid("test function scale must be finite"));
        }
        if kind == TestFunctionKind::Constant && scale <= 0.0 {
            return Err(LabError::invalid("constant test function must be positive"));
        }
        Ok(TestFunction {
            kind,
            direction,
            scale,
        })
    }

    pub fn exponential_linear(direction: StateVector, scale: f64) -> Result<Self> {
        Self::new(TestFunctionKind::ExponentialLinear, direction, scale)
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        Self::new(TestFunctionKind::Constant, StateVector::zeros(dim), value)
    }

    pub fn clipped_linear(direction: StateVector, scale: f64) -> Result<Self> {
        Self::new(TestFunctionKind::ClippedLinear, direction, scale)
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    fn slope(&self) -> f64 {
        self.scale.abs() * norm_h(&self.direction)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.kind {
            TestFunctionKind::ExponentialLinear => (self.scale * dot(&self.direction, x)).exp(),
            TestFunctionKind::Constant => self.scale,
            TestFunctionKind::ClippedLinear => {
                1.0 + 0.5 * (self.scale * dot(&self.direction, x)).clamp(-1.0, 1.0)
            }
        }
    }

    pub fn log_eval(&self, x: &[f64]) -> f64 {
        match self.kind {
            TestFunctionKind::ExponentialLinear => self.scale * dot(&self.direction, x),
            _ => self.eval(x).ln(),
        }
    }

    /// `‖∇ log f‖_∞` over `D`.
    pub fn grad_log_sup(&self) -> f64 {
        match self.kind {
            TestFunctionKind::ExponentialLinear => self.slope(),
            TestFunctionKind::Constant => 0.0,
            TestFunctionKind::ClippedLinear => {
                let s = self.slope();
                0.5 * s / (1.0 - 0.5 * s.min(1.0))
            }
        }
    }

    /// `‖∇ f‖_∞` over `D`.
    pub fn grad_sup(&self) -> f64 {
        match self.kind {
            TestFunctionKind::ExponentialLinear => self.slope() * self.slope().exp(),
            TestFunctionKind::Constant => 0.0,
            TestFunctionKind::ClippedLinear => 0.5 * self.slope(),
        }
    }

    pub fn describe(&self) -> String {
        let dir: Vec<String> = self
            .direction
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| format!("{c}*e{}", i + 1))
            .collect();
        let dir = if dir.is_empty() { "0".to_string() } else { dir.join("+") };
        match self.kind {
            TestFunctionKind::ExponentialLinear => format!("exp({} <{dir}, x>)", self.scale),
            TestFunctionKind::Constant => format!("const({})", self.scale),
            TestFunctionKind::ClippedLinear => format!("1 + clamp({} <{dir}, x>)/2", self.scale),
        }
    }
}
