//! Closed-form constants of the log-Harnack estimate and the Monte Carlo
//! suites that test it.

mod suites;

pub use suites::*;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models::{ModelConstants, SpdeModel};
use crate::spectral::{dist_sq, Spectrum};

/// `r(N) = λ_{N+1} − 2K_b − 3K_σ − 2K_B²(2K_b + ‖b(0)‖²_{V*})
///        − 4K_B²(4K_B² + 1)(K_σ + ‖σ(0)‖²_{L₂})`.
pub fn compute_r(c: &ModelConstants, lambda_next: f64) -> f64 {
    let kb2 = c.k_bilinear * c.k_bilinear;
    lambda_next
        - 2.0 * c.k_drift
        - 3.0 * c.k_sigma
        - 2.0 * kb2 * (2.0 * c.k_drift + c.b0_vstar * c.b0_vstar)
        - 4.0 * kb2 * (4.0 * kb2 + 1.0) * (c.k_sigma + c.sigma0_hs * c.sigma0_hs)
}

/// Smallest `N ∈ [1, M−1]` with `r(N) > 0`.
pub fn min_n_for(c: &ModelConstants, spectrum: &Spectrum) -> Option<usize> {
    (1..spectrum.dim()).find(|&n| compute_r(c, spectrum.eigenvalues()[n]) > 0.0)
}

pub fn min_n<M: SpdeModel + ?Sized>(m: &M) -> Option<usize> {
    min_n_for(m.constants(), m.spectrum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackConstants {
    pub noise_rank: usize,
    pub lambda_next: f64,
    pub r_n: f64,
    pub k_bilinear: f64,
    pub sigma_inv_bound: f64,
    /// `e^{K_B²}λ_{N+1}²‖σ^{-1}‖²_{H_N} / (2r(N))`; absent when `r(N) ≤ 0`.
    pub phi_coeff: Option<f64>,
    /// `e^{K_B²/2}`.
    pub psi_prefactor: f64,
    /// `r(N)/2`.
    pub psi_rate: f64,
    /// `Λ`, the coefficient of `Φ` without the `‖x − y‖²` factor.
    pub lambda_cap: Option<f64>,
}

impl HarnackConstants {
    pub fn new(c: &ModelConstants, noise_rank: usize, lambda_next: f64) -> Self {
        let r_n = compute_r(c, lambda_next);
        let kb2 = c.k_bilinear * c.k_bilinear;
        let phi_coeff = (r_n > 0.0).then(|| {
            kb2.exp() * lambda_next * lambda_next * c.sigma_inv_bound * c.sigma_inv_bound / (2.0 * r_n)
        });
        HarnackConstants {
            noise_rank,
            lambda_next,
            r_n,
            k_bilinear: c.k_bilinear,
            sigma_inv_bound: c.sigma_inv_bound,
            phi_coeff,
            psi_prefactor: (0.5 * kb2).exp(),
            psi_rate: 0.5 * r_n,
            lambda_cap: phi_coeff,
        }
    }

    pub fn for_model<M: SpdeModel + ?Sized>(m: &M) -> Result<Self> {
        let n = m.noise_rank();
        let lambda_next = m
            .spectrum()
            .lambda_next(n)
            .ok_or_else(|| LabError::invalid(format!("noise rank {n} leaves no mode N+1")))?;
        Ok(Self::new(m.constants(), n, lambda_next))
    }

    pub fn require_positive(&self) -> Result<()> {
        if self.r_n > 0.0 {
            Ok(())
        } else {
            Err(LabError::hypothesis(format!(
                "r(N) = {} is not positive for N = {}",
                self.r_n, self.noise_rank
            )))
        }
    }

    /// `Γ_t = e^{(K_B² − r(N)t)/2}`.
    pub fn gamma_t(&self, t: f64) -> f64 {
        self.psi_prefactor * (-self.psi_rate * t).exp()
    }
}

/// `Φ(x, y) = phi_coeff·‖x − y‖²_H`.
pub fn compute_phi(hc: &HarnackConstants, x: &[f64], y: &[f64]) -> Result<f64> {
    hc.require_positive()?;
    check_pair(x, y)?;
    Ok(hc.phi_coeff.unwrap_or(f64::INFINITY) * dist_sq(x, y))
}

/// `Ψ_t(x, y) = e^{(K_B² − r(N)t)/2}‖x − y‖_H`.
pub fn compute_psi(hc: &HarnackConstants, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    hc.require_positive()?;
    check_pair(x, y)?;
    Ok(hc.gamma_t(t) * dist_sq(x, y).sqrt())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(LabError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Right side of `E[‖X_t − Y_t‖²] ≤ e^{K_B² − r(N)t}‖x − y‖²`.
pub fn contraction_bound(hc: &HarnackConstants, t: f64, dist_sq: f64) -> f64 {
    (hc.k_bilinear * hc.k_bilinear - hc.r_n * t).exp() * dist_sq
}

/// Right side of `E[e^{λ∫₀^t‖X‖²_V}] ≤ e^{λ + λ[(2K_b + ‖b(0)‖²) + (4λ + 2)(K_σ + ‖σ(0)‖²)]t}`.
pub fn t1_bound(c: &ModelConstants, lambda: f64, t: f64) -> f64 {
    let drift = 2.0 * c.k_drift + c.b0_vstar * c.b0_vstar;
    let noise = (4.0 * lambda + 2.0) * (c.k_sigma + c.sigma0_hs * c.sigma0_hs);
    (lambda + lambda * (drift + noise) * t).exp()
}

/// Right side of `E[e^{−2K_B²∫‖X‖²_V}‖X_t − Y_t‖⁴] ≤ e^{(4K_b + 6K_σ − 2λ_{N+1})t}‖x − y‖⁴`.
pub fn t2_bound(c: &ModelConstants, lambda_next: f64, t: f64, dist_sq: f64) -> f64 {
    ((4.0 * c.k_drift + 6.0 * c.k_sigma - 2.0 * lambda_next) * t).exp() * dist_sq * dist_sq
}
