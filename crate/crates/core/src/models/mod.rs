//! Model contract (drift `b`, bilinear `B`, diffusion `σ` and the constants
//! of the standing assumptions) and the two built-in models.

mod navier_stokes;

pub use navier_stokes::{theta_threshold, FourierMode, NsBasis, Triad, Trig};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{stream, DOMAIN_SAMPLE};
use crate::spectral::{dot, norm_h, norm_sq, weighted_norm_sq, Spectrum, StateVector};

/// Constants entering the assumptions and the main-theorem formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Lipschitz constant of `b` from `H` to `V*`.
    #[serde(rename = "K_b")]
    pub k_drift: f64,
    /// `‖B(x,x)‖_{V*} ≤ K_B ‖x‖_H ‖x‖_V`.
    #[serde(rename = "K_B")]
    pub k_bilinear: f64,
    #[serde(rename = "K_sigma")]
    pub k_sigma: f64,
    /// Constant of the trilinear bound `|B̄(x,y,z)| ≤ K ‖y‖_V √(‖x‖_H‖x‖_V‖z‖_H‖z‖_V)`.
    #[serde(rename = "K_bar")]
    pub k_trilinear: f64,
    pub b0_vstar: f64,
    pub sigma0_hs: f64,
    pub sigma_inv_bound: f64,
    pub nu: Option<f64>,
    pub theta: Option<f64>,
    pub d: Option<usize>,
    /// Where `K_B` came from: "analytic", "empirical lower bound" or "manual".
    pub k_bilinear_source: String,
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("K_b", self.k_drift),
            ("K_B", self.k_bilinear),
            ("K_sigma", self.k_sigma),
            ("K_bar", self.k_trilinear),
            ("b0_vstar", self.b0_vstar),
            ("sigma0_hs", self.sigma0_hs),
            ("sigma_inv_bound", self.sigma_inv_bound),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(LabError::invalid(format!(
                    "constant {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// How the diagonal of `σ` is generated from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    Explicit(Vec<f64>),
    /// `σ_i = scale · λ_i^{−alpha}` for `i ≤ rank`, zero beyond.
    Power { scale: f64, alpha: f64, rank: usize },
}

impl SigmaRule {
    pub fn materialize(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let m = spectrum.dim();
        let diag = match self {
            SigmaRule::Explicit(v) => {
                if v.len() != m {
                    return Err(LabError::DimensionMismatch {
                        expected: m,
                        found: v.len(),
                    });
                }
                v.clone()
            }
            SigmaRule::Power { scale, alpha, rank } => spectrum
                .eigenvalues()
                .iter()
                .enumerate()
                .map(|(i, l)| if i < *rank { scale * l.powf(-alpha) } else { 0.0 })
                .collect(),
        };
        if let Some(bad) = diag.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(LabError::invalid(format!(
                "sigma entries must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(diag)
    }
}

/// The abstract model contract consumed by the integrator and the coupling.
///
/// All slices are coefficient vectors of length `spectrum().dim()`.
pub trait SpdeModel: Sync {
    fn spectrum(&self) -> &Spectrum;

    /// `N`: the diffusion is invertible on `H_N = span{e_1..e_N}`.
    fn noise_rank(&self) -> usize;

    fn constants(&self) -> &ModelConstants;

    /// `out = b(x)`.
    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// `out = B(u, v)`.
    fn bilinear(&self, u: &[f64], v: &[f64], out: &mut [f64]);

    /// False when `B ≡ 0`, letting the integrator skip the evaluation.
    fn has_bilinear(&self) -> bool {
        true
    }

    /// `out = σ(x) noise`.
    fn sigma_apply(&self, x: &[f64], noise: &[f64], out: &mut [f64]);

    /// `out = σ^{-1}(x) target` for `target ∈ H_N`.
    fn sigma_inv_apply(&self, x: &[f64], target: &[f64], out: &mut [f64]) -> Result<()>;

    /// `‖σ(x) − σ(y)‖²_{L₂(H)}`.
    fn sigma_hs_dist_sq(&self, x: &[f64], y: &[f64]) -> f64;

    /// Number of leading noise coordinates that can reach the state. Noise
    /// beyond this index is never drawn.
    fn noise_width(&self) -> usize {
        self.spectrum().dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `b(x) = −s·x`, `B = 0`.
    Linear { drift_scale: f64 },
    /// `b = 0`, `B(u,v) = (u·∇)v` Galerkin-truncated.
    NavierStokes(Box<NsBasis>),
}

/// A concrete model: spectrum, diagonal state-independent `σ`, drift and
/// nonlinearity, plus the constants used by the theory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    spectrum: Spectrum,
    noise_rank: usize,
    sigma_diag: Vec<f64>,
    noise_width: usize,
    kind: ModelKind,
    constants: ModelConstants,
}

/// Source of `K_B` for the Navier–Stokes model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BilinearConstant {
    Estimate { samples: usize, seed: u64 },
    Manual(f64),
}

impl Default for BilinearConstant {
    fn default() -> Self {
        BilinearConstant::Estimate {
            samples: 16,
            seed: 0,
        }
    }
}

fn check_noise_rank(spectrum: &Spectrum, n: usize) -> Result<()> {
    if n == 0 || n >= spectrum.dim() {
        return Err(LabError::invalid(format!(
            "noise rank N must satisfy 1 <= N <= M-1 = {}, got {n}",
            spectrum.dim().saturating_sub(1)
        )));
    }
    Ok(())
}

fn sigma_inverse_bound(sigma_diag: &[f64], n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, s) in sigma_diag[..n].iter().enumerate() {
        if *s <= 0.0 {
            return Err(LabError::SigmaInverse { mode: i + 1 });
        }
        worst = worst.max(1.0 / s);
    }
    Ok(worst)
}

pub fn make_linear_model(
    spectrum: Spectrum,
    noise_rank: usize,
    drift_scale: f64,
    sigma: &SigmaRule,
) -> Result<ModelSpec> {
    check_noise_rank(&spectrum, noise_rank)?;
    if !drift_scale.is_finite() {
        return Err(LabError::invalid("drift scale must be finite"));
    }
    let sigma_diag = sigma.materialize(&spectrum)?;
    let sigma_inv_bound = sigma_inverse_bound(&sigma_diag, noise_rank)?;
    let constants = ModelConstants {
        // ‖s·x‖_{V*} ≤ |s| λ₁^{-1/2} ‖x‖_H
        k_drift: drift_scale.abs() / spectrum.lambda_min().sqrt(),
        k_bilinear: 0.0,
        k_sigma: 0.0,
        k_trilinear: 0.0,
        b0_vstar: 0.0,
        sigma0_hs: norm_h(&sigma_diag),
        sigma_inv_bound,
        nu: None,
        theta: None,
        d: None,
        k_bilinear_source: "analytic".into(),
    };
    Ok(ModelSpec::assemble(
        spectrum,
        noise_rank,
        sigma_diag,
        ModelKind::Linear { drift_scale },
        constants,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsParams {
    pub d: usize,
    pub cutoff: usize,
    pub nu: f64,
    pub theta: f64,
}

pub fn make_navier_stokes_model(
    params: NsParams,
    noise_rank: usize,
    sigma: &SigmaRule,
    k_bilinear: BilinearConstant,
) -> Result<ModelSpec> {
    let basis = NsBasis::build(params.d, params.cutoff, params.nu, params.theta)?;
    let spectrum = Spectrum::new(basis.eigenvalues())?;
    check_noise_rank(&spectrum, noise_rank)?;
    let sigma_diag = sigma.materialize(&spectrum)?;
    let sigma_inv_bound = sigma_inverse_bound(&sigma_diag, noise_rank)?;
    let constants = ModelConstants {
        k_drift: 0.0,
        k_bilinear: 0.0,
        k_sigma: 0.0,
        k_trilinear: 0.0,
        b0_vstar: 0.0,
        sigma0_hs: norm_h(&sigma_diag),
        sigma_inv_bound,
        nu: Some(params.nu),
        theta: Some(params.theta),
        d: Some(params.d),
        k_bilinear_source: String::new(),
    };
    let mut model = ModelSpec::assemble(
        spectrum,
        noise_rank,
        sigma_diag,
        ModelKind::NavierStokes(Box::new(basis)),
        constants,
    );
    let (k_b, source) = match k_bilinear {
        BilinearConstant::Manual(v) => (v, "manual"),
        BilinearConstant::Estimate { samples, seed } => {
            (estimate_k_bilinear(&model, samples, seed), "empirical lower bound")
        }
    };
    let k_bar_seed = match k_bilinear {
        BilinearConstant::Estimate { seed, .. } => seed,
        BilinearConstant::Manual(_) => 0,
    };
    model.constants.k_bilinear = k_b;
    model.constants.k_bilinear_source = source.into();
    model.constants.k_trilinear = estimate_k_trilinear(&model, 256, k_bar_seed);
    model.constants.validate()?;
    Ok(model)
}

impl ModelSpec {
    fn assemble(
        spectrum: Spectrum,
        noise_rank: usize,
        sigma_diag: Vec<f64>,
        kind: ModelKind,
        constants: ModelConstants,
    ) -> Self {
        let noise_width = sigma_diag
            .iter()
            .rposition(|s| *s != 0.0)
            .map_or(0, |i| i + 1);
        ModelSpec {
            spectrum,
            noise_rank,
            sigma_diag,
            noise_width,
            kind,
            constants,
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn sigma_diag(&self) -> &[f64] {
        &self.sigma_diag
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// Replace the stored constants, e.g. with manual overrides.
    pub fn with_constants(mut self, constants: ModelConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    /// Same model with a different `N`; the `σ^{-1}` bound is recomputed.
    pub fn with_noise_rank(mut self, noise_rank: usize) -> Result<Self> {
        check_noise_rank(&self.spectrum, noise_rank)?;
        self.constants.sigma_inv_bound = sigma_inverse_bound(&self.sigma_diag, noise_rank)?;
        self.noise_rank = noise_rank;
        Ok(self)
    }

    fn check_dim(&self, x: &StateVector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

impl SpdeModel for ModelSpec {
    fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    fn noise_rank(&self) -> usize {
        self.noise_rank
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Linear { drift_scale } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -drift_scale * xi;
                }
            }
            ModelKind::NavierStokes(_) => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    fn bilinear(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Linear { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            ModelKind::NavierStokes(basis) => basis.advect(u, v, out),
        }
    }

    fn has_bilinear(&self) -> bool {
        matches!(self.kind, ModelKind::NavierStokes(_))
    }

    fn sigma_apply(&self, _x: &[f64], noise: &[f64], out: &mut [f64]) {
        for ((o, s), w) in out.iter_mut().zip(&self.sigma_diag).zip(noise) {
            *o = s * w;
        }
    }

    fn sigma_inv_apply(&self, _x: &[f64], target: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.noise_rank;
        for (i, ((o, s), y)) in out.iter_mut().zip(&self.sigma_diag).zip(target).enumerate() {
            if i < n {
                *o = y / s;
            } else {
                if *y != 0.0 {
                    return Err(LabError::invalid(format!(
                        "sigma inverse target has a component on mode {} outside H_N",
                        i + 1
                    )));
                }
                *o = 0.0;
            }
        }
        Ok(())
    }

    fn sigma_hs_dist_sq(&self, _x: &[f64], _y: &[f64]) -> f64 {
        0.0
    }

    fn noise_width(&self) -> usize {
        self.noise_width
    }
}

/// `B̄(x, y, z) = ⟨B(x, y), z⟩`.
pub fn trilinear_form(
    m: &ModelSpec,
    x: &StateVector,
    y: &StateVector,
    z: &StateVector,
) -> Result<f64> {
    for v in [x, y, z] {
        m.check_dim(v)?;
    }
    let mut b = vec![0.0; m.dim()];
    m.bilinear(x, y, &mut b);
    Ok(dot(&b, z))
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn vstar_norm(x: &[f64], lam: &[f64]) -> f64 {
    x.iter().zip(lam).map(|(c, l)| c * c / l).sum::<f64>().sqrt()
}

fn bilinear_ratio(m: &ModelSpec, u: &[f64], v: &[f64], scratch: &mut [f64]) -> Option<f64> {
    let lam = m.spectrum.eigenvalues();
    let denom = norm_h(u) * weighted_norm_sq(v, lam).sqrt();
    if denom == 0.0 {
        return None;
    }
    m.bilinear(u, v, scratch);
    Some(vstar_norm(scratch, lam) / denom)
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = norm_h(x);
    if n > 0.0 {
        x.iter_mut().for_each(|c| *c /= n);
    }
    n
}

const POWER_ITERATIONS: usize = 40;
const ALTERNATING_ROUNDS: usize = 3;

/// Alternating maximization of `‖B(u,v)‖_{V*} / (‖u‖_H ‖v‖_V)`. For fixed
/// `u` (resp. `v`) the map is linear, and its top singular vector is found
/// by power iteration on the normal operator.
fn refine_pair(basis: &NsBasis, lam: &[f64], u: &mut [f64], v: &mut [f64]) {
    let m = lam.len();
    let inv_sqrt: Vec<f64> = lam.iter().map(|l| 1.0 / l.sqrt()).collect();
    let mut w: Vec<f64> = v.iter().zip(lam).map(|(c, l)| c * l.sqrt()).collect();
    let mut tmp = vec![0.0; m];
    let mut img = vec![0.0; m];
    for _ in 0..ALTERNATING_ROUNDS {
        // v-step: G w = Λ^{-1/2} B(u, Λ^{-1/2} w)
        normalize(&mut w);
        for _ in 0..POWER_ITERATIONS {
            for i in 0..m {
                tmp[i] = w[i] * inv_sqrt[i];
            }
            basis.advect(u, &tmp, &mut img);
            for i in 0..m {
                img[i] *= inv_sqrt[i];
            }
            for i in 0..m {
                img[i] *= inv_sqrt[i];
            }
            basis.advect_adjoint_v(u, &img, &mut tmp);
            for i in 0..m {
                w[i] = tmp[i] * inv_sqrt[i];
            }
            if normalize(&mut w) == 0.0 {
                return;
            }
        }
        for i in 0..m {
            v[i] = w[i] * inv_sqrt[i];
        }
        // u-step: F u = Λ^{-1/2} B(u, v)
        normalize(u);
        for _ in 0..POWER_ITERATIONS {
            basis.advect(u, v, &mut img);
            for i in 0..m {
                img[i] *= inv_sqrt[i] * inv_sqrt[i];
            }
            basis.advect_adjoint_u(v, &img, &mut tmp);
            u.copy_from_slice(&tmp);
            if normalize(u) == 0.0 {
                return;
            }
        }
    }
}

/// Largest observed `‖B(u,v)‖_{V*} / (‖u‖_H ‖v‖_V)` over `sample_count`
/// samples: a lower bound for `K_B`. Sample `i` depends only on
/// `(rng_seed, i)`, so the estimate is a running maximum in `sample_count`.
pub fn estimate_k_bilinear(m: &ModelSpec, sample_count: usize, rng_seed: u64) -> f64 {
    let dim = m.dim();
    let lam = m.spectrum.eigenvalues();
    let mut scratch = vec![0.0; dim];
    let mut best = 0.0f64;
    for i in 0..sample_count {
        let mut rng = stream(rng_seed, DOMAIN_SAMPLE, i as u64);
        let mut u = gaussian_vec(&mut rng, dim);
        let mut v = gaussian_vec(&mut rng, dim);
        if let Some(r) = bilinear_ratio(m, &u, &v, &mut scratch) {
            best = best.max(r);
        }
        if let ModelKind::NavierStokes(basis) = &m.kind {
            refine_pair(basis, lam, &mut u, &mut v);
            if let Some(r) = bilinear_ratio(m, &u, &v, &mut scratch) {
                best = best.max(r);
            }
        }
    }
    best
}

/// Sampled lower bound for the trilinear constant `K`.
pub fn estimate_k_trilinear(m: &ModelSpec, sample_count: usize, rng_seed: u64) -> f64 {
    if !m.has_bilinear() {
        return 0.0;
    }
    let dim = m.dim();
    let lam = m.spectrum.eigenvalues();
    let mut b = vec![0.0; dim];
    let mut best = 0.0f64;
    for i in 0..sample_count {
        let mut rng = stream(rng_seed, DOMAIN_SAMPLE ^ 0x4b, i as u64);
        let x = gaussian_vec(&mut rng, dim);
        let y = gaussian_vec(&mut rng, dim);
        let z = gaussian_vec(&mut rng, dim);
        m.bilinear(&x, &y, &mut b);
        let value = dot(&b, &z).abs();
        let denom = weighted_norm_sq(&y, lam).sqrt()
            * (norm_h(&x) * weighted_norm_sq(&x, lam).sqrt() * norm_h(&z)
                * weighted_norm_sq(&z, lam).sqrt())
            .sqrt();
        if denom > 0.0 {
            best = best.max(value / denom);
        }
    }
    best
}

/// Sampled check of the drift, diffusion and bilinear bounds against the
/// stored constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub drift_ratio_max: f64,
    pub drift_constant: f64,
    pub drift_pass: bool,
    pub sigma_ratio_max: f64,
    pub sigma_constant: f64,
    pub sigma_pass: bool,
    pub bilinear_ratio_max: f64,
    pub bilinear_constant: f64,
    pub bilinear_pass: bool,
    /// Largest `|B̄(x,y,y)| / (‖x‖_V ‖y‖_H ‖y‖_V)`.
    pub antisymmetry_residual_max: f64,
    pub antisymmetry_pass: bool,
    pub pass: bool,
}

const RATIO_SLACK: f64 = 1e-9;
const ANTISYMMETRY_TOL: f64 = 1e-10;

fn within(ratio: f64, constant: f64) -> bool {
    ratio <= constant * (1.0 + RATIO_SLACK) + 1e-12
}

fn random_ball_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut x = gaussian_vec(rng, dim);
    normalize(&mut x);
    let radius: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    x.iter_mut().for_each(|c| *c *= radius);
    x
}

pub fn check_assumption_a(m: &ModelSpec, sample_count: usize, rng_seed: u64) -> AssumptionReport {
    let dim = m.dim();
    let lam = m.spectrum.eigenvalues();
    let c = &m.constants;
    let (mut bx, mut by) = (vec![0.0; dim], vec![0.0; dim]);
    let mut drift_max = 0.0f64;
    let mut sigma_max = 0.0f64;
    let mut bil_max = 0.0f64;
    let mut anti_max = 0.0f64;
    for i in 0..sample_count {
        let mut rng = stream(rng_seed, DOMAIN_SAMPLE ^ 0xa, i as u64);
        let x = random_ball_point(&mut rng, dim);
        let y = random_ball_point(&mut rng, dim);
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dist_sq = norm_sq(&dxy);
        if dist_sq > 0.0 {
            m.drift(&x, &mut bx);
            m.drift(&y, &mut by);
            let diff: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
            drift_max = drift_max.max(vstar_norm(&diff, lam) / dist_sq.sqrt());
            sigma_max = sigma_max.max(m.sigma_hs_dist_sq(&x, &y) / dist_sq);
        }
        if let Some(r) = bilinear_ratio(m, &x, &x, &mut bx) {
            bil_max = bil_max.max(r);
        }
        m.bilinear(&x, &y, &mut bx);
        let scale = weighted_norm_sq(&x, lam).sqrt() * norm_h(&y) * weighted_norm_sq(&y, lam).sqrt();
        if scale > 0.0 {
            anti_max = anti_max.max(dot(&bx, &y).abs() / scale);
        }
    }
    let drift_pass = within(drift_max, c.k_drift);
    let sigma_pass = within(sigma_max, c.k_sigma);
    let bilinear_pass = within(bil_max, c.k_bilinear);
    let antisymmetry_pass = anti_max <= ANTISYMMETRY_TOL;
    AssumptionReport {
        samples: sample_count,
        drift_ratio_max: drift_max,
        drift_constant: c.k_drift,
        drift_pass,
        sigma_ratio_max: sigma_max,
        sigma_constant: c.k_sigma,
        sigma_pass,
        bilinear_ratio_max: bil_max,
        bilinear_constant: c.k_bilinear,
        bilinear_pass,
        antisymmetry_residual_max: anti_max,
        antisymmetry_pass,
        pass: drift_pass && sigma_pass && bilinear_pass && antisymmetry_pass,
    }
}

/// Fitted `(c₁, c₂)` with `c₁ i^{2θ/d} ≤ λ_i ≤ c₂ i^{2θ/d}` on the retained range.
pub fn eigenvalue_growth_bounds(spectrum: &Spectrum, theta: f64, d: usize) -> (f64, f64) {
    let p = 2.0 * theta / d as f64;
    spectrum
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, l)| l / ((i + 1) as f64).powf(p))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(scale: f64, sigma: Vec<f64>, n: usize, lam: Vec<f64>) -> ModelSpec {
        make_linear_model(Spectrum::new(lam).unwrap(), n, scale, &SigmaRule::Explicit(sigma)).unwrap()
    }

    #[test]
    fn identity_diffusion_constants() {
        let m = linear(0.0, vec![1.0, 1.0, 0.0, 0.0], 2, vec![1.0, 2.0, 3.0, 4.0]);
        let c = m.constants();
        assert_eq!(c.k_drift, 0.0);
        assert_eq!(c.sigma_inv_bound, 1.0);
        assert_eq!(c.k_sigma, 0.0);
        assert_eq!(c.b0_vstar, 0.0);
        assert_eq!(c.sigma0_hs, 2f64.sqrt());
        assert_eq!(m.noise_width(), 2);
    }

    #[test]
    fn sigma_inverse_bound_is_max_reciprocal() {
        let m = linear(0.0, vec![2.0, 1.0, 0.0], 2, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.constants().sigma_inv_bound, 1.0);
    }

    #[test]
    fn zero_sigma_on_required_mode_is_rejected() {
        let r = make_linear_model(
            Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap(),
            2,
            0.0,
            &SigmaRule::Explicit(vec![1.0, 0.0, 1.0]),
        );
        assert_eq!(r.unwrap_err(), LabError::SigmaInverse { mode: 2 });
    }

    #[test]
    fn drift_constant_matches_basis_maximization() {
        let lam = vec![0.5, 2.0, 3.0, 7.0];
        let s = 0.8;
        let m = linear(s, vec![1.0; 4], 2, lam.clone());
        // oracle: max over unit basis vectors of ‖b(e_i)‖_{V*}
        let oracle = (0..4)
            .map(|i| {
                let mut e = vec![0.0; 4];
                e[i] = 1.0;
                let mut out = vec![0.0; 4];
                m.drift(&e, &mut out);
                vstar_norm(&out, &lam)
            })
            .fold(0.0f64, f64::max);
        assert!((m.constants().k_drift - oracle).abs() < 1e-15);
        assert!((oracle - s / 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sigma_round_trip_on_h_n() {
        let m = linear(0.3, vec![0.5, 2.0, 1.5, 0.0, 0.0], 3, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = [0.3, -0.7, 1.1, 0.0, 0.0];
        let x = [0.1; 5];
        let mut pre = [0.0; 5];
        let mut back = [0.0; 5];
        m.sigma_inv_apply(&x, &y, &mut pre).unwrap();
        m.sigma_apply(&x, &pre, &mut back);
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
        }
        let outside = [0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(m.sigma_inv_apply(&x, &outside, &mut pre).is_err());
    }

    #[test]
    fn sigma_power_rule() {
        let s = Spectrum::new(vec![1.0, 4.0, 9.0]).unwrap();
        let d = SigmaRule::Power { scale: 2.0, alpha: 0.5, rank: 2 }.materialize(&s).unwrap();
        assert_eq!(d, vec![2.0, 1.0, 0.0]);
        assert!(SigmaRule::Explicit(vec![1.0]).materialize(&s).is_err());
    }

    #[test]
    fn linear_trilinear_is_zero_and_estimates_vanish() {
        let m = linear(0.5, vec![1.0; 3], 1, vec![1.0, 2.0, 3.0]);
        let x = StateVector::new(vec![0.2, 0.4, -0.1]).unwrap();
        assert_eq!(trilinear_form(&m, &x, &x, &x).unwrap(), 0.0);
        assert_eq!(estimate_k_bilinear(&m, 10, 1), 0.0);
        assert!(trilinear_form(&m, &x, &StateVector::zeros(2), &x).is_err());
    }

    #[test]
    fn assumption_check_passes_and_detects_override() {
        let m = linear(0.5, vec![0.5; 6], 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let rep = check_assumption_a(&m, 500, 3);
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.sigma_ratio_max, 0.0);
        assert!(rep.drift_ratio_max <= m.constants().k_drift);

        let mut c = m.constants().clone();
        c.k_drift *= 0.5;
        let lowered = m.with_constants(c).unwrap();
        let rep = check_assumption_a(&lowered, 500, 3);
        assert!(!rep.drift_pass);
        assert!(!rep.pass);
    }

    fn ns(d: usize, cutoff: usize, theta: f64) -> ModelSpec {
        make_navier_stokes_model(
            NsParams { d, cutoff, nu: 1.0, theta },
            2,
            &SigmaRule::Power { scale: 0.5, alpha: 0.0, rank: 4 },
            BilinearConstant::Estimate { samples: 4, seed: 11 },
        )
        .unwrap()
    }

    #[test]
    fn ns_trilinear_identities() {
        let m = ns(2, 3, 1.0);
        let lam = m.spectrum().eigenvalues().to_vec();
        for i in 0..200u64 {
            let mut rng = stream(5, 1, i);
            let x = StateVector::new(gaussian_vec(&mut rng, m.dim())).unwrap();
            let y = StateVector::new(gaussian_vec(&mut rng, m.dim())).unwrap();
            let z = StateVector::new(gaussian_vec(&mut rng, m.dim())).unwrap();
            let scale = weighted_norm_sq(&x, &lam).sqrt() * norm_h(&y) * weighted_norm_sq(&y, &lam).sqrt();
            assert!(trilinear_form(&m, &x, &y, &y).unwrap().abs() <= 1e-10 * scale);
            let sym = trilinear_form(&m, &x, &y, &z).unwrap() + trilinear_form(&m, &x, &z, &y).unwrap();
            assert!(sym.abs() <= 1e-10 * (1.0 + scale * norm_h(&z)));
        }
    }

    #[test]
    fn ns_bilinear_is_bilinear() {
        let m = ns(2, 2, 1.0);
        let dim = m.dim();
        let mut rng = stream(9, 2, 0);
        let (u, u2, v) = (gaussian_vec(&mut rng, dim), gaussian_vec(&mut rng, dim), gaussian_vec(&mut rng, dim));
        let alpha = 1.7;
        let combo: Vec<f64> = u.iter().zip(&u2).map(|(a, b)| alpha * a + b).collect();
        let (mut lhs, mut r1, mut r2) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        m.bilinear(&combo, &v, &mut lhs);
        m.bilinear(&u, &v, &mut r1);
        m.bilinear(&u2, &v, &mut r2);
        for i in 0..dim {
            assert!((lhs[i] - (alpha * r1[i] + r2[i])).abs() < 1e-12);
        }
        m.bilinear(&v, &combo, &mut lhs);
        m.bilinear(&v, &u, &mut r1);
        m.bilinear(&v, &u2, &mut r2);
        for i in 0..dim {
            assert!((lhs[i] - (alpha * r1[i] + r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn k_bilinear_estimate_is_running_max() {
        let m = ns(2, 2, 1.0);
        let mut prev = 0.0;
        for n in 1..6 {
            let e = estimate_k_bilinear(&m, n, 21);
            assert!(e >= prev);
            prev = e;
        }
        assert!(prev > 0.0);
    }

    #[test]
    fn ns_constants_and_growth() {
        let m = ns(2, 4, 1.0);
        assert_eq!(m.dim(), 48);
        let c = m.constants();
        assert_eq!(c.k_bilinear_source, "empirical lower bound");
        assert!(c.k_bilinear > 0.0 && c.k_trilinear > 0.0);
        let (c1, c2) = eigenvalue_growth_bounds(m.spectrum(), 1.0, 2);
        assert!(c1 > 0.0 && c2 / c1 < 10.0, "c1 = {c1}, c2 = {c2}");
        let rep = check_assumption_a(&m, 200, 4);
        assert!(rep.antisymmetry_pass && rep.drift_pass && rep.sigma_pass, "{rep:?}");
    }

    #[test]
    fn ns_threshold_rejections() {
        let err = make_navier_stokes_model(
            NsParams { d: 3, cutoff: 2, nu: 1.0, theta: 1.0 },
            1,
            &SigmaRule::Power { scale: 1.0, alpha: 0.0, rank: 2 },
            BilinearConstant::Manual(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, LabError::HypothesisViolation(_)));
        assert!(make_navier_stokes_model(
            NsParams { d: 2, cutoff: 2, nu: 1.0, theta: 1.0 },
            1,
            &SigmaRule::Power { scale: 1.0, alpha: 0.0, rank: 2 },
            BilinearConstant::Manual(1.0),
        )
        .is_ok());
    }
}
