//! Coupling by change of measure: `Y` runs with the shared noise plus the
//! extra drift `c·π_N(X − Y)`, `c = beta_factor·λ_{N+1}`, and the Girsanov
//! weight `R_t = exp(−∫⟨β, dW⟩ − ½∫‖β‖² ds)` removes that drift again.
//!
//! `β = σ(Y)^{-1}(c·π_N(X − Y))` is evaluated at the start of each step, so
//! `Y` is driven by `ΔW + hβ` and the discrete weight is exact for the
//! scheme.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::integrator::{step_in_place, PathRecord, TimeGrid, Workspace};
use crate::models::SpdeModel;
use crate::noise::{NoiseBlock, NoiseStream};
use crate::reflection::LocalTimeRecord;
use crate::spectral::{dot, norm_h, norm_sq, weighted_norm_sq, BallState, StateVector};
use crate::stats::{mean_se, Estimate};
use crate::test_function::TestFunction;

/// Relative slack on the per-step `β` ceiling.
pub const BETA_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingScheme {
    /// Extra drift is `beta_factor·λ_{N+1}·π_N(X − Y)`; 0.5 or 1.0.
    pub beta_factor: f64,
}

impl Default for CouplingScheme {
    fn default() -> Self {
        CouplingScheme { beta_factor: 0.5 }
    }
}

impl CouplingScheme {
    pub fn new(beta_factor: f64) -> Result<Self> {
        if beta_factor != 0.5 && beta_factor != 1.0 {
            return Err(LabError::invalid(format!(
                "beta_factor must be 0.5 or 1.0, got {beta_factor}"
            )));
        }
        Ok(CouplingScheme { beta_factor })
    }

    /// The drift coefficient `c_N`.
    pub fn drift_coefficient<M: SpdeModel + ?Sized>(&self, m: &M) -> Result<f64> {
        let n = m.noise_rank();
        m.spectrum()
            .lambda_next(n)
            .map(|l| self.beta_factor * l)
            .ok_or_else(|| LabError::invalid(format!("noise rank {n} leaves no mode N+1")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StepStats {
    beta_sq: f64,
    beta_dw: f64,
    beta_norm: f64,
}

struct CoupledStepper<'a, M: SpdeModel + ?Sized> {
    m: &'a M,
    n: usize,
    coefficient: f64,
    sigma_inv: f64,
    ws_x: Workspace,
    ws_y: Workspace,
    target: Vec<f64>,
    beta: Vec<f64>,
    shifted: Vec<f64>,
    inc_x: Vec<f64>,
    inc_y: Vec<f64>,
}

impl<'a, M: SpdeModel + ?Sized> CoupledStepper<'a, M> {
    fn new(m: &'a M, scheme: CouplingScheme, h: f64) -> Result<Self> {
        let dim = m.spectrum().dim();
        let coefficient = scheme.drift_coefficient(m)?;
        let sigma_inv = m.constants().sigma_inv_bound;
        if !sigma_inv.is_finite() {
            return Err(LabError::hypothesis("coupling needs a finite sigma inverse bound on H_N"));
        }
        Ok(CoupledStepper {
            m,
            n: m.noise_rank(),
            coefficient,
            sigma_inv,
            ws_x: Workspace::new(m, h),
            ws_y: Workspace::new(m, h),
            target: vec![0.0; dim],
            beta: vec![0.0; dim],
            shifted: vec![0.0; dim],
            inc_x: vec![0.0; dim],
            inc_y: vec![0.0; dim],
        })
    }

    fn step(&mut self, x: &mut [f64], y: &mut [f64], dw: &[f64], h: f64, k: usize) -> Result<StepStats> {
        for i in 0..x.len() {
            self.target[i] = if i < self.n {
                self.coefficient * (x[i] - y[i])
            } else {
                0.0
            };
        }
        self.m.sigma_inv_apply(y, &self.target, &mut self.beta)?;
        let beta_norm = norm_h(&self.beta);
        // ‖β‖ ≤ c‖σ^{-1}‖_{H_N}‖π_N(x − y)‖
        let bound = self.sigma_inv * norm_h(&self.target);
        if beta_norm > bound * (1.0 + BETA_BOUND_SLACK) {
            return Err(LabError::BetaBound {
                step: k,
                beta_norm,
                bound,
            });
        }
        let beta_dw = dot(&self.beta, dw);
        for ((s, w), b) in self.shifted.iter_mut().zip(dw).zip(&self.beta) {
            *s = w + h * b;
        }
        step_in_place(self.m, x, dw, h, &mut self.ws_x, &mut self.inc_x, k)?;
        step_in_place(self.m, y, &self.shifted, h, &mut self.ws_y, &mut self.inc_y, k)?;
        Ok(StepStats {
            beta_sq: beta_norm * beta_norm * h,
            beta_dw,
            beta_norm,
        })
    }
}

/// One coupled step. Returns `(x', y', β)`.
pub fn coupled_step<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x: &BallState,
    y: &BallState,
    dw: &StateVector,
    h: f64,
) -> Result<(BallState, BallState, StateVector)> {
    let dim = m.spectrum().dim();
    for len in [x.len(), y.len(), dw.len()] {
        if len != dim {
            return Err(LabError::DimensionMismatch {
                expected: dim,
                found: len,
            });
        }
    }
    if !(h > 0.0) {
        return Err(LabError::invalid("step size must be positive"));
    }
    let mut stepper = CoupledStepper::new(m, scheme, h)?;
    let mut xn = x.inner().to_vec();
    let mut yn = y.inner().to_vec();
    stepper.step(&mut xn, &mut yn, dw, h, 1)?;
    Ok((
        BallState::from_projected(StateVector(xn)),
        BallState::from_projected(StateVector(yn)),
        StateVector(stepper.beta),
    ))
}

/// One coupled pair over the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRecord {
    pub grid: TimeGrid,
    pub scheme: CouplingScheme,
    /// `‖X_t − Y_t‖_H` at every grid point.
    pub dist_h: Vec<f64>,
    /// Running `∫₀^t ‖β_s‖²_H ds`.
    pub beta_sq_integral: Vec<f64>,
    /// Running `∫₀^t ⟨β_s, dW_s⟩`.
    pub beta_dw_integral: Vec<f64>,
    /// `R_t = exp(−beta_dw_integral − ½ beta_sq_integral)`.
    pub girsanov_weight: Vec<f64>,
    pub x_path: PathRecord,
    pub y_path: PathRecord,
    pub sup_beta_norm: f64,
    /// `λ_{N+1}‖σ^{-1}‖_{H_N}`.
    pub beta_ceiling: f64,
}

pub fn simulate_coupling<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x0: &BallState,
    y0: &BallState,
    grid: &TimeGrid,
    noise: &NoiseBlock,
) -> Result<CouplingRecord> {
    let dim = m.spectrum().dim();
    for len in [x0.len(), y0.len(), noise.dim()] {
        if len != dim {
            return Err(LabError::DimensionMismatch {
                expected: dim,
                found: len,
            });
        }
    }
    if noise.steps() != grid.steps() {
        return Err(LabError::invalid(format!(
            "noise block has {} steps, grid has {}",
            noise.steps(),
            grid.steps()
        )));
    }
    let h = grid.h();
    let steps = grid.steps();
    let lam = m.spectrum().eigenvalues();
    let mut stepper = CoupledStepper::new(m, scheme, h)?;
    let beta_ceiling = stepper.sigma_inv * stepper.coefficient / scheme.beta_factor;
    let mut x = x0.inner().to_vec();
    let mut y = y0.inner().to_vec();

    let mut dist_h = Vec::with_capacity(steps + 1);
    let mut beta_sq_integral = Vec::with_capacity(steps + 1);
    let mut beta_dw_integral = Vec::with_capacity(steps + 1);
    let mut girsanov_weight = Vec::with_capacity(steps + 1);
    let mut x_states = Vec::with_capacity(steps + 1);
    let mut y_states = Vec::with_capacity(steps + 1);
    let mut x_v = Vec::with_capacity(steps + 1);
    let mut y_v = Vec::with_capacity(steps + 1);
    let mut x_lt = LocalTimeRecord::with_capacity(steps);
    let mut y_lt = LocalTimeRecord::with_capacity(steps);
    let (mut x_sup, mut y_sup) = (norm_h(&x), norm_h(&y));
    let (mut bsq, mut bdw, mut iv_x, mut iv_y) = (0.0, 0.0, 0.0, 0.0);
    let mut sup_beta_norm = 0.0f64;

    let mut record_point = |x: &[f64], y: &[f64], bsq: f64, bdw: f64, iv_x: f64, iv_y: f64| {
        dist_h.push(norm_sq(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt());
        beta_sq_integral.push(bsq);
        beta_dw_integral.push(bdw);
        girsanov_weight.push((-bdw - 0.5 * bsq).exp());
        x_states.push(BallState::from_projected(StateVector(x.to_vec())));
        y_states.push(BallState::from_projected(StateVector(y.to_vec())));
        x_v.push(iv_x);
        y_v.push(iv_y);
    };
    record_point(&x, &y, bsq, bdw, iv_x, iv_y);
    for k in 0..steps {
        iv_x += h * weighted_norm_sq(&x, lam);
        iv_y += h * weighted_norm_sq(&y, lam);
        let s = stepper.step(&mut x, &mut y, noise.row(k), h, k + 1)?;
        x_lt.push(&stepper.inc_x);
        y_lt.push(&stepper.inc_y);
        x_sup = x_sup.max(norm_h(&x));
        y_sup = y_sup.max(norm_h(&y));
        bsq += s.beta_sq;
        bdw += s.beta_dw;
        sup_beta_norm = sup_beta_norm.max(s.beta_norm);
        record_point(&x, &y, bsq, bdw, iv_x, iv_y);
    }
    Ok(CouplingRecord {
        grid: *grid,
        scheme,
        dist_h,
        beta_sq_integral,
        beta_dw_integral,
        girsanov_weight,
        x_path: PathRecord {
            grid: *grid,
            states: x_states,
            local_time: x_lt,
            v_norm_integral: x_v,
            sup_h_norm: x_sup,
        },
        y_path: PathRecord {
            grid: *grid,
            states: y_states,
            local_time: y_lt,
            v_norm_integral: y_v,
            sup_h_norm: y_sup,
        },
        sup_beta_norm,
        beta_ceiling,
    })
}

/// `E[R_T f(Y_T^y)]` at the final grid point, with its standard error.
pub fn girsanov_reweighted_mean(records: &[CouplingRecord], f: &TestFunction) -> Result<Estimate> {
    if records.is_empty() {
        return Err(LabError::invalid("no coupling records"));
    }
    let values: Vec<f64> = records
        .iter()
        .map(|r| r.girsanov_weight.last().copied().unwrap_or(1.0) * f.eval(r.y_path.states.last().unwrap()))
        .collect();
    Ok(mean_se(&values))
}

/// Checkpoint snapshots of one coupled pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSummary {
    pub x_states: Vec<Vec<f64>>,
    pub y_states: Vec<Vec<f64>>,
    /// `‖X − Y‖²_H` at each checkpoint.
    pub dist_sq: Vec<f64>,
    /// `R_t` at each checkpoint.
    pub weight: Vec<f64>,
    /// `∫₀^t ‖X_s‖²_V ds` at each checkpoint.
    pub x_v_integral: Vec<f64>,
    pub sup_beta_norm: f64,
}

/// Streaming variant of [`simulate_coupling`] that keeps only checkpoint data.
pub fn simulate_coupling_checkpoints<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x0: &[f64],
    y0: &[f64],
    grid: &TimeGrid,
    checkpoints: &[usize],
    noise: &mut NoiseStream,
) -> Result<CoupledSummary> {
    let dim = m.spectrum().dim();
    for len in [x0.len(), y0.len()] {
        if len != dim {
            return Err(LabError::DimensionMismatch {
                expected: dim,
                found: len,
            });
        }
    }
    let h = grid.h();
    let lam = m.spectrum().eigenvalues();
    let mut stepper = CoupledStepper::new(m, scheme, h)?;
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut dw = vec![0.0; dim];
    let mut out = CoupledSummary {
        x_states: Vec::with_capacity(checkpoints.len()),
        y_states: Vec::with_capacity(checkpoints.len()),
        dist_sq: Vec::with_capacity(checkpoints.len()),
        weight: Vec::with_capacity(checkpoints.len()),
        x_v_integral: Vec::with_capacity(checkpoints.len()),
        sup_beta_norm: 0.0,
    };
    let (mut bsq, mut bdw, mut iv) = (0.0f64, 0.0f64, 0.0f64);
    let mut next_cp = 0;
    for k in 0..=grid.steps() {
        while next_cp < checkpoints.len() && checkpoints[next_cp] == k {
            out.dist_sq.push(x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum());
            out.weight.push((-bdw - 0.5 * bsq).exp());
            out.x_v_integral.push(iv);
            out.x_states.push(x.clone());
            out.y_states.push(y.clone());
            next_cp += 1;
        }
        if k == grid.steps() || next_cp == checkpoints.len() {
            break;
        }
        noise.next_into(&mut dw);
        iv += h * weighted_norm_sq(&x, lam);
        let s = stepper.step(&mut x, &mut y, &dw, h, k + 1)?;
        bsq += s.beta_sq;
        bdw += s.beta_dw;
        out.sup_beta_norm = out.sup_beta_norm.max(s.beta_norm);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::simulate_path;
    use crate::models::{make_linear_model, ModelSpec, SigmaRule};
    use crate::noise::SeedLineage;
    use crate::rng::DOMAIN_NOISE;
    use crate::spectral::Spectrum;

    fn model(drift: f64, sigma: Vec<f64>, n: usize) -> ModelSpec {
        let s = Spectrum::power_law(sigma.len(), 1.0, 1.0).unwrap();
        make_linear_model(s, n, drift, &SigmaRule::Explicit(sigma)).unwrap()
    }

    fn ball(v: &[f64]) -> BallState {
        BallState::new(StateVector::new(v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn diagonal_coupling_is_trivial() {
        let m = model(0.5, vec![1.0, 1.0, 0.5, 0.0], 2);
        let x = ball(&[0.3, -0.2, 0.1, 0.05]);
        let dw = StateVector::new(vec![0.01, -0.03, 0.02, 0.0]).unwrap();
        let (xn, yn, beta) = coupled_step(&m, CouplingScheme::default(), &x, &x, &dw, 0.01).unwrap();
        assert_eq!(xn, yn);
        assert!(beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn high_mode_difference_gives_zero_beta() {
        let m = model(0.0, vec![1.0, 1.0, 0.5, 0.0], 2);
        let x = ball(&[0.3, -0.2, 0.1, 0.05]);
        let y = ball(&[0.3, -0.2, -0.4, 0.2]);
        let dw = StateVector::zeros(4);
        let (_, _, beta) = coupled_step(&m, CouplingScheme::default(), &x, &y, &dw, 0.01).unwrap();
        assert!(beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn beta_norm_with_identity_sigma() {
        let m = model(0.0, vec![1.0, 1.0, 1.0, 0.0], 3);
        let x = ball(&[0.3, -0.2, 0.1, 0.05]);
        let y = ball(&[-0.1, 0.2, 0.0, 0.3]);
        let dw = StateVector::zeros(4);
        let d = [0.4f64, -0.4, 0.1];
        let expected = 0.5 * 4.0 * d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (_, _, beta) = coupled_step(&m, CouplingScheme::default(), &x, &y, &dw, 0.01).unwrap();
        assert!((norm_h(&beta) - expected).abs() < 1e-14);
        let (_, _, beta1) = coupled_step(&m, CouplingScheme::new(1.0).unwrap(), &x, &y, &dw, 0.01).unwrap();
        assert!((norm_h(&beta1) - 2.0 * expected).abs() < 1e-14);
        assert!(CouplingScheme::new(0.7).is_err());
    }

    #[test]
    fn equal_starts_give_zero_distance_and_unit_weight() {
        let m = model(0.5, vec![0.5; 8], 2);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let noise = NoiseBlock::generate(SeedLineage::new(3, DOMAIN_NOISE, 0), &grid, 8, 8);
        let x = ball(&[0.2, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let rec = simulate_coupling(&m, CouplingScheme::default(), &x, &x, &grid, &noise).unwrap();
        assert!(rec.dist_h.iter().all(|d| *d == 0.0));
        assert!(rec.girsanov_weight.iter().all(|w| *w == 1.0));
        // X matches the uncoupled path
        let direct = simulate_path(&m, &x, &grid, &noise).unwrap();
        assert_eq!(direct.states, rec.x_path.states);
    }

    #[test]
    fn noiseless_projected_distance_contracts() {
        // b = 0, σ = 0 above mode 2 so only H_N carries noise; no noise at all here
        let m = model(0.0, vec![1.0, 1.0, 0.0, 0.0], 2);
        let grid = TimeGrid::new(0.5, 50).unwrap();
        let h = grid.h();
        let noise = NoiseBlock::zeros(&grid, 4);
        let x = ball(&[0.5, 0.3, 0.1, 0.0]);
        let y = ball(&[-0.2, 0.1, 0.0, 0.1]);
        let rec = simulate_coupling(&m, CouplingScheme::default(), &x, &y, &grid, &noise).unwrap();
        let c = 0.5 * 3.0;
        for k in 1..=grid.steps() {
            for i in 0..2 {
                let lam = (i + 1) as f64;
                let prev = (rec.x_path.states[k - 1][i] - rec.y_path.states[k - 1][i]).abs();
                let now = (rec.x_path.states[k][i] - rec.y_path.states[k][i]).abs();
                assert!(now <= prev / (1.0 + h * (lam + c)) * (1.0 + 1e-12) + 1e-15);
            }
        }
        assert!(rec.sup_beta_norm <= rec.beta_ceiling * rec.dist_h[0].min(1.0));
    }

    #[test]
    fn record_invariants_and_determinism() {
        let m = model(0.5, vec![0.5; 8], 4);
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let noise = NoiseBlock::generate(SeedLineage::new(9, DOMAIN_NOISE, 2), &grid, 8, 8);
        let x = ball(&[0.4, 0.0, 0.2, 0.0, 0.0, 0.1, 0.0, 0.0]);
        let y = ball(&[-0.1, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a = simulate_coupling(&m, CouplingScheme::default(), &x, &y, &grid, &noise).unwrap();
        let b = simulate_coupling(&m, CouplingScheme::default(), &x, &y, &grid, &noise).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dist_h[0], norm_h(&x.inner().sub(y.inner())));
        for k in 0..=grid.steps() {
            let w = (-a.beta_dw_integral[k] - 0.5 * a.beta_sq_integral[k]).exp();
            assert!(a.girsanov_weight[k] > 0.0);
            assert!((a.girsanov_weight[k] - w).abs() <= 1e-10 * w);
        }
        let max_dist = a.dist_h.iter().cloned().fold(0.0, f64::max);
        assert!(a.sup_beta_norm > 0.0);
        assert!(a.sup_beta_norm <= a.beta_ceiling * max_dist.min(1.0));

        let cps = [0, 50, 100];
        let mut stream = NoiseStream::new(SeedLineage::new(9, DOMAIN_NOISE, 2), grid.h(), 8);
        let s = simulate_coupling_checkpoints(&m, CouplingScheme::default(), &x, &y, &grid, &cps, &mut stream)
            .unwrap();
        for (c, &k) in cps.iter().enumerate() {
            assert_eq!(s.weight[c], a.girsanov_weight[k]);
            assert_eq!(s.dist_sq[c].sqrt(), a.dist_h[k]);
            assert_eq!(s.x_v_integral[c], a.x_path.v_norm_integral[k]);
        }
    }

    #[test]
    fn reweighted_mean_with_equal_starts_is_plain_mean() {
        let m = model(0.5, vec![0.5; 6], 2);
        let grid = TimeGrid::new(0.5, 50).unwrap();
        let x = ball(&[0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let f = TestFunction::exponential_linear(StateVector::unit(6, 1, 1.0).unwrap(), 0.5).unwrap();
        let recs: Vec<_> = (0..20)
            .map(|p| {
                let noise = NoiseBlock::generate(SeedLineage::new(1, DOMAIN_NOISE, p), &grid, 6, 6);
                simulate_coupling(&m, CouplingScheme::default(), &x, &x, &grid, &noise).unwrap()
            })
            .collect();
        let est = girsanov_reweighted_mean(&recs, &f).unwrap();
        let plain: Vec<f64> = recs.iter().map(|r| f.eval(r.x_path.states.last().unwrap())).collect();
        assert_eq!(est, mean_se(&plain));
        assert!(girsanov_reweighted_mean(&[], &f).is_err());
    }

    #[test]
    fn weight_converges_under_refinement() {
        // same Brownian path at two resolutions: the coarse increments are
        // sums of the fine ones
        let m = model(0.5, vec![0.5; 6], 2);
        let x = ball(&[0.4, 0.1, 0.0, 0.0, 0.0, 0.0]);
        let y = ball(&[-0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut errs = Vec::new();
        let finest = TimeGrid::new(1.0, 3200).unwrap();
        let fine_noise = NoiseBlock::generate(SeedLineage::new(4, DOMAIN_NOISE, 0), &finest, 6, 6);
        let reference = simulate_coupling(&m, CouplingScheme::default(), &x, &y, &finest, &fine_noise).unwrap();
        for steps in [100usize, 200, 400] {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let ratio = 3200 / steps;
            let mut noise = NoiseBlock::zeros(&grid, 6);
            for k in 0..steps {
                for j in 0..ratio {
                    let row = fine_noise.row(k * ratio + j).to_vec();
                    for (o, v) in noise.row_mut(k).iter_mut().zip(row) {
                        *o += v;
                    }
                }
            }
            let rec = simulate_coupling(&m, CouplingScheme::default(), &x, &y, &grid, &noise).unwrap();
            errs.push((rec.girsanov_weight[steps] - reference.girsanov_weight[3200]).abs());
        }
        assert!(errs[2] < errs[0], "{errs:?}");
    }
}
