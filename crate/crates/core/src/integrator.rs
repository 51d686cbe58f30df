//! Semi-implicit Euler–Maruyama stepping in the truncated basis.
//!
//! Per step and coordinate,
//! `x̂_i = (x_i + h (b(x) + B(x,x))_i + (σ(x) ΔW)_i) / (1 + h λ_i)`,
//! followed by the ball reflection. `A` is implicit, `b`, `B` and the noise
//! are evaluated at the start of the step.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::models::SpdeModel;
use crate::noise::{NoiseBlock, NoiseStream};
use crate::reflection::{reflect_in_place, LocalTimeRecord};
use crate::spectral::{norm_h, norm_sq, weighted_norm_sq, BallState, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(LabError::invalid(format!("t_end must be positive, got {t_end}")));
        }
        if steps == 0 {
            return Err(LabError::invalid("grid needs at least one step"));
        }
        Ok(TimeGrid {
            t_end,
            steps,
            h: t_end / steps as f64,
        })
    }

    /// Grid with step close to `h` that ends exactly at `t_end`.
    pub fn with_step(t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(LabError::invalid("step size must be positive"));
        }
        Self::new(t_end, (t_end / h).round().max(1.0) as usize)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    /// Grid index of time `t`; `t` must sit on the grid up to rounding.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.h).round();
        if !(0.0..=self.steps as f64).contains(&k) || (k * self.h - t).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(LabError::invalid(format!(
                "checkpoint t = {t} is not a point of the grid (h = {}, t_end = {})",
                self.h, self.t_end
            )));
        }
        Ok(k as usize)
    }
}

/// One simulated trajectory with its local time and path functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub grid: TimeGrid,
    /// `steps + 1` states, `states[0]` the initial condition.
    pub states: Vec<BallState>,
    pub local_time: LocalTimeRecord,
    /// `∫₀^{t_k} ‖X_s‖²_V ds` by the left-endpoint rule, for every grid point.
    pub v_norm_integral: Vec<f64>,
    pub sup_h_norm: f64,
}

/// Scratch buffers for one stepping process.
pub(crate) struct Workspace {
    drift: Vec<f64>,
    bilinear: Vec<f64>,
    noise_term: Vec<f64>,
    implicit: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new<M: SpdeModel + ?Sized>(m: &M, h: f64) -> Self {
        let dim = m.spectrum().dim();
        Workspace {
            drift: vec![0.0; dim],
            bilinear: vec![0.0; dim],
            noise_term: vec![0.0; dim],
            implicit: m.spectrum().eigenvalues().iter().map(|l| 1.0 / (1.0 + h * l)).collect(),
        }
    }
}

/// Advance `x` by one step in place; `increment` receives `ΔL`. Returns
/// whether the reflection was active.
#[inline]
pub(crate) fn step_in_place<M: SpdeModel + ?Sized>(
    m: &M,
    x: &mut [f64],
    dw: &[f64],
    h: f64,
    ws: &mut Workspace,
    increment: &mut [f64],
    step_index: usize,
) -> Result<bool> {
    m.drift(x, &mut ws.drift);
    if m.has_bilinear() {
        m.bilinear(x, x, &mut ws.bilinear);
    }
    m.sigma_apply(x, dw, &mut ws.noise_term);
    if m.has_bilinear() {
        for i in 0..x.len() {
            x[i] = (x[i] + h * (ws.drift[i] + ws.bilinear[i]) + ws.noise_term[i]) * ws.implicit[i];
        }
    } else {
        for i in 0..x.len() {
            x[i] = (x[i] + h * ws.drift[i] + ws.noise_term[i]) * ws.implicit[i];
        }
    }
    if !norm_sq(x).is_finite() {
        return Err(LabError::BlowUp { step: step_index });
    }
    Ok(reflect_in_place(x, increment).is_some())
}

fn check_dims<M: SpdeModel + ?Sized>(m: &M, len: usize) -> Result<()> {
    let dim = m.spectrum().dim();
    if len != dim {
        return Err(LabError::DimensionMismatch {
            expected: dim,
            found: len,
        });
    }
    Ok(())
}

/// One step of the reflected scheme. Returns the new state and `ΔL`.
pub fn step<M: SpdeModel + ?Sized>(
    m: &M,
    x: &BallState,
    dw: &StateVector,
    h: f64,
) -> Result<(BallState, StateVector)> {
    check_dims(m, x.len())?;
    check_dims(m, dw.len())?;
    if !(h > 0.0) {
        return Err(LabError::invalid("step size must be positive"));
    }
    let mut ws = Workspace::new(m, h);
    let mut next = x.inner().clone();
    let mut increment = StateVector::zeros(x.len());
    step_in_place(m, &mut next, dw, h, &mut ws, &mut increment, 1)?;
    Ok((BallState::from_projected(next), increment))
}

pub fn simulate_path<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &BallState,
    grid: &TimeGrid,
    noise: &NoiseBlock,
) -> Result<PathRecord> {
    check_dims(m, x0.len())?;
    check_dims(m, noise.dim())?;
    if noise.steps() != grid.steps() {
        return Err(LabError::invalid(format!(
            "noise block has {} steps, grid has {}",
            noise.steps(),
            grid.steps()
        )));
    }
    let h = grid.h();
    let lam = m.spectrum().eigenvalues();
    let mut ws = Workspace::new(m, h);
    let mut x = x0.inner().to_vec();
    let mut increment = vec![0.0; x.len()];
    let mut states = Vec::with_capacity(grid.steps() + 1);
    let mut v_norm_integral = Vec::with_capacity(grid.steps() + 1);
    let mut local_time = LocalTimeRecord::with_capacity(grid.steps());
    let mut integral = 0.0;
    let mut sup_h_norm = norm_h(&x);
    states.push(x0.clone());
    v_norm_integral.push(0.0);
    for k in 0..grid.steps() {
        integral += h * weighted_norm_sq(&x, lam);
        step_in_place(m, &mut x, noise.row(k), h, &mut ws, &mut increment, k + 1)?;
        local_time.push(&increment);
        sup_h_norm = sup_h_norm.max(norm_h(&x));
        states.push(BallState::from_projected(StateVector(x.clone())));
        v_norm_integral.push(integral);
    }
    Ok(PathRecord {
        grid: *grid,
        states,
        local_time,
        v_norm_integral,
        sup_h_norm,
    })
}

/// `e^{λ ∫₀^T ‖X_s‖²_V ds}` for one path; `+∞` on overflow.
pub fn path_functional_exp_v(path: &PathRecord, lambda: f64) -> f64 {
    let integral = *path.v_norm_integral.last().unwrap_or(&0.0);
    (lambda * integral).exp()
}

/// Checkpoint snapshots of one path, for Monte Carlo use where storing every
/// state would be wasteful.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// `states[c]` is the state at checkpoint `c`.
    pub states: Vec<Vec<f64>>,
    /// `∫₀^{t_c} ‖X_s‖²_V ds` at every checkpoint.
    pub v_integral: Vec<f64>,
    pub sup_h_norm: f64,
    /// `Var_H(L)` over the whole grid.
    pub local_time_variation: f64,
}

/// Simulate several initial conditions in lockstep under one shared noise
/// path (common random numbers). `checkpoints` are grid indices, sorted.
pub fn simulate_checkpoints_shared<M: SpdeModel + ?Sized>(
    m: &M,
    starts: &[&[f64]],
    grid: &TimeGrid,
    checkpoints: &[usize],
    noise: &mut NoiseStream,
) -> Result<Vec<PathSummary>> {
    for s in starts {
        check_dims(m, s.len())?;
    }
    let dim = m.spectrum().dim();
    let h = grid.h();
    let lam = m.spectrum().eigenvalues();
    let mut ws = Workspace::new(m, h);
    let mut xs: Vec<Vec<f64>> = starts.iter().map(|s| s.to_vec()).collect();
    let mut out: Vec<PathSummary> = xs
        .iter()
        .map(|x| PathSummary {
            states: Vec::with_capacity(checkpoints.len()),
            v_integral: Vec::with_capacity(checkpoints.len()),
            sup_h_norm: norm_h(x),
            local_time_variation: 0.0,
        })
        .collect();
    let mut integrals = vec![0.0; xs.len()];
    let mut dw = vec![0.0; dim];
    let mut increment = vec![0.0; dim];
    let mut next_cp = 0;
    for k in 0..=grid.steps() {
        while next_cp < checkpoints.len() && checkpoints[next_cp] == k {
            for ((summary, x), integral) in out.iter_mut().zip(&xs).zip(&integrals) {
                summary.states.push(x.clone());
                summary.v_integral.push(*integral);
            }
            next_cp += 1;
        }
        if k == grid.steps() {
            break;
        }
        noise.next_into(&mut dw);
        for ((x, summary), integral) in xs.iter_mut().zip(out.iter_mut()).zip(integrals.iter_mut()) {
            *integral += h * weighted_norm_sq(x, lam);
            if step_in_place(m, x, &dw, h, &mut ws, &mut increment, k + 1)? {
                summary.local_time_variation += norm_h(&increment);
            }
            summary.sup_h_norm = summary.sup_h_norm.max(norm_h(x));
        }
    }
    Ok(out)
}
