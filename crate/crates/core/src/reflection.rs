//! Discrete Skorokhod reflection on the unit ball and its local-time
//! bookkeeping.
//!
//! One step maps `x̂ ↦ x̂ / max(1, ‖x̂‖)`; the increment `ΔL = x_new − x̂`
//! points radially inward, so `⟨φ − x_new, ΔL⟩ ≥ 0` for every `φ ∈ D`.

use rand::Rng;
use serde::Serialize;

use crate::integrator::PathRecord;
use crate::rng::{stream, DOMAIN_PROBE};
use crate::spectral::{norm_h, project_ball, project_ball_in_place, BallState, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeRecord {
    /// `ΔL` for every step, zero when the projection was inactive.
    pub increments: Vec<StateVector>,
    /// `Var_H(L) = Σ ‖ΔL‖_H`.
    pub total_variation: f64,
    /// Steps (1-based, i.e. the index of the resulting grid point) where `ΔL ≠ 0`.
    pub active_steps: Vec<usize>,
}

impl LocalTimeRecord {
    pub(crate) fn with_capacity(steps: usize) -> Self {
        LocalTimeRecord {
            increments: Vec::with_capacity(steps),
            total_variation: 0.0,
            active_steps: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, increment: &[f64]) {
        let n = norm_h(increment);
        self.increments.push(StateVector(increment.to_vec()));
        if n > 0.0 {
            self.total_variation += n;
            self.active_steps.push(self.increments.len());
        }
    }
}

pub fn reflect_step(x_hat: &StateVector) -> (BallState, StateVector) {
    project_ball(x_hat)
}

#[inline]
pub(crate) fn reflect_in_place(x: &mut [f64], increment: &mut [f64]) -> Option<f64> {
    project_ball_in_place(x, increment)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalReport {
    pub probes: usize,
    /// Smallest `Σ_k ⟨φ(t_k) − X_{t_k}, ΔL_k⟩` over the random probes and `φ = 0`.
    pub min_sum: f64,
    /// `Σ_k ⟨X_{t_k}, ΔL_k⟩`, which must be `≤ 0`.
    pub state_pairing: f64,
    /// Probe `φ = X`; exactly zero.
    pub self_probe_sum: f64,
    pub total_variation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative tolerance on the variational sums, in units of `Var_H(L)`.
pub const VARIATIONAL_TOL: f64 = 1e-9;

struct Probe {
    base: Vec<f64>,
    cos_part: Vec<f64>,
    sin_part: Vec<f64>,
    omega: f64,
}

impl Probe {
    fn random<R: Rng>(rng: &mut R, dim: usize, t_end: f64) -> Self {
        let mut draw = |scale: f64| -> Vec<f64> {
            (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let base = draw(1.0);
        let cos_part = draw(0.5);
        let sin_part = draw(0.5);
        let omega = rng.random::<f64>() * 6.0 * std::f64::consts::PI / t_end;
        Probe {
            base,
            cos_part,
            sin_part,
            omega,
        }
    }

    /// Continuous in `t` and `D`-valued (radially projected).
    fn eval(&self, t: f64, out: &mut [f64], scratch: &mut [f64]) {
        let (c, s) = ((self.omega * t).cos(), (self.omega * t).sin());
        for i in 0..out.len() {
            out[i] = self.base[i] + c * self.cos_part[i] + s * self.sin_part[i];
        }
        project_ball_in_place(out, scratch);
    }
}

/// `Σ_k ⟨φ(t_k) − X_{t_k}, ΔL_k⟩` over the active steps.
fn pairing_sum(
    path: &PathRecord,
    mut probe: impl FnMut(usize, &mut [f64]),
    phi: &mut [f64],
) -> f64 {
    let lt = &path.local_time;
    let mut sum = 0.0;
    for &k in &lt.active_steps {
        probe(k, phi);
        let x = &path.states[k];
        let dl = &lt.increments[k - 1];
        sum += phi
            .iter()
            .zip(x.iter())
            .zip(dl.iter())
            .map(|((f, xi), d)| (f - xi) * d)
            .sum::<f64>();
    }
    sum
}

/// Riemann–Stieltjes sums `Σ ⟨φ(t_k) − X_{t_k}, ΔL_k⟩` for random continuous
/// `D`-valued probes `φ`, plus the probes `φ = 0` and `φ = X`.
pub fn verify_variational_inequality(
    path: &PathRecord,
    probe_paths: usize,
    rng_seed: u64,
) -> VariationalReport {
    let lt = &path.local_time;
    let dim = path.states[0].len();
    let tolerance = VARIATIONAL_TOL * lt.total_variation;

    let mut phi = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let state_pairing = -pairing_sum(path, |_, phi| phi.iter_mut().for_each(|f| *f = 0.0), &mut phi);
    let self_probe_sum = pairing_sum(path, |k, phi| phi.copy_from_slice(&path.states[k]), &mut phi);
    let mut min_sum = -state_pairing;
    for p in 0..probe_paths {
        let mut rng = stream(rng_seed, DOMAIN_PROBE, p as u64);
        let probe = Probe::random(&mut rng, dim, path.grid.t_end());
        let sum = pairing_sum(
            path,
            |k, phi| probe.eval(path.grid.time(k), phi, &mut scratch),
            &mut phi,
        );
        min_sum = min_sum.min(sum);
    }
    VariationalReport {
        probes: probe_paths,
        min_sum,
        state_pairing,
        self_probe_sum,
        total_variation: lt.total_variation,
        tolerance,
        pass: min_sum >= -tolerance && state_pairing <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dot;
    use proptest::prelude::*;

    #[test]
    fn interior_point_has_no_increment() {
        let x = StateVector::new(vec![0.2, -0.3, 0.1]).unwrap();
        let (b, dl) = reflect_step(&x);
        assert_eq!(b.inner(), &x);
        assert_eq!(norm_h(&dl), 0.0);
    }

    #[test]
    fn norm_two_lands_on_boundary() {
        let x = StateVector::new(vec![0.0, 2.0, 0.0]).unwrap();
        let (b, dl) = reflect_step(&x);
        assert!((norm_h(&b) - 1.0).abs() < 1e-15);
        assert!((norm_h(&dl) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn discrete_variational_inequality(
            x in proptest::collection::vec(-3.0f64..3.0, 5),
            phi in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            let x = StateVector::new(x).unwrap();
            let (phi, _) = project_ball(&StateVector::new(phi).unwrap());
            let (xn, dl) = reflect_step(&x);
            let pairing: f64 = phi.iter().zip(xn.iter()).zip(dl.iter()).map(|((f, a), d)| (f - a) * d).sum();
            prop_assert!(pairing >= -1e-12);
            prop_assert!(dot(&xn, &dl) <= 1e-12);
            if norm_h(&dl) > 0.0 {
                prop_assert!(norm_h(&x) > 1.0);
                let cos = dot(&dl, &x) / (norm_h(&dl) * norm_h(&x));
                prop_assert!((cos + 1.0).abs() < 1e-9);
            }
        }
    }
}
