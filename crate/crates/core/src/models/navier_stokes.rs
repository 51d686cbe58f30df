//! Galerkin truncation of the stochastic Navier–Stokes nonlinearity on the
//! torus `T^d = [0, 2π)^d`, with `A = ν(1 − Δ)^θ`.
//!
//! The basis consists of real divergence-free Fourier fields
//! `√2 cos(k·x) p̂` and `√2 sin(k·x) p̂` with `0 < |k| ≤ cutoff`, `k` taken
//! from a half-space, and `p̂ ⟂ k`. Inner products use the normalized
//! measure `dx / (2π)^d`, so the fields are orthonormal. The advection term
//! `(u·∇)v` is stored as a sparse triad tensor
//! `T[a][b][j] = ⟨(e_a·∇) e_b, e_j⟩`, which already contains the Leray
//! projection onto the retained modes.

use std::collections::HashMap;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierMode {
    pub wavevector: Vec<i64>,
    /// Integer vector orthogonal to `wavevector`; the unit polarization is
    /// `direction / |direction|`.
    pub direction: Vec<i64>,
    pub polarization: usize,
    pub trig: Trig,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triad {
    pub a: u32,
    pub b: u32,
    pub j: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsBasis {
    pub d: usize,
    pub cutoff: usize,
    pub nu: f64,
    pub theta: f64,
    modes: Vec<FourierMode>,
    triads: Vec<Triad>,
}

/// `1 ∨ (d + 2)/4`, the smallest admissible `θ`.
pub fn theta_threshold(d: usize) -> f64 {
    f64::max(1.0, (d as f64 + 2.0) / 4.0)
}

fn idot(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cross(a: &[i64], b: &[i64]) -> Vec<i64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Half-space representative: first nonzero component positive.
fn canonical(k: &[i64]) -> (Vec<i64>, bool) {
    match k.iter().find(|c| **c != 0) {
        Some(c) if *c < 0 => (k.iter().map(|c| -c).collect(), true),
        _ => (k.to_vec(), false),
    }
}

fn polarizations(k: &[i64]) -> Vec<Vec<i64>> {
    match k.len() {
        2 => vec![vec![-k[1], k[0]]],
        3 => {
            // Cross with the axis along which k is smallest; never parallel.
            let m = (0..3).min_by_key(|&i| (k[i].abs(), i)).unwrap();
            let mut axis = vec![0; 3];
            axis[m] = 1;
            let q1 = cross(k, &axis);
            let q2 = cross(k, &q1);
            vec![q1, q2]
        }
        _ => Vec::new(),
    }
}

// cos θ = (e^{iθ} + e^{-iθ})/2, sin θ = (e^{iθ} − e^{-iθ})/2i, and the
// derivatives −sin, cos. Each entry is (coefficient of e^{+iθ}, of e^{−iθ})
// as (re, im) pairs.
type Exp2 = [(f64, f64); 2];
const COS: Exp2 = [(0.5, 0.0), (0.5, 0.0)];
const SIN: Exp2 = [(0.0, -0.5), (0.0, 0.5)];
const NEG_SIN: Exp2 = [(0.0, 0.5), (0.0, -0.5)];

fn exp2(t: Trig) -> Exp2 {
    match t {
        Trig::Cos => COS,
        Trig::Sin => SIN,
    }
}

fn exp2_derivative(t: Trig) -> Exp2 {
    match t {
        Trig::Cos => NEG_SIN,
        Trig::Sin => COS,
    }
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// Spatial mean of `f1(k1·x) f2(k2·x) f3(k3·x)` for unnormalized trig factors.
/// Exact: every term is a multiple of 1/8.
fn triple_mean(f: [Exp2; 3], k: [&[i64]; 3]) -> f64 {
    let d = k[0].len();
    let mut acc = (0.0, 0.0);
    for s in 0..8u32 {
        let signs = [
            if s & 1 == 0 { 1 } else { -1 },
            if s & 2 == 0 { 1 } else { -1 },
            if s & 4 == 0 { 1 } else { -1 },
        ];
        let resonant = (0..d).all(|c| {
            signs[0] * k[0][c] + signs[1] * k[1][c] + signs[2] * k[2][c] == 0
        });
        if resonant {
            let pick = |i: usize| f[i][if signs[i] == 1 { 0 } else { 1 }];
            let term = cmul(cmul(pick(0), pick(1)), pick(2));
            acc.0 += term.0;
            acc.1 += term.1;
        }
    }
    debug_assert!(acc.1.abs() < 1e-15);
    acc.0
}

impl NsBasis {
    pub fn build(d: usize, cutoff: usize, nu: f64, theta: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(LabError::invalid(format!("dimension d must be 1, 2 or 3, got {d}")));
        }
        if !(nu > 0.0 && nu.is_finite()) || !(theta > 0.0 && theta.is_finite()) {
            return Err(LabError::invalid("nu and theta must be positive"));
        }
        let threshold = theta_threshold(d);
        if theta < threshold {
            return Err(LabError::hypothesis(format!(
                "theta below 1∨(d+2)/4 (theta = {theta}, d = {d}, threshold = {threshold})"
            )));
        }
        if cutoff == 0 {
            return Err(LabError::invalid("mode cutoff must be at least 1"));
        }
        let c = cutoff as i64;
        let side = 2 * c + 1;
        let mut wavevectors = Vec::new();
        for code in 0..side.pow(d as u32) {
            let mut rest = code;
            let k: Vec<i64> = (0..d)
                .map(|_| {
                    let digit = rest % side;
                    rest /= side;
                    digit - c
                })
                .collect();
            let k2 = idot(&k, &k);
            if k2 > 0 && k2 <= c * c && !canonical(&k).1 {
                wavevectors.push(k);
            }
        }

        let mut modes = Vec::new();
        for k in &wavevectors {
            let k2 = idot(k, k) as f64;
            let eigenvalue = nu * (1.0 + k2).powf(theta);
            for (p, q) in polarizations(k).into_iter().enumerate() {
                for trig in [Trig::Cos, Trig::Sin] {
                    modes.push(FourierMode {
                        wavevector: k.clone(),
                        direction: q.clone(),
                        polarization: p,
                        trig,
                        eigenvalue,
                    });
                }
            }
        }
        if modes.is_empty() {
            return Err(LabError::invalid(format!(
                "no divergence-free zero-mean modes for d = {d}"
            )));
        }
        modes.sort_by(|x, y| {
            idot(&x.wavevector, &x.wavevector)
                .cmp(&idot(&y.wavevector, &y.wavevector))
                .then_with(|| x.wavevector.cmp(&y.wavevector))
                .then_with(|| x.polarization.cmp(&y.polarization))
                .then_with(|| x.trig.cmp(&y.trig))
        });

        let triads = build_triads(&modes);
        Ok(NsBasis {
            d,
            cutoff,
            nu,
            theta,
            modes,
            triads,
        })
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn triads(&self) -> &[Triad] {
        &self.triads
    }

    /// `out = B(u, v)` restricted to the retained modes.
    pub fn advect(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.triads {
            out[t.j as usize] += t.value * u[t.a as usize] * v[t.b as usize];
        }
    }

    /// `out_b = Σ_{a,j} u_a z_j T[a][b][j]`, the adjoint of `v ↦ B(u, v)`.
    pub(crate) fn advect_adjoint_v(&self, u: &[f64], z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.triads {
            out[t.b as usize] += t.value * u[t.a as usize] * z[t.j as usize];
        }
    }

    /// `out_a = Σ_{b,j} v_b z_j T[a][b][j]`, the adjoint of `u ↦ B(u, v)`.
    pub(crate) fn advect_adjoint_u(&self, v: &[f64], z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.triads {
            out[t.a as usize] += t.value * v[t.b as usize] * z[t.j as usize];
        }
    }
}

fn build_triads(modes: &[FourierMode]) -> Vec<Triad> {
    let mut by_wavevector: HashMap<&[i64], Vec<usize>> = HashMap::new();
    for (i, m) in modes.iter().enumerate() {
        by_wavevector.entry(&m.wavevector).or_default().push(i);
    }
    let dir_norm: Vec<f64> = modes
        .iter()
        .map(|m| (idot(&m.direction, &m.direction) as f64).sqrt())
        .collect();
    let amplitude = 2.0 * std::f64::consts::SQRT_2; // (√2)^3

    let mut triads = Vec::new();
    let mut candidates = Vec::new();
    for (a, ma) in modes.iter().enumerate() {
        for (b, mb) in modes.iter().enumerate() {
            let advect = idot(&ma.direction, &mb.wavevector);
            if advect == 0 {
                continue;
            }
            candidates.clear();
            for sb in [1i64, -1] {
                let q: Vec<i64> = ma
                    .wavevector
                    .iter()
                    .zip(&mb.wavevector)
                    .map(|(x, y)| x + sb * y)
                    .collect();
                if q.iter().all(|c| *c == 0) {
                    continue;
                }
                if let Some(js) = by_wavevector.get(canonical(&q).0.as_slice()) {
                    candidates.extend_from_slice(js);
                }
            }
            candidates.sort_unstable();
            candidates.dedup();
            for &j in &candidates {
                let mj = &modes[j];
                let pol = idot(&mb.direction, &mj.direction);
                if pol == 0 {
                    continue;
                }
                let mean = triple_mean(
                    [exp2(ma.trig), exp2_derivative(mb.trig), exp2(mj.trig)],
                    [&ma.wavevector, &mb.wavevector, &mj.wavevector],
                );
                if mean == 0.0 {
                    continue;
                }
                // The integer part (advect · mean) is exact, and the scale is
                // symmetric in (b, j), so T[a][b][j] = −T[a][j][b] bit for bit.
                let (lo, hi) = if b < j { (b, j) } else { (j, b) };
                let scale = amplitude * pol as f64 / (dir_norm[a] * (dir_norm[lo] * dir_norm[hi]));
                triads.push(Triad {
                    a: a as u32,
                    b: b as u32,
                    j: j as u32,
                    value: (advect as f64 * mean) * scale,
                });
            }
        }
    }
    triads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_values() {
        assert_eq!(theta_threshold(1), 1.0);
        assert_eq!(theta_threshold(2), 1.0);
        assert_eq!(theta_threshold(3), 1.25);
    }

    #[test]
    fn d2_cutoff4_has_48_modes() {
        let basis = NsBasis::build(2, 4, 1.0, 1.0).unwrap();
        assert_eq!(basis.dim(), 48);
        let ev = basis.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ev[0], 2.0);
    }

    #[test]
    fn eigenvalue_of_unit_wavevector() {
        let basis = NsBasis::build(2, 2, 1.0, 2.0).unwrap();
        let m = basis
            .modes()
            .iter()
            .find(|m| m.wavevector == vec![1, 0])
            .unwrap();
        assert_eq!(m.eigenvalue, 4.0);
    }

    #[test]
    fn modes_are_divergence_free() {
        for d in [2, 3] {
            let basis = NsBasis::build(d, 3, 1.0, 1.5).unwrap();
            for m in basis.modes() {
                assert_eq!(idot(&m.wavevector, &m.direction), 0);
                assert!(m.direction.iter().any(|c| *c != 0));
            }
        }
    }

    #[test]
    fn d3_polarizations_are_orthogonal() {
        let basis = NsBasis::build(3, 2, 1.0, 1.25).unwrap();
        for k in basis.modes().chunks(4) {
            // each wavevector contributes 2 polarizations × {cos, sin}
            assert_eq!(k[0].wavevector, k[3].wavevector);
            assert_eq!(idot(&k[0].direction, &k[2].direction), 0);
        }
    }

    #[test]
    fn d1_is_empty_and_d3_theta1_rejected() {
        assert!(matches!(
            NsBasis::build(1, 4, 1.0, 1.0),
            Err(LabError::InvalidArgument(_))
        ));
        let err = NsBasis::build(3, 2, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("theta below 1∨(d+2)/4"));
    }

    #[test]
    fn triads_antisymmetric_entrywise() {
        let basis = NsBasis::build(2, 3, 1.0, 1.0).unwrap();
        let map: HashMap<(u32, u32, u32), f64> = basis
            .triads()
            .iter()
            .map(|t| ((t.a, t.b, t.j), t.value))
            .collect();
        assert!(!map.is_empty());
        for (&(a, b, j), &v) in &map {
            let mirrored = map.get(&(a, j, b)).copied().unwrap_or(0.0);
            assert_eq!(v, -mirrored, "triad ({a},{b},{j})");
        }
    }

    /// Quadrature oracle: evaluate ⟨(e_a·∇)e_b, e_j⟩ on a uniform grid, which
    /// is exact for trigonometric polynomials of degree below the grid size.
    #[test]
    fn triads_match_physical_space_quadrature() {
        let basis = NsBasis::build(2, 2, 1.0, 1.0).unwrap();
        let n = 16usize;
        let two_pi = 2.0 * std::f64::consts::PI;
        let eval = |m: &FourierMode, x: [f64; 2]| -> ([f64; 2], [f64; 2]) {
            let phase = m.wavevector[0] as f64 * x[0] + m.wavevector[1] as f64 * x[1];
            let norm = (idot(&m.direction, &m.direction) as f64).sqrt();
            let p = [m.direction[0] as f64 / norm, m.direction[1] as f64 / norm];
            let s2 = std::f64::consts::SQRT_2;
            let (val, dval) = match m.trig {
                Trig::Cos => (s2 * phase.cos(), -s2 * phase.sin()),
                Trig::Sin => (s2 * phase.sin(), s2 * phase.cos()),
            };
            ([p[0] * val, p[1] * val], [p[0] * dval, p[1] * dval])
        };
        let m = basis.dim();
        let mut dense = vec![0.0; m * m * m];
        for t in basis.triads() {
            dense[(t.a as usize * m + t.b as usize) * m + t.j as usize] = t.value;
        }
        for a in 0..m {
            for b in 0..m {
                for j in 0..m {
                    let (ma, mb, mj) = (&basis.modes()[a], &basis.modes()[b], &basis.modes()[j]);
                    let mut acc = 0.0;
                    for ix in 0..n {
                        for iy in 0..n {
                            let x = [two_pi * ix as f64 / n as f64, two_pi * iy as f64 / n as f64];
                            let (ua, _) = eval(ma, x);
                            let (_, db) = eval(mb, x);
                            let (uj, _) = eval(mj, x);
                            let kb = &mb.wavevector;
                            let adv = ua[0] * kb[0] as f64 + ua[1] * kb[1] as f64;
                            acc += adv * (db[0] * uj[0] + db[1] * uj[1]);
                        }
                    }
                    acc /= (n * n) as f64;
                    let got = dense[(a * m + b) * m + j];
                    assert!((acc - got).abs() < 1e-12, "({a},{b},{j}): {acc} vs {got}");
                }
            }
        }
    }
}
