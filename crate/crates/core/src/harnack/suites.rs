//! Monte Carlo verification suites. Each path `p` draws its noise from the
//! stream `(master_seed, NOISE, p)`; independent oracles use `ORACLE`.

use serde::Serialize;

use crate::coupling::{simulate_coupling_checkpoints, CoupledSummary, CouplingScheme};
use crate::error::{LabError, Result};
use crate::integrator::{simulate_checkpoints_shared, simulate_path, PathSummary};
use crate::mc::McPlan;
use crate::models::SpdeModel;
use crate::noise::{NoiseBlock, NoiseStream, SeedLineage};
use crate::reflection::verify_variational_inequality;
use crate::rng::{DOMAIN_NOISE, DOMAIN_ORACLE};
use crate::spectral::{dist_sq, norm_h, BallState};
use crate::stats::{fit_log_slope, mean_se, variance, Estimate};
use crate::test_function::TestFunction;

use super::{compute_phi, compute_psi, contraction_bound, t1_bound, t2_bound, HarnackConstants};

/// Number of standard errors allowed on one-sided Monte Carlo checks.
pub const SE_MULTIPLIER: f64 = 3.0;

/// Relative slack on the fitted contraction rate.
pub const RATE_SLACK: f64 = 0.15;

/// One checkpoint of a suite: Monte Carlo estimate against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRow {
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckpointRow {
    fn one_sided(t: f64, e: Estimate, bound: f64) -> Self {
        CheckpointRow {
            t,
            estimate: e.mean,
            std_error: e.std_error,
            bound,
            pass: e.mean.is_finite() && e.mean <= bound + SE_MULTIPLIER * e.std_error,
        }
    }
}

fn all_pass(rows: &[CheckpointRow]) -> bool {
    rows.iter().all(|r| r.pass)
}

fn noise_stream<M: SpdeModel + ?Sized>(m: &M, plan: &McPlan, domain: u64, p: u64) -> NoiseStream {
    NoiseStream::new(SeedLineage::new(plan.master_seed, domain, p), plan.grid.h(), m.noise_width())
}

fn check_start<M: SpdeModel + ?Sized>(m: &M, x: &[f64]) -> Result<()> {
    let dim = m.spectrum().dim();
    if x.len() != dim {
        return Err(LabError::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    BallState::new(crate::spectral::StateVector::new(x.to_vec())?)?;
    Ok(())
}

/// Coupled pairs `(X^x, Y^y)` summarized at the plan's checkpoints.
pub struct CoupledEnsemble {
    pub plan: McPlan,
    pub scheme: CouplingScheme,
    pub constants: HarnackConstants,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub paths: Vec<CoupledSummary>,
}

impl CoupledEnsemble {
    pub fn simulate<M: SpdeModel + ?Sized>(
        m: &M,
        scheme: CouplingScheme,
        x0: &[f64],
        y0: &[f64],
        plan: &McPlan,
    ) -> Result<Self> {
        check_start(m, x0)?;
        check_start(m, y0)?;
        let constants = HarnackConstants::for_model(m)?;
        let paths = plan.run(|p| {
            let mut noise = noise_stream(m, plan, DOMAIN_NOISE, p);
            simulate_coupling_checkpoints(m, scheme, x0, y0, &plan.grid, &plan.checkpoints, &mut noise)
        })?;
        Ok(CoupledEnsemble {
            plan: plan.clone(),
            scheme,
            constants,
            x0: x0.to_vec(),
            y0: y0.to_vec(),
            paths,
        })
    }

    fn column(&self, f: impl Fn(&CoupledSummary) -> f64) -> Estimate {
        mean_se(&self.paths.iter().map(|s| f(s)).collect::<Vec<_>>())
    }

    pub fn contraction(&self) -> Result<ContractionReport> {
        self.constants.require_positive()?;
        let d2 = dist_sq(&self.x0, &self.y0);
        let times = self.plan.checkpoint_times();
        let rows: Vec<CheckpointRow> = times
            .iter()
            .enumerate()
            .map(|(c, &t)| {
                let e = self.column(|s| s.dist_sq[c]);
                CheckpointRow::one_sided(t, e, contraction_bound(&self.constants, t, d2))
            })
            .collect();
        let means: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
        let fitted_rate = fit_log_slope(&times, &means);
        let rate_threshold = -self.constants.r_n * (1.0 - RATE_SLACK);
        let rate_pass = match fitted_rate {
            Some(rate) => rate <= rate_threshold,
            // a curve that is identically zero contracts trivially
            None => means.iter().all(|m| *m == 0.0),
        };
        Ok(ContractionReport {
            r_n: self.constants.r_n,
            noise_rank: self.constants.noise_rank,
            paths: self.plan.paths,
            pass: all_pass(&rows) && rate_pass,
            rows,
            fitted_rate,
            rate_threshold,
            rate_pass,
        })
    }

    pub fn moment_t2<M: SpdeModel + ?Sized>(&self, m: &M) -> MomentReport {
        let c = m.constants();
        let kb2 = c.k_bilinear * c.k_bilinear;
        let d2 = dist_sq(&self.x0, &self.y0);
        let rows: Vec<CheckpointRow> = self
            .plan
            .checkpoint_times()
            .iter()
            .enumerate()
            .map(|(ci, &t)| {
                let e = self.column(|s| (-2.0 * kb2 * s.x_v_integral[ci]).exp() * s.dist_sq[ci] * s.dist_sq[ci]);
                CheckpointRow::one_sided(t, e, t2_bound(c, self.constants.lambda_next, t, d2))
            })
            .collect();
        MomentReport {
            suite: "moment_t2".into(),
            lambda: None,
            paths: self.plan.paths,
            overflow: rows.iter().any(|r| !r.estimate.is_finite()),
            pass: all_pass(&rows),
            rows,
        }
    }

    /// Martingale check `|mean(R_t) − 1| ≤ 3·SE` at every checkpoint.
    pub fn martingale(&self) -> Vec<CheckpointRow> {
        self.plan
            .checkpoint_times()
            .iter()
            .enumerate()
            .map(|(ci, &t)| {
                let e = self.column(|s| s.weight[ci]);
                CheckpointRow {
                    t,
                    estimate: e.mean,
                    std_error: e.std_error,
                    bound: 1.0,
                    pass: (e.mean - 1.0).abs() <= SE_MULTIPLIER * e.std_error,
                }
            })
            .collect()
    }

    /// `E[R_t f(Y_t^y)]` at checkpoint `ci`.
    pub fn reweighted(&self, ci: usize, f: &TestFunction) -> Estimate {
        self.column(|s| s.weight[ci] * f.eval(&s.y_states[ci]))
    }

    pub fn sup_beta_norm(&self) -> f64 {
        self.paths.iter().map(|s| s.sup_beta_norm).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub r_n: f64,
    pub noise_rank: usize,
    pub paths: usize,
    pub rows: Vec<CheckpointRow>,
    /// Least-squares slope of `ln E‖X_t − Y_t‖²` against `t`.
    pub fitted_rate: Option<f64>,
    /// `−r(N)(1 − RATE_SLACK)`.
    pub rate_threshold: f64,
    pub rate_pass: bool,
    pub pass: bool,
}

pub fn verify_contraction<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x0: &[f64],
    y0: &[f64],
    plan: &McPlan,
) -> Result<ContractionReport> {
    HarnackConstants::for_model(m)?.require_positive()?;
    CoupledEnsemble::simulate(m, scheme, x0, y0, plan)?.contraction()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub suite: String,
    pub lambda: Option<f64>,
    pub paths: usize,
    pub rows: Vec<CheckpointRow>,
    /// Some path functional overflowed to `+∞`.
    pub overflow: bool,
    pub pass: bool,
}

pub fn verify_moment_t1<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &[f64],
    lambda: f64,
    plan: &McPlan,
) -> Result<MomentReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::invalid(format!("T1 exponent must be positive, got {lambda}")));
    }
    check_start(m, x0)?;
    let paths = plan.run(|p| {
        let mut noise = noise_stream(m, plan, DOMAIN_NOISE, p);
        let mut s = simulate_checkpoints_shared(m, &[x0], &plan.grid, &plan.checkpoints, &mut noise)?;
        Ok(s.pop().expect("one start"))
    })?;
    let c = m.constants();
    let rows: Vec<CheckpointRow> = plan
        .checkpoint_times()
        .iter()
        .enumerate()
        .map(|(ci, &t)| {
            let v: Vec<f64> = paths.iter().map(|s| (lambda * s.v_integral[ci]).exp()).collect();
            CheckpointRow::one_sided(t, mean_se(&v), t1_bound(c, lambda, t))
        })
        .collect();
    Ok(MomentReport {
        suite: "moment_t1".into(),
        lambda: Some(lambda),
        paths: plan.paths,
        overflow: rows.iter().any(|r| !r.estimate.is_finite()),
        pass: all_pass(&rows),
        rows,
    })
}

pub fn verify_moment_t2<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x0: &[f64],
    y0: &[f64],
    plan: &McPlan,
) -> Result<MomentReport> {
    Ok(CoupledEnsemble::simulate(m, scheme, x0, y0, plan)?.moment_t2(m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReweightRow {
    pub t: f64,
    /// `E[R_t f(Y_t^y)]`.
    pub reweighted: Estimate,
    /// Direct `E[f(X_t^y)]` from independent noise.
    pub direct: Estimate,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovReport {
    pub paths: usize,
    pub martingale: Vec<CheckpointRow>,
    pub f: String,
    pub reweighting: Vec<ReweightRow>,
    pub sup_beta_norm: f64,
    pub pass: bool,
}

impl GirsanovReport {
    /// Martingale rows followed by the reweighting rows (estimate = difference, bound = 0).
    pub fn rows(&self) -> Vec<CheckpointRow> {
        let mut rows = self.martingale.clone();
        rows.extend(self.reweighting.iter().map(|r| CheckpointRow {
            t: r.t,
            estimate: r.reweighted.mean - r.direct.mean,
            std_error: r.combined_se,
            bound: 0.0,
            pass: r.pass,
        }));
        rows
    }
}

/// Direct simulation of `X^{y}` with the oracle streams.
fn direct_oracle<M: SpdeModel + ?Sized>(m: &M, y0: &[f64], plan: &McPlan) -> Result<Vec<PathSummary>> {
    plan.run(|p| {
        let mut noise = noise_stream(m, plan, DOMAIN_ORACLE, p);
        let mut s = simulate_checkpoints_shared(m, &[y0], &plan.grid, &plan.checkpoints, &mut noise)?;
        Ok(s.pop().expect("one start"))
    })
}

pub fn girsanov_report<M: SpdeModel + ?Sized>(
    m: &M,
    ensemble: &CoupledEnsemble,
    f: &TestFunction,
) -> Result<GirsanovReport> {
    let oracle = direct_oracle(m, &ensemble.y0, &ensemble.plan)?;
    let martingale = ensemble.martingale();
    let reweighting: Vec<ReweightRow> = ensemble
        .plan
        .checkpoint_times()
        .iter()
        .enumerate()
        .map(|(ci, &t)| {
            let reweighted = ensemble.reweighted(ci, f);
            let direct = mean_se(&oracle.iter().map(|s| f.eval(&s.states[ci])).collect::<Vec<_>>());
            let combined_se = reweighted.std_error.hypot(direct.std_error);
            ReweightRow {
                t,
                reweighted,
                direct,
                combined_se,
                pass: (reweighted.mean - direct.mean).abs() <= SE_MULTIPLIER * combined_se,
            }
        })
        .collect();
    Ok(GirsanovReport {
        paths: ensemble.plan.paths,
        f: f.describe(),
        pass: all_pass(&martingale) && reweighting.iter().all(|r| r.pass),
        martingale,
        reweighting,
        sup_beta_norm: ensemble.sup_beta_norm(),
    })
}

pub fn verify_girsanov<M: SpdeModel + ?Sized>(
    m: &M,
    scheme: CouplingScheme,
    x0: &[f64],
    y0: &[f64],
    f: &TestFunction,
    plan: &McPlan,
) -> Result<GirsanovReport> {
    let ensemble = CoupledEnsemble::simulate(m, scheme, x0, y0, plan)?;
    girsanov_report(m, &ensemble, f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub t: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub f: String,
    /// `P_t log f(x)`.
    pub lhs: Estimate,
    /// `log P_t f(y)`, standard error by the delta method.
    pub rhs_log_term: Estimate,
    pub phi_value: f64,
    pub psi_value: f64,
    pub grad_log_sup: f64,
    /// `log P_t f(y) + Φ + Ψ_t‖∇ log f‖_∞ − P_t log f(x)`.
    pub margin: f64,
    /// Standard error of the margin from the paired (common noise) samples.
    pub combined_se: f64,
    pub pass: bool,
}

/// Log-Harnack check for several test functions on one common-noise ensemble
/// of `(X^x, X^y)`. Reports are ordered by function, then time.
pub fn verify_harnack_many<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &[f64],
    y0: &[f64],
    fs: &[TestFunction],
    plan: &McPlan,
) -> Result<Vec<HarnackReport>> {
    let hc = HarnackConstants::for_model(m)?;
    hc.require_positive()?;
    check_start(m, x0)?;
    check_start(m, y0)?;
    let dim = m.spectrum().dim();
    for f in fs {
        if f.dim() != dim {
            return Err(LabError::DimensionMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
    }
    let paths = plan.run(|p| {
        let mut noise = noise_stream(m, plan, DOMAIN_NOISE, p);
        simulate_checkpoints_shared(m, &[x0, y0], &plan.grid, &plan.checkpoints, &mut noise)
    })?;
    let phi_value = compute_phi(&hc, x0, y0)?;
    let mut reports = Vec::with_capacity(fs.len() * plan.checkpoints.len());
    for f in fs {
        for (ci, &t) in plan.checkpoint_times().iter().enumerate() {
            let log_fx: Vec<f64> = paths.iter().map(|s| f.log_eval(&s[0].states[ci])).collect();
            let fy: Vec<f64> = paths.iter().map(|s| f.eval(&s[1].states[ci])).collect();
            let lhs = mean_se(&log_fx);
            let py = mean_se(&fy);
            let rhs_log_term = Estimate {
                mean: py.mean.ln(),
                std_error: py.std_error / py.mean,
                samples: py.samples,
            };
            let paired: Vec<f64> = fy.iter().zip(&log_fx).map(|(a, b)| a / py.mean - b).collect();
            let combined_se = mean_se(&paired).std_error;
            let psi_value = compute_psi(&hc, t, x0, y0)?;
            let grad_log_sup = f.grad_log_sup();
            let margin = rhs_log_term.mean + phi_value + psi_value * grad_log_sup - lhs.mean;
            reports.push(HarnackReport {
                t,
                x0: x0.to_vec(),
                y0: y0.to_vec(),
                f: f.describe(),
                lhs,
                rhs_log_term,
                phi_value,
                psi_value,
                grad_log_sup,
                margin,
                combined_se,
                pass: margin.is_finite() && margin >= -SE_MULTIPLIER * combined_se,
            });
        }
    }
    Ok(reports)
}

pub fn verify_harnack<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &[f64],
    y0: &[f64],
    f: &TestFunction,
    plan: &McPlan,
) -> Result<Vec<HarnackReport>> {
    verify_harnack_many(m, x0, y0, std::slice::from_ref(f), plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub t: f64,
    pub f: String,
    pub fd_eps: f64,
    /// `|D_ε|`, the central difference of `P_t f` along the unit direction.
    pub lhs: f64,
    pub lhs_se: f64,
    /// `|D_ε − D_{2ε}|`, the finite-difference error estimate.
    pub fd_err: f64,
    /// `√(2Λ)·√(P_t f² − (P_t f)²)`.
    pub variance_term: f64,
    /// `‖∇f‖_∞ Γ_t`.
    pub gamma_term: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Directional finite-difference check of `|∇P_t f| ≤ √(2Λ)√Var + ‖∇f‖_∞Γ_t`
/// at `x0`, with common noise for the shifted starts. One report per checkpoint.
pub fn verify_gradient_estimate<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &[f64],
    f: &TestFunction,
    direction: &[f64],
    fd_eps: f64,
    plan: &McPlan,
) -> Result<Vec<GradientReport>> {
    let hc = HarnackConstants::for_model(m)?;
    hc.require_positive()?;
    check_start(m, x0)?;
    if direction.len() != x0.len() {
        return Err(LabError::DimensionMismatch {
            expected: x0.len(),
            found: direction.len(),
        });
    }
    let dn = norm_h(direction);
    if !(dn > 0.0) || !(fd_eps > 0.0) {
        return Err(LabError::invalid("gradient check needs a nonzero direction and fd_eps > 0"));
    }
    let shifted = |s: f64| -> Vec<f64> { x0.iter().zip(direction).map(|(x, v)| x + s * fd_eps * v / dn).collect() };
    let starts: Vec<Vec<f64>> = vec![x0.to_vec(), shifted(1.0), shifted(-1.0), shifted(2.0), shifted(-2.0)];
    for s in &starts {
        let n = norm_h(s);
        if n > 1.0 + crate::spectral::BALL_EPS {
            return Err(LabError::OutsideBall { norm: n });
        }
    }
    let refs: Vec<&[f64]> = starts.iter().map(|s| s.as_slice()).collect();
    let paths = plan.run(|p| {
        let mut noise = noise_stream(m, plan, DOMAIN_NOISE, p);
        simulate_checkpoints_shared(m, &refs, &plan.grid, &plan.checkpoints, &mut noise)
    })?;
    let lambda_cap = hc.lambda_cap.unwrap_or(f64::INFINITY);
    let mut reports = Vec::with_capacity(plan.checkpoints.len());
    for (ci, &t) in plan.checkpoint_times().iter().enumerate() {
        let at = |j: usize| -> Vec<f64> { paths.iter().map(|s| f.eval(&s[j].states[ci])).collect() };
        let (f0, fp, fm, fp2, fm2) = (at(0), at(1), at(2), at(3), at(4));
        let d1: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * fd_eps)).collect();
        let d2: Vec<f64> = fp2.iter().zip(&fm2).map(|(a, b)| (a - b) / (4.0 * fd_eps)).collect();
        let e1 = mean_se(&d1);
        let e2 = mean_se(&d2);
        let fd_err = (e1.mean - e2.mean).abs();
        let variance_term = (2.0 * lambda_cap).sqrt() * variance(&f0).max(0.0).sqrt();
        let gamma_term = f.grad_sup() * hc.gamma_t(t);
        let rhs = variance_term + gamma_term;
        let lhs = e1.mean.abs();
        reports.push(GradientReport {
            t,
            f: f.describe(),
            fd_eps,
            lhs,
            lhs_se: e1.std_error,
            fd_err,
            variance_term,
            gamma_term,
            rhs,
            pass: lhs <= rhs + SE_MULTIPLIER * e1.std_error + fd_err,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionSuiteReport {
    pub paths: usize,
    pub probes: usize,
    /// Paths whose local time moved at least once.
    pub active_paths: usize,
    /// Smallest `min_sum / Var_H(L)` over active paths.
    pub worst_relative_sum: f64,
    /// Largest `Σ⟨X, ΔL⟩ / Var_H(L)` over active paths.
    pub worst_relative_state_pairing: f64,
    pub total_variation_mean: f64,
    pub pass: bool,
}

/// Discrete variational inequality of the reflection over many full paths.
pub fn verify_reflection<M: SpdeModel + ?Sized>(
    m: &M,
    x0: &[f64],
    probes: usize,
    plan: &McPlan,
) -> Result<ReflectionSuiteReport> {
    check_start(m, x0)?;
    let start = BallState::new(crate::spectral::StateVector::new(x0.to_vec())?)?;
    let dim = m.spectrum().dim();
    let reports = plan.run(|p| {
        let noise = NoiseBlock::generate(
            SeedLineage::new(plan.master_seed, DOMAIN_NOISE, p),
            &plan.grid,
            dim,
            m.noise_width(),
        );
        let path = simulate_path(m, &start, &plan.grid, &noise)?;
        Ok(verify_variational_inequality(&path, probes, plan.master_seed ^ p.rotate_left(32)))
    })?;
    let active: Vec<_> = reports.iter().filter(|r| r.total_variation > 0.0).collect();
    let worst_relative_sum = active
        .iter()
        .map(|r| r.min_sum / r.total_variation)
        .fold(f64::INFINITY, f64::min);
    let worst_relative_state_pairing = active
        .iter()
        .map(|r| r.state_pairing / r.total_variation)
        .fold(f64::NEG_INFINITY, f64::max);
    let tv: Vec<f64> = reports.iter().map(|r| r.total_variation).collect();
    Ok(ReflectionSuiteReport {
        paths: plan.paths,
        probes,
        active_paths: active.len(),
        worst_relative_sum,
        worst_relative_state_pairing,
        total_variation_mean: mean_se(&tv).mean,
        pass: reports.iter().all(|r| r.pass),
    })
}
