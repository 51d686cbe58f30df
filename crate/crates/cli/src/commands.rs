//! Command drivers. Each returns a serializable report; `run_command` writes
//! the artifacts and maps the outcome to an exit code.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use spde_lab::coupling::simulate_coupling;
use spde_lab::harnack::{
    compute_r, girsanov_report, min_n, verify_gradient_estimate, verify_harnack_many, verify_moment_t1,
    verify_reflection, CheckpointRow, ContractionReport, CoupledEnsemble, GirsanovReport, GradientReport,
    HarnackConstants, HarnackReport, MomentReport, ReflectionSuiteReport,
};
use spde_lab::integrator::simulate_path;
use spde_lab::mc::McPlan;
use spde_lab::models::{check_assumption_a, AssumptionReport, ModelConstants, ModelKind, ModelSpec, SigmaRule, SpdeModel};
use spde_lab::noise::{NoiseBlock, SeedLineage};
use spde_lab::rng::DOMAIN_NOISE;
use spde_lab::spectral::{norm_h, BallState, StateVector};
use spde_lab::test_function::TestFunction;
use spde_lab::LabError;

use crate::config::{resolve_auto_rank, NoiseRank, OutputFormat, Prepared, RunConfig, SuiteName};
use crate::error::CliError;
use crate::output::{csv_name, num, write_checkpoints, write_json, write_table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub kind: &'static str,
    pub dim: usize,
    pub noise_rank: usize,
    pub noise_width: usize,
    pub drift_scale: Option<f64>,
    pub d: Option<usize>,
    pub cutoff: Option<usize>,
    pub lambda_head: Vec<f64>,
    pub sigma_head: Vec<f64>,
}

const HEAD: usize = 10;

pub fn summarize(m: &ModelSpec) -> ModelSummary {
    let (kind, drift_scale, d, cutoff) = match m.kind() {
        ModelKind::Linear { drift_scale } => ("linear", Some(*drift_scale), None, None),
        ModelKind::NavierStokes(b) => ("navier_stokes", None, Some(b.d), Some(b.cutoff)),
    };
    let ev = m.spectrum().eigenvalues();
    ModelSummary {
        kind,
        dim: m.dim(),
        noise_rank: m.noise_rank(),
        noise_width: m.noise_width(),
        drift_scale,
        d,
        cutoff,
        lambda_head: ev[..HEAD.min(ev.len())].to_vec(),
        sigma_head: m.sigma_diag()[..HEAD.min(ev.len())].to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RRow {
    pub n: usize,
    pub lambda_next: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub model: ModelSummary,
    pub constants: ModelConstants,
    pub r_by_n: Vec<RRow>,
    pub min_n: Option<usize>,
    pub harnack: HarnackConstants,
    /// Time for `Ψ_t` to halve, `2 ln 2 / r(N)`.
    pub psi_halving_time: Option<f64>,
    pub assumptions: AssumptionReport,
    /// Violated hypotheses; nonempty means exit code 2.
    pub hypotheses: Vec<String>,
}

pub fn cmd_constants(cfg: &RunConfig) -> Result<ConstantsReport, CliError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let mut hypotheses = Vec::new();
    let (mut model, auto) = cfg.build_model_unresolved()?;
    if auto {
        match resolve_auto_rank(model.clone()) {
            Ok(resolved) => model = resolved,
            Err(CliError::Setup(LabError::HypothesisViolation(msg))) => {
                hypotheses.push(format!("{msg} (table shown for N = 1)"))
            }
            Err(e) => return Err(e),
        }
    }
    let m = &model;
    let c = m.constants().clone();
    let ev = m.spectrum().eigenvalues();
    let r_by_n = (1..m.dim())
        .map(|n| RRow {
            n,
            lambda_next: ev[n],
            r: compute_r(&c, ev[n]),
        })
        .collect();
    let harnack = HarnackConstants::for_model(m).map_err(CliError::Setup)?;
    let assumptions = check_assumption_a(m, cfg.suite.assumption_samples, cfg.mc.master_seed);
    if harnack.r_n <= 0.0 && !auto {
        hypotheses.push(format!("r(N) = {} is not positive at N = {}", harnack.r_n, harnack.noise_rank));
    }
    if !assumptions.pass {
        hypotheses.push("sampled assumption check failed against the stored constants".into());
    }
    Ok(ConstantsReport {
        model: summarize(m),
        r_by_n,
        min_n: min_n(m),
        psi_halving_time: (harnack.r_n > 0.0).then(|| 2.0 * 2f64.ln() / harnack.r_n),
        harnack,
        constants: c,
        assumptions,
        hypotheses,
    })
}

fn print_constants(r: &ConstantsReport) {
    println!("model {} M={} N={}", r.model.kind, r.model.dim, r.model.noise_rank);
    println!("lambda head: {:?}", r.model.lambda_head);
    let c = &r.constants;
    println!(
        "K_b={} K_B={} ({}) K_sigma={} K_bar={} |b(0)|={} |sigma(0)|_HS={} |sigma^-1|_HN={}",
        c.k_drift, c.k_bilinear, c.k_bilinear_source, c.k_sigma, c.k_trilinear, c.b0_vstar, c.sigma0_hs, c.sigma_inv_bound
    );
    println!("{:>5} {:>14} {:>14}", "N", "lambda_N+1", "r(N)");
    for row in r.r_by_n.iter().take(HEAD) {
        println!("{:>5} {:>14.6} {:>14.6}", row.n, row.lambda_next, row.r);
    }
    match r.min_n {
        Some(n) => println!("min_N = {n}"),
        None => println!("min_N = none within truncation"),
    }
    let h = &r.harnack;
    println!(
        "r(N)={} phi_coeff={:?} psi_prefactor={} psi_rate={}",
        h.r_n, h.phi_coeff, h.psi_prefactor, h.psi_rate
    );
    for v in &r.hypotheses {
        println!("hypothesis violated: {v}");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub model: ModelSummary,
    pub t_end: f64,
    pub steps: usize,
    pub master_seed: u64,
    pub sup_h_norm: f64,
    pub local_time_variation: f64,
    pub active_steps: usize,
    pub v_norm_integral: f64,
    pub final_state: Vec<f64>,
}

fn path_noise(p: &Prepared) -> NoiseBlock {
    NoiseBlock::generate(
        SeedLineage::new(p.plan.master_seed, DOMAIN_NOISE, 0),
        &p.plan.grid,
        p.model.dim(),
        p.model.noise_width(),
    )
}

fn ball(x: &[f64]) -> Result<BallState, CliError> {
    StateVector::new(x.to_vec())
        .and_then(BallState::new)
        .map_err(CliError::Setup)
}

pub fn cmd_simulate(cfg: &RunConfig, threads: usize, out: &Path) -> Result<SimulateReport, CliError> {
    let p = cfg.prepare(threads)?;
    let path = simulate_path(&p.model, &ball(&p.x0)?, &p.plan.grid, &path_noise(&p)).map_err(CliError::Run)?;
    let lam = p.model.spectrum().eigenvalues().to_vec();
    if wants(cfg, OutputFormat::Csv) {
        let mut lt = 0.0;
        let rows: Vec<Vec<String>> = path
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                if k > 0 {
                    lt += norm_h(&path.local_time.increments[k - 1]);
                }
                let v2: f64 = x.iter().zip(&lam).map(|(c, l)| l * c * c).sum();
                vec![num(path.grid.time(k)), num(norm_h(x)), num(v2.sqrt()), num(path.v_norm_integral[k]), num(lt)]
            })
            .collect();
        write_table(
            out,
            &csv_name("simulate", p.plan.grid.t_end()),
            "simulate",
            &["t", "norm_h", "norm_v", "v_norm_integral", "local_time_variation"],
            &rows,
        )?;
    }
    Ok(SimulateReport {
        model: summarize(&p.model),
        t_end: p.plan.grid.t_end(),
        steps: p.plan.grid.steps(),
        master_seed: p.plan.master_seed,
        sup_h_norm: path.sup_h_norm,
        local_time_variation: path.local_time.total_variation,
        active_steps: path.local_time.active_steps.len(),
        v_norm_integral: *path.v_norm_integral.last().unwrap_or(&0.0),
        final_state: path.states.last().map(|s| s.to_vec()).unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupleReport {
    pub model: ModelSummary,
    pub beta_factor: f64,
    pub t_end: f64,
    pub steps: usize,
    pub master_seed: u64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub final_girsanov_weight: f64,
    pub sup_beta_norm: f64,
    pub beta_ceiling: f64,
}

pub fn cmd_couple(cfg: &RunConfig, threads: usize, out: &Path) -> Result<CoupleReport, CliError> {
    let p = cfg.prepare(threads)?;
    let rec = simulate_coupling(&p.model, p.scheme, &ball(&p.x0)?, &ball(&p.y0)?, &p.plan.grid, &path_noise(&p))
        .map_err(CliError::Run)?;
    if wants(cfg, OutputFormat::Csv) {
        let rows: Vec<Vec<String>> = (0..=rec.grid.steps())
            .map(|k| {
                vec![
                    num(rec.grid.time(k)),
                    num(rec.dist_h[k]),
                    num(rec.beta_sq_integral[k]),
                    num(rec.beta_dw_integral[k]),
                    num(rec.girsanov_weight[k]),
                ]
            })
            .collect();
        write_table(
            out,
            &csv_name("couple", rec.grid.t_end()),
            "couple",
            &["t", "dist_h", "beta_sq_integral", "beta_dw_integral", "girsanov_weight"],
            &rows,
        )?;
    }
    Ok(CoupleReport {
        model: summarize(&p.model),
        beta_factor: p.scheme.beta_factor,
        t_end: rec.grid.t_end(),
        steps: rec.grid.steps(),
        master_seed: p.plan.master_seed,
        initial_distance: rec.dist_h[0],
        final_distance: *rec.dist_h.last().unwrap_or(&0.0),
        final_girsanov_weight: *rec.girsanov_weight.last().unwrap_or(&1.0),
        sup_beta_norm: rec.sup_beta_norm,
        beta_ceiling: rec.beta_ceiling,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SuiteResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionSuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_t1: Option<MomentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_t2: Option<MomentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub girsanov: Option<GirsanovReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harnack: Option<Vec<HarnackReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<GradientReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub model: ModelSummary,
    pub constants: ModelConstants,
    pub harnack_constants: HarnackConstants,
    pub plan: McPlan,
    pub beta_factor: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub test_functions: Vec<String>,
    pub suites: SuiteResults,
    pub suite_pass: BTreeMap<String, bool>,
    pub pass: bool,
}

fn default_test_function(dim: usize) -> Result<TestFunction, CliError> {
    let v = StateVector::unit(dim, 1, 1.0).map_err(CliError::Setup)?;
    TestFunction::exponential_linear(v, 0.5).map_err(CliError::Setup)
}

/// Run every enabled suite on a prepared configuration.
pub fn run_suites(cfg: &RunConfig, p: &Prepared) -> Result<VerifyReport, CliError> {
    let m = &p.model;
    let enabled = |s: SuiteName| cfg.suite.enabled.contains(&s);
    let hc = HarnackConstants::for_model(m).map_err(CliError::Setup)?;
    let needs_r = [SuiteName::Contraction, SuiteName::Harnack, SuiteName::Gradient];
    if needs_r.iter().any(|s| enabled(*s)) {
        hc.require_positive().map_err(CliError::Setup)?;
    }
    let fs = if p.test_functions.is_empty() {
        vec![default_test_function(m.dim())?]
    } else {
        p.test_functions.clone()
    };
    let mut res = SuiteResults::default();
    if enabled(SuiteName::Assumptions) {
        res.assumptions = Some(check_assumption_a(m, cfg.suite.assumption_samples, p.plan.master_seed));
    }
    if enabled(SuiteName::Reflection) {
        let plan = McPlan {
            paths: cfg.suite.reflection_paths,
            ..p.plan.clone()
        };
        res.reflection = Some(verify_reflection(m, &p.x0, cfg.suite.probes, &plan).map_err(CliError::Run)?);
    }
    let coupled = [SuiteName::Contraction, SuiteName::MomentT2, SuiteName::Girsanov];
    if coupled.iter().any(|s| enabled(*s)) {
        let ens = CoupledEnsemble::simulate(m, p.scheme, &p.x0, &p.y0, &p.plan).map_err(CliError::Run)?;
        if enabled(SuiteName::Contraction) {
            res.contraction = Some(ens.contraction().map_err(CliError::Setup)?);
        }
        if enabled(SuiteName::MomentT2) {
            res.moment_t2 = Some(ens.moment_t2(m));
        }
        if enabled(SuiteName::Girsanov) {
            res.girsanov = Some(girsanov_report(m, &ens, &fs[0]).map_err(CliError::Run)?);
        }
    }
    if enabled(SuiteName::MomentT1) {
        res.moment_t1 = Some(verify_moment_t1(m, &p.x0, cfg.suite.lambda_t1, &p.plan).map_err(CliError::Run)?);
    }
    if enabled(SuiteName::Harnack) {
        res.harnack = Some(verify_harnack_many(m, &p.x0, &p.y0, &fs, &p.plan).map_err(CliError::Run)?);
    }
    if enabled(SuiteName::Gradient) {
        res.gradient = Some(
            verify_gradient_estimate(m, &p.x0, &fs[0], &p.gradient_direction, cfg.suite.gradient.fd_eps, &p.plan)
                .map_err(|e| match e {
                    LabError::OutsideBall { .. } | LabError::InvalidArgument(_) => CliError::Setup(e),
                    e => CliError::Run(e),
                })?,
        );
    }
    let mut suite_pass = BTreeMap::new();
    let mut note = |s: SuiteName, pass: Option<bool>| {
        if let Some(pass) = pass {
            suite_pass.insert(s.as_str().to_string(), pass);
        }
    };
    note(SuiteName::Assumptions, res.assumptions.as_ref().map(|r| r.pass));
    note(SuiteName::Reflection, res.reflection.as_ref().map(|r| r.pass));
    note(SuiteName::Contraction, res.contraction.as_ref().map(|r| r.pass));
    note(SuiteName::MomentT1, res.moment_t1.as_ref().map(|r| r.pass));
    note(SuiteName::MomentT2, res.moment_t2.as_ref().map(|r| r.pass));
    note(SuiteName::Girsanov, res.girsanov.as_ref().map(|r| r.pass));
    note(SuiteName::Harnack, res.harnack.as_ref().map(|r| r.iter().all(|h| h.pass)));
    note(SuiteName::Gradient, res.gradient.as_ref().map(|r| r.iter().all(|g| g.pass)));
    let pass = suite_pass.values().all(|p| *p);
    Ok(VerifyReport {
        model: summarize(m),
        constants: m.constants().clone(),
        harnack_constants: hc,
        plan: p.plan.clone(),
        beta_factor: p.scheme.beta_factor,
        x0: p.x0.clone(),
        y0: p.y0.clone(),
        test_functions: fs.iter().map(|f| f.describe()).collect(),
        suites: res,
        suite_pass,
        pass,
    })
}

fn write_suite_csvs(r: &VerifyReport, out: &Path) -> Result<(), CliError> {
    let t_end = r.plan.grid.t_end();
    let s = &r.suites;
    if let Some(c) = &s.contraction {
        write_checkpoints(out, &csv_name("contraction", t_end), "contraction", &c.rows)?;
    }
    if let Some(m) = &s.moment_t1 {
        write_checkpoints(out, &csv_name("moment_t1", t_end), "moment_t1", &m.rows)?;
    }
    if let Some(m) = &s.moment_t2 {
        write_checkpoints(out, &csv_name("moment_t2", t_end), "moment_t2", &m.rows)?;
    }
    if let Some(g) = &s.girsanov {
        write_checkpoints(out, &csv_name("girsanov", t_end), "girsanov", &g.rows())?;
    }
    if let Some(hs) = &s.harnack {
        for (j, f) in r.test_functions.iter().enumerate() {
            let rows: Vec<CheckpointRow> = hs
                .iter()
                .filter(|h| &h.f == f)
                .map(|h| CheckpointRow {
                    t: h.t,
                    estimate: h.lhs.mean,
                    std_error: h.combined_se,
                    bound: h.lhs.mean + h.margin,
                    pass: h.pass,
                })
                .collect();
            write_checkpoints(out, &csv_name(&format!("harnack_f{j}"), t_end), &format!("harnack {f}"), &rows)?;
        }
    }
    if let Some(gs) = &s.gradient {
        let rows: Vec<CheckpointRow> = gs
            .iter()
            .map(|g| CheckpointRow {
                t: g.t,
                estimate: g.lhs,
                std_error: g.lhs_se,
                bound: g.rhs + g.fd_err,
                pass: g.pass,
            })
            .collect();
        write_checkpoints(out, &csv_name("gradient", t_end), "gradient", &rows)?;
    }
    Ok(())
}

pub fn cmd_verify(cfg: &RunConfig, threads: usize, out: &Path) -> Result<VerifyReport, CliError> {
    let p = cfg.prepare(threads)?;
    let report = run_suites(cfg, &p)?;
    if wants(cfg, OutputFormat::Csv) {
        write_suite_csvs(&report, out)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub noise_rank: Option<usize>,
    pub nu: Option<f64>,
    pub theta: Option<f64>,
    pub sigma_rank: Option<usize>,
    pub r_n: Option<f64>,
    pub min_n: Option<usize>,
    pub fitted_rate: Option<f64>,
    pub suite_pass: BTreeMap<String, bool>,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    /// Among cells that differ only in `N`, fitted contraction rates strictly
    /// decrease as `N` grows. Absent when no such group exists.
    pub monotone_rate_improvement: Option<bool>,
    pub pass: bool,
}

fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().map(|x| Some(*x)).collect()
    }
}

fn cell_config(base: &RunConfig, n: Option<usize>, nu: Option<f64>, theta: Option<f64>, rank: Option<usize>) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    if let Some(n) = n {
        cfg.model.noise_rank = NoiseRank::Fixed(n);
    }
    if nu.is_some() {
        cfg.model.nu = nu;
    }
    if theta.is_some() {
        cfg.model.theta = theta;
    }
    if let Some(r) = rank {
        match &mut cfg.model.sigma {
            SigmaRule::Power { rank, .. } => *rank = r,
            SigmaRule::Explicit(_) => {
                return Err(CliError::Config(vec!["sweep.sigma_rank needs a power-rule sigma".into()]));
            }
        }
    }
    Ok(cfg)
}

pub fn cmd_sweep(cfg: &RunConfig, threads: usize) -> Result<SweepReport, CliError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let sw = &cfg.sweep;
    let mut cells = Vec::new();
    for rank in axis(&sw.sigma_rank) {
        for theta in axis(&sw.theta) {
            for nu in axis(&sw.nu) {
                for n in axis(&sw.noise_rank) {
                    let cell_cfg = cell_config(cfg, n, nu, theta, rank)?;
                    let mut cell = SweepCell {
                        noise_rank: n,
                        nu,
                        theta,
                        sigma_rank: rank,
                        r_n: None,
                        min_n: None,
                        fitted_rate: None,
                        suite_pass: BTreeMap::new(),
                        error: None,
                        pass: false,
                    };
                    match cell_cfg.prepare(threads).and_then(|p| {
                        cell.min_n = min_n(&p.model);
                        cell.noise_rank = Some(p.model.noise_rank());
                        run_suites(&cell_cfg, &p)
                    }) {
                        Ok(r) => {
                            cell.r_n = Some(r.harnack_constants.r_n);
                            cell.fitted_rate = r.suites.contraction.as_ref().and_then(|c| c.fitted_rate);
                            cell.pass = r.pass;
                            cell.suite_pass = r.suite_pass;
                        }
                        Err(CliError::Config(e)) => return Err(CliError::Config(e)),
                        Err(e) => cell.error = Some(e.to_string()),
                    }
                    cells.push(cell);
                }
            }
        }
    }
    let monotone_rate_improvement = rate_monotonicity(&cells);
    let pass = cells.iter().all(|c| c.pass) && monotone_rate_improvement != Some(false);
    Ok(SweepReport {
        cells,
        monotone_rate_improvement,
        pass,
    })
}

fn rate_monotonicity(cells: &[SweepCell]) -> Option<bool> {
    let mut groups: Vec<Vec<&SweepCell>> = Vec::new();
    for c in cells {
        match groups
            .iter_mut()
            .find(|g| g[0].nu == c.nu && g[0].theta == c.theta && g[0].sigma_rank == c.sigma_rank)
        {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    let mut verdict = None;
    for mut g in groups.into_iter().filter(|g| g.len() > 1) {
        g.sort_by_key(|c| c.noise_rank);
        let rates: Option<Vec<f64>> = g.iter().map(|c| c.fitted_rate).collect();
        let ok = rates.is_some_and(|r| r.windows(2).all(|w| w[1] < w[0]));
        verdict = Some(verdict.unwrap_or(true) && ok);
    }
    verdict
}

fn write_sweep_csv(r: &SweepReport, out: &Path) -> Result<(), CliError> {
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = r
        .cells
        .iter()
        .map(|c| {
            vec![
                c.noise_rank.map(|n| n.to_string()).unwrap_or_default(),
                opt(c.nu),
                opt(c.theta),
                c.sigma_rank.map(|n| n.to_string()).unwrap_or_default(),
                opt(c.r_n),
                opt(c.fitted_rate),
                c.pass.to_string(),
            ]
        })
        .collect();
    write_table(
        out,
        "sweep.csv",
        "sweep",
        &["noise_rank", "nu", "theta", "sigma_rank", "r_n", "fitted_rate", "pass"],
        &rows,
    )
}

fn wants(cfg: &RunConfig, f: OutputFormat) -> bool {
    cfg.output.formats.contains(&f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Constants,
    Simulate,
    Couple,
    Verify,
    Sweep,
}

/// Execute `cmd`, write `report.json` and CSVs into `out`, and return the exit code.
pub fn run_command(cmd: Command, cfg: &RunConfig, threads: usize, out: &Path) -> Result<i32, CliError> {
    let json = wants(cfg, OutputFormat::Json);
    match cmd {
        Command::Constants => {
            let r = cmd_constants(cfg)?;
            print_constants(&r);
            if json {
                write_json(out, "report.json", &r)?;
            }
            Ok(if r.hypotheses.is_empty() { 0 } else { 2 })
        }
        Command::Simulate => {
            let r = cmd_simulate(cfg, threads, out)?;
            println!(
                "simulated {} steps: sup |X|_H = {}, Var_H(L) = {}",
                r.steps, r.sup_h_norm, r.local_time_variation
            );
            if json {
                write_json(out, "report.json", &r)?;
            }
            Ok(0)
        }
        Command::Couple => {
            let r = cmd_couple(cfg, threads, out)?;
            println!(
                "coupled {} steps: |x-y| {} -> {}, R_T = {}",
                r.steps, r.initial_distance, r.final_distance, r.final_girsanov_weight
            );
            if json {
                write_json(out, "report.json", &r)?;
            }
            Ok(0)
        }
        Command::Verify => {
            let r = cmd_verify(cfg, threads, out)?;
            for (name, pass) in &r.suite_pass {
                println!("{name}: {}", if *pass { "PASS" } else { "FAIL" });
            }
            if json {
                write_json(out, "report.json", &r)?;
            }
            Ok(if r.pass { 0 } else { 1 })
        }
        Command::Sweep => {
            let r = cmd_sweep(cfg, threads)?;
            for c in &r.cells {
                println!(
                    "N={:?} nu={:?} theta={:?} sigma_rank={:?}: rate {:?} {}",
                    c.noise_rank,
                    c.nu,
                    c.theta,
                    c.sigma_rank,
                    c.fitted_rate,
                    if c.pass { "PASS" } else { "FAIL" }
                );
            }
            if wants(cfg, OutputFormat::Csv) {
                write_sweep_csv(&r, out)?;
            }
            if json {
                write_json(out, "report.json", &r)?;
            }
            Ok(if r.pass { 0 } else { 1 })
        }
    }
}
