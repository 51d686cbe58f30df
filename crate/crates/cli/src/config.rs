//! Run configuration: a JSON document with `model`, `grid`, `mc`, `suite`,
//! `output` and `sweep` blocks. Every field is checked before any
//! simulation starts and all problems are reported together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use spde_lab::coupling::CouplingScheme;
use spde_lab::harnack::min_n;
use spde_lab::integrator::TimeGrid;
use spde_lab::mc::McPlan;
use spde_lab::models::{
    make_linear_model, make_navier_stokes_model, BilinearConstant, ModelSpec, NsParams, SigmaRule,
};
use spde_lab::spectral::{norm_h, Spectrum, StateVector, BALL_EPS};
use spde_lab::test_function::{TestFunction, TestFunctionKind};
use spde_lab::LabError;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub mc: McBlock,
    #[serde(default)]
    pub suite: SuiteBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    Linear,
    NavierStokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseRank {
    Fixed(usize),
    /// `"auto"`: the smallest `N` with `r(N) > 0`.
    Auto(String),
}

impl Default for NoiseRank {
    fn default() -> Self {
        NoiseRank::Auto("auto".into())
    }
}

/// Manual replacements for individual model constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(rename = "K_b")]
    pub k_drift: Option<f64>,
    #[serde(rename = "K_sigma")]
    pub k_sigma: Option<f64>,
    #[serde(rename = "K_bar")]
    pub k_trilinear: Option<f64>,
    pub b0_vstar: Option<f64>,
    pub sigma0_hs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKindName,
    /// Linear model: number of retained modes `M`.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Linear model: `λ_i = nu · i^theta` unless `eigenvalues` is given.
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default)]
    pub drift_scale: Option<f64>,
    /// Navier–Stokes: spatial dimension, cutoff `|k| ≤ cutoff`.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub cutoff: Option<usize>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub noise_rank: NoiseRank,
    pub sigma: SigmaRule,
    /// Navier–Stokes: fixed `K_B` instead of the sampled estimate.
    #[serde(default)]
    pub k_bilinear: Option<f64>,
    #[serde(default = "default_k_samples")]
    pub k_bilinear_samples: usize,
    #[serde(default)]
    pub constants: ConstantOverrides,
}

fn default_k_samples() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub t_end: f64,
    pub steps: usize,
    /// Checkpoint times; defaults to `[t_end]`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub paths: usize,
    pub master_seed: u64,
}

impl Default for McBlock {
    fn default() -> Self {
        McBlock {
            paths: 1000,
            master_seed: 0,
        }
    }
}

/// A point of `H` given in the eigenbasis; 1-based mode indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Zero,
    Mode { index: usize, amplitude: f64 },
    /// Sparse `[(index, amplitude), ...]`.
    Modes(Vec<(usize, f64)>),
    Coeffs(Vec<f64>),
}

impl StateSpec {
    pub fn materialize(&self, dim: usize) -> Result<Vec<f64>, String> {
        let mut x = vec![0.0; dim];
        let mut put = |index: usize, amplitude: f64| -> Result<(), String> {
            if index == 0 || index > dim {
                return Err(format!("mode index {index} outside 1..={dim}"));
            }
            x[index - 1] += amplitude;
            Ok(())
        };
        match self {
            StateSpec::Zero => {}
            StateSpec::Mode { index, amplitude } => put(*index, *amplitude)?,
            StateSpec::Modes(list) => {
                for (i, a) in list {
                    put(*i, *a)?;
                }
            }
            StateSpec::Coeffs(c) => {
                if c.len() != dim {
                    return Err(format!("expected {dim} coefficients, got {}", c.len()));
                }
                x.copy_from_slice(c);
            }
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err("state has non-finite coefficients".into());
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub kind: TestFunctionKind,
    #[serde(default = "default_direction")]
    pub direction: StateSpec,
    pub scale: f64,
}

fn default_direction() -> StateSpec {
    StateSpec::Mode {
        index: 1,
        amplitude: 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Assumptions,
    Reflection,
    Contraction,
    MomentT1,
    MomentT2,
    Girsanov,
    Harnack,
    Gradient,
}

impl SuiteName {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Assumptions => "assumptions",
            SuiteName::Reflection => "reflection",
            SuiteName::Contraction => "contraction",
            SuiteName::MomentT1 => "moment_t1",
            SuiteName::MomentT2 => "moment_t2",
            SuiteName::Girsanov => "girsanov",
            SuiteName::Harnack => "harnack",
            SuiteName::Gradient => "gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientBlock {
    #[serde(default = "default_direction")]
    pub direction: StateSpec,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

fn default_fd_eps() -> f64 {
    1e-3
}

impl Default for GradientBlock {
    fn default() -> Self {
        GradientBlock {
            direction: default_direction(),
            fd_eps: default_fd_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    #[serde(default = "default_suites")]
    pub enabled: Vec<SuiteName>,
    #[serde(default = "default_lambda_t1")]
    pub lambda_t1: f64,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    #[serde(default = "default_x0")]
    pub x0: StateSpec,
    #[serde(default = "default_y0")]
    pub y0: StateSpec,
    #[serde(default = "default_beta_factor")]
    pub beta_factor: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_reflection_paths")]
    pub reflection_paths: usize,
    #[serde(default)]
    pub gradient: GradientBlock,
    #[serde(default = "default_assumption_samples")]
    pub assumption_samples: usize,
}

fn default_suites() -> Vec<SuiteName> {
    vec![
        SuiteName::Assumptions,
        SuiteName::Reflection,
        SuiteName::Contraction,
        SuiteName::MomentT1,
        SuiteName::MomentT2,
        SuiteName::Girsanov,
        SuiteName::Harnack,
        SuiteName::Gradient,
    ]
}
fn default_lambda_t1() -> f64 {
    0.1
}
fn default_x0() -> StateSpec {
    StateSpec::Mode {
        index: 1,
        amplitude: 0.3,
    }
}
fn default_y0() -> StateSpec {
    StateSpec::Mode {
        index: 1,
        amplitude: -0.2,
    }
}
fn default_beta_factor() -> f64 {
    0.5
}
fn default_probes() -> usize {
    100
}
fn default_reflection_paths() -> usize {
    100
}
fn default_assumption_samples() -> usize {
    1000
}

impl Default for SuiteBlock {
    fn default() -> Self {
        SuiteBlock {
            enabled: default_suites(),
            lambda_t1: default_lambda_t1(),
            test_functions: Vec::new(),
            x0: default_x0(),
            y0: default_y0(),
            beta_factor: default_beta_factor(),
            probes: default_probes(),
            reflection_paths: default_reflection_paths(),
            gradient: GradientBlock::default(),
            assumption_samples: default_assumption_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("spde-lab-out")
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_out_dir(),
            formats: default_formats(),
        }
    }
}

/// Axes of `cmd_sweep`; an empty axis keeps the model's own value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default)]
    pub noise_rank: Vec<usize>,
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub sigma_rank: Vec<usize>,
}

/// Replace `N` by the smallest rank with `r(N) > 0`.
pub fn resolve_auto_rank(model: ModelSpec) -> Result<ModelSpec, CliError> {
    let n = min_n(&model).ok_or_else(|| {
        CliError::Setup(LabError::HypothesisViolation(
            "no N <= M-1 gives r(N) > 0 for noise_rank \"auto\"".into(),
        ))
    })?;
    model.with_noise_rank(n).map_err(CliError::Setup)
}

/// Everything a command needs, built from a validated config.
pub struct Prepared {
    pub model: ModelSpec,
    pub plan: McPlan,
    pub scheme: CouplingScheme,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub test_functions: Vec<TestFunction>,
    pub gradient_direction: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![format!("config parse error: {e}")]))
    }

    /// Field-level checks that need no model construction.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let m = &self.model;
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        match m.kind {
            ModelKindName::Linear => {
                need(m.dim.is_some() || m.eigenvalues.is_some(), "model.dim or model.eigenvalues is required for the linear model");
                need(m.d.is_none() && m.cutoff.is_none(), "model.d and model.cutoff apply only to navier_stokes");
                need(m.k_bilinear.is_none(), "model.k_bilinear applies only to navier_stokes");
                if let Some(s) = m.drift_scale {
                    need(s.is_finite(), "model.drift_scale must be finite");
                }
            }
            ModelKindName::NavierStokes => {
                need(m.d.is_some(), "model.d is required for navier_stokes");
                need(m.cutoff.is_some_and(|c| c >= 1), "model.cutoff >= 1 is required for navier_stokes");
                need(m.dim.is_none() && m.eigenvalues.is_none(), "model.dim and model.eigenvalues apply only to the linear model");
                need(m.drift_scale.is_none(), "model.drift_scale applies only to the linear model");
                need(m.k_bilinear.is_none_or(|k| k >= 0.0 && k.is_finite()), "model.k_bilinear must be finite and nonnegative");
                need(m.k_bilinear_samples >= 1, "model.k_bilinear_samples must be at least 1");
            }
        }
        need(m.nu.is_none_or(|v| v > 0.0 && v.is_finite()), "model.nu must be positive");
        need(m.theta.is_none_or(|v| v > 0.0 && v.is_finite()), "model.theta must be positive");
        if let NoiseRank::Auto(s) = &m.noise_rank {
            need(s == "auto", "model.noise_rank must be a positive integer or \"auto\"");
        }
        if let NoiseRank::Fixed(n) = m.noise_rank {
            need(n >= 1, "model.noise_rank must be at least 1");
        }
        let c = &m.constants;
        for v in [c.k_drift, c.k_sigma, c.k_trilinear, c.b0_vstar, c.sigma0_hs].into_iter().flatten() {
            need(v >= 0.0 && v.is_finite(), "model.constants overrides must be finite and nonnegative");
        }

        let g = &self.grid;
        need(g.t_end > 0.0 && g.t_end.is_finite(), "grid.t_end must be positive");
        need(g.steps >= 1, "grid.steps must be at least 1");
        if g.t_end > 0.0 && g.steps >= 1 {
            if let Ok(grid) = TimeGrid::new(g.t_end, g.steps) {
                for t in &g.checkpoints {
                    if grid.index_of(*t).is_err() {
                        errs.push(format!("grid.checkpoints: {t} is not a grid point"));
                    }
                }
            }
            if g.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
                errs.push("grid.checkpoints must be strictly increasing".into());
            }
        }
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        need(self.mc.paths >= 1, "mc.paths must be at least 1");
        let s = &self.suite;
        need(s.beta_factor == 0.5 || s.beta_factor == 1.0, "suite.beta_factor must be 0.5 or 1.0");
        need(s.lambda_t1 > 0.0 && s.lambda_t1.is_finite(), "suite.lambda_t1 must be positive");
        need(s.gradient.fd_eps > 0.0 && s.gradient.fd_eps.is_finite(), "suite.gradient.fd_eps must be positive");
        need(!s.enabled.is_empty(), "suite.enabled must list at least one suite");
        need(
            !(s.enabled.contains(&SuiteName::Reflection) && s.reflection_paths == 0),
            "suite.reflection_paths must be at least 1",
        );
        for f in &s.test_functions {
            need(f.scale.is_finite(), "suite.test_functions: scale must be finite");
            need(
                f.kind != TestFunctionKind::Constant || f.scale > 0.0,
                "suite.test_functions: constant functions need scale > 0",
            );
        }
        need(!self.output.formats.is_empty(), "output.formats must not be empty");
        let sw = &self.sweep;
        need(sw.noise_rank.iter().all(|n| *n >= 1), "sweep.noise_rank entries must be at least 1");
        need(sw.nu.iter().all(|v| *v > 0.0 && v.is_finite()), "sweep.nu entries must be positive");
        need(sw.theta.iter().all(|v| *v > 0.0 && v.is_finite()), "sweep.theta entries must be positive");
        need(sw.sigma_rank.iter().all(|n| *n >= 1), "sweep.sigma_rank entries must be at least 1");
        errs
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.grid.t_end, self.grid.steps).map_err(CliError::Setup)
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        if self.grid.checkpoints.is_empty() {
            vec![self.grid.t_end]
        } else {
            self.grid.checkpoints.clone()
        }
    }

    /// The model with `N = 1` when `noise_rank` is `"auto"`; returns whether
    /// the rank still has to be resolved.
    pub fn build_model_unresolved(&self) -> Result<(ModelSpec, bool), CliError> {
        let m = &self.model;
        let (base_rank, auto) = match m.noise_rank {
            NoiseRank::Fixed(n) => (n, false),
            NoiseRank::Auto(_) => (1, true),
        };
        let model = match m.kind {
            ModelKindName::Linear => {
                let spectrum = match &m.eigenvalues {
                    Some(ev) => Spectrum::new(ev.clone()),
                    None => Spectrum::power_law(m.dim.unwrap_or(0), m.nu.unwrap_or(1.0), m.theta.unwrap_or(1.0)),
                }
                .map_err(CliError::Setup)?;
                make_linear_model(spectrum, base_rank, m.drift_scale.unwrap_or(0.0), &m.sigma)
            }
            ModelKindName::NavierStokes => {
                let params = NsParams {
                    d: m.d.unwrap_or(0),
                    cutoff: m.cutoff.unwrap_or(0),
                    nu: m.nu.unwrap_or(1.0),
                    theta: m.theta.unwrap_or(1.0),
                };
                let kb = match m.k_bilinear {
                    Some(v) => BilinearConstant::Manual(v),
                    None => BilinearConstant::Estimate {
                        samples: m.k_bilinear_samples,
                        seed: self.mc.master_seed,
                    },
                };
                make_navier_stokes_model(params, base_rank, &m.sigma, kb)
            }
        }
        .map_err(CliError::Setup)?;
        Ok((self.apply_overrides(model)?, auto))
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let (model, auto) = self.build_model_unresolved()?;
        if auto {
            resolve_auto_rank(model)
        } else {
            Ok(model)
        }
    }

    fn apply_overrides(&self, model: ModelSpec) -> Result<ModelSpec, CliError> {
        let o = &self.model.constants;
        let mut c = spde_lab::models::SpdeModel::constants(&model).clone();
        if let Some(v) = o.k_drift {
            c.k_drift = v;
        }
        if let Some(v) = o.k_sigma {
            c.k_sigma = v;
        }
        if let Some(v) = o.k_trilinear {
            c.k_trilinear = v;
        }
        if let Some(v) = o.b0_vstar {
            c.b0_vstar = v;
        }
        if let Some(v) = o.sigma0_hs {
            c.sigma0_hs = v;
        }
        model.with_constants(c).map_err(CliError::Setup)
    }

    /// Validate, build the model and materialize all states.
    pub fn prepare(&self, threads: usize) -> Result<Prepared, CliError> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let model = self.build_model()?;
        let dim = model.dim();
        let mut errs = Vec::new();
        let state = |errs: &mut Vec<String>, name: &str, spec: &StateSpec, in_ball: bool| -> Vec<f64> {
            match spec.materialize(dim) {
                Ok(x) => {
                    if in_ball && norm_h(&x) > 1.0 + BALL_EPS {
                        errs.push(format!("{name} lies outside the unit ball (norm {})", norm_h(&x)));
                    }
                    x
                }
                Err(e) => {
                    errs.push(format!("{name}: {e}"));
                    vec![0.0; dim]
                }
            }
        };
        let x0 = state(&mut errs, "suite.x0", &self.suite.x0, true);
        let y0 = state(&mut errs, "suite.y0", &self.suite.y0, true);
        let gradient_direction = state(&mut errs, "suite.gradient.direction", &self.suite.gradient.direction, false);
        let mut test_functions = Vec::new();
        for (i, f) in self.suite.test_functions.iter().enumerate() {
            let dir = state(&mut errs, &format!("suite.test_functions[{i}].direction"), &f.direction, false);
            match TestFunction::new(f.kind, StateVector::new(dir).map_err(CliError::Setup)?, f.scale) {
                Ok(tf) => test_functions.push(tf),
                Err(e) => errs.push(format!("suite.test_functions[{i}]: {e}")),
            }
        }
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
        let grid = self.grid()?;
        let plan = McPlan::new(grid, &self.checkpoint_times(), self.mc.paths, self.mc.master_seed, threads)
            .map_err(CliError::Setup)?;
        let scheme = CouplingScheme::new(self.suite.beta_factor).map_err(CliError::Setup)?;
        Ok(Prepared {
            model,
            plan,
            scheme,
            x0,
            y0,
            test_functions,
            gradient_direction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"{
        "model": {"kind": "linear", "dim": 16, "drift_scale": 0.5,
                  "sigma": {"power": {"scale": 0.5, "alpha": 0.0, "rank": 8}}},
        "grid": {"t_end": 1.0, "steps": 100, "checkpoints": [0.5, 1.0]}
    }"#;

    #[test]
    fn defaults_and_auto_rank() {
        let cfg = RunConfig::parse(LINEAR).unwrap();
        assert!(cfg.validate().is_empty());
        let p = cfg.prepare(1).unwrap();
        assert_eq!(spde_lab::models::SpdeModel::noise_rank(&p.model), 1);
        assert_eq!(p.plan.checkpoints, vec![50, 100]);
        assert_eq!(p.x0[0], 0.3);
        assert_eq!(p.y0[0], -0.2);
    }

    #[test]
    fn errors_are_aggregated() {
        let text = LINEAR
            .replace("\"steps\": 100", "\"steps\": 0")
            .replace("\"drift_scale\": 0.5", "\"drift_scale\": 0.5, \"d\": 2");
        let cfg = RunConfig::parse(&text).unwrap();
        let errs = cfg.validate();
        assert!(errs.len() >= 2, "{errs:?}");
        assert!(matches!(cfg.prepare(1), Err(CliError::Config(e)) if e.len() >= 2));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = LINEAR.replace("\"drift_scale\"", "\"drift_scael\"");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn state_specs() {
        assert_eq!(StateSpec::Zero.materialize(3).unwrap(), vec![0.0; 3]);
        assert_eq!(
            StateSpec::Modes(vec![(1, 0.5), (3, -1.0), (1, 0.25)]).materialize(3).unwrap(),
            vec![0.75, 0.0, -1.0]
        );
        assert!(StateSpec::Mode { index: 4, amplitude: 1.0 }.materialize(3).is_err());
        assert!(StateSpec::Coeffs(vec![1.0]).materialize(3).is_err());
    }

    #[test]
    fn outside_ball_start_is_a_config_error() {
        let text = LINEAR.replace(
            "\"grid\"",
            "\"suite\": {\"x0\": {\"mode\": {\"index\": 1, \"amplitude\": 1.5}}}, \"grid\"",
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(matches!(cfg.prepare(1), Err(CliError::Config(e)) if e[0].contains("outside the unit ball")));
    }
}
