//! Experiment configuration loaded from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{systems, BisectionGrid, SystemSpec};
use crate::error::{Error, Result};
use crate::jumpmaps::{CouplingMode, CouplingSpec};
use crate::noise::HeavyTailSpec;
use crate::rates::{Budgets, Widths};
use crate::sde::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    pub coupling: CouplingSection,
    pub noise: NoiseSection,
    pub sim: SimSection,
    #[serde(default)]
    pub budgets: BudgetSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Radius `R` of the working ball.
    pub radius: f64,
    pub center: Option<Vec<f64>>,
    pub t_max: f64,
    pub dt: f64,
    pub max_move: Option<f64>,
    pub gamma: Option<f64>,
    /// Initial conditions for the attractor search; a grid over the ball when absent.
    pub seeds: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_ergodic_samples")]
    pub ergodic_samples: usize,
}

fn default_ergodic_samples() -> usize {
    256
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMethod {
    #[default]
    None,
    DuffingSeparatrix,
    Bisection,
    RepellingCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub method: BoundaryMethod,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub trace_time: f64,
    #[serde(default)]
    pub max_traces: usize,
    #[serde(default = "default_trace_spacing")]
    pub trace_spacing: f64,
    /// Cap on tube distances; `delta + delta_prime` when absent.
    pub tube_cap: Option<f64>,
}

fn default_nodes() -> usize {
    8
}
fn default_iterations() -> usize {
    40
}
fn default_trace_spacing() -> f64 {
    0.05
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            method: BoundaryMethod::None,
            lo: None,
            hi: None,
            nodes: default_nodes(),
            iterations: default_iterations(),
            trace_time: 0.0,
            max_traces: 0,
            trace_spacing: default_trace_spacing(),
            tube_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub mode: String,
    pub phi: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub shape: String,
    pub alpha: f64,
    /// Inner radius `r₀` of the jumps kept, in state units.
    pub cutoff: f64,
    #[serde(default = "one")]
    pub normalization: f64,
}

fn one() -> f64 {
    1.0
}

/// Blur radius `r_ε`: `"default"` is `ε^{α/2}`, a number is used as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlurRule {
    Fixed(f64),
    Rule(String),
}

impl Default for BlurRule {
    fn default() -> Self {
        BlurRule::Rule("default".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Noise scales, run in the given order; the smallest drives verification.
    pub epsilons: Vec<f64>,
    /// Horizon of switching runs in rescaled time (physical time is `horizon / h_ε`).
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub replicas: usize,
    pub delta: f64,
    pub delta_prime: f64,
    #[serde(default)]
    pub r_eps: BlurRule,
    #[serde(default)]
    pub brownian_amplitude: f64,
    #[serde(default = "default_n_check")]
    pub n_check: usize,
    #[serde(default = "default_cap_factor")]
    pub cap_factor: f64,
    /// Basins whose exits are sampled; all when absent.
    pub sources: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub sample_dt: f64,
}

fn default_n_check() -> usize {
    10
}
fn default_cap_factor() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub y_samples: usize,
    pub z_samples: usize,
    /// Jumps per basin for each pre-limit ratio (0 disables the ladder).
    #[serde(default)]
    pub prelimit_samples: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            y_samples: 40,
            z_samples: 200,
            prelimit_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Rescaled observation times for the finite-dimensional comparison.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    /// Coordinate used as the observable `ψ`.
    #[serde(default)]
    pub observable: usize,
    /// Start basin of verification paths.
    #[serde(default)]
    pub start: usize,
    /// Conditioning basin of the blurred observable; the start basin when absent.
    pub basin: Option<usize>,
    /// Paths per comparison; `sim.replicas` when absent.
    pub replicas: Option<usize>,
}

fn default_times() -> Vec<f64> {
    vec![0.5, 1.5]
}
fn default_s() -> f64 {
    0.5
}
fn default_t() -> f64 {
    1.5
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            times: default_times(),
            s: default_s(),
            t: default_t(),
            observable: 0,
            start: 0,
            basin: None,
            replicas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// Noise scale of the trace; the smallest configured one when absent.
    pub epsilon: Option<f64>,
    /// Physical duration of the trace (0 writes a header-only file).
    #[serde(default)]
    pub horizon: f64,
    #[serde(default)]
    pub start: usize,
    #[serde(default)]
    pub replica: u64,
    #[serde(default = "one")]
    pub sample_dt: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            epsilon: None,
            horizon: 0.0,
            start: 0,
            replica: 0,
            sample_dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Dotted path of the table enclosing byte offset `at`, joined with `field`.
fn key_path(src: &str, at: usize, field: &str) -> String {
    let mut table = String::new();
    for line in src[..at.min(src.len())].lines() {
        let l = line.trim();
        if l.starts_with('[') && l.ends_with(']') {
            table = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    match (table.is_empty(), field.is_empty()) {
        (true, _) => field.to_string(),
        (false, true) => table,
        (false, false) => format!("{table}.{field}"),
    }
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| {
            let msg = e.message().to_string();
            let named = msg.starts_with("unknown field") || msg.starts_with("missing field");
            let field = if named { msg.split('`').nth(1).unwrap_or("").to_string() } else { String::new() };
            let at = e.span().map(|s| s.start).unwrap_or(0);
            let at = at.min(src.len());
            let line_start = src[..at].rfind('\n').map_or(0, |i| i + 1);
            let line = src[line_start..].lines().next().unwrap_or("");
            let line_key = if line.contains('=') { line.split('=').next().unwrap_or("").trim().to_string() } else { String::new() };
            let field = if field.is_empty() { line_key } else { field };
            Error::Config {
                key: key_path(src, at, &field),
                msg,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| bad("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    /// Range checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if !(s.radius > 0.0) {
            return Err(bad("system.radius", "must be positive"));
        }
        if !(s.t_max > 0.0) {
            return Err(bad("system.t_max", "must be positive"));
        }
        if !(s.dt > 0.0) {
            return Err(bad("system.dt", "must be positive"));
        }
        if s.max_move.is_some_and(|m| !(m > 0.0)) {
            return Err(bad("system.max_move", "must be positive"));
        }
        if s.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(bad("system.gamma", "must be positive"));
        }
        if s.ergodic_samples == 0 {
            return Err(bad("system.ergodic_samples", "must be positive"));
        }
        let n = &self.noise;
        if !(n.alpha > 0.0 && n.alpha < 2.0) {
            return Err(bad("noise.alpha", "must lie in (0, 2)"));
        }
        if !(n.cutoff > 0.0) {
            return Err(bad("noise.cutoff", "must be positive"));
        }
        if !(n.normalization > 0.0) {
            return Err(bad("noise.normalization", "must be positive"));
        }
        if !matches!(n.shape.as_str(), "isotropic" | "pareto") {
            return Err(bad("noise.shape", format!("unknown shape `{}` (isotropic | pareto)", n.shape)));
        }
        let m = &self.sim;
        if m.epsilons.is_empty() || m.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(bad("sim.epsilons", "must be a non-empty list of positive numbers"));
        }
        if !(m.horizon > 0.0) {
            return Err(bad("sim.horizon", "must be positive"));
        }
        if !(m.dt > 0.0) {
            return Err(bad("sim.dt", "must be positive"));
        }
        if m.replicas == 0 {
            return Err(bad("sim.replicas", "must be positive"));
        }
        if !(m.delta > 0.0) {
            return Err(bad("sim.delta", "must be positive"));
        }
        if !(m.delta_prime > 0.0) {
            return Err(bad("sim.delta_prime", "must be positive"));
        }
        if !(m.brownian_amplitude >= 0.0) {
            return Err(bad("sim.brownian_amplitude", "must be non-negative"));
        }
        if m.n_check == 0 {
            return Err(bad("sim.n_check", "must be positive"));
        }
        if !(m.cap_factor > 0.0) {
            return Err(bad("sim.cap_factor", "must be positive"));
        }
        if !(m.sample_dt > 0.0) {
            return Err(bad("sim.sample_dt", "must be positive"));
        }
        match &m.r_eps {
            BlurRule::Fixed(r) if !(*r >= 0.0) => return Err(bad("sim.r_eps", "must be non-negative")),
            BlurRule::Rule(r) if r != "default" => return Err(bad("sim.r_eps", format!("unknown rule `{r}` (use \"default\" or a number)"))),
            _ => {}
        }
        if self.budgets.y_samples < 2 {
            return Err(bad("budgets.y_samples", "must be at least 2"));
        }
        if self.budgets.z_samples == 0 {
            return Err(bad("budgets.z_samples", "must be positive"));
        }
        let v = &self.verify;
        if v.times.is_empty() || v.times[0] <= 0.0 || v.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("verify.times", "must be positive and strictly increasing"));
        }
        if !(0.0 < v.s && v.s < v.t) {
            return Err(bad("verify.s", "need 0 < s < t"));
        }
        if v.replicas == Some(0) {
            return Err(bad("verify.replicas", "must be positive"));
        }
        if !(self.report.horizon >= 0.0) {
            return Err(bad("report.horizon", "must be non-negative"));
        }
        if !(self.report.sample_dt > 0.0) {
            return Err(bad("report.sample_dt", "must be positive"));
        }
        if let Some(f) = self.outputs.formats.iter().find(|f| !matches!(f.as_str(), "json" | "csv")) {
            return Err(bad("outputs.formats", format!("unknown format `{f}`")));
        }
        let b = &self.boundary;
        if matches!(b.method, BoundaryMethod::Bisection | BoundaryMethod::RepellingCycles) {
            if b.lo.is_none() {
                return Err(bad("boundary.lo", "required by the chosen method"));
            }
            if b.hi.is_none() {
                return Err(bad("boundary.hi", "required by the chosen method"));
            }
            if b.nodes < 2 {
                return Err(bad("boundary.nodes", "must be at least 2"));
            }
        }
        if b.tube_cap.is_some_and(|c| !(c > 0.0)) {
            return Err(bad("boundary.tube_cap", "must be positive"));
        }
        // construct once so that name/parameter errors surface at load time
        self.system_spec()?;
        self.coupling_spec()?;
        self.noise_spec()?;
        Ok(())
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        let s = &self.system;
        let field = systems::builtin(&s.name, &s.params)?;
        let mut spec = SystemSpec::new(Arc::clone(&field), s.radius, s.t_max, s.dt).map_err(|e| bad("system", e.to_string()))?;
        if let Some(c) = &s.center {
            if c.len() != spec.dim {
                return Err(bad("system.center", format!("expected {} coordinates", spec.dim)));
            }
            spec = spec.with_center(c.clone())?;
        }
        if let Some(m) = s.max_move {
            spec = spec.with_max_move(m);
        }
        if let Some(g) = s.gamma {
            spec = spec.with_gamma(g);
        }
        Ok(spec)
    }

    /// Attractor-search seeds: as configured, or a 7×7 grid on the square inscribed in the ball.
    pub fn seeds(&self) -> Result<Vec<Vec<f64>>> {
        let spec = self.system_spec()?;
        if let Some(s) = &self.system.seeds {
            if s.iter().any(|x| x.len() != spec.dim) {
                return Err(bad("system.seeds", format!("every seed needs {} coordinates", spec.dim)));
            }
            return Ok(s.clone());
        }
        if spec.dim != 2 {
            return Err(bad("system.seeds", "required for systems that are not planar"));
        }
        let h = spec.ball.radius / 2f64.sqrt();
        let c = &spec.ball.center;
        let mut out = vec![];
        for i in 0..7 {
            for j in 0..7 {
                let a = -h + 2.0 * h * (i as f64 + 0.5) / 7.0;
                let b = -h + 2.0 * h * (j as f64 + 0.5) / 7.0;
                out.push(vec![c[0] + a, c[1] + b]);
            }
        }
        Ok(out)
    }

    pub fn bisection_grid(&self) -> Option<BisectionGrid> {
        let b = &self.boundary;
        Some(BisectionGrid {
            lo: b.lo.clone()?,
            hi: b.hi.clone()?,
            nodes: b.nodes,
            iterations: b.iterations,
            trace_time: b.trace_time,
            max_traces: b.max_traces,
            trace_spacing: b.trace_spacing,
        })
    }

    pub fn coupling_spec(&self) -> Result<CouplingSpec> {
        let mode: CouplingMode = self.coupling.mode.parse()?;
        let dim = self.system_spec()?.dim;
        let noise_dim = match self.noise.shape.as_str() {
            "pareto" => 1,
            _ => dim,
        };
        CouplingSpec::builtin(mode, &self.coupling.phi, dim, noise_dim).map_err(|e| match e {
            Error::Config { .. } => e,
            other => bad("coupling.phi", other.to_string()),
        })
    }

    pub fn noise_spec(&self) -> Result<HeavyTailSpec> {
        let n = &self.noise;
        let dim = self.system_spec()?.dim;
        let spec = match n.shape.as_str() {
            "pareto" => HeavyTailSpec::pareto_1d(n.alpha, n.cutoff),
            _ => HeavyTailSpec::isotropic(n.alpha, dim, n.cutoff),
        }
        .and_then(|s| s.with_normalization(n.normalization))
        .map_err(|e| bad("noise", e.to_string()))?;
        Ok(spec)
    }

    pub fn widths(&self) -> Widths {
        Widths {
            delta: self.sim.delta,
            delta_prime: self.sim.delta_prime,
        }
    }

    pub fn budgets(&self) -> Budgets {
        Budgets {
            y_samples: self.budgets.y_samples,
            z_samples: self.budgets.z_samples,
        }
    }

    pub fn smallest_epsilon(&self) -> f64 {
        self.sim.epsilons.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn blur(&self, noise: &HeavyTailSpec, epsilon: f64) -> f64 {
        match self.sim.r_eps {
            BlurRule::Fixed(r) => r,
            BlurRule::Rule(_) => crate::sde::default_blur(noise, epsilon),
        }
    }

    /// Simulation settings at noise scale `epsilon` with physical horizon `horizon`.
    pub fn sim_config(&self, epsilon: f64, horizon: f64) -> SimConfig {
        let m = &self.sim;
        let mut c = SimConfig::new(epsilon, horizon, m.dt, m.seed, self.widths());
        c.brownian = m.brownian_amplitude;
        c.n_check = m.n_check;
        c.cap_factor = m.cap_factor;
        c.sample_dt = m.sample_dt;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
name = "duffing"
params = { delta = 0.5 }
radius = 12.0
t_max = 400.0
dt = 0.01
max_move = 0.01

[coupling]
mode = "additive"
phi = "identity"

[noise]
shape = "isotropic"
alpha = 1.5
cutoff = 0.5

[sim]
epsilons = [0.04, 0.02]
horizon = 2.0
dt = 0.01
seed = 1
replicas = 100
delta = 0.02
delta_prime = 0.02
"#;

    fn key_of(src: &str) -> String {
        match ExperimentConfig::from_toml(src) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_loads_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.budgets.y_samples, 40);
        assert_eq!(c.verify.times, vec![0.5, 1.5]);
        assert_eq!(c.sim.r_eps, BlurRule::Rule("default".into()));
        assert_eq!(c.smallest_epsilon(), 0.02);
        assert_eq!(c.coupling_spec().unwrap().noise_dim(), 2);
        assert_eq!(c.seeds().unwrap().len(), 49);
    }

    #[test]
    fn unknown_key_is_named() {
        let src = MINIMAL.replace("seed = 1", "seed = 1\nsede = 2");
        assert_eq!(key_of(&src), "sim.sede");
        let src = MINIMAL.replace("[coupling]", "[coupling]\nfoo = 1");
        assert_eq!(key_of(&src), "coupling.foo");
    }

    #[test]
    fn bad_values_are_named() {
        assert_eq!(key_of(&MINIMAL.replace("alpha = 1.5", "alpha = 2.5")), "noise.alpha");
        assert_eq!(key_of(&MINIMAL.replace("delta_prime = 0.02", "delta_prime = -1.0")), "sim.delta_prime");
        assert_eq!(key_of(&MINIMAL.replace("mode = \"additive\"", "mode = \"stratonovich\"")), "coupling.mode");
        assert_eq!(key_of(&MINIMAL.replace("name = \"duffing\"", "name = \"lorenz\"")), "system.name");
        assert_eq!(key_of(&MINIMAL.replace("{ delta = 0.5 }", "{ beta = 0.5 }")), "system.params.beta");
        assert_eq!(key_of(&MINIMAL.replace("epsilons = [0.04, 0.02]", "epsilons = []")), "sim.epsilons");
        assert_eq!(key_of(&MINIMAL.replace("replicas = 100", "replicas = \"many\"")), "sim.replicas");
    }

    #[test]
    fn missing_section_is_named() {
        let src = MINIMAL.replace("[noise]\nshape = \"isotropic\"\nalpha = 1.5\ncutoff = 0.5\n", "");
        assert_eq!(key_of(&src), "noise");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
