//! TOML run configuration.

use crate::flowfield::{check_exponent, validate_speed, FlowProfile, WaveParams};
use crate::newton_solver::{ContinuationPlan, NewtonOptions, Stage};
use crate::planar_ode::BarrierOptions;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config{}: `{key}` {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config serialization failed: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathOrder {
    /// Flow amplitude at the largest δ first, then L, then δ.
    AmplitudeFirst,
    /// L and δ on the planar problem first, flow amplitude last.
    DeltaFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub m: f64,
    pub c: f64,
    #[serde(default = "default_pin_mass")]
    pub pin_mass: f64,
    /// Regularization levels, strictly decreasing.
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    /// Truncation half-lengths, strictly increasing.
    #[serde(default = "default_half_length")]
    pub half_length: Vec<f64>,
    #[serde(default = "default_left_weight")]
    pub left_weight: f64,
}

fn default_pin_mass() -> f64 {
    100.0
}
fn default_delta() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_half_length() -> Vec<f64> {
    vec![8.0, 16.0, 32.0]
}
fn default_left_weight() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// `a_k` of `cos(2πky)`, `k = 1..`.
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    /// Continuation multipliers on the flow, ending at 1.
    #[serde(default = "default_amplitude")]
    pub amplitude: Vec<f64>,
}

fn default_amplitude() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            cos: Vec::new(),
            sin: Vec::new(),
            amplitude: default_amplitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// x-nodes per half-length entry; default `8 L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<Vec<usize>>,
    #[serde(default = "default_ny")]
    pub ny: usize,
}

fn default_ny() -> usize {
    16
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: None, ny: default_ny() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Newton stops at `‖Φ‖∞ ≤ newton · c1²`.
    #[serde(default = "default_newton")]
    pub newton: f64,
    #[serde(default = "default_linear")]
    pub linear: f64,
    /// Relative accuracy of the adaptive phase-plane quadrature used as the
    /// planar reference.
    #[serde(default = "default_quadrature")]
    pub quadrature: f64,
    #[serde(default = "default_jacobian")]
    pub jacobian: f64,
    /// Sandwich breach allowed, relative to `B`.
    #[serde(default = "default_sandwich")]
    pub sandwich: f64,
    /// Allowed negative `p_x`.
    #[serde(default = "default_monotone")]
    pub monotone: f64,
}

fn default_newton() -> f64 {
    1e-9
}
fn default_linear() -> f64 {
    1e-10
}
fn default_quadrature() -> f64 {
    1e-12
}
fn default_jacobian() -> f64 {
    1e-5
}
fn default_sandwich() -> f64 {
    1e-6
}
fn default_monotone() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton: default_newton(),
            linear: default_linear(),
            quadrature: default_quadrature(),
            jacobian: default_jacobian(),
            sandwich: default_sandwich(),
            monotone: default_monotone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    #[serde(default = "default_order")]
    pub order: PathOrder,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_jacobian_directions")]
    pub jacobian_directions: usize,
    #[serde(default = "default_jacobian_step")]
    pub jacobian_step: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_transient_steps")]
    pub transient_steps: usize,
}

fn default_order() -> PathOrder {
    PathOrder::AmplitudeFirst
}
fn default_max_halvings() -> usize {
    8
}
fn default_jacobian_directions() -> usize {
    3
}
fn default_jacobian_step() -> f64 {
    1e-6
}
fn default_max_iterations() -> usize {
    50
}
fn default_transient_steps() -> usize {
    400
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            max_halvings: default_max_halvings(),
            jacobian_directions: default_jacobian_directions(),
            jacobian_step: default_jacobian_step(),
            max_iterations: default_max_iterations(),
            transient_steps: default_transient_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Level-set values ε; default `[8, 4, 2]·c·hx`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Expansion window, distances from the natural origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_window: Option<[f64; 2]>,
    /// Decay-fit window for the oscillation, same coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation_window: Option<[f64; 2]>,
    #[serde(default = "default_fourier_lines")]
    pub fourier_lines: usize,
    #[serde(default = "default_fourier_modes")]
    pub fourier_modes: usize,
    #[serde(default = "default_blow_down")]
    pub blow_down: Vec<f64>,
}

fn default_fourier_lines() -> usize {
    12
}
fn default_fourier_modes() -> usize {
    3
}
fn default_blow_down() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            levels: None,
            expansion_window: None,
            oscillation_window: None,
            fourier_lines: default_fourier_lines(),
            fourier_modes: default_fourier_modes(),
            blow_down: default_blow_down(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// The α ≡ 0 reference case of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarCase {
    pub m: f64,
    pub c: f64,
    pub delta: f64,
    pub half_length: f64,
    pub nx: usize,
    pub ny: usize,
    pub pin_mass: f64,
    /// Expansion window for the planar coefficient check.
    pub expansion_window: [f64; 2],
}

impl Default for PlanarCase {
    fn default() -> Self {
        Self {
            m: 2.0,
            c: 1.0,
            delta: 0.01,
            half_length: 16.0,
            nx: 512,
            ny: 32,
            pin_mass: 10.0,
            expansion_window: [4.0, 14.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub planar: PlanarCase,
    /// Grid refinement factor for the coarse companion run (nx divided by it).
    #[serde(default = "default_coarsen")]
    pub coarsen: usize,
    /// Also run the other continuation order and compare the endpoints.
    #[serde(default = "default_true")]
    pub path_independence: bool,
    /// Wall-clock budgets in seconds.
    #[serde(default = "default_planar_budget")]
    pub planar_budget: f64,
    #[serde(default = "default_total_budget")]
    pub total_budget: f64,
}

fn default_coarsen() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_planar_budget() -> f64 {
    60.0
}
fn default_total_budget() -> f64 {
    900.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            planar: PlanarCase::default(),
            coarsen: default_coarsen(),
            path_independence: true,
            planar_budget: default_planar_budget(),
            total_budget: default_total_budget(),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (top level when `section` is empty).
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|(section, key, message)| ConfigError::Invalid {
            line: line_of(text, section, key),
            key: if section.is_empty() { key.to_string() } else { format!("{section}.{key}") },
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Checks everything that can be checked without solving; errors carry
    /// `(section, key, message)`.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        let p = &self.params;
        check_exponent(p.m).map_err(|e| ("params", "m", e.to_string()))?;
        if p.m < 1.0 {
            // only the expansion stage needs m > 1
            log::warn!("m = {} < 1: far-field expansion will be skipped", p.m);
        }
        if !(p.c > 0.0 && p.c.is_finite()) {
            return Err(("params", "c", format!("must be positive and finite, got {}", p.c)));
        }
        if !(p.pin_mass > 0.0 && p.pin_mass.is_finite()) {
            return Err(("params", "pin_mass", format!("must be positive, got {}", p.pin_mass)));
        }
        if !(0.0..=1.0).contains(&p.left_weight) {
            return Err(("params", "left_weight", format!("must lie in [0, 1], got {}", p.left_weight)));
        }
        strictly(&p.delta, false).map_err(|m| ("params", "delta", m))?;
        if p.delta.iter().any(|d| !(*d > 0.0)) {
            return Err(("params", "delta", "entries must be positive".into()));
        }
        strictly(&p.half_length, true).map_err(|m| ("params", "half_length", m))?;
        if p.half_length.iter().any(|l| !(*l > 0.0)) {
            return Err(("params", "half_length", "entries must be positive".into()));
        }
        let flow = self.base_flow().map_err(|e| ("flow", "cos", e))?;
        let a = &self.flow.amplitude;
        if a.is_empty() || a.iter().any(|v| !(*v >= 0.0)) || a.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(("flow", "amplitude", "must be non-empty, non-negative and strictly increasing".into()));
        }
        if *a.last().unwrap() != 1.0 {
            return Err(("flow", "amplitude", "must end at 1".into()));
        }
        for &amp in a {
            let params = WaveParams::new(p.m, p.c, p.delta[0], p.half_length[0], p.pin_mass, &flow.scaled(amp))
                .map_err(|e| ("params", "c", e.to_string()))?;
            validate_speed(&params, 0.0).map_err(|e| ("params", "c", e.to_string()))?;
        }
        if let Some(nx) = &self.grid.nx {
            if nx.len() != p.half_length.len() {
                return Err(("grid", "nx", format!("needs one entry per half_length ({})", p.half_length.len())));
            }
            if nx.iter().any(|n| *n < 8) {
                return Err(("grid", "nx", "entries must be at least 8".into()));
            }
        }
        if self.grid.ny < 4 || self.grid.ny % 2 != 0 {
            return Err(("grid", "ny", format!("must be even and at least 4, got {}", self.grid.ny)));
        }
        let t = &self.tolerances;
        for (key, v) in [
            ("newton", t.newton),
            ("linear", t.linear),
            ("quadrature", t.quadrature),
            ("jacobian", t.jacobian),
            ("sandwich", t.sandwich),
            ("monotone", t.monotone),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(("tolerances", key, format!("must be positive, got {v}")));
            }
        }
        if !(self.continuation.jacobian_step > 0.0) {
            return Err(("continuation", "jacobian_step", "must be positive".into()));
        }
        let an = &self.analysis;
        if let Some(levels) = &an.levels {
            if levels.len() < 2 || levels.windows(2).any(|w| !(w[1] < w[0])) || levels.iter().any(|l| !(*l > 0.0)) {
                return Err(("analysis", "levels", "need at least two positive, strictly decreasing levels".into()));
            }
        }
        for (key, w) in [("expansion_window", an.expansion_window), ("oscillation_window", an.oscillation_window)] {
            if let Some([lo, hi]) = w {
                if !(lo > 0.0 && hi > lo) {
                    return Err(("analysis", key, format!("needs 0 < lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if an.blow_down.iter().any(|e| !(*e > 0.0)) {
            return Err(("analysis", "blow_down", "entries must be positive".into()));
        }
        let pc = &self.verify.planar;
        check_exponent(pc.m).map_err(|e| ("verify.planar", "m", e.to_string()))?;
        if !(pc.c > 0.0 && pc.delta > 0.0 && pc.half_length > 0.0 && pc.pin_mass > 0.0) {
            return Err(("verify.planar", "c", "c, delta, half_length and pin_mass must be positive".into()));
        }
        if self.verify.coarsen < 1 {
            return Err(("verify", "coarsen", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn base_flow(&self) -> Result<FlowProfile, String> {
        FlowProfile::new(&self.flow.cos, &self.flow.sin).map_err(|e| e.to_string())
    }

    pub fn nx_for(&self, k: usize) -> usize {
        match &self.grid.nx {
            Some(nx) => nx[k],
            None => (8.0 * self.params.half_length[k]).round() as usize,
        }
    }

    /// The continuation schedule for `order`, with every nx divided by `coarsen`.
    pub fn stages(&self, order: PathOrder, coarsen: usize) -> Vec<Stage> {
        let p = &self.params;
        let amps = &self.flow.amplitude;
        let ls = &p.half_length;
        let (d0, d_end) = (p.delta[0], *p.delta.last().unwrap());
        let lk = ls.len() - 1;
        let ny = self.grid.ny;
        let st = |a: f64, d: f64, k: usize| Stage {
            amplitude: a,
            delta: d,
            half_length: ls[k],
            nx: self.nx_for(k) / coarsen,
            ny,
        };
        let mut out = Vec::new();
        match order {
            PathOrder::AmplitudeFirst => {
                out.extend(amps.iter().map(|&a| st(a, d0, 0)));
                out.extend((1..ls.len()).map(|k| st(1.0, d0, k)));
                out.extend(p.delta[1..].iter().map(|&d| st(1.0, d, lk)));
            }
            PathOrder::DeltaFirst => {
                let a0 = amps[0];
                out.extend((0..ls.len()).map(|k| st(a0, d0, k)));
                out.extend(p.delta[1..].iter().map(|&d| st(a0, d, lk)));
                out.extend(amps[1..].iter().map(|&a| st(a, d_end, lk)));
            }
        }
        out
    }

    pub fn plan(&self, order: PathOrder, coarsen: usize) -> Result<ContinuationPlan, String> {
        let mut plan = ContinuationPlan::new(self.params.m, self.params.c, self.base_flow()?, self.params.pin_mass, self.stages(order, coarsen));
        plan.barrier = BarrierOptions {
            left_weight: self.params.left_weight,
            strict_shift: 0.0,
        };
        plan.newton = self.newton_options();
        plan.jacobian_directions = self.continuation.jacobian_directions;
        plan.jacobian_step = self.continuation.jacobian_step;
        plan.seed = self.seed;
        plan.max_halvings = self.continuation.max_halvings;
        Ok(plan)
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tolerance: self.tolerances.newton,
            linear_tolerance: self.tolerances.linear,
            max_iterations: self.continuation.max_iterations,
            transient_steps: self.continuation.transient_steps,
            ..NewtonOptions::default()
        }
    }
}

fn strictly(v: &[f64], increasing: bool) -> Result<(), String> {
    if v.is_empty() {
        return Err("must not be empty".into());
    }
    let ok = v.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if ok {
        Ok(())
    } else {
        Err(format!("must be strictly {}", if increasing { "increasing" } else { "decreasing" }))
    }
}
