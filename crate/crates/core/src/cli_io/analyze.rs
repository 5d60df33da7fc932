//! Post-processing of a converged continuation run.

use super::config::RunConfig;
use crate::flowfield::{FlowProfile, WaveParams};
use crate::grid_field::ScalarField2D;
use crate::newton_solver::{JacobianCheck, SolveReport, Stage, StageResult, WaveProblem};
use crate::wave_analysis::{
    expansion_fit, fit_oscillation, flux_invariant, fourier_bound, free_boundary_extract, interface_band, monotonicity_report,
    oscillation_mass_constant, oscillation_profile, pin_translate, planar_limit_check, AnalysisError, ExpansionFit,
    FourierBound, FreeBoundaryCurve, MonotonicityReport, OscillationProfile, Pinned, PlanarLimitReport, PowerFit,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Per-stage solver summary kept in reports and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub intermediate: bool,
    pub stage: Stage,
    pub c1: f64,
    pub right_value: f64,
    pub converged: bool,
    pub newton_iters: usize,
    pub transient_steps: usize,
    pub final_residual_norm: f64,
    pub tolerance: f64,
    pub min_px: f64,
    pub max_px: f64,
    pub sandwich_violation: f64,
    pub jacobian_error: Option<f64>,
    pub warnings: Vec<String>,
    /// sha256 of the solve report without its wall-clock entries.
    pub digest: String,
    /// Seconds; excluded from `report.json`.
    #[serde(skip)]
    pub wall_time: f64,
}

pub fn report_digest(report: &SolveReport) -> String {
    let mut r = report.clone();
    r.wall_time.clear();
    let bytes = serde_json::to_vec(&r).expect("solve report serializes");
    hex::encode(Sha256::digest(bytes))
}

impl StageSummary {
    pub fn new(index: usize, intermediate: bool, stage: Stage, problem: &WaveProblem, report: &SolveReport, jacobian: Option<JacobianCheck>) -> Self {
        Self {
            index,
            intermediate,
            stage,
            c1: problem.params.c1(),
            right_value: problem.right_value(),
            converged: report.converged,
            newton_iters: report.newton_iters,
            transient_steps: report.transient_trace.len(),
            final_residual_norm: report.final_residual_norm,
            tolerance: report.tolerance,
            min_px: report.min_px,
            max_px: report.max_px,
            sandwich_violation: report.sandwich_violation,
            jacobian_error: jacobian.map(|j| j.max_relative_error),
            warnings: report.warnings.clone(),
            digest: report_digest(report),
            wall_time: report.wall_time.iter().sum(),
        }
    }

    pub fn from_result(r: &StageResult) -> Self {
        Self::new(r.index, r.intermediate, r.stage, &r.problem, &r.report, r.jacobian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinSummary {
    pub mass: f64,
    /// Grid coordinate of the pinning line.
    pub x_star: f64,
    pub k1: f64,
    pub k2: f64,
    /// Pinned coordinate range of the data.
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSummary {
    pub drift: f64,
    pub c_delta: f64,
    pub normalized: f64,
    pub scale: f64,
    /// `5 h² · scale`.
    pub bound: f64,
    pub nodal_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationSummary {
    /// Pinned coordinate of the origin used for distances.
    pub origin: f64,
    pub window: (f64, f64),
    pub max_o: f64,
    pub fit: Option<PowerFit>,
    pub fit_error: Option<String>,
    /// `max O/√⟨p⟩` on `[1, x_max]`.
    pub mass_constant: f64,
    pub lipschitz: f64,
    pub fourier: Option<FourierBound>,
    #[serde(skip)]
    pub profile: Option<OscillationProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldAnalysis {
    pub stage: Stage,
    pub c0: f64,
    pub c1: f64,
    pub hx: f64,
    pub right_value: f64,
    pub pin: PinSummary,
    pub monotonicity: MonotonicityReport,
    pub flux: FluxSummary,
    /// Mean `p_x` over the rightmost tenth of the pinned domain.
    pub right_slope: f64,
    pub oscillation: OscillationSummary,
    pub expansion: Option<ExpansionFit>,
    pub expansion_error: Option<String>,
    pub band: (f64, f64),
    pub boundary: Option<FreeBoundaryCurve>,
    pub boundary_error: Option<String>,
    pub planar_limit: PlanarLimitReport,
}

/// One δ-level of the final (amplitude, L, grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub delta: f64,
    pub c_delta: f64,
    pub normalized: f64,
    pub drift: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub stages: Vec<StageSummary>,
    pub ladder: Vec<LadderEntry>,
    pub finest: FieldAnalysis,
}

/// Options resolved from the config for one field.
#[derive(Debug, Clone)]
pub struct AnalysisSettings {
    pub levels: Option<Vec<f64>>,
    pub expansion_window: Option<(f64, f64)>,
    pub oscillation_window: Option<(f64, f64)>,
    pub fourier_lines: usize,
    pub fourier_modes: usize,
    pub blow_down: Vec<f64>,
}

impl AnalysisSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let a = &cfg.analysis;
        Self {
            levels: a.levels.clone(),
            expansion_window: a.expansion_window.map(|[lo, hi]| (lo, hi)),
            oscillation_window: a.oscillation_window.map(|[lo, hi]| (lo, hi)),
            fourier_lines: a.fourier_lines,
            fourier_modes: a.fourier_modes,
            blow_down: a.blow_down.clone(),
        }
    }
}

pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Everything measured on one converged field. `previous` is the same
/// problem at the preceding δ, used for the level-curve δ-spread.
#[allow(clippy::too_many_arguments)]
pub fn analyze_field(
    m: f64,
    c: f64,
    pin_mass: f64,
    flow: &FlowProfile,
    stage: &Stage,
    field: &ScalarField2D,
    previous: Option<&ScalarField2D>,
    settings: &AnalysisSettings,
) -> Result<FieldAnalysis, AnalysisError> {
    let params = WaveParams::new(m, c, stage.delta, stage.half_length, pin_mass, flow)
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let g = *field.grid();
    let hx = g.hx();
    let right_value = field.line_mean(g.nx - 1);
    let pinned = pin_translate(field, pin_mass)?;
    let (lo, hi) = pinned.range();
    let flux = flux_invariant(field, flow, &params)?;
    let means: Vec<f64> = (0..g.nx).map(|i| field.line_mean(i)).collect();
    let i0 = pinned.xis().iter().position(|&xi| xi >= hi - 0.1 * (hi - lo)).unwrap_or(0).min(g.nx - 2);
    let right_slope = (means[g.nx - 1] - means[i0]) / (g.x(g.nx - 1) - g.x(i0));

    let guess = -pin_mass / c;
    let x_right = |origin: f64| hi - origin;
    let exp_window = settings.expansion_window.unwrap_or_else(|| {
        let span = x_right(guess);
        (0.35 * span, 0.85 * span)
    });
    let (expansion, expansion_error) = match expansion_fit(&pinned, c, m, exp_window) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let origin = expansion.as_ref().map_or(guess, |e| e.origin);

    let span = x_right(origin);
    let osc_window = settings.oscillation_window.unwrap_or(((span - 1.0) / 10.0, span - 1.0));
    let lines = geometric(osc_window.0, osc_window.1, settings.fourier_lines);
    let profile = oscillation_profile(field, m, pinned.x_star + origin, None, &lines, settings.fourier_modes)?;
    let max_o = profile.o.iter().cloned().fold(0.0, f64::max);
    let (fit, fit_error) = if max_o <= 1e-12 * right_value {
        (None, Some("oscillation vanishes to rounding".to_string()))
    } else {
        match fit_oscillation(&profile, osc_window) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let fourier = if fit.is_some() { fourier_bound(&profile.fourier, m).ok() } else { None };
    let oscillation = OscillationSummary {
        origin,
        window: osc_window,
        max_o,
        fit,
        fit_error,
        mass_constant: oscillation_mass_constant(&profile, (1.0, span)),
        lipschitz: profile.lipschitz(),
        fourier,
        profile: Some(profile),
    };

    let levels = settings.levels.clone().unwrap_or_else(|| [8.0, 4.0, 2.0].iter().map(|k| k * c * hx).collect());
    let prev_pinned = previous.map(|p| pin_translate(p, pin_mass)).transpose()?;
    let mut list: Vec<(&Pinned, f64)> = Vec::new();
    if let Some(pp) = &prev_pinned {
        list.push((pp, stage.delta));
    }
    list.push((&pinned, stage.delta));
    let (boundary, boundary_error) = match free_boundary_extract(&list, &levels, c) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };

    Ok(FieldAnalysis {
        stage: *stage,
        c0: params.c0(),
        c1: params.c1(),
        hx,
        right_value,
        pin: PinSummary {
            mass: pin_mass,
            x_star: pinned.x_star,
            k1: pinned.k1,
            k2: pinned.k2,
            range: (lo, hi),
        },
        monotonicity: monotonicity_report(field, 2.0 * stage.delta),
        flux: FluxSummary {
            drift: flux.drift,
            c_delta: flux.c_delta,
            normalized: flux.normalized,
            scale: flux.scale,
            bound: 5.0 * hx * hx * flux.scale,
            nodal_drift: flux.nodal_drift,
        },
        right_slope,
        oscillation,
        expansion,
        expansion_error,
        band: interface_band(pinned.k1, pinned.k2, params.c0(), params.c1()),
        boundary,
        boundary_error,
        planar_limit: planar_limit_check(&pinned, &settings.blow_down, c),
    })
}

/// A converged stage as stored on disk or held in memory.
#[derive(Debug, Clone)]
pub struct StageField {
    pub summary: StageSummary,
    pub field: ScalarField2D,
}

/// Analyzes the last stage in full and the δ-ladder of the final
/// (amplitude, L, grid) through flux invariants.
pub fn analyze_run(cfg: &RunConfig, stages: &[StageField]) -> Result<RunAnalysis, AnalysisError> {
    let last = stages.last().ok_or_else(|| AnalysisError::Invalid("no converged stages".into()))?;
    let flow = cfg.base_flow().map_err(AnalysisError::Invalid)?;
    let final_stage = last.summary.stage;
    let same = |s: &Stage| s.amplitude == final_stage.amplitude && s.half_length == final_stage.half_length && s.nx == final_stage.nx && s.ny == final_stage.ny;
    let ladder_fields: Vec<&StageField> = stages.iter().filter(|s| same(&s.summary.stage)).collect();
    let mut ladder = Vec::new();
    for sf in &ladder_fields {
        let st = sf.summary.stage;
        let f = flow.scaled(st.amplitude);
        let params = WaveParams::new(cfg.params.m, cfg.params.c, st.delta, st.half_length, cfg.params.pin_mass, &f)
            .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        let fi = flux_invariant(&sf.field, &f, &params)?;
        let hx = sf.field.grid().hx();
        ladder.push(LadderEntry {
            delta: st.delta,
            c_delta: fi.c_delta,
            normalized: fi.normalized,
            drift: fi.drift,
            bound: 5.0 * hx * hx * fi.scale,
        });
    }
    let previous = (ladder_fields.len() >= 2).then(|| &ladder_fields[ladder_fields.len() - 2].field);
    let finest = analyze_field(
        cfg.params.m,
        cfg.params.c,
        cfg.params.pin_mass,
        &flow.scaled(final_stage.amplitude),
        &final_stage,
        &last.field,
        previous,
        &AnalysisSettings::from_config(cfg),
    )?;
    Ok(RunAnalysis {
        stages: stages.iter().map(|s| s.summary.clone()).collect(),
        ladder,
        finest,
    })
}
