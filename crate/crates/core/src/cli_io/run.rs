//! The subcommands.

use super::analyze::{analyze_field, analyze_run, AnalysisSettings, StageField, StageSummary};
use super::config::RunConfig;
use super::output::{export_plots, field_csv, write_analysis, OutputDir};
use super::verify::verify_suite;
use super::RunError;
use crate::grid_field::{Boundary, Grid, ScalarField2D};
use crate::newton_solver::{continuation_from, jacobian_check, solve_truncated, ContinuationEvent, Resume, SolverError, Stage};
use crate::planar_ode::barrier_pair_with;
use serde::{Deserialize, Serialize};
use std::io::BufReader;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Barrier profiles and boundary data for every δ of the schedule.
    Planar,
    /// One truncated solve at full flow amplitude, first δ and L.
    Solve,
    /// The full continuation with checkpoints, then the analysis.
    Continue,
    /// Re-analyzes the stage fields stored by `continue`.
    Analyze,
    /// The acceptance suite.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Planar => "planar",
            Command::Solve => "solve",
            Command::Continue => "continue",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Checkpoint to resume `continue` from.
    pub resume: Option<PathBuf>,
    /// Stop `continue` after this many scheduled stages (testing resumes).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// 0: success (possibly with warnings), 1: an invariant failed.
    pub exit_code: i32,
    pub lines: Vec<String>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredStage {
    pub file: String,
    pub summary: StageSummary,
}

/// State after an accepted scheduled stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub next: usize,
    pub stage: Stage,
    pub grid: Grid,
    pub boundary: Boundary,
    pub values: Vec<f64>,
    pub path: Vec<(f64, f64, f64)>,
    pub stored: Vec<StoredStage>,
}

pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let root = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = OutputDir::create(&root, cmd.name(), cfg)?;
    out.flush_manifest()?;
    let (exit_code, lines) = match cmd {
        Command::Planar => planar(cfg, &mut out)?,
        Command::Solve => solve(cfg, &mut out)?,
        Command::Continue => continue_run(cfg, opts, &mut out)?,
        Command::Analyze => analyze(cfg, &mut out)?,
        Command::Verify => verify(cfg, &mut out)?,
    };
    let interrupted = lines.iter().any(|l| l.starts_with("stopped"));
    if interrupted {
        out.flush_manifest()?;
    } else {
        out.finish()?;
    }
    Ok(RunOutcome {
        exit_code,
        lines,
        out_dir: root,
    })
}

/// Exit status from solver summaries: hard invariants fail, sandwich breaches warn.
fn judge(cfg: &RunConfig, stages: &[StageSummary], lines: &mut Vec<String>) -> i32 {
    let t = &cfg.tolerances;
    let mut code = 0;
    for s in stages {
        let tag = format!("stage {} (a={}, δ={:e}, L={})", s.index, s.stage.amplitude, s.stage.delta, s.stage.half_length);
        if !s.converged {
            lines.push(format!("error: {tag} did not converge"));
            code = 1;
        }
        if s.min_px < -t.monotone || s.max_px > s.c1 + 1e-6 {
            lines.push(format!("error: {tag} monotonicity: p_x ∈ [{:e}, {:e}], c1 = {}", s.min_px, s.max_px, s.c1));
            code = 1;
        }
        if s.jacobian_error.is_some_and(|e| e > t.jacobian) {
            lines.push(format!("error: {tag} Jacobian check {:e}", s.jacobian_error.unwrap()));
            code = 1;
        }
        if s.sandwich_violation > t.sandwich * s.right_value {
            lines.push(format!("warning: {tag} sandwich violation {:e}", s.sandwich_violation));
        }
    }
    code
}

fn planar(cfg: &RunConfig, out: &mut OutputDir) -> Result<(i32, Vec<String>), RunError> {
    #[derive(Serialize)]
    struct Entry {
        delta: f64,
        half_length: f64,
        c0: f64,
        c1: f64,
        left_value: f64,
        right_value: f64,
        flux_plus: f64,
        flux_minus: f64,
        file: String,
    }
    let flow = cfg.base_flow().map_err(RunError::Invalid)?;
    let p = &cfg.params;
    let l = *p.half_length.last().unwrap();
    let nx = cfg.nx_for(p.half_length.len() - 1);
    let grid = Grid::new(nx, cfg.grid.ny, l)?;
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for (k, &delta) in p.delta.iter().enumerate() {
        let params = crate::flowfield::WaveParams::new(p.m, p.c, delta, l, p.pin_mass, &flow)?;
        let bp = barrier_pair_with(&params, cfg.plan(cfg.continuation.order, 1).map_err(RunError::Invalid)?.barrier)?;
        let mut s = String::from("x,p_minus,p_plus\n");
        for x in grid.xs() {
            s.push_str(&format!("{x:.16e},{:.16e},{:.16e}\n", bp.minus.value(x), bp.plus.value(x)));
        }
        let file = format!("planar/delta_{k:02}.csv");
        out.write(&file, s.as_bytes())?;
        lines.push(format!("δ = {delta:e}: A = {:.6e}, B = {:.6}", bp.left_value, bp.right_value));
        entries.push(Entry {
            delta,
            half_length: l,
            c0: params.c0(),
            c1: params.c1(),
            left_value: bp.left_value,
            right_value: bp.right_value,
            flux_plus: bp.plus.flux_constant(),
            flux_minus: bp.minus.flux_constant(),
            file,
        });
    }
    out.write_json("report.json", &entries)?;
    Ok((0, lines))
}

fn solve(cfg: &RunConfig, out: &mut OutputDir) -> Result<(i32, Vec<String>), RunError> {
    let plan = cfg.plan(cfg.continuation.order, 1).map_err(RunError::Invalid)?;
    let p = &cfg.params;
    let stage = Stage {
        amplitude: 1.0,
        delta: p.delta[0],
        half_length: p.half_length[0],
        nx: cfg.nx_for(0),
        ny: cfg.grid.ny,
    };
    let problem = plan.problem(&stage)?;
    let (field, report) = solve_truncated(&problem, problem.initial_guess(), &plan.newton)?;
    let jac = jacobian_check(&problem, &field, plan.jacobian_directions, plan.jacobian_step, plan.seed)?;
    let summary = StageSummary::new(0, false, stage, &problem, &report, Some(jac));
    out.record_stage(&summary);
    out.write("field.csv", &field_csv(&field))?;
    let analysis = analyze_field(p.m, p.c, p.pin_mass, &problem.flow, &stage, &field, None, &AnalysisSettings::from_config(cfg))?;
    write_analysis(out, &analysis)?;
    export_plots(out, &problem.barriers, &field, &analysis)?;
    #[derive(Serialize)]
    struct Report<'a> {
        summary: &'a StageSummary,
        analysis: &'a super::analyze::FieldAnalysis,
    }
    out.write_json("report.json", &Report { summary: &summary, analysis: &analysis })?;
    let mut lines = vec![format!(
        "converged in {} iterations, ‖Φ‖∞ = {:e}, x* = {:.6}",
        summary.newton_iters, summary.final_residual_norm, analysis.pin.x_star
    )];
    let code = judge(cfg, std::slice::from_ref(&summary), &mut lines);
    Ok((code, lines))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, RunError> {
    let f = std::fs::File::open(path).map_err(|e| RunError::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| RunError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn continue_run(cfg: &RunConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<(i32, Vec<String>), RunError> {
    let plan = cfg.plan(cfg.continuation.order, 1).map_err(RunError::Invalid)?;
    let (start, resume, mut stored) = match &opts.resume {
        Some(path) => {
            let ck = read_checkpoint(path)?;
            let field = ScalarField2D::new(ck.grid, ck.values, ck.boundary)?;
            (
                ck.next,
                Some(Resume {
                    stage: ck.stage,
                    field,
                    path: ck.path,
                }),
                ck.stored,
            )
        }
        None => (0, None, Vec::new()),
    };
    let mut fields: Vec<StageField> = Vec::new();
    let mut stopped = false;
    let mut scheduled_done = 0usize;
    let mut io_error: Option<RunError> = None;
    let result = continuation_from(&plan, start, resume, |e| {
        match e {
            ContinuationEvent::Accepted(r) => {
                let summary = StageSummary::from_result(r);
                log::info!("accepted stage {} a={} δ={:e} L={} ({} its)", r.index, r.stage.amplitude, r.stage.delta, r.stage.half_length, r.report.newton_iters);
                let file = format!("fields/stage_{:03}.csv", stored.len());
                let step = (|| -> Result<(), RunError> {
                    out.write(&file, &field_csv(&r.field))?;
                    out.record_stage(&summary);
                    stored.push(StoredStage { file, summary: summary.clone() });
                    out.write_json("stages.json", &stored)?;
                    if !r.intermediate {
                        let ck = Checkpoint {
                            next: r.index + 1,
                            stage: r.stage,
                            grid: *r.field.grid(),
                            boundary: r.field.boundary(),
                            values: r.field.values().to_vec(),
                            path: r.report.path.clone(),
                            stored: stored.clone(),
                        };
                        out.write_json(&format!("checkpoints/stage_{:02}.json", r.index), &ck)?;
                    }
                    out.flush_manifest()
                })();
                if let Err(err) = step {
                    io_error = Some(err);
                    return Err(SolverError::Invalid("output failed".into()));
                }
                fields.push(StageField { summary, field: r.field.clone() });
                if !r.intermediate {
                    scheduled_done += 1;
                    if opts.stop_after.is_some_and(|n| scheduled_done >= n) && r.index + 1 < plan.stages.len() {
                        stopped = true;
                        return Err(SolverError::Invalid("stop requested".into()));
                    }
                }
            }
            ContinuationEvent::Halving { to, reason, .. } => log::warn!("halving to {to:?}: {reason}"),
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    if stopped {
        return Ok((0, vec![format!("stopped after {scheduled_done} scheduled stages; resume from the latest checkpoint")]));
    }
    result?;
    finish_analysis(cfg, out, &stored)
}

fn load_stored(out: &OutputDir, stored: &[StoredStage]) -> Result<Vec<StageField>, RunError> {
    stored
        .iter()
        .map(|s| {
            let path = out.path(&s.file);
            let f = std::fs::File::open(&path).map_err(|e| RunError::io(&path, e))?;
            let field = ScalarField2D::read_csv(BufReader::new(f)).map_err(|e| RunError::Input {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Ok(StageField {
                summary: s.summary.clone(),
                field,
            })
        })
        .collect()
}

fn finish_analysis(cfg: &RunConfig, out: &mut OutputDir, stored: &[StoredStage]) -> Result<(i32, Vec<String>), RunError> {
    let fields = load_stored(out, stored)?;
    let analysis = analyze_run(cfg, &fields)?;
    let last = fields.last().unwrap();
    let plan = cfg.plan(cfg.continuation.order, 1).map_err(RunError::Invalid)?;
    let problem = plan.problem(&last.summary.stage)?;
    write_analysis(out, &analysis.finest)?;
    export_plots(out, &problem.barriers, &last.field, &analysis.finest)?;
    out.write("field.csv", &field_csv(&last.field))?;
    out.write_json("report.json", &analysis)?;
    let f = &analysis.finest;
    let mut lines = vec![format!(
        "{} stages; final δ = {:e}, L = {}; x* = {:.6}, K1 = {:.4}, K2 = {:.4}",
        analysis.stages.len(),
        f.stage.delta,
        f.stage.half_length,
        f.pin.x_star,
        f.pin.k1,
        f.pin.k2
    )];
    let code = judge(cfg, &analysis.stages, &mut lines);
    Ok((code, lines))
}

fn analyze(cfg: &RunConfig, out: &mut OutputDir) -> Result<(i32, Vec<String>), RunError> {
    let index = out.path("stages.json");
    let f = std::fs::File::open(&index).map_err(|e| RunError::io(&index, e))?;
    let stored: Vec<StoredStage> = serde_json::from_reader(BufReader::new(f)).map_err(|e| RunError::Input {
        path: index.display().to_string(),
        message: e.to_string(),
    })?;
    if stored.is_empty() {
        return Err(RunError::Input {
            path: index.display().to_string(),
            message: "no stages recorded".into(),
        });
    }
    finish_analysis(cfg, out, &stored)
}

fn verify(cfg: &RunConfig, out: &mut OutputDir) -> Result<(i32, Vec<String>), RunError> {
    let outcome = verify_suite(cfg)?;
    for s in &outcome.report.primary.stages {
        out.record_stage(s);
    }
    out.manifest.timings = outcome.timings.clone();
    out.write("planar_field.csv", &field_csv(&outcome.planar_field))?;
    if let Some(last) = outcome.primary_fields.last() {
        out.write("field.csv", &field_csv(&last.field))?;
        let plan = cfg.plan(cfg.continuation.order, 1).map_err(RunError::Invalid)?;
        let problem = plan.problem(&last.summary.stage)?;
        write_analysis(out, &outcome.report.primary.finest)?;
        export_plots(out, &problem.barriers, &last.field, &outcome.report.primary.finest)?;
    }
    out.write_json("report.json", &outcome.report)?;
    let lines: Vec<String> = outcome.report.criteria.iter().map(|c| c.line()).collect();
    Ok((if outcome.report.failed() { 1 } else { 0 }, lines))
}
