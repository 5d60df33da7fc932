//! Stage-by-stage continuation with warm starts and step halving.

use super::interp::MonotoneCubic;
use super::{jacobian_check, solve_truncated, JacobianCheck, NewtonOptions, SolveReport, SolverError, WaveProblem};
use crate::flowfield::{FlowProfile, WaveParams};
use crate::grid_field::{Grid, ScalarField2D};
use crate::planar_ode::BarrierOptions;
use serde::{Deserialize, Serialize};

/// One point of a continuation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Multiplier on the base flow.
    pub amplitude: f64,
    pub delta: f64,
    pub half_length: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Stage {
    fn midpoint(&self, to: &Stage) -> Stage {
        let half_length = 0.5 * (self.half_length + to.half_length);
        let nx = if self.half_length == to.half_length {
            (self.nx + to.nx) / 2
        } else {
            let hx = 2.0 * to.half_length / (to.nx - 1) as f64;
            (2.0 * half_length / hx).round() as usize + 1
        };
        Stage {
            amplitude: 0.5 * (self.amplitude + to.amplitude),
            delta: (self.delta * to.delta).sqrt(),
            half_length,
            nx,
            ny: to.ny,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPlan {
    pub m: f64,
    pub c: f64,
    pub base_flow: FlowProfile,
    pub pin_mass: f64,
    pub stages: Vec<Stage>,
    pub barrier: BarrierOptions,
    pub newton: NewtonOptions,
    /// Random directions for the Jacobian spot check at every accepted stage.
    pub jacobian_directions: usize,
    pub jacobian_step: f64,
    pub seed: u64,
    pub max_halvings: usize,
}

impl ContinuationPlan {
    pub fn new(m: f64, c: f64, base_flow: FlowProfile, pin_mass: f64, stages: Vec<Stage>) -> Self {
        Self {
            m,
            c,
            base_flow,
            pin_mass,
            stages,
            barrier: BarrierOptions::default(),
            newton: NewtonOptions::default(),
            jacobian_directions: 3,
            jacobian_step: 1e-6,
            seed: 0,
            max_halvings: 8,
        }
    }

    pub fn problem(&self, stage: &Stage) -> Result<WaveProblem, SolverError> {
        let flow = self.base_flow.scaled(stage.amplitude);
        let params = WaveParams::new(self.m, self.c, stage.delta, stage.half_length, self.pin_mass, &flow)?;
        let grid = Grid::new(stage.nx, stage.ny, stage.half_length)?;
        WaveProblem::new(params, flow, grid, self.barrier)
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    /// Index of the scheduled stage this result belongs to.
    pub index: usize,
    /// True for stages inserted by step halving.
    pub intermediate: bool,
    pub stage: Stage,
    pub problem: WaveProblem,
    pub field: ScalarField2D,
    pub report: SolveReport,
    pub jacobian: Option<JacobianCheck>,
}

pub enum ContinuationEvent<'a> {
    Accepted(&'a StageResult),
    Halving { from: Stage, to: Stage, reason: String },
}

pub fn continuation<F>(plan: &ContinuationPlan, on_event: F) -> Result<Vec<StageResult>, SolverError>
where
    F: FnMut(ContinuationEvent<'_>) -> Result<(), SolverError>,
{
    continuation_from(plan, 0, None, on_event)
}

/// A previously accepted stage to continue from.
#[derive(Debug, Clone)]
pub struct Resume {
    pub stage: Stage,
    pub field: ScalarField2D,
    /// `(amplitude, δ, L)` of the stages that led to it.
    pub path: Vec<(f64, f64, f64)>,
}

/// Runs `plan.stages[start..]`, warm-starting from `resume` when given.
/// Results are identical to an uninterrupted run through the same stages.
pub fn continuation_from<F>(
    plan: &ContinuationPlan,
    start: usize,
    resume: Option<Resume>,
    mut on_event: F,
) -> Result<Vec<StageResult>, SolverError>
where
    F: FnMut(ContinuationEvent<'_>) -> Result<(), SolverError>,
{
    let mut results: Vec<StageResult> = Vec::new();
    let (mut current, mut path): (Option<(Stage, WaveProblem, ScalarField2D)>, Vec<(f64, f64, f64)>) = match resume {
        Some(r) => {
            let problem = plan.problem(&r.stage)?;
            (Some((r.stage, problem, r.field)), r.path)
        }
        None => (None, Vec::new()),
    };
    for (index, target) in plan.stages.iter().enumerate().skip(start) {
        let mut goal = *target;
        let mut halvings = 0;
        let mut accepted_here = 0u64;
        loop {
            let attempt = attempt_stage(plan, current.as_ref(), &goal);
            match attempt {
                Ok((problem, field, mut report)) => {
                    let jacobian = if plan.jacobian_directions > 0 {
                        Some(jacobian_check(
                            &problem,
                            &field,
                            plan.jacobian_directions,
                            plan.jacobian_step,
                            // independent of where a resumed run started
                            plan.seed.wrapping_add(((index as u64) << 16) + accepted_here),
                        )?)
                    } else {
                        None
                    };
                    path.push((goal.amplitude, goal.delta, goal.half_length));
                    report.path = path.clone();
                    let result = StageResult {
                        index,
                        intermediate: goal != *target,
                        stage: goal,
                        problem: problem.clone(),
                        field: field.clone(),
                        report,
                        jacobian,
                    };
                    log::info!(
                        "stage {index}{}: a={} δ={:e} L={} {}×{} in {} its, ‖Φ‖∞={:e}",
                        if result.intermediate { " (intermediate)" } else { "" },
                        goal.amplitude,
                        goal.delta,
                        goal.half_length,
                        goal.nx,
                        goal.ny,
                        result.report.newton_iters,
                        result.report.final_residual_norm
                    );
                    on_event(ContinuationEvent::Accepted(&result))?;
                    results.push(result);
                    accepted_here += 1;
                    current = Some((goal, problem, field));
                    if goal == *target {
                        break;
                    }
                    goal = *target;
                    halvings = 0;
                }
                Err(err) => {
                    halvings += 1;
                    if halvings > plan.max_halvings {
                        return Err(SolverError::ContinuationAborted {
                            stage: goal,
                            halvings: halvings - 1,
                            cause: Box::new(err),
                        });
                    }
                    let from = match &current {
                        Some((s, _, _)) => *s,
                        // nothing accepted yet: the flow-free problem is solved
                        // exactly by the planar barrier
                        None => Stage { amplitude: 0.0, ..goal },
                    };
                    if current.is_none() && from == goal {
                        return Err(err);
                    }
                    if current.is_none() {
                        let problem = plan.problem(&from)?;
                        let (field, _) = solve_truncated(&problem, problem.initial_guess(), &plan.newton)?;
                        current = Some((from, problem, field));
                    }
                    let mid = from.midpoint(&goal);
                    log::warn!("stage {index} failed ({err}); halving towards {mid:?}");
                    on_event(ContinuationEvent::Halving {
                        from,
                        to: mid,
                        reason: err.to_string(),
                    })?;
                    goal = mid;
                }
            }
        }
    }
    Ok(results)
}

fn attempt_stage(
    plan: &ContinuationPlan,
    current: Option<&(Stage, WaveProblem, ScalarField2D)>,
    goal: &Stage,
) -> Result<(WaveProblem, ScalarField2D, SolveReport), SolverError> {
    let problem = plan.problem(goal)?;
    let guess = match current {
        None => problem.initial_guess(),
        Some((_, prev, field)) => warm_start(prev, field, &problem),
    };
    let (field, report) = solve_truncated(&problem, guess, &plan.newton)?;
    Ok((problem, field, report))
}

/// Transfers a converged field to a neighbouring problem: shifts the left
/// tail to the new δ, re-grids (aligning the front) when the grid changes and
/// maps each x-line affinely onto the new Dirichlet data.
pub fn warm_start(prev: &WaveProblem, field: &ScalarField2D, next: &WaveProblem) -> ScalarField2D {
    let (d_old, d_new) = (prev.params.delta, next.params.delta);
    let shifted = field.map(|v| v - d_old + d_new);
    let moved = if prev.grid() == next.grid() {
        shifted
    } else {
        regrid(prev, &shifted, next)
    };
    let g = *next.grid();
    let (a, b) = (next.left_value(), next.right_value());
    let mut out = moved;
    for j in 0..g.ny {
        let (q0, q1) = (out.get(0, j), out.get(g.nx - 1, j));
        let gain = if q1 > q0 { (b - a) / (q1 - q0) } else { 1.0 };
        for i in 0..g.nx {
            let v = a + (out.get(i, j) - q0) * gain;
            out.set(i, j, v.max(0.5 * d_new));
        }
    }
    next.impose_boundary(out)
}

fn regrid(prev: &WaveProblem, field: &ScalarField2D, next: &WaveProblem) -> ScalarField2D {
    let (go, gn) = (*prev.grid(), *next.grid());
    let c = next.params.c;
    // mean profile ≈ c (x − x_f) near the right end, so x_f ≈ L − B/c
    let front_old = go.half_length - prev.right_value() / c;
    let front_new = gn.half_length - next.right_value() / c;
    let shift = front_new - front_old;
    let xs = go.xs();
    let lines: Vec<MonotoneCubic> = (0..go.ny)
        .map(|j| {
            let ys: Vec<f64> = (0..go.nx).map(|i| field.get(i, j)).collect();
            MonotoneCubic::new(&xs, &ys)
        })
        .collect();
    let eval = |x: f64, jo: usize| -> f64 {
        let xo = x - shift;
        if xo <= -go.half_length {
            field.get(0, jo)
        } else {
            lines[jo].eval(xo)
        }
    };
    ScalarField2D::from_fn(gn, |x, y| {
        if gn.ny == go.ny {
            let j = (y * go.ny as f64).round() as usize % go.ny;
            eval(x, j)
        } else {
            // periodic linear interpolation in y
            let t = y * go.ny as f64;
            let j0 = t.floor() as usize % go.ny;
            let w = t - t.floor();
            (1.0 - w) * eval(x, j0) + w * eval(x, (j0 + 1) % go.ny)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_schedule_starts_from_the_planar_oracle() {
        let flow = FlowProfile::new(&[0.1], &[0.2]).unwrap();
        let stages = [0.0, 0.5, 1.0]
            .iter()
            .map(|&a| Stage {
                amplitude: a,
                delta: 0.05,
                half_length: 6.0,
                nx: 64,
                ny: 8,
            })
            .collect();
        let plan = ContinuationPlan::new(2.0, 1.0, flow, 5.0, stages);
        let out = continuation(&plan, |e| {
            if let ContinuationEvent::Halving { reason, .. } = e {
                eprintln!("{reason}");
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.len(), 3);
        let first = &out[0];
        let oracle = first.problem.initial_guess();
        assert!(first.field.sup_distance(&oracle).unwrap() < 1e-8 * first.problem.right_value());
        for r in &out {
            assert!(r.report.converged);
            assert!(r.jacobian.unwrap().max_relative_error < 1e-5);
        }
        assert!(out[2].field.y_spread() > out[1].field.y_spread());
        assert_eq!(out[2].report.path.len(), 3);
    }

    #[test]
    fn l_and_delta_steps_warm_start() {
        let flow = FlowProfile::new(&[], &[0.2]).unwrap();
        let mk = |a: f64, d: f64, l: f64, nx: usize| Stage {
            amplitude: a,
            delta: d,
            half_length: l,
            nx,
            ny: 8,
        };
        let stages = vec![mk(1.0, 0.1, 4.0, 33), mk(1.0, 0.1, 8.0, 65), mk(1.0, 0.05, 8.0, 65), mk(1.0, 0.025, 8.0, 65)];
        let plan = ContinuationPlan::new(2.0, 1.0, flow, 3.0, stages);
        let mut events = 0;
        let out = continuation(&plan, |_| {
            events += 1;
            Ok(())
        })
        .unwrap();
        assert!(out.iter().filter(|r| !r.intermediate).count() == 4);
        assert!(events >= 4);
        for r in &out {
            assert!(r.report.min_px >= -1e-8);
        }
    }

    #[test]
    fn midpoint_stage() {
        let a = Stage {
            amplitude: 0.0,
            delta: 0.1,
            half_length: 8.0,
            nx: 65,
            ny: 16,
        };
        let b = Stage {
            amplitude: 1.0,
            delta: 0.001,
            half_length: 16.0,
            nx: 129,
            ny: 16,
        };
        let m = a.midpoint(&b);
        assert_eq!(m.amplitude, 0.5);
        assert!((m.delta - 0.01).abs() < 1e-15);
        assert_eq!(m.half_length, 12.0);
        assert_eq!(m.nx, 97);
    }
}
