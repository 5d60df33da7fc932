//! Damped Newton for the truncated-cylinder problem and continuation in flow
//! amplitude, δ and L.

mod banded;
mod continuation;
mod interp;

pub use banded::{BandError, BandLu, BandMatrix};
pub use continuation::{continuation, continuation_from, warm_start, ContinuationEvent, ContinuationPlan, Resume, Stage, StageResult};
pub use interp::{monotone_cubic, MonotoneCubic};

use crate::flowfield::{FlowError, FlowProfile, WaveParams};
use crate::grid_field::{Boundary, Grid, GridError, ScalarField2D, WaveOperator};
use crate::planar_ode::{barrier_pair_with, BarrierOptions, BarrierPair, PlanarError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Planar(#[from] PlanarError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("singular Jacobian at unknown {column} (min p = {min_p:e}; ellipticity lost?)")]
    Singular { column: usize, min_p: f64 },
    #[error("linear solve residual {achieved:e} above {required:e} (min p = {min_p:e})")]
    LinearResidual { achieved: f64, required: f64, min_p: f64 },
    #[error("line search failed at iteration {iteration}: ‖Φ‖∞ = {residual:e}")]
    LineSearch { iteration: usize, residual: f64, report: Box<SolveReport> },
    #[error("no convergence after {} iterations: ‖Φ‖∞ = {:e}", .report.newton_iters, .report.final_residual_norm)]
    NotConverged { report: Box<SolveReport> },
    #[error("continuation aborted at stage {stage:?} after {halvings} consecutive halvings: {cause}")]
    ContinuationAborted {
        stage: Stage,
        halvings: usize,
        cause: Box<SolverError>,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Truncated problem on `[−L, L] × T¹`: operator, barriers, Dirichlet data.
#[derive(Debug, Clone)]
pub struct WaveProblem {
    pub params: WaveParams,
    pub flow: FlowProfile,
    pub barriers: BarrierPair,
    operator: WaveOperator,
}

impl WaveProblem {
    pub fn new(params: WaveParams, flow: FlowProfile, grid: Grid, opts: BarrierOptions) -> Result<Self, SolverError> {
        if (grid.half_length - params.half_length).abs() > 1e-12 * params.half_length {
            return Err(SolverError::Invalid(format!(
                "grid half-length {} differs from L = {}",
                grid.half_length, params.half_length
            )));
        }
        let barriers = barrier_pair_with(&params, opts)?;
        let operator = WaveOperator::new(grid, &params, &flow);
        Ok(Self {
            params,
            flow,
            barriers,
            operator,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.operator.grid()
    }

    pub fn operator(&self) -> &WaveOperator {
        &self.operator
    }

    pub fn left_value(&self) -> f64 {
        self.barriers.left_value
    }

    pub fn right_value(&self) -> f64 {
        self.barriers.right_value
    }

    /// `p⁺` sampled on the grid with the Dirichlet data imposed.
    pub fn initial_guess(&self) -> ScalarField2D {
        let plus = &self.barriers.plus;
        ScalarField2D::from_fn(*self.grid(), |x, _| plus.value(x)).with_dirichlet(self.left_value(), self.right_value())
    }

    /// Imposes this problem's Dirichlet data on a field of the same grid.
    pub fn impose_boundary(&self, p: ScalarField2D) -> ScalarField2D {
        p.with_dirichlet(self.left_value(), self.right_value())
    }

    pub fn residual(&self, p: &ScalarField2D) -> Result<ScalarField2D, SolverError> {
        Ok(self.operator.residual(p)?)
    }

    pub fn jacobian(&self, p: &ScalarField2D) -> Result<JacobianMatrix, SolverError> {
        assemble(&self.operator, p)
    }

    pub fn tolerance(&self, opts: &NewtonOptions) -> f64 {
        opts.tolerance * self.params.c1() * self.params.c1()
    }
}

/// Linearization of Φ_h over the interior unknowns `k = (i−1)·Ny + j`.
///
/// The y-wrap couples `j = 0` with `j = Ny − 1` inside one x-line, so every
/// coupling fits in half-bandwidth `Ny`; no separate cyclic correction is needed.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    grid: Grid,
    band: BandMatrix,
}

impl JacobianMatrix {
    pub fn band(&self) -> &BandMatrix {
        &self.band
    }

    pub fn unknowns(&self) -> usize {
        self.band.n()
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.band.matvec(h)
    }

    /// Applies J to a full-grid direction (boundary entries ignored) and
    /// returns a full-grid result (zero on the boundary columns).
    pub fn apply_field(&self, h: &ScalarField2D) -> ScalarField2D {
        let g = self.grid;
        let out = self.band.matvec(&interior_of(h.values(), &g));
        ScalarField2D::new(g, scatter_interior(&out, &g), Boundary::Free).expect("finite")
    }

    pub fn max_row_nonzeros(&self) -> usize {
        (0..self.band.n()).map(|i| self.band.row_pattern(i).len()).max().unwrap_or(0)
    }

    /// `J + σ I`, the implicit-Euler matrix of the pseudo-transient fallback.
    pub fn shifted(&self, sigma: f64) -> JacobianMatrix {
        let mut band = self.band.clone();
        for k in 0..band.n() {
            band.add(k, k, sigma);
        }
        JacobianMatrix { grid: self.grid, band }
    }

    fn max_abs_diagonal(&self) -> f64 {
        (0..self.band.n()).fold(0.0, |a, k| a.max(self.band.get(k, k).abs()))
    }

    pub fn pattern_is_symmetric(&self) -> bool {
        let n = self.band.n();
        (0..n).all(|i| self.band.row_pattern(i).into_iter().all(|j| self.band.get(j, i) != 0.0))
    }
}

pub(crate) fn interior_of(values: &[f64], g: &Grid) -> Vec<f64> {
    values[g.ny..(g.nx - 1) * g.ny].to_vec()
}

pub(crate) fn scatter_interior(x: &[f64], g: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    out[g.ny..(g.nx - 1) * g.ny].copy_from_slice(x);
    out
}

fn assemble(op: &WaveOperator, p: &ScalarField2D) -> Result<JacobianMatrix, SolverError> {
    let g = *op.grid();
    let ev = op.evaluate(p)?;
    let (nx, ny, m) = (g.nx, g.ny, op.m());
    let n = (nx - 2) * ny;
    let mut band = BandMatrix::zeros(n, ny, ny);
    let hx = g.hx();
    let inv_hy2 = 1.0 / (g.hy() * g.hy());
    let vals = p.values();
    for i in 1..nx - 1 {
        for j in 0..ny {
            let k = g.index(i, j);
            let row = k - ny;
            let pk = vals[k];
            let scale = -m * pk.powf(1.0 - 1.0 / m);
            let east = ev.faces[k];
            let west = ev.faces[k - ny];
            let (ju, jd) = (g.up(j), g.down(j));
            let diag = scale * ((east.d_left - west.d_right) / hx - 2.0 * pk.powf(1.0 / m) * inv_hy2)
                - (m - 1.0) * pk.powf(-1.0 / m) * ev.divergence[k];
            band.add(row, row, diag);
            band.add(row, g.index(i, ju) - ny, scale * vals[g.index(i, ju)].powf(1.0 / m) * inv_hy2);
            band.add(row, g.index(i, jd) - ny, scale * vals[g.index(i, jd)].powf(1.0 / m) * inv_hy2);
            if i + 1 < nx - 1 {
                band.add(row, row + ny, scale * east.d_right / hx);
            }
            if i > 1 {
                band.add(row, row - ny, -scale * west.d_left / hx);
            }
        }
    }
    Ok(JacobianMatrix { grid: g, band })
}

pub fn assemble_jacobian(p: &ScalarField2D, flow: &FlowProfile, params: &WaveParams) -> Result<JacobianMatrix, SolverError> {
    assemble(&WaveOperator::new(*p.grid(), params, flow), p)
}

/// Direct banded solve with iterative refinement on a compensated residual.
pub fn linear_solve(j: &JacobianMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    linear_solve_with(j, rhs, 1e-10, f64::NAN)
}

fn linear_solve_with(j: &JacobianMatrix, rhs: &[f64], tol: f64, min_p: f64) -> Result<Vec<f64>, SolverError> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let rn = norm(rhs);
    if rn == 0.0 {
        return Ok(vec![0.0; rhs.len()]);
    }
    let lu = j.band.factor().map_err(|e| match e {
        BandError::Singular { column } => SolverError::Singular { column, min_p },
        other => SolverError::Invalid(other.to_string()),
    })?;
    let mut x = rhs.to_vec();
    lu.solve_in_place(&mut x).map_err(|e| SolverError::Invalid(e.to_string()))?;
    let mut achieved = f64::INFINITY;
    for _ in 0..3 {
        let mut r = j.band.residual_compensated(rhs, &x);
        achieved = norm(&r) / rn;
        if achieved <= 0.01 * tol {
            break;
        }
        lu.solve_in_place(&mut r).map_err(|e| SolverError::Invalid(e.to_string()))?;
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        achieved = norm(&j.band.residual_compensated(rhs, &x)) / rn;
    }
    // x itself is only stored to ε, so ‖b − Ax‖ cannot fall below ~ε‖|A||x|‖;
    // the contract is enforced down to that floor
    let floor = 8.0 * f64::EPSILON * norm(&j.band.abs_matvec(&x)) / rn;
    if !(achieved <= tol.max(floor)) {
        return Err(SolverError::LinearResidual {
            achieved,
            required: tol,
            min_p,
        });
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub directions: usize,
    pub max_relative_error: f64,
}

/// Central-difference directional derivatives `(Φ(p+th) − Φ(p−th))/2t` against
/// `J h` along random relative perturbations `h = ξ p`, `ξ ∈ [−1, 1]`.
pub fn jacobian_check(problem: &WaveProblem, p: &ScalarField2D, directions: usize, t: f64, seed: u64) -> Result<JacobianCheck, SolverError> {
    let g = *problem.grid();
    let jac = problem.jacobian(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut h = vec![0.0; g.len()];
        for v in h[g.ny..(g.nx - 1) * g.ny].iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for (hv, pv) in h.iter_mut().zip(p.values()) {
            *hv *= pv;
        }
        let hf = ScalarField2D::new(g, h, Boundary::Free)?;
        let plus = p.combine(1.0, &hf, t)?;
        let minus = p.combine(1.0, &hf, -t)?;
        let rp = problem.residual(&plus)?;
        let rm = problem.residual(&minus)?;
        let jh = jac.apply_field(&hf);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 1..g.nx - 1 {
            for j in 0..g.ny {
                let fd = (rp.get(i, j) - rm.get(i, j)) / (2.0 * t);
                num = num.max((fd - jh.get(i, j)).abs());
                den = den.max(jh.get(i, j).abs());
            }
        }
        worst = worst.max(if den > 0.0 { num / den } else { num });
    }
    Ok(JacobianCheck {
        directions,
        max_relative_error: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Converged when `‖Φ‖∞ ≤ tolerance · c1²`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Damping factors tried in order; the first meeting the decrease test wins.
    pub damping: Vec<f64>,
    pub armijo: f64,
    pub linear_tolerance: f64,
    /// Extra unit Newton steps after convergence while they keep reducing ‖Φ‖∞.
    pub polish_steps: usize,
    /// Budget of pseudo-transient steps `(J + σI) s = −Φ` taken when the
    /// line search stalls (typically a front in the wrong place); 0 disables.
    pub transient_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 50,
            damping: (0..7).map(|k| 0.5f64.powi(k)).collect(),
            armijo: 1e-4,
            linear_tolerance: 1e-10,
            polish_steps: 1,
            transient_steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub newton_iters: usize,
    pub tolerance: f64,
    pub final_residual_norm: f64,
    pub residual_trace: Vec<f64>,
    pub damping_trace: Vec<f64>,
    /// Shifts σ of accepted pseudo-transient steps.
    pub transient_trace: Vec<f64>,
    /// `(amplitude, δ, L)` of every stage that led here.
    pub path: Vec<(f64, f64, f64)>,
    pub wall_time: Vec<f64>,
    pub min_px: f64,
    pub max_px: f64,
    /// Largest of `p⁻ − p` and `p − p⁺` over the grid.
    pub sandwich_violation: f64,
    pub warnings: Vec<String>,
}

/// Difference quotients `(p_{i+1,j} − p_{i,j})/hx` over all faces.
pub fn face_slopes(p: &ScalarField2D) -> (f64, f64) {
    let g = p.grid();
    let hx = g.hx();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..g.nx - 1 {
        for j in 0..g.ny {
            let s = (p.get(i + 1, j) - p.get(i, j)) / hx;
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    (lo, hi)
}

pub fn sandwich_violation(problem: &WaveProblem, p: &ScalarField2D) -> f64 {
    let g = problem.grid();
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..g.nx {
        let x = g.x(i);
        let lo = problem.barriers.minus.value(x);
        let hi = problem.barriers.plus.value(x);
        for &v in p.line(i) {
            worst = worst.max(lo - v).max(v - hi);
        }
    }
    worst.max(0.0)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton with Armijo backtracking on `‖Φ‖∞`.
pub fn solve_truncated(
    problem: &WaveProblem,
    initial: ScalarField2D,
    opts: &NewtonOptions,
) -> Result<(ScalarField2D, SolveReport), SolverError> {
    let start = Instant::now();
    let g = *problem.grid();
    let tol = problem.tolerance(opts);
    let mut p = problem.impose_boundary(initial);
    let mut phi = problem.residual(&p)?;
    let mut norm = inf_norm(phi.values());
    let mut report = SolveReport {
        converged: false,
        newton_iters: 0,
        tolerance: tol,
        final_residual_norm: norm,
        residual_trace: vec![norm],
        damping_trace: Vec::new(),
        transient_trace: Vec::new(),
        path: Vec::new(),
        wall_time: Vec::new(),
        min_px: f64::NAN,
        max_px: f64::NAN,
        sandwich_violation: f64::NAN,
        warnings: Vec::new(),
    };
    // the true solution stays above δ; below δ/2 ellipticity is no longer trusted
    let floor = 0.5 * problem.params.delta;
    let mut polish = 0;
    // Some(σ) while in pseudo-transient mode
    let mut shift: Option<f64> = None;
    let mut sigma0 = 0.0;
    let mut rejections = 0;
    loop {
        let done = norm <= tol;
        if done && polish >= opts.polish_steps {
            break;
        }
        if !done && report.newton_iters >= opts.max_iterations {
            report.final_residual_norm = norm;
            report.wall_time.push(start.elapsed().as_secs_f64());
            return Err(SolverError::NotConverged { report: Box::new(report) });
        }
        let jac = problem.jacobian(&p)?;
        let rhs: Vec<f64> = interior_of(phi.values(), &g).iter().map(|v| -v).collect();
        if let Some(sigma) = shift {
            if report.transient_trace.len() >= opts.transient_steps || rejections > 60 {
                report.final_residual_norm = norm;
                report.wall_time.push(start.elapsed().as_secs_f64());
                return Err(SolverError::LineSearch {
                    iteration: report.newton_iters,
                    residual: norm,
                    report: Box::new(report),
                });
            }
            let step = linear_solve_with(&jac.shifted(sigma), &rhs, opts.linear_tolerance, p.min())?;
            let step_field = ScalarField2D::new(g, scatter_interior(&step, &g), Boundary::Free)?;
            let trial = p.combine(1.0, &step_field, 1.0)?.with_boundary(p.boundary());
            let rn = if trial.values().iter().all(|&v| v >= floor) {
                inf_norm(problem.residual(&trial)?.values())
            } else {
                f64::INFINITY
            };
            if !(rn <= 10.0 * norm) {
                shift = Some(4.0 * sigma);
                rejections += 1;
                continue;
            }
            rejections = 0;
            report.transient_trace.push(sigma);
            p = trial;
            phi = problem.residual(&p)?;
            // switched evolution relaxation: σ follows the residual
            let next = 0.5 * sigma * (rn / norm).min(2.0);
            norm = rn;
            if next < 1e-10 * sigma0 {
                log::debug!("pseudo-transient phase ended after {} steps", report.transient_trace.len());
                shift = None;
            } else {
                shift = Some(next);
            }
            continue;
        }
        let step = match linear_solve_with(&jac, &rhs, opts.linear_tolerance, p.min()) {
            Ok(s) => s,
            Err(e) if done => {
                log::debug!("polish step skipped: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        let step_field = ScalarField2D::new(g, scatter_interior(&step, &g), Boundary::Free)?;
        let mut accepted = None;
        let factors: &[f64] = if done { &[1.0] } else { &opts.damping };
        for &f in factors {
            let trial = p.combine(1.0, &step_field, f)?.with_boundary(p.boundary());
            if trial.values().iter().any(|&v| !(v >= floor)) {
                continue;
            }
            let r = problem.residual(&trial)?;
            let rn = inf_norm(r.values());
            let ok = if done { rn < norm } else { rn <= (1.0 - opts.armijo * f) * norm };
            if ok {
                accepted = Some((f, trial, r, rn));
                break;
            }
        }
        match accepted {
            Some((f, trial, r, rn)) => {
                p = trial;
                phi = r;
                norm = rn;
                report.newton_iters += 1;
                report.damping_trace.push(f);
                report.residual_trace.push(rn);
                log::trace!("newton {}: factor {f}, ‖Φ‖∞ = {rn:e}", report.newton_iters);
                if done {
                    polish += 1;
                }
            }
            None if done => break,
            None if report.transient_trace.len() < opts.transient_steps => {
                sigma0 = jac.max_abs_diagonal();
                log::debug!("line search stalled at ‖Φ‖∞ = {norm:e}; pseudo-transient steps from σ = {sigma0:e}");
                report
                    .warnings
                    .push(format!("line search stalled at iteration {}; pseudo-transient fallback", report.newton_iters));
                shift = Some(sigma0);
            }
            None => {
                report.final_residual_norm = norm;
                report.wall_time.push(start.elapsed().as_secs_f64());
                return Err(SolverError::LineSearch {
                    iteration: report.newton_iters,
                    residual: norm,
                    report: Box::new(report),
                });
            }
        }
    }
    report.converged = true;
    report.final_residual_norm = norm;
    let (lo, hi) = face_slopes(&p);
    report.min_px = lo;
    report.max_px = hi;
    report.sandwich_violation = sandwich_violation(problem, &p);
    let b = problem.right_value();
    if report.sandwich_violation > 1e-6 * b {
        report
            .warnings
            .push(format!("sandwich violated by {:e} (> 1e-6·B)", report.sandwich_violation));
    }
    if lo < -1e-8 || hi > problem.params.c1() + 1e-6 {
        report.warnings.push(format!("p_x range [{lo:e}, {hi}] outside [0, c1]"));
    }
    report.wall_time.push(start.elapsed().as_secs_f64());
    Ok((p, report))
}
