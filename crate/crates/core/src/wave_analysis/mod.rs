//! Post-solve diagnostics: pinning, monotonicity, the flux invariant,
//! oscillation decay, the free boundary, far-field expansion, alignment of
//! translates and the planar blow-down.

mod boundary;
mod expansion;
mod oscillation;

pub use boundary::{free_boundary_extract, interface_band, FreeBoundaryCurve};
pub use expansion::{expansion_fit, ExpansionFit};
pub use oscillation::{fit_oscillation, fourier_bound, oscillation_mass_constant, oscillation_profile, FourierBound, FourierLine, OscillationProfile, PowerFit};

use crate::flowfield::{FlowProfile, WaveParams};
use crate::grid_field::{GridError, ScalarField2D, WaveOperator};
use crate::newton_solver::MonotoneCubic;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("pinning mass {k} outside the attained range [{lo}, {hi}]")]
    MassOutOfRange { k: f64, lo: f64, hi: f64 },
    #[error("fit window [{lo}, {hi}] spans {decades:.2} decades; at least one is needed")]
    WindowTooShort { lo: f64, hi: f64, decades: f64 },
    #[error("fit window [{lo}, {hi}] holds only {points} samples")]
    TooFewPoints { lo: f64, hi: f64, points: usize },
    #[error("least-squares basis ill-conditioned (condition {condition:e}); widen the window")]
    IllConditioned { condition: f64 },
    #[error("level {level} below the resolvable threshold {min}")]
    LevelTooLow { level: f64, min: f64 },
    #[error("expansion requires m > 1 (got {m})")]
    ExpansionUnsupported { m: f64 },
    #[error("fields do not overlap for any admissible shift")]
    NoOverlap,
    #[error("{0}")]
    Invalid(String),
}

/// Per-line monotone interpolants `x ↦ p(x, y_j)`.
pub(crate) fn line_interpolants(p: &ScalarField2D) -> Vec<MonotoneCubic> {
    let g = p.grid();
    let xs = g.xs();
    (0..g.ny)
        .map(|j| {
            let ys: Vec<f64> = (0..g.nx).map(|i| p.get(i, j)).collect();
            MonotoneCubic::new(&xs, &ys)
        })
        .collect()
}

pub(crate) fn mean_profile(p: &ScalarField2D) -> Vec<f64> {
    (0..p.grid().nx).map(|i| p.line_mean(i)).collect()
}

/// A field together with the translation that puts `∫p(x*, y) dy = K` at
/// the origin: pinned coordinates are `ξ = x − x*`.
#[derive(Debug, Clone)]
pub struct Pinned {
    pub field: ScalarField2D,
    pub x_star: f64,
    pub mass: f64,
    /// `min_y p(x*, y)`.
    pub k1: f64,
    /// `max_y p(x*, y)`.
    pub k2: f64,
}

impl Pinned {
    pub fn xi(&self, i: usize) -> f64 {
        self.field.grid().x(i) - self.x_star
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.field.grid().nx).map(|i| self.xi(i)).collect()
    }

    /// `ξ` range covered by the data.
    pub fn range(&self) -> (f64, f64) {
        let l = self.field.grid().half_length;
        (-l - self.x_star, l - self.x_star)
    }

    /// Values `p(ξ + x*, y_j)` for all `j`.
    pub fn line_at(&self, xi: f64) -> Vec<f64> {
        sample_lines(&line_interpolants(&self.field), &self.field, xi + self.x_star)
    }

    /// The pinned field on the original grid: node `x_i` carries
    /// `p(x_i + x*, ·)` (integer-cell shift plus sub-cell interpolation).
    /// Beyond the left end the tail value is held, beyond the right end
    /// the end slope is continued.
    pub fn resampled(&self) -> ScalarField2D {
        let g = *self.field.grid();
        let lines = line_interpolants(&self.field);
        let mut out = self.field.clone();
        for i in 0..g.nx {
            let src = sample_lines(&lines, &self.field, g.x(i) + self.x_star);
            for (j, v) in src.into_iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out
    }
}

fn sample_lines(lines: &[MonotoneCubic], p: &ScalarField2D, x: f64) -> Vec<f64> {
    let left = -p.grid().half_length;
    lines
        .iter()
        .enumerate()
        .map(|(j, l)| if x <= left { p.get(0, j) } else { l.eval(x) })
        .collect()
}

/// Locates `x*` with `∫p(x*, y) dy = K` by bisection on the monotone
/// interpolant of the line means.
pub fn pin_translate(p: &ScalarField2D, k: f64) -> Result<Pinned, AnalysisError> {
    let g = p.grid();
    let means = mean_profile(p);
    let (lo, hi) = (means[0], means[g.nx - 1]);
    if !(k > lo && k < hi) {
        return Err(AnalysisError::MassOutOfRange { k, lo, hi });
    }
    let xs = g.xs();
    let f = MonotoneCubic::new(&xs, &means);
    // bracket on the grid first
    let cell = means.iter().position(|&v| v >= k).unwrap().max(1) - 1;
    let (mut a, mut b) = (xs[cell], xs[cell + 1]);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f.eval(mid) < k {
            a = mid;
        } else {
            b = mid;
        }
    }
    let x_star = 0.5 * (a + b);
    let at = sample_lines(&line_interpolants(p), p, x_star);
    let k1 = at.iter().cloned().fold(f64::INFINITY, f64::min);
    let k2 = at.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Pinned {
        field: p.clone(),
        x_star,
        mass: k,
        k1,
        k2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub min_px: f64,
    pub max_px: f64,
    /// Minimum of `p_x` over faces whose end values both exceed the threshold
    /// (the non-degeneracy constant `a` on the positive set).
    pub min_px_positive: Option<f64>,
    pub positive_threshold: f64,
}

/// Extrema of the face difference quotients `(p_{i+1,j} − p_{i,j})/hx`.
pub fn monotonicity_report(p: &ScalarField2D, positive_threshold: f64) -> MonotonicityReport {
    let g = p.grid();
    let hx = g.hx();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut pos: Option<f64> = None;
    for i in 0..g.nx - 1 {
        for j in 0..g.ny {
            let (a, b) = (p.get(i, j), p.get(i + 1, j));
            let s = (b - a) / hx;
            lo = lo.min(s);
            hi = hi.max(s);
            if a > positive_threshold && b > positive_threshold {
                pos = Some(pos.map_or(s, |v: f64| v.min(s)));
            }
        }
    }
    MonotonicityReport {
        min_px: lo,
        max_px: hi,
        min_px_positive: pos,
        positive_threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxInvariant {
    /// Face midpoints.
    pub x: Vec<f64>,
    /// `F` from the scheme's face fluxes, averaged over y.
    pub values: Vec<f64>,
    pub drift: f64,
    /// The constant `C_δ`, read off in the left tail.
    pub c_delta: f64,
    /// `C_δ / δ^{1/m}`.
    pub normalized: f64,
    /// `c1² B^{1/m}`, the natural size of `F`-errors.
    pub scale: f64,
    pub hx: f64,
    /// `F` from centered nodal differences at interior nodes.
    pub nodal: Vec<f64>,
    pub nodal_drift: f64,
}

/// `F(x) = ∫p^{1/m} p_x dy − ∫(c+α) p^{1/m} dy`, constant for δ-solutions.
pub fn flux_invariant(p: &ScalarField2D, flow: &FlowProfile, params: &WaveParams) -> Result<FluxInvariant, AnalysisError> {
    let g = *p.grid();
    let op = WaveOperator::new(g, params, flow);
    let faces = op.face_fluxes(p)?;
    let (nx, ny, m, hx) = (g.nx, g.ny, params.m, g.hx());
    let values: Vec<f64> = (0..nx - 1)
        .map(|i| faces[i * ny..(i + 1) * ny].iter().sum::<f64>() / ny as f64)
        .collect();
    let x: Vec<f64> = (0..nx - 1).map(|i| g.x(i) + 0.5 * hx).collect();
    let nodal: Vec<f64> = (1..nx - 1)
        .map(|i| {
            (0..ny)
                .map(|j| {
                    let g_m = p.get(i, j).powf(1.0 / m);
                    g_m * (p.get(i + 1, j) - p.get(i - 1, j)) / (2.0 * hx) - op.drift(j) * g_m
                })
                .sum::<f64>()
                / ny as f64
        })
        .collect();
    let spread = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let b = p.line_mean(nx - 1);
    Ok(FluxInvariant {
        drift: spread(&values),
        c_delta: values[0],
        normalized: values[0] / params.delta.powf(1.0 / m),
        scale: params.c1().powi(2) * b.powf(1.0 / m),
        hx,
        nodal_drift: spread(&nodal),
        x,
        values,
        nodal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Best shift: `p1(x, y) ≈ p2(x − τ, y)`.
    pub tau: f64,
    pub residual: f64,
    pub overlap: (f64, f64),
}

/// Minimizes `sup |p1(x, y) − p2(x − τ, y)|` over τ on the common window.
pub fn align_translates(p1: &ScalarField2D, p2: &ScalarField2D) -> Result<Alignment, AnalysisError> {
    let (g1, g2) = (*p1.grid(), *p2.grid());
    if g1.ny != g2.ny {
        return Err(GridError::ShapeMismatch(format!("Ny {} vs {}", g1.ny, g2.ny)).into());
    }
    let lines2 = line_interpolants(p2);
    let (m1, m2) = (mean_profile(p1), mean_profile(p2));
    // first guess: match the crossing of a common mid level
    let top = m1[g1.nx - 1].min(m2[g2.nx - 1]);
    let bottom = m1[0].max(m2[0]);
    if !(top > bottom) {
        return Err(AnalysisError::NoOverlap);
    }
    let level = 0.5 * (top + bottom);
    let crossing = |m: &[f64], xs: &[f64]| -> f64 {
        let k = m.iter().position(|&v| v >= level).unwrap().max(1);
        let t = (level - m[k - 1]) / (m[k] - m[k - 1]);
        xs[k - 1] + t * (xs[k] - xs[k - 1])
    };
    let (xs1, xs2) = (g1.xs(), g2.xs());
    let tau0 = crossing(&m1, &xs1) - crossing(&m2, &xs2);
    let window = |tau: f64| (xs1[0].max(xs2[0] + tau), xs1[g1.nx - 1].min(xs2[g2.nx - 1] + tau));
    let objective = |tau: f64| -> f64 {
        let (a, b) = window(tau);
        let mut worst: f64 = 0.0;
        for (i, &x) in xs1.iter().enumerate() {
            if x < a || x > b {
                continue;
            }
            for (j, line) in lines2.iter().enumerate() {
                worst = worst.max((p1.get(i, j) - line.eval(x - tau)).abs());
            }
        }
        worst
    };
    let h = g1.hx().max(g2.hx());
    let (a, b) = golden_section(&objective, tau0 - 2.0 * h, tau0 + 2.0 * h, 1e-9 * h);
    // the crossing guess is exact for translates of one sampled profile
    let tau = [0.5 * (a + b), tau0].into_iter().min_by(|x, y| objective(*x).total_cmp(&objective(*y))).unwrap();
    let overlap = window(tau);
    if !(overlap.1 > overlap.0) {
        return Err(AnalysisError::NoOverlap);
    }
    Ok(Alignment {
        tau,
        residual: objective(tau),
        overlap,
    })
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowDown {
    pub eps: f64,
    /// `min_Y P^ε(1, Y)`, `max_Y P^ε(1, Y)`.
    pub min: f64,
    pub max: f64,
    /// `max_Y |P^ε(1, Y) − c|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarLimitReport {
    pub c: f64,
    pub entries: Vec<BlowDown>,
    /// Requested ε with `1/ε` beyond the data.
    pub unattainable: Vec<f64>,
    /// `min P^ε(X, Y)/X` over `X ∈ (0, 1]` at the smallest attainable ε.
    pub growth_constant: Option<f64>,
}

/// `P^ε(X, Y) = ε p(X/ε, Y/ε)` in pinned coordinates; `Y/ε` wraps through
/// the whole period, so `P^ε(1, ·)` ranges over the line `ξ = 1/ε`.
pub fn planar_limit_check(p: &Pinned, eps: &[f64], c: f64) -> PlanarLimitReport {
    let (_, xi_max) = p.range();
    let lines = line_interpolants(&p.field);
    let at = |xi: f64| sample_lines(&lines, &p.field, xi + p.x_star);
    let mut entries = Vec::new();
    let mut unattainable = Vec::new();
    for &e in eps {
        if !(e > 0.0) || 1.0 / e > xi_max {
            unattainable.push(e);
            continue;
        }
        let vals: Vec<f64> = at(1.0 / e).iter().map(|v| e * v).collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        entries.push(BlowDown {
            eps: e,
            min,
            max,
            deviation: (max - c).abs().max((min - c).abs()),
        });
    }
    let growth_constant = entries.iter().map(|b| b.eps).fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.min(e)))).map(|e| {
        (1..=64)
            .map(|k| {
                let big_x = k as f64 / 64.0;
                at(big_x / e).iter().map(|v| e * v / big_x).fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    });
    PlanarLimitReport {
        c,
        entries,
        unattainable,
        growth_constant,
    }
}

#[cfg(test)]
mod tests;
