use super::{line_interpolants, AnalysisError, Pinned};
use crate::newton_solver::MonotoneCubic;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryCurve {
    /// Decreasing levels ε.
    pub levels: Vec<f64>,
    pub ys: Vec<f64>,
    /// `I_ε(y_j)` in pinned coordinates, one row per level.
    pub curves: Vec<Vec<f64>>,
    /// `I(y_j)` extrapolated from the two lowest levels, or the lowest
    /// curve itself when the measured non-degeneracy is too small.
    pub extrapolated: Vec<f64>,
    /// `max_j |ΔI_ε/Δy|` per level.
    pub lipschitz: Vec<f64>,
    /// The same estimate for the extrapolated curve.
    pub extrapolated_lipschitz: f64,
    /// Secant slope `Δε/ΔI_ε` between the two lowest levels, minimized over y.
    pub nondegeneracy: f64,
    /// `a < 0.05 c`: extrapolation unreliable.
    pub degenerate: bool,
    /// `max |p_y|` over nodes with values inside the level band.
    pub max_py: f64,
    /// y-cells whose lowest-level slope exceeds 1.5× the implicit-function
    /// bound `max|p_y|/a` (candidate vertical segments).
    pub vertical_candidates: Vec<usize>,
    /// `sup_y |I_ε(finest) − I_ε(previous)|` at the lowest level.
    pub delta_spread: Option<f64>,
}

/// `[−K₂/c0, −K₁/c1]`, the strip that must contain the interface after pinning.
pub fn interface_band(k1: f64, k2: f64, c0: f64, c1: f64) -> (f64, f64) {
    (-k2 / c0, -k1 / c1)
}

fn level_crossings(p: &Pinned, lines: &[MonotoneCubic], level: f64) -> Vec<f64> {
    let g = *p.field.grid();
    (0..g.ny)
        .map(|j| {
            let i = (0..g.nx).position(|i| p.field.get(i, j) >= level).unwrap_or(g.nx - 1).max(1);
            let (mut a, mut b) = (g.x(i - 1), g.x(i));
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if lines[j].eval(mid) < level {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b) - p.x_star
        })
        .collect()
}

/// Level curves `p = ε` of the finest field (the last one, with its δ),
/// Richardson extrapolation `I_ε ≈ I + ε/a` to ε → 0, Lipschitz estimates.
pub fn free_boundary_extract(fields: &[(&Pinned, f64)], levels: &[f64], c: f64) -> Result<FreeBoundaryCurve, AnalysisError> {
    let (finest, delta) = *fields
        .last()
        .ok_or_else(|| AnalysisError::Invalid("no fields given".into()))?;
    if levels.len() < 2 || levels.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(AnalysisError::Invalid("need at least two strictly decreasing levels".into()));
    }
    let lowest = *levels.last().unwrap();
    if lowest < 2.0 * delta {
        return Err(AnalysisError::LevelTooLow {
            level: lowest,
            min: 2.0 * delta,
        });
    }
    let g = *finest.field.grid();
    let lines = line_interpolants(&finest.field);
    let curves: Vec<Vec<f64>> = levels.iter().map(|&e| level_crossings(finest, &lines, e)).collect();
    let hy = g.hy();
    let lipschitz: Vec<f64> = curves
        .iter()
        .map(|cv| (0..g.ny).map(|j| (cv[g.up(j)] - cv[j]).abs() / hy).fold(0.0, f64::max))
        .collect();
    let (e1, e2) = (levels[levels.len() - 1], levels[levels.len() - 2]);
    let (c1v, c2v) = (&curves[levels.len() - 1], &curves[levels.len() - 2]);
    let slopes: Vec<f64> = (0..g.ny).map(|j| (e2 - e1) / (c2v[j] - c1v[j])).collect();
    let nondegeneracy = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let degenerate = !(nondegeneracy >= 0.05 * c);
    let extrapolated: Vec<f64> = if degenerate {
        c1v.clone()
    } else {
        (0..g.ny).map(|j| c1v[j] - e1 / slopes[j]).collect()
    };
    let extrapolated_lipschitz = (0..g.ny)
        .map(|j| (extrapolated[g.up(j)] - extrapolated[j]).abs() / hy)
        .fold(0.0, f64::max);
    let (top, bottom) = (levels[0], lowest);
    let mut max_py: f64 = 0.0;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let v = finest.field.get(i, j);
            if v >= bottom && v <= top {
                let py = (finest.field.get(i, g.up(j)) - finest.field.get(i, g.down(j))) / (2.0 * hy);
                max_py = max_py.max(py.abs());
            }
        }
    }
    let bound = max_py / nondegeneracy;
    let vertical_candidates = (0..g.ny)
        .filter(|&j| {
            let s = (c1v[g.up(j)] - c1v[j]).abs() / hy;
            s > 1.5 * bound && s > 1e-12
        })
        .collect();
    let delta_spread = if fields.len() >= 2 {
        let (prev, _) = fields[fields.len() - 2];
        let pl = line_interpolants(&prev.field);
        let pc = level_crossings(prev, &pl, lowest);
        Some(pc.iter().zip(c1v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(FreeBoundaryCurve {
        levels: levels.to_vec(),
        ys: g.ys(),
        curves,
        extrapolated,
        lipschitz,
        extrapolated_lipschitz,
        nondegeneracy,
        degenerate,
        max_py,
        vertical_candidates,
        delta_spread,
    })
}
