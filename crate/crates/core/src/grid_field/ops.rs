use super::flux::{fitted_flux, FaceFlux};
use super::{Boundary, Grid, GridError, ScalarField2D};
use crate::flowfield::{FlowProfile, WaveParams};

/// Centered first and second differences; one-sided second order at the x ends.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub px: ScalarField2D,
    pub py: ScalarField2D,
    pub laplacian: ScalarField2D,
}

pub fn diff_ops(field: &ScalarField2D) -> Derivatives {
    let g = *field.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx(), g.hy());
    let mut px = vec![0.0; g.len()];
    let mut py = vec![0.0; g.len()];
    let mut lap = vec![0.0; g.len()];
    let v = |i: usize, j: usize| field.get(i, j);
    for i in 0..nx {
        for j in 0..ny {
            let k = g.index(i, j);
            let (dx, dxx) = if i == 0 {
                (
                    (4.0 * (v(1, j) - v(0, j)) - (v(2, j) - v(0, j))) / (2.0 * hx),
                    (2.0 * (v(0, j) - v(1, j)) - 3.0 * (v(1, j) - v(2, j)) + (v(2, j) - v(3, j))) / (hx * hx),
                )
            } else if i == nx - 1 {
                (
                    (4.0 * (v(i, j) - v(i - 1, j)) - (v(i, j) - v(i - 2, j))) / (2.0 * hx),
                    (2.0 * (v(i, j) - v(i - 1, j)) - 3.0 * (v(i - 1, j) - v(i - 2, j)) + (v(i - 2, j) - v(i - 3, j)))
                        / (hx * hx),
                )
            } else {
                (
                    (v(i + 1, j) - v(i - 1, j)) / (2.0 * hx),
                    (v(i + 1, j) - 2.0 * v(i, j) + v(i - 1, j)) / (hx * hx),
                )
            };
            let (ju, jd) = (g.up(j), g.down(j));
            px[k] = dx;
            py[k] = (v(i, ju) - v(i, jd)) / (2.0 * hy);
            lap[k] = dxx + (v(i, ju) - 2.0 * v(i, j) + v(i, jd)) / (hy * hy);
        }
    }
    let mk = |values| ScalarField2D {
        grid: g,
        values,
        boundary: Boundary::Free,
    };
    Derivatives {
        px: mk(px),
        py: mk(py),
        laplacian: mk(lap),
    }
}

/// The discrete wave operator in conservative form,
/// `Φ_h = −m p^{1−1/m} [ δx⁻ J + δy² Z ]`, with fitted x-face fluxes `J` and
/// `Z = m/(m+1) p^{(m+1)/m}`.
#[derive(Debug, Clone)]
pub struct WaveOperator {
    grid: Grid,
    m: f64,
    drifts: Vec<f64>,
}

/// Everything a Newton step needs from one operator evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    /// Φ_h at every node; Dirichlet mismatch on the end columns.
    pub phi: Vec<f64>,
    /// Conservative divergence at interior nodes, zero on the ends.
    pub divergence: Vec<f64>,
    /// Face `i + ½` of line `j` at index `i * Ny + j`.
    pub faces: Vec<FaceFlux>,
}

impl WaveOperator {
    pub fn new(grid: Grid, params: &WaveParams, flow: &FlowProfile) -> Self {
        let drifts = (0..grid.ny).map(|j| params.c + flow.eval(grid.y(j))).collect();
        Self {
            grid,
            m: params.m,
            drifts,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `c + α(y_j)`.
    pub fn drift(&self, j: usize) -> f64 {
        self.drifts[j]
    }

    pub fn residual(&self, p: &ScalarField2D) -> Result<ScalarField2D, GridError> {
        let ev = self.evaluate(p)?;
        Ok(ScalarField2D {
            grid: self.grid,
            values: ev.phi,
            boundary: Boundary::Free,
        })
    }

    /// Face fluxes `J_{i+½, j}` as an `(Nx−1) × Ny` table, x-major.
    pub fn face_fluxes(&self, p: &ScalarField2D) -> Result<Vec<f64>, GridError> {
        Ok(self.evaluate(p)?.faces.iter().map(|f| f.flux).collect())
    }

    pub(crate) fn evaluate(&self, p: &ScalarField2D) -> Result<Evaluation, GridError> {
        let g = self.grid;
        if *p.grid() != g {
            return Err(GridError::ShapeMismatch(format!("{:?} vs operator grid {:?}", p.grid(), g)));
        }
        let (nx, ny, m) = (g.nx, g.ny, self.m);
        for i in 0..nx {
            for j in 0..ny {
                let value = p.get(i, j);
                if !(value > 0.0) {
                    return Err(GridError::NonPositive { i, j, value });
                }
            }
        }
        let hx = g.hx();
        let inv_hy2 = 1.0 / (g.hy() * g.hy());
        let mut faces = Vec::with_capacity((nx - 1) * ny);
        for i in 0..nx - 1 {
            for j in 0..ny {
                faces.push(fitted_flux(m, self.drifts[j], hx, p.get(i, j), p.get(i + 1, j)));
            }
        }
        let vals = p.values();
        let mut divergence = vec![0.0; g.len()];
        let mut phi = vec![0.0; g.len()];
        for i in 1..nx - 1 {
            for j in 0..ny {
                let k = g.index(i, j);
                let r = (faces[k].flux - faces[k - ny].flux) / hx
                    + (z_difference(m, vals[k], vals[g.index(i, g.up(j))])
                        - z_difference(m, vals[g.index(i, g.down(j))], vals[k]))
                        * inv_hy2;
                divergence[k] = r;
                phi[k] = -m * p.values()[k].powf(1.0 - 1.0 / m) * r;
            }
        }
        if let Boundary::Dirichlet { left, right } = p.boundary() {
            for j in 0..ny {
                phi[j] = p.get(0, j) - left;
                phi[g.index(nx - 1, j)] = p.get(nx - 1, j) - right;
            }
        }
        Ok(Evaluation { phi, divergence, faces })
    }
}

/// `Z(b) − Z(a)` for `Z = m/(m+1)·p^{(m+1)/m}`, without the cancellation of
/// two large powers (on a hot line `Z` is large and neighbours are close).
fn z_difference(m: f64, a: f64, b: f64) -> f64 {
    let k = 1.0 + 1.0 / m;
    m / (m + 1.0) * a.powf(k) * (k * ((b - a) / a).ln_1p()).exp_m1()
}

/// Pointwise discrete residual of `−m pΔp + (c+α) p_x − |∇p|²`; the end
/// columns carry `p − A`, `p − B`.
pub fn residual_phi(p: &ScalarField2D, flow: &FlowProfile, params: &WaveParams) -> Result<ScalarField2D, GridError> {
    WaveOperator::new(*p.grid(), params, flow).residual(p)
}

/// `w = m²/(m+1) p^{(m+1)/m}`.
pub fn w_transform(p: &ScalarField2D, m: f64) -> Result<ScalarField2D, GridError> {
    if let Some(index) = p.values().iter().position(|&v| v < 0.0) {
        return Err(GridError::Negative {
            index,
            value: p.values()[index],
        });
    }
    let k = m * m / (m + 1.0);
    Ok(p.map(|v| k * v.powf((m + 1.0) / m)))
}

pub fn inverse_w_transform(w: &ScalarField2D, m: f64) -> Result<ScalarField2D, GridError> {
    if let Some(index) = w.values().iter().position(|&v| v < 0.0) {
        return Err(GridError::Negative {
            index,
            value: w.values()[index],
        });
    }
    let k = (m + 1.0) / (m * m);
    Ok(w.map(|v| (k * v).powf(m / (m + 1.0))))
}

/// `f = (c+α) p^{1/m−1} p_x`, the right-hand side of `Δw = f`.
pub fn poisson_rhs(p: &ScalarField2D, flow: &FlowProfile, params: &WaveParams) -> Result<ScalarField2D, GridError> {
    let g = *p.grid();
    let m = params.m;
    if m > 1.0 {
        let floor = 0.5 * params.delta;
        for i in 0..g.nx {
            for j in 0..g.ny {
                let value = p.get(i, j);
                if value < floor || value <= 0.0 {
                    return Err(GridError::BelowFloor { i, j, value, floor });
                }
            }
        }
    }
    let px = diff_ops(p).px;
    let mut out = px.clone();
    for i in 0..g.nx {
        for j in 0..g.ny {
            let drift = params.c + flow.eval(g.y(j));
            out.set(i, j, drift * p.get(i, j).powf(1.0 / m - 1.0) * px.get(i, j));
        }
    }
    Ok(out)
}

/// Smooth test function with compact support in x.
pub trait TestFunction {
    fn value(&self, x: f64, y: f64) -> f64;
    fn dx(&self, x: f64, y: f64) -> f64;
    fn laplacian(&self, x: f64, y: f64) -> f64;
    fn support_x(&self) -> (f64, f64);
}

/// `Ψ = φ((x − x0)/r) (1 + β cos(2πk y + φ0))` with `φ(t) = (1 − t²)⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub mode: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl Bump {
    fn profile(&self, x: f64) -> (f64, f64, f64) {
        let t = (x - self.center) / self.radius;
        if t.abs() >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 1.0 - t * t;
        let r = self.radius;
        (
            q.powi(4),
            -8.0 * t * q.powi(3) / r,
            (-8.0 * q.powi(3) + 48.0 * t * t * q * q) / (r * r),
        )
    }

    fn modulation(&self, y: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * self.mode as f64;
        let arg = w * y + self.phase;
        (1.0 + self.amplitude * arg.cos(), -self.amplitude * w * w * arg.cos())
    }
}

impl TestFunction for Bump {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.profile(x).0 * self.modulation(y).0
    }

    fn dx(&self, x: f64, y: f64) -> f64 {
        self.profile(x).1 * self.modulation(y).0
    }

    fn laplacian(&self, x: f64, y: f64) -> f64 {
        let (f, _, fxx) = self.profile(x);
        let (g, gyy) = self.modulation(y);
        fxx * g + f * gyy
    }

    fn support_x(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }
}

/// `∬ v^{m+1} ΔΨ + (c+α) v Ψ_x` with `v = (m p/(m+1))^{1/m}`, trapezoidal in both
/// directions.
pub fn weak_residual(
    p: &ScalarField2D,
    flow: &FlowProfile,
    params: &WaveParams,
    test: &dyn TestFunction,
) -> Result<f64, GridError> {
    let g = *p.grid();
    let (lo, hi) = test.support_x();
    let l = g.half_length;
    if lo <= -l + g.hx() || hi >= l - g.hx() {
        return Err(GridError::SupportTouchesBoundary { lo, hi, l });
    }
    let m = params.m;
    let mut total = 0.0;
    for i in 0..g.nx {
        let x = g.x(i);
        if x <= lo || x >= hi {
            continue;
        }
        for j in 0..g.ny {
            let y = g.y(j);
            let pv = p.get(i, j).max(0.0);
            let v = (m * pv / (m + 1.0)).powf(1.0 / m);
            let drift = params.c + flow.eval(y);
            total += v.powf(m + 1.0) * test.laplacian(x, y) + drift * v * test.dx(x, y);
        }
    }
    Ok(total * g.hx() * g.hy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planar_ode::PlanarProfile;

    fn params(m: f64, c: f64, delta: f64, l: f64, flow: &FlowProfile) -> WaveParams {
        WaveParams::new(m, c, delta, l, 100.0, flow).unwrap()
    }

    #[test]
    fn diff_ops_on_simple_fields() {
        let g = Grid::new(21, 8, 2.0).unwrap();
        let d = diff_ops(&ScalarField2D::constant(g, 3.0));
        assert_eq!(d.px.sup_norm(), 0.0);
        assert_eq!(d.laplacian.sup_norm(), 0.0);
        let d = diff_ops(&ScalarField2D::from_fn(g, |x, _| 1.7 * x));
        assert!(d.px.values().iter().all(|&v| (v - 1.7).abs() < 1e-13));
        assert!(d.py.sup_norm() < 1e-14 && d.laplacian.sup_norm() < 1e-11);
    }

    #[test]
    fn periodic_laplacian_eigenvalue() {
        let g = Grid::new(16, 64, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let f = ScalarField2D::from_fn(g, |_, y| (two_pi * y).sin());
        let d = diff_ops(&f);
        let hy = g.hy();
        let symbol = (2.0 - 2.0 * (two_pi * hy).cos()) / (hy * hy);
        let (i, j) = (5, 10);
        let ratio = -d.laplacian.get(i, j) / f.get(i, j);
        assert!((ratio - symbol).abs() < 1e-9 * symbol);
        assert!((ratio / (two_pi * two_pi) - 1.0).abs() < 0.01);
    }

    #[test]
    fn diff_ops_are_linear() {
        let g = Grid::new(12, 6, 1.5).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| (x * 0.7).exp() * (6.0 * y).cos());
        let h = ScalarField2D::from_fn(g, |x, y| x * x * x + y);
        let lhs = diff_ops(&f.combine(2.5, &h, -0.75).unwrap());
        let (df, dh) = (diff_ops(&f), diff_ops(&h));
        let rhs = df.laplacian.combine(2.5, &dh.laplacian, -0.75).unwrap();
        assert!(lhs.laplacian.sup_distance(&rhs).unwrap() < 1e-10 * rhs.sup_norm());
    }

    #[test]
    fn discrete_integration_by_parts() {
        let g = Grid::new(40, 16, 2.0).unwrap();
        let bump = |x: f64| if x.abs() < 1.2 { (1.0 - (x / 1.2).powi(2)).powi(3) } else { 0.0 };
        let f = ScalarField2D::from_fn(g, |x, y| bump(x) * (1.0 + (6.28 * y).sin()));
        let h = ScalarField2D::from_fn(g, |x, y| bump(x - 0.3) * (12.56 * y).cos());
        let inner = |a: &ScalarField2D, b: &ScalarField2D| a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>();
        let lhs = inner(&diff_ops(&f).laplacian, &h);
        let rhs = inner(&f, &diff_ops(&h).laplacian);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn residual_vanishes_on_exact_planar_states() {
        let flow = FlowProfile::zero();
        let pr = params(2.0, 1.0, 0.0, 4.0, &flow);
        let g = Grid::new(33, 8, 4.0).unwrap();
        let lin = ScalarField2D::from_fn(g, |x, _| x + 5.0).with_dirichlet(1.0, 9.0);
        let r = residual_phi(&lin, &flow, &pr).unwrap();
        assert!(r.sup_norm() < 1e-12, "{}", r.sup_norm());
        let flat = ScalarField2D::constant(g, 0.01).with_dirichlet(0.01, 0.01);
        assert!(residual_phi(&flat, &flow, &pr).unwrap().sup_norm() < 1e-16);
    }

    #[test]
    fn residual_of_planar_profile_is_grid_independent() {
        let flow = FlowProfile::zero();
        let pr = params(2.5, 1.3, 0.02, 6.0, &flow);
        let prof = PlanarProfile::new(1.3, 2.5, 0.02, 0.0, 1.0).unwrap();
        for &nx in &[16, 61] {
            let g = Grid::new(nx, 4, 6.0).unwrap();
            let f = ScalarField2D::from_fn(g, |x, _| prof.value(x));
            let f = f.clone().with_dirichlet(f.get(0, 0), f.get(nx - 1, 0));
            let r = residual_phi(&f, &flow, &pr).unwrap();
            // rounding of p ~ 7 amplified by m p / h²
            assert!(r.sup_norm() < 5e-11, "nx={nx}: {}", r.sup_norm());
        }
    }

    #[test]
    fn residual_of_supersolution_matches_formula() {
        // Φ(p⁺) = (c + α − c0) u′ ≥ 0; the discrete error is O(hx²) and
        // concentrated in the thin front of width ≈ mδ/c0
        let flow = FlowProfile::new(&[0.3], &[0.4]).unwrap();
        let pr = params(2.0, 1.0, 0.05, 4.0, &flow);
        let c0 = pr.c0();
        let prof = PlanarProfile::new(c0, 2.0, 0.05, 0.0, 1.0).unwrap();
        let mut errs = Vec::new();
        // much finer grids hit the oracle's own rounding, amplified by 1/hx²
        for nx in [1601, 6401] {
            let g = Grid::new(nx, 4, 4.0).unwrap();
            let f = ScalarField2D::from_fn(g, |x, _| prof.value(x));
            let r = residual_phi(&f, &flow, &pr).unwrap();
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for i in 1..g.nx - 1 {
                let slope = prof.eval(g.x(i)).slope;
                for j in 0..g.ny {
                    let want = (1.0 + flow.eval(g.y(j)) - c0) * slope;
                    assert!(r.get(i, j) >= -1e-12);
                    err = err.max((r.get(i, j) - want).abs());
                    scale = scale.max(want.abs());
                }
            }
            errs.push(err / scale);
        }
        let order = (errs[0] / errs[1]).log2() / 2.0;
        assert!(order > 1.9, "{errs:?}");
        assert!(errs[1] < 1e-6, "{errs:?}");
    }

    #[test]
    fn residual_rejects_non_positive() {
        let flow = FlowProfile::zero();
        let pr = params(2.0, 1.0, 0.01, 4.0, &flow);
        let g = Grid::new(8, 4, 4.0).unwrap();
        let mut f = ScalarField2D::constant(g, 1.0);
        f.set(3, 2, 0.0);
        assert!(matches!(residual_phi(&f, &flow, &pr), Err(GridError::NonPositive { i: 3, j: 2, .. })));
    }

    #[test]
    fn w_transform_examples() {
        let g = Grid::new(8, 4, 1.0).unwrap();
        let one = ScalarField2D::constant(g, 1.0);
        assert!((w_transform(&one, 2.0).unwrap().get(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(w_transform(&ScalarField2D::constant(g, 0.0), 2.0).unwrap().max(), 0.0);
        assert!(w_transform(&ScalarField2D::constant(g, -1.0), 2.0).is_err());
        let f = ScalarField2D::from_fn(g, |x, y| 0.01 + (x + 1.0) * 3.0 + y);
        let back = inverse_w_transform(&w_transform(&f, 2.5).unwrap(), 2.5).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-13 * a);
        }
    }

    #[test]
    fn poisson_rhs_examples() {
        let flow = FlowProfile::zero();
        let pr = params(2.0, 1.0, 0.01, 4.0, &flow);
        let g = Grid::new(16, 4, 4.0).unwrap();
        let lin = ScalarField2D::from_fn(g, |x, _| x + 5.0);
        let f = poisson_rhs(&lin, &flow, &pr).unwrap();
        for i in 0..g.nx {
            let want = (g.x(i) + 5.0f64).powf(-0.5);
            assert!((f.get(i, 1) - want).abs() < 1e-12);
        }
        let flat = ScalarField2D::constant(g, 0.01);
        assert_eq!(poisson_rhs(&flat, &flow, &pr).unwrap().sup_norm(), 0.0);
        let low = ScalarField2D::constant(g, 0.004);
        assert!(matches!(poisson_rhs(&low, &flow, &pr), Err(GridError::BelowFloor { .. })));
    }

    #[test]
    fn weak_residual_of_the_linear_wave() {
        let flow = FlowProfile::zero();
        let pr = params(2.0, 1.0, 0.0, 4.0, &flow);
        let bump = Bump {
            center: 0.1,
            radius: 1.5,
            mode: 1,
            amplitude: 0.5,
            phase: 0.3,
        };
        let mut prev = f64::INFINITY;
        for &nx in &[101, 401, 1601] {
            let g = Grid::new(nx, 16, 4.0).unwrap();
            let f = ScalarField2D::from_fn(g, |x, _| (x - 0.13).max(0.0));
            let r = weak_residual(&f, &flow, &pr, &bump).unwrap().abs();
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-4, "{prev}");
        let zero = ScalarField2D::constant(Grid::new(64, 8, 4.0).unwrap(), 0.0);
        assert_eq!(weak_residual(&zero, &flow, &pr, &bump).unwrap(), 0.0);
        let wide = Bump { radius: 4.0, ..bump };
        assert!(weak_residual(&zero, &flow, &pr, &wide).is_err());
    }
}
