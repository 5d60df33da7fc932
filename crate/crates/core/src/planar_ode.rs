//! Planar profiles `u(x)` of `−m u u'' + C u' = (u')²`, `u(−∞) = δ`.
//!
//! In the phase plane the slope is known in closed form,
//! `v(u) = C (1 − (δ/u)^{1/m})`, so `x(u)` is a single quadrature. Writing
//! `g = u^{1/m}` and `θ = δ^{1/m}` the integrand becomes `m g^m / (C (g − θ))`;
//! the logarithmic singularity at `g = θ` is integrated exactly and the
//! remainder is smooth. Points are tracked through `η = g − θ`, which keeps
//! the exponentially thin left tail representable far below `ulp(δ)`.

use crate::flowfield::{validate_speed, FlowError, WaveParams};
use crate::quadrature::{gl10, pow_m1, pow_quotient};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanarError {
    #[error("u = {u} lies below the left limit δ = {delta}")]
    BelowLeftLimit { u: f64, delta: f64 },
    #[error("anchor value M = {anchor} must exceed δ = {delta}")]
    AnchorTooLow { anchor: f64, delta: f64 },
    #[error("invalid profile parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("right boundary value B = {b} must exceed 1; increase L")]
    DomainTooShort { b: f64 },
    #[error("barrier ordering p⁻ ≤ p⁺ fails at x = {x}: p⁻ − p⁺ = {gap}")]
    OrderingViolated { x: f64, gap: f64 },
    #[error(transparent)]
    Speed(#[from] FlowError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Phase-plane slope `v(u) = C (1 − (δ/u)^{1/m})`.
pub fn slope_law(speed: f64, m: f64, delta: f64, u: f64) -> Result<f64, PlanarError> {
    if u < delta {
        return Err(PlanarError::BelowLeftLimit { u, delta });
    }
    if delta == 0.0 {
        return Ok(speed);
    }
    Ok(-speed * ((delta / u).ln() / m).exp_m1())
}

/// One evaluated point of a planar profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanarPoint {
    pub u: f64,
    /// `u − δ`, accurate even when it underflows relative to `δ`.
    pub excess: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Planar barrier profile through the anchor `u(x0) = M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarProfile {
    speed: f64,
    m: f64,
    delta: f64,
    theta: f64,
    x0: f64,
    anchor: f64,
    eta_anchor: f64,
}

pub fn profile_from_anchor(
    speed: f64,
    m: f64,
    delta: f64,
    x0: f64,
    anchor: f64,
) -> Result<PlanarProfile, PlanarError> {
    PlanarProfile::new(speed, m, delta, x0, anchor)
}

impl PlanarProfile {
    pub fn new(speed: f64, m: f64, delta: f64, x0: f64, anchor: f64) -> Result<Self, PlanarError> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(PlanarError::InvalidParameter { name: "C", value: speed });
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(PlanarError::InvalidParameter { name: "m", value: m });
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(PlanarError::InvalidParameter { name: "delta", value: delta });
        }
        if !x0.is_finite() {
            return Err(PlanarError::InvalidParameter { name: "x0", value: x0 });
        }
        if !(anchor > delta && anchor.is_finite()) {
            return Err(PlanarError::AnchorTooLow { anchor, delta });
        }
        let theta = delta.powf(1.0 / m);
        let eta_anchor = eta_from_excess(m, delta, theta, anchor - delta, anchor);
        Ok(Self {
            speed,
            m,
            delta,
            theta,
            x0,
            anchor,
            eta_anchor,
        })
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn anchor(&self) -> (f64, f64) {
        (self.x0, self.anchor)
    }

    /// Flux `u^{1/m}(u' − C)`, identically `−C δ^{1/m}` along the profile.
    pub fn flux_constant(&self) -> f64 {
        -self.speed * self.theta
    }

    /// `x(u)`; `u = δ` maps to `−∞`.
    pub fn x_of_u(&self, u: f64) -> Result<f64, PlanarError> {
        if u < self.delta {
            return Err(PlanarError::BelowLeftLimit { u, delta: self.delta });
        }
        if self.delta == 0.0 {
            return Ok(self.x0 + (u - self.anchor) / self.speed);
        }
        if u == self.delta {
            return Ok(f64::NEG_INFINITY);
        }
        let eta = eta_from_excess(self.m, self.delta, self.theta, u - self.delta, u);
        Ok(self.x_of_eta(eta))
    }

    fn x_of_eta(&self, eta: f64) -> f64 {
        self.x0 + drift_integral(self.m, self.theta, self.eta_anchor, eta) / self.speed
    }

    /// Evaluates `u`, `u'`, `u''` at `x`.
    pub fn eval(&self, x: f64) -> PlanarPoint {
        if self.delta == 0.0 {
            let u = self.anchor + self.speed * (x - self.x0);
            return if u > 0.0 {
                PlanarPoint {
                    u,
                    excess: u,
                    slope: self.speed,
                    curvature: 0.0,
                }
            } else {
                PlanarPoint {
                    u: 0.0,
                    excess: 0.0,
                    slope: 0.0,
                    curvature: 0.0,
                }
            };
        }
        let zeta = self.solve_log_eta(x);
        self.point_from_log_eta(zeta)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).u
    }

    fn point_from_log_eta(&self, zeta: f64) -> PlanarPoint {
        let eta = zeta.exp();
        let theta = self.theta;
        let g = theta + eta;
        let excess = self.delta * pow_m1(self.m, eta / theta);
        let u = self.delta + excess;
        let slope = self.speed * eta / g;
        let curvature = slope * (self.speed - slope) / (self.m * u);
        PlanarPoint {
            u,
            excess,
            slope,
            curvature,
        }
    }

    /// Safeguarded Newton on `ζ = ln η`, where `dx/dζ = m u / C`.
    fn solve_log_eta(&self, x: f64) -> f64 {
        let (m, c, theta) = (self.m, self.speed, self.theta);
        let u_lin = self.anchor + c * (x - self.x0);
        let guess = if u_lin > 2.0 * self.delta {
            (u_lin.powf(1.0 / m) - theta).ln()
        } else {
            // left tail: x − x0 ≈ (m δ / C) ln(η/η_M)
            self.eta_anchor.ln() + c * (x - self.x0) / (m * self.delta)
        };
        let x_at = |z: f64| self.x_of_eta(z.exp());
        // bracket x(lo) ≤ x ≤ x(hi); x(ζ) is increasing, NaN only from overflow on the right
        let (mut lo, mut hi) = (guess, guess);
        let mut width = 1.0;
        while x_at(lo) > x || x_at(lo).is_nan() {
            hi = hi.min(lo);
            lo -= width;
            width *= 2.0;
        }
        width = 1.0;
        while x_at(hi) < x {
            lo = lo.max(hi);
            hi += width;
            width *= 2.0;
        }
        let mut zeta = guess.clamp(lo, hi);
        let mut dx_old = hi - lo;
        let mut dx_last = dx_old;
        for _ in 0..400 {
            let eta = zeta.exp();
            let xv = self.x_of_eta(eta);
            if xv < x {
                lo = zeta;
            } else {
                hi = zeta;
            }
            let u = self.delta + self.delta * pow_m1(m, eta / theta);
            let slope = m * u / c;
            let newton = zeta - (xv - x) / slope;
            // bisect when Newton leaves the bracket or is not halving fast enough
            let next = if newton > lo && newton < hi && (2.0 * (xv - x)).abs() <= (dx_old * slope).abs() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = next - zeta;
            dx_old = dx_last;
            dx_last = step;
            zeta = next;
            if step.abs() <= 1e-15 * zeta.abs().max(1.0) {
                break;
            }
            if hi - lo <= 1e-15 * zeta.abs().max(1.0) {
                // bracket collapsed on a bisection step: finish with plain Newton
                let eta = zeta.exp();
                let u = self.delta + self.delta * pow_m1(m, eta / theta);
                let newton = zeta - (self.x_of_eta(eta) - x) / (m * u / c);
                if newton.is_finite() {
                    zeta = newton;
                }
                break;
            }
        }
        zeta
    }

    /// Samples of `(x, u, u')`.
    pub fn sample(&self, xs: &[f64]) -> Vec<(f64, f64, f64)> {
        xs.iter()
            .map(|&x| {
                let p = self.eval(x);
                (x, p.u, p.slope)
            })
            .collect()
    }

    /// Phase-plane table `(u, v(u), x(u))` on a grid log-spaced in `u − δ`.
    pub fn tabulate(&self, u_max: f64, points: usize) -> Vec<(f64, f64, f64)> {
        let lo = if self.delta > 0.0 { 1e-12 * self.delta.max(1e-300) } else { 1e-12 };
        let hi = (u_max - self.delta).max(lo * 10.0);
        let n = points.max(2);
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                let ex = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
                let u = self.delta + ex;
                let v = slope_law(self.speed, self.m, self.delta, u).unwrap_or(0.0);
                let x = self.x_of_u(u).unwrap_or(f64::NEG_INFINITY);
                (u, v, x)
            })
            .collect()
    }

    /// CSV export with header `x,u,du`.
    pub fn write_csv<W: Write>(&self, mut out: W, xs: &[f64]) -> Result<(), PlanarError> {
        writeln!(out, "x,u,du")?;
        for (x, u, du) in self.sample(xs) {
            writeln!(out, "{x:.17e},{u:.17e},{du:.17e}")?;
        }
        Ok(())
    }
}

/// `η = u^{1/m} − δ^{1/m}` from `u − δ` without cancellation.
fn eta_from_excess(m: f64, delta: f64, theta: f64, excess: f64, u: f64) -> f64 {
    if delta == 0.0 {
        return u.powf(1.0 / m);
    }
    theta * ((excess / delta).ln_1p() / m).exp_m1()
}

/// `∫_{g1}^{g2} m g^m / (g − θ) dg` with `g_i = θ + η_i`, `θ > 0`, `η_i > 0`.
pub(crate) fn drift_integral(m: f64, theta: f64, eta1: f64, eta2: f64) -> f64 {
    if eta1 == eta2 {
        return 0.0;
    }
    let (lo, hi, sign) = if eta1 < eta2 { (eta1, eta2, 1.0) } else { (eta2, eta1, -1.0) };
    let log_part = m * theta.powf(m) * (hi / lo).ln();
    // smooth remainder m θ^{m-1} ((1+s)^m - 1)/s with s = η/θ; branch point at η = −θ
    let rule = gl10();
    let f = |eta: f64| m * theta.powf(m - 1.0) * pow_quotient(m, eta / theta);
    let mut smooth = 0.0;
    let mut a = lo;
    while a < hi {
        let b = (a + (a + theta)).min(hi);
        smooth += rule.integrate(a, b, f);
        a = b;
    }
    sign * (log_part + smooth)
}

/// Planar super/subsolutions and the boundary data built from them.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierPair {
    /// Supersolution with drift `c0`, anchored at `u(0) = 1`.
    pub plus: PlanarProfile,
    /// Subsolution with drift `c1`, anchored at `u(L) = B`.
    pub minus: PlanarProfile,
    /// Left Dirichlet value `A`.
    pub left_value: f64,
    /// Right Dirichlet value `B`.
    pub right_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BarrierOptions {
    /// `A = w p⁺(−L) + (1 − w) p⁻(−L)`.
    pub left_weight: f64,
    /// Strictness shift: drifts `c0 − ε`, `c1 + ε`.
    pub strict_shift: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            left_weight: 0.5,
            strict_shift: 0.0,
        }
    }
}

pub fn barrier_pair(params: &WaveParams) -> Result<BarrierPair, PlanarError> {
    barrier_pair_with(params, BarrierOptions::default())
}

pub fn barrier_pair_with(params: &WaveParams, opts: BarrierOptions) -> Result<BarrierPair, PlanarError> {
    validate_speed(params, 0.0)?;
    let l = params.half_length;
    let c0 = params.c0() - opts.strict_shift;
    let c1 = params.c1() + opts.strict_shift;
    if c0 <= 0.0 {
        return Err(PlanarError::InvalidParameter { name: "strict_shift", value: opts.strict_shift });
    }
    let plus = PlanarProfile::new(c0, params.m, params.delta, 0.0, 1.0)?;
    let b = plus.value(l);
    if b <= 1.0 {
        return Err(PlanarError::DomainTooShort { b });
    }
    let minus = PlanarProfile::new(c1, params.m, params.delta, l, b)?;
    let w = opts.left_weight;
    let a = w * plus.value(-l) + (1.0 - w) * minus.value(-l);
    let n = 2001;
    for k in 0..n {
        let x = -l + 2.0 * l * k as f64 / (n - 1) as f64;
        let gap = minus.value(x) - plus.value(x);
        if gap > 1e-12 * b {
            return Err(PlanarError::OrderingViolated { x, gap });
        }
    }
    Ok(BarrierPair {
        plus,
        minus,
        left_value: a,
        right_value: b,
    })
}

/// Distance of a δ-profile through `(0, K)` from its degenerate limit `[K + Cx]⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub sup_distance: f64,
    pub argmax: f64,
    pub value_at_anchor: f64,
}

pub fn envelope_limit(
    speed: f64,
    m: f64,
    delta: f64,
    anchor: f64,
    window: f64,
) -> Result<EnvelopeReport, PlanarError> {
    let profile = PlanarProfile::new(speed, m, delta, 0.0, anchor)?;
    let n = 20_001;
    let mut best = (0.0, 0.0);
    for k in 0..n {
        let x = -window * (1.0 - k as f64 / (n - 1) as f64);
        let limit = (anchor + speed * x).max(0.0);
        let d = (profile.value(x) - limit).abs();
        if d > best.0 {
            best = (d, x);
        }
    }
    Ok(EnvelopeReport {
        sup_distance: best.0,
        argmax: best.1,
        value_at_anchor: profile.value(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::FlowProfile;

    #[test]
    fn slope_law_examples() {
        assert_eq!(slope_law(1.3, 2.0, 0.0, 5.0).unwrap(), 1.3);
        assert_eq!(slope_law(1.0, 2.0, 0.01, 0.01).unwrap(), 0.0);
        assert!((slope_law(1.0, 2.0, 0.01, 1.0).unwrap() - 0.9).abs() < 1e-15);
        assert!(slope_law(1.0, 2.0, 0.01, 0.005).is_err());
    }

    #[test]
    fn slope_law_solves_phase_plane_equation() {
        // dv/du = (C − v)/(m u), checked by central differences
        let (c, m, d) = (1.7, 2.5, 0.03);
        for &u in &[0.05, 0.3, 1.0, 7.0] {
            let h = 1e-6 * u;
            let dv = (slope_law(c, m, d, u + h).unwrap() - slope_law(c, m, d, u - h).unwrap()) / (2.0 * h);
            let v = slope_law(c, m, d, u).unwrap();
            assert!((dv - (c - v) / (m * u)).abs() < 1e-7 * (1.0 + dv.abs()));
        }
    }

    #[test]
    fn anchor_and_slope_at_anchor() {
        let p = profile_from_anchor(1.0, 2.0, 0.01, 0.0, 1.0).unwrap();
        let pt = p.eval(0.0);
        assert!((pt.u - 1.0).abs() < 1e-14);
        assert!((pt.slope - 0.9).abs() < 1e-13);
        assert!((p.x_of_u(1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn x_of_u_matches_direct_quadrature() {
        // oracle: composite Simpson on ∫_u^M du / v(u) in the variable ln(u − δ)
        let (c, m, d) = (1.0, 2.0, 0.01);
        let p = profile_from_anchor(c, m, d, 0.0, 1.0).unwrap();
        for &u in &[0.0101, 0.02, 0.2, 0.7, 3.0] {
            let (a, b) = ((u - d).ln(), (1.0f64 - d).ln());
            let n = 200_000;
            let h = (b - a) / n as f64;
            let f = |t: f64| {
                let uu = d + t.exp();
                t.exp() / slope_law(c, m, d, uu).unwrap()
            };
            let mut s = f(a) + f(b);
            for k in 1..n {
                s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = s * h / 3.0;
            let x = p.x_of_u(u).unwrap();
            assert!((x + integral).abs() < 1e-10, "u={u}: {x} vs {}", -integral);
        }
    }

    #[test]
    fn inverse_round_trip_and_tail() {
        let p = profile_from_anchor(1.0, 2.0, 0.01, 0.0, 1.0).unwrap();
        for &x in &[-3.0, -1.0, -0.5, 0.0, 0.3, 5.0, 16.0] {
            let u = p.value(x);
            if u > 0.01 * (1.0 + 1e-12) {
                let back = p.x_of_u(u).unwrap();
                assert!((back - x).abs() < 1e-9 * (1.0 + x.abs()), "{x} -> {u} -> {back}");
            }
        }
        // exponential tail with rate C/(m δ)
        let e1 = p.eval(-2.0).excess;
        let e2 = p.eval(-2.1).excess;
        let rate = (e1 / e2).ln() / 0.1;
        assert!((rate - 1.0 / (2.0 * 0.01)).abs() < 1e-3 * rate, "{rate}");
    }

    #[test]
    fn degenerate_profile_is_linear_wave() {
        let p = profile_from_anchor(2.0, 3.0, 0.0, 1.0, 4.0).unwrap();
        assert_eq!(p.value(2.0), 6.0);
        assert_eq!(p.value(-1.0), 0.0);
        assert_eq!(p.value(-2.0), 0.0);
    }

    #[test]
    fn shooting_oracle_agrees() {
        // RK4 on u'' = (C u' − u'²)/(m u) from the anchor
        let (c, m, d) = (1.3, 2.5, 0.02);
        let p = profile_from_anchor(c, m, d, 0.0, 1.0).unwrap();
        let rhs = |u: f64, v: f64| (v, (c * v - v * v) / (m * u));
        for &dir in &[1.0, -1.0] {
            let (mut u, mut v) = (1.0, slope_law(c, m, d, 1.0).unwrap());
            let h = dir * 1e-4;
            let steps = 10_000;
            for _ in 0..steps {
                let k1 = rhs(u, v);
                let k2 = rhs(u + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
                let k3 = rhs(u + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
                let k4 = rhs(u + h * k3.0, v + h * k3.1);
                u += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
            let x = h * steps as f64;
            assert!((p.value(x) - u).abs() < 1e-9, "x={x}: {} vs {u}", p.value(x));
        }
    }

    #[test]
    fn ode_residual_by_finite_differences() {
        let (c, m, d) = (1.0, 2.0, 0.01);
        let p = profile_from_anchor(c, m, d, 0.0, 1.0).unwrap();
        let h = 1e-3;
        for k in 0..200 {
            let x = -0.8 + 0.1 * k as f64;
            let (um, u0, up) = (p.value(x - h), p.value(x), p.value(x + h));
            let du = (up - um) / (2.0 * h);
            let ddu = (up - 2.0 * u0 + um) / (h * h);
            let r = -m * u0 * ddu + c * du - du * du;
            assert!(r.abs() < 1e-5 * c * c, "x={x}: {r}");
        }
    }

    #[test]
    fn profile_is_increasing_and_convex() {
        let p = profile_from_anchor(0.8, 0.5, 0.05, 0.0, 1.0).unwrap();
        let mut prev = p.eval(-5.0);
        for k in 1..400 {
            let pt = p.eval(-5.0 + 0.05 * k as f64);
            assert!(pt.u >= prev.u);
            assert!(pt.slope > 0.0 && pt.slope < 0.8 && pt.curvature > 0.0);
            prev = pt;
        }
    }

    #[test]
    fn planar_flux_is_constant() {
        let p = profile_from_anchor(1.0, 2.0, 0.01, 0.0, 1.0).unwrap();
        for &x in &[-1.0, 0.0, 3.0, 15.0] {
            let pt = p.eval(x);
            let f = pt.u.powf(0.5) * (pt.slope - 1.0);
            assert!((f + 0.1).abs() < 1e-13, "{f}");
        }
    }

    #[test]
    fn increasing_drift_steepens_right_of_anchor() {
        let slow = profile_from_anchor(1.0, 2.0, 0.01, 0.0, 1.0).unwrap();
        let fast = profile_from_anchor(1.5, 2.0, 0.01, 0.0, 1.0).unwrap();
        for &x in &[0.5, 2.0, 10.0] {
            assert!(fast.value(x) > slow.value(x));
        }
        for &x in &[-0.2, -0.5] {
            assert!(fast.value(x) < slow.value(x));
        }
    }

    #[test]
    fn barrier_pair_zero_flow_coincides() {
        let flow = FlowProfile::zero();
        let params = WaveParams::new(2.0, 1.0, 0.01, 16.0, 100.0, &flow).unwrap();
        let bp = barrier_pair(&params).unwrap();
        assert_eq!(bp.plus, PlanarProfile::new(1.0, 2.0, 0.01, 0.0, 1.0).unwrap());
        assert!((bp.minus.value(3.0) - bp.plus.value(3.0)).abs() < 1e-12);
        assert!((bp.left_value - bp.plus.value(-16.0)).abs() < 1e-15);
        assert!((bp.right_value - bp.plus.value(16.0)).abs() < 1e-15);
    }

    #[test]
    fn barrier_boundary_asymptotics() {
        let flow = FlowProfile::new(&[], &[0.5]).unwrap();
        for &l in &[8.0, 32.0, 128.0, 512.0] {
            let params = WaveParams::new(2.0, 1.0, 0.01, l, 100.0, &flow).unwrap();
            let bp = barrier_pair(&params).unwrap();
            // slope deficit C (δ/u)^{1/2} integrates to ≈ 2√δ (√B − 1)
            let gap = params.c0() * l + 1.0 - bp.right_value;
            let est = 2.0 * 0.1 * (bp.right_value.sqrt() - 1.0);
            assert!(gap > 0.5 * est && gap < 1.5 * est, "L={l}: {gap} vs {est}");
            assert!((bp.left_value - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_distance_decreases_with_delta() {
        let mut prev = f64::INFINITY;
        for &d in &[1e-2, 1e-3, 1e-4] {
            let r = envelope_limit(1.0, 2.0, d, 1.0, 3.0).unwrap();
            assert!(r.sup_distance < prev);
            assert!((r.value_at_anchor - 1.0).abs() < 1e-13);
            prev = r.sup_distance;
        }
        let r0 = envelope_limit(1.0, 2.0, 0.0, 1.0, 3.0).unwrap();
        assert_eq!(r0.sup_distance, 0.0);
    }
}
