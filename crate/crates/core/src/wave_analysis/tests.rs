use super::*;
use crate::grid_field::Grid;
use crate::planar_ode::profile_from_anchor;
use proptest::prelude::*;

fn planar_field(m: f64, c: f64, delta: f64, nx: usize, ny: usize, l: f64) -> ScalarField2D {
    let prof = profile_from_anchor(c, m, delta, 0.0, 1.0).unwrap();
    let g = Grid::new(nx, ny, l).unwrap();
    ScalarField2D::from_fn(g, |x, _| prof.value(x))
}

fn wavy(nx: usize, ny: usize, l: f64, shift: f64) -> ScalarField2D {
    let g = Grid::new(nx, ny, l).unwrap();
    ScalarField2D::from_fn(g, |x, y| {
        let s = x - shift;
        let base = 0.5 * (s + (s * s + 1.0).sqrt()) + 0.01;
        base * (1.0 + 0.1 * (2.0 * std::f64::consts::PI * y).cos() / (1.0 + s * s).sqrt())
    })
}

#[test]
fn pin_of_linear_field() {
    let g = Grid::new(201, 4, 100.0).unwrap();
    let (c, b) = (2.0, 250.0);
    let p = ScalarField2D::from_fn(g, |x, _| c * x + b);
    let pinned = pin_translate(&p, 100.0).unwrap();
    assert!((pinned.x_star - (100.0 - b) / c).abs() < 1e-9);
    assert!((pinned.k1 - 100.0).abs() < 1e-9 && (pinned.k2 - 100.0).abs() < 1e-9);
    let again = pin_translate(&pinned.resampled(), 100.0).unwrap();
    assert!(again.x_star.abs() < 1e-9);
}

#[test]
fn pin_rejects_mass_out_of_range() {
    let p = planar_field(2.0, 1.0, 0.01, 64, 4, 4.0);
    assert!(matches!(pin_translate(&p, 1e6), Err(AnalysisError::MassOutOfRange { .. })));
}

#[test]
fn monotonicity_of_planar_profile() {
    // large δ keeps the tail above δ in floating point across the window
    let (m, c, delta) = (2.0, 1.0, 0.5);
    let p = planar_field(m, c, delta, 128, 4, 4.0);
    let r = monotonicity_report(&p, 0.0);
    assert!(r.min_px > 0.0 && r.max_px < c);
    // the smallest quotient sits in the left tail
    let g = *p.grid();
    assert!((r.min_px - (p.get(1, 0) - p.get(0, 0)) / g.hx()).abs() < 1e-15);
    let flat = monotonicity_report(&ScalarField2D::constant(g, 3.0), 0.0);
    assert_eq!((flat.min_px, flat.max_px), (0.0, 0.0));
}

#[test]
fn planar_flux_invariant_is_exact() {
    let (m, c, delta) = (2.0, 1.0, 0.01);
    let p = planar_field(m, c, delta, 256, 4, 8.0);
    let params = WaveParams::new(m, c, delta, 8.0, 100.0, &FlowProfile::zero()).unwrap();
    let f = flux_invariant(&p, &FlowProfile::zero(), &params).unwrap();
    let exact = -c * delta.powf(1.0 / m);
    assert!(f.values.iter().all(|v| (v - exact).abs() < 1e-10), "{:?}", f.values.iter().map(|v| v - exact).fold(0.0f64, |a, b| a.max(b.abs())));
    assert!((f.normalized + c).abs() < 1e-9);
}

#[test]
fn nodal_flux_drift_converges_at_second_order() {
    let (m, c, delta) = (2.5, 1.0, 0.5);
    let params = WaveParams::new(m, c, delta, 4.0, 100.0, &FlowProfile::zero()).unwrap();
    let drift = |nx| {
        let p = planar_field(m, c, delta, nx, 4, 4.0);
        flux_invariant(&p, &FlowProfile::zero(), &params).unwrap().nodal_drift
    };
    let (d1, d2) = (drift(65), drift(129));
    let order = (d1 / d2).log2() * (128.0f64 / 64.0).log2().recip();
    assert!(order >= 1.8, "order {order} ({d1:e} → {d2:e})");
}

#[test]
fn alignment_recovers_exact_shift() {
    let p1 = wavy(257, 8, 8.0, 0.0);
    let p2 = wavy(257, 8, 8.0, 0.37);
    let a = align_translates(&p2, &p1).unwrap();
    let hx = p1.grid().hx();
    assert!((a.tau - 0.37).abs() <= hx / 10.0, "tau {}", a.tau);
    let same = align_translates(&p1, &p1).unwrap();
    assert!(same.tau.abs() <= hx / 10.0 && same.residual < 1e-12);
}

#[test]
fn planar_oscillation_vanishes() {
    let p = planar_field(2.0, 1.0, 0.01, 128, 8, 8.0);
    let o = oscillation_profile(&p, 2.0, 0.0, None, &[1.0, 4.0], 3).unwrap();
    assert!(o.o.iter().all(|&v| v == 0.0));
    assert!(o.fourier.iter().all(|l| l.amplitudes.iter().all(|&a| a < 1e-12)));
}

#[test]
fn power_fit_exact_and_refused() {
    let xs: Vec<f64> = (1..=200).map(|k| k as f64 * 0.5).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
    let f = oscillation::fit_power(&xs, &ys, 5.0, 90.0).unwrap();
    assert!((f.exponent + 1.0).abs() < 1e-12 && (f.constant - 3.0).abs() < 1e-10);
    assert!(matches!(oscillation::fit_power(&xs, &ys, 10.0, 50.0), Err(AnalysisError::WindowTooShort { .. })));
}

#[test]
fn fourier_amplitudes_of_a_pure_mode() {
    let g = Grid::new(64, 16, 8.0).unwrap();
    let m = 2.0;
    // choose w with exact |w_2| = 0.25·x and invert
    let w = ScalarField2D::from_fn(g, |x, y| (x + 10.0) * (1.0 + 0.5 * (4.0 * std::f64::consts::PI * y).cos()));
    let p = crate::grid_field::inverse_w_transform(&w, m).unwrap();
    let o = oscillation_profile(&p, m, 0.0, None, &[2.0], 3).unwrap();
    let amps = &o.fourier[0].amplitudes;
    let x = o.fourier[0].x + 10.0;
    assert!(amps[0] < 1e-12 && amps[2] < 1e-12);
    assert!((amps[1] - 0.25 * x).abs() < 1e-10 * x);
}

#[test]
fn fourier_bound_ratio() {
    let m = 2.0;
    let lines: Vec<FourierLine> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&x: &f64| FourierLine {
            x,
            amplitudes: (1..=3).map(|n| 0.7 * x.powf(1.0 / m - 1.0) / (n * n) as f64).collect(),
        })
        .collect();
    let b = fourier_bound(&lines, m).unwrap();
    assert!((b.constant - 0.7).abs() < 1e-12 && (b.far_ratio - 1.0).abs() < 1e-12);
    assert!(b.exponents.iter().all(|e| (e.unwrap() - b.predicted).abs() < 1e-12));
}

#[test]
fn interface_of_planar_field_is_flat() {
    let (m, c, delta) = (2.0, 1.0, 1e-3);
    let p = planar_field(m, c, delta, 512, 8, 8.0);
    let pinned = pin_translate(&p, 3.0).unwrap();
    let fb = free_boundary_extract(&[(&pinned, delta)], &[0.2, 0.1, 0.05], c).unwrap();
    assert!(fb.lipschitz.iter().all(|&l| l < 1e-9));
    let spread = fb.extrapolated.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - fb.extrapolated.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-9);
    assert!(fb.vertical_candidates.is_empty());
    assert!(matches!(
        free_boundary_extract(&[(&pinned, delta)], &[0.2, 1e-3], c),
        Err(AnalysisError::LevelTooLow { .. })
    ));
}

#[test]
fn interface_band_edges() {
    assert_eq!(interface_band(90.0, 110.0, 2.0, 5.0), (-55.0, -18.0));
}

fn synthetic(m: f64, c: f64, q: &[f64], origin: f64, nx: usize, l: f64) -> ScalarField2D {
    let g = Grid::new(nx, 4, l).unwrap();
    ScalarField2D::from_fn(g, |x, _| {
        let s = x - origin;
        if s <= 0.0 {
            1e-3
        } else {
            (c * s + q.iter().enumerate().map(|(k, qk)| qk * s.powf(1.0 - (k + 1) as f64 / m)).sum::<f64>()).max(1e-3)
        }
    })
}

#[test]
fn expansion_recovers_synthetic_coefficients() {
    let (m, c) = (2.5, 3.0);
    let q = [-0.4, 0.25];
    let origin = -100.0;
    let p = synthetic(m, c, &q, origin, 801, 100.0);
    let pinned = pin_translate(&p, 20.0).unwrap();
    let e = expansion_fit(&pinned, c, m, (10.0, 150.0)).unwrap();
    assert_eq!(e.exponents.len(), 2);
    assert!((e.exponents[0] - 0.6).abs() < 1e-12 && (e.exponents[1] - 0.2).abs() < 1e-12);
    for (a, b) in e.coefficients.iter().zip(&q) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!((e.origin - (origin - pinned.x_star)).abs() < 1e-8);
    assert!((e.q_star + c * e.origin).abs() < 1e-12);
    assert!(e.stable && e.residual_max < 1e-9);
    assert!((e.lambda - q[0] * c.powf(0.4) * 0.6).abs() < 1e-8);
    let i = 400;
    let x = p.grid().x(i) - pinned.x_star - e.origin;
    assert!((e.eval(c, x) - p.line_mean(i)).abs() < 1e-8);
}

#[test]
fn expansion_refuses_small_m_and_narrow_window() {
    let p = planar_field(2.0, 1.0, 0.01, 128, 4, 8.0);
    let pinned = pin_translate(&p, 3.0).unwrap();
    assert!(matches!(expansion_fit(&pinned, 1.0, 0.5, (1.0, 10.0)), Err(AnalysisError::ExpansionUnsupported { .. })));
    assert!(matches!(
        expansion_fit(&pinned, 1.0, 2.5, (5.0, 5.2)),
        Err(AnalysisError::TooFewPoints { .. }) | Err(AnalysisError::IllConditioned { .. })
    ));
}

#[test]
fn planar_expansion_coefficients() {
    // q1 = −m/(m−1) δ^{1/m} c^{1−1/m}; for m = 5/2 also q2 = δ^{1/m} c^{−1/m} q1 /(m−2)
    let (m, c, delta) = (2.5, 4.0, 1e-4);
    let prof = profile_from_anchor(c, m, delta, 0.0, 1.0).unwrap();
    let g = Grid::new(513, 4, 64.0).unwrap();
    let p = ScalarField2D::from_fn(g, |x, _| prof.value(x + 40.0));
    let pinned = pin_translate(&p, 100.0).unwrap();
    let e = expansion_fit(&pinned, c, m, (16.0, 40.0)).unwrap();
    let q1 = -m / (m - 1.0) * delta.powf(1.0 / m) * c.powf(1.0 - 1.0 / m);
    let q2 = delta.powf(1.0 / m) * c.powf(-1.0 / m) * q1 / (m - 2.0);
    assert!((e.coefficients[0] - q1).abs() < 1e-3 * q1.abs(), "{} vs {q1}", e.coefficients[0]);
    assert!((e.coefficients[1] - q2).abs() < 0.05 * q2.abs(), "{} vs {q2}", e.coefficients[1]);
    assert!(e.stable);

    let (m, c, delta) = (2.0, 1.0, 0.01);
    let prof = profile_from_anchor(c, m, delta, 0.0, 1.0).unwrap();
    let g = Grid::new(4001, 4, 2000.0).unwrap();
    let p = ScalarField2D::from_fn(g, |x, _| prof.value(x));
    let pinned = pin_translate(&p, 100.0).unwrap();
    let e = expansion_fit(&pinned, c, m, (100.0, 1500.0)).unwrap();
    assert!(e.degraded && e.log_coefficient.is_some());
    let q1 = -m / (m - 1.0) * delta.powf(1.0 / m) * c.powf(1.0 - 1.0 / m);
    assert!((e.coefficients[0] - q1).abs() < 0.02 * q1.abs(), "{} vs {q1}", e.coefficients[0]);
}

#[test]
fn blow_down_of_linear_wave() {
    let g = Grid::new(401, 4, 200.0).unwrap();
    let c = 2.0;
    let p = ScalarField2D::from_fn(g, |x, _| (c * (x + 150.0)).max(0.0) + 1e-3);
    let pinned = pin_translate(&p, 50.0).unwrap();
    let r = planar_limit_check(&pinned, &[0.1, 0.01, 1e-4], c);
    assert_eq!(r.unattainable, vec![1e-4]);
    assert!(r.entries.iter().all(|b| (b.min - c - b.eps * 50.0).abs() < 1e-9));
    assert!(r.growth_constant.unwrap() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pinned_mass_is_k(k in 2.0f64..12.0, shift in -2.0f64..2.0) {
        let p = wavy(129, 8, 16.0, shift);
        let pinned = pin_translate(&p, k).unwrap();
        let line = pinned.line_at(0.0);
        let mean = line.iter().sum::<f64>() / line.len() as f64;
        prop_assert!((mean - k).abs() < 1e-3 * k);
    }

    #[test]
    fn level_curves_are_ordered(shift in -1.0f64..1.0, lo in 0.05f64..0.1) {
        let p = wavy(129, 8, 8.0, shift);
        let pinned = pin_translate(&p, 2.0).unwrap();
        let levels = [4.0 * lo, 2.0 * lo, lo];
        let fb = free_boundary_extract(&[(&pinned, 0.01)], &levels, 1.0).unwrap();
        for w in fb.curves.windows(2) {
            for (hi, low) in w[0].iter().zip(&w[1]) {
                prop_assert!(low <= hi);
            }
        }
    }

    #[test]
    fn alignment_is_antisymmetric(shift in -0.6f64..0.6) {
        let p1 = wavy(161, 8, 10.0, 0.0);
        let p2 = wavy(161, 8, 10.0, shift);
        let hx = p1.grid().hx();
        let a = align_translates(&p1, &p2).unwrap();
        let b = align_translates(&p2, &p1).unwrap();
        prop_assert!((a.tau + b.tau).abs() <= hx / 10.0);
    }

    #[test]
    fn expansion_is_self_consistent(q1 in -1.0f64..-0.3, r in -0.1f64..0.1) {
        let (m, c) = (1.5, 2.0);
        let origin = -150.0;
        let base = synthetic(m, c, &[q1], origin, 601, 150.0);
        let g = *base.grid();
        let mut p = base.clone();
        for i in 0..g.nx {
            let s = g.x(i) - origin;
            if s > 1.0 {
                for j in 0..g.ny {
                    p.set(i, j, base.get(i, j) + r / s);
                }
            }
        }
        let pinned = pin_translate(&p, 50.0).unwrap();
        let e = expansion_fit(&pinned, c, m, (30.0, 200.0)).unwrap();
        prop_assert_eq!(e.exponents.len(), 1);
        prop_assert!(e.stable, "{:?}", e.stability);
        let x0 = pinned.x_star + e.origin;
        for i in 0..g.nx {
            let s = g.x(i) - x0;
            if s >= 30.0 && s <= 200.0 {
                prop_assert!((e.eval(c, s) - p.line_mean(i)).abs() <= e.residual_max * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}
