//! Structural invariants of converged truncated solves over random flows.

use pmewaves::newton_solver::{jacobian_check, sandwich_violation};
use pmewaves::wave_analysis::{flux_invariant, monotonicity_report};
use pmewaves::{solve_truncated, BarrierOptions, FlowProfile, Grid, NewtonOptions, WaveParams, WaveProblem};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn converged_solutions_keep_the_invariants(
        m in 1.5f64..3.5,
        a1 in -0.6f64..0.6,
        b1 in -0.6f64..0.6,
        b2 in -0.3f64..0.3,
        delta in 0.05f64..0.2,
    ) {
        let c = 3.0;
        let flow = FlowProfile::new(&[a1], &[b1, b2]).unwrap();
        let params = WaveParams::new(m, c, delta, 6.0, 10.0, &flow).unwrap();
        let grid = Grid::new(49, 8, 6.0).unwrap();
        let problem = WaveProblem::new(params.clone(), flow.clone(), grid, BarrierOptions::default()).unwrap();
        let (p, report) = solve_truncated(&problem, problem.initial_guess(), &NewtonOptions::default()).unwrap();
        prop_assert!(report.converged);
        let mono = monotonicity_report(&p, 2.0 * delta);
        prop_assert!(mono.min_px >= -1e-8, "min p_x {}", mono.min_px);
        prop_assert!(mono.max_px <= params.c1() + 1e-6, "max p_x {} vs c1 {}", mono.max_px, params.c1());
        let b = problem.right_value();
        prop_assert!(sandwich_violation(&problem, &p) <= 1e-6 * b);
        let f = flux_invariant(&p, &flow, &params).unwrap();
        prop_assert!(f.drift <= 5.0 * grid.hx().powi(2) * f.scale, "drift {}", f.drift);
        let j = jacobian_check(&problem, &p, 2, 1e-6, 11).unwrap();
        prop_assert!(j.max_relative_error <= 1e-5);
        prop_assert!(p.min() >= delta * (1.0 - 1e-12));
    }
}
