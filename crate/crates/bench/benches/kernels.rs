use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pmewaves::newton_solver::linear_solve;
use pmewaves::planar_ode::PlanarProfile;
use pmewaves::wave_analysis::pin_translate;
use pmewaves::{solve_truncated, NewtonOptions};
use pmewaves_bench::problem;

fn kernels(c: &mut Criterion) {
    let prob = problem(128, 16);
    let (p, _) = solve_truncated(&prob, prob.initial_guess(), &NewtonOptions::default()).expect("solve");

    c.bench_function("residual 128x16", |b| b.iter(|| prob.residual(black_box(&p)).unwrap()));
    c.bench_function("jacobian 128x16", |b| b.iter(|| prob.jacobian(black_box(&p)).unwrap()));
    let jac = prob.jacobian(&p).unwrap();
    let rhs = vec![1.0; jac.unknowns()];
    c.bench_function("banded solve 128x16", |b| b.iter(|| linear_solve(&jac, black_box(&rhs)).unwrap()));
    c.bench_function("pin translate 128x16", |b| b.iter(|| pin_translate(black_box(&p), 20.0).unwrap()));

    let prof = PlanarProfile::new(4.0, 2.5, 1e-4, 0.0, 1.0).unwrap();
    c.bench_function("planar profile 1k points", |b| {
        b.iter(|| (0..1000).map(|k| prof.value(-30.0 + 0.06 * k as f64)).sum::<f64>())
    });

    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    g.bench_function("truncated solve 64x8", |b| {
        let small = problem(64, 8);
        b.iter(|| solve_truncated(&small, small.initial_guess(), &NewtonOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
