//! Fixtures shared by the benchmarks.

use pmewaves::{BarrierOptions, FlowProfile, Grid, WaveParams, WaveProblem};

/// The generic shear-flow problem at δ = 0.1 on an `nx × ny` grid, `L = 16`.
pub fn problem(nx: usize, ny: usize) -> WaveProblem {
    let flow = FlowProfile::new(&[0.0, 0.3], &[0.8]).expect("flow");
    let params = WaveParams::new(2.5, 4.0, 0.1, 16.0, 100.0, &flow).expect("params");
    let grid = Grid::new(nx, ny, 16.0).expect("grid");
    WaveProblem::new(params, flow, grid, BarrierOptions::default()).expect("problem")
}
