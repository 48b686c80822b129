//! Benchmark fixtures shared by the criterion targets in `benches/`.

use becgrape::states::{plane_wave, plane_wave_2d, squeezed_state};
use becgrape::{ComplexVector, ControlGrid, GPParams, Lattice1DParams, Lattice2DParams, Problem};

/// Lattice used for the 1D benchmarks: s = 5, q = 0, orders -10..=10.
pub fn lattice_1d() -> Lattice1DParams {
    Lattice1DParams::new(5.0, 0.0, 10).expect("valid lattice")
}

/// Squeezed initial state of width 1/2 with a zero-phase pulse over `[0, 7.6]`.
pub fn gp_fixture(beta: f64, n_steps: usize) -> (Problem, ComplexVector, ControlGrid) {
    let l = lattice_1d();
    let psi0 = squeezed_state(0.0, 0.0, 0.5, &l).expect("valid state");
    let control = ControlGrid::constant(7.6, n_steps, 1, 0.0).expect("valid grid");
    (Problem::gp(GPParams::new(l, beta).expect("valid beta")), psi0, control)
}

/// Transfer from |0> to |2> with a sinusoidal trial pulse.
pub fn linear_fixture(n_steps: usize) -> (Problem, ComplexVector, ComplexVector, ControlGrid) {
    let l = lattice_1d();
    let values = (0..n_steps).map(|k| 0.5 * (k as f64 * 0.05).sin()).collect();
    let control = ControlGrid::new(7.6, vec![values], vec![true]).expect("valid grid");
    (Problem::Linear1D(l), plane_wave(0, &l).expect("in range"), plane_wave(2, &l).expect("in range"), control)
}

/// 2D lattice at s = 5, M = N = 5, with a three-channel trial pulse over 250 us.
pub fn lattice2d_fixture(n_steps: usize) -> (Problem, ComplexVector, ComplexVector, ControlGrid) {
    let p = Lattice2DParams::new(5.0, 5, 5).expect("valid lattice");
    let values = (0..3).map(|c| (0..n_steps).map(|k| 0.3 * ((k + 7 * c) as f64 * 0.1).cos()).collect()).collect();
    let control = ControlGrid::new(9.556, values, vec![true; 3]).expect("valid grid");
    (
        Problem::lattice2d(p),
        plane_wave_2d(0, 0, &p).expect("in range"),
        plane_wave_2d(1, 1, &p).expect("in range"),
        control,
    )
}
