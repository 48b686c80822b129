use becgrape::gp::{DvrTransform, GPParams, GpPropagator};
use becgrape::lattice1d::{hamiltonian_at, LinearPropagator};
use becgrape::lattice2d::{build_kinetic2d, hamiltonian2d_at, Lattice2DModel};
use becgrape::numkernel::{hermiticity_defect, norm, unitarity_defect};
use becgrape::states::{fidelity, plane_wave_2d, population_distribution, squeezed_state};
use becgrape::{ComplexVector, ControlGrid, DensityFreezing, Lattice1DParams, Lattice2DParams, PhaseTriple};
use num_complex::Complex64;
use proptest::prelude::*;

fn state(parts: &[(f64, f64)]) -> ComplexVector {
    let v: ComplexVector = parts.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    let n = norm(&v);
    v.mapv(|z| z / n)
}

fn components(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_map_round_trips(m_max in 1usize..7, n_max in 1usize..7, a in -6i64..7, b in -6i64..7) {
        let map = Lattice2DParams::new(1.0, m_max, n_max).unwrap().index_map();
        if map.contains(a, b) {
            let k = map.flatten(a, b).unwrap();
            prop_assert_eq!(map.unflatten(k).unwrap(), (a, b));
        } else {
            prop_assert!(map.flatten(a, b).is_err());
        }
    }

    #[test]
    fn hamiltonians_are_hermitian(s in 0.0..20.0f64, phi in -10.0..10.0f64, p12 in -7.0..7.0f64, p23 in -7.0..7.0f64, p31 in -7.0..7.0f64) {
        let l = Lattice1DParams::new(s, 0.2, 6).unwrap();
        prop_assert!(hermiticity_defect(&hamiltonian_at(&l, phi)).0 < 1e-14);
        let p = Lattice2DParams::new(s.max(0.1), 3, 2).unwrap();
        let h = hamiltonian2d_at(&p, &PhaseTriple::new(p12, p23, p31)).unwrap();
        prop_assert!(hermiticity_defect(&h).0 < 1e-14);
    }

    #[test]
    fn dvr_transform_is_unitary(n_max in 0usize..40, q in -0.5..0.5f64) {
        let l = Lattice1DParams::new(5.0, q, n_max).unwrap();
        prop_assert!(unitarity_defect(DvrTransform::new(&l).matrix()) < 1e-12);
    }

    #[test]
    fn grid_round_trip_and_density_normalization(parts in components(11)) {
        let l = Lattice1DParams::new(5.0, 0.0, 5).unwrap();
        let psi = state(&parts);
        let t = DvrTransform::new(&l);
        let back = t.from_grid(&t.to_grid(&psi));
        let err = back.iter().zip(&psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-13);
        let total: f64 = t.density(&psi).iter().sum::<f64>() * t.weight();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_steps_preserve_norm(parts in components(15), phases in prop::collection::vec(-4.0..4.0f64, 1..40), dt in 0.001..0.5f64) {
        let l = Lattice1DParams::new(5.0, 0.1, 7).unwrap();
        let psi0 = state(&parts);
        let states = LinearPropagator::new(&l, dt).unwrap().run(&psi0, &phases);
        for s in &states {
            prop_assert!((norm(s) - 1.0).abs() < 1e-12);
            let p: f64 = population_distribution(s).iter().sum();
            prop_assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_field_steps_preserve_norm(parts in components(11), beta in 0.0..2.0f64, phases in prop::collection::vec(-3.0..3.0f64, 1..15)) {
        let l = Lattice1DParams::new(5.0, 0.0, 5).unwrap();
        let p = GPParams::new(l, beta).unwrap();
        let run = GpPropagator::new(&p, 0.05, DensityFreezing::StepAverage).unwrap().run(&state(&parts), &phases).unwrap();
        for s in &run.states {
            prop_assert!((norm(s) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lattice2d_steps_preserve_norm_and_fidelity_bounds(values in prop::collection::vec(-4.0..4.0f64, 30)) {
        let p = Lattice2DParams::new(5.0, 3, 3).unwrap();
        let control = ControlGrid::new(2.0, values.chunks(10).map(<[f64]>::to_vec).collect(), vec![true; 3]).unwrap();
        let psi0 = plane_wave_2d(0, 0, &p).unwrap();
        let states = Lattice2DModel::new(&p).unwrap().run(&psi0, &control).unwrap();
        let target = plane_wave_2d(1, 1, &p).unwrap();
        for s in &states {
            prop_assert!((norm(s) - 1.0).abs() < 1e-12);
            let f = fidelity(&target, s).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        }
    }

    #[test]
    fn kinetic_diagonal_is_nonnegative(m_max in 1usize..8, n_max in 1usize..8) {
        let p = Lattice2DParams::new(1.0, m_max, n_max).unwrap();
        let k = build_kinetic2d(&p);
        prop_assert!(k.diag().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
    }

    #[test]
    fn squeezed_states_are_normalized(xi in 0.05..3.0f64, x_c in -1.0..1.0f64, p_c in -2.0..2.0f64) {
        let l = Lattice1DParams::new(5.0, 0.0, 10).unwrap();
        let psi = squeezed_state(x_c, p_c, xi, &l).unwrap();
        prop_assert!((norm(&psi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversing_a_pulse_twice_is_the_identity(values in prop::collection::vec(-3.0..3.0f64, 1..50)) {
        let c = ControlGrid::new(1.0, vec![values], vec![true]).unwrap();
        prop_assert_eq!(c.reversed().reversed(), c);
    }
}
