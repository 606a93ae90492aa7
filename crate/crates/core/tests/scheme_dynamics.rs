use lbm_equiv::equilibrium::{ConservedState, EquilibriumModel};
use lbm_equiv::field::{FourierMode, InitialCondition, SpatialField};
use lbm_equiv::lattice::{Grid, MomentMatrix, VelocitySet};
use lbm_equiv::scheme::{moments_of, stream, Scheme, SchemeParams, SchemeState};
use lbm_equiv::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn d2q9_scheme(dt: f64, rates: &[f64]) -> Scheme {
    let vs = VelocitySet::d2q9();
    let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
    let model = EquilibriumModel::builtin(&vs, 1.0).unwrap();
    let params = SchemeParams::with_lambda(&vs, 1.0, dt, rates).unwrap();
    Scheme::new(vs, mm, model, params).unwrap()
}

fn wavy_state(scheme: &Scheme, n: usize) -> SchemeState {
    let grid = Grid::new(&[n, n]).unwrap();
    let init = InitialCondition {
        base: ConservedState::new(1.0, &[0.02, 0.01]),
        modes: vec![
            FourierMode { component: 0, amplitude: 0.01, wavenumber: [1, 1], phase: 0.0 },
            FourierMode { component: 2, amplitude: 0.01, wavenumber: [2, 0], phase: 0.5 },
        ],
    };
    let field = init.on_grid(&grid, 1.0 / n as f64).unwrap();
    scheme
        .equilibrium_state(grid.clone(), |c| field.state(grid.linear_index(&c)))
        .unwrap()
}

#[test]
fn d1q3_moments_by_hand() {
    let vs = VelocitySet::d1q3();
    let mm = MomentMatrix::new(&vs, 1.0, None).unwrap();
    let grid = Grid::new(&[1]).unwrap();
    let state = SchemeState::from_populations(grid.clone(), 3, 1.0, vec![1.0, 2.0, 3.0], 0).unwrap();
    assert_eq!(moments_of(&state, &mm).unwrap(), vec![6.0, -1.0, 5.0]);
    let zero = SchemeState::zeros(grid, 3, 1.0);
    assert!(moments_of(&zero, &mm).unwrap().iter().all(|&m| m == 0.0));
    let d2 = MomentMatrix::new(&VelocitySet::d2q9(), 1.0, None).unwrap();
    assert!(matches!(moments_of(&state, &d2), Err(Error::ShapeError(_))));
}

#[test]
fn relaxation_bounds() {
    let vs = VelocitySet::d2q9();
    for bad in [0.0, -0.5, 2.5, f64::NAN] {
        assert!(matches!(
            SchemeParams::with_lambda(&vs, 1.0, 0.1, &[bad; 6]),
            Err(Error::InvalidRelaxation { .. })
        ));
    }
    assert!(SchemeParams::with_lambda(&vs, 1.0, 0.1, &[2.0; 6]).is_ok());
    let p = SchemeParams::new(&vs, 0.1, 0.05, &[1.5; 6]).unwrap();
    assert_eq!(p.lambda(), 2.0);
    assert!(p.cfl_numbers(&vs).iter().all(|&c| (c - 1.0).abs() < 1e-15));
}

#[test]
fn collision_at_rates_one_and_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (s, expect) in [(1.0, 1), (2.0, 2)] {
        let scheme = d2q9_scheme(0.01, &[s; 6]);
        let grid = Grid::new(&[1, 1]).unwrap();
        let f: Vec<f64> = (0..9).map(|_| rng.gen_range(0.05..0.2)).collect();
        let mut state = SchemeState::from_populations(grid, 9, 0.01, f, 0).unwrap();
        let m = moments_of(&state, scheme.moments()).unwrap();
        let w = ConservedState::new(m[0], &m[1..3]);
        let m_eq = scheme.model().moments(scheme.moments(), &w).unwrap();
        scheme.collide(&mut state).unwrap();
        let after = moments_of(&state, scheme.moments()).unwrap();
        for k in 3..9 {
            let target = if expect == 1 { m_eq[k] } else { 2.0 * m_eq[k] - m[k] };
            assert!((after[k] - target).abs() < 1e-14, "s = {s}, k = {k}");
        }
        for k in 0..3 {
            assert!((after[k] - m[k]).abs() <= 1e-15 * m[0]);
        }
    }
}

#[test]
fn uniform_equilibrium_is_a_fixed_point() {
    let scheme = d2q9_scheme(0.1, &[1.3, 1.1, 1.7, 1.7, 1.9, 1.9]);
    let grid = Grid::new(&[8, 8]).unwrap();
    let w = ConservedState::new(1.1, &[0.03, -0.05]);
    let mut state = scheme.equilibrium_state(grid, |_| w).unwrap();
    let before = state.clone();
    scheme.run(&mut state, 0).unwrap();
    assert_eq!(state, before);
    scheme.run(&mut state, 50).unwrap();
    for (a, b) in state.populations().iter().zip(before.populations()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(state.step_count(), 50);
}

#[test]
fn pulse_travels_one_link_per_step() {
    let vs = VelocitySet::d2q9();
    let grid = Grid::new(&[8, 6]).unwrap();
    for j in 0..9 {
        let mut state = SchemeState::zeros(grid.clone(), 9, 1.0);
        let start = grid.linear_index(&[2, 3]);
        state.set_population(start, j, 1.0);
        stream(&mut state, &vs);
        let e = vs.direction(j);
        let target = grid.shifted(start, [e[0], e[1]]);
        assert_eq!(state.population(target, j), 1.0);
        assert_eq!(state.populations().iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn axis_length_streams_are_identity() {
    let vs = VelocitySet::d2q9();
    let grid = Grid::new(&[8, 8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f: Vec<f64> = (0..64 * 9).map(|_| rng.gen()).collect();
    let mut state = SchemeState::from_populations(grid, 9, 1.0, f.clone(), 0).unwrap();
    for _ in 0..8 {
        stream(&mut state, &vs);
    }
    assert_eq!(state.populations(), &f[..]);
}

#[test]
fn mass_is_conserved_over_long_runs() {
    let scheme = d2q9_scheme(1.0 / 32.0, &[1.2, 1.5, 1.9, 1.2, 1.5, 1.9]);
    let mut state = wavy_state(&scheme, 32);
    let m0 = state.total_mass();
    scheme.run(&mut state, 1000).unwrap();
    assert!(((state.total_mass() - m0) / m0).abs() <= 1e-12);
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let scheme = d2q9_scheme(1.0 / 48.0, &[1.2, 1.4, 1.6, 1.6, 1.8, 1.8]);
    let mut parallel = wavy_state(&scheme, 48);
    let mut serial = parallel.clone();
    scheme.run(&mut parallel, 40).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| scheme.run(&mut serial, 40)).unwrap();
    assert_eq!(parallel, serial);
}

#[test]
fn negative_density_reports_divergence() {
    let scheme = d2q9_scheme(0.1, &[1.5; 6]);
    let grid = Grid::new(&[2, 2]).unwrap();
    let mut state = SchemeState::from_populations(grid, 9, 0.1, vec![-0.1; 36], 7).unwrap();
    assert!(matches!(
        scheme.step(&mut state),
        Err(Error::SimulationDiverged { step: 7 })
    ));
}

proptest! {
    #[test]
    fn collide_keeps_conserved_moments(seed in 0u64..1000, s in 0.05f64..=2.0) {
        let scheme = d2q9_scheme(0.01, &[s, 1.1, s, 1.3, s, 1.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::new(&[4, 4]).unwrap();
        let f: Vec<f64> = (0..16 * 9).map(|_| rng.gen_range(0.02..0.3)).collect();
        let mut state = SchemeState::from_populations(grid, 9, 0.01, f, 0).unwrap();
        let before = moments_of(&state, scheme.moments()).unwrap();
        scheme.collide(&mut state).unwrap();
        let after = moments_of(&state, scheme.moments()).unwrap();
        for (b, a) in before.chunks(9).zip(after.chunks(9)) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-13 * b[0]);
            }
        }
    }
}
