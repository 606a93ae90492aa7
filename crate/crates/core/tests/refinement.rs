use lbm_equiv::equilibrium::ConservedState;
use lbm_equiv::field::SpatialField;
use lbm_equiv::lattice::Grid;
use lbm_equiv::scheme::moments_of;
use lbm_equiv::verify::{
    measure_viscosity, refinement_study, residuals, validate_resolutions, Experiment,
    ExperimentSetup, ShearWaveConfig,
};
use lbm_equiv::Error;

/// One step at `s = 1` from equilibrium: collision is the identity, so the
/// post-stream populations are `G^j(W(x − e_j))` and the residual is pure
/// streaming disequilibrium.
#[test]
fn single_step_residual_matches_brute_force() {
    let mut setup = ExperimentSetup::shear_wave(1e-3, 1.0).unwrap();
    let n = 8;
    setup.horizon = setup.dt(n);
    let r = residuals(&setup, n).unwrap();
    assert_eq!(r.steps, 1);

    let grid = Grid::new(&[n, 8]).unwrap();
    let field = setup.initial.on_grid(&grid, setup.dx(n)).unwrap();
    let vs = &setup.velocities;
    let mut state = setup.scheme(n).unwrap().equilibrium_state(grid.clone(), |_| ConservedState::new(1.0, &[0.0, 0.0])).unwrap();
    for node in 0..grid.num_nodes() {
        for j in 0..9 {
            let e = vs.direction(j);
            let src = grid.shifted(node, [-e[0], -e[1]]);
            let g = setup.model.distribution(&field.state(src)).unwrap();
            state.set_population(node, j, g[j]);
        }
    }
    let m = moments_of(&state, &setup.moments).unwrap();
    let mut brute = 0.0_f64;
    for (node, mk) in m.chunks(9).enumerate() {
        let w = state.conserved(node, vs, 1.0);
        let m_eq = setup.model.moments(&setup.moments, &w).unwrap();
        for k in 3..9 {
            brute = brute.max((mk[k] - m_eq[k]).abs());
        }
    }
    assert!(brute > 0.0);
    assert!((r.prop3 - brute).abs() <= 1e-15, "{} vs {}", r.prop3, brute);
}

#[test]
fn euler_and_navier_stokes_residuals_coincide_at_rate_two() {
    let setup = ExperimentSetup::convected_shear_wave(1e-3, 2.0, 0.05).unwrap();
    let r = residuals(&setup, 32).unwrap();
    assert_eq!(r.prop4, r.prop6);
}

#[test]
fn residual_tables_are_reproducible() {
    let setup = ExperimentSetup::convected_shear_wave(1e-3, 1.5, 0.05).unwrap();
    assert_eq!(residuals(&setup, 32).unwrap(), residuals(&setup, 32).unwrap());
}

#[test]
fn study_preconditions() {
    assert!(matches!(validate_resolutions(&[16, 32, 64]), Err(Error::InvalidStudy(_))));
    assert!(matches!(validate_resolutions(&[16, 32, 48, 64]), Err(Error::InvalidStudy(_))));
    let setup = ExperimentSetup::shear_wave(1e-3, 1.5).unwrap();
    assert!(matches!(residuals(&setup, 4), Err(Error::GridTooCoarse { .. })));
    let mut short = setup.clone();
    short.horizon = 0.25;
    assert!(matches!(
        refinement_study(&short, Experiment::Prop3, &[32, 64, 128, 256]),
        Err(Error::InvalidStudy(_))
    ));
}

#[test]
fn study_csv_and_summary() {
    let setup = ExperimentSetup::shear_wave(1e-3, 1.5).unwrap();
    let study = refinement_study(&setup, Experiment::Prop5, &[32, 64, 128, 256]).unwrap();
    assert!(study.passed, "{:?}", study.failure);
    let csv = study.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N,dx,dt,residual,slope_running");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("32,") && lines[1].ends_with(','));
    let summary = study.summary_line();
    assert!(summary.starts_with("prop5,") && summary.ends_with(",pass"));
}

#[test]
fn viscosity_tracks_the_time_step() {
    let cfg = ShearWaveConfig { s_shear: 1.5, ..ShearWaveConfig::default() };
    let coarse = measure_viscosity(&cfg, 32).unwrap();
    let fine = measure_viscosity(&cfg, 64).unwrap();
    assert!((coarse.predicted / fine.predicted - 2.0).abs() < 1e-12);
    assert!(((coarse.measured / fine.measured) / 2.0 - 1.0).abs() < 0.02);
    assert!(coarse.relative_error() < 0.02 && fine.relative_error() < 0.02);
    assert!(!fine.ill_conditioned);
    assert!(fine.mass_drift <= 1e-12);
}

#[test]
fn viscometer_flags_and_rejections() {
    let near = ShearWaveConfig { s_shear: 1.96, ..ShearWaveConfig::default() };
    assert!(measure_viscosity(&near, 32).unwrap().ill_conditioned);
    let loud = ShearWaveConfig { amplitude: 1e-2, ..ShearWaveConfig::default() };
    assert!(matches!(measure_viscosity(&loud, 32), Err(Error::InvalidStudy(_))));
    let flat = ShearWaveConfig { mode: 0, ..ShearWaveConfig::default() };
    assert!(matches!(measure_viscosity(&flat, 32), Err(Error::InvalidStudy(_))));
}
