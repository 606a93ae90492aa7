//! Refinement studies under the acoustic scaling (`Δt = Δx/λ`, λ fixed) and
//! shear-wave viscometry.
//!
//! Every run starts at equilibrium, `f = G(W(x))`, and is measured after a
//! fixed physical time, so the initial layer has relaxed away.

use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use crate::analysis::{
    dhumieres_coefficient, euler_flux_divergence, lemma_prediction, ns_flux_correction,
    shear_moment_index, tensor_divergence,
};
use crate::equilibrium::{ConservedState, EquilibriumModel};
use crate::error::{Error, Result};
use crate::field::{FourierMode, InitialCondition, SmoothField, SpatialField};
use crate::io::fmt_f64;
use crate::lattice::{Grid, MomentMatrix, VelocitySet};
use crate::scheme::{moments_of, Scheme, SchemeParams, SchemeState};

pub const MIN_RESOLUTIONS: usize = 4;
/// Minimum coefficient of determination of an accepted log-log fit.
pub const MIN_R2: f64 = 0.99;
pub const FIRST_ORDER_TOLERANCE: f64 = 0.2;
pub const SECOND_ORDER_TOLERANCE: f64 = 0.25;
/// The control study (lemma without its defect term) must stay below this.
pub const CONTROL_SLOPE_CEILING: f64 = 1.3;
/// Allowed relative drift of the global mass over a run.
pub const MASS_DRIFT_TOLERANCE: f64 = 1e-12;
/// Minimum number of steps before the coarsest run is measured.
pub const MIN_SETTLING_STEPS: u64 = 20;
pub const DEFAULT_RESOLUTIONS: [usize; 4] = [32, 64, 128, 256];
pub const DEFAULT_AMPLITUDE: f64 = 1e-3;
pub const DEFAULT_RATE: f64 = 1.5;
pub const DEFAULT_STREAM: f64 = 0.05;
/// Relaxation ratio from which viscometry is flagged as ill-conditioned.
pub const ILL_CONDITIONED_RATE: f64 = 1.95;

/// Everything a refinement study keeps fixed while `N` changes.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub velocities: VelocitySet,
    pub moments: MomentMatrix,
    pub model: EquilibriumModel,
    /// `s_k` for `k = d+1..=J`.
    pub relaxation: Vec<f64>,
    /// Domain length along axis 0; `Δx = L/N`.
    pub length: f64,
    /// Nodes along axis 1; `None` makes the grid square. Ignored in 1-D.
    pub transverse_nodes: Option<usize>,
    pub initial: InitialCondition,
    /// Physical measurement time `T`.
    pub horizon: f64,
}

impl ExperimentSetup {
    /// D2Q9 transverse shear wave `q_y = ε sin(2π x/L)` with every
    /// non-conserved moment relaxed at `s`, `L = λ = 1` and `T = 1`.
    pub fn shear_wave(amplitude: f64, s: f64) -> Result<Self> {
        let velocities = VelocitySet::d2q9();
        let moments = MomentMatrix::new(&velocities, 1.0, None)?;
        let model = EquilibriumModel::builtin(&velocities, 1.0)?;
        Ok(Self {
            relaxation: vec![s; velocities.len() - 3],
            velocities,
            moments,
            model,
            length: 1.0,
            transverse_nodes: Some(8),
            initial: InitialCondition::shear_wave(amplitude, 1),
            horizon: 1.0,
        })
    }

    /// Shear wave carried by a uniform stream `u0` along x, plus a density
    /// mode `ρ = 1 + ε sin(2π x/L)`. Without the stream and the density
    /// mode the second-order terms of the mass and momentum equations vanish
    /// by symmetry and the residuals converge faster than the asserted order.
    pub fn convected_shear_wave(amplitude: f64, s: f64, u0: f64) -> Result<Self> {
        let mut setup = Self::shear_wave(amplitude, s)?;
        setup.initial.base.momentum = [u0, 0.0];
        setup.initial.modes.push(FourierMode {
            component: 0,
            amplitude,
            wavenumber: [1, 0],
            phase: 0.0,
        });
        Ok(setup)
    }

    /// Preset used by `experiment` in the default study set.
    pub fn preset(experiment: Experiment) -> Result<Self> {
        match experiment {
            Experiment::Prop3 | Experiment::Prop5 | Experiment::Prop5Control => {
                Self::shear_wave(DEFAULT_AMPLITUDE, DEFAULT_RATE)
            }
            Experiment::Prop4 | Experiment::Prop6 | Experiment::Prop6Mass => {
                Self::convected_shear_wave(DEFAULT_AMPLITUDE, DEFAULT_RATE, DEFAULT_STREAM)
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        self.moments.lambda()
    }

    pub fn dx(&self, n: usize) -> f64 {
        self.length / n as f64
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.dx(n) / self.lambda()
    }

    pub fn grid(&self, n: usize) -> Result<Grid> {
        match self.velocities.dim() {
            1 => Grid::new(&[n]),
            _ => Grid::new(&[n, self.transverse_nodes.unwrap_or(n)]),
        }
    }

    pub fn scheme(&self, n: usize) -> Result<Scheme> {
        let params = SchemeParams::new(&self.velocities, self.dx(n), self.dt(n), &self.relaxation)?;
        Scheme::new(
            self.velocities.clone(),
            self.moments.clone(),
            self.model.clone(),
            params,
        )
    }

    /// Steps to reach the horizon at resolution `n`.
    pub fn steps(&self, n: usize) -> u64 {
        (self.horizon / self.dt(n)).round() as u64
    }
}

/// Which residual a study tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Experiment {
    /// `‖m^k − m^k_eq‖∞`, `k > d`.
    Prop3,
    /// Momentum residual with the bare Euler flux.
    Prop4,
    /// `‖m^k − (m^k_eq − (Δt/s_k) θ^k)‖∞`.
    Prop5,
    /// Prop5 with the defect term left out.
    Prop5Control,
    /// Momentum residual with the second-order corrected flux.
    Prop6,
    /// Mass residual `∂_t ρ + ∂_β q^β`.
    Prop6Mass,
}

/// What a fitted slope must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SlopeExpectation {
    Within { expected: f64, tolerance: f64 },
    Below(f64),
}

impl SlopeExpectation {
    pub fn accepts(&self, slope: f64) -> bool {
        match *self {
            Self::Within {
                expected,
                tolerance,
            } => (slope - expected).abs() <= tolerance,
            Self::Below(ceiling) => slope < ceiling,
        }
    }
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Self::Prop3,
        Self::Prop4,
        Self::Prop5,
        Self::Prop5Control,
        Self::Prop6,
        Self::Prop6Mass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Prop3 => "prop3",
            Self::Prop4 => "prop4",
            Self::Prop5 => "prop5",
            Self::Prop5Control => "prop5-control",
            Self::Prop6 => "prop6",
            Self::Prop6Mass => "prop6-mass",
        }
    }

    pub fn expectation(self) -> SlopeExpectation {
        let first = SlopeExpectation::Within {
            expected: 1.0,
            tolerance: FIRST_ORDER_TOLERANCE,
        };
        let second = SlopeExpectation::Within {
            expected: 2.0,
            tolerance: SECOND_ORDER_TOLERANCE,
        };
        match self {
            Self::Prop3 | Self::Prop4 => first,
            Self::Prop5 | Self::Prop6 | Self::Prop6Mass => second,
            Self::Prop5Control => SlopeExpectation::Below(CONTROL_SLOPE_CEILING),
        }
    }
}

/// All residual norms of one run at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSet {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub steps: u64,
    pub prop3: f64,
    pub prop4: f64,
    pub prop5: f64,
    pub prop5_control: f64,
    pub prop6: f64,
    pub prop6_mass: f64,
    /// Relative change of the global mass over the run.
    pub mass_drift: f64,
}

impl ResidualSet {
    pub fn get(&self, experiment: Experiment) -> f64 {
        match experiment {
            Experiment::Prop3 => self.prop3,
            Experiment::Prop4 => self.prop4,
            Experiment::Prop5 => self.prop5,
            Experiment::Prop5Control => self.prop5_control,
            Experiment::Prop6 => self.prop6,
            Experiment::Prop6Mass => self.prop6_mass,
        }
    }
}

fn checked_step(scheme: &Scheme, state: &mut SchemeState) -> Result<()> {
    scheme.step(state)?;
    if !state.is_finite() {
        return Err(Error::SimulationDiverged {
            step: state.step_count(),
        });
    }
    Ok(())
}

fn max_free_difference(a: &[f64], b: &[f64], width: usize, first_free: usize) -> f64 {
    a.chunks_exact(width)
        .zip(b.chunks_exact(width))
        .flat_map(|(x, y)| x[first_free..].iter().zip(&y[first_free..]))
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Runs to the horizon at resolution `n` and evaluates every residual on the
/// snapshots at `T − Δt`, `T` and `T + Δt`.
pub fn residuals(setup: &ExperimentSetup, n: usize) -> Result<ResidualSet> {
    let scheme = setup.scheme(n)?;
    let grid = setup.grid(n)?;
    let dx = setup.dx(n);
    let dt = setup.dt(n);
    let lambda = setup.lambda();
    let vs = &setup.velocities;
    let dim = vs.dim();
    let steps = setup.steps(n).max(1);

    let init = setup.initial.on_grid(&grid, dx)?;
    let mut state = scheme.equilibrium_state(grid.clone(), |c| {
        init.state(grid.linear_index(&c[..grid.dim()]))
    })?;
    let mass0 = state.total_mass();

    for _ in 0..steps - 1 {
        checked_step(&scheme, &mut state)?;
    }
    let prev = state.conserved_field(vs, lambda);
    checked_step(&scheme, &mut state)?;
    let mid_state = state.clone();
    checked_step(&scheme, &mut state)?;
    let next = state.conserved_field(vs, lambda);
    let mass_drift = ((state.total_mass() - mass0) / mass0).abs();

    let field = SmoothField::new(grid.clone(), dx, mid_state.conserved_field(vs, lambda))?;
    let m = moments_of(&mid_state, &setup.moments)?;
    let width = setup.moments.size();
    let first_free = dim + 1;

    let lemma = lemma_prediction(&field, &scheme, true)?;
    let equilibrium = lemma_prediction(&field, &scheme, false)?;
    let prop5 = max_free_difference(&m, lemma.values(), width, first_free);
    let prop5_control = max_free_difference(&m, equilibrium.values(), width, first_free);

    let euler = euler_flux_divergence(&field, &setup.model)?;
    let corrected = tensor_divergence(&grid, dx, &ns_flux_correction(&field, &scheme)?);
    let (mut prop4, mut prop6, mut prop6_mass) = (0.0_f64, 0.0_f64, 0.0_f64);
    for node in 0..grid.num_nodes() {
        let dt_w = |i: usize| (next[node].get(i) - prev[node].get(i)) / (2.0 * dt);
        prop6_mass = prop6_mass.max((dt_w(0) + euler[node][0]).abs());
        for a in 0..dim {
            prop4 = prop4.max((dt_w(a + 1) + euler[node][a + 1]).abs());
            prop6 = prop6.max((dt_w(a + 1) + corrected[node][a]).abs());
        }
    }

    Ok(ResidualSet {
        n,
        dx,
        dt,
        steps,
        prop3: prop5_control,
        prop4,
        prop5,
        prop5_control,
        prop6,
        prop6_mass,
        mass_drift,
    })
}

pub fn residual_prop3(setup: &ExperimentSetup, n: usize) -> Result<f64> {
    residuals(setup, n).map(|r| r.prop3)
}

pub fn residual_prop4(setup: &ExperimentSetup, n: usize) -> Result<f64> {
    residuals(setup, n).map(|r| r.prop4)
}

pub fn residual_prop5(setup: &ExperimentSetup, n: usize) -> Result<f64> {
    residuals(setup, n).map(|r| r.prop5)
}

pub fn residual_prop6(setup: &ExperimentSetup, n: usize) -> Result<f64> {
    residuals(setup, n).map(|r| r.prop6)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::FitRejected("need at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::FitRejected(
            "log-log fit needs positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly);
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, R²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// At least [`MIN_RESOLUTIONS`] entries, each double the previous one.
pub fn validate_resolutions(resolutions: &[usize]) -> Result<()> {
    if resolutions.len() < MIN_RESOLUTIONS {
        return Err(Error::InvalidStudy(format!(
            "{} resolutions given, at least {MIN_RESOLUTIONS} are required",
            resolutions.len()
        )));
    }
    if let Some(w) = resolutions.windows(2).find(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidStudy(format!(
            "resolutions must double: {} is followed by {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub experiment: String,
    pub rows: Vec<StudyRow>,
    pub fit: Option<LogLogFit>,
    pub expectation: SlopeExpectation,
    /// Residuals strictly decrease with every doubling.
    pub monotone: bool,
    pub passed: bool,
    /// Why the study failed, when it did.
    pub failure: Option<String>,
}

impl RefinementStudy {
    pub fn from_rows(experiment: &str, rows: Vec<StudyRow>, expectation: SlopeExpectation) -> Self {
        let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
        let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let monotone = res.windows(2).all(|w| w[1] < w[0]);
        let (fit, failure) = match fit_loglog(&dts, &res) {
            Ok(fit) if fit.r2 < MIN_R2 => (
                Some(fit),
                Some(format!("R² = {:.5} below {MIN_R2}", fit.r2)),
            ),
            Ok(fit) if !expectation.accepts(fit.slope) => (
                Some(fit),
                Some(format!("slope {:.4} outside {expectation:?}", fit.slope)),
            ),
            Ok(fit) if !monotone => (Some(fit), Some("residuals do not decrease".into())),
            Ok(fit) => (Some(fit), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            experiment: experiment.to_string(),
            rows,
            fit,
            expectation,
            monotone,
            passed: failure.is_none(),
            failure,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Columns `N,dx,dt,residual,slope_running`; the running slope compares
    /// each row with the previous one.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,dx,dt,residual,slope_running\n");
        for (i, r) in self.rows.iter().enumerate() {
            let running = if i == 0 {
                String::new()
            } else {
                let p = &self.rows[i - 1];
                fmt_f64((r.residual / p.residual).ln() / (r.dt / p.dt).ln())
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                fmt_f64(r.dx),
                fmt_f64(r.dt),
                fmt_f64(r.residual),
                running
            );
        }
        out
    }

    /// `experiment,fitted_slope,r2,pass|fail`.
    pub fn summary_line(&self) -> String {
        let (slope, r2) = self
            .fit
            .map(|f| (format!("{:.4}", f.slope), format!("{:.6}", f.r2)))
            .unwrap_or_else(|| ("nan".into(), "nan".into()));
        let verdict = if self.passed { "pass" } else { "fail" };
        format!("{},{},{},{}", self.experiment, slope, r2, verdict)
    }
}

/// Runs every resolution once and builds one study per experiment. Any run
/// whose global mass drifts by more than [`MASS_DRIFT_TOLERANCE`] fails all
/// studies.
pub fn refinement_studies(
    setup: &ExperimentSetup,
    resolutions: &[usize],
    experiments: &[Experiment],
) -> Result<Vec<RefinementStudy>> {
    validate_resolutions(resolutions)?;
    let coarse_steps = setup.steps(resolutions[0]);
    if coarse_steps < MIN_SETTLING_STEPS {
        return Err(Error::InvalidStudy(format!(
            "horizon gives {coarse_steps} steps on the coarsest grid, at least {MIN_SETTLING_STEPS} are required"
        )));
    }
    let sets = resolutions
        .iter()
        .map(|&n| residuals(setup, n))
        .collect::<Result<Vec<_>>>()?;
    let worst_drift = sets.iter().fold(0.0_f64, |acc, s| acc.max(s.mass_drift));
    Ok(experiments
        .iter()
        .map(|&e| {
            let rows = sets
                .iter()
                .map(|s| StudyRow {
                    n: s.n,
                    dx: s.dx,
                    dt: s.dt,
                    residual: s.get(e),
                })
                .collect();
            let mut study = RefinementStudy::from_rows(e.name(), rows, e.expectation());
            if worst_drift > MASS_DRIFT_TOLERANCE {
                study.passed = false;
                study.failure = Some(format!("mass drift {worst_drift:e}"));
            }
            study
        })
        .collect())
}

pub fn refinement_study(
    setup: &ExperimentSetup,
    experiment: Experiment,
    resolutions: &[usize],
) -> Result<RefinementStudy> {
    Ok(refinement_studies(setup, resolutions, &[experiment])?.remove(0))
}

/// Runs `experiments` on their presets, sharing runs between experiments
/// that use the same preset. Results keep the order of `experiments`.
pub fn default_studies(
    experiments: &[Experiment],
    resolutions: &[usize],
) -> Result<Vec<RefinementStudy>> {
    let mut out: Vec<Option<RefinementStudy>> = vec![None; experiments.len()];
    for group in [
        [Experiment::Prop3, Experiment::Prop5, Experiment::Prop5Control],
        [Experiment::Prop4, Experiment::Prop6, Experiment::Prop6Mass],
    ] {
        let wanted: Vec<Experiment> = group
            .into_iter()
            .filter(|e| experiments.contains(e))
            .collect();
        if wanted.is_empty() {
            continue;
        }
        let setup = ExperimentSetup::preset(wanted[0])?;
        for study in refinement_studies(&setup, resolutions, &wanted)? {
            for (slot, e) in out.iter_mut().zip(experiments) {
                if e.name() == study.experiment {
                    *slot = Some(study.clone());
                }
            }
        }
    }
    Ok(out.into_iter().flatten().collect())
}

/// Transverse shear-wave viscometer on D2Q9.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShearWaveConfig {
    pub length: f64,
    /// Wavenumber index `m`, `k = 2π m / L`.
    pub mode: i32,
    pub amplitude: f64,
    /// Rate of both stress moments.
    pub s_shear: f64,
    /// Rate of every other non-conserved moment.
    pub background_rate: f64,
    /// Run length in predicted decay times `1/(ν k²)`.
    pub horizon_decay_times: f64,
    pub transverse_nodes: usize,
    pub lambda: f64,
}

impl Default for ShearWaveConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            mode: 1,
            amplitude: 1e-3,
            s_shear: 1.2,
            background_rate: 1.5,
            horizon_decay_times: 1.5,
            transverse_nodes: 8,
            lambda: 1.0,
        }
    }
}

impl ShearWaveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode < 1 {
            return Err(Error::InvalidStudy("shear-wave mode must be at least 1".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1e-3) {
            return Err(Error::InvalidStudy(format!(
                "shear-wave amplitude {} outside the linear regime (0, 1e-3]",
                self.amplitude
            )));
        }
        if !(self.horizon_decay_times >= 1.0) {
            return Err(Error::InvalidStudy(
                "the run must cover at least one decay time".into(),
            ));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        std::f64::consts::TAU * f64::from(self.mode) / self.length
    }

    /// `c² Δt (1/s − ½)` at resolution `n`.
    pub fn predicted_viscosity(&self, n: usize) -> f64 {
        let dt = self.length / n as f64 / self.lambda;
        self.lambda * self.lambda / 3.0 * dhumieres_coefficient(dt, self.s_shear)
    }

    /// Smallest viscosity the viscometer resolves at `n`: the prediction at
    /// the ill-conditioning threshold rate.
    pub fn resolution_floor(&self, n: usize) -> f64 {
        let dt = self.length / n as f64 / self.lambda;
        self.lambda * self.lambda / 3.0 * dhumieres_coefficient(dt, ILL_CONDITIONED_RATE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscosityMeasurement {
    pub n: usize,
    pub dt: f64,
    pub s_shear: f64,
    pub measured: f64,
    pub predicted: f64,
    pub resolution_floor: f64,
    /// Fitted `−d ln A / dt`.
    pub decay_rate: f64,
    pub steps: u64,
    pub ill_conditioned: bool,
    pub mass_drift: f64,
}

impl ViscosityMeasurement {
    pub fn relative_error(&self) -> f64 {
        (self.measured - self.predicted).abs() / self.predicted
    }
}

/// Runs the shear wave `q_y = ε sin(kx)` and fits `ln A(t)` by least
/// squares; `ν = −slope / k²`.
pub fn measure_viscosity(cfg: &ShearWaveConfig, n: usize) -> Result<ViscosityMeasurement> {
    cfg.validate()?;
    let velocities = VelocitySet::d2q9();
    let moments = MomentMatrix::new(&velocities, cfg.lambda, None)?;
    let model = EquilibriumModel::builtin(&velocities, cfg.lambda)?;
    let dx = cfg.length / n as f64;
    let dt = dx / cfg.lambda;
    let mut relaxation = vec![cfg.background_rate; 6];
    // diagonal and off-diagonal stress moments
    relaxation[4] = cfg.s_shear;
    relaxation[5] = cfg.s_shear;
    let params = SchemeParams::new(&velocities, dx, dt, &relaxation)?;
    let scheme = Scheme::new(velocities.clone(), moments, model, params)?;
    debug_assert_eq!(shear_moment_index(&scheme), Some(8));

    let ill_conditioned = cfg.s_shear >= ILL_CONDITIONED_RATE;
    if ill_conditioned {
        warn!(
            "s_shear = {} >= {ILL_CONDITIONED_RATE}: viscosity below the resolution floor",
            cfg.s_shear
        );
    }
    let predicted = cfg.predicted_viscosity(n);
    let floor = cfg.resolution_floor(n);
    let k = cfg.wavenumber();
    let reference = predicted.max(floor);
    let horizon = cfg.horizon_decay_times / (reference * k * k);
    let steps = (horizon / dt).ceil() as u64;

    let grid = Grid::new(&[n, cfg.transverse_nodes])?;
    let init = InitialCondition::shear_wave(cfg.amplitude, cfg.mode).on_grid(&grid, dx)?;
    let mut state = scheme.equilibrium_state(grid.clone(), |c| init.state(grid.linear_index(&c[..2])))?;
    let mass0 = state.total_mass();

    let basis: Vec<f64> = (0..grid.num_nodes())
        .map(|node| {
            let x = grid.coords(node)[0] as f64 * dx;
            (k * x).sin()
        })
        .collect();
    let amplitude = |s: &SchemeState| -> f64 {
        let sum: f64 = (0..s.num_nodes())
            .map(|node| s.conserved(node, &velocities, cfg.lambda).momentum[1] * basis[node])
            .sum();
        2.0 * sum / s.num_nodes() as f64
    };

    const SAMPLES: u64 = 200;
    let stride = (steps / SAMPLES).max(1);
    let mut times = Vec::new();
    let mut amps = Vec::new();
    let mut step = 0;
    while step < steps {
        let chunk = stride.min(steps - step);
        scheme.run(&mut state, chunk)?;
        step += chunk;
        times.push(state.time());
        amps.push(amplitude(&state));
    }
    let mass_drift = ((state.total_mass() - mass0) / mass0).abs();

    // the first tenth of the record is left to the initial layer
    let skip = times.len() / 10;
    let (times, amps) = (&times[skip..], &amps[skip..]);
    if amps.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::FitRejected("shear-wave amplitude changed sign".into()));
    }
    if !ill_conditioned {
        let rises = amps.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-9)).count();
        if rises > 0 {
            return Err(Error::FitRejected(format!(
                "amplitude rose in {rises} of {} intervals (acoustic contamination)",
                amps.len() - 1
            )));
        }
    }
    let logs: Vec<f64> = amps.iter().map(|a| a.ln()).collect();
    let (slope, _, _) = linear_fit(times, &logs);
    let decay_rate = -slope;
    Ok(ViscosityMeasurement {
        n,
        dt,
        s_shear: cfg.s_shear,
        measured: decay_rate / (k * k),
        predicted,
        resolution_floor: floor,
        decay_rate,
        steps,
        ill_conditioned,
        mass_drift,
    })
}

/// Allowed relative deviation of a measured viscosity from the prediction.
pub const VISCOSITY_TOLERANCE: f64 = 0.02;

/// Measures ν at every resolution; ν ∝ Δt, so the log-log slope is 1. Each
/// point must also match its prediction within [`VISCOSITY_TOLERANCE`].
pub fn viscosity_study(
    cfg: &ShearWaveConfig,
    resolutions: &[usize],
) -> Result<(RefinementStudy, Vec<ViscosityMeasurement>)> {
    validate_resolutions(resolutions)?;
    let measurements = resolutions
        .iter()
        .map(|&n| measure_viscosity(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let rows = measurements
        .iter()
        .map(|m| StudyRow {
            n: m.n,
            dx: cfg.length / m.n as f64,
            dt: m.dt,
            residual: m.measured,
        })
        .collect();
    let expectation = SlopeExpectation::Within {
        expected: 1.0,
        tolerance: FIRST_ORDER_TOLERANCE,
    };
    let mut study = RefinementStudy::from_rows("viscosity", rows, expectation);
    // ν shrinks with Δt, so the usual "decreasing residual" rule still applies
    if study.passed {
        if let Some(m) = measurements
            .iter()
            .find(|m| !(m.relative_error() <= VISCOSITY_TOLERANCE))
        {
            study.passed = false;
            study.failure = Some(format!(
                "N = {}: measured {:e} vs predicted {:e}",
                m.n, m.measured, m.predicted
            ));
        } else if let Some(m) = measurements
            .iter()
            .find(|m| m.mass_drift > MASS_DRIFT_TOLERANCE)
        {
            study.passed = false;
            study.failure = Some(format!("N = {}: mass drift {:e}", m.n, m.mass_drift));
        }
    }
    Ok((study, measurements))
}

/// Conserved state of a uniform equilibrium run, for quick checks.
pub fn uniform_setup(setup: &ExperimentSetup, base: ConservedState) -> ExperimentSetup {
    ExperimentSetup {
        initial: InitialCondition::uniform(base),
        ..setup.clone()
    }
}
