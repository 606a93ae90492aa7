//! TOML run configuration.
//!
//! Every section is optional and has defaults; unknown keys anywhere are
//! rejected.

use lbm_equiv::equilibrium::{ConservedState, EquilibriumKind, EquilibriumModel};
use lbm_equiv::field::{FourierMode, InitialCondition};
use lbm_equiv::lattice::{Grid, MomentMatrix, VelocitySet};
use lbm_equiv::scheme::{Scheme, SchemeParams};
use lbm_equiv::verify::{ExperimentSetup, ShearWaveConfig, DEFAULT_RESOLUTIONS};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Relative mismatch tolerated between `L/N` and `λ Δt`.
const SPACING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub equilibrium: EquilibriumSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// `D2Q9` or `D1Q3`; ignored when `vectors` is given.
    #[serde(default = "default_velocity_set")]
    pub velocity_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<i32>>>,
    /// Rows `d+1..=J` of the moment matrix, in velocity units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_rows: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub lambda: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            velocity_set: default_velocity_set(),
            vectors: None,
            moment_rows: None,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    /// Defaults to the polynomial equilibrium of the velocity set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<EquilibriumKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cs2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// One rate for every non-conserved moment, or one per moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Relaxation {
    Uniform(f64),
    PerMoment(Vec<f64>),
}

impl Relaxation {
    pub fn rates(&self, count: usize) -> Vec<f64> {
        match self {
            Self::Uniform(s) => vec![*s; count],
            Self::PerMoment(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// Time step; when absent it follows from `grid.length`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_relaxation")]
    pub relaxation: Relaxation,
    #[serde(default)]
    pub steps: u64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            dt: None,
            relaxation: default_relaxation(),
            steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_shape")]
    pub shape: Vec<usize>,
    /// Domain length along the first axis; `Δx = length / shape[0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            shape: default_shape(),
            length: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Rho,
    Qx,
    Qy,
}

impl Component {
    fn index(self) -> usize {
        match self {
            Self::Rho => 0,
            Self::Qx => 1,
            Self::Qy => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub component: Component,
    pub amplitude: f64,
    /// Integer wavenumbers per axis (`k_a = 2π m_a / L_a`).
    pub wavenumber: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "one")]
    pub rho: f64,
    /// Background momentum; missing components are zero.
    #[serde(default)]
    pub momentum: Vec<f64>,
    #[serde(default)]
    pub modes: Vec<ModeSection>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            momentum: Vec::new(),
            modes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyPreset {
    /// Built-in D2Q9 shear-wave experiments.
    #[default]
    ShearWave,
    /// The experiment described by the other sections of this file.
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default)]
    pub preset: StudyPreset,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
    /// Measurement time for `preset = "config"`.
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub viscosity: ViscositySection,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            preset: StudyPreset::default(),
            resolutions: default_resolutions(),
            horizon: 1.0,
            viscosity: ViscositySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViscositySection {
    pub s_shear: f64,
    pub mode: i32,
    pub amplitude: f64,
    pub decay_times: f64,
    pub background_rate: f64,
    pub transverse_nodes: usize,
}

impl Default for ViscositySection {
    fn default() -> Self {
        let d = ShearWaveConfig::default();
        Self {
            s_shear: d.s_shear,
            mode: d.mode,
            amplitude: d.amplitude,
            decay_times: d.horizon_decay_times,
            background_rate: d.background_rate,
            transverse_nodes: d.transverse_nodes,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_velocity_set() -> String {
    "D2Q9".into()
}

fn default_relaxation() -> Relaxation {
    Relaxation::Uniform(1.5)
}

fn default_shape() -> Vec<usize> {
    vec![64, 8]
}

fn default_resolutions() -> Vec<usize> {
    DEFAULT_RESOLUTIONS.to_vec()
}

/// The lattice, equilibrium and moment basis a config describes.
#[derive(Debug, Clone)]
pub struct Model {
    pub velocities: VelocitySet,
    pub moments: MomentMatrix,
    pub equilibrium: EquilibriumModel,
}

/// A fully resolved simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scheme: Scheme,
    pub grid: Grid,
    pub dx: f64,
    pub initial: InitialCondition,
    pub steps: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let l = &self.lattice;
        let velocities = match &l.vectors {
            Some(v) => VelocitySet::custom("custom", v)?,
            None => VelocitySet::builtin(&l.velocity_set)?,
        };
        let moments = MomentMatrix::new(&velocities, l.lambda, l.moment_rows.as_deref())?;
        let e = &self.equilibrium;
        let equilibrium = match e.kind {
            None if e.weights.is_none() && e.cs2.is_none() => {
                EquilibriumModel::builtin(&velocities, l.lambda)?
            }
            kind => {
                let kind = kind.unwrap_or(EquilibriumKind::Table);
                EquilibriumModel::new(kind, &velocities, l.lambda, e.weights.clone(), e.cs2)?
            }
        };
        Ok(Model {
            velocities,
            moments,
            equilibrium,
        })
    }

    /// `(Δx, Δt)` from `grid.length` and/or `scheme.dt`, checked for
    /// consistency with λ.
    pub fn spacing(&self) -> Result<(f64, f64), CliError> {
        let n = *self
            .grid
            .shape
            .first()
            .ok_or_else(|| CliError::Config("grid.shape must not be empty".into()))?;
        if n == 0 {
            return Err(CliError::Config("grid.shape entries must be positive".into()));
        }
        let lambda = self.lattice.lambda;
        match (self.grid.length, self.scheme.dt) {
            (Some(length), Some(dt)) => {
                let dx = length / n as f64;
                if ((dx - lambda * dt) / dx).abs() > SPACING_TOLERANCE {
                    return Err(CliError::Config(format!(
                        "grid.length / grid.shape[0] = {dx} but lattice.lambda * scheme.dt = {}",
                        lambda * dt
                    )));
                }
                Ok((dx, dt))
            }
            (None, Some(dt)) => Ok((lambda * dt, dt)),
            (length, None) => {
                let dx = length.unwrap_or(1.0) / n as f64;
                Ok((dx, dx / lambda))
            }
        }
    }

    pub fn initial_condition(&self, dim: usize) -> Result<InitialCondition, CliError> {
        let i = &self.initial;
        if i.momentum.len() > dim {
            return Err(CliError::Config(format!(
                "initial.momentum has {} components for a {dim}-dimensional lattice",
                i.momentum.len()
            )));
        }
        let modes = i
            .modes
            .iter()
            .map(|m| {
                if m.component.index() > dim {
                    return Err(CliError::Config(format!(
                        "initial.modes: component {:?} does not exist in {dim} dimensions",
                        m.component
                    )));
                }
                if m.wavenumber.len() != dim {
                    return Err(CliError::Config(format!(
                        "initial.modes: wavenumber needs {dim} entries"
                    )));
                }
                let mut wavenumber = [0; 2];
                wavenumber[..dim].copy_from_slice(&m.wavenumber);
                Ok(FourierMode {
                    component: m.component.index(),
                    amplitude: m.amplitude,
                    wavenumber,
                    phase: m.phase,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InitialCondition {
            base: ConservedState::new(i.rho, &i.momentum),
            modes,
        })
    }

    pub fn simulation(&self) -> Result<Simulation, CliError> {
        let model = self.model()?;
        let dim = model.velocities.dim();
        if self.grid.shape.len() != dim {
            return Err(CliError::Config(format!(
                "grid.shape has {} axes for a {dim}-dimensional lattice",
                self.grid.shape.len()
            )));
        }
        let (dx, dt) = self.spacing()?;
        let rates = self
            .scheme
            .relaxation
            .rates(model.velocities.len() - dim - 1);
        let params = SchemeParams::new(&model.velocities, dx, dt, &rates)?;
        let scheme = Scheme::new(model.velocities, model.moments, model.equilibrium, params)?;
        let grid = Grid::new(&self.grid.shape)?;
        Ok(Simulation {
            scheme,
            grid,
            dx,
            initial: self.initial_condition(dim)?,
            steps: self.scheme.steps,
        })
    }

    /// Study setup for `preset = "config"`.
    pub fn experiment(&self) -> Result<ExperimentSetup, CliError> {
        let model = self.model()?;
        let dim = model.velocities.dim();
        let rates = self
            .scheme
            .relaxation
            .rates(model.velocities.len() - dim - 1);
        Ok(ExperimentSetup {
            initial: self.initial_condition(dim)?,
            velocities: model.velocities,
            moments: model.moments,
            model: model.equilibrium,
            relaxation: rates,
            length: self.grid.length.unwrap_or(1.0),
            transverse_nodes: self.grid.shape.get(1).copied(),
            horizon: self.study.horizon,
        })
    }

    pub fn shear_wave(&self) -> ShearWaveConfig {
        let v = &self.study.viscosity;
        ShearWaveConfig {
            length: self.grid.length.unwrap_or(1.0),
            mode: v.mode,
            amplitude: v.amplitude,
            s_shear: v.s_shear,
            background_rate: v.background_rate,
            horizon_decay_times: v.decay_times,
            transverse_nodes: v.transverse_nodes,
            lambda: self.lattice.lambda,
        }
    }
}
