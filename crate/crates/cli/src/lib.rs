//! Commands behind the `lbm-equiv` binary: `analyze`, `run` and `verify`.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use lbm_equiv::analysis::{pde_report, PdeReport};
use lbm_equiv::field::SpatialField;
use lbm_equiv::io::{write_checkpoint, write_conserved_field};
use lbm_equiv::verify::{
    default_studies, refinement_studies, viscosity_study, Experiment, RefinementStudy,
};
use thiserror::Error;

pub use config::RunConfig;
use config::StudyPreset;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CONSTRUCTION: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_VERIFICATION: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lbm_equiv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use lbm_equiv::Error as E;
        match self {
            Self::Config(_) | Self::Io { .. } => EXIT_CONFIG,
            Self::Core(E::InvalidStudy(_)) | Self::Core(E::Checkpoint(_)) => EXIT_CONFIG,
            Self::Core(E::SimulationDiverged { .. }) => EXIT_DIVERGED,
            Self::Core(E::FitRejected(_)) | Self::Verification(_) => EXIT_VERIFICATION,
            Self::Core(_) => EXIT_CONSTRUCTION,
        }
    }
}

/// Output directory and verbosity shared by all commands.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub quiet: bool,
}

impl Output {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io(&self.dir))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io(&path))?;
        Ok(path)
    }

    fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `report.csv` and `report.txt`.
pub fn cmd_analyze(config: &RunConfig, out: &Output) -> Result<PdeReport, CliError> {
    let sim = config.simulation()?;
    let report = pde_report(&sim.scheme)?;
    out.write("report.csv", &report.to_csv())?;
    out.write("report.txt", &report.to_string())?;
    out.say(&report.to_string());
    Ok(report)
}

/// Conservation audit of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub mass_drift: f64,
    pub momentum_drift: f64,
}

/// Runs `scheme.steps` steps from equilibrium and writes `checkpoint.csv`
/// (populations) and `fields.csv` (ρ, q).
pub fn cmd_run(config: &RunConfig, out: &Output) -> Result<RunSummary, CliError> {
    let sim = config.simulation()?;
    let vs = sim.scheme.velocities();
    let lambda = sim.scheme.lambda();
    let field = sim.initial.on_grid(&sim.grid, sim.dx)?;
    let grid = sim.grid.clone();
    let mut state = sim
        .scheme
        .equilibrium_state(grid.clone(), |c| field.state(grid.linear_index(&c[..grid.dim()])))?;
    let mass0 = state.total_mass();
    let p0 = state.total_momentum(vs, lambda);
    sim.scheme.run(&mut state, sim.steps)?;

    let mass_drift = ((state.total_mass() - mass0) / mass0).abs();
    let p = state.total_momentum(vs, lambda);
    // momentum is compared on the scale of the total mass times λ
    let momentum_drift = (0..vs.dim())
        .map(|a| (p[a] - p0[a]).abs() / (mass0 * lambda))
        .fold(0.0, f64::max);
    out.write("checkpoint.csv", &write_checkpoint(&state, lambda))?;
    out.write(
        "fields.csv",
        &write_conserved_field(&grid, &state.conserved_field(vs, lambda)),
    )?;
    out.say(&format!(
        "steps {}  t = {:.6e}  mass drift {mass_drift:.3e}  momentum drift {momentum_drift:.3e}",
        sim.steps,
        state.time()
    ));
    Ok(RunSummary {
        steps: sim.steps,
        mass_drift,
        momentum_drift,
    })
}

pub const STUDY_NAMES: [&str; 6] = ["prop3", "prop4", "prop5", "prop6", "viscosity", "all"];

/// One reported verdict of `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyVerdict {
    pub name: String,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub passed: bool,
    pub failure: Option<String>,
}

impl StudyVerdict {
    fn from_study(study: &RefinementStudy) -> Self {
        Self {
            name: study.experiment.clone(),
            slope: study.fit.map(|f| f.slope),
            r2: study.fit.map(|f| f.r2),
            passed: study.passed,
            failure: study.failure.clone(),
        }
    }

    /// `experiment,fitted_slope,r2,pass|fail`.
    pub fn summary_line(&self) -> String {
        let num = |x: Option<f64>, digits: usize| {
            x.map_or_else(|| "nan".to_string(), |v| format!("{v:.digits$}"))
        };
        format!(
            "{},{},{},{}",
            self.name,
            num(self.slope, 4),
            num(self.r2, 6),
            if self.passed { "pass" } else { "fail" }
        )
    }
}

fn experiments_for(name: &str) -> Result<(Vec<Experiment>, bool), CliError> {
    use Experiment::*;
    Ok(match name {
        "prop3" => (vec![Prop3], false),
        "prop4" => (vec![Prop4], false),
        "prop5" => (vec![Prop5, Prop5Control], false),
        "prop6" => (vec![Prop6, Prop6Mass], false),
        "viscosity" => (vec![], true),
        "all" => (Experiment::ALL.to_vec(), true),
        other => {
            return Err(CliError::Config(format!(
                "unknown study `{other}`, expected one of {}",
                STUDY_NAMES.join(", ")
            )))
        }
    })
}

/// Runs the named study, writes one CSV per experiment plus `summary.csv`,
/// and fails with [`CliError::Verification`] unless every verdict passes.
/// The prop5 verdict includes its control run.
pub fn cmd_verify(
    config: &RunConfig,
    study: &str,
    out: &Output,
) -> Result<Vec<StudyVerdict>, CliError> {
    let (experiments, viscosity) = experiments_for(study)?;
    let resolutions = &config.study.resolutions;
    lbm_equiv::verify::validate_resolutions(resolutions)?;

    let studies = if experiments.is_empty() {
        Vec::new()
    } else {
        match config.study.preset {
            StudyPreset::ShearWave => default_studies(&experiments, resolutions)?,
            StudyPreset::Config => {
                refinement_studies(&config.experiment()?, resolutions, &experiments)?
            }
        }
    };
    let mut verdicts = Vec::new();
    for s in &studies {
        out.write(&format!("{}.csv", s.experiment), &s.to_csv())?;
    }
    let control = studies
        .iter()
        .find(|s| s.experiment == Experiment::Prop5Control.name());
    for s in studies.iter().filter(|s| s.experiment != Experiment::Prop5Control.name()) {
        let mut v = StudyVerdict::from_study(s);
        if s.experiment == Experiment::Prop5.name() {
            if let Some(c) = control.filter(|c| !c.passed) {
                v.passed = false;
                v.failure = Some(format!(
                    "control run: {}",
                    c.failure.clone().unwrap_or_default()
                ));
            }
        }
        verdicts.push(v);
    }
    if viscosity {
        let (s, _) = viscosity_study(&config.shear_wave(), resolutions)?;
        out.write("viscosity.csv", &s.to_csv())?;
        verdicts.push(StudyVerdict::from_study(&s));
    }

    let mut summary = String::from("experiment,fitted_slope,r2,verdict\n");
    for v in &verdicts {
        summary.push_str(&v.summary_line());
        summary.push('\n');
        out.say(&v.summary_line());
        if let (false, Some(why)) = (out.quiet, &v.failure) {
            eprintln!("{}: {why}", v.name);
        }
    }
    out.write("summary.csv", &summary)?;
    let failed: Vec<&str> = verdicts
        .iter()
        .filter(|v| !v.passed)
        .map(|v| v.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(verdicts)
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
