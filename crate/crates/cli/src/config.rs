use std::fs;
use std::path::Path;

use bsde_core::examples::ExampleSpec;
use bsde_core::solver::{InnerIteration, StepMode};
use bsde_core::verifiers::SamplerConfig;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::cases::CaseName;
use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Check,
    Ineq,
    Study,
    Example,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Check => "check",
            Command::Ineq => "ineq",
            Command::Study => "study",
            Command::Example => "example",
        }
    }
}

/// One run, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the subcommand being run.
    #[serde(default)]
    pub command: Option<Command>,
    pub seed: u64,
    pub problem: ExampleSpec,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub ineq: IneqConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub paths: usize,
}

/// Constant initial Picard iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGuess {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub mode: StepMode,
    #[serde(default)]
    pub inner: InnerIteration,
    /// Run the Picard loop even for a driver that ignores `z`.
    #[serde(default)]
    pub force_picard: bool,
    #[serde(default)]
    pub initial: Option<InitialGuess>,
    /// Levels `λ` of the class-(D) diagnostic.
    #[serde(default = "defaults::lambdas")]
    pub class_d_levels: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: defaults::tol(),
            max_iter: defaults::max_iter(),
            betas: defaults::betas(),
            mode: StepMode::default(),
            inner: InnerIteration::default(),
            force_picard: false,
            initial: None,
            class_d_levels: defaults::lambdas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Radii `r` of the local-boundedness check.
    #[serde(default = "defaults::radii")]
    pub h2_radii: Vec<f64>,
    #[serde(default = "defaults::levels")]
    pub ladder_levels: Vec<usize>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            h2_radii: defaults::radii(),
            ladder_levels: defaults::levels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IneqConfig {
    #[serde(default = "defaults::cases")]
    pub cases: Vec<CaseName>,
    #[serde(default = "defaults::ineq_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "defaults::ineq_rel_tol")]
    pub rel_tol: f64,
    /// Randomized instances of the agreement case.
    #[serde(default = "defaults::instances")]
    pub instances: usize,
}

impl Default for IneqConfig {
    fn default() -> Self {
        Self {
            cases: defaults::cases(),
            abs_tol: defaults::ineq_abs_tol(),
            rel_tol: defaults::ineq_rel_tol(),
            instances: defaults::instances(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "defaults::study_steps")]
    pub steps: Vec<usize>,
    #[serde(default = "defaults::study_paths")]
    pub paths: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            steps: defaults::study_steps(),
            paths: defaults::study_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "defaults::out_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: defaults::out_dir() }
    }
}

mod defaults {
    use crate::cases::CaseName;

    pub fn tol() -> f64 {
        1e-4
    }
    pub fn max_iter() -> usize {
        30
    }
    pub fn betas() -> Vec<f64> {
        vec![0.5, 1.0]
    }
    pub fn lambdas() -> Vec<f64> {
        vec![0.5, 1.0, 2.0, 4.0]
    }
    pub fn radii() -> Vec<f64> {
        vec![1.0, 5.0]
    }
    pub fn levels() -> Vec<usize> {
        vec![1, 5, 25]
    }
    pub fn cases() -> Vec<CaseName> {
        CaseName::ALL.to_vec()
    }
    pub fn ineq_abs_tol() -> f64 {
        1e-6
    }
    pub fn ineq_rel_tol() -> f64 {
        1e-4
    }
    pub fn instances() -> usize {
        20
    }
    pub fn study_steps() -> Vec<usize> {
        vec![10, 20, 50]
    }
    pub fn study_paths() -> Vec<usize> {
        vec![1_000, 4_000]
    }
    pub fn out_dir() -> String {
        "results".into()
    }
}

fn config_error(msg: impl Into<String>) -> AppError {
    AppError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self, command: Command) -> Result<(), AppError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(config_error(format!(
                    "config is for `{}`, invoked as `{}`",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.problem.validate().map_err(|e| config_error(e.to_string()))?;
        if self.grid.steps == 0 || self.ensemble.paths < 2 {
            return Err(config_error("grid.steps must be >= 1 and ensemble.paths >= 2"));
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(config_error("solver.tol must be positive and solver.max_iter >= 1"));
        }
        if s.betas.is_empty() || s.betas.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(config_error("solver.betas must be a nonempty list in (0, 1]"));
        }
        if !(s.inner.damping > 0.0 && s.inner.damping <= 1.0) || s.inner.max_iterations == 0 || !(s.inner.rel_tol > 0.0) {
            return Err(config_error("solver.inner needs damping in (0, 1], max_iterations >= 1, rel_tol > 0"));
        }
        if let Some(init) = &s.initial {
            let (k, d) = (self.problem.k(), self.problem.d());
            if init.y.len() != k || init.z.len() != k * d {
                return Err(config_error(format!("solver.initial needs y of length {k} and z of length {}", k * d)));
            }
        }
        if s.class_d_levels.is_empty() || s.class_d_levels.windows(2).any(|w| !(w[0] < w[1])) || !(s.class_d_levels[0] > 0.0) {
            return Err(config_error("solver.class_d_levels must be positive and strictly increasing"));
        }
        self.check.sampler.validate().map_err(|e| config_error(format!("check.sampler: {e}")))?;
        if self.check.h2_radii.is_empty() || self.check.h2_radii.iter().any(|r| !(*r > 0.0)) {
            return Err(config_error("check.h2_radii must be a nonempty list of positive radii"));
        }
        if self.check.ladder_levels.contains(&0) {
            return Err(config_error("check.ladder_levels must be >= 1"));
        }
        if self.ineq.cases.is_empty() || self.ineq.instances == 0 {
            return Err(config_error("ineq.cases must be nonempty and ineq.instances >= 1"));
        }
        if self.study.steps.is_empty() || self.study.paths.is_empty()
            || self.study.steps.contains(&0) || self.study.paths.iter().any(|m| *m < 2)
        {
            return Err(config_error("study.steps and study.paths must be nonempty, steps >= 1, paths >= 2"));
        }
        if command == Command::Example && self.problem.id.is_oracle() {
            return Err(config_error("`example` audits example1, example2 or broken-z-lipschitz"));
        }
        Ok(())
    }
}
