//! Scenario files: one JSON document per run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tvfluid::dist::{Distribution, RateFunction};
use tvfluid::elapsed::{to_residual_ic, ElapsedInitialCondition, ElapsedScenario};
use tvfluid::kernel::Grid;
use tvfluid::solver::{InitialCondition, InitialGuess, KernelMode, Model, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

/// Solver knobs; the grid comes from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_window_cap")]
    pub window_cap: f64,
    #[serde(default = "default_kappa")]
    pub kappa_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    #[serde(default)]
    pub kernel_mode: KernelMode,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    200
}
fn default_window_cap() -> f64 {
    2.0
}
fn default_kappa() -> f64 {
    0.5
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            picard_tol: default_tol(),
            max_iters: default_max_iters(),
            window_cap: default_window_cap(),
            kappa_target: default_kappa(),
            truncation: None,
            initial_guess: InitialGuess::default(),
            kernel_mode: KernelMode::default(),
        }
    }
}

/// Residual-time initial state. When `omega0 > 0` and `pre_rate` is absent,
/// the negative-time part of the scenario's `rate` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualInitial {
    #[serde(default)]
    pub omega0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_rate: Option<RateFunction>,
    pub z0: tvfluid::solver::ResidualProfile,
}

/// Exactly one of the two initial-condition forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Residual(ResidualInitial),
    Elapsed(ElapsedInitialCondition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub n: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Arrival rate; breakpoints below 0 describe the arrival history.
    pub rate: RateFunction,
    pub patience: Distribution,
    pub service: Distribution,
    /// Absent means an empty system at time 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimBlock>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Schema(format!("{path}: {}", e.into_inner()))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let schema = |field: &str, msg: String| Err(CliError::Schema(format!("{field}: {msg}")));
        if self.name.trim().is_empty() {
            return schema("name", "must not be empty".into());
        }
        if let Err(e) = Grid::new(self.grid.h, self.grid.horizon) {
            return schema("grid", e.to_string());
        }
        if self.rate.end() < self.grid.horizon - 1e-12 * self.grid.horizon {
            return schema(
                "rate",
                format!("ends at {} before the horizon {}", self.rate.end(), self.grid.horizon),
            );
        }
        if self.rate.start() > 0.0 {
            return schema("rate", format!("starts at {} after 0", self.rate.start()));
        }
        if let Some(sim) = &self.sim {
            if sim.n.is_empty() {
                return schema("sim.n", "needs at least one server count".into());
            }
            if let Some(k) = sim.n.iter().position(|n| *n == 0) {
                return schema(&format!("sim.n[{k}]"), "server count must be at least 1".into());
            }
            if sim.replications == 0 {
                return schema("sim.replications", "must be at least 1".into());
            }
        }
        if let Some(InitialState::Elapsed(eic)) = &self.initial {
            eic.validate().map_err(|e| CliError::Schema(format!("initial.elapsed: {e}")))?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.grid.h, self.grid.horizon)?)
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        Ok(SolverConfig {
            grid: self.grid()?,
            picard_tol: s.picard_tol,
            max_iters: s.max_iters,
            window_cap: s.window_cap,
            kappa_target: s.kappa_target,
            truncation: s.truncation,
            initial_guess: s.initial_guess,
            kernel_mode: s.kernel_mode,
        })
    }

    /// Residual-form initial condition, converting an elapsed-form one.
    pub fn initial_condition(&self) -> Result<InitialCondition, CliError> {
        match &self.initial {
            None => Ok(InitialCondition::empty()),
            Some(InitialState::Elapsed(eic)) => {
                Ok(to_residual_ic(eic, &self.patience, &self.service, &self.grid()?)?)
            }
            Some(InitialState::Residual(r)) => {
                let pre_rate = match (&r.pre_rate, r.omega0 > 0.0) {
                    (Some(p), _) => Some(p.clone()),
                    (None, false) => None,
                    (None, true) => {
                        if self.rate.start() > -r.omega0 + 1e-12 * (1.0 + r.omega0) {
                            return Err(CliError::Schema(format!(
                                "initial.residual.pre_rate: missing, and rate history starts at {} after -omega0 = {}",
                                self.rate.start(),
                                -r.omega0
                            )));
                        }
                        Some(self.rate.shifted(0.0, -r.omega0, 0.0)?)
                    }
                };
                Ok(InitialCondition {
                    omega0: r.omega0,
                    pre_rate,
                    z0: r.z0.clone(),
                })
            }
        }
    }

    pub fn model(&self) -> Result<Model, CliError> {
        Ok(Model::new(
            self.rate.clone(),
            self.patience.clone(),
            self.service.clone(),
            self.initial_condition()?,
        )?)
    }

    pub fn elapsed(&self) -> Result<ElapsedScenario, CliError> {
        match &self.initial {
            Some(InitialState::Elapsed(eic)) => Ok(ElapsedScenario {
                rate: self.rate.clone(),
                patience: self.patience.clone(),
                service: self.service.clone(),
                initial: eic.clone(),
                solver: self.solver_config()?,
            }),
            _ => Err(CliError::Schema(
                "initial: equivalence needs an elapsed-form initial condition".into(),
            )),
        }
    }

    /// Same scenario on a grid of step `h` (validated).
    pub fn with_step(&self, h: f64) -> Result<Self, CliError> {
        let mut sc = self.clone();
        sc.grid.h = h;
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut sc = self.clone();
        if let Some(sim) = &mut sc.sim {
            sim.seed = seed;
        }
        sc
    }
}
