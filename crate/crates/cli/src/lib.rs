//! Scenario ingestion and run orchestration behind the `tvfluid` binary.
//!
//! Every command reads a [`Scenario`], runs the core library and writes CSV
//! and JSON files into an output directory. Output is byte-stable: CSV numbers
//! carry 17 significant digits and JSON floats use shortest round-trip form.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{
    run_check_invariants, run_compare, run_equivalence, run_simulate, run_solve, RunReport,
};
pub use scenario::{GridSpec, InitialState, ResidualInitial, Scenario, SimBlock, SolverSettings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] tvfluid::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0} invariant check(s) failed")]
    Invariants(usize),
}

impl CliError {
    /// 2 input/validation, 3 divergence, 4 invariant violation, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        use tvfluid::Error as E;
        match self {
            CliError::Schema(_) => 2,
            CliError::Core(E::Domain(_) | E::Config(_) | E::Correspondence(_)) => 2,
            CliError::Core(E::Divergence { .. }) => 3,
            CliError::Core(E::Consistency(_)) | CliError::Invariants(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}
