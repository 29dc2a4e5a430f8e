use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coincident atoms: separation {0:e} λ is too small to evaluate the dipole-dipole couplings")]
    CoincidentAtoms(f64),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("atom index {index} out of range for {n_atoms} atoms")]
    AtomIndex { index: usize, n_atoms: usize },

    #[error("atom {0} carries no phonon mode in this layout")]
    NoPhononMode(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate steady state: singular-value gap {gap:.3e} below threshold {threshold:.1e}")]
    DegenerateSteadyState { gap: f64, threshold: f64 },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{}", scenario_location(source_name, key, *line, message))]
    Scenario { source_name: String, key: String, line: Option<usize>, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes and record flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad scenario, geometry, parameter or file.
    Input,
    /// Degenerate or failed linear algebra.
    Solver,
    /// A computed state broke a physical invariant.
    Invariant,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::CoincidentAtoms(_)
            | Error::InvalidGeometry(_)
            | Error::InvalidParameter(_)
            | Error::AtomIndex { .. }
            | Error::NoPhononMode(_)
            | Error::Scenario { .. }
            | Error::Io { .. } => ErrorCategory::Input,
            Error::DimensionMismatch { .. }
            | Error::DegenerateSteadyState { .. }
            | Error::Solver(_)
            | Error::StepSizeUnderflow { .. } => ErrorCategory::Solver,
            Error::Invariant(_) => ErrorCategory::Invariant,
        }
    }
}

fn scenario_location(source_name: &str, key: &str, line: Option<usize>, message: &str) -> String {
    let place = match line {
        Some(line) => format!("{source_name}:{line}"),
        None => source_name.to_string(),
    };
    if key.is_empty() {
        format!("{place}: {message}")
    } else {
        format!("{place}: key `{key}`: {message}")
    }
}
