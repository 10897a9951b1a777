use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("network structure error: {0}")]
    Structure(String),

    #[error("singular matrix in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("infeasible program: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("audit failed: {0}")]
    Audit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What the solver learned about an infeasible program.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub program: String,
    /// Smallest uniform relaxation of the inequality rows that would restore
    /// feasibility, in the rows' own units. `None` when even that fails.
    pub min_violation: Option<f64>,
    /// Labels of inequality rows that are tight in the phase-one solution.
    pub binding_rows: Vec<String>,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.program)?;
        match self.min_violation {
            Some(v) => write!(f, " (needs relaxation {v:.6})")?,
            None => write!(f, " (equality system inconsistent)")?,
        }
        if !self.binding_rows.is_empty() {
            let shown: Vec<_> = self.binding_rows.iter().take(8).cloned().collect();
            write!(f, "; binding: {}", shown.join(", "))?;
            if self.binding_rows.len() > shown.len() {
                write!(f, ", ...")?;
            }
        }
        Ok(())
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
