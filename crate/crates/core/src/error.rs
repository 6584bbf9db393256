//! Crate-wide error type. Dimension mismatches between fields are programming
//! errors and panic via debug_assert in the operators instead of surfacing here.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ChdError {
    /// Singular entropy evaluated at |s| >= 1.
    Domain { s: f64, what: &'static str },
    /// A model failed its construction-time bound checks.
    Construction(String),
    /// A source field violated its zero-mean compatibility requirement.
    Mean { mean: f64, limit: f64 },
    /// An iterative linear solve did not reach its tolerance.
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    /// The damped Newton iteration for the implicit step failed.
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    /// A phase-field iterate reached the pure-phase bound.
    Separation { step: usize, max_abs_phi: f64 },
    /// The running-mean constraint on the phase average was violated.
    Constraint { step: usize, mean_phi: f64, limit: f64 },
    /// The optimizer's line search failed to make progress.
    Stall { iteration: usize, attempts: usize },
    /// Config text could not be parsed.
    Parse(String),
    /// Config parsed but failed validation; all violations are listed.
    Validation(Vec<String>),
    /// File I/O or dump-format failure.
    Io(String),
}

pub type Result<T> = std::result::Result<T, ChdError>;

impl ChdError {
    /// Stable machine-readable tag, used by error records and exit-code
    /// mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            ChdError::Domain { .. } => "domain",
            ChdError::Construction(_) => "construction",
            ChdError::Mean { .. } => "mean",
            ChdError::NonConvergence { .. } => "non-convergence",
            ChdError::NewtonFailure { .. } => "newton-failure",
            ChdError::Separation { .. } => "separation",
            ChdError::Constraint { .. } => "constraint",
            ChdError::Stall { .. } => "stall",
            ChdError::Parse(_) => "parse",
            ChdError::Validation(_) => "validation",
            ChdError::Io(_) => "io",
        }
    }

    /// True for failures of the run description itself (as opposed to the
    /// solver or checks): parse, validation, construction, data files, and
    /// source-mean compatibility.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ChdError::Parse(_)
                | ChdError::Validation(_)
                | ChdError::Construction(_)
                | ChdError::Io(_)
                | ChdError::Mean { .. }
        )
    }
}

impl fmt::Display for ChdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChdError::Domain { s, what } => {
                write!(f, "{what} undefined at s = {s}: requires |s| < 1")
            }
            ChdError::Construction(msg) => write!(f, "model construction failed: {msg}"),
            ChdError::Mean { mean, limit } => write!(
                f,
                "source must have zero spatial mean: |mean| = {mean:e} exceeds {limit:e}"
            ),
            ChdError::NonConvergence {
                what,
                iterations,
                residual,
                tol,
            } => write!(
                f,
                "{what} did not converge: residual {residual:e} > tol {tol:e} after {iterations} iterations"
            ),
            ChdError::NewtonFailure {
                step,
                iterations,
                residual,
            } => write!(
                f,
                "Newton solve failed at step {step}: residual {residual:e} after {iterations} iterations"
            ),
            ChdError::Separation { step, max_abs_phi } => write!(
                f,
                "phase field reached the pure-phase bound at step {step}: max|phi| = {max_abs_phi}"
            ),
            ChdError::Constraint {
                step,
                mean_phi,
                limit,
            } => write!(
                f,
                "phase mean left the admissible band at step {step}: |mean| = {mean_phi} > {limit}"
            ),
            ChdError::Stall {
                iteration,
                attempts,
            } => write!(
                f,
                "line search stalled at optimizer iteration {iteration} after {attempts} backtracks"
            ),
            ChdError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ChdError::Validation(errs) => {
                write!(f, "config validation failed ({} issue(s)):", errs.len())?;
                for e in errs {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
            ChdError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for ChdError {}

impl From<std::io::Error> for ChdError {
    fn from(e: std::io::Error) -> Self {
        ChdError::Io(e.to_string())
    }
}
