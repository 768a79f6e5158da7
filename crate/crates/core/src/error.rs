use std::io;

use crate::diffcore::DiffError;
use crate::trainer::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("matrix is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("active set did not converge for pixel {pixel} after {iterations} iterations")]
    NotConverged { pixel: usize, iterations: usize },
    #[error("no endmember draw reached the minimum spectral angle after {attempts} attempts")]
    AngleUnreachable { attempts: usize },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        history: Box<TrainHistory>,
    },
    #[error("every grid cell diverged")]
    AllCellsDiverged,
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs or files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Diff(_)
                | Error::RankDeficient { .. }
                | Error::Degenerate(_)
                | Error::NotConverged { .. }
                | Error::AngleUnreachable { .. }
                | Error::Diverged { .. }
                | Error::AllCellsDiverged
        )
    }
}
