//! Crate-level error and its process exit code.

use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::bounds::BoundsError;
use crate::data::DataError;
use crate::diagnose::DiagnoseError;
use crate::estimate::EstimateError;
use crate::identify::IdentifyError;
use crate::simulate::SimulateError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Diagnose(#[from] DiagnoseError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("nuisance fits did not converge: {}", .0.join(", "))]
    NonConvergence(Vec<String>),
}

/// Exit status for input problems.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 2;

fn identify_numerical(e: &IdentifyError) -> bool {
    matches!(e, IdentifyError::IvRelevance { .. })
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence(_) => true,
            Error::Bounds(BoundsError::Unbounded) => true,
            Error::Identify(e) => identify_numerical(e),
            Error::Estimate(EstimateError::TooManyDroppedReplicates { .. }) => true,
            Error::Estimate(EstimateError::Identify(e)) => identify_numerical(e),
            Error::Diagnose(DiagnoseError::Estimate(EstimateError::TooManyDroppedReplicates { .. })) => true,
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_VALIDATION
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::Estimate(EstimateError::NoInstrument).exit_code(), 1);
        assert_eq!(Error::Estimate(EstimateError::TooManyDroppedReplicates { dropped: 9, reps: 10 }).exit_code(), 2);
        assert_eq!(Error::NonConvergence(vec!["y_given_l".into()]).exit_code(), 2);
        assert_eq!(Error::Identify(IdentifyError::IvRelevance { context: 0, delta: 0.0 }).exit_code(), 2);
    }
}
