use thiserror::Error;

use crate::encoders::EncoderError;
use crate::features::FeatureError;
use crate::fusion::FusionError;
use crate::gate::GateError;
use crate::harness::HarnessError;
use crate::retrieval::StoreError;
use crate::signal::SignalError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl Error {
    /// True for failures caused by the environment (file system) rather than
    /// by invalid input.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Signal(SignalError::Io(_))
                | Error::Encoder(EncoderError::Io(_))
                | Error::Store(StoreError::Io(_))
                | Error::Fusion(FusionError::Io(_))
                | Error::Gate(GateError::Io(_))
                | Error::Harness(HarnessError::Io(_))
        )
    }
}
