use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session '{0}' not found")]
    SessionNotFound(String),
    #[error("malformed request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Engine(#[from] calibguide::Error),
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt session log: {0}")]
    CorruptLog(String),
    #[error("internal failure: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::SessionNotFound(_) => "SESSION_NOT_FOUND",
            ServiceError::InvalidRequest(_) => "INVALID_REQUEST",
            ServiceError::Engine(e) => e.code(),
            ServiceError::Storage(_) => "STORAGE_ERROR",
            ServiceError::CorruptLog(_) => "CORRUPT_LOG",
            ServiceError::Internal(_) => "INTERNAL_ERROR",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

/// Wire form of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
