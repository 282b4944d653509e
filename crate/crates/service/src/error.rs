use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use boincomb::{Combo, TrialStatus};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no trial with id {0}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("the trial has stopped ({0:?})")]
    Stopped(TrialStatus),
    #[error("the trial is still running; a selection exists only after it stops")]
    NotStopped,
    #[error("the recommendation is {expected}, not {got}; set override to treat elsewhere")]
    DoseMismatch { expected: Combo, got: Combo },
    #[error("missing or wrong bearer token")]
    Unauthorized,
    #[error("stored record is inconsistent: {0}")]
    Corrupt(String),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] boincomb::Error),
}

impl ServiceError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ServiceError::Invalid(msg.into())
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Stopped(_) => "trial_stopped",
            ServiceError::NotStopped => "not_stopped",
            ServiceError::DoseMismatch { .. } => "dose_mismatch",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::Corrupt(_) => "corrupt_record",
            ServiceError::Io(_) => "storage_error",
            ServiceError::Core(boincomb::Error::State(_)) => "invalid_state",
            ServiceError::Core(boincomb::Error::Io(_)) => "storage_error",
            ServiceError::Core(boincomb::Error::Fit(_)) => "model_fit_failed",
            ServiceError::Core(_) => "invalid_request",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Stopped(_) | ServiceError::NotStopped | ServiceError::DoseMismatch { .. } => {
                StatusCode::CONFLICT
            }
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Corrupt(_) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(boincomb::Error::State(_)) => StatusCode::CONFLICT,
            ServiceError::Core(boincomb::Error::Io(_) | boincomb::Error::Fit(_)) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
