use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use henry_core::agent::Humanizer;
use henry_core::code::ErrorCode;
use henry_core::message::ErrorBody;
use serde_json::json;
use thiserror::Error;

/// An error as the gateway reports it: `{"error": {"code", "message"}}`.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    /// Uses the user-facing template text as the message.
    pub fn new(code: ErrorCode) -> Self {
        ApiError {
            code,
            message: Humanizer::default().humanize_code(code.as_str(), None),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::BadAttributes | ErrorCode::EmptyMessage => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownSession | ErrorCode::UnknownRequest => StatusCode::NOT_FOUND,
            ErrorCode::NotYourBoard => StatusCode::FORBIDDEN,
            ErrorCode::NoOutstandingIntegration => StatusCode::CONFLICT,
            ErrorCode::NoUpstream => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "code": self.code, "message": self.message } })
    }
}

impl From<ErrorBody> for ApiError {
    fn from(body: ErrorBody) -> Self {
        ApiError::new(body.code)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.to_json())).into_response()
    }
}
