use std::path::PathBuf;

use rulepatch::data::DataError;
use rulepatch::explainer::ExplainError;
use rulepatch::model::ModelError;
use rulepatch::overlay::{OverlayError, RuleId};
use rulepatch::rules::{ParseError, SchemaError};
use rulepatch::simulation::SimError;
use rulepatch::transform::TransformError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("session {0} has no fitted model; run `train` first")]
    NotFitted(PathBuf),
    #[error("corrected rule conflicts with feedback rule {conflict_with}")]
    Conflict { conflict_with: RuleId },
    #[error("{message}")]
    Parse { message: String, position: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

/// Machine-readable error body, shared by stderr output and HTTP responses.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflict_with: Option<RuleId>,
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::NotFitted(_) => "not_fitted",
            AppError::Conflict { .. } => "conflict",
            AppError::Parse { .. } => "parse",
            AppError::Invalid(_) => "invalid_input",
            AppError::NotFound(_) => "not_found",
            AppError::Io { .. } => "io",
            AppError::Internal(_) => "internal",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Conflict { .. } => 2,
            _ => 1,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            kind: self.kind(),
            message: self.to_string(),
            position: match self {
                AppError::Parse { position, .. } => Some(*position),
                _ => None,
            },
            conflict_with: match self {
                AppError::Conflict { conflict_with } => Some(*conflict_with),
                _ => None,
            },
        }
    }
}

impl From<ParseError> for AppError {
    fn from(e: ParseError) -> Self {
        AppError::Parse {
            position: e.position(),
            message: e.to_string(),
        }
    }
}

impl From<OverlayError> for AppError {
    fn from(e: OverlayError) -> Self {
        match e {
            OverlayError::Conflict { conflict_with } => AppError::Conflict { conflict_with },
            OverlayError::UnknownId(id) => AppError::NotFound(format!("no feedback rule with id {id}")),
            OverlayError::Parse { source, .. } => source.into(),
            OverlayError::Unchanged | OverlayError::Transform(_) | OverlayError::Schema(_) => {
                AppError::Invalid(e.to_string())
            }
            OverlayError::Json { .. } => AppError::Internal(e.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for AppError {
            fn from(e: $t) -> Self {
                AppError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(SchemaError, DataError, ModelError, ExplainError, TransformError, SimError, serde_json::Error);
