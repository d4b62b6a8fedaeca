//! Exit codes and the JSON error printed on stderr.

use serde_json::{json, Value};
use yoho_core::annotation::AnnotationError;
use yoho_core::config::ConfigError;
use yoho_core::infer::InferError;
use yoho_core::io::IoError;
use yoho_core::model::ModelError;
use yoho_core::pipeline::PipelineError;
use yoho_core::render::RenderError;
use yoho_core::train::TrainError;

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_TRAINING: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(EXIT_VALIDATION, "validation", message)
    }

    pub fn to_json(&self) -> String {
        let mut body = json!({
            "kind": self.kind,
            "message": self.message,
            "exit_code": self.code,
        });
        if let Some(d) = &self.details {
            body["details"] = d.clone();
        }
        json!({ "error": body }).to_string()
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::new(EXIT_IO, "io", e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(_) => Self::new(EXIT_VALIDATION, "config", e.to_string()),
            ConfigError::Io(io) => io.into(),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        let message = e.to_string();
        match e {
            AnnotationError::Io { .. } | AnnotationError::MissingImage { .. } => Self::new(EXIT_IO, "io", message),
            AnnotationError::InvariantViolation(finding) => Self {
                details: serde_json::to_value(&finding).ok(),
                ..Self::new(EXIT_VALIDATION, "annotation", message)
            },
            AnnotationError::Malformed(_) | AnnotationError::DegeneratePolygon { .. } => {
                Self::new(EXIT_VALIDATION, "annotation", message)
            }
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Annotation(a) => a.into(),
            RenderError::Io(io) => io.into(),
            RenderError::Dataset { .. } => Self::new(EXIT_IO, "dataset", e.to_string()),
            _ => Self::new(EXIT_VALIDATION, "render", e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(io) => io.into(),
            ModelError::Checkpoint { .. } => Self::new(EXIT_IO, "checkpoint", e.to_string()),
            ModelError::Candle(_) => Self::new(EXIT_INTERNAL, "internal", e.to_string()),
            _ => Self::new(EXIT_VALIDATION, "model", e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::new(EXIT_VALIDATION, "config", e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Io(io) => io.into(),
            TrainError::Model(ModelError::Candle(_)) | TrainError::NonFiniteLoss { .. } | TrainError::Loss(_) => {
                Self::new(EXIT_TRAINING, "training_aborted", e.to_string())
            }
            TrainError::Model(m) => m.into(),
        }
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        match e {
            InferError::Model(m) => m.into(),
            InferError::Annotation(a) => a.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Annotation(a) => a.into(),
            PipelineError::Render(r) => r.into(),
            PipelineError::Train(t) => t.into(),
            PipelineError::Infer(i) => i.into(),
            PipelineError::Io(io) => io.into(),
            PipelineError::Exists { .. } => Self::new(EXIT_VALIDATION, "exists", e.to_string()),
            PipelineError::Corrupt { .. } => Self::new(EXIT_IO, "corrupt", e.to_string()),
        }
    }
}
