//! Ingestion, configuration, persistence, and the CLI command
//! implementations tying the toolkit into an end-to-end data factory and
//! evaluation harness.

pub mod coco;
pub mod commands;
pub mod config;
pub mod depth_io;
pub mod jsonl;

pub use coco::{ingest_coco, SceneDescriptor};
pub use commands::{run_eval, run_lift, run_qagen, run_selfcheck};
pub use config::{Config, EvalTask};
pub use depth_io::{load_depth, read_pfm, write_pfm, write_png16};
pub use jsonl::{emit_jsonl, read_jsonl, PredictionRecord, QaRecord, RepoRecord, SCHEMA_VERSION};

/// Errors surfaced by the pipeline. Input errors exit with code 1, internal
/// invariant violations with code 2.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("input error: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 1,
            PipelineError::Internal(_) => 2,
        }
    }
}

impl From<crate::geom::GeomError> for PipelineError {
    fn from(e: crate::geom::GeomError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<crate::lift::LiftError> for PipelineError {
    fn from(e: crate::lift::LiftError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<crate::boxlang::BoxLangError> for PipelineError {
    fn from(e: crate::boxlang::BoxLangError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<crate::qa::QaError> for PipelineError {
    fn from(e: crate::qa::QaError) -> Self {
        match e {
            crate::qa::QaError::Inconsistent(msg) => PipelineError::Internal(msg),
            other => PipelineError::Input(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(PipelineError::Input("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::Internal("x".into()).exit_code(), 2);
        // Reasoning-chain inconsistency is an internal invariant violation.
        let internal: PipelineError = crate::qa::QaError::Inconsistent("x".into()).into();
        assert_eq!(internal.exit_code(), 2);
    }
}
