//! End-to-end pipeline: ingestion, configuration, the assembled two-encoder
//! model, checkpoints, metrics, and the command implementations behind the
//! CLI.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod conformer;
pub mod dataset;
pub mod metrics;
pub mod model;

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, SplitMethod};
pub use dataset::{ingest_path, ingest_str, DatasetRecord, IngestMode};
pub use model::{FusionModel, MoleculeInput, TokenVocab};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Ingest(#[from] dataset::IngestError),
    #[error(transparent)]
    Smiles(#[from] crate::smiles::SmilesError),
    #[error(transparent)]
    Conformer(#[from] conformer::ConformerError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Split(#[from] crate::split::SplitError),
    #[error(transparent)]
    Cliff(#[from] crate::cliff::CliffError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("token {token:?} not present in the checkpoint vocabulary")]
    VocabMismatch { token: String },
    #[error("corpus needs {needed} distinct tokens but the vocabulary is capped at {cap}")]
    VocabOverflow { needed: usize, cap: usize },
    #[error("split assignment does not cover molecule {id}")]
    SplitCoverage { id: String },
}

impl PipelineError {
    /// CLI exit code: 2 for input problems, 3 for contract violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_)
            | PipelineError::Ingest(_)
            | PipelineError::Smiles(_)
            | PipelineError::Conformer(_)
            | PipelineError::Config(_)
            | PipelineError::Split(_)
            | PipelineError::Cliff(_) => 2,
            PipelineError::Encoder(_)
            | PipelineError::Fusion(_)
            | PipelineError::Tensor(_)
            | PipelineError::Checkpoint(_)
            | PipelineError::VocabMismatch { .. }
            | PipelineError::VocabOverflow { .. }
            | PipelineError::SplitCoverage { .. } => 3,
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}
