//! The two modality encoders.
//!
//! `attention3d` turns atom types, coordinates, distances and bond types
//! into per-atom features through a stack of pair-biased attention layers;
//! `ssm` runs token embeddings through selective-state-space blocks. Both
//! emit `[rows, dim]` feature matrices consumed by the fusion head.

pub mod attention3d;
pub mod ssm;

pub use attention3d::{
    biased_attention_layer, make_mask_plan, pretrain_loss, pretrain_step, Encoder3d, MaskPlan,
    PretrainHeads, PretrainLoss, Structure3dInput,
};
pub use ssm::{mamba_block, SequenceEncoder, SsmParams};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("token id {id} outside vocabulary of size {vocab}")]
    UnknownToken { id: usize, vocab: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid structure input: {0}")]
    BadStructure(String),
}

/// Width/depth settings shared by the encoders and the fusion head.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub dim: usize,
    pub heads: usize,
    pub layers_3d: usize,
    pub seq_layers: usize,
    pub state_dim: usize,
    pub conv_width: usize,
    pub vocab_size: usize,
    pub rbf_count: usize,
    /// Compression ratio r of the fusion gate.
    pub compression: usize,
    /// Hidden width of the regression head.
    pub regress_hidden: usize,
}

impl ModelDims {
    /// Full-size configuration matching the published hyperparameters.
    pub fn full() -> Self {
        ModelDims {
            dim: 512,
            heads: 8,
            layers_3d: 16,
            seq_layers: 2,
            state_dim: 16,
            conv_width: 4,
            vocab_size: 100,
            rbf_count: 16,
            compression: 16,
            regress_hidden: 128,
        }
    }

    /// Small configuration for fast desk-scale runs and CI.
    pub fn mini() -> Self {
        ModelDims {
            dim: 64,
            heads: 4,
            layers_3d: 2,
            seq_layers: 2,
            state_dim: 8,
            conv_width: 4,
            vocab_size: 100,
            rbf_count: 8,
            compression: 16,
            regress_hidden: 32,
        }
    }

    /// Tiny configuration used by gradient checks.
    pub fn micro() -> Self {
        ModelDims {
            dim: 32,
            heads: 4,
            layers_3d: 1,
            seq_layers: 1,
            state_dim: 4,
            conv_width: 3,
            vocab_size: 100,
            rbf_count: 4,
            compression: 8,
            regress_hidden: 16,
        }
    }
}

/// Atom-type vocabulary for the 3-D encoder: 30 ids, id 0 reserved for the
/// mask token, id 29 for elements outside the table.
pub const ATOM_TYPE_COUNT: usize = 30;
pub const MASK_TYPE_ID: usize = 0;
pub const OTHER_TYPE_ID: usize = 29;

const ATOM_TYPE_TABLE: [&str; 28] = [
    "H", "C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B", "Si", "Se", "Na", "K", "Li", "Ca",
    "Mg", "Zn", "Fe", "Cu", "Mn", "Co", "Ni", "As", "Al", "Sn", "Ag",
];

pub fn atom_type_id(element: &str) -> usize {
    ATOM_TYPE_TABLE
        .iter()
        .position(|&e| e == element)
        .map(|i| i + 1)
        .unwrap_or(OTHER_TYPE_ID)
}
