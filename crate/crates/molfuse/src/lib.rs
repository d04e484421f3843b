//! Multi-modal molecular property prediction for ionizable lipids.
//!
//! The crate splits into a cheminformatics layer (SMILES parsing,
//! fingerprints, cliff mining, dataset splitting), a small autodiff tensor
//! substrate, two molecular encoders (a pair-biased 3-D attention stack and
//! a selective-state-space sequence model), an attention fusion/regression
//! head with per-atom explanations, and the end-to-end pipeline behind the
//! CLI.

// matrix kernels read better as index loops
#![allow(clippy::needless_range_loop)]

pub mod cliff;
pub mod encoder;
pub mod fingerprint;
pub mod fusion;
pub mod pipeline;
pub mod rng;
pub mod smiles;
pub mod split;
pub mod tensor;
