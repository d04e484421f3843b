//! Fusion of the two encoder outputs: token-to-atom alignment, the per-atom
//! attention gate, the bounded regression head, and the hybrid
//! MSE + triplet objective.

use crate::tensor::{Graph, ParamId, ParamStore, Var};
use crate::rng::SeedStream;
use crate::encoder::ModelDims;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRIPLET_EPS: f64 = 1e-8;
pub const DEFAULT_MARGIN: f64 = 1.0;
/// Scaled-target range: the regression head ends in tanh, so train targets
/// are mapped into [-0.95, 0.95] to keep them reachable.
pub const SCALE_LIMIT: f64 = 0.95;
/// Largest f64 below 1.0.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("alignment mismatch: mask selects {selected} tokens but the graph has {atoms} atoms")]
    AlignmentMismatch { selected: usize, atoms: usize },
    #[error("target scaler has not been fitted")]
    UntrainedScaler,
    #[error("triplet loss needs at least 2 molecules, got {0}")]
    BatchTooSmall(usize),
}

/// Select the rows of z2 at atom-token positions so each row of the result
/// corresponds to one atom of the molecular graph.
pub fn align(
    graph: &mut Graph,
    z2: Var,
    mask: &[bool],
    atom_count: usize,
) -> Result<Var, FusionError> {
    let indices: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    if indices.len() != atom_count || mask.len() != graph.value(z2).rows() {
        return Err(FusionError::AlignmentMismatch {
            selected: indices.len(),
            atoms: atom_count,
        });
    }
    Ok(graph.gather_rows(z2, &indices))
}

/// Invertible affine map between log2 efficiencies and the tanh range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn fit(values: &[f64]) -> Result<Self, FusionError> {
        if values.is_empty() {
            return Err(FusionError::UntrainedScaler);
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(TargetScaler { min, max })
    }

    fn span(&self) -> f64 {
        (self.max - self.min).max(1e-12)
    }

    pub fn scale(&self, v: f64) -> f64 {
        -SCALE_LIMIT + (v - self.min) * (2.0 * SCALE_LIMIT) / self.span()
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + (s + SCALE_LIMIT) * self.span() / (2.0 * SCALE_LIMIT)
    }
}

/// Parameters of the mol-attention gate and the regression head.
pub struct FusionHead {
    pub gate_w1: ParamId,
    pub gate_b1: ParamId,
    pub gate_w2: ParamId,
    pub gate_b2: ParamId,
    pub reg_w1: ParamId,
    pub reg_b1: ParamId,
    pub reg_w2: ParamId,
    pub reg_b2: ParamId,
    fused_dim: usize,
}

impl FusionHead {
    pub fn new(
        store: &mut ParamStore,
        dims: &ModelDims,
        rng: &mut SeedStream,
        prefix: &str,
    ) -> Self {
        let fused = 2 * dims.dim;
        let squeezed = (fused / dims.compression).max(1);
        FusionHead {
            gate_w1: store.add_xavier(&format!("{prefix}.gate_w1"), fused, squeezed, rng),
            gate_b1: store.add_zeros(&format!("{prefix}.gate_b1"), 1, squeezed),
            gate_w2: store.add_xavier(&format!("{prefix}.gate_w2"), squeezed, 1, rng),
            gate_b2: store.add_zeros(&format!("{prefix}.gate_b2"), 1, 1),
            reg_w1: store.add_xavier(&format!("{prefix}.reg_w1"), fused, dims.regress_hidden, rng),
            reg_b1: store.add_zeros(&format!("{prefix}.reg_b1"), 1, dims.regress_hidden),
            reg_w2: store.add_xavier(&format!("{prefix}.reg_w2"), dims.regress_hidden, 1, rng),
            reg_b2: store.add_zeros(&format!("{prefix}.reg_b2"), 1, 1),
            fused_dim: fused,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.gate_w1,
            self.gate_b1,
            self.gate_w2,
            self.gate_b2,
            self.reg_w1,
            self.reg_b1,
            self.reg_w2,
            self.reg_b2,
        ]
    }

    /// Concatenate the aligned modality features and weight every atom:
    /// scores = sigmoid(W2 relu(W1 [z1 | z2'])), in (0,1).
    pub fn mol_attention(
        &self,
        graph: &mut Graph,
        store: &ParamStore,
        z1: Var,
        z2_aligned: Var,
    ) -> (Var, Var) {
        let fused = graph.concat_cols(z1, z2_aligned);
        assert_eq!(graph.value(fused).cols(), self.fused_dim, "fused width");
        let w1 = graph.param(store, self.gate_w1);
        let b1 = graph.param(store, self.gate_b1);
        let w2 = graph.param(store, self.gate_w2);
        let b2 = graph.param(store, self.gate_b2);
        let squeezed = graph.linear(fused, w1, b1);
        let squeezed = graph.relu(squeezed);
        let logits = graph.linear(squeezed, w2, b2);
        let scores = graph.sigmoid(logits);
        // keep scores strictly inside (0,1) even when a trained gate
        // saturates past f64 resolution
        let scores = graph.clamp(scores, f64::MIN_POSITIVE, BELOW_ONE);
        (scores, fused)
    }

    /// Scale atoms by their scores, mean-pool, and regress through two tanh
    /// layers. Output is the raw prediction in (-1, 1).
    pub fn predict_raw(
        &self,
        graph: &mut Graph,
        store: &ParamStore,
        fused: Var,
        scores: Var,
    ) -> Var {
        let weighted = graph.mul_broadcast_col(fused, scores);
        let pooled = graph.mean_rows(weighted);
        let w1 = graph.param(store, self.reg_w1);
        let b1 = graph.param(store, self.reg_b1);
        let w2 = graph.param(store, self.reg_w2);
        let b2 = graph.param(store, self.reg_b2);
        let hidden = graph.linear(pooled, w1, b1);
        let hidden = graph.tanh(hidden);
        let out = graph.linear(hidden, w2, b2);
        graph.tanh(out)
    }
}

/// Cross-modal triplet loss over per-molecule pooled embeddings.
///
/// `pooled` holds one (3-D encoder, sequence encoder) mean-pooled pair per
/// molecule; rows are stacked [all modality-0, all modality-1] and every
/// anchor/positive pair is the same molecule seen by the two encoders.
pub fn triplet_from_pooled(
    graph: &mut Graph,
    pooled: &[(Var, Var)],
    margin: f64,
) -> Result<Var, FusionError> {
    if pooled.len() < 2 {
        return Err(FusionError::BatchTooSmall(pooled.len()));
    }
    let m = pooled.len();
    let mut rows: Vec<Var> = pooled.iter().map(|&(z1, _)| z1).collect();
    rows.extend(pooled.iter().map(|&(_, z2)| z2));
    let stacked = graph.stack_rows(&rows);
    let molecule: Vec<usize> = (0..m).chain(0..m).collect();
    let modality: Vec<usize> = std::iter::repeat_n(0, m)
        .chain(std::iter::repeat_n(1, m))
        .collect();
    Ok(graph.triplet_loss(stacked, &molecule, &modality, margin, TRIPLET_EPS))
}

/// MSE over scaled predictions plus beta times the triplet loss.
pub fn hybrid_loss(
    graph: &mut Graph,
    preds: Var,
    targets: &crate::tensor::Tensor,
    pooled: &[(Var, Var)],
    margin: f64,
    beta: f64,
) -> Result<Var, FusionError> {
    let mse = graph.mse_loss(preds, targets);
    if beta == 0.0 {
        return Ok(mse);
    }
    let triplet = triplet_from_pooled(graph, pooled, margin)?;
    let weighted = graph.scale(triplet, beta);
    Ok(graph.add(mse, weighted))
}
