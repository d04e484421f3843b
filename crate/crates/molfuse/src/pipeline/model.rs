//! The assembled prediction model: token vocabulary, both encoders, and the
//! fusion head, together with per-molecule input preparation.

use super::conformer::{coords_for, ConformerTable};
use super::config::SplitMethod;
use super::PipelineError;
use crate::encoder::{Encoder3d, ModelDims, SequenceEncoder, Structure3dInput};
use crate::fusion::{align, FusionHead, TargetScaler};
use crate::rng::SeedStream;
use crate::smiles::{atom_token_mask, parse, tokenize, MolecularGraph};
use crate::tensor::{Graph, ParamId, ParamStore, Var};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Token-text vocabulary in first-seen order, frozen into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocab {
    tokens: Vec<String>,
}

impl TokenVocab {
    /// Scan SMILES strings and assign ids in encounter order.
    pub fn build<'a>(
        corpus: impl IntoIterator<Item = &'a str>,
        cap: usize,
    ) -> Result<Self, PipelineError> {
        let mut tokens = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for smiles in corpus {
            for token in tokenize(smiles)? {
                if !index.contains_key(&token.text) {
                    index.insert(token.text.clone(), tokens.len());
                    tokens.push(token.text);
                }
            }
        }
        if tokens.len() > cap {
            return Err(PipelineError::VocabOverflow {
                needed: tokens.len(),
                cap,
            });
        }
        Ok(TokenVocab { tokens })
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        TokenVocab { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn encode(&self, texts: &[String]) -> Result<Vec<usize>, PipelineError> {
        texts
            .iter()
            .map(|t| {
                self.tokens
                    .iter()
                    .position(|v| v == t)
                    .ok_or_else(|| PipelineError::VocabMismatch { token: t.clone() })
            })
            .collect()
    }
}

/// Everything the model needs for one molecule, precomputed once.
#[derive(Debug, Clone)]
pub struct MoleculeInput {
    pub id: String,
    pub graph: MolecularGraph,
    pub token_ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub structure: Structure3dInput,
}

pub fn prepare_molecule(
    id: &str,
    smiles: &str,
    vocab: &TokenVocab,
    conformers: Option<&ConformerTable>,
    seed: u64,
) -> Result<MoleculeInput, PipelineError> {
    let graph = parse(smiles)?;
    let tokens = tokenize(smiles)?;
    let mask = atom_token_mask(&tokens);
    let texts: Vec<String> = tokens.into_iter().map(|t| t.text).collect();
    let token_ids = vocab.encode(&texts)?;
    let coords = coords_for(id, &graph, conformers, seed)?;
    let structure = Structure3dInput::from_graph(&graph, &coords)?;
    Ok(MoleculeInput {
        id: id.to_string(),
        graph,
        token_ids,
        mask,
        structure,
    })
}

/// Forward-pass handles for one molecule.
pub struct ModelOutput {
    pub z1: Var,
    pub z2_aligned: Var,
    pub scores: Var,
    pub fused: Var,
    /// Raw prediction in (-1, 1); unscale with the target scaler.
    pub raw: Var,
    pub z1_pooled: Var,
    pub z2_pooled: Var,
}

pub struct FusionModel {
    pub dims: ModelDims,
    pub store: ParamStore,
    pub enc3d: Encoder3d,
    pub seq: SequenceEncoder,
    pub fusion: FusionHead,
    pub vocab: TokenVocab,
    pub scaler: Option<TargetScaler>,
    pub split_method: Option<SplitMethod>,
}

impl FusionModel {
    pub fn new(dims: &ModelDims, vocab: TokenVocab, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = SeedStream::new(seed, "model-init");
        let enc3d = Encoder3d::new(&mut store, dims, &mut rng, "enc3d");
        let seq = SequenceEncoder::new(&mut store, dims, &mut rng, "seq");
        let fusion = FusionHead::new(&mut store, dims, &mut rng, "fusion");
        FusionModel {
            dims: dims.clone(),
            store,
            enc3d,
            seq,
            fusion,
            vocab,
            scaler: None,
            split_method: None,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.enc3d.param_ids();
        ids.extend(self.seq.param_ids());
        ids.extend(self.fusion.param_ids());
        ids
    }

    pub fn forward(
        &self,
        graph: &mut Graph,
        input: &MoleculeInput,
    ) -> Result<ModelOutput, PipelineError> {
        let z1 = self.enc3d.encode(graph, &self.store, &input.structure);
        let z2 = self.seq.encode(graph, &self.store, &input.token_ids)?;
        let z2_aligned = align(graph, z2, &input.mask, input.graph.atoms.len())?;
        let (scores, fused) = self
            .fusion
            .mol_attention(graph, &self.store, z1, z2_aligned);
        let raw = self.fusion.predict_raw(graph, &self.store, fused, scores);
        let z1_pooled = graph.mean_rows(z1);
        let z2_pooled = graph.mean_rows(z2_aligned);
        Ok(ModelOutput {
            z1,
            z2_aligned,
            scores,
            fused,
            raw,
            z1_pooled,
            z2_pooled,
        })
    }

    /// Prediction in log2 units plus per-atom scores, for inference paths.
    pub fn predict_one(&self, input: &MoleculeInput) -> Result<(f64, Vec<f64>), PipelineError> {
        let scaler = self
            .scaler
            .as_ref()
            .ok_or(crate::fusion::FusionError::UntrainedScaler)?;
        let mut graph = Graph::new();
        let out = self.forward(&mut graph, input)?;
        let raw = graph.value(out.raw).item();
        let scores = graph.value(out.scores).data.clone();
        Ok((scaler.unscale(raw), scores))
    }
}

/// Per-atom explanation attached to one prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionExplanation {
    pub id: String,
    /// One score per atom, each strictly inside (0, 1).
    pub scores: Vec<f64>,
    /// Prediction in log2 units.
    pub prediction: f64,
}
