//! Versioned binary checkpoint format.
//!
//! Layout:
//!
//! ```text
//! bytes 0..8    magic "MOLFUSE\0"
//! bytes 8..10   format version (u16 LE, currently 1)
//! bytes 10..14  header length (u32 LE)
//! header        JSON (CheckpointHeader)
//! data          f64 LE blobs: every parameter in header order, then, when
//!               optimizer state is present, the first and second Adam
//!               moments in the same order
//! ```
//!
//! Loading reconstructs the model from the header dims and overwrites its
//! parameters by name; any name or shape that does not line up (for example
//! a different layer count) is a hard error.

use super::config::SplitMethod;
use super::model::TokenVocab;
use super::PipelineError;
use crate::encoder::ModelDims;
use crate::fusion::TargetScaler;
use crate::tensor::{AdamState, ParamStore};
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 8] = b"MOLFUSE\0";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub step: usize,
    pub lr0: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// "pretrain3d" or "fusion".
    pub kind: String,
    pub dims: ModelDims,
    /// Run seed, reused at inference so pseudo-conformers reproduce exactly.
    #[serde(default)]
    pub seed: u64,
    pub vocab: Option<Vec<String>>,
    pub scaler: Option<TargetScaler>,
    pub split_method: Option<SplitMethod>,
    pub params: Vec<ParamEntry>,
    pub optimizer: Option<OptimizerHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Parameter data aligned with header.params.
    pub params: Vec<Vec<f64>>,
    /// (first, second) Adam moments aligned with header.params.
    pub moments: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

fn err(message: impl Into<String>) -> PipelineError {
    PipelineError::Checkpoint(message.into())
}

impl Checkpoint {
    /// Capture every parameter in the store (insertion order) plus optional
    /// optimizer state.
    pub fn capture(
        kind: &str,
        dims: &ModelDims,
        store: &ParamStore,
        vocab: Option<&TokenVocab>,
        scaler: Option<&TargetScaler>,
        split_method: Option<SplitMethod>,
        adam: Option<&AdamState>,
    ) -> Self {
        let mut entries = Vec::new();
        let mut params = Vec::new();
        let mut moments = adam.map(|_| Vec::new());
        for (id, p) in store.iter() {
            entries.push(ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape.clone(),
            });
            params.push(p.tensor.data.clone());
            if let (Some(ms), Some(state)) = (moments.as_mut(), adam) {
                let (m, v) = state
                    .moments_for(id)
                    .cloned()
                    .unwrap_or_else(|| (vec![0.0; p.tensor.len()], vec![0.0; p.tensor.len()]));
                ms.push((m, v));
            }
        }
        Checkpoint {
            header: CheckpointHeader {
                kind: kind.to_string(),
                dims: dims.clone(),
                seed: 0,
                vocab: vocab.map(|v| v.tokens().to_vec()),
                scaler: scaler.cloned(),
                split_method,
                params: entries,
                optimizer: adam.map(|a| OptimizerHeader {
                    step: a.step,
                    lr0: a.lr0,
                    total_steps: a.total_steps,
                    beta1: a.beta1,
                    beta2: a.beta2,
                    eps: a.eps,
                }),
            },
            params,
            moments,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, PipelineError> {
        let header =
            serde_json::to_vec(&self.header).map_err(|e| err(format!("header encode: {e}")))?;
        let mut out = Vec::with_capacity(14 + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut push_blob = |blob: &[f64]| {
            for v in blob {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for p in &self.params {
            push_blob(p);
        }
        if let Some(moments) = &self.moments {
            for (m, v) in moments {
                push_blob(m);
                push_blob(v);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        if bytes.len() < 14 {
            return Err(err("truncated checkpoint"));
        }
        if &bytes[0..8] != MAGIC {
            return Err(err("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
        let header_end = 14usize
            .checked_add(header_len)
            .ok_or_else(|| err("header length overflow"))?;
        if bytes.len() < header_end {
            return Err(err("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[14..header_end])
            .map_err(|e| err(format!("header decode: {e}")))?;

        let mut lens = Vec::with_capacity(header.params.len());
        let mut total = 0usize;
        for p in &header.params {
            let n: usize = p.shape.iter().try_fold(1usize, |acc, &d| {
                acc.checked_mul(d)
            }).ok_or_else(|| err("parameter shape overflow"))?;
            lens.push(n);
            total = total.checked_add(n).ok_or_else(|| err("data size overflow"))?;
        }
        let with_moments = header.optimizer.is_some();
        let expected_values = if with_moments { total * 3 } else { total };
        let expected_bytes = expected_values
            .checked_mul(8)
            .ok_or_else(|| err("data size overflow"))?;
        if bytes.len() != header_end + expected_bytes {
            return Err(err(format!(
                "data section is {} bytes, expected {expected_bytes}",
                bytes.len() - header_end
            )));
        }

        let mut cursor = header_end;
        let mut read_blob = |n: usize| -> Vec<f64> {
            let mut blob = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                b.copy_from_slice(&bytes[cursor..cursor + 8]);
                blob.push(f64::from_le_bytes(b));
                cursor += 8;
            }
            blob
        };
        let params: Vec<Vec<f64>> = lens.iter().map(|&n| read_blob(n)).collect();
        let moments = if with_moments {
            Some(
                lens.iter()
                    .map(|&n| (read_blob(n), read_blob(n)))
                    .collect(),
            )
        } else {
            None
        };
        Ok(Checkpoint {
            header,
            params,
            moments,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), PipelineError> {
        super::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        Checkpoint::from_bytes(&super::read_file(path)?)
    }

    /// Overwrite every parameter of `store` from this checkpoint by name.
    /// Every store parameter must be present with a matching shape, which
    /// turns layer-count or width mismatches into hard errors.
    pub fn restore_params(&self, store: &mut ParamStore) -> Result<(), PipelineError> {
        for (_, p) in store.iter() {
            if !self.header.params.iter().any(|e| e.name == p.name) {
                return Err(err(format!(
                    "model parameter {} missing from checkpoint (layer/width mismatch?)",
                    p.name
                )));
            }
        }
        self.restore_params_by_prefix(store, "")
    }

    /// Overwrite the store parameters whose names start with `prefix` from
    /// this checkpoint; all store parameters under the prefix must resolve.
    pub fn restore_params_by_prefix(
        &self,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<(), PipelineError> {
        let names: Vec<String> = store
            .iter()
            .map(|(_, p)| p.name.clone())
            .filter(|n| n.starts_with(prefix))
            .collect();
        for name in names {
            let pos = self
                .header
                .params
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| {
                    err(format!(
                        "model parameter {name} missing from checkpoint (layer/width mismatch?)"
                    ))
                })?;
            let id = store.lookup(&name).expect("name from the store");
            let target = &mut store.get_mut(id).tensor;
            if target.shape != self.header.params[pos].shape {
                return Err(err(format!(
                    "parameter {name}: checkpoint shape {:?} vs model shape {:?}",
                    self.header.params[pos].shape, target.shape
                )));
            }
            target.data = self.params[pos].clone();
            target.grad = None;
        }
        Ok(())
    }

    /// Rebuild Adam state (moments matched to store ids by name).
    pub fn restore_optimizer(&self, store: &ParamStore) -> Result<Option<AdamState>, PipelineError> {
        let Some(opt) = &self.header.optimizer else {
            return Ok(None);
        };
        let moments = self
            .moments
            .as_ref()
            .ok_or_else(|| err("optimizer header without moment data"))?;
        let mut state = AdamState::new(opt.lr0, opt.total_steps);
        state.step = opt.step;
        state.beta1 = opt.beta1;
        state.beta2 = opt.beta2;
        state.eps = opt.eps;
        for (entry, (m, v)) in self.header.params.iter().zip(moments) {
            if let Some(id) = store.lookup(&entry.name) {
                state.set_moments(id, m.clone(), v.clone());
            }
        }
        Ok(Some(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use crate::tensor::Tensor;

    fn sample_store() -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = SeedStream::new(1, "ckpt");
        store.add(
            "layer0.w",
            Tensor::zeros(vec![2, 3]).fill_with(|| rng.uniform(-1.0, 1.0)),
        );
        store.add("layer0.b", Tensor::row(vec![0.5, -0.5, 0.25]));
        store
    }

    #[test]
    fn roundtrip_without_optimizer() {
        let store = sample_store();
        let ckpt = Checkpoint::capture(
            "fusion",
            &ModelDims::micro(),
            &store,
            None,
            Some(&TargetScaler { min: -1.0, max: 2.0 }),
            Some(SplitMethod::Cliff),
            None,
        );
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.header.scaler.as_ref().unwrap().max, 2.0);
    }

    #[test]
    fn roundtrip_with_optimizer_state() {
        let store = sample_store();
        let mut adam = AdamState::new(1e-3, 50);
        adam.step = 7;
        let first = store.lookup("layer0.w").unwrap();
        adam.set_moments(first, vec![0.1; 6], vec![0.2; 6]);
        let ckpt = Checkpoint::capture(
            "pretrain3d",
            &ModelDims::micro(),
            &store,
            None,
            None,
            None,
            Some(&adam),
        );
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back.header.optimizer.as_ref().unwrap().step, 7);
        let restored = back.restore_optimizer(&store).unwrap().unwrap();
        assert_eq!(restored.step, 7);
        assert_eq!(
            restored.moments_for(first).unwrap().0,
            vec![0.1; 6]
        );
    }

    #[test]
    fn restore_overwrites_matching_names() {
        let store = sample_store();
        let ckpt = Checkpoint::capture("fusion", &ModelDims::micro(), &store, None, None, None, None);
        let mut fresh = ParamStore::new();
        fresh.add("layer0.w", Tensor::zeros(vec![2, 3]));
        fresh.add("layer0.b", Tensor::zeros(vec![1, 3]));
        ckpt.restore_params(&mut fresh).unwrap();
        assert_eq!(
            fresh.get(fresh.lookup("layer0.b").unwrap()).tensor.data,
            vec![0.5, -0.5, 0.25]
        );
    }

    #[test]
    fn missing_parameter_is_a_hard_error() {
        let store = sample_store();
        let ckpt = Checkpoint::capture("fusion", &ModelDims::micro(), &store, None, None, None, None);
        let mut bigger = ParamStore::new();
        bigger.add("layer0.w", Tensor::zeros(vec![2, 3]));
        bigger.add("layer0.b", Tensor::zeros(vec![1, 3]));
        bigger.add("layer1.w", Tensor::zeros(vec![2, 3]));
        assert!(matches!(
            ckpt.restore_params(&mut bigger).unwrap_err(),
            PipelineError::Checkpoint(_)
        ));
    }

    #[test]
    fn shape_mismatch_is_a_hard_error() {
        let store = sample_store();
        let ckpt = Checkpoint::capture("fusion", &ModelDims::micro(), &store, None, None, None, None);
        let mut wrong = ParamStore::new();
        wrong.add("layer0.w", Tensor::zeros(vec![3, 2]));
        wrong.add("layer0.b", Tensor::zeros(vec![1, 3]));
        assert!(matches!(
            ckpt.restore_params(&mut wrong).unwrap_err(),
            PipelineError::Checkpoint(_)
        ));
    }

    #[test]
    fn malformed_bytes_are_rejected() {
        assert!(Checkpoint::from_bytes(b"short").is_err());
        assert!(Checkpoint::from_bytes(&[0u8; 32]).is_err());
        let store = sample_store();
        let ckpt = Checkpoint::capture("fusion", &ModelDims::micro(), &store, None, None, None, None);
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
