//! Parameter storage and the Adam optimizer with linear learning-rate decay.

use super::Tensor;
use crate::rng::SeedStream;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("duplicate parameter name {0}")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// All parameters of a model, addressed by id; names are unique.
#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        self.try_add(name, tensor).expect("unique parameter names")
    }

    pub fn try_add(&mut self, name: &str, tensor: Tensor) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::DuplicateName(name.to_string()));
        }
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
            trainable: true,
        });
        let id = ParamId(self.params.len() - 1);
        self.by_name.insert(name.to_string(), id.0);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn clear_grads(&mut self) {
        for p in self.params.iter_mut() {
            p.tensor.grad = None;
        }
    }

    /// Xavier-style uniform init in [-limit, limit] with
    /// limit = sqrt(6 / (fan_in + fan_out)).
    pub fn add_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut SeedStream) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let t = Tensor::zeros(vec![rows, cols]).fill_with(|| rng.uniform(-limit, limit));
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor::zeros(vec![rows, cols]))
    }
}

/// Adam with bias correction and a linearly decaying learning rate:
/// lr(step) = lr0 * max(0, 1 - step / total_steps).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: usize,
    pub lr0: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First/second moments per parameter id.
    moments: HashMap<usize, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(lr0: f64, total_steps: usize) -> Self {
        AdamState {
            step: 0,
            lr0,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            moments: HashMap::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr0 * (1.0 - self.step as f64 / self.total_steps as f64).max(0.0)
    }

    pub fn moments_for(&self, id: ParamId) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.moments.get(&id.0)
    }

    pub fn set_moments(&mut self, id: ParamId, m: Vec<f64>, v: Vec<f64>) {
        self.moments.insert(id.0, (m, v));
    }
}

/// One Adam update over the listed parameters; requires every listed
/// trainable parameter to carry a gradient.
pub fn adam_step(
    store: &mut ParamStore,
    ids: &[ParamId],
    state: &mut AdamState,
) -> Result<(), TensorError> {
    let lr = state.learning_rate();
    let t = (state.step + 1) as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for &id in ids {
        let name = store.get(id).name.clone();
        let param = store.get_mut(id);
        if !param.trainable {
            continue;
        }
        let grad = param
            .tensor
            .grad
            .take()
            .ok_or(TensorError::MissingGrad(name))?;
        let len = param.tensor.len();
        let (m, v) = state
            .moments
            .entry(id.0)
            .or_insert_with(|| (vec![0.0; len], vec![0.0; len]));
        for i in 0..len {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param.tensor.data[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    state.step += 1;
    Ok(())
}
