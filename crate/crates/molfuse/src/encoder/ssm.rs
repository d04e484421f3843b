//! Selective-state-space sequence encoder.
//!
//! Tokens are embedded and passed through residual blocks: an input
//! projection doubles the feature dim and splits it; one half goes through a
//! causal depthwise convolution, SiLU, and projections to the
//! input-dependent (delta, B, C) driving the selective scan; the other half
//! gates the scan output through SiLU before the output projection.

use super::{EncoderError, ModelDims};
use crate::rng::SeedStream;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Parameters of one selective-scan block. A and the skip vector are
/// input-independent; delta, B and C are produced from the input.
pub struct SsmParams {
    pub w_in: ParamId,
    pub b_in: ParamId,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub w_proj: ParamId,
    pub b_proj: ParamId,
    pub state_matrix: ParamId,
    pub skip: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

impl SsmParams {
    pub fn new(
        store: &mut ParamStore,
        dims: &ModelDims,
        rng: &mut SeedStream,
        prefix: &str,
    ) -> Self {
        let d = dims.dim;
        let n = dims.state_dim;
        // negative diagonal init: state s decays with rate s+1
        let a_init = Tensor::matrix(
            d,
            n,
            (0..d * n).map(|i| -((i % n) as f64 + 1.0)).collect(),
        );
        SsmParams {
            w_in: store.add_xavier(&format!("{prefix}.w_in"), d, 2 * d, rng),
            b_in: store.add_zeros(&format!("{prefix}.b_in"), 1, 2 * d),
            conv_kernel: store.add(
                &format!("{prefix}.conv_kernel"),
                Tensor::zeros(vec![dims.conv_width, d]).fill_with(|| rng.normal() * 0.2),
            ),
            conv_bias: store.add_zeros(&format!("{prefix}.conv_bias"), 1, d),
            w_proj: store.add_xavier(&format!("{prefix}.w_proj"), d, d + 2 * n, rng),
            b_proj: store.add_zeros(&format!("{prefix}.b_proj"), 1, d + 2 * n),
            state_matrix: store.add(&format!("{prefix}.state_matrix"), a_init),
            skip: store.add(&format!("{prefix}.skip"), Tensor::row(vec![1.0; d])),
            w_out: store.add_xavier(&format!("{prefix}.w_out"), d, d, rng),
            b_out: store.add_zeros(&format!("{prefix}.b_out"), 1, d),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![
            self.w_in,
            self.b_in,
            self.conv_kernel,
            self.conv_bias,
            self.w_proj,
            self.b_proj,
            self.state_matrix,
            self.skip,
            self.w_out,
            self.b_out,
        ]
    }
}

/// One residual selective-scan block over [L, dim].
pub fn mamba_block(
    graph: &mut Graph,
    store: &ParamStore,
    params: &SsmParams,
    x: Var,
    dims: &ModelDims,
) -> Var {
    let d = dims.dim;
    let n = dims.state_dim;

    let w_in = graph.param(store, params.w_in);
    let b_in = graph.param(store, params.b_in);
    let projected = graph.linear(x, w_in, b_in);
    let scan_half = graph.slice_cols(projected, 0, d);
    let gate_half = graph.slice_cols(projected, d, d);

    let kernel = graph.param(store, params.conv_kernel);
    let conv_bias = graph.param(store, params.conv_bias);
    let u = graph.conv1d_depthwise(scan_half, kernel);
    let u = graph.add_bias(u, conv_bias);
    let u = graph.silu(u);

    let w_proj = graph.param(store, params.w_proj);
    let b_proj = graph.param(store, params.b_proj);
    let proj = graph.linear(u, w_proj, b_proj);
    let delta_raw = graph.slice_cols(proj, 0, d);
    let delta = graph.softplus(delta_raw);
    let b_seq = graph.slice_cols(proj, d, n);
    let c_seq = graph.slice_cols(proj, d + n, n);

    let a = graph.param(store, params.state_matrix);
    let skip = graph.param(store, params.skip);
    let scanned = graph.selective_scan(u, delta, b_seq, c_seq, a, skip);

    let gate = graph.silu(gate_half);
    let gated = graph.mul(scanned, gate);

    let w_out = graph.param(store, params.w_out);
    let b_out = graph.param(store, params.b_out);
    let out = graph.linear(gated, w_out, b_out);
    graph.add(x, out)
}

pub struct SequenceEncoder {
    pub dims: ModelDims,
    pub embed: ParamId,
    pub blocks: Vec<SsmParams>,
}

impl SequenceEncoder {
    pub fn new(
        store: &mut ParamStore,
        dims: &ModelDims,
        rng: &mut SeedStream,
        prefix: &str,
    ) -> Self {
        let embed = store.add(
            &format!("{prefix}.embed"),
            Tensor::zeros(vec![dims.vocab_size, dims.dim]).fill_with(|| rng.normal() * 0.02),
        );
        let blocks = (0..dims.seq_layers)
            .map(|l| SsmParams::new(store, dims, rng, &format!("{prefix}.block{l}")))
            .collect();
        SequenceEncoder {
            dims: dims.clone(),
            embed,
            blocks,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embed];
        for b in &self.blocks {
            ids.extend(b.ids());
        }
        ids
    }

    /// Token ids -> [m, dim] features.
    pub fn encode(
        &self,
        graph: &mut Graph,
        store: &ParamStore,
        token_ids: &[usize],
    ) -> Result<Var, EncoderError> {
        if token_ids.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        if let Some(&bad) = token_ids.iter().find(|&&t| t >= self.dims.vocab_size) {
            return Err(EncoderError::UnknownToken {
                id: bad,
                vocab: self.dims.vocab_size,
            });
        }
        let table = graph.param(store, self.embed);
        let mut h = graph.gather_rows(table, token_ids);
        for block in &self.blocks {
            h = mamba_block(graph, store, block, h, &self.dims);
        }
        Ok(h)
    }
}
