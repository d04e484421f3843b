//! 3-D molecular encoder: multi-head self-attention with an additive
//! pair bias built from Gaussian-embedded interatomic distances and learned
//! bond-type embeddings, plus the masked-atom denoising pretraining heads.

use super::{EncoderError, ModelDims, ATOM_TYPE_COUNT, MASK_TYPE_ID};
use crate::rng::SeedStream;
use crate::smiles::MolecularGraph;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Bond codes for the pair matrix: 0 none, 1-4 bond orders, 5 self.
pub const BOND_CODE_COUNT: usize = 6;
pub const BOND_CODE_SELF: u8 = 5;

const RBF_MAX_DISTANCE: f64 = 12.0;
const RBF_SIGMA: f64 = 0.75;

const WEIGHT_TYPE: f64 = 1.0;
const WEIGHT_COORD: f64 = 5.0;
const WEIGHT_DIST: f64 = 10.0;

/// Geometry input for one molecule.
#[derive(Debug, Clone)]
pub struct Structure3dInput {
    pub atom_types: Vec<usize>,
    pub coords: Vec<[f64; 3]>,
    /// Row-major [n, n] Euclidean distances.
    pub dist: Vec<f64>,
    /// Row-major [n, n] bond codes.
    pub bond_types: Vec<u8>,
}

impl Structure3dInput {
    pub fn new(
        atom_types: Vec<usize>,
        coords: Vec<[f64; 3]>,
        bond_types: Vec<u8>,
    ) -> Result<Self, EncoderError> {
        let n = atom_types.len();
        if n == 0 {
            return Err(EncoderError::BadStructure("no atoms".into()));
        }
        if coords.len() != n || bond_types.len() != n * n {
            return Err(EncoderError::BadStructure(
                "coordinate/bond matrix sizes disagree with atom count".into(),
            ));
        }
        if atom_types.iter().any(|&t| t >= ATOM_TYPE_COUNT) {
            return Err(EncoderError::BadStructure("atom type id out of range".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if bond_types[i * n + j] != bond_types[j * n + i] {
                    return Err(EncoderError::BadStructure("bond matrix not symmetric".into()));
                }
            }
        }
        let dist = distances_from_coords(&coords);
        Ok(Structure3dInput {
            atom_types,
            coords,
            dist,
            bond_types,
        })
    }

    pub fn from_graph(g: &MolecularGraph, coords: &[[f64; 3]]) -> Result<Self, EncoderError> {
        let n = g.atoms.len();
        let atom_types = g
            .atoms
            .iter()
            .map(|a| super::atom_type_id(&a.element))
            .collect();
        let mut bond_types = vec![0u8; n * n];
        for i in 0..n {
            bond_types[i * n + i] = BOND_CODE_SELF;
        }
        for b in &g.bonds {
            bond_types[b.a * n + b.b] = b.order.code();
            bond_types[b.b * n + b.a] = b.order.code();
        }
        Structure3dInput::new(atom_types, coords.to_vec(), bond_types)
    }

    pub fn atom_count(&self) -> usize {
        self.atom_types.len()
    }

    /// Check the stored distance matrix against the coordinates.
    pub fn validate(&self) -> Result<(), EncoderError> {
        let n = self.atom_count();
        let fresh = distances_from_coords(&self.coords);
        for i in 0..n {
            if self.dist[i * n + i] != 0.0 {
                return Err(EncoderError::BadStructure("distance diagonal not zero".into()));
            }
            for j in 0..n {
                if (self.dist[i * n + j] - self.dist[j * n + i]).abs() > 1e-9 {
                    return Err(EncoderError::BadStructure("distance matrix not symmetric".into()));
                }
                if (self.dist[i * n + j] - fresh[i * n + j]).abs() > 1e-9 {
                    return Err(EncoderError::BadStructure(
                        "distances inconsistent with coordinates".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn distances_from_coords(coords: &[[f64; 3]]) -> Vec<f64> {
    let n = coords.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let dz = coords[i][2] - coords[j][2];
            let d = (dx * dx + dy * dy + dz * dz).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

pub struct AttentionLayerParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
}

impl AttentionLayerParams {
    fn new(store: &mut ParamStore, dims: &ModelDims, rng: &mut SeedStream, prefix: &str) -> Self {
        let d = dims.dim;
        let f = 2 * d;
        AttentionLayerParams {
            wq: store.add_xavier(&format!("{prefix}.wq"), d, d, rng),
            bq: store.add_zeros(&format!("{prefix}.bq"), 1, d),
            wk: store.add_xavier(&format!("{prefix}.wk"), d, d, rng),
            bk: store.add_zeros(&format!("{prefix}.bk"), 1, d),
            wv: store.add_xavier(&format!("{prefix}.wv"), d, d, rng),
            bv: store.add_zeros(&format!("{prefix}.bv"), 1, d),
            wo: store.add_xavier(&format!("{prefix}.wo"), d, d, rng),
            bo: store.add_zeros(&format!("{prefix}.bo"), 1, d),
            ffn_w1: store.add_xavier(&format!("{prefix}.ffn_w1"), d, f, rng),
            ffn_b1: store.add_zeros(&format!("{prefix}.ffn_b1"), 1, f),
            ffn_w2: store.add_xavier(&format!("{prefix}.ffn_w2"), f, d, rng),
            ffn_b2: store.add_zeros(&format!("{prefix}.ffn_b2"), 1, d),
        }
    }

    fn ids(&self) -> Vec<ParamId> {
        vec![
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo, self.ffn_w1,
            self.ffn_b1, self.ffn_w2, self.ffn_b2,
        ]
    }
}

/// One attention layer: multi-head attention with additive per-head pair
/// bias, residual, then a feed-forward sublayer with residual.
pub fn biased_attention_layer(
    graph: &mut Graph,
    store: &ParamStore,
    layer: &AttentionLayerParams,
    h: Var,
    pair_bias: &[Var],
    heads: usize,
) -> Var {
    let d = graph.value(h).cols();
    assert!(d.is_multiple_of(heads), "head count must divide the feature dim");
    assert_eq!(pair_bias.len(), heads, "one bias matrix per head");
    let hd = d / heads;

    let wq = graph.param(store, layer.wq);
    let bq = graph.param(store, layer.bq);
    let wk = graph.param(store, layer.wk);
    let bk = graph.param(store, layer.bk);
    let wv = graph.param(store, layer.wv);
    let bv = graph.param(store, layer.bv);
    let q = graph.linear(h, wq, bq);
    let k = graph.linear(h, wk, bk);
    let v = graph.linear(h, wv, bv);

    let mut head_outputs = Vec::with_capacity(heads);
    for head in 0..heads {
        let qi = graph.slice_cols(q, head * hd, hd);
        let ki = graph.slice_cols(k, head * hd, hd);
        let vi = graph.slice_cols(v, head * hd, hd);
        let kt = graph.transpose(ki);
        let logits = graph.matmul(qi, kt);
        let logits = graph.scale(logits, 1.0 / (hd as f64).sqrt());
        let logits = graph.add(logits, pair_bias[head]);
        let attn = graph.softmax_rows(logits);
        head_outputs.push(graph.matmul(attn, vi));
    }
    let mut ctx = head_outputs[0];
    for &part in &head_outputs[1..] {
        ctx = graph.concat_cols(ctx, part);
    }
    let wo = graph.param(store, layer.wo);
    let bo = graph.param(store, layer.bo);
    let attn_out = graph.linear(ctx, wo, bo);
    let h = graph.add(h, attn_out);

    let w1 = graph.param(store, layer.ffn_w1);
    let b1 = graph.param(store, layer.ffn_b1);
    let w2 = graph.param(store, layer.ffn_w2);
    let b2 = graph.param(store, layer.ffn_b2);
    let f = graph.linear(h, w1, b1);
    let f = graph.silu(f);
    let f = graph.linear(f, w2, b2);
    graph.add(h, f)
}

pub struct Encoder3d {
    pub dims: ModelDims,
    pub embed: ParamId,
    pub rbf_centers: ParamId,
    pub rbf_proj: ParamId,
    pub bond_embed: ParamId,
    pub layers: Vec<AttentionLayerParams>,
}

impl Encoder3d {
    pub fn new(
        store: &mut ParamStore,
        dims: &ModelDims,
        rng: &mut SeedStream,
        prefix: &str,
    ) -> Self {
        let d = dims.dim;
        let k = dims.rbf_count;
        let centers: Vec<f64> = (0..k)
            .map(|i| RBF_MAX_DISTANCE * i as f64 / (k - 1).max(1) as f64)
            .collect();
        let embed = store.add(
            &format!("{prefix}.embed"),
            Tensor::zeros(vec![ATOM_TYPE_COUNT, d]).fill_with(|| rng.normal() * 0.02),
        );
        let rbf_centers = store.add(&format!("{prefix}.rbf_centers"), Tensor::row(centers));
        let rbf_proj = store.add_xavier(&format!("{prefix}.rbf_proj"), k, dims.heads, rng);
        let bond_embed = store.add(
            &format!("{prefix}.bond_embed"),
            Tensor::zeros(vec![BOND_CODE_COUNT, dims.heads]).fill_with(|| rng.normal() * 0.02),
        );
        let layers = (0..dims.layers_3d)
            .map(|l| AttentionLayerParams::new(store, dims, rng, &format!("{prefix}.layer{l}")))
            .collect();
        Encoder3d {
            dims: dims.clone(),
            embed,
            rbf_centers,
            rbf_proj,
            bond_embed,
            layers,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embed, self.rbf_centers, self.rbf_proj, self.bond_embed];
        for l in &self.layers {
            ids.extend(l.ids());
        }
        ids
    }

    /// Per-head additive bias [n, n] from distances and bond types.
    pub fn pair_bias(
        &self,
        graph: &mut Graph,
        store: &ParamStore,
        input: &Structure3dInput,
    ) -> Vec<Var> {
        let n = input.atom_count();
        let centers = graph.param(store, self.rbf_centers);
        let rbf = graph.gaussian_basis(&input.dist, centers, RBF_SIGMA);
        let proj = graph.param(store, self.rbf_proj);
        let dist_part = graph.matmul(rbf, proj);
        let bond_table = graph.param(store, self.bond_embed);
        let bond_ids: Vec<usize> = input.bond_types.iter().map(|&b| b as usize).collect();
        let bond_part = graph.gather_rows(bond_table, &bond_ids);
        let bias = graph.add(dist_part, bond_part);
        (0..self.dims.heads)
            .map(|head| {
                let col = graph.slice_cols(bias, head, 1);
                graph.reshape(col, vec![n, n])
            })
            .collect()
    }

    /// Stack of biased attention layers; outputs [n, dim].
    pub fn encode(&self, graph: &mut Graph, store: &ParamStore, input: &Structure3dInput) -> Var {
        let embed = graph.param(store, self.embed);
        let mut h = graph.gather_rows(embed, &input.atom_types);
        let bias = self.pair_bias(graph, store, input);
        for layer in &self.layers {
            h = biased_attention_layer(graph, store, layer, h, &bias, self.dims.heads);
        }
        h
    }
}

pub struct PretrainHeads {
    pub type_w: ParamId,
    pub type_b: ParamId,
    pub coord_w: ParamId,
    pub coord_b: ParamId,
    pub pair_w: ParamId,
    pub pair_b: ParamId,
}

impl PretrainHeads {
    pub fn new(
        store: &mut ParamStore,
        dims: &ModelDims,
        rng: &mut SeedStream,
        prefix: &str,
    ) -> Self {
        let d = dims.dim;
        let pair_dim = (d / 8).max(4);
        PretrainHeads {
            type_w: store.add_xavier(&format!("{prefix}.type_w"), d, ATOM_TYPE_COUNT, rng),
            type_b: store.add_zeros(&format!("{prefix}.type_b"), 1, ATOM_TYPE_COUNT),
            coord_w: store.add_xavier(&format!("{prefix}.coord_w"), d, 3, rng),
            coord_b: store.add_zeros(&format!("{prefix}.coord_b"), 1, 3),
            pair_w: store.add_xavier(&format!("{prefix}.pair_w"), d, pair_dim, rng),
            pair_b: store.add_zeros(&format!("{prefix}.pair_b"), 1, pair_dim),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.type_w,
            self.type_b,
            self.coord_w,
            self.coord_b,
            self.pair_w,
            self.pair_b,
        ]
    }
}

/// Which atoms are masked and the coordinate noise applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub masked: Vec<usize>,
    pub noise: Vec<[f64; 3]>,
}

/// Choose round(mask_rate * n) atoms (at least one) without replacement and
/// draw per-component uniform noise in [-1, 1] for each.
pub fn make_mask_plan(n: usize, mask_rate: f64, rng: &mut SeedStream) -> MaskPlan {
    assert!(n >= 1, "mask plan needs at least one atom");
    let count = ((mask_rate * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut masked: Vec<usize> = order.into_iter().take(count).collect();
    masked.sort_unstable();
    let noise = masked
        .iter()
        .map(|_| [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
        .collect();
    MaskPlan { masked, noise }
}

/// The three weighted pretraining losses for one molecule.
pub struct PretrainLoss {
    pub total: Var,
    pub type_loss: Var,
    pub coord_loss: Var,
    pub dist_loss: Var,
}

/// Denoising loss: mask atom types, perturb masked coordinates, and train
/// heads to recover types (cross entropy, masked atoms), coordinates
/// (smooth L1, masked atoms) and pairwise distances (smooth L1, pairs with a
/// masked endpoint). Total = 1*type + 5*coord + 10*dist.
pub fn pretrain_loss(
    encoder: &Encoder3d,
    heads: &PretrainHeads,
    graph: &mut Graph,
    store: &ParamStore,
    input: &Structure3dInput,
    plan: &MaskPlan,
) -> PretrainLoss {
    let n = input.atom_count();
    let masked = &plan.masked;
    assert!(!masked.is_empty(), "mask plan is empty");

    // corrupted input
    let mut corrupted_types = input.atom_types.clone();
    let mut corrupted_coords = input.coords.clone();
    for (pos, &atom) in masked.iter().enumerate() {
        corrupted_types[atom] = MASK_TYPE_ID;
        for c in 0..3 {
            corrupted_coords[atom][c] += plan.noise[pos][c];
        }
    }
    let corrupted = Structure3dInput {
        atom_types: corrupted_types,
        dist: distances_from_coords(&corrupted_coords),
        coords: corrupted_coords,
        bond_types: input.bond_types.clone(),
    };

    let h = encoder.encode(graph, store, &corrupted);
    let h_masked = graph.gather_rows(h, masked);

    // atom-type recovery
    let tw = graph.param(store, heads.type_w);
    let tb = graph.param(store, heads.type_b);
    let logits = graph.linear(h_masked, tw, tb);
    let true_types: Vec<usize> = masked.iter().map(|&i| input.atom_types[i]).collect();
    let type_loss = graph.cross_entropy_loss(logits, &true_types);

    // coordinate recovery
    let cw = graph.param(store, heads.coord_w);
    let cb = graph.param(store, heads.coord_b);
    let coord_pred = graph.linear(h_masked, cw, cb);
    let coord_target = Tensor::matrix(
        masked.len(),
        3,
        masked
            .iter()
            .flat_map(|&i| input.coords[i])
            .collect::<Vec<f64>>(),
    );
    let coord_loss = graph.smooth_l1_loss(coord_pred, &coord_target);

    // pairwise distance recovery on pairs with a masked endpoint
    let pw = graph.param(store, heads.pair_w);
    let pb = graph.param(store, heads.pair_b);
    let e = graph.linear(h, pw, pb);
    let et = graph.transpose(e);
    let dist_pred = graph.matmul(e, et);
    let dist_flat = graph.reshape(dist_pred, vec![n * n, 1]);
    let is_masked: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in masked {
            v[i] = true;
        }
        v
    };
    let mut pair_indices = Vec::new();
    let mut pair_targets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (is_masked[i] || is_masked[j]) {
                pair_indices.push(i * n + j);
                pair_targets.push(input.dist[i * n + j]);
            }
        }
    }
    let picked = graph.gather_rows(dist_flat, &pair_indices);
    let dist_target = Tensor::column(pair_targets);
    let dist_loss = graph.smooth_l1_loss(picked, &dist_target);

    let wt = graph.scale(type_loss, WEIGHT_TYPE);
    let wc = graph.scale(coord_loss, WEIGHT_COORD);
    let wd = graph.scale(dist_loss, WEIGHT_DIST);
    let partial = graph.add(wt, wc);
    let total = graph.add(partial, wd);
    PretrainLoss {
        total,
        type_loss,
        coord_loss,
        dist_loss,
    }
}

/// One denoising step over a batch: draw a mask plan per molecule from the
/// stream and average the per-molecule losses.
pub fn pretrain_step(
    encoder: &Encoder3d,
    heads: &PretrainHeads,
    graph: &mut Graph,
    store: &ParamStore,
    batch: &[&Structure3dInput],
    mask_rate: f64,
    rng: &mut crate::rng::SeedStream,
) -> Result<Var, EncoderError> {
    if batch.is_empty() {
        return Err(EncoderError::EmptyBatch);
    }
    let mut per_molecule = Vec::with_capacity(batch.len());
    for input in batch {
        let plan = make_mask_plan(input.atom_count(), mask_rate, rng);
        per_molecule.push(pretrain_loss(encoder, heads, graph, store, input, &plan).total);
    }
    let stacked = graph.stack_rows(&per_molecule);
    Ok(graph.mean_rows(stacked))
}
