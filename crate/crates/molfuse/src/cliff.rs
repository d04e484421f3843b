//! Transfection-cliff mining: similarity measures and the cliff gate.
//!
//! A cliff pair is two molecules with structure similarity above 0.9 whose
//! transfection efficiencies differ by more than one power of ten. Structure
//! similarity averages three measures: Tanimoto over circular fingerprints
//! (substructure), Tanimoto over structural keys of the Murcko scaffolds
//! (scaffold), and normalized Levenshtein over the SMILES strings.

use crate::fingerprint::{
    circular_fingerprint, murcko_scaffold_graph, structural_keys, BitFingerprint,
    DEFAULT_CIRCULAR_WIDTH, DEFAULT_RADIUS,
};
use crate::smiles::{parse, SmilesError};
use serde::Serialize;
use thiserror::Error;

pub const SIMILARITY_THRESHOLD: f64 = 0.9;
pub const DIFFERENCE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum CliffError {
    #[error("fingerprint width/kind mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("molecule {id}: {source}")]
    UnparseableSmiles { id: String, source: SmilesError },
    #[error("need at least 2 molecules, got {0}")]
    TooFewMolecules(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityTriple {
    /// Tanimoto over circular fingerprints.
    pub subs: f64,
    /// Tanimoto over scaffold structural keys.
    pub scas: f64,
    /// Normalized Levenshtein over SMILES strings.
    pub smis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliffPair {
    pub id_a: String,
    pub id_b: String,
    pub similarity: SimilarityTriple,
    pub structure_similarity: f64,
    /// In powers of ten.
    pub transfection_difference: f64,
    /// log2 transfection efficiencies of the two molecules.
    pub m_a: f64,
    pub m_b: f64,
}

/// Tanimoto coefficient c / (a + b - c) over set bits.
///
/// Two all-zero fingerprints compare as 1.0: for scaffold keys that means
/// two acyclic frameworks are treated as identical rather than dissimilar.
pub fn tanimoto(fa: &BitFingerprint, fb: &BitFingerprint) -> Result<f64, CliffError> {
    if fa.width() != fb.width() || fa.kind != fb.kind {
        return Err(CliffError::WidthMismatch(fa.width(), fb.width()));
    }
    let a = fa.popcount() as f64;
    let b = fb.popcount() as f64;
    let c = fa.and_popcount(fb) as f64;
    if a + b - c == 0.0 {
        return Ok(1.0);
    }
    Ok(c / (a + b - c))
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// 1 - d(s1, s2) / max(|s1|, |s2|).
pub fn smiles_similarity(s1: &str, s2: &str) -> f64 {
    let max_len = s1.chars().count().max(s2.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(s1, s2) as f64 / max_len as f64
}

/// Arithmetic mean of the three similarity components.
pub fn structure_similarity(t: &SimilarityTriple) -> f64 {
    (t.subs + t.scas + t.smis) / 3.0
}

/// |m2 - m1| in powers of ten, for log2-unit inputs.
pub fn transfection_difference(m1: f64, m2: f64) -> f64 {
    (m2 - m1).abs() * std::f64::consts::LOG10_2
}

/// The cliff gate: both strict inequalities.
pub fn is_cliff(structure_similarity: f64, transfection_difference: f64) -> bool {
    structure_similarity > SIMILARITY_THRESHOLD && transfection_difference > DIFFERENCE_THRESHOLD
}

#[derive(Debug, Clone)]
pub struct CliffInput {
    pub id: String,
    pub smiles: String,
    /// log2 transfection efficiency.
    pub m: f64,
}

/// Precomputed per-molecule representations for pair scanning.
struct Prepared {
    circular: BitFingerprint,
    scaffold_keys: BitFingerprint,
}

fn prepare(input: &CliffInput, radius: usize, width: usize) -> Result<Prepared, CliffError> {
    let graph = parse(&input.smiles).map_err(|source| CliffError::UnparseableSmiles {
        id: input.id.clone(),
        source,
    })?;
    Ok(Prepared {
        circular: circular_fingerprint(&graph, radius, width),
        scaffold_keys: structural_keys(&murcko_scaffold_graph(&graph)),
    })
}

/// Similarity triple for one prepared pair.
fn triple(a: &CliffInput, pa: &Prepared, b: &CliffInput, pb: &Prepared) -> SimilarityTriple {
    SimilarityTriple {
        subs: tanimoto(&pa.circular, &pb.circular).expect("same kind and width"),
        scas: tanimoto(&pa.scaffold_keys, &pb.scaffold_keys).expect("same kind and width"),
        smis: smiles_similarity(&a.smiles, &b.smiles),
    }
}

/// Exact O(n^2) scan over all unordered pairs; emits every pair passing the
/// cliff gate, sorted by transfection difference descending.
pub fn mine_cliffs(dataset: &[CliffInput]) -> Result<Vec<CliffPair>, CliffError> {
    mine_cliffs_with(dataset, DEFAULT_RADIUS, DEFAULT_CIRCULAR_WIDTH)
}

/// `mine_cliffs` with an explicit circular-fingerprint radius and width.
pub fn mine_cliffs_with(
    dataset: &[CliffInput],
    radius: usize,
    width: usize,
) -> Result<Vec<CliffPair>, CliffError> {
    if dataset.len() < 2 {
        return Err(CliffError::TooFewMolecules(dataset.len()));
    }
    let prepared: Vec<Prepared> = dataset
        .iter()
        .map(|i| prepare(i, radius, width))
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    for i in 0..dataset.len() {
        for j in (i + 1)..dataset.len() {
            let t = triple(&dataset[i], &prepared[i], &dataset[j], &prepared[j]);
            let sim = structure_similarity(&t);
            let diff = transfection_difference(dataset[i].m, dataset[j].m);
            if is_cliff(sim, diff) {
                let (a, b) = if dataset[i].id <= dataset[j].id {
                    (i, j)
                } else {
                    (j, i)
                };
                pairs.push(CliffPair {
                    id_a: dataset[a].id.clone(),
                    id_b: dataset[b].id.clone(),
                    similarity: t,
                    structure_similarity: sim,
                    transfection_difference: diff,
                    m_a: dataset[a].m,
                    m_b: dataset[b].m,
                });
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.transfection_difference
            .partial_cmp(&x.transfection_difference)
            .unwrap()
            .then_with(|| (x.id_a.as_str(), x.id_b.as_str()).cmp(&(y.id_a.as_str(), y.id_b.as_str())))
    });
    Ok(pairs)
}
