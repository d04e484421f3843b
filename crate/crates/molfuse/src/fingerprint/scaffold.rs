//! Murcko scaffolds: ring systems plus linker paths.
//!
//! Terminal atoms (degree <= 1) are removed iteratively until a fixpoint;
//! what survives is exactly the rings and the paths connecting them. The
//! scaffold key is a permutation-invariant serialization built from
//! Weisfeiler-Lehman atom refinement, so isomorphic scaffolds always get the
//! same key regardless of SMILES atom order.

use crate::rng::{hash_bytes, hash_combine, mix64};
use crate::smiles::{AtomNode, BondEdge, MolecularGraph};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Scaffold {
    /// Empty string for acyclic molecules.
    pub smiles_like_key: String,
}

impl Scaffold {
    pub fn is_empty(&self) -> bool {
        self.smiles_like_key.is_empty()
    }
}

/// The ring-and-linker subgraph left after pruning terminal atoms.
///
/// Acyclic molecules prune away completely and yield an empty graph.
pub fn murcko_scaffold_graph(g: &MolecularGraph) -> MolecularGraph {
    let mut alive = vec![true; g.atoms.len()];
    loop {
        let mut degree = vec![0usize; g.atoms.len()];
        for b in &g.bonds {
            if alive[b.a] && alive[b.b] {
                degree[b.a] += 1;
                degree[b.b] += 1;
            }
        }
        let mut changed = false;
        for i in 0..g.atoms.len() {
            if alive[i] && degree[i] <= 1 {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut remap = vec![usize::MAX; g.atoms.len()];
    let mut atoms: Vec<AtomNode> = Vec::new();
    for (i, atom) in g.atoms.iter().enumerate() {
        if alive[i] {
            remap[i] = atoms.len();
            atoms.push(atom.clone());
        }
    }
    let bonds: Vec<BondEdge> = g
        .bonds
        .iter()
        .filter(|b| alive[b.a] && alive[b.b])
        .map(|b| BondEdge {
            a: remap[b.a],
            b: remap[b.b],
            order: b.order,
        })
        .collect();
    MolecularGraph {
        atoms,
        bonds,
        source: String::new(),
    }
}

pub fn murcko_scaffold(g: &MolecularGraph) -> Scaffold {
    let sub = murcko_scaffold_graph(g);
    Scaffold {
        smiles_like_key: graph_key(&sub),
    }
}

/// Canonical-within-this-tool key: element formula plus a hash over the
/// WL-refined atom and edge multisets.
fn graph_key(g: &MolecularGraph) -> String {
    if g.atoms.is_empty() {
        return String::new();
    }

    let mut labels: Vec<u64> = g
        .atoms
        .iter()
        .map(|a| {
            let mut h = hash_bytes(a.element.as_bytes());
            h = hash_combine(h, a.aromatic as u64);
            hash_combine(h, a.formal_charge as u64)
        })
        .collect();

    let rounds = g.atoms.len().min(32);
    for _ in 0..rounds {
        let mut next = vec![0u64; labels.len()];
        for i in 0..labels.len() {
            let mut env: Vec<(u8, u64)> = g
                .neighbors(i)
                .into_iter()
                .map(|(j, order)| (order.code(), labels[j]))
                .collect();
            env.sort_unstable();
            let mut h = hash_combine(labels[i], 0x5ca1);
            for (code, l) in env {
                h = hash_combine(h, code as u64);
                h = hash_combine(h, l);
            }
            next[i] = h;
        }
        labels = next;
    }

    let mut sorted_labels = labels.clone();
    sorted_labels.sort_unstable();
    let mut key_hash = mix64(g.atoms.len() as u64);
    for l in &sorted_labels {
        key_hash = hash_combine(key_hash, *l);
    }
    let mut edge_invs: Vec<u64> = g
        .bonds
        .iter()
        .map(|b| {
            let (lo, hi) = if labels[b.a] <= labels[b.b] {
                (labels[b.a], labels[b.b])
            } else {
                (labels[b.b], labels[b.a])
            };
            hash_combine(hash_combine(lo, hi), b.order.code() as u64)
        })
        .collect();
    edge_invs.sort_unstable();
    for e in &edge_invs {
        key_hash = hash_combine(key_hash, *e);
    }

    let mut formula: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &g.atoms {
        *formula.entry(a.element.as_str()).or_default() += 1;
    }
    let formula: String = formula
        .into_iter()
        .map(|(el, n)| format!("{el}{n}"))
        .collect();
    format!("{formula}|{key_hash:016x}")
}
