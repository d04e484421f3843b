//! Ring perception helpers shared by the structural keys.

use crate::smiles::MolecularGraph;
use std::collections::{BTreeSet, VecDeque};

/// Per-bond flag: true when the bond lies on some cycle (removing it keeps
/// its endpoints connected).
pub fn ring_bond_flags(g: &MolecularGraph) -> Vec<bool> {
    g.bonds
        .iter()
        .enumerate()
        .map(|(skip, bond)| connected_without(g, bond.a, bond.b, skip))
        .collect()
}

/// Per-atom flag: true when the atom has at least one ring bond.
pub fn atom_in_ring_flags(g: &MolecularGraph) -> Vec<bool> {
    let ring_bonds = ring_bond_flags(g);
    let mut flags = vec![false; g.atoms.len()];
    for (i, bond) in g.bonds.iter().enumerate() {
        if ring_bonds[i] {
            flags[bond.a] = true;
            flags[bond.b] = true;
        }
    }
    flags
}

/// Sizes of the smallest cycle through each ring bond.
pub fn smallest_ring_sizes(g: &MolecularGraph) -> BTreeSet<usize> {
    let mut sizes = BTreeSet::new();
    for (skip, bond) in g.bonds.iter().enumerate() {
        if let Some(d) = shortest_path_without(g, bond.a, bond.b, skip) {
            sizes.insert(d + 1);
        }
    }
    sizes
}

/// Cyclomatic number: bonds - atoms + connected components.
pub fn ring_count(g: &MolecularGraph) -> usize {
    let n = g.atoms.len();
    if n == 0 {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for (w, _) in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    (g.bonds.len() + components).saturating_sub(n)
}

fn connected_without(g: &MolecularGraph, from: usize, to: usize, skip_bond: usize) -> bool {
    shortest_path_without(g, from, to, skip_bond).is_some()
}

fn shortest_path_without(
    g: &MolecularGraph,
    from: usize,
    to: usize,
    skip_bond: usize,
) -> Option<usize> {
    let mut dist = vec![usize::MAX; g.atoms.len()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            return Some(dist[v]);
        }
        for (i, bond) in g.bonds.iter().enumerate() {
            if i == skip_bond {
                continue;
            }
            let w = if bond.a == v {
                bond.b
            } else if bond.b == v {
                bond.a
            } else {
                continue;
            };
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    None
}
