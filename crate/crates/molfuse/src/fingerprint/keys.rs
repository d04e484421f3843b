//! 64-predicate structural-key fingerprint.
//!
//! Each bit answers one boolean question about the molecular graph. The
//! ordered list of predicates is documented in `docs/structural_keys.md`;
//! `KEY_DESCRIPTIONS` below is the same list and a test keeps the two in
//! sync. Bit i is set iff predicate i holds.

use super::rings::{atom_in_ring_flags, ring_count, smallest_ring_sizes};
use super::{BitFingerprint, FingerprintKind};
use crate::smiles::{BondOrder, MolecularGraph};

pub const KEY_COUNT: usize = 64;

pub const KEY_DESCRIPTIONS: [&str; KEY_COUNT] = [
    "contains carbon",
    "contains nitrogen",
    "contains oxygen",
    "contains sulfur",
    "contains phosphorus",
    "contains fluorine",
    "contains chlorine",
    "contains bromine",
    "contains iodine",
    "contains boron",
    "contains any halogen (F, Cl, Br, I)",
    "contains an element outside the organic subset",
    "at least 2 nitrogen atoms",
    "at least 3 nitrogen atoms",
    "at least 2 oxygen atoms",
    "at least 4 oxygen atoms",
    "at least 6 oxygen atoms",
    "at least 8 carbon atoms",
    "at least 16 carbon atoms",
    "at least 24 carbon atoms",
    "at least 32 carbon atoms",
    "at least 40 heavy atoms",
    "contains a ring",
    "contains a 3-membered ring",
    "contains a 4-membered ring",
    "contains a 5-membered ring",
    "contains a 6-membered ring",
    "contains a 7-membered ring",
    "contains an 8-membered ring",
    "at least 2 rings",
    "contains an aromatic atom",
    "heteroatom in a ring",
    "nitrogen in a ring",
    "oxygen in a ring",
    "contains a double bond",
    "contains a triple bond",
    "contains an aromatic bond",
    "carbonyl group (C=O)",
    "non-aromatic C=C",
    "nitrile group (C#N)",
    "N-N bond",
    "N-O bond",
    "ester motif (O=C-O)",
    "amide motif (O=C-N)",
    "branch point (degree >= 3)",
    "atom of degree 4",
    "at least 2 branch points",
    "at least 4 branch points",
    "tertiary nitrogen (N with 3 heavy neighbors)",
    "quaternary or positively charged nitrogen",
    "ether-like oxygen (O with 2 heavy neighbors)",
    "hydroxyl oxygen (terminal O with hydrogen)",
    "sulfur with 3+ heavy neighbors",
    "terminal methyl group",
    "positive formal charge present",
    "negative formal charge present",
    "nonzero net formal charge",
    "longest carbon chain >= 4",
    "longest carbon chain >= 6",
    "longest carbon chain >= 8",
    "longest carbon chain >= 10",
    "longest carbon chain >= 12",
    "longest carbon chain >= 16",
    "at least 2 ester motifs",
];

const ORGANIC_SUBSET: &[&str] = &["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "H"];

/// Evaluate all 64 predicates on a graph.
pub fn structural_keys(g: &MolecularGraph) -> BitFingerprint {
    let mut fp = BitFingerprint::zeros(FingerprintKind::StructuralKey, KEY_COUNT);

    let count_of = |el: &str| g.atoms.iter().filter(|a| a.element == el).count();
    let c = count_of("C");
    let n = count_of("N");
    let o = count_of("O");
    let heavy = g.atoms.iter().filter(|a| a.element != "H").count();

    let degree: Vec<usize> = (0..g.atoms.len()).map(|i| g.degree(i)).collect();
    let in_ring = atom_in_ring_flags(g);
    let ring_sizes = smallest_ring_sizes(g);
    let rings = ring_count(g);

    let has_bond = |order: BondOrder| g.bonds.iter().any(|b| b.order == order);
    let pair_bond = |e1: &str, e2: &str, order: BondOrder| {
        g.bonds.iter().any(|b| {
            b.order == order
                && ((g.atoms[b.a].element == e1 && g.atoms[b.b].element == e2)
                    || (g.atoms[b.a].element == e2 && g.atoms[b.b].element == e1))
        })
    };
    let any_nn_bond = || {
        g.bonds
            .iter()
            .any(|b| g.atoms[b.a].element == "N" && g.atoms[b.b].element == "N")
    };

    // Carbonyl carbons with a single-bonded neighbor of the given element.
    let acyl_count = |el: &str| {
        (0..g.atoms.len())
            .filter(|&i| {
                g.atoms[i].element == "C"
                    && g.neighbors(i)
                        .iter()
                        .any(|&(j, ord)| ord == BondOrder::Double && g.atoms[j].element == "O")
                    && g.neighbors(i)
                        .iter()
                        .any(|&(j, ord)| ord == BondOrder::Single && g.atoms[j].element == el)
            })
            .count()
    };

    let branch_points = degree.iter().filter(|&&d| d >= 3).count();
    let chain = longest_carbon_chain(g);

    let preds: [bool; KEY_COUNT] = [
        c > 0,
        n > 0,
        o > 0,
        count_of("S") > 0,
        count_of("P") > 0,
        count_of("F") > 0,
        count_of("Cl") > 0,
        count_of("Br") > 0,
        count_of("I") > 0,
        count_of("B") > 0,
        ["F", "Cl", "Br", "I"].iter().any(|h| count_of(h) > 0),
        g.atoms
            .iter()
            .any(|a| !ORGANIC_SUBSET.contains(&a.element.as_str())),
        n >= 2,
        n >= 3,
        o >= 2,
        o >= 4,
        o >= 6,
        c >= 8,
        c >= 16,
        c >= 24,
        c >= 32,
        heavy >= 40,
        rings >= 1,
        ring_sizes.contains(&3),
        ring_sizes.contains(&4),
        ring_sizes.contains(&5),
        ring_sizes.contains(&6),
        ring_sizes.contains(&7),
        ring_sizes.contains(&8),
        rings >= 2,
        g.atoms.iter().any(|a| a.aromatic),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| in_ring[i] && a.element != "C"),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| in_ring[i] && a.element == "N"),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| in_ring[i] && a.element == "O"),
        has_bond(BondOrder::Double),
        has_bond(BondOrder::Triple),
        has_bond(BondOrder::Aromatic),
        pair_bond("C", "O", BondOrder::Double),
        pair_bond("C", "C", BondOrder::Double),
        pair_bond("C", "N", BondOrder::Triple),
        any_nn_bond(),
        pair_bond("N", "O", BondOrder::Single) || pair_bond("N", "O", BondOrder::Double),
        acyl_count("O") >= 1,
        acyl_count("N") >= 1,
        branch_points >= 1,
        degree.contains(&4),
        branch_points >= 2,
        branch_points >= 4,
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "N" && degree[i] == 3),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "N" && (degree[i] >= 4 || a.formal_charge > 0)),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "O" && degree[i] == 2),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "O" && degree[i] <= 1 && a.hydrogens >= 1),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "S" && degree[i] >= 3),
        g.atoms
            .iter()
            .enumerate()
            .any(|(i, a)| a.element == "C" && degree[i] == 1 && a.hydrogens == 3),
        g.atoms.iter().any(|a| a.formal_charge > 0),
        g.atoms.iter().any(|a| a.formal_charge < 0),
        g.atoms.iter().map(|a| a.formal_charge).sum::<i32>() != 0,
        chain >= 4,
        chain >= 6,
        chain >= 8,
        chain >= 10,
        chain >= 12,
        chain >= 16,
        acyl_count("O") >= 2,
    ];

    for (i, &p) in preds.iter().enumerate() {
        if p {
            fp.set(i);
        }
    }
    fp
}

/// Longest simple path over carbon-carbon bonds, in atoms.
///
/// Exhaustive DFS with a global step budget; realistic molecules stay far
/// under it, and on exhaustion the best path found so far is returned.
fn longest_carbon_chain(g: &MolecularGraph) -> usize {
    let carbons: Vec<usize> = (0..g.atoms.len())
        .filter(|&i| g.atoms[i].element == "C")
        .collect();
    if carbons.is_empty() {
        return 0;
    }
    let mut adj = vec![Vec::new(); g.atoms.len()];
    for b in &g.bonds {
        if g.atoms[b.a].element == "C" && g.atoms[b.b].element == "C" {
            adj[b.a].push(b.b);
            adj[b.b].push(b.a);
        }
    }
    let mut best = 1usize;
    let mut budget = 200_000usize;
    let mut visited = vec![false; g.atoms.len()];
    for &start in &carbons {
        dfs(start, 1, &adj, &mut visited, &mut best, &mut budget);
        if budget == 0 {
            break;
        }
    }
    best
}

fn dfs(
    v: usize,
    depth: usize,
    adj: &[Vec<usize>],
    visited: &mut [bool],
    best: &mut usize,
    budget: &mut usize,
) {
    if *budget == 0 {
        return;
    }
    *budget -= 1;
    visited[v] = true;
    *best = (*best).max(depth);
    for &w in &adj[v] {
        if !visited[w] {
            dfs(w, depth + 1, adj, visited, best, budget);
        }
    }
    visited[v] = false;
}
