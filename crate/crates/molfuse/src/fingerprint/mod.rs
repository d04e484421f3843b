//! Molecular fingerprints and scaffolds.
//!
//! Three representations feed the similarity measures: a Morgan-style
//! circular fingerprint, a 64-predicate structural-key fingerprint (see
//! `docs/structural_keys.md`), and Murcko scaffolds obtained by pruning
//! terminal atoms to a fixpoint.

mod keys;
mod rings;
mod scaffold;

pub use keys::{structural_keys, KEY_COUNT, KEY_DESCRIPTIONS};
pub use scaffold::{murcko_scaffold, murcko_scaffold_graph, Scaffold};

use crate::rng::{hash_bytes, hash_combine};
use crate::smiles::MolecularGraph;
use serde::Serialize;

pub const DEFAULT_CIRCULAR_WIDTH: usize = 2048;
pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FingerprintKind {
    Circular,
    StructuralKey,
}

/// Fixed-width bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFingerprint {
    pub kind: FingerprintKind,
    width: usize,
    blocks: Vec<u64>,
}

impl BitFingerprint {
    pub fn zeros(kind: FingerprintKind, width: usize) -> Self {
        BitFingerprint {
            kind,
            width,
            blocks: vec![0; width.div_ceil(64)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.width);
        self.blocks[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        assert!(bit < self.width);
        self.blocks[bit / 64] & (1 << (bit % 64)) != 0
    }

    pub fn popcount(&self) -> u32 {
        self.blocks.iter().map(|b| b.count_ones()).sum()
    }

    pub fn and_popcount(&self, other: &BitFingerprint) -> u32 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    /// Big-endian hex over the full width, stable across runs.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.width / 4);
        let nibbles = self.width.div_ceil(4);
        for i in (0..nibbles).rev() {
            let bit0 = i * 4;
            let mut nib = 0u8;
            for k in 0..4 {
                let bit = bit0 + k;
                if bit < self.width && self.get(bit) {
                    nib |= 1 << k;
                }
            }
            s.push(char::from_digit(nib as u32, 16).unwrap());
        }
        s
    }
}

/// Atom invariant for radius 0: element, charge, heavy degree, hydrogen
/// count, aromatic flag.
fn initial_invariant(g: &MolecularGraph, adj: &[Vec<(usize, u8)>], atom: usize) -> u64 {
    let a = &g.atoms[atom];
    let mut h = hash_bytes(a.element.as_bytes());
    h = hash_combine(h, a.formal_charge as u64);
    h = hash_combine(h, adj[atom].len() as u64);
    h = hash_combine(h, a.hydrogens as u64);
    h = hash_combine(h, a.aromatic as u64);
    h
}

fn adjacency(g: &MolecularGraph) -> Vec<Vec<(usize, u8)>> {
    let mut adj = vec![Vec::new(); g.atoms.len()];
    for b in &g.bonds {
        adj[b.a].push((b.b, b.order.code()));
        adj[b.b].push((b.a, b.order.code()));
    }
    adj
}

/// Morgan-style circular fingerprint.
///
/// Each atom environment at radii 0..=radius hashes to one bit
/// (`hash % width`). The per-round update hashes the previous invariant with
/// the sorted multiset of (bond order, neighbor invariant) pairs, so the
/// result is invariant under atom reordering of isomorphic graphs.
pub fn circular_fingerprint(g: &MolecularGraph, radius: usize, width: usize) -> BitFingerprint {
    assert!(width.is_power_of_two(), "fingerprint width must be a power of two");
    let adj = adjacency(g);
    let mut fp = BitFingerprint::zeros(FingerprintKind::Circular, width);
    let mut inv: Vec<u64> = (0..g.atoms.len())
        .map(|i| initial_invariant(g, &adj, i))
        .collect();
    for &v in &inv {
        fp.set((v % width as u64) as usize);
    }
    for _ in 0..radius {
        let mut next = vec![0u64; inv.len()];
        for i in 0..inv.len() {
            let mut env: Vec<(u8, u64)> = adj[i].iter().map(|&(j, code)| (code, inv[j])).collect();
            env.sort_unstable();
            let mut h = hash_combine(inv[i], 0x9d5c);
            for (code, nv) in env {
                h = hash_combine(h, code as u64);
                h = hash_combine(h, nv);
            }
            next[i] = h;
        }
        inv = next;
        for &v in &inv {
            fp.set((v % width as u64) as usize);
        }
    }
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    #[test]
    fn single_atom_radius_zero_sets_one_bit() {
        let g = parse("C").unwrap();
        let fp = circular_fingerprint(&g, 0, 2048);
        assert_eq!(fp.popcount(), 1);
    }

    #[test]
    fn reorder_invariance() {
        for (a, b) in [
            ("CCO", "OCC"),
            ("CC(=O)O", "OC(C)=O"),
            ("c1ccccc1CCN", "NCCc1ccccc1"),
            ("ClCCBr", "BrCCCl"),
        ] {
            for radius in 0..=3 {
                let fa = circular_fingerprint(&parse(a).unwrap(), radius, 2048);
                let fb = circular_fingerprint(&parse(b).unwrap(), radius, 2048);
                assert_eq!(fa, fb, "{a} vs {b} at radius {radius}");
            }
        }
    }

    #[test]
    fn environment_count_grows_with_molecule() {
        let big = circular_fingerprint(&parse("CCCCCC").unwrap(), 2, 2048);
        let small = circular_fingerprint(&parse("CC").unwrap(), 2, 2048);
        assert!(big.popcount() >= small.popcount());
    }

    #[test]
    fn determinism_across_calls() {
        let g = parse("CCN(CC)CCOC(=O)CCCCCCCC").unwrap();
        let a = circular_fingerprint(&g, 2, 2048);
        let b = circular_fingerprint(&g, 2, 2048);
        assert_eq!(a, b);
        assert_eq!(a.to_hex(), b.to_hex());
    }

    #[test]
    fn hex_roundtrips_popcount() {
        let g = parse("CCO").unwrap();
        let fp = circular_fingerprint(&g, 2, 256);
        let hex = fp.to_hex();
        assert_eq!(hex.len(), 64);
        let ones: u32 = hex
            .chars()
            .map(|c| c.to_digit(16).unwrap().count_ones())
            .sum();
        assert_eq!(ones, fp.popcount());
    }
}
