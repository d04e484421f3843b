//! Conformer coordinates: a deterministic pseudo-conformer generator plus
//! an optional XYZ-block file for user-supplied geometries.
//!
//! XYZ block format, one block per molecule:
//!
//! ```text
//! #id mol-001
//! C 0.000 0.000 0.000
//! N 1.500 0.000 0.000
//! ```
//!
//! Blocks are separated by the next `#id` line; blank lines are ignored.

use crate::rng::SeedStream;
use crate::smiles::MolecularGraph;
use std::collections::HashMap;
use thiserror::Error;

const BOND_TARGET: f64 = 1.5;
const REPULSION_CUTOFF: f64 = 1.0;
const ITERATIONS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ConformerError {
    #[error("line {line}: {message}")]
    BadFormat { line: usize, message: String },
    #[error("conformer for {id} has {got} atoms, molecule has {expected}")]
    AtomCountMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("conformer for {id}: atom {index} is {got}, molecule has {expected}")]
    ElementMismatch {
        id: String,
        index: usize,
        got: String,
        expected: String,
    },
}

/// Deterministic 3-D spring layout: bonded pairs relax toward 1.5 A and
/// non-bonded pairs closer than 1 A push apart, from a seeded random start.
pub fn pseudo_conformer(g: &MolecularGraph, seed: u64) -> Vec<[f64; 3]> {
    let n = g.atoms.len();
    if n == 1 {
        return vec![[0.0, 0.0, 0.0]];
    }
    let mut rng = SeedStream::new(seed, &format!("conformer:{}", g.source));
    let radius = 1.5 * (n as f64).cbrt();
    let mut coords: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.uniform(-radius, radius),
                rng.uniform(-radius, radius),
                rng.uniform(-radius, radius),
            ]
        })
        .collect();

    let bonded: Vec<(usize, usize)> = g.bonds.iter().map(|b| (b.a, b.b)).collect();
    let is_bonded: std::collections::HashSet<(usize, usize)> = bonded
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect();

    for iter in 0..ITERATIONS {
        let step = 0.3 * (1.0 - iter as f64 / ITERATIONS as f64).max(0.1);
        for &(a, b) in &bonded {
            displace_pair(&mut coords, a, b, BOND_TARGET, step);
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if is_bonded.contains(&(a, b)) {
                    continue;
                }
                let d = distance(&coords[a], &coords[b]);
                if d < REPULSION_CUTOFF {
                    displace_pair(&mut coords, a, b, REPULSION_CUTOFF, step);
                }
            }
        }
    }

    // center on the centroid
    let mut centroid = [0.0; 3];
    for c in &coords {
        for k in 0..3 {
            centroid[k] += c[k] / n as f64;
        }
    }
    for c in coords.iter_mut() {
        for k in 0..3 {
            c[k] -= centroid[k];
        }
    }
    coords
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut acc = 0.0;
    for k in 0..3 {
        acc += (a[k] - b[k]) * (a[k] - b[k]);
    }
    acc.sqrt()
}

fn displace_pair(coords: &mut [[f64; 3]], a: usize, b: usize, target: f64, step: f64) {
    let d = distance(&coords[a], &coords[b]);
    let dir = if d > 1e-9 {
        let mut v = [0.0; 3];
        for k in 0..3 {
            v[k] = (coords[b][k] - coords[a][k]) / d;
        }
        v
    } else {
        [1.0, 0.0, 0.0]
    };
    let correction = step * (d - target) / 2.0;
    for k in 0..3 {
        coords[a][k] += correction * dir[k];
        coords[b][k] -= correction * dir[k];
    }
}

/// Per-atom (element, coordinates) list for one molecule.
pub type XyzAtoms = Vec<(String, [f64; 3])>;
pub type ConformerTable = HashMap<String, XyzAtoms>;

/// Parse an XYZ block file into per-id atom lists.
pub fn parse_xyz_blocks(content: &str) -> Result<ConformerTable, ConformerError> {
    let mut table = ConformerTable::new();
    let mut current: Option<(String, XyzAtoms)> = None;
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(id) = trimmed.strip_prefix("#id") {
            if let Some((done_id, atoms)) = current.take() {
                table.insert(done_id, atoms);
            }
            let id = id.trim();
            if id.is_empty() {
                return Err(ConformerError::BadFormat {
                    line,
                    message: "#id line without an id".into(),
                });
            }
            current = Some((id.to_string(), Vec::new()));
            continue;
        }
        let Some((_, atoms)) = current.as_mut() else {
            return Err(ConformerError::BadFormat {
                line,
                message: "atom line before any #id header".into(),
            });
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ConformerError::BadFormat {
                line,
                message: format!("expected `element x y z`, got {} fields", fields.len()),
            });
        }
        let mut xyz = [0.0f64; 3];
        for (k, f) in fields[1..].iter().enumerate() {
            xyz[k] = f.parse().map_err(|_| ConformerError::BadFormat {
                line,
                message: format!("bad coordinate {f:?}"),
            })?;
            if !xyz[k].is_finite() {
                return Err(ConformerError::BadFormat {
                    line,
                    message: format!("non-finite coordinate {f:?}"),
                });
            }
        }
        atoms.push((fields[0].to_string(), xyz));
    }
    if let Some((id, atoms)) = current.take() {
        table.insert(id, atoms);
    }
    Ok(table)
}

/// Coordinates for one molecule: the table entry when present (validated
/// against the graph), otherwise the pseudo-conformer.
pub fn coords_for(
    id: &str,
    graph: &MolecularGraph,
    table: Option<&ConformerTable>,
    seed: u64,
) -> Result<Vec<[f64; 3]>, ConformerError> {
    if let Some(atoms) = table.and_then(|t| t.get(id)) {
        if atoms.len() != graph.atoms.len() {
            return Err(ConformerError::AtomCountMismatch {
                id: id.to_string(),
                got: atoms.len(),
                expected: graph.atoms.len(),
            });
        }
        for (i, ((el, _), atom)) in atoms.iter().zip(&graph.atoms).enumerate() {
            if el != &atom.element {
                return Err(ConformerError::ElementMismatch {
                    id: id.to_string(),
                    index: i,
                    got: el.clone(),
                    expected: atom.element.clone(),
                });
            }
        }
        return Ok(atoms.iter().map(|&(_, xyz)| xyz).collect());
    }
    Ok(pseudo_conformer(graph, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    #[test]
    fn single_atom_sits_at_origin() {
        let g = parse("C").unwrap();
        assert_eq!(pseudo_conformer(&g, 1), vec![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn bonded_pair_relaxes_to_target_distance() {
        let g = parse("CC").unwrap();
        let coords = pseudo_conformer(&g, 2);
        let d = distance(&coords[0], &coords[1]);
        assert!((d - 1.5).abs() < 0.1, "distance {d}");
    }

    #[test]
    fn chain_bonds_all_near_target() {
        let g = parse("CCCCCCCC").unwrap();
        let coords = pseudo_conformer(&g, 3);
        for b in &g.bonds {
            let d = distance(&coords[b.a], &coords[b.b]);
            assert!((d - 1.5).abs() < 0.2, "bond {}-{}: {d}", b.a, b.b);
        }
    }

    #[test]
    fn identical_input_and_seed_is_bitwise_identical() {
        let g = parse("CCN(CC)CCO").unwrap();
        assert_eq!(pseudo_conformer(&g, 7), pseudo_conformer(&g, 7));
        assert_ne!(pseudo_conformer(&g, 7), pseudo_conformer(&g, 8));
    }

    #[test]
    fn xyz_blocks_roundtrip() {
        let text = "#id m1\nC 0.0 0.0 0.0\nO 1.5 0 0\n\n#id m2\nN 0 0 0\n";
        let table = parse_xyz_blocks(text).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table["m1"].len(), 2);
        assert_eq!(table["m1"][1].0, "O");
        assert_eq!(table["m2"][0].1, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn xyz_errors() {
        assert!(matches!(
            parse_xyz_blocks("C 0 0 0\n"),
            Err(ConformerError::BadFormat { line: 1, .. })
        ));
        assert!(matches!(
            parse_xyz_blocks("#id m1\nC 0 0\n"),
            Err(ConformerError::BadFormat { line: 2, .. })
        ));
        assert!(matches!(
            parse_xyz_blocks("#id m1\nC a b c\n"),
            Err(ConformerError::BadFormat { line: 2, .. })
        ));
    }

    #[test]
    fn table_lookup_validates_against_graph() {
        let g = parse("CO").unwrap();
        let table = parse_xyz_blocks("#id m1\nC 0 0 0\nO 1.4 0 0\n").unwrap();
        let coords = coords_for("m1", &g, Some(&table), 0).unwrap();
        assert_eq!(coords[1], [1.4, 0.0, 0.0]);
        // absent id falls back to the generator
        let fallback = coords_for("m2", &g, Some(&table), 0).unwrap();
        assert_eq!(fallback.len(), 2);
        // wrong element order is rejected
        let bad = parse_xyz_blocks("#id m1\nO 0 0 0\nC 1.4 0 0\n").unwrap();
        assert!(matches!(
            coords_for("m1", &g, Some(&bad), 0),
            Err(ConformerError::ElementMismatch { .. })
        ));
    }
}
