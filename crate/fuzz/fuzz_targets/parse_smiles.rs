#![no_main]

use libfuzzer_sys::fuzz_target;
use molfuse::smiles::{atom_token_mask, parse, tokenize};

fuzz_target!(|data: &str| {
    let Ok(graph) = parse(data) else { return };
    // the alignment contract every downstream consumer relies on
    let tokens = tokenize(data).expect("parse implies tokenize");
    let mask = atom_token_mask(&tokens);
    assert_eq!(mask.iter().filter(|&&m| m).count(), graph.atoms.len());
    for bond in &graph.bonds {
        assert!(bond.a < graph.atoms.len());
        assert!(bond.b < graph.atoms.len());
        assert_ne!(bond.a, bond.b);
    }
    // fingerprints and scaffolds must not panic on any accepted graph
    let _ = molfuse::fingerprint::circular_fingerprint(&graph, 2, 2048);
    let _ = molfuse::fingerprint::structural_keys(&graph);
    let _ = molfuse::fingerprint::murcko_scaffold(&graph);
});
