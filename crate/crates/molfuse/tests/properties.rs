//! Property tests for the parsing and similarity layers.

use molfuse::cliff::{smiles_similarity, structure_similarity, tanimoto, SimilarityTriple};
use molfuse::fingerprint::{
    circular_fingerprint, murcko_scaffold, murcko_scaffold_graph, structural_keys, BitFingerprint,
    FingerprintKind,
};
use molfuse::smiles::{atom_token_mask, parse, tokenize};
use proptest::prelude::*;

/// Strategy producing syntactically valid SMILES from a small grammar:
/// chains of atoms with optional bonds, branches, and an optional ring
/// wrapper.
fn valid_smiles() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        Just("C".to_string()),
        Just("N".to_string()),
        Just("O".to_string()),
        Just("S".to_string()),
        Just("P".to_string()),
        Just("F".to_string()),
        Just("Cl".to_string()),
        Just("Br".to_string()),
        Just("I".to_string()),
        Just("[NH4+]".to_string()),
        Just("[O-]".to_string()),
        Just("[NH2+]".to_string()),
    ];
    let bond = prop_oneof![
        Just("".to_string()),
        Just("-".to_string()),
        Just("=".to_string()),
        Just("#".to_string()),
    ];
    let unit = (bond, atom).prop_map(|(b, a)| format!("{b}{a}"));
    let chain = (
        prop_oneof![Just("C".to_string()), Just("N".to_string()), Just("O".to_string())],
        proptest::collection::vec(unit, 0..8),
    )
        .prop_map(|(first, rest)| {
            let mut s = first;
            for r in rest {
                s.push_str(&r);
            }
            s
        });
    // optionally add a branch and a ring closure around the first atom
    (chain, proptest::collection::vec(prop_oneof![Just("(C)"), Just("(CC)"), Just("(=O)")], 0..3), any::<bool>())
        .prop_map(|(chain, branches, ring)| {
            let mut s = String::new();
            let mut chars = chain.chars();
            s.push(chars.next().unwrap());
            if ring {
                s.push('1');
            }
            for b in branches {
                s.push_str(b);
            }
            s.push_str(chars.as_str());
            if ring {
                s.push_str("CC1");
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Accepted inputs tokenize losslessly, whatever the bytes were.
    #[test]
    fn tokenize_round_trips_arbitrary_strings(s in "\\PC*") {
        if let Ok(tokens) = tokenize(&s) {
            let joined: String = tokens.iter().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(joined, s);
        }
    }

    /// Atom-token mask count equals the parsed atom count on any accepted
    /// input.
    #[test]
    fn alignment_holds_on_arbitrary_strings(s in "[A-Za-z0-9()\\[\\]=#+%-]{0,24}") {
        if let (Ok(tokens), Ok(graph)) = (tokenize(&s), parse(&s)) {
            let mask = atom_token_mask(&tokens);
            prop_assert_eq!(mask.iter().filter(|&&m| m).count(), graph.atoms.len());
        }
    }

    /// Generated valid SMILES always parse, round-trip, and align.
    #[test]
    fn generated_smiles_parse_and_align(s in valid_smiles()) {
        let tokens = tokenize(&s).unwrap();
        let joined: String = tokens.iter().map(|t| t.text.as_str()).collect();
        prop_assert_eq!(&joined, &s);
        let graph = parse(&s).unwrap();
        prop_assert!(!graph.atoms.is_empty());
        let mask = atom_token_mask(&tokens);
        prop_assert_eq!(mask.iter().filter(|&&m| m).count(), graph.atoms.len());
        for bond in &graph.bonds {
            prop_assert!(bond.a < graph.atoms.len());
            prop_assert!(bond.b < graph.atoms.len());
            prop_assert_ne!(bond.a, bond.b);
        }
        // parsing twice gives the identical graph
        prop_assert_eq!(parse(&s).unwrap(), graph);
    }

    /// Scaffold extraction is idempotent and key-stable.
    #[test]
    fn scaffold_is_idempotent(s in valid_smiles()) {
        let graph = parse(&s).unwrap();
        let once = murcko_scaffold_graph(&graph);
        let twice = murcko_scaffold_graph(&once);
        prop_assert_eq!(murcko_scaffold(&once), murcko_scaffold(&twice));
        prop_assert_eq!(murcko_scaffold(&graph), murcko_scaffold(&once));
        // scaffold atoms all sit on rings or linkers: degree >= 2
        for i in 0..once.atoms.len() {
            prop_assert!(once.degree(i) >= 2);
        }
    }

    /// Structural keys never exceed the documented width and are
    /// deterministic.
    #[test]
    fn structural_keys_popcount_bounded(s in valid_smiles()) {
        let graph = parse(&s).unwrap();
        let keys = structural_keys(&graph);
        prop_assert!(keys.popcount() <= 64);
        prop_assert_eq!(structural_keys(&graph), keys);
    }

    /// Tanimoto is symmetric, bounded, and 1 on identical inputs.
    #[test]
    fn tanimoto_properties(bits_a in proptest::collection::vec(any::<bool>(), 64),
                           bits_b in proptest::collection::vec(any::<bool>(), 64)) {
        let build = |bits: &[bool]| {
            let mut f = BitFingerprint::zeros(FingerprintKind::Circular, 64);
            for (i, &b) in bits.iter().enumerate() {
                if b {
                    f.set(i);
                }
            }
            f
        };
        let fa = build(&bits_a);
        let fb = build(&bits_b);
        let ab = tanimoto(&fa, &fb).unwrap();
        let ba = tanimoto(&fb, &fa).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
    }

    /// SMILES string similarity is symmetric, bounded, and 1 on equality.
    #[test]
    fn smiles_similarity_properties(a in "[A-Za-z0-9()=#]{0,24}", b in "[A-Za-z0-9()=#]{0,24}") {
        let ab = smiles_similarity(&a, &b);
        prop_assert_eq!(ab, smiles_similarity(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(smiles_similarity(&a, &a), 1.0);
    }

    /// The structural similarity mean stays within its component bounds.
    #[test]
    fn structure_similarity_is_a_mean(subs in 0.0f64..=1.0, scas in 0.0f64..=1.0, smis in 0.0f64..=1.0) {
        let t = SimilarityTriple { subs, scas, smis };
        let s = structure_similarity(&t);
        let lo = subs.min(scas).min(smis);
        let hi = subs.max(scas).max(smis);
        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
    }

    /// Circular fingerprints are invariant under reversal of the SMILES
    /// chain (a cheap atom-reordering oracle).
    #[test]
    fn circular_fingerprint_reversal_invariance(n in 2usize..10) {
        // build a hetero chain and its reverse
        let elements = ["C", "N", "O", "C", "S", "C", "C", "O", "N", "C"];
        let forward: String = elements[..n].concat();
        let backward: String = elements[..n].iter().rev().copied().collect();
        let fa = circular_fingerprint(&parse(&forward).unwrap(), 2, 1024);
        let fb = circular_fingerprint(&parse(&backward).unwrap(), 2, 1024);
        prop_assert_eq!(fa, fb);
    }
}
