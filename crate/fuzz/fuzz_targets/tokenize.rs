#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    // accepted inputs must tokenize losslessly with consecutive atom indices
    if let Ok(tokens) = molfuse::smiles::tokenize(data) {
        let joined: String = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(joined, data);
        let mut next_atom = 0usize;
        for t in &tokens {
            if let Some(i) = t.atom_index {
                assert_eq!(i, next_atom);
                next_atom += 1;
            }
        }
    }
});
