//! SMILES tokenizer and molecular-graph parser.
//!
//! Supports the organic subset, bracket atoms with charges and explicit
//! hydrogens, branches, ring closures (`1`..`9`, `%nn`), dots, and aromatic
//! lowercase atoms. Stereo markers (`/`, `\`, `@`) are accepted but carry no
//! semantics. Exotic constructs (isotopes, wildcard `*`, atom classes) are
//! rejected rather than guessed.
//!
//! Atom order in the graph always equals SMILES atom-token order, which is
//! the alignment contract every downstream consumer relies on.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty input")]
    EmptyInput,
    #[error("illegal character {character:?} at byte {position}")]
    IllegalCharacter { position: usize, character: char },
    #[error("unterminated bracket atom starting at byte {position}")]
    UnbalancedBracket { position: usize },
    #[error("ring closure {label} opened but never closed")]
    UnclosedRing { label: String },
    #[error("unbalanced branch parentheses")]
    UnclosedBranch,
    #[error("unsupported construct: {0}")]
    ValenceUnsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TokenKind {
    Atom,
    BracketAtom,
    Bond,
    RingClosure,
    BranchOpen,
    BranchClose,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Consecutive from 0 in token order; set iff kind is Atom/BracketAtom.
    pub atom_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer code used by fingerprint hashing and the bond-type matrix.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomNode {
    pub element: String,
    pub formal_charge: i32,
    pub aromatic: bool,
    /// Implicit hydrogens for organic-subset atoms, explicit count for
    /// bracket atoms.
    pub hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BondEdge {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MolecularGraph {
    pub atoms: Vec<AtomNode>,
    pub bonds: Vec<BondEdge>,
    pub source: String,
}

impl MolecularGraph {
    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    pub fn neighbors(&self, atom: usize) -> Vec<(usize, BondOrder)> {
        let mut out = Vec::new();
        for b in &self.bonds {
            if b.a == atom {
                out.push((b.b, b.order));
            } else if b.b == atom {
                out.push((b.a, b.order));
            }
        }
        out
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<BondOrder> {
        self.bonds
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.order)
    }
}

const AROMATIC_SINGLE: &[char] = &['b', 'c', 'n', 'o', 'p', 's'];

// Element symbols accepted inside bracket atoms. Rows 1-5 plus iodine and a
// few heavier ones that show up in salts and reagents.
const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "Pt", "Au", "Hg", "Pb", "Bi",
];

fn is_known_element(sym: &str) -> bool {
    ELEMENTS.contains(&sym)
}

/// Split a SMILES string into lossless tokens.
///
/// Two-letter organic-subset elements (`Cl`, `Br`) are single Atom tokens and
/// a bracket atom `[...]` is one BracketAtom token. Concatenating the token
/// texts reproduces the input exactly.
pub fn tokenize(smiles: &str) -> Result<Vec<Token>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut atom_index = 0usize;
    let mut i = 0usize;

    let mut push_atom = |tokens: &mut Vec<Token>, kind: TokenKind, text: String| {
        tokens.push(Token {
            kind,
            text,
            atom_index: Some(atom_index),
        });
        atom_index += 1;
    };

    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '[' => {
                let start = i;
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b']' {
                    j += 1;
                }
                if j == bytes.len() {
                    return Err(SmilesError::UnbalancedBracket { position: start });
                }
                push_atom(
                    &mut tokens,
                    TokenKind::BracketAtom,
                    smiles[start..=j].to_string(),
                );
                i = j + 1;
            }
            ']' => {
                return Err(SmilesError::IllegalCharacter {
                    position: i,
                    character: ']',
                })
            }
            'C' if i + 1 < bytes.len() && bytes[i + 1] == b'l' => {
                push_atom(&mut tokens, TokenKind::Atom, "Cl".to_string());
                i += 2;
            }
            'B' if i + 1 < bytes.len() && bytes[i + 1] == b'r' => {
                push_atom(&mut tokens, TokenKind::Atom, "Br".to_string());
                i += 2;
            }
            'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => {
                push_atom(&mut tokens, TokenKind::Atom, c.to_string());
                i += 1;
            }
            _ if AROMATIC_SINGLE.contains(&c) => {
                push_atom(&mut tokens, TokenKind::Atom, c.to_string());
                i += 1;
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                tokens.push(Token {
                    kind: TokenKind::Bond,
                    text: c.to_string(),
                    atom_index: None,
                });
                i += 1;
            }
            '0'..='9' => {
                tokens.push(Token {
                    kind: TokenKind::RingClosure,
                    text: c.to_string(),
                    atom_index: None,
                });
                i += 1;
            }
            '%' => {
                if i + 2 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                    && bytes[i + 2].is_ascii_digit()
                {
                    tokens.push(Token {
                        kind: TokenKind::RingClosure,
                        text: smiles[i..i + 3].to_string(),
                        atom_index: None,
                    });
                    i += 3;
                } else {
                    return Err(SmilesError::IllegalCharacter {
                        position: i,
                        character: '%',
                    });
                }
            }
            '(' => {
                tokens.push(Token {
                    kind: TokenKind::BranchOpen,
                    text: "(".to_string(),
                    atom_index: None,
                });
                i += 1;
            }
            ')' => {
                tokens.push(Token {
                    kind: TokenKind::BranchClose,
                    text: ")".to_string(),
                    atom_index: None,
                });
                i += 1;
            }
            '.' => {
                tokens.push(Token {
                    kind: TokenKind::Dot,
                    text: ".".to_string(),
                    atom_index: None,
                });
                i += 1;
            }
            other => {
                return Err(SmilesError::IllegalCharacter {
                    position: i,
                    character: other,
                })
            }
        }
    }
    Ok(tokens)
}

/// Mask over tokens that is true exactly at Atom/BracketAtom positions.
pub fn atom_token_mask(tokens: &[Token]) -> Vec<bool> {
    tokens
        .iter()
        .map(|t| matches!(t.kind, TokenKind::Atom | TokenKind::BracketAtom))
        .collect()
}

struct ParsedBracket {
    element: String,
    aromatic: bool,
    hydrogens: u8,
    charge: i32,
}

fn parse_bracket(text: &str) -> Result<ParsedBracket, SmilesError> {
    let unsupported = |msg: &str| SmilesError::ValenceUnsupported(format!("{msg} in {text:?}"));
    let inner = &text[1..text.len() - 1];
    let b = inner.as_bytes();
    let mut i = 0;
    if b.is_empty() {
        return Err(unsupported("empty bracket atom"));
    }
    if b[0].is_ascii_digit() {
        return Err(unsupported("isotope label"));
    }
    if b[0] == b'*' {
        return Err(unsupported("wildcard atom"));
    }

    let (element, aromatic) = if b[i].is_ascii_uppercase() {
        let mut sym = (b[i] as char).to_string();
        if i + 1 < b.len() && b[i + 1].is_ascii_lowercase() {
            let two = format!("{}{}", b[i] as char, b[i + 1] as char);
            if is_known_element(&two) {
                sym = two;
                i += 1;
            }
        }
        i += 1;
        (sym, false)
    } else if b[i].is_ascii_lowercase() {
        let two = if i + 1 < b.len() {
            format!("{}{}", b[i] as char, b[i + 1] as char)
        } else {
            String::new()
        };
        if two == "se" || two == "as" {
            i += 2;
            let mut sym = two;
            sym[..1].make_ascii_uppercase();
            (sym, true)
        } else if AROMATIC_SINGLE.contains(&(b[i] as char)) {
            i += 1;
            ((b[i - 1] as char).to_ascii_uppercase().to_string(), true)
        } else {
            return Err(unsupported("unknown aromatic symbol"));
        }
    } else {
        return Err(unsupported("missing element symbol"));
    };
    if !is_known_element(&element) {
        return Err(unsupported("unknown element symbol"));
    }

    // Chirality markers are parsed and dropped.
    while i < b.len() && b[i] == b'@' {
        i += 1;
    }

    let mut hydrogens = 0u8;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        let mut n = String::new();
        while i < b.len() && b[i].is_ascii_digit() {
            n.push(b[i] as char);
            i += 1;
        }
        hydrogens = if n.is_empty() {
            1
        } else {
            n.parse().map_err(|_| unsupported("hydrogen count"))?
        };
    }

    let mut charge = 0i32;
    while i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        i += 1;
        let mut n = String::new();
        while i < b.len() && b[i].is_ascii_digit() {
            n.push(b[i] as char);
            i += 1;
        }
        if n.is_empty() {
            charge += sign;
        } else {
            let mag: i32 = n.parse().map_err(|_| unsupported("charge magnitude"))?;
            charge += sign * mag;
        }
    }

    if i != b.len() {
        return Err(unsupported("trailing bracket content"));
    }
    Ok(ParsedBracket {
        element,
        aromatic,
        hydrogens,
        charge,
    })
}

fn organic_atom(text: &str) -> AtomNode {
    let aromatic = text.chars().next().unwrap().is_ascii_lowercase();
    let mut element = text.to_string();
    if aromatic {
        element[..1].make_ascii_uppercase();
    }
    AtomNode {
        element,
        formal_charge: 0,
        aromatic,
        hydrogens: 0, // filled in after bonds are known
    }
}

fn implicit_hydrogens(element: &str, bond_valence: f64) -> u8 {
    let used = bond_valence.ceil() as i32;
    let candidates: &[i32] = match element {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => &[],
    };
    for &v in candidates {
        if used <= v {
            return (v - used) as u8;
        }
    }
    0
}

/// Parse a SMILES string into a molecular graph.
///
/// Atom order equals atom-token order. Implicit hydrogens are computed from
/// standard valences for organic-subset atoms; bracket atoms carry their
/// explicit count.
pub fn parse(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    let tokens = tokenize(smiles)?;
    parse_tokens(smiles, &tokens)
}

fn parse_tokens(smiles: &str, tokens: &[Token]) -> Result<MolecularGraph, SmilesError> {
    let mut atoms: Vec<AtomNode> = Vec::new();
    let mut explicit_h: Vec<bool> = Vec::new();
    let mut bonds: Vec<BondEdge> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<BondOrder> = None;
    let mut branch_stack: Vec<Option<usize>> = Vec::new();
    let mut open_rings: std::collections::HashMap<String, (usize, Option<BondOrder>)> =
        std::collections::HashMap::new();

    let add_bond = |bonds: &mut Vec<BondEdge>,
                        atoms: &[AtomNode],
                        a: usize,
                        b: usize,
                        explicit: Option<BondOrder>|
     -> Result<(), SmilesError> {
        if a == b {
            return Err(SmilesError::ValenceUnsupported(
                "ring closure bonds an atom to itself".into(),
            ));
        }
        if bonds
            .iter()
            .any(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
        {
            return Err(SmilesError::ValenceUnsupported(
                "duplicate bond between the same atom pair".into(),
            ));
        }
        let order = explicit.unwrap_or(if atoms[a].aromatic && atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        bonds.push(BondEdge { a, b, order });
        Ok(())
    };

    for token in tokens {
        match token.kind {
            TokenKind::Atom | TokenKind::BracketAtom => {
                let node = if token.kind == TokenKind::Atom {
                    explicit_h.push(false);
                    organic_atom(&token.text)
                } else {
                    explicit_h.push(true);
                    let pb = parse_bracket(&token.text)?;
                    AtomNode {
                        element: pb.element,
                        formal_charge: pb.charge,
                        aromatic: pb.aromatic,
                        hydrogens: pb.hydrogens,
                    }
                };
                atoms.push(node);
                let idx = atoms.len() - 1;
                if let Some(p) = prev {
                    add_bond(&mut bonds, &atoms, p, idx, pending.take())?;
                } else if pending.take().is_some() {
                    return Err(SmilesError::ValenceUnsupported(
                        "bond symbol with no preceding atom".into(),
                    ));
                }
                prev = Some(idx);
            }
            TokenKind::Bond => {
                if pending.is_some() {
                    return Err(SmilesError::ValenceUnsupported(
                        "two consecutive bond symbols".into(),
                    ));
                }
                pending = Some(match token.text.as_str() {
                    "-" | "/" | "\\" => BondOrder::Single,
                    "=" => BondOrder::Double,
                    "#" => BondOrder::Triple,
                    ":" => BondOrder::Aromatic,
                    _ => unreachable!("tokenizer admits only known bond symbols"),
                });
            }
            TokenKind::RingClosure => {
                let here = prev.ok_or_else(|| {
                    SmilesError::ValenceUnsupported("ring closure before any atom".into())
                })?;
                let label = token.text.trim_start_matches('%').to_string();
                match open_rings.remove(&label) {
                    Some((other, opened_with)) => {
                        let order = match (opened_with, pending.take()) {
                            (None, None) => None,
                            (Some(o), None) | (None, Some(o)) => Some(o),
                            (Some(a), Some(b)) if a == b => Some(a),
                            (Some(_), Some(_)) => {
                                return Err(SmilesError::ValenceUnsupported(
                                    "conflicting bond orders on ring closure".into(),
                                ))
                            }
                        };
                        add_bond(&mut bonds, &atoms, other, here, order)?;
                    }
                    None => {
                        open_rings.insert(label, (here, pending.take()));
                    }
                }
            }
            TokenKind::BranchOpen => {
                if prev.is_none() {
                    return Err(SmilesError::ValenceUnsupported(
                        "branch with no preceding atom".into(),
                    ));
                }
                if pending.is_some() {
                    return Err(SmilesError::ValenceUnsupported(
                        "bond symbol before branch open".into(),
                    ));
                }
                branch_stack.push(prev);
            }
            TokenKind::BranchClose => {
                if pending.is_some() {
                    return Err(SmilesError::ValenceUnsupported(
                        "dangling bond symbol at branch close".into(),
                    ));
                }
                prev = branch_stack.pop().ok_or(SmilesError::UnclosedBranch)?;
            }
            TokenKind::Dot => {
                if pending.is_some() {
                    return Err(SmilesError::ValenceUnsupported(
                        "bond symbol before dot".into(),
                    ));
                }
                prev = None;
            }
        }
    }

    if pending.is_some() {
        return Err(SmilesError::ValenceUnsupported(
            "trailing bond symbol".into(),
        ));
    }
    if !branch_stack.is_empty() {
        return Err(SmilesError::UnclosedBranch);
    }
    if let Some(label) = open_rings.keys().min() {
        return Err(SmilesError::UnclosedRing {
            label: label.clone(),
        });
    }
    if atoms.is_empty() {
        return Err(SmilesError::EmptyInput);
    }

    // Implicit hydrogens from standard valences, organic-subset atoms only.
    let mut valence_sum = vec![0.0f64; atoms.len()];
    for e in &bonds {
        valence_sum[e.a] += e.order.valence();
        valence_sum[e.b] += e.order.valence();
    }
    for (i, atom) in atoms.iter_mut().enumerate() {
        if !explicit_h[i] {
            atom.hydrogens = implicit_hydrogens(&atom.element, valence_sum[i]);
        }
    }

    Ok(MolecularGraph {
        atoms,
        bonds,
        source: smiles.to_string(),
    })
}
