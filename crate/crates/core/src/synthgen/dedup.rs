use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ingest::SourceUnit;
use crate::text::{code_only, normalized_hash};

pub const DEFAULT_SIMILARITY: f64 = 0.95;

/// Opcode mnemonic counts from a compiled unit.
pub type OpcodeProfile = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq)]
pub enum Signature {
    Opcodes(OpcodeProfile),
    Shingles(BTreeMap<String, usize>),
}

const KEEP_WORDS: &[&str] = &[
    "__global__", "__device__", "__shared__", "__syncthreads", "__constant__", "if", "else", "for", "while", "do",
    "return", "break", "continue", "switch", "case", "int", "float", "double", "char", "void", "unsigned", "long",
    "short", "bool", "const", "struct", "threadIdx", "blockIdx", "blockDim", "gridDim", "atomicAdd",
];

fn lex(code: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = code.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(if KEEP_WORDS.contains(&word.as_str()) { word } else { "ID".to_string() });
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            out.push("NUM".to_string());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

/// 4-token shingles over comment- and literal-free code with identifiers erased.
pub fn shingle_signature(text: &str) -> Signature {
    let toks = lex(&code_only(text));
    let mut counts = BTreeMap::new();
    for w in toks.windows(4) {
        *counts.entry(w.join(" ")).or_insert(0) += 1;
    }
    if toks.len() < 4 && !toks.is_empty() {
        counts.insert(toks.join(" "), 1);
    }
    Signature::Shingles(counts)
}

fn cosine(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, &x)| b.get(k).map(|&y| (x * y) as f64)).sum();
    let na: f64 = a.values().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl Signature {
    /// Cosine similarity; signatures of different kinds never match.
    pub fn similarity(&self, other: &Signature) -> f64 {
        match (self, other) {
            (Signature::Opcodes(a), Signature::Opcodes(b)) | (Signature::Shingles(a), Signature::Shingles(b)) => {
                cosine(a, b)
            }
            _ => 0.0,
        }
    }
}

/// Drops normalized-hash duplicates, then (when `profiles` is given)
/// later units whose structural signature is within `threshold` of a kept one.
///
/// A unit's signature is its opcode profile when `profiles` has one for its
/// id, otherwise its shingle set. Earlier units win.
pub fn dedup_synthetic(
    units: Vec<SourceUnit>,
    profiles: Option<&HashMap<String, OpcodeProfile>>,
    threshold: f64,
) -> Vec<SourceUnit> {
    let mut seen = HashSet::new();
    let units: Vec<SourceUnit> = units.into_iter().filter(|u| seen.insert(normalized_hash(&u.text))).collect();
    let Some(profiles) = profiles else {
        return units;
    };
    let mut kept: Vec<(SourceUnit, Signature)> = Vec::new();
    for u in units {
        let sig = match profiles.get(&u.id) {
            Some(p) => Signature::Opcodes(p.clone()),
            None => shingle_signature(&u.text),
        };
        if kept.iter().any(|(_, k)| k.similarity(&sig) >= threshold) {
            continue;
        }
        kept.push((u, sig));
    }
    kept.into_iter().map(|(u, _)| u).collect()
}
