use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    GeneralCompute,
    Simulation,
    DataStructure,
    MachineLearning,
    Graphics,
    Cryptography,
    ScientificComputing,
}

impl Domain {
    /// Tie-break order.
    pub const ALL: [Domain; 7] = [
        Domain::GeneralCompute,
        Domain::Simulation,
        Domain::DataStructure,
        Domain::MachineLearning,
        Domain::Graphics,
        Domain::Cryptography,
        Domain::ScientificComputing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::GeneralCompute => "general_compute",
            Domain::Simulation => "simulation",
            Domain::DataStructure => "data_structure",
            Domain::MachineLearning => "machine_learning",
            Domain::Graphics => "graphics",
            Domain::Cryptography => "cryptography",
            Domain::ScientificComputing => "scientific_computing",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        Domain::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainLabel {
    pub name: Domain,
    pub score: usize,
}

#[derive(Debug, Clone)]
pub struct KeywordTable {
    /// Indexed like `Domain::ALL`; keywords are lowercase.
    keywords: [Vec<String>; 7],
}

pub const DEFAULT_KEYWORD_TABLE: &str = include_str!("domain_keywords.txt");

impl KeywordTable {
    pub fn parse(text: &str) -> Result<KeywordTable, AnalyzeError> {
        let mut keywords: [Vec<String>; 7] = Default::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| AnalyzeError::Table { line: i + 1, message };
            let (name, list) = line.split_once('=').ok_or_else(|| bad("expected `<domain> = kw, ...`".into()))?;
            let domain = Domain::parse(name.trim()).ok_or_else(|| bad(format!("unknown domain `{}`", name.trim())))?;
            let slot = &mut keywords[domain as usize];
            for kw in list.split(',').map(str::trim).filter(|k| !k.is_empty()) {
                slot.push(kw.to_lowercase());
            }
        }
        Ok(KeywordTable { keywords })
    }

    pub fn builtin() -> &'static KeywordTable {
        static TABLE: OnceLock<KeywordTable> = OnceLock::new();
        TABLE.get_or_init(|| KeywordTable::parse(DEFAULT_KEYWORD_TABLE).expect("builtin keyword table parses"))
    }

    pub fn keywords(&self, domain: Domain) -> &[String] {
        &self.keywords[domain as usize]
    }

    /// Keyword hit count per domain, in `Domain::ALL` order.
    pub fn scores(&self, text: &str) -> [usize; 7] {
        let chars: Vec<char> = text.chars().collect();
        let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
        let starts: Vec<usize> = (0..chars.len()).filter(|&i| word_start(&chars, i)).collect();
        let mut out = [0usize; 7];
        for (d, kws) in self.keywords.iter().enumerate() {
            for kw in kws {
                let kw: Vec<char> = kw.chars().collect();
                out[d] += starts.iter().filter(|&&s| lower[s..].starts_with(&kw)).count();
            }
        }
        out
    }

    pub fn classify(&self, text: &str) -> DomainLabel {
        let scores = self.scores(text);
        let mut best = DomainLabel { name: Domain::GeneralCompute, score: 0 };
        for (d, &s) in Domain::ALL.iter().zip(scores.iter()) {
            if s > best.score {
                best = DomainLabel { name: *d, score: s };
            }
        }
        best
    }
}

fn word_start(chars: &[char], i: usize) -> bool {
    let c = chars[i];
    if !c.is_alphanumeric() {
        return false;
    }
    match i.checked_sub(1).map(|p| chars[p]) {
        None => true,
        Some(p) if !p.is_alphanumeric() => true,
        Some(p) => p.is_lowercase() && c.is_uppercase(),
    }
}

/// Keyword-count domain label under the builtin table.
pub fn classify_domain(text: &str) -> DomainLabel {
    KeywordTable::builtin().classify(text)
}
