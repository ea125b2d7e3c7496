use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusRecord};
use crate::asmproc::{count_tokens, Tokenizer};

/// Input-length bucket. Medium includes both of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthStratum {
    Easy,
    Medium,
    Hard,
}

pub const MEDIUM_LOWER: usize = 9000;
pub const MEDIUM_UPPER: usize = 12000;

impl LengthStratum {
    pub const ALL: [LengthStratum; 3] = [LengthStratum::Easy, LengthStratum::Medium, LengthStratum::Hard];

    pub fn of(tokens: usize) -> LengthStratum {
        if tokens < MEDIUM_LOWER {
            LengthStratum::Easy
        } else if tokens <= MEDIUM_UPPER {
            LengthStratum::Medium
        } else {
            LengthStratum::Hard
        }
    }

    /// Inclusive lower bound.
    pub fn lower(self) -> usize {
        match self {
            LengthStratum::Easy => 0,
            LengthStratum::Medium => MEDIUM_LOWER,
            LengthStratum::Hard => MEDIUM_UPPER + 1,
        }
    }

    /// Exclusive upper bound; `None` is unbounded.
    pub fn upper(self) -> Option<usize> {
        match self {
            LengthStratum::Easy => Some(MEDIUM_LOWER),
            LengthStratum::Medium => Some(MEDIUM_UPPER + 1),
            LengthStratum::Hard => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LengthStratum::Easy => "easy",
            LengthStratum::Medium => "medium",
            LengthStratum::Hard => "hard",
        }
    }
}

impl fmt::Display for LengthStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Record ids per stratum; every stratum has an entry, possibly empty.
pub type Strata = BTreeMap<LengthStratum, Vec<String>>;

/// Buckets records by the token count of their Nvidia device assembly.
pub fn stratify(records: &[CorpusRecord], tokenizer: &Tokenizer) -> Result<Strata, CorpusError> {
    let mut out: Strata = LengthStratum::ALL.iter().map(|s| (*s, Vec::new())).collect();
    for r in records {
        let n = count_tokens(&r.sass.text, tokenizer)?;
        out.entry(LengthStratum::of(n)).or_default().push(r.id.clone());
    }
    Ok(out)
}
