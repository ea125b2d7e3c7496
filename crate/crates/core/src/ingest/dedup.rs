use std::collections::HashSet;

use super::SourceUnit;
use crate::text::normalized_hash;

/// Keeps the first unit of every normalized-content class, in input order.
pub fn dedup_corpus(units: Vec<SourceUnit>) -> Vec<SourceUnit> {
    let mut seen = HashSet::new();
    units.into_iter().filter(|u| seen.insert(normalized_hash(&u.text))).collect()
}
