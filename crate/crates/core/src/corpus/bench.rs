use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{record_hash, CorpusRecord};

/// A bench task: a corpus record plus what differential testing needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(flatten)]
    pub record: CorpusRecord,
    #[serde(with = "crate::text::base64_bytes")]
    pub expected_stdout: Vec<u8>,
    pub run_args: Vec<String>,
}

/// Ids and normalised content hashes of the training split.
#[derive(Debug, Clone, Default)]
pub struct TrainIndex {
    pub ids: HashSet<String>,
    pub hashes: HashSet<String>,
}

impl TrainIndex {
    pub fn from_records(train: &[CorpusRecord]) -> TrainIndex {
        TrainIndex {
            ids: train.iter().map(|r| r.id.clone()).collect(),
            hashes: train.iter().map(record_hash).collect(),
        }
    }

    pub fn overlaps(&self, r: &CorpusRecord) -> bool {
        self.ids.contains(&r.id) || self.hashes.contains(&record_hash(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurateConfig {
    pub target_per_domain: usize,
    /// Stop once this many tasks are selected.
    pub total_cap: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsufficientCandidates {
    pub domain: String,
    pub wanted: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSelection {
    pub bench: Vec<CorpusRecord>,
    pub per_domain: BTreeMap<String, usize>,
    pub insufficient: Vec<InsufficientCandidates>,
    /// Candidates dropped for sharing an id or content hash with train.
    pub excluded_overlap: usize,
    /// Candidates dropped as content duplicates of another candidate.
    pub excluded_duplicate: usize,
    pub total: usize,
}

/// Picks a bench split disjoint from `train` by id and normalised content.
///
/// Eligible candidates are grouped by `domain_of`, shuffled per domain with a
/// seeded RNG and drawn round-robin over domains in name order until every
/// domain reaches its target or the total cap is hit.
pub fn curate_bench<F>(candidates: &[CorpusRecord], train: &TrainIndex, cfg: &CurateConfig, domain_of: F) -> BenchSelection
where
    F: Fn(&CorpusRecord) -> String,
{
    let mut seen = HashSet::new();
    let mut excluded_overlap = 0;
    let mut excluded_duplicate = 0;
    let mut groups: BTreeMap<String, Vec<&CorpusRecord>> = BTreeMap::new();
    for r in candidates {
        if train.overlaps(r) {
            excluded_overlap += 1;
            continue;
        }
        if !seen.insert(record_hash(r)) {
            excluded_duplicate += 1;
            continue;
        }
        groups.entry(domain_of(r)).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for g in groups.values_mut() {
        g.shuffle(&mut rng);
    }
    let insufficient = groups
        .iter()
        .filter(|(_, g)| g.len() < cfg.target_per_domain)
        .map(|(d, g)| InsufficientCandidates { domain: d.clone(), wanted: cfg.target_per_domain, available: g.len() })
        .collect();
    let cap = cfg.total_cap.unwrap_or(usize::MAX);
    let mut bench = Vec::new();
    let mut per_domain: BTreeMap<String, usize> = groups.keys().map(|d| (d.clone(), 0)).collect();
    'rounds: for round in 0..cfg.target_per_domain {
        let mut progressed = false;
        for (d, g) in &groups {
            if bench.len() >= cap {
                break 'rounds;
            }
            if let Some(r) = g.get(round) {
                bench.push((*r).clone());
                *per_domain.get_mut(d).expect("domain present") += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    per_domain.retain(|_, n| *n > 0);
    let total = bench.len();
    BenchSelection { bench, per_domain, insufficient, excluded_overlap, excluded_duplicate, total }
}
