use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use super::{AnalyzeError, CategoryTable, OpcodeCategory};
use crate::asmproc::AssemblyArtifact;
use crate::corpus::CorpusRecord;

/// The four assembly columns of a record, by their dataset field names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AsmField {
    Sass,
    Rdna3,
    X86Nvidia,
    X86Amd,
}

impl AsmField {
    pub const ALL: [AsmField; 4] = [AsmField::Sass, AsmField::Rdna3, AsmField::X86Nvidia, AsmField::X86Amd];

    pub fn as_str(self) -> &'static str {
        match self {
            AsmField::Sass => "sass",
            AsmField::Rdna3 => "rdna3",
            AsmField::X86Nvidia => "x86_nvidia",
            AsmField::X86Amd => "x86_amd",
        }
    }

    pub fn get(self, r: &CorpusRecord) -> Option<&AssemblyArtifact> {
        match self {
            AsmField::Sass => Some(&r.sass),
            AsmField::Rdna3 => Some(&r.rdna3),
            AsmField::X86Nvidia => r.x86_nvidia.as_ref(),
            AsmField::X86Amd => r.x86_amd.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocRow {
    pub id: String,
    pub origin: &'static str,
    pub cuda: Option<usize>,
    pub hip: Option<usize>,
    pub sass: usize,
    pub rdna3: usize,
    pub x86_nvidia: Option<usize>,
    pub x86_amd: Option<usize>,
}

/// Distribution summary of one measure within one origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub origin: &'static str,
    pub measure: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpcodeRow {
    pub origin: &'static str,
    pub field: &'static str,
    pub category: &'static str,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRow {
    pub origin: &'static str,
    pub field: &'static str,
    pub records: usize,
    pub total_tokens: usize,
    pub mean_tokens: f64,
    pub total_opcodes: usize,
    pub distinct_opcodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainRow {
    pub origin: &'static str,
    pub domain: &'static str,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub loc: Vec<LocRow>,
    pub loc_summary: Vec<Summary>,
    pub opcodes: Vec<OpcodeRow>,
    pub tokens: Vec<TokenRow>,
    pub domains: Vec<DomainRow>,
}

fn summarize(origin: &'static str, measure: &str, mut xs: Vec<f64>) -> Option<Summary> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 };
    Some(Summary {
        origin,
        measure: measure.to_string(),
        count: n,
        mean: xs.iter().sum::<f64>() / n as f64,
        median,
        min: xs[0],
        max: xs[n - 1],
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Aggregates line counts, length ratios, opcode category histograms and
/// domain counts. Groups are keyed by origin; rows come out in a fixed order.
pub fn corpus_stats(records: &[CorpusRecord], table: &CategoryTable) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut by_origin: BTreeMap<&'static str, Vec<&CorpusRecord>> = BTreeMap::new();
    for r in records {
        by_origin.entry(r.origin.as_str()).or_default().push(r);
        stats.loc.push(LocRow {
            id: r.id.clone(),
            origin: r.origin.as_str(),
            cuda: r.cuda_src.as_ref().map(|s| s.line_count),
            hip: r.hip_src.as_ref().map(|s| s.line_count),
            sass: r.sass.line_count,
            rdna3: r.rdna3.line_count,
            x86_nvidia: r.x86_nvidia.as_ref().map(|a| a.line_count),
            x86_amd: r.x86_amd.as_ref().map(|a| a.line_count),
        });
    }
    for (origin, recs) in &by_origin {
        let measures: [(&str, Box<dyn Fn(&CorpusRecord) -> Option<f64>>); 9] = [
            ("cuda_loc", Box::new(|r| r.cuda_src.as_ref().map(|s| s.line_count as f64))),
            ("hip_loc", Box::new(|r| r.hip_src.as_ref().map(|s| s.line_count as f64))),
            ("sass_loc", Box::new(|r| Some(r.sass.line_count as f64))),
            ("rdna3_loc", Box::new(|r| Some(r.rdna3.line_count as f64))),
            ("x86_nvidia_loc", Box::new(|r| r.x86_nvidia.as_ref().map(|a| a.line_count as f64))),
            ("x86_amd_loc", Box::new(|r| r.x86_amd.as_ref().map(|a| a.line_count as f64))),
            ("rdna3_over_sass", Box::new(|r| ratio(r.rdna3.line_count, r.sass.line_count))),
            ("sass_over_cuda", Box::new(|r| r.cuda_src.as_ref().and_then(|s| ratio(r.sass.line_count, s.line_count)))),
            ("rdna3_over_hip", Box::new(|r| r.hip_src.as_ref().and_then(|s| ratio(r.rdna3.line_count, s.line_count)))),
        ];
        for (name, f) in &measures {
            stats.loc_summary.extend(summarize(origin, name, recs.iter().filter_map(|r| f(r)).collect()));
        }
        for field in AsmField::ALL {
            let arts: Vec<&AssemblyArtifact> = recs.iter().filter_map(|r| field.get(r)).collect();
            if arts.is_empty() {
                continue;
            }
            let mut hist: BTreeMap<OpcodeCategory, usize> = BTreeMap::new();
            let mut distinct = BTreeSet::new();
            let mut total_opcodes = 0;
            for a in &arts {
                for op in &a.opcodes {
                    *hist.entry(table.categorize(op, a.isa)).or_default() += 1;
                    distinct.insert(op.as_str());
                    total_opcodes += 1;
                }
            }
            for cat in OpcodeCategory::ALL {
                let count = hist.get(&cat).copied().unwrap_or(0);
                let fraction = if total_opcodes == 0 { 0.0 } else { count as f64 / total_opcodes as f64 };
                stats.opcodes.push(OpcodeRow { origin, field: field.as_str(), category: cat.as_str(), count, fraction });
            }
            let total_tokens: usize = arts.iter().map(|a| a.token_count).sum();
            stats.tokens.push(TokenRow {
                origin,
                field: field.as_str(),
                records: arts.len(),
                total_tokens,
                mean_tokens: total_tokens as f64 / arts.len() as f64,
                total_opcodes,
                distinct_opcodes: distinct.len(),
            });
        }
        let mut dom: BTreeMap<&'static str, usize> = BTreeMap::new();
        for r in recs {
            *dom.entry(r.domain.name.as_str()).or_default() += 1;
        }
        stats.domains.extend(dom.into_iter().map(|(domain, count)| DomainRow { origin, domain, count }));
    }
    stats
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<(), AnalyzeError> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl CorpusStats {
    /// Writes `loc.csv`, `loc_summary.csv`, `opcodes.csv`, `tokens.csv` and
    /// `domains.csv`. Empty tables still get a header row.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), AnalyzeError> {
        std::fs::create_dir_all(dir)?;
        write_csv(&self.loc, &dir.join("loc.csv"), &["id", "origin", "cuda", "hip", "sass", "rdna3", "x86_nvidia", "x86_amd"])?;
        write_csv(&self.loc_summary, &dir.join("loc_summary.csv"), &["origin", "measure", "count", "mean", "median", "min", "max"])?;
        write_csv(&self.opcodes, &dir.join("opcodes.csv"), &["origin", "field", "category", "count", "fraction"])?;
        write_csv(
            &self.tokens,
            &dir.join("tokens.csv"),
            &["origin", "field", "records", "total_tokens", "mean_tokens", "total_opcodes", "distinct_opcodes"],
        )?;
        write_csv(&self.domains, &dir.join("domains.csv"), &["origin", "domain", "count"])?;
        Ok(())
    }
}
