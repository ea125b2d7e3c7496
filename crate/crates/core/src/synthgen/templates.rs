use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::text::sha256_hex;

pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.tsv");
pub const DEFAULT_DOMAINS: &str = include_str!("../../data/domains.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateCategory {
    BasicOps,
    Graph,
    Scientific,
    Ml,
    Sparse,
    Simulation,
    ImageSignal,
    Optimization,
    Crypto,
    DataStructures,
}

impl TemplateCategory {
    pub const ALL: [TemplateCategory; 10] = [
        TemplateCategory::BasicOps,
        TemplateCategory::Graph,
        TemplateCategory::Scientific,
        TemplateCategory::Ml,
        TemplateCategory::Sparse,
        TemplateCategory::Simulation,
        TemplateCategory::ImageSignal,
        TemplateCategory::Optimization,
        TemplateCategory::Crypto,
        TemplateCategory::DataStructures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateCategory::BasicOps => "basic_ops",
            TemplateCategory::Graph => "graph",
            TemplateCategory::Scientific => "scientific",
            TemplateCategory::Ml => "ml",
            TemplateCategory::Sparse => "sparse",
            TemplateCategory::Simulation => "simulation",
            TemplateCategory::ImageSignal => "image_signal",
            TemplateCategory::Optimization => "optimization",
            TemplateCategory::Crypto => "crypto",
            TemplateCategory::DataStructures => "data_structures",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateCategory> {
        TemplateCategory::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub category: TemplateCategory,
    pub text: String,
    /// Distinct slot names in order of first appearance.
    pub placeholders: Vec<String>,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, category: TemplateCategory, text: impl Into<String>) -> PromptTemplate {
        let text = text.into();
        PromptTemplate { template_id: template_id.into(), category, placeholders: placeholders_of(&text), text }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderDomain {
    pub name: String,
    pub values: Vec<String>,
}

pub type Bindings = BTreeMap<String, String>;

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

pub fn placeholders_of(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    slot_re()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .filter(|n| seen.insert(n.clone()))
        .collect()
}

/// Parses `template_id<TAB>category<TAB>text` lines.
pub fn parse_templates(text: &str) -> Result<Vec<PromptTemplate>, SynthError> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| SynthError::Parse { file: "templates", line: i + 1, message };
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(cat), Some(body)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected three tab-separated columns".into()));
        };
        let category = TemplateCategory::parse(cat.trim()).ok_or_else(|| bad(format!("unknown category `{cat}`")))?;
        if !ids.insert(id.trim().to_string()) {
            return Err(bad(format!("duplicate template id `{id}`")));
        }
        out.push(PromptTemplate::new(id.trim(), category, body.trim()));
    }
    Ok(out)
}

/// Parses `name = v1 | v2 | ...` lines.
pub fn parse_domains(text: &str) -> Result<Vec<PlaceholderDomain>, SynthError> {
    let mut out: Vec<PlaceholderDomain> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| SynthError::Parse { file: "domains", line: i + 1, message };
        let (name, values) = line.split_once('=').ok_or_else(|| bad("expected `name = v1 | v2`".into()))?;
        let name = name.trim().to_string();
        if out.iter().any(|d| d.name == name) {
            return Err(bad(format!("duplicate placeholder `{name}`")));
        }
        let mut vals: Vec<String> = Vec::new();
        for v in values.split('|').map(str::trim).filter(|v| !v.is_empty()) {
            if !vals.iter().any(|x| x == v) {
                vals.push(v.to_string());
            }
        }
        if vals.is_empty() {
            return Err(bad(format!("placeholder `{name}` has no values")));
        }
        out.push(PlaceholderDomain { name, values: vals });
    }
    Ok(out)
}

fn rng_for(template_id: &str, seed: u64) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{template_id}\0{seed}"));
    let mut key = [0u8; 32];
    hex::decode_to_slice(&digest, &mut key).expect("sha256 hex is 32 bytes");
    ChaCha8Rng::from_seed(key)
}

/// Draws one value per placeholder, deterministically in `(template_id, seed)`.
pub fn sample_bindings(
    template: &PromptTemplate,
    domains: &[PlaceholderDomain],
    seed: u64,
) -> Result<Bindings, SynthError> {
    let mut rng = rng_for(&template.template_id, seed);
    let mut out = Bindings::new();
    for name in &template.placeholders {
        let dom = domains
            .iter()
            .find(|d| &d.name == name)
            .ok_or_else(|| SynthError::MissingDomain(name.clone()))?;
        let pick = &dom.values[rng.random_range(0..dom.values.len())];
        out.insert(name.clone(), pick.clone());
    }
    Ok(out)
}

pub fn expand_template(template: &PromptTemplate, bindings: &Bindings) -> Result<String, SynthError> {
    if let Some(missing) = template.placeholders.iter().find(|p| !bindings.contains_key(*p)) {
        return Err(SynthError::MissingBinding(missing.clone()));
    }
    Ok(slot_re().replace_all(&template.text, |c: &regex::Captures| bindings[&c[1]].clone()).into_owned())
}
