use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::asmproc::Isa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpcodeCategory {
    Memory,
    TensorArithmetic,
    ControlFlow,
    Synchronization,
    ScalarAlu,
    VectorAlu,
    Conversion,
    Compare,
    BranchPredicate,
    Other,
}

impl OpcodeCategory {
    pub const ALL: [OpcodeCategory; 10] = [
        OpcodeCategory::Memory,
        OpcodeCategory::TensorArithmetic,
        OpcodeCategory::ControlFlow,
        OpcodeCategory::Synchronization,
        OpcodeCategory::ScalarAlu,
        OpcodeCategory::VectorAlu,
        OpcodeCategory::Conversion,
        OpcodeCategory::Compare,
        OpcodeCategory::BranchPredicate,
        OpcodeCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpcodeCategory::Memory => "memory",
            OpcodeCategory::TensorArithmetic => "tensor_arithmetic",
            OpcodeCategory::ControlFlow => "control_flow",
            OpcodeCategory::Synchronization => "synchronization",
            OpcodeCategory::ScalarAlu => "scalar_alu",
            OpcodeCategory::VectorAlu => "vector_alu",
            OpcodeCategory::Conversion => "conversion",
            OpcodeCategory::Compare => "compare",
            OpcodeCategory::BranchPredicate => "branch_predicate",
            OpcodeCategory::Other => "other",
        }
    }
}

impl fmt::Display for OpcodeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpcodeCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        OpcodeCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown opcode category `{s}`"))
    }
}

fn parse_isa(s: &str) -> Option<Isa> {
    match s {
        "x86" => Some(Isa::X86),
        "sass" => Some(Isa::Sass),
        "rdna3" => Some(Isa::Rdna3),
        "ptx" => Some(Isa::Ptx),
        _ => None,
    }
}

/// Ordered per-ISA matcher lists.
#[derive(Debug, Clone)]
pub struct CategoryTable {
    rules: Vec<(Isa, OpcodeCategory, Regex)>,
}

pub const DEFAULT_CATEGORY_TABLE: &str = include_str!("opcode_categories.txt");

impl CategoryTable {
    /// Parses `<isa> <category> <regex>` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<CategoryTable, AnalyzeError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| AnalyzeError::Table { line: i + 1, message };
            let mut parts = line.split_whitespace();
            let (Some(isa), Some(cat), Some(pattern), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected `<isa> <category> <regex>`".into()));
            };
            let isa = parse_isa(isa).ok_or_else(|| bad(format!("unknown isa `{isa}`")))?;
            let cat: OpcodeCategory = cat.parse().map_err(bad)?;
            let re = Regex::new(pattern).map_err(|e| bad(e.to_string()))?;
            rules.push((isa, cat, re));
        }
        Ok(CategoryTable { rules })
    }

    pub fn builtin() -> &'static CategoryTable {
        static TABLE: OnceLock<CategoryTable> = OnceLock::new();
        TABLE.get_or_init(|| CategoryTable::parse(DEFAULT_CATEGORY_TABLE).expect("builtin category table parses"))
    }

    pub fn categorize(&self, opcode: &str, isa: Isa) -> OpcodeCategory {
        self.rules
            .iter()
            .filter(|(i, _, _)| *i == isa)
            .find(|(_, _, re)| re.is_match(opcode))
            .map(|(_, c, _)| *c)
            .unwrap_or(OpcodeCategory::Other)
    }
}

/// Category of `opcode` under the builtin table.
pub fn categorize_opcode(opcode: &str, isa: Isa) -> OpcodeCategory {
    CategoryTable::builtin().categorize(opcode, isa)
}
