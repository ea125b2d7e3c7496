use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const DEFAULT_ERROR_RULES: &str = include_str!("error_rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    InvalidInstruction,
    DirectiveParsing,
    InvalidOperand,
    RegisterAlignment,
    InstructionConstraint,
    UndefinedLabel,
    VgprBank,
    LiteralOperand,
    Other,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 9] = [
        ErrorKind::InvalidInstruction,
        ErrorKind::DirectiveParsing,
        ErrorKind::InvalidOperand,
        ErrorKind::RegisterAlignment,
        ErrorKind::InstructionConstraint,
        ErrorKind::UndefinedLabel,
        ErrorKind::VgprBank,
        ErrorKind::LiteralOperand,
        ErrorKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::InvalidInstruction => "invalid_instruction",
            ErrorKind::DirectiveParsing => "directive_parsing",
            ErrorKind::InvalidOperand => "invalid_operand",
            ErrorKind::RegisterAlignment => "register_alignment",
            ErrorKind::InstructionConstraint => "instruction_constraint",
            ErrorKind::UndefinedLabel => "undefined_label",
            ErrorKind::VgprBank => "vgpr_bank",
            ErrorKind::LiteralOperand => "literal_operand",
            ErrorKind::Other => "other",
        }
    }
}

impl FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ErrorKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown error category `{s}`"))
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified diagnostic with the line that triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCategory {
    pub name: ErrorKind,
    pub matched_diagnostic: String,
}

#[derive(Debug, Clone)]
pub struct ErrorRules {
    rules: Vec<(ErrorKind, Regex)>,
}

impl ErrorRules {
    pub fn parse(text: &str) -> Result<ErrorRules, EvalError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| EvalError::Rules { line: i + 1, message };
            let (name, pattern) = line.split_once(char::is_whitespace).ok_or_else(|| bad("expected `<category> <regex>`".into()))?;
            let kind: ErrorKind = name.parse().map_err(bad)?;
            if kind == ErrorKind::Other {
                return Err(bad("`other` is the implicit fallback and takes no pattern".into()));
            }
            let re = Regex::new(pattern.trim()).map_err(|e| bad(e.to_string()))?;
            rules.push((kind, re));
        }
        Ok(ErrorRules { rules })
    }

    pub fn builtin() -> &'static ErrorRules {
        static RULES: OnceLock<ErrorRules> = OnceLock::new();
        RULES.get_or_init(|| ErrorRules::parse(DEFAULT_ERROR_RULES).expect("bundled error rules parse"))
    }

    fn classify_line(&self, line: &str) -> Option<ErrorKind> {
        self.rules.iter().find(|(_, re)| re.is_match(line)).map(|(k, _)| *k)
    }

    /// One category per matching line, first occurrence kept; `[other]`
    /// when nothing matches.
    pub fn classify(&self, diagnostics: &str) -> Vec<ErrorCategory> {
        let mut out: Vec<ErrorCategory> = Vec::new();
        let mut first_error = None;
        for line in diagnostics.lines() {
            if !line.to_ascii_lowercase().contains("error") {
                continue;
            }
            first_error.get_or_insert(line);
            if let Some(kind) = self.classify_line(line) {
                if out.iter().all(|c| c.name != kind) {
                    out.push(ErrorCategory { name: kind, matched_diagnostic: line.trim().to_string() });
                }
            }
        }
        if out.is_empty() {
            let line = first_error.or_else(|| diagnostics.lines().find(|l| !l.trim().is_empty())).unwrap_or("");
            out.push(ErrorCategory { name: ErrorKind::Other, matched_diagnostic: line.trim().to_string() });
        }
        out
    }
}

pub fn classify_compile_error(diagnostics: &str) -> Vec<ErrorCategory> {
    ErrorRules::builtin().classify(diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: &str) -> Vec<ErrorKind> {
        classify_compile_error(d).into_iter().map(|c| c.name).collect()
    }

    #[test]
    fn documented_phrasings() {
        use ErrorKind::*;
        let cases = [
            ("<stdin>:12:2: error: invalid register alignment", RegisterAlignment),
            ("<stdin>:7:22: error: src0 operands must use different VGPR banks", VgprBank),
            ("<stdin>:40:2: error: invalid instruction", InvalidInstruction),
            ("<stdin>:9:31: error: only one unique literal operand is allowed", LiteralOperand),
            ("<stdin>:88:19: error: undefined label '.LBB0_8'", UndefinedLabel),
            ("<stdin>:14:27: error: invalid operand for instruction", InvalidOperand),
        ];
        for (d, want) in cases {
            assert_eq!(names(d), vec![want], "{d}");
        }
    }

    #[test]
    fn multiple_lines_collapse_duplicates() {
        let d = "a.s:1:1: error: invalid instruction\n  foo v0\n  ^\na.s:3:1: error: invalid instruction\na.s:9:3: error: unknown directive\n";
        let got = classify_compile_error(d);
        assert_eq!(got.iter().map(|c| c.name).collect::<Vec<_>>(), vec![ErrorKind::InvalidInstruction, ErrorKind::DirectiveParsing]);
        assert_eq!(got[0].matched_diagnostic, "a.s:1:1: error: invalid instruction");
    }

    #[test]
    fn unmatched_is_other() {
        assert_eq!(names("clang: error: linker command failed"), vec![ErrorKind::Other]);
        assert_eq!(names(""), vec![ErrorKind::Other]);
        // warnings alone never pick a category
        assert_eq!(names("warning: unknown directive ignored"), vec![ErrorKind::Other]);
    }

    #[test]
    fn rule_table_validation() {
        assert!(ErrorRules::parse("bogus_kind foo").is_err());
        assert!(ErrorRules::parse("other foo").is_err());
        assert!(ErrorRules::parse("vgpr_bank (").is_err());
        assert!(ErrorRules::parse("vgpr_bank").is_err());
    }

    #[test]
    fn every_category_reachable() {
        let seen: std::collections::BTreeSet<_> = ErrorRules::builtin().rules.iter().map(|(k, _)| *k).collect();
        assert_eq!(seen.len(), ErrorKind::ALL.len() - 1);
    }
}
