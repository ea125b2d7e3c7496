use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{IngestError, Lang, SourceUnit};
use crate::text::code_only;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    TooLong,
    TooShort,
    Boilerplate,
    NoKernel,
    Duplicate,
    Ok,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    pub fn of(reason: FilterReason) -> FilterVerdict {
        FilterVerdict { keep: reason == FilterReason::Ok, reason }
    }
}

/// Filtering thresholds and boilerplate patterns.
///
/// `max_lines` rejects strictly longer files, `min_lines` strictly shorter ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_lines: usize,
    pub min_lines: usize,
    /// When false, blank lines do not count toward `min_lines`.
    pub count_blank_lines: bool,
    /// Regexes matched against the whole file text.
    pub boilerplate_patterns: Vec<String>,
    /// Reject files whose only function definition is `main` and that carry no device code.
    pub reject_main_only: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_lines: 7000,
            min_lines: 10,
            count_blank_lines: true,
            boilerplate_patterns: vec![r"(?i)hello,?\s*world".to_string()],
            reject_main_only: true,
        }
    }
}

impl FilterConfig {
    pub fn compile(&self) -> Result<FilterRules, IngestError> {
        let patterns = self
            .boilerplate_patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|source| IngestError::Pattern { pattern: p.clone(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FilterRules { config: self.clone(), patterns })
    }
}

/// A [`FilterConfig`] with its patterns compiled.
#[derive(Debug, Clone)]
pub struct FilterRules {
    config: FilterConfig,
    patterns: Vec<Regex>,
}

impl FilterRules {
    pub fn config(&self) -> &FilterConfig {
        &self.config
    }
}

fn function_def_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b([A-Za-z_]\w*)\s*\([^;{}()]*(?:\([^()]*\)[^;{}()]*)*\)\s*(?:const\s*)?\{")
            .expect("static regex")
    })
}

fn global_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b__global__\b").expect("static regex"))
}

fn device_code_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(__global__|__device__|__kernel)\b").expect("static regex"))
}

const NOT_FUNCTIONS: &[&str] = &["if", "for", "while", "switch", "catch", "return", "sizeof", "do"];

/// Names of brace-opened function-like definitions in comment- and literal-free code.
fn defined_functions(code: &str) -> Vec<&str> {
    function_def_re()
        .captures_iter(code)
        .filter_map(|c| c.get(1).map(|m| m.as_str()))
        .filter(|name| !NOT_FUNCTIONS.contains(name))
        .collect()
}

/// `__global__` outside comments and string literals.
pub fn has_kernel_definition(text: &str) -> bool {
    global_re().is_match(&code_only(text))
}

pub fn filter_source(unit: &SourceUnit, rules: &FilterRules) -> FilterVerdict {
    let cfg = &rules.config;
    if unit.line_count > cfg.max_lines {
        return FilterVerdict::of(FilterReason::TooLong);
    }
    let short_count = if cfg.count_blank_lines {
        unit.line_count
    } else {
        unit.text.lines().filter(|l| !l.trim().is_empty()).count()
    };
    if short_count < cfg.min_lines {
        return FilterVerdict::of(FilterReason::TooShort);
    }
    if rules.patterns.iter().any(|re| re.is_match(&unit.text)) {
        return FilterVerdict::of(FilterReason::Boilerplate);
    }
    let code = code_only(&unit.text);
    if cfg.reject_main_only && !device_code_re().is_match(&code) {
        let funcs = defined_functions(&code);
        if !funcs.is_empty() && funcs.iter().all(|f| *f == "main") {
            return FilterVerdict::of(FilterReason::Boilerplate);
        }
    }
    if unit.lang == Lang::Cuda && !global_re().is_match(&code) {
        return FilterVerdict::of(FilterReason::NoKernel);
    }
    FilterVerdict::of(FilterReason::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Origin;

    fn cuda(text: &str) -> SourceUnit {
        SourceUnit::new(Origin::Stack, Lang::Cuda, text, "k.cu", None, None)
    }

    fn padded(body: &str, total_lines: usize) -> String {
        let mut s = body.to_string();
        let mut n = body.lines().count();
        while n < total_lines {
            s.push_str("// pad\n");
            n += 1;
        }
        s
    }

    fn rules() -> FilterRules {
        FilterConfig::default().compile().unwrap()
    }

    const KERNEL: &str = "__global__ void k(float* x) {\n  x[threadIdx.x] *= 2.0f;\n}\n";

    #[test]
    fn too_long_file() {
        let v = filter_source(&cuda(&padded(KERNEL, 8000)), &rules());
        assert_eq!(v, FilterVerdict { keep: false, reason: FilterReason::TooLong });
    }

    #[test]
    fn line_thresholds_are_strict() {
        assert!(filter_source(&cuda(&padded(KERNEL, 7000)), &rules()).keep);
        assert_eq!(filter_source(&cuda(&padded(KERNEL, 7001)), &rules()).reason, FilterReason::TooLong);
        assert!(filter_source(&cuda(&padded(KERNEL, 10)), &rules()).keep);
        assert_eq!(filter_source(&cuda(&padded(KERNEL, 9)), &rules()).reason, FilterReason::TooShort);
    }

    #[test]
    fn fifty_line_kernel_passes() {
        let v = filter_source(&cuda(&padded("__global__ void k() {}\n", 50)), &rules());
        assert_eq!(v, FilterVerdict { keep: true, reason: FilterReason::Ok });
    }

    #[test]
    fn hello_world_is_boilerplate() {
        let text = padded("#include <cstdio>\n__global__ void k() { printf(\"Hello, World\\n\"); }\n", 12);
        assert_eq!(filter_source(&cuda(&text), &rules()).reason, FilterReason::Boilerplate);
    }

    #[test]
    fn main_only_host_file_is_boilerplate() {
        let text = padded("#include <cstdio>\nint main() {\n  int a = 1;\n  return a;\n}\n", 12);
        assert_eq!(filter_source(&cuda(&text), &rules()).reason, FilterReason::Boilerplate);
    }

    #[test]
    fn kernel_marker_in_comment_does_not_count() {
        let text = padded(
            "// __global__ kernels live elsewhere\nstatic int helper(int a) { return a; }\nint main() { return helper(1); }\n",
            12,
        );
        assert_eq!(filter_source(&cuda(&text), &rules()).reason, FilterReason::NoKernel);
    }

    #[test]
    fn blank_lines_policy() {
        let mut text = String::from(KERNEL);
        for _ in 0..8 {
            text.push('\n');
        }
        let unit = cuda(&text);
        assert!(unit.line_count >= 10);
        assert!(filter_source(&unit, &rules()).keep);
        let strict = FilterConfig { count_blank_lines: false, ..FilterConfig::default() }.compile().unwrap();
        assert_eq!(filter_source(&unit, &strict).reason, FilterReason::TooShort);
    }

    #[test]
    fn opencl_needs_no_global_marker() {
        let text = padded("__kernel void k(__global float* x) { x[0] = 1; }\n", 12);
        let unit = SourceUnit::new(Origin::Opencl, Lang::Opencl, text, "k.cl", None, None);
        assert!(filter_source(&unit, &rules()).keep);
    }

    #[test]
    fn bad_pattern_is_reported() {
        let cfg = FilterConfig { boilerplate_patterns: vec!["(".into()], ..FilterConfig::default() };
        assert!(matches!(cfg.compile(), Err(IngestError::Pattern { .. })));
    }
}
