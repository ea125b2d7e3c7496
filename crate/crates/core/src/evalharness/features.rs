use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::code_only;

/// Kernel constructs counted in the failure breakdown. Tags are not exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTag {
    ControlFlow,
    GlobalMemory,
    Synchronization,
    Atomic,
    SharedMemory,
    LocalArray,
}

impl FeatureTag {
    pub const ALL: [FeatureTag; 6] = [
        FeatureTag::ControlFlow,
        FeatureTag::GlobalMemory,
        FeatureTag::Synchronization,
        FeatureTag::Atomic,
        FeatureTag::SharedMemory,
        FeatureTag::LocalArray,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureTag::ControlFlow => "control_flow",
            FeatureTag::GlobalMemory => "global_memory",
            FeatureTag::Synchronization => "synchronization",
            FeatureTag::Atomic => "atomic",
            FeatureTag::SharedMemory => "shared_memory",
            FeatureTag::LocalArray => "local_array",
        }
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn kernel_head() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\b__global__\b[^;{]*?\b\w+\s*\(([^)]*)\)[^;{]*\{")
}

/// `(parameter list, body)` of each `__global__` definition, on literal-free code.
fn kernels(code: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    for caps in kernel_head().captures_iter(code) {
        let whole = caps.get(0).expect("match");
        let params = caps.get(1).map_or("", |m| m.as_str());
        let body_start = whole.end();
        let mut depth = 1usize;
        let mut end = code.len();
        for (i, ch) in code[body_start..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = body_start + i;
                        break;
                    }
                }
                _ => {}
            }
        }
        out.push((params, &code[body_start..end]));
    }
    out
}

fn pointer_params(params: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let ptr = re(&RE, r"\*\s*(?:const\s+)?(?:__restrict__\s+)?([A-Za-z_]\w*)\s*$");
    params.split(',').filter_map(|p| ptr.captures(p.trim()).and_then(|c| c.get(1)).map(|m| m.as_str())).collect()
}

fn dereferences(body: &str, name: &str) -> bool {
    let pattern = format!(r"\b{0}\s*\[|\*\s*\(?\s*{0}\b", regex::escape(name));
    Regex::new(&pattern).expect("escaped name").is_match(body)
}

/// Tags found in a CUDA source; comments and string contents are ignored.
pub fn feature_tags(cuda: &str) -> Vec<FeatureTag> {
    static LOOP: OnceLock<Regex> = OnceLock::new();
    static SYNC: OnceLock<Regex> = OnceLock::new();
    static ATOMIC: OnceLock<Regex> = OnceLock::new();
    static SHARED: OnceLock<Regex> = OnceLock::new();
    static LOCAL: OnceLock<Regex> = OnceLock::new();
    let code = code_only(cuda);
    let kernels = kernels(&code);
    let mut tags = Vec::new();
    if re(&LOOP, r"\b(for|while)\s*\(|\bdo\s*\{").is_match(&code) {
        tags.push(FeatureTag::ControlFlow);
    }
    if kernels.iter().any(|(params, body)| pointer_params(params).iter().any(|p| dereferences(body, p))) {
        tags.push(FeatureTag::GlobalMemory);
    }
    if re(&SYNC, r"\b(__syncthreads\w*|__syncwarp|__threadfence\w*)\s*\(").is_match(&code) {
        tags.push(FeatureTag::Synchronization);
    }
    if re(&ATOMIC, r"\batomic\w*\s*\(").is_match(&code) {
        tags.push(FeatureTag::Atomic);
    }
    if re(&SHARED, r"\b__shared__\b").is_match(&code) {
        tags.push(FeatureTag::SharedMemory);
    }
    let local = re(&LOCAL, r"(?m)^\s*(?:const\s+)?(?:unsigned\s+)?[A-Za-z_]\w*\s+[A-Za-z_]\w*\s*\[\s*\w+\s*\]\s*(?:\[\s*\w+\s*\]\s*)*[;=]");
    if kernels.iter().any(|(_, body)| body.lines().any(|l| !l.contains("__shared__") && local.is_match(l))) {
        tags.push(FeatureTag::LocalArray);
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_kernel_tags() {
        let src = r#"
__global__ void reduce(const float *in, float *out, int n) {
    __shared__ float tile[256];
    float acc[4];
    int t = threadIdx.x;
    tile[t] = in[blockIdx.x * 256 + t];
    __syncthreads();
    for (int s = 128; s > 0; s >>= 1) {
        if (t < s) tile[t] += tile[t + s];
        __syncthreads();
    }
    if (t == 0) atomicAdd(out, tile[0]);
}
"#;
        assert_eq!(feature_tags(src), FeatureTag::ALL.to_vec());
    }

    #[test]
    fn plain_kernel_is_global_memory_only() {
        let src = "__global__ void k(int *__restrict__ x) {\n  x[threadIdx.x] = 1;\n}\n";
        assert_eq!(feature_tags(src), vec![FeatureTag::GlobalMemory]);
    }

    #[test]
    fn comments_and_host_code_do_not_count() {
        let src = "// for (;;) __syncthreads() atomicAdd(\n__global__ void k(int v) { int a = v; }\nint main() { int buf[8]; return 0; }\n";
        assert!(feature_tags(src).is_empty());
    }

    #[test]
    fn dereference_through_star() {
        let src = "__global__ void k(float * p) { *p = 2.0f; }\n";
        assert_eq!(feature_tags(src), vec![FeatureTag::GlobalMemory]);
    }
}
