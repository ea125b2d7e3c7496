use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AsmError, AssemblyArtifact, Isa, Tier, Vendor};

/// Marker patterns for separating a mixed Nvidia dump.
///
/// A device section opens at a `device_start` line and runs to the next
/// `device_start` or `device_end` line (or end of input). `excluded_regions`
/// are dropped entirely (embedded fat binaries, PTX listings); `banner`
/// lines are dropped wherever they appear. Everything else is host assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitMarkers {
    pub device_start: Vec<String>,
    pub device_end: Vec<String>,
    pub banner: Vec<String>,
    /// `(start, end)` pairs; the end line is excluded too.
    pub excluded_regions: Vec<(String, String)>,
}

impl Default for SplitMarkers {
    fn default() -> Self {
        SplitMarkers {
            device_start: vec![
                r"^\s*Function\s*:\s*\S+".into(),
                r"^\s*//-+\s*\.text\.\S+\s*-+\s*$".into(),
            ],
            device_end: vec![
                r"^\s*\.{5,}\s*$".into(),
                r"^\s*Fatbin (elf|ptx) code:".into(),
                r"^\s*//-+\s*\.(nv\.|rel|symtab|shstrtab|strtab)\S*\s*-+\s*$".into(),
            ],
            banner: vec![
                r"^\s*$".into(),
                r"^\s*Fatbin (elf|ptx) code:\s*$".into(),
                r"^\s*=+\s*$".into(),
                r"^\s*(arch|code version|host|compile_size|identifier|ptxasOptions)\s*=".into(),
                r"^\s*code for sm_\w+\s*$".into(),
                r"^\s*\.headerflags\b".into(),
                r"^\s*\.{5,}\s*$".into(),
            ],
            excluded_regions: vec![
                (r"^\s*\.section\s+\.?nv_fatbin".into(), r"^\s*\.(section|text|data|bss)\b".into()),
                (r"^\s*Fatbin ptx code:".into(), r"^\s*Fatbin elf code:".into()),
            ],
        }
    }
}

fn compile_all(patterns: &[String]) -> Result<Vec<Regex>, AsmError> {
    patterns
        .iter()
        .map(|p| Regex::new(p).map_err(|source| AsmError::Pattern { pattern: p.clone(), source }))
        .collect()
}

/// Compiled [`SplitMarkers`].
#[derive(Debug, Clone)]
pub struct Splitter {
    device_start: Vec<Regex>,
    device_end: Vec<Regex>,
    banner: Vec<Regex>,
    excluded: Vec<(Regex, Regex)>,
}

impl Splitter {
    pub fn new(markers: &SplitMarkers) -> Result<Splitter, AsmError> {
        let starts: Vec<String> = markers.excluded_regions.iter().map(|(s, _)| s.clone()).collect();
        let ends: Vec<String> = markers.excluded_regions.iter().map(|(_, e)| e.clone()).collect();
        Ok(Splitter {
            device_start: compile_all(&markers.device_start)?,
            device_end: compile_all(&markers.device_end)?,
            banner: compile_all(&markers.banner)?,
            excluded: compile_all(&starts)?.into_iter().zip(compile_all(&ends)?).collect(),
        })
    }

    pub fn split(&self, raw: &str) -> Result<SplitDump, AsmError> {
        let any = |set: &[Regex], line: &str| set.iter().any(|r| r.is_match(line));
        let mut host_lines = Vec::new();
        let mut device_lines = Vec::new();
        let mut in_device = false;
        let mut excluded: Option<usize> = None;
        let mut saw_device = false;
        let lines: Vec<&str> = raw.lines().collect();
        for (idx, line) in lines.iter().enumerate() {
            if let Some(r) = excluded {
                if self.excluded[r].1.is_match(line) {
                    excluded = None;
                    // the closing line may itself open a new region or section
                } else {
                    continue;
                }
            }
            if let Some(r) = self.excluded.iter().position(|(s, _)| s.is_match(line)) {
                excluded = Some(r);
                in_device = false;
                continue;
            }
            if any(&self.device_start, line) {
                in_device = true;
                saw_device = true;
                device_lines.push(idx);
                continue;
            }
            if in_device && any(&self.device_end, line) {
                in_device = false;
                continue;
            }
            if any(&self.banner, line) {
                continue;
            }
            if in_device {
                device_lines.push(idx);
            } else {
                host_lines.push(idx);
            }
        }
        if !saw_device {
            return Err(AsmError::NoDeviceSection);
        }
        let join = |idxs: &[usize]| {
            let mut s = String::new();
            for &i in idxs {
                s.push_str(lines[i]);
                s.push('\n');
            }
            s
        };
        Ok(SplitDump {
            host: AssemblyArtifact::new(Vendor::Nvidia, Tier::Host, Isa::X86, join(&host_lines))?,
            device: AssemblyArtifact::new(Vendor::Nvidia, Tier::Device, Isa::Sass, join(&device_lines))?,
            host_lines,
            device_lines,
        })
    }
}

/// Result of separating a mixed dump; line indices point into the raw input.
#[derive(Debug, Clone)]
pub struct SplitDump {
    pub host: AssemblyArtifact,
    pub device: AssemblyArtifact,
    pub host_lines: Vec<usize>,
    pub device_lines: Vec<usize>,
}

/// Splits with the default marker set.
pub fn split_nvidia_dump(raw: &str) -> Result<SplitDump, AsmError> {
    Splitter::new(&SplitMarkers::default())?.split(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn host_only_dump() {
        let raw = "\t.text\nmain:\n\tpushq %rbp\n\tretq\n";
        assert!(matches!(split_nvidia_dump(raw), Err(AsmError::NoDeviceSection)));
    }

    #[test]
    fn provenance_is_disjoint() {
        let raw = "main:\n\tpushq %rbp\n\t\tFunction : k\n\tMOV R1, R2 ;\n\t\t..........\n\tretq\n";
        let d = split_nvidia_dump(raw).unwrap();
        assert_eq!(d.device_lines, vec![2, 3]);
        assert_eq!(d.host_lines, vec![0, 1, 5]);
        let h: HashSet<_> = d.host_lines.iter().collect();
        assert!(d.device_lines.iter().all(|i| !h.contains(i)));
    }

    #[test]
    fn fatbin_blob_excluded_from_host() {
        let raw = "\t.section .nv_fatbin,\"a\"\n\t.quad 0x1234\n\t.text\nmain:\n\tretq\n\t\tFunction : k\n\tEXIT ;\n";
        let d = split_nvidia_dump(raw).unwrap();
        assert!(!d.host.text.contains("0x1234"));
        assert!(d.host.text.contains("\t.text"));
        assert_eq!(d.device.opcodes, vec!["EXIT"]);
    }
}
