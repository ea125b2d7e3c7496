use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::analyze::{DomainLabel, KeywordTable};
use crate::asmproc::{AssemblyArtifact, Isa, Tier, Vendor};
use crate::ingest::{Origin, SourceUnit};
use crate::text::normalized_hash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchTags {
    pub nvidia_arch: String,
    pub amd_arch: String,
}

/// One aligned sample. Field order is the on-disk JSONL order.
///
/// OpenCL records carry no CUDA/HIP sources and no host assembly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub cuda_src: Option<SourceUnit>,
    pub hip_src: Option<SourceUnit>,
    pub sass: AssemblyArtifact,
    pub rdna3: AssemblyArtifact,
    pub x86_nvidia: Option<AssemblyArtifact>,
    pub x86_amd: Option<AssemblyArtifact>,
    pub domain: DomainLabel,
    pub origin: Origin,
    pub arch: ArchTags,
}

/// Content key for overlap checks: the normalised CUDA source, or the
/// device assembly for source-less records.
pub fn record_hash(r: &CorpusRecord) -> String {
    match &r.cuda_src {
        Some(src) => normalized_hash(&src.text),
        None => normalized_hash(&r.sass.text),
    }
}

/// One vendor's compile result for a sample.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VendorSide {
    pub ok: bool,
    pub host: Option<AssemblyArtifact>,
    pub device: Option<AssemblyArtifact>,
}

/// Everything the earlier stages produced for one sample id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactBundle {
    pub id: String,
    pub origin: Origin,
    pub cuda_src: Option<SourceUnit>,
    pub hip_src: Option<SourceUnit>,
    /// The OpenCL kernel, used only for domain labelling.
    pub kernel_src: Option<SourceUnit>,
    pub translate_ok: bool,
    pub nvidia: Option<VendorSide>,
    pub amd: Option<VendorSide>,
    pub arch: ArchTags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NvidiaFailed,
    AmdFailed,
    TranslateFailed,
    MissingArtifact,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NvidiaFailed => "nvidia_failed",
            DropReason::AmdFailed => "amd_failed",
            DropReason::TranslateFailed => "translate_failed",
            DropReason::MissingArtifact => "missing_artifact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignOutcome {
    Record(Box<CorpusRecord>),
    Dropped(DropReason),
}

fn present(a: &Option<AssemblyArtifact>, vendor: Vendor, tier: Tier) -> Option<AssemblyArtifact> {
    a.as_ref().filter(|a| a.vendor == vendor && a.tier == tier && !a.text.trim().is_empty()).cloned()
}

/// Pairs a sample's artifacts into a record, or says why it cannot be paired.
///
/// Checks run in pipeline order: translation, then Nvidia, then AMD, then
/// completeness of sources and assemblies.
pub fn align_record(b: &ArtifactBundle, keywords: &KeywordTable) -> AlignOutcome {
    use AlignOutcome::Dropped;
    let opencl = b.origin == Origin::Opencl;
    if !opencl && !b.translate_ok {
        return Dropped(DropReason::TranslateFailed);
    }
    let (Some(nv), Some(amd)) = (&b.nvidia, &b.amd) else {
        return Dropped(DropReason::MissingArtifact);
    };
    if !nv.ok {
        return Dropped(DropReason::NvidiaFailed);
    }
    if !amd.ok {
        return Dropped(DropReason::AmdFailed);
    }
    let Some(sass) = present(&nv.device, Vendor::Nvidia, Tier::Device) else {
        return Dropped(DropReason::MissingArtifact);
    };
    let Some(rdna3) = present(&amd.device, Vendor::Amd, Tier::Device) else {
        return Dropped(DropReason::MissingArtifact);
    };
    if sass.isa != Isa::Sass {
        return Dropped(DropReason::MissingArtifact);
    }
    let x86_nvidia = present(&nv.host, Vendor::Nvidia, Tier::Host);
    let x86_amd = present(&amd.host, Vendor::Amd, Tier::Host);
    let (cuda_src, hip_src, domain_text) = if opencl {
        (None, None, b.kernel_src.as_ref().map(|k| k.text.as_str()).unwrap_or(""))
    } else {
        let (Some(cuda), Some(hip)) = (&b.cuda_src, &b.hip_src) else {
            return Dropped(DropReason::MissingArtifact);
        };
        if x86_nvidia.is_none() || x86_amd.is_none() {
            return Dropped(DropReason::MissingArtifact);
        }
        // a HIP file from another lineage is not this sample's translation
        if cuda.origin != hip.origin || cuda.repo_id != hip.repo_id {
            return Dropped(DropReason::MissingArtifact);
        }
        (Some(cuda.clone()), Some(hip.clone()), cuda.text.as_str())
    };
    AlignOutcome::Record(Box::new(CorpusRecord {
        id: b.id.clone(),
        cuda_src,
        hip_src,
        sass,
        rdna3,
        x86_nvidia,
        x86_amd,
        domain: keywords.classify(domain_text),
        origin: b.origin,
        arch: b.arch.clone(),
    }))
}

/// Writes one JSON object per line and returns the count.
pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<usize, CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(items.len())
}

/// Reads a JSONL file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| CorpusError::Jsonl {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn emit_jsonl(records: &[CorpusRecord], path: &Path) -> Result<usize, CorpusError> {
    write_jsonl(records, path)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::analyze::Domain;
    use crate::ingest::Lang;

    pub(crate) fn asm(vendor: Vendor, tier: Tier, isa: Isa, text: &str) -> AssemblyArtifact {
        AssemblyArtifact::new(vendor, tier, isa, text).unwrap()
    }

    pub(crate) fn bundle(text: &str) -> ArtifactBundle {
        let cuda = SourceUnit::new(Origin::Stack, Lang::Cuda, text, "k.cu", Some("o/r".into()), None);
        let hip = cuda.derive(Lang::Hip, text.replace("cuda", "hip"), "k.hip");
        ArtifactBundle {
            id: cuda.id.clone(),
            origin: Origin::Stack,
            cuda_src: Some(cuda),
            hip_src: Some(hip),
            kernel_src: None,
            translate_ok: true,
            nvidia: Some(VendorSide {
                ok: true,
                host: Some(asm(Vendor::Nvidia, Tier::Host, Isa::X86, "main:\n\tcallq\tcudaMalloc\n\tretq\n")),
                device: Some(asm(Vendor::Nvidia, Tier::Device, Isa::Sass, "\tFunction : k\n\tMOV R1, c[0x0][0x28] ;\n\tEXIT ;\n")),
            }),
            amd: Some(VendorSide {
                ok: true,
                host: Some(asm(Vendor::Amd, Tier::Host, Isa::X86, "main:\n\tcallq\thipMalloc\n\tretq\n")),
                device: Some(asm(Vendor::Amd, Tier::Device, Isa::Rdna3, "k:\n\ts_load_b64 s[0:1], s[0:1], 0x0\n\ts_endpgm\n")),
            }),
            arch: ArchTags { nvidia_arch: "sm_80".into(), amd_arch: "gfx1100".into() },
        }
    }

    pub(crate) fn record(text: &str) -> CorpusRecord {
        match align_record(&bundle(text), KeywordTable::builtin()) {
            AlignOutcome::Record(r) => *r,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complete_bundle_aligns() {
        let r = record("__global__ void neural_gradient(float *w) { w[0] = 0; }\n");
        assert_eq!(r.domain.name, Domain::MachineLearning);
        assert!(r.x86_nvidia.is_some() && r.x86_amd.is_some());
        assert_eq!(r.sass.opcodes, vec!["MOV", "EXIT"]);
    }

    #[test]
    fn drop_reasons() {
        let b = bundle("__global__ void k() {}\n");
        let mut amd_fail = b.clone();
        amd_fail.amd.as_mut().unwrap().ok = false;
        assert_eq!(align_record(&amd_fail, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::AmdFailed));
        let mut nv_fail = b.clone();
        nv_fail.nvidia.as_mut().unwrap().ok = false;
        assert_eq!(align_record(&nv_fail, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::NvidiaFailed));
        let mut tr = b.clone();
        tr.translate_ok = false;
        tr.amd = None;
        assert_eq!(align_record(&tr, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::TranslateFailed));
        let mut no_host = b.clone();
        no_host.amd.as_mut().unwrap().host = None;
        assert_eq!(align_record(&no_host, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::MissingArtifact));
        let mut empty_dev = b.clone();
        empty_dev.nvidia.as_mut().unwrap().device = Some(asm(Vendor::Nvidia, Tier::Device, Isa::Sass, "  \n"));
        assert_eq!(align_record(&empty_dev, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::MissingArtifact));
        let mut foreign = b;
        let other = SourceUnit::new(Origin::Stack, Lang::Hip, "x", "k.hip", Some("else/where".into()), None);
        foreign.hip_src = Some(other);
        assert_eq!(align_record(&foreign, KeywordTable::builtin()), AlignOutcome::Dropped(DropReason::MissingArtifact));
    }

    #[test]
    fn opencl_variant_has_null_sources() {
        let mut b = bundle("");
        b.origin = Origin::Opencl;
        b.cuda_src = None;
        b.hip_src = None;
        b.translate_ok = false;
        b.kernel_src = Some(SourceUnit::new(Origin::Opencl, Lang::Opencl, "__kernel void sha_hash_encrypt() {}", "k.cl", None, None));
        for side in [b.nvidia.as_mut().unwrap(), b.amd.as_mut().unwrap()] {
            side.host = None;
        }
        let AlignOutcome::Record(r) = align_record(&b, KeywordTable::builtin()) else { panic!() };
        assert!(r.cuda_src.is_none() && r.hip_src.is_none() && r.x86_amd.is_none());
        assert_eq!(r.origin, Origin::Opencl);
        assert_eq!(r.domain.name, Domain::Cryptography);
        let json = serde_json::to_value(&*r).unwrap();
        assert!(json["cuda_src"].is_null());
    }

    #[test]
    fn jsonl_field_order_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let recs: Vec<_> = (0..3).map(|i| record(&format!("__global__ void k{i}() {{}}\n"))).collect();
        assert_eq!(emit_jsonl(&recs, &p).unwrap(), 3);
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let first = text.lines().next().unwrap();
        let keys = ["\"id\"", "\"cuda_src\"", "\"hip_src\"", "\"sass\"", "\"rdna3\"", "\"x86_nvidia\"", "\"x86_amd\"", "\"domain\"", "\"origin\"", "\"arch\""];
        // each top-level key must follow the previous one
        let mut at = 0;
        for k in keys {
            at += first[at..].find(k).unwrap_or_else(|| panic!("{k} out of order"));
        }
        assert!(first.starts_with("{\"id\""));
        let back: Vec<CorpusRecord> = read_jsonl(&p).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn empty_list_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        assert_eq!(emit_jsonl(&[], &p).unwrap(), 0);
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);
        assert!(read_jsonl::<CorpusRecord>(&p).unwrap().is_empty());
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.jsonl");
        std::fs::write(&p, "\n{\"id\": 1}\n").unwrap();
        match read_jsonl::<CorpusRecord>(&p) {
            Err(CorpusError::Jsonl { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
