//! Host/device assembly separation, normalisation, token counting and
//! opcode extraction.

mod normalize;
mod opcodes;
mod split;
mod tokens;

pub use normalize::{normalize_sass, passthrough_rdna3};
pub use opcodes::extract_opcodes;
pub use split::{split_nvidia_dump, SplitDump, SplitMarkers, Splitter};
pub use tokens::{count_tokens, lexeme_tokens, Tokenizer, TokenizerAdapter, TokenizerMode};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::line_count;

#[derive(Debug, thiserror::Error)]
pub enum AsmError {
    #[error("dump contains no device section marker")]
    NoDeviceSection,
    #[error("external tokenizer requested but no adapter is configured")]
    AdapterMissing,
    #[error("{vendor} {tier} assembly cannot carry isa {isa}")]
    IsaMismatch { vendor: Vendor, tier: Tier, isa: Isa },
    #[error("invalid marker pattern `{pattern}`: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vendor {
    Nvidia,
    Amd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Host,
    Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isa {
    X86,
    Sass,
    Rdna3,
    Ptx,
}

macro_rules! display_snake {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(v.as_str().unwrap_or("?"))
            }
        }
    )*};
}
display_snake!(Vendor, Tier, Isa);

impl Isa {
    /// Whether `isa` is legal for the given vendor and tier.
    pub fn allowed(vendor: Vendor, tier: Tier, isa: Isa) -> bool {
        match (tier, vendor) {
            (Tier::Host, _) => isa == Isa::X86,
            (Tier::Device, Vendor::Nvidia) => matches!(isa, Isa::Sass | Isa::Ptx),
            (Tier::Device, Vendor::Amd) => isa == Isa::Rdna3,
        }
    }
}

/// One extracted assembly text with its statistics.
///
/// `opcodes` is always re-derived from `text`; it is not serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ArtifactWire")]
pub struct AssemblyArtifact {
    pub vendor: Vendor,
    pub tier: Tier,
    pub isa: Isa,
    pub text: String,
    pub token_count: usize,
    pub line_count: usize,
    #[serde(skip)]
    pub opcodes: Vec<String>,
}

#[derive(Deserialize)]
struct ArtifactWire {
    vendor: Vendor,
    tier: Tier,
    isa: Isa,
    text: String,
    token_count: usize,
    line_count: usize,
}

impl TryFrom<ArtifactWire> for AssemblyArtifact {
    type Error = AsmError;

    fn try_from(w: ArtifactWire) -> Result<Self, AsmError> {
        if !Isa::allowed(w.vendor, w.tier, w.isa) {
            return Err(AsmError::IsaMismatch { vendor: w.vendor, tier: w.tier, isa: w.isa });
        }
        let opcodes = extract_opcodes(&w.text, w.isa);
        Ok(AssemblyArtifact {
            vendor: w.vendor,
            tier: w.tier,
            isa: w.isa,
            text: w.text,
            token_count: w.token_count,
            line_count: w.line_count,
            opcodes,
        })
    }
}

/// Statistics written next to each artifact file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub vendor: Vendor,
    pub tier: Tier,
    pub isa: Isa,
    pub token_count: usize,
    pub line_count: usize,
}

impl AssemblyArtifact {
    /// Builds an artifact with lexeme token counts.
    pub fn new(vendor: Vendor, tier: Tier, isa: Isa, text: impl Into<String>) -> Result<Self, AsmError> {
        Self::with_tokenizer(vendor, tier, isa, text, &Tokenizer::lexeme())
    }

    pub fn with_tokenizer(
        vendor: Vendor,
        tier: Tier,
        isa: Isa,
        text: impl Into<String>,
        tokenizer: &Tokenizer,
    ) -> Result<Self, AsmError> {
        if !Isa::allowed(vendor, tier, isa) {
            return Err(AsmError::IsaMismatch { vendor, tier, isa });
        }
        let text = text.into();
        Ok(AssemblyArtifact {
            vendor,
            tier,
            isa,
            token_count: count_tokens(&text, tokenizer)?,
            line_count: line_count(&text),
            opcodes: extract_opcodes(&text, isa),
            text,
        })
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            vendor: self.vendor,
            tier: self.tier,
            isa: self.isa,
            token_count: self.token_count,
            line_count: self.line_count,
        }
    }

    /// Writes the text to `path` and the sidecar to `path` + `.json`.
    pub fn write_with_sidecar(&self, path: &Path) -> Result<(), AsmError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, &self.text)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        std::fs::write(side, serde_json::to_vec_pretty(&self.sidecar())?)?;
        Ok(())
    }
}
