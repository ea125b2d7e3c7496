use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::asmproc::SplitMarkers;
use crate::buildfarm::{MockScript, Toolchain, ToolchainName, ToolchainSpec};
use crate::evalharness::Level;
use crate::ingest::FilterConfig;

fn default_parallelism() -> usize {
    4
}

/// Everything a run needs, in one TOML file.
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub workspace: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub toolchain: ToolchainSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Directory of repository snapshots, one subdirectory per repo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repos_dir: Option<PathBuf>,
    /// `repo_id,cuda_file_count[,license]`; without it every subdirectory is a repo.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repo_limit: Option<usize>,
    pub filter: FilterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domains: Option<PathBuf>,
    pub n_per_template: usize,
    pub concurrency: usize,
    pub retry_limit: u32,
    pub backoff_ms: u64,
    pub model: String,
    pub temperature: f64,
    pub dry_run: bool,
    /// Near-duplicate threshold for generated outputs.
    pub similarity: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            templates: None,
            domains: None,
            n_per_template: 1,
            concurrency: 4,
            retry_limit: 3,
            backoff_ms: 1000,
            model: "default".into(),
            temperature: 0.7,
            dry_run: false,
            similarity: crate::synthgen::DEFAULT_SIMILARITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolchainMode {
    #[default]
    Mock,
    Native,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainSection {
    pub mode: ToolchainMode,
    pub nvidia_arch: String,
    pub amd_arch: String,
    /// Flavour name → ToolchainSpec TOML file replacing the default.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub specs: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
    pub command_timeout_secs: u64,
}

impl Default for ToolchainSection {
    fn default() -> Self {
        ToolchainSection {
            mode: ToolchainMode::Mock,
            nvidia_arch: "sm_80".into(),
            amd_arch: "gfx1100".into(),
            specs: BTreeMap::new(),
            mock_script: None,
            command_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub normalize_sass: bool,
    pub markers: SplitMarkers,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection { normalize_sass: true, markers: SplitMarkers::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub target_per_domain: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_cap: Option<usize>,
    /// Training split to keep disjoint from; defaults to the rest of the corpus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    pub run_args: Vec<String>,
    pub run_timeout_secs: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { target_per_domain: 21, total_cap: Some(369), train: None, run_args: Vec::new(), run_timeout_secs: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    pub level: Level,
    pub repetitions: usize,
    pub timeout_secs: u64,
    pub profile: bool,
    pub normalized_mode: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            candidates: None,
            level: Level::Assembly,
            repetitions: crate::evalharness::DEFAULT_REPETITIONS,
            timeout_secs: 60,
            profile: true,
            normalized_mode: false,
        }
    }
}

/// Replaces `${NAME}` with the variable's value; `$${` escapes a literal `${`.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, PipelineError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("$${") {
            out.push_str("${");
            rest = after;
        } else if let Some(after) = tail.strip_prefix("${") {
            let end = after.find('}').ok_or_else(|| PipelineError::Config("unterminated `${` in config".into()))?;
            let name = &after[..end];
            let value = lookup(name).ok_or_else(|| PipelineError::Config(format!("environment variable `{name}` is not set")))?;
            out.push_str(&value);
            rest = &after[end + 1..];
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
    match v {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        toml::Value::Table(t) => {
            for (_, item) in t.iter_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Applies `dotted.key=value`; the value is read as TOML, or as a bare string.
fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), PipelineError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("override `{key}`: `{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(PipelineError::Config("empty override key".into()))
}

impl PipelineConfig {
    /// A config with defaults everywhere except the workspace.
    pub fn new(workspace: impl Into<PathBuf>) -> PipelineConfig {
        let mut cfg = PipelineConfig::from_toml_str("workspace = \".\"\n", Path::new("."), &[], &|_| None).expect("defaults parse");
        cfg.workspace = workspace.into();
        cfg
    }

    pub fn from_toml_str(
        text: &str,
        base_dir: &Path,
        overrides: &[String],
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<PipelineConfig, PipelineError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let mut value = toml::Value::Table(table);
        interpolate_value(&mut value, env)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(value).map_err(|e| PipelineError::Field {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file with process environment interpolation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        PipelineConfig::from_toml_str(&text, base, overrides, &|k| std::env::var(k).ok())
    }

    pub fn to_toml_string(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let field = |path: &str, message: &str| Err(PipelineError::Field { path: path.into(), message: message.into() });
        if self.parallelism == 0 {
            return field("parallelism", "must be at least 1");
        }
        if self.eval.repetitions == 0 {
            return field("eval.repetitions", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.synth.similarity) {
            return field("synth.similarity", "must lie in [0, 1]");
        }
        for name in self.toolchain.specs.keys() {
            if ToolchainName::parse(name).is_none() {
                return field(&format!("toolchain.specs.{name}"), "unknown toolchain flavour");
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn workspace_dir(&self) -> PathBuf {
        self.resolve(&self.workspace)
    }

    /// The toolchain for one flavour under the configured mode.
    pub fn toolchain(&self, flavour: ToolchainName) -> Result<Toolchain, PipelineError> {
        let t = &self.toolchain;
        let arch = match flavour {
            ToolchainName::Amd | ToolchainName::OpenclAmd => &t.amd_arch,
            _ => &t.nvidia_arch,
        };
        let spec = match (t.specs.get(flavour.as_str()), t.mode) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(self.resolve(path))?;
                let spec: ToolchainSpec = toml::from_str(&text)
                    .map_err(|e| PipelineError::Field { path: format!("toolchain.specs.{}", flavour.as_str()), message: e.to_string() })?;
                spec.validate()?;
                spec
            }
            (None, ToolchainMode::Mock) => ToolchainSpec::mock(flavour, arch),
            (None, ToolchainMode::Native) => ToolchainSpec::for_name(flavour, arch),
        };
        let mut tc = Toolchain::new(spec);
        tc.command_timeout = std::time::Duration::from_secs(t.command_timeout_secs);
        if let Some(p) = &t.mock_script {
            tc = tc.with_script(MockScript::load(&self.resolve(p))?);
        }
        Ok(tc)
    }
}
