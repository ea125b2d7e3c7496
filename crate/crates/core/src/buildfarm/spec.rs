use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BuildError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolchainName {
    Nvidia,
    Amd,
    OpenclNvidia,
    OpenclAmd,
    Mock,
}

impl ToolchainName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolchainName::Nvidia => "nvidia",
            ToolchainName::Amd => "amd",
            ToolchainName::OpenclNvidia => "opencl_nvidia",
            ToolchainName::OpenclAmd => "opencl_amd",
            ToolchainName::Mock => "mock",
        }
    }

    pub fn parse(s: &str) -> Option<ToolchainName> {
        [Self::Nvidia, Self::Amd, Self::OpenclNvidia, Self::OpenclAmd, Self::Mock]
            .into_iter()
            .find(|n| n.as_str() == s)
    }
}

impl fmt::Display for ToolchainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Translate,
    Compile,
    Disassemble,
    Link,
    Run,
    /// Single-pass build used when device embedding is not deferred.
    Build,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Translate, Stage::Compile, Stage::Disassemble, Stage::Link, Stage::Run, Stage::Build];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Translate => "translate",
            Stage::Compile => "compile",
            Stage::Disassemble => "disassemble",
            Stage::Link => "link",
            Stage::Run => "run",
            Stage::Build => "build",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    HostAsm,
    DeviceAsm,
    Object,
    Executable,
    Ptx,
    LlvmIr,
    /// Combined host + device listing that asmproc splits.
    MixedDump,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 7] = [
        ArtifactKind::HostAsm,
        ArtifactKind::DeviceAsm,
        ArtifactKind::Object,
        ArtifactKind::Executable,
        ArtifactKind::Ptx,
        ArtifactKind::LlvmIr,
        ArtifactKind::MixedDump,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::HostAsm => "host_asm",
            ArtifactKind::DeviceAsm => "device_asm",
            ArtifactKind::Object => "object",
            ArtifactKind::Executable => "executable",
            ArtifactKind::Ptx => "ptx",
            ArtifactKind::LlvmIr => "llvm_ir",
            ArtifactKind::MixedDump => "mixed_dump",
        }
    }

    /// Default file name inside a stage directory.
    pub fn file_name(self) -> &'static str {
        match self {
            ArtifactKind::HostAsm => "host.s",
            ArtifactKind::DeviceAsm => "device.s",
            ArtifactKind::Object => "host.o",
            ArtifactKind::Executable => "a.out",
            ArtifactKind::Ptx => "kernel.ptx",
            ArtifactKind::LlvmIr => "kernel.ll",
            ArtifactKind::MixedDump => "dump.txt",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One command line. `argv` entries may contain `{slot}` references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandTemplate {
    pub argv: Vec<String>,
    /// Redirect stdout to this (templated) path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdout: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub append: bool,
}

impl CommandTemplate {
    pub fn new<S: AsRef<str>>(argv: &[S]) -> CommandTemplate {
        CommandTemplate { argv: argv.iter().map(|s| s.as_ref().to_string()).collect(), stdout: None, append: false }
    }

    pub fn to_file(mut self, path: &str) -> CommandTemplate {
        self.stdout = Some(path.to_string());
        self
    }

    pub fn appending(mut self) -> CommandTemplate {
        self.append = true;
        self
    }

    pub fn is_mock(&self) -> bool {
        self.argv.first().is_some_and(|a| a == MOCK_PROGRAM)
    }
}

/// argv[0] that routes a command to the in-process mock toolchain.
pub const MOCK_PROGRAM: &str = "@mock";

/// Slot names every template may use besides the artifact kinds.
pub const BASE_SLOTS: &[&str] = &["input", "output", "arch", "stage_dir", "include_dir", "device_input", "host_input"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainSpec {
    pub name: ToolchainName,
    /// Vendor flavour a mock spec stands in for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulates: Option<ToolchainName>,
    pub commands: BTreeMap<Stage, Vec<CommandTemplate>>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    pub target_arch: String,
}

fn c(argv: &[&str]) -> CommandTemplate {
    CommandTemplate::new(argv)
}

impl ToolchainSpec {
    /// Flavour this spec behaves as (itself unless it is a mock).
    pub fn flavour(&self) -> ToolchainName {
        match self.name {
            ToolchainName::Mock => self.emulates.unwrap_or(ToolchainName::Nvidia),
            n => n,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.name == ToolchainName::Mock
    }

    pub fn stage(&self, stage: Stage) -> Option<&[CommandTemplate]> {
        self.commands.get(&stage).map(Vec::as_slice).filter(|c| !c.is_empty())
    }

    /// Checks every slot reference against the known slot names.
    pub fn validate(&self) -> Result<(), BuildError> {
        for (stage, cmds) in &self.commands {
            for cmd in cmds {
                if cmd.argv.is_empty() {
                    return Err(BuildError::Spec(format!("{stage}: empty argv")));
                }
                for arg in cmd.argv.iter().chain(cmd.stdout.iter()) {
                    for slot in slot_names(arg) {
                        let known = BASE_SLOTS.contains(&slot)
                            || ArtifactKind::ALL.iter().any(|k| k.as_str() == slot)
                            || slot.strip_prefix("tmp:").is_some_and(|n| !n.is_empty() && !n.contains('/'));
                        if !known {
                            return Err(BuildError::Spec(format!("{stage}: unknown slot `{{{slot}}}` in `{arg}`")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn for_name(name: ToolchainName, target_arch: &str) -> ToolchainSpec {
        match name {
            ToolchainName::Nvidia => ToolchainSpec::nvidia(target_arch),
            ToolchainName::Amd => ToolchainSpec::amd(target_arch),
            ToolchainName::OpenclNvidia => ToolchainSpec::opencl_nvidia(target_arch),
            ToolchainName::OpenclAmd => ToolchainSpec::opencl_amd(target_arch),
            ToolchainName::Mock => ToolchainSpec::mock(ToolchainName::Nvidia, target_arch),
        }
    }

    /// nvcc + cuobjdump. The mixed dump is host assembly followed by SASS.
    pub fn nvidia(arch: &str) -> ToolchainSpec {
        let commands = BTreeMap::from([
            (
                Stage::Compile,
                vec![c(&["nvcc", "-Os", "-Xcompiler", "-Os", "-arch={arch}", "{input}", "-o", "{executable}"])],
            ),
            (
                Stage::Disassemble,
                vec![
                    c(&["nvcc", "-Os", "-arch={arch}", "-cuda", "{input}", "-o", "{tmp:host.cpp}"]),
                    c(&["g++", "-Os", "-S", "-x", "c++", "{tmp:host.cpp}", "-o", "{host_asm}"]),
                    c(&["cat", "{host_asm}"]).to_file("{mixed_dump}"),
                    c(&["cuobjdump", "-sass", "{executable}"]).to_file("{mixed_dump}").appending(),
                ],
            ),
            (Stage::Run, vec![c(&["{executable}"])]),
        ]);
        ToolchainSpec { name: ToolchainName::Nvidia, emulates: None, commands, env: BTreeMap::new(), target_arch: arch.into() }
    }

    /// hipify + hipcc with deferred device-binary insertion.
    pub fn amd(arch: &str) -> ToolchainSpec {
        let commands = BTreeMap::from([
            (Stage::Translate, vec![c(&["hipify-perl", "{input}"]).to_file("{output}")]),
            (
                Stage::Compile,
                vec![
                    c(&["hipcc", "-Os", "--offload-arch={arch}", "--cuda-device-only", "-S", "{input}", "-o", "{device_asm}"]),
                    c(&["hipcc", "-Os", "--cuda-host-only", "-S", "{input}", "-o", "{host_asm}"]),
                ],
            ),
            (
                Stage::Link,
                vec![
                    c(&[
                        "clang", "-cc1as", "-triple", "amdgcn-amd-amdhsa", "-target-cpu", "{arch}", "-filetype=obj",
                        "{device_asm}", "-o", "{tmp:device.o}",
                    ]),
                    c(&["ld.lld", "-shared", "{tmp:device.o}", "-o", "{tmp:device.co}"]),
                    c(&[
                        "clang-offload-bundler", "-type=o", "-targets=host-x86_64-unknown-linux-gnu,hipv4-amdgcn-amd-amdhsa--{arch}",
                        "-input=/dev/null", "-input={tmp:device.co}", "-output={tmp:device.hipfb}",
                    ]),
                    c(&["clang", "-c", "-x", "assembler", "{host_asm}", "-o", "{object}"]),
                    c(&["objcopy", "--update-section", ".hip_fatbin={tmp:device.hipfb}", "{object}"]),
                    c(&["hipcc", "{object}", "-o", "{executable}"]),
                ],
            ),
            (Stage::Build, vec![c(&["hipcc", "-Os", "--offload-arch={arch}", "{input}", "-o", "{executable}"])]),
            (Stage::Run, vec![c(&["{executable}"])]),
        ]);
        ToolchainSpec { name: ToolchainName::Amd, emulates: None, commands, env: BTreeMap::new(), target_arch: arch.into() }
    }

    /// clBuildProgram via the ocl-ptx-dump helper, then ptxas + cuobjdump.
    pub fn opencl_nvidia(arch: &str) -> ToolchainSpec {
        let commands = BTreeMap::from([
            (
                Stage::Compile,
                vec![
                    c(&["ocl-ptx-dump", "{input}", "{ptx}"]),
                    c(&["ptxas", "-O3", "-arch={arch}", "{ptx}", "-o", "{object}"]),
                ],
            ),
            (Stage::Disassemble, vec![c(&["cuobjdump", "-sass", "{object}"]).to_file("{device_asm}")]),
        ]);
        ToolchainSpec {
            name: ToolchainName::OpenclNvidia,
            emulates: None,
            commands,
            env: BTreeMap::new(),
            target_arch: arch.into(),
        }
    }

    /// clang direct OpenCL compile, keeping the LLVM IR.
    pub fn opencl_amd(arch: &str) -> ToolchainSpec {
        let base = ["clang", "-x", "cl", "-cl-std=CL2.0", "-target", "amdgcn-amd-amdhsa", "-mcpu={arch}", "-Os"];
        let with = |extra: &[&str]| {
            let mut v: Vec<&str> = base.to_vec();
            v.extend_from_slice(extra);
            c(&v)
        };
        let commands = BTreeMap::from([(
            Stage::Compile,
            vec![
                with(&["-S", "-emit-llvm", "{input}", "-o", "{llvm_ir}"]),
                with(&["-S", "{input}", "-o", "{device_asm}"]),
            ],
        )]);
        ToolchainSpec { name: ToolchainName::OpenclAmd, emulates: None, commands, env: BTreeMap::new(), target_arch: arch.into() }
    }

    /// In-process stand-in for `emulates`; every stage is defined.
    pub fn mock(emulates: ToolchainName, arch: &str) -> ToolchainSpec {
        let m = |args: &[&str]| {
            let mut v = vec![MOCK_PROGRAM];
            v.extend_from_slice(args);
            c(&v)
        };
        let emulates = if emulates == ToolchainName::Mock { ToolchainName::Nvidia } else { emulates };
        let (compile, disassemble, link, build) = match emulates {
            ToolchainName::Amd => (
                vec![
                    m(&["hipcc-device", "in={input}", "out={device_asm}", "arch={arch}"]),
                    m(&["hipcc-host", "in={input}", "out={host_asm}"]),
                ],
                vec![m(&["cat", "in={device_asm}"]).to_file("{mixed_dump}")],
                vec![m(&["recombine", "device={device_asm}", "host={host_asm}", "exe={executable}", "obj={object}"])],
                vec![m(&["hipcc", "in={input}", "exe={executable}", "arch={arch}"])],
            ),
            ToolchainName::OpenclNvidia => (
                vec![
                    m(&["ocl-ptx-dump", "in={input}", "out={ptx}"]),
                    m(&["ptxas", "in={ptx}", "out={object}", "arch={arch}"]),
                ],
                vec![m(&["cuobjdump-object", "in={object}"]).to_file("{device_asm}")],
                vec![m(&["cat", "in={object}"]).to_file("{executable}")],
                vec![m(&["ptxas", "in={input}", "out={object}", "arch={arch}"])],
            ),
            ToolchainName::OpenclAmd => (
                vec![m(&["clang-ocl", "in={input}", "ll={llvm_ir}", "out={device_asm}", "arch={arch}"])],
                vec![m(&["cat", "in={device_asm}"]).to_file("{mixed_dump}")],
                vec![m(&["cat", "in={device_asm}"]).to_file("{executable}")],
                vec![m(&["clang-ocl", "in={input}", "ll={llvm_ir}", "out={device_asm}", "arch={arch}"])],
            ),
            _ => (
                vec![m(&["nvcc", "in={input}", "exe={executable}", "arch={arch}"])],
                vec![m(&["cuobjdump", "in={input}", "exe={executable}", "arch={arch}"]).to_file("{mixed_dump}")],
                vec![m(&["cat", "in={executable}"]).to_file("{output}")],
                vec![m(&["nvcc", "in={input}", "exe={executable}", "arch={arch}"])],
            ),
        };
        let commands = BTreeMap::from([
            (Stage::Translate, vec![m(&["hipify", "in={input}"]).to_file("{output}")]),
            (Stage::Compile, compile),
            (Stage::Disassemble, disassemble),
            (Stage::Link, link),
            (Stage::Build, build),
            (Stage::Run, vec![m(&["run", "exe={executable}"])]),
        ]);
        ToolchainSpec { name: ToolchainName::Mock, emulates: Some(emulates), commands, env: BTreeMap::new(), target_arch: arch.into() }
    }
}

/// `{name}` references in a template string.
pub fn slot_names(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Slot values for one stage invocation.
#[derive(Debug, Clone, Default)]
pub struct Slots {
    values: BTreeMap<String, String>,
    stage_dir: String,
}

impl Slots {
    pub fn new(stage_dir: &Path) -> Slots {
        let dir = stage_dir.to_string_lossy().into_owned();
        let mut values = BTreeMap::new();
        values.insert("stage_dir".to_string(), dir.clone());
        Slots { values, stage_dir: dir }
    }

    pub fn set(&mut self, name: &str, value: impl AsRef<Path>) -> &mut Slots {
        self.values.insert(name.to_string(), value.as_ref().to_string_lossy().into_owned());
        self
    }

    pub fn set_text(&mut self, name: &str, value: &str) -> &mut Slots {
        self.values.insert(name.to_string(), value.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    /// Substitutes every slot. `None` means the argument should be dropped
    /// because it consisted of a single slot that is set but empty.
    pub fn fill(&self, template: &str) -> Result<Option<String>, BuildError> {
        let names = slot_names(template);
        if names.len() == 1 && template == format!("{{{}}}", names[0]) && self.lookup(names[0])?.is_empty() {
            return Ok(None);
        }
        let mut out = template.to_string();
        for name in names {
            let v = self.lookup(name)?;
            out = out.replacen(&format!("{{{name}}}"), &v, 1);
        }
        Ok(Some(out))
    }

    fn lookup(&self, name: &str) -> Result<String, BuildError> {
        if let Some(tmp) = name.strip_prefix("tmp:") {
            return Ok(format!("{}/{}", self.stage_dir, tmp));
        }
        self.values.get(name).cloned().ok_or_else(|| BuildError::Spec(format!("slot `{{{name}}}` has no value")))
    }
}
