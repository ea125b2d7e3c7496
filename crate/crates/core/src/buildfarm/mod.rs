//! External toolchain orchestration behind [`ToolchainSpec`]: hipify,
//! vendor compiles, deferred device-code insertion and timed execution.
//!
//! Each operation owns `<work>/<sample-id>/<stage>/`. Artifacts are
//! reported relative to `<work>`.

mod exec;
mod mock;
mod run;
mod spec;

pub use exec::{Diagnostics, LaunchSpy, StepReport, Toolchain, DIAGNOSTICS_CAP, HELPER_NAME};
pub use mock::{MockEntry, MockExecutable, MockScript};
pub use run::{run_binary, ExecutionTrace, DEFAULT_TIMEOUT};
pub use spec::{slot_names, ArtifactKind, CommandTemplate, Slots, Stage, ToolchainName, ToolchainSpec, MOCK_PROGRAM};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ingest::{Lang, SourceUnit};
use crate::text::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("toolchain command not found: {0}")]
    ToolMissing(String),
    #[error("ocl-ptx-dump helper not found: {0}")]
    HelperMissing(String),
    #[error("no OpenCL platform or device: {0}")]
    NoPlatform(String),
    #[error("launch of `{0}` is not on the allowlist")]
    Disallowed(String),
    #[error("translation failed")]
    TranslateFailed { diagnostics: String },
    #[error("compilation failed")]
    CompileFailed(Box<CompileOutcome>),
    #[error("recombining host and device code failed")]
    RecombineFailed(Box<CompileOutcome>),
    #[error("expected {expected:?} source, got {got:?}")]
    WrongLang { expected: Lang, got: Lang },
    #[error("launch failed: {0}")]
    Launch(String),
    #[error("toolchain spec: {0}")]
    Spec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BuildError {
    /// True for failures of the environment rather than of the input.
    pub fn is_infrastructure(&self) -> bool {
        !matches!(
            self,
            BuildError::TranslateFailed { .. }
                | BuildError::CompileFailed(_)
                | BuildError::RecombineFailed(_)
                | BuildError::WrongLang { .. }
        )
    }

    /// Compiler diagnostics carried by an input failure.
    pub fn diagnostics(&self) -> Option<&str> {
        match self {
            BuildError::TranslateFailed { diagnostics } => Some(diagnostics),
            BuildError::CompileFailed(o) | BuildError::RecombineFailed(o) => Some(&o.diagnostics),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub ok: bool,
    pub diagnostics: String,
    #[serde(default)]
    pub diagnostics_truncated: bool,
    /// Seconds.
    pub duration: f64,
    /// Directory the artifact paths are relative to.
    pub root: PathBuf,
    pub artifacts: BTreeMap<ArtifactKind, PathBuf>,
}

impl CompileOutcome {
    pub fn path(&self, kind: ArtifactKind) -> Option<PathBuf> {
        self.artifacts.get(&kind).map(|p| self.root.join(p))
    }

    pub fn read(&self, kind: ArtifactKind) -> Result<String, BuildError> {
        let p = self.path(kind).ok_or_else(|| BuildError::Spec(format!("no {kind} artifact")))?;
        Ok(fs::read_to_string(p)?)
    }
}

fn fresh_dir(work: &Path, id: &str, stage: &str) -> Result<PathBuf, BuildError> {
    let dir = work.join(id).join(stage);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn base_slots(tc: &Toolchain, dir: &Path) -> Slots {
    let mut s = Slots::new(dir);
    s.set_text("arch", &tc.spec.target_arch).set_text("include_dir", "");
    for k in ArtifactKind::ALL {
        s.set(k.as_str(), dir.join(k.file_name()));
    }
    s
}

#[derive(Clone, Copy)]
enum Failure {
    Compile,
    Recombine,
}

struct Flow<'a> {
    tc: &'a Toolchain,
    work: &'a Path,
    dir: PathBuf,
    slots: Slots,
    started: Instant,
    diag: Diagnostics,
}

impl<'a> Flow<'a> {
    fn new(tc: &'a Toolchain, work: &'a Path, id: &str, stage: &str) -> Result<Flow<'a>, BuildError> {
        let dir = fresh_dir(work, id, stage)?;
        let slots = base_slots(tc, &dir);
        Ok(Flow { tc, work, dir, slots, started: Instant::now(), diag: Diagnostics::default() })
    }

    fn input(&mut self, name: &str, text: &str) -> Result<(), BuildError> {
        let p = self.dir.join(name);
        fs::write(&p, text)?;
        self.slots.set("input", &p);
        Ok(())
    }

    fn outcome(&self, ok: bool, requested: &[ArtifactKind]) -> CompileOutcome {
        let mut artifacts = BTreeMap::new();
        for k in ArtifactKind::ALL {
            let p = self.dir.join(k.file_name());
            if p.exists() {
                artifacts.insert(k, p.strip_prefix(self.work).unwrap_or(&p).to_path_buf());
            }
        }
        let mut diag = self.diag.clone();
        let missing: Vec<_> = requested.iter().filter(|k| !artifacts.contains_key(k)).collect();
        let ok = ok && missing.is_empty();
        if !missing.is_empty() && self.diag.text.is_empty() {
            for k in missing {
                diag.push(&format!("expected artifact {k} was not produced\n"));
            }
        }
        CompileOutcome {
            ok,
            diagnostics: diag.text,
            diagnostics_truncated: diag.truncated,
            duration: self.started.elapsed().as_secs_f64(),
            root: self.work.to_path_buf(),
            artifacts,
        }
    }

    fn run(mut self, stages: &[(Stage, Failure)], requested: &[ArtifactKind]) -> Result<CompileOutcome, BuildError> {
        for &(stage, failure) in stages {
            let report = self.tc.run_stage(stage, &self.slots, &self.dir)?;
            self.diag.push(&report.diagnostics.text);
            self.diag.truncated |= report.diagnostics.truncated;
            if !report.ok {
                let out = Box::new(self.outcome(false, requested));
                return Err(match failure {
                    Failure::Compile => BuildError::CompileFailed(out),
                    Failure::Recombine => BuildError::RecombineFailed(out),
                });
            }
        }
        let out = self.outcome(true, requested);
        if out.ok {
            Ok(out)
        } else {
            Err(BuildError::CompileFailed(Box::new(out)))
        }
    }
}

fn expect_lang(unit: &SourceUnit, lang: Lang) -> Result<(), BuildError> {
    if unit.lang == lang {
        Ok(())
    } else {
        Err(BuildError::WrongLang { expected: lang, got: unit.lang })
    }
}

fn with_extension(path: &str, ext: &str) -> String {
    let p = Path::new(path);
    p.with_extension(ext).to_string_lossy().into_owned()
}

/// CUDA → HIP via the toolchain's translate template. Provenance is carried over.
pub fn hipify_translate(unit: &SourceUnit, tc: &Toolchain, work: &Path) -> Result<SourceUnit, BuildError> {
    expect_lang(unit, Lang::Cuda)?;
    let mut flow = Flow::new(tc, work, &unit.id, "translate")?;
    flow.input("input.cu", &unit.text)?;
    let out = flow.dir.join("output.hip");
    flow.slots.set("output", &out);
    let report = tc.run_stage(Stage::Translate, &flow.slots, &flow.dir)?;
    let text = if report.ok { fs::read_to_string(&out).unwrap_or_default() } else { String::new() };
    if !report.ok || text.trim().is_empty() {
        let mut d = report.diagnostics.text;
        if d.is_empty() {
            d = "translator produced no output\n".into();
        }
        return Err(BuildError::TranslateFailed { diagnostics: d });
    }
    Ok(unit.derive(Lang::Hip, text, with_extension(&unit.relative_path, "hip")))
}

/// nvcc build plus the mixed host/device dump.
pub fn compile_cuda(unit: &SourceUnit, tc: &Toolchain, work: &Path) -> Result<CompileOutcome, BuildError> {
    expect_lang(unit, Lang::Cuda)?;
    let mut flow = Flow::new(tc, work, &unit.id, "compile")?;
    flow.input("input.cu", &unit.text)?;
    flow.slots.set("output", flow.dir.join("output"));
    flow.run(
        &[(Stage::Compile, Failure::Compile), (Stage::Disassemble, Failure::Compile)],
        &[ArtifactKind::Executable, ArtifactKind::MixedDump],
    )
}

/// hipcc build. Deferred mode captures pure host and device assembly and
/// recombines them into the executable.
pub fn compile_hip(unit: &SourceUnit, tc: &Toolchain, work: &Path, defer_embedding: bool) -> Result<CompileOutcome, BuildError> {
    expect_lang(unit, Lang::Hip)?;
    let stage = if defer_embedding { "compile" } else { "build" };
    let mut flow = Flow::new(tc, work, &unit.id, stage)?;
    flow.input("input.hip", &unit.text)?;
    flow.slots.set("output", flow.dir.join("output"));
    if defer_embedding {
        flow.run(
            &[(Stage::Compile, Failure::Compile), (Stage::Link, Failure::Recombine)],
            &[ArtifactKind::HostAsm, ArtifactKind::DeviceAsm, ArtifactKind::Executable],
        )
    } else {
        flow.run(&[(Stage::Build, Failure::Compile)], &[ArtifactKind::Executable])
    }
}

/// OpenCL kernel build: PTX via the helper on Nvidia, LLVM IR on AMD.
pub fn compile_opencl(unit: &SourceUnit, tc: &Toolchain, work: &Path) -> Result<CompileOutcome, BuildError> {
    expect_lang(unit, Lang::Opencl)?;
    let mut flow = Flow::new(tc, work, &unit.id, "compile")?;
    flow.input("input.cl", &unit.text)?;
    flow.slots.set("output", flow.dir.join("output"));
    match tc.spec.flavour() {
        ToolchainName::OpenclNvidia => flow.run(
            &[(Stage::Compile, Failure::Compile), (Stage::Disassemble, Failure::Compile)],
            &[ArtifactKind::Ptx, ArtifactKind::DeviceAsm],
        ),
        ToolchainName::OpenclAmd => {
            flow.run(&[(Stage::Compile, Failure::Compile)], &[ArtifactKind::LlvmIr, ArtifactKind::DeviceAsm])
        }
        other => Err(BuildError::Spec(format!("{other} cannot build OpenCL"))),
    }
}

/// Recombines given host and device assembly into an executable, as the
/// deferred-insertion path does after compilation.
pub fn link_deferred(
    host_asm: &str,
    device_asm: &str,
    tc: &Toolchain,
    work: &Path,
    id: &str,
) -> Result<CompileOutcome, BuildError> {
    let flow = Flow::new(tc, work, id, "link")?;
    fs::write(flow.dir.join(ArtifactKind::HostAsm.file_name()), host_asm)?;
    fs::write(flow.dir.join(ArtifactKind::DeviceAsm.file_name()), device_asm)?;
    let mut flow = flow;
    flow.slots.set("input", flow.dir.join(ArtifactKind::DeviceAsm.file_name()));
    flow.slots.set("output", flow.dir.join("output"));
    flow.run(&[(Stage::Link, Failure::Recombine)], &[ArtifactKind::Executable])
}

/// Executes a build product through the toolchain's run template.
///
/// Mock executables are interpreted in process; anything else is spawned
/// and counted by the launch spy.
pub fn run_executable(
    tc: &Toolchain,
    executable: &Path,
    args: &[String],
    timeout: Duration,
    repetitions: usize,
) -> Result<Vec<ExecutionTrace>, BuildError> {
    if tc.spec.is_mock() {
        let bytes = fs::read(executable).map_err(|e| BuildError::Launch(format!("{}: {e}", executable.display())))?;
        if let Some(exe) = MockExecutable::parse(&String::from_utf8_lossy(&bytes)) {
            let entry = tc.script.lookup(&sha256_hex(&bytes), Stage::Run.as_str(), tc.flavour_name());
            return Ok(simulate(&exe, entry, timeout, repetitions));
        }
    }
    let mut slots = Slots::new(executable.parent().unwrap_or(Path::new(".")));
    slots.set("executable", executable);
    let template = tc
        .spec
        .stage(Stage::Run)
        .and_then(|c| c.first())
        .filter(|c| !c.is_mock())
        .map(|c| c.argv.clone())
        .unwrap_or_else(|| vec!["{executable}".to_string()]);
    let mut argv = Vec::new();
    for a in &template {
        argv.extend(slots.fill(a)?);
    }
    argv.extend_from_slice(args);
    tc.spy.record(&argv[0])?;
    run::run_argv(&argv, executable.parent().filter(|d| !d.as_os_str().is_empty()), timeout, repetitions)
}

fn simulate(exe: &MockExecutable, entry: Option<&MockEntry>, timeout: Duration, repetitions: usize) -> Vec<ExecutionTrace> {
    let stdout = entry.and_then(|e| e.stdout.clone()).unwrap_or_else(|| exe.stdout.clone());
    let exit_code = entry.and_then(|e| e.exit_code).unwrap_or(exe.exit_code);
    let mut traces = Vec::new();
    for _ in 0..repetitions {
        let start = Instant::now();
        let wanted = Duration::from_millis(exe.sleep_ms);
        let timed_out = wanted >= timeout;
        std::thread::sleep(wanted.min(timeout));
        let mut wall = start.elapsed().as_secs_f64();
        if timed_out {
            wall = wall.max(timeout.as_secs_f64());
        }
        traces.push(ExecutionTrace {
            exit_code: if timed_out { 137 } else { exit_code },
            stdout: if timed_out { Vec::new() } else { stdout.clone().into_bytes() },
            stderr: exe.stderr.clone().into_bytes(),
            wall_time: wall,
            peak_memory: None,
            timed_out,
        });
        if timed_out {
            break;
        }
    }
    traces
}
