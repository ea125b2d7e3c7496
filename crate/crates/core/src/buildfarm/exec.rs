use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::mock::{self, MockScript};
use super::run::{spawn_wait, Sink};
use super::spec::{CommandTemplate, Slots, Stage, ToolchainSpec};
use super::BuildError;
use crate::text::sha256_hex;

pub const DIAGNOSTICS_CAP: usize = 1 << 20;
pub const HELPER_NAME: &str = "ocl-ptx-dump";

/// Records every external process launch; optionally enforces an allowlist.
#[derive(Debug, Default)]
pub struct LaunchSpy {
    allow: Option<BTreeSet<String>>,
    log: Mutex<Vec<String>>,
}

impl LaunchSpy {
    pub fn new() -> LaunchSpy {
        LaunchSpy::default()
    }

    /// Launches of programs outside `allow` (matched by file name) fail.
    pub fn with_allowlist<I: IntoIterator<Item = S>, S: Into<String>>(allow: I) -> LaunchSpy {
        LaunchSpy { allow: Some(allow.into_iter().map(Into::into).collect()), log: Mutex::default() }
    }

    pub fn launches(&self) -> Vec<String> {
        self.log.lock().expect("spy lock").clone()
    }

    pub fn count(&self) -> usize {
        self.log.lock().expect("spy lock").len()
    }

    pub(crate) fn record(&self, program: &str) -> Result<(), BuildError> {
        let base = Path::new(program).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(allow) = &self.allow {
            if !allow.contains(&base) && !allow.contains(program) {
                return Err(BuildError::Disallowed(program.to_string()));
            }
        }
        self.log.lock().expect("spy lock").push(program.to_string());
        Ok(())
    }
}

/// Diagnostic text, capped at [`DIAGNOSTICS_CAP`] bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub text: String,
    pub truncated: bool,
}

impl Diagnostics {
    pub fn push(&mut self, s: &str) {
        if self.truncated {
            return;
        }
        let room = DIAGNOSTICS_CAP - self.text.len();
        if s.len() <= room {
            self.text.push_str(s);
        } else {
            let mut cut = room;
            while !s.is_char_boundary(cut) {
                cut -= 1;
            }
            self.text.push_str(&s[..cut]);
            self.truncated = true;
        }
    }

    pub fn push_bytes(&mut self, b: &[u8]) {
        self.push(&String::from_utf8_lossy(b));
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub ok: bool,
    pub diagnostics: Diagnostics,
}

/// A toolchain spec bound to its mock script and launch spy.
#[derive(Debug, Clone)]
pub struct Toolchain {
    pub spec: ToolchainSpec,
    pub script: Arc<MockScript>,
    pub spy: Arc<LaunchSpy>,
    pub command_timeout: Duration,
}

impl Toolchain {
    pub fn new(spec: ToolchainSpec) -> Toolchain {
        Toolchain {
            spec,
            script: Arc::new(MockScript::default()),
            spy: Arc::new(LaunchSpy::new()),
            command_timeout: Duration::from_secs(600),
        }
    }

    pub fn with_script(mut self, script: MockScript) -> Toolchain {
        self.script = Arc::new(script);
        self
    }

    pub fn with_spy(mut self, spy: Arc<LaunchSpy>) -> Toolchain {
        self.spy = spy;
        self
    }

    pub fn flavour_name(&self) -> &'static str {
        self.spec.flavour().as_str()
    }

    /// Runs every command of `stage` in order inside `dir`, stopping at the
    /// first failure.
    pub fn run_stage(&self, stage: Stage, slots: &Slots, dir: &Path) -> Result<StepReport, BuildError> {
        let cmds = self.spec.stage(stage).ok_or_else(|| BuildError::ToolMissing(format!("{stage} stage is not defined")))?;
        let mut report = StepReport { ok: true, diagnostics: Diagnostics::default() };
        for cmd in cmds {
            let ok = self.run_command(stage, cmd, slots, dir, &mut report.diagnostics)?;
            if !ok {
                report.ok = false;
                break;
            }
        }
        Ok(report)
    }

    fn run_command(
        &self,
        stage: Stage,
        cmd: &CommandTemplate,
        slots: &Slots,
        dir: &Path,
        diag: &mut Diagnostics,
    ) -> Result<bool, BuildError> {
        let mut argv = Vec::with_capacity(cmd.argv.len());
        for a in &cmd.argv {
            if let Some(v) = slots.fill(a)? {
                argv.push(v);
            }
        }
        let stdout_path = match &cmd.stdout {
            Some(t) => slots.fill(t)?,
            None => None,
        };
        if cmd.is_mock() {
            return self.run_mock(stage, &argv[1..], stdout_path.as_deref(), cmd.append, diag);
        }
        let program = argv.first().ok_or_else(|| BuildError::Spec("empty argv".into()))?.clone();
        self.spy.record(&program)?;
        let mut command = Command::new(&program);
        command.args(&argv[1..]).current_dir(dir).envs(&self.spec.env);
        let sink = match &stdout_path {
            Some(p) => Sink::File(OpenOptions::new().create(true).write(true).append(cmd.append).truncate(!cmd.append).open(p)?),
            None => Sink::Capture,
        };
        let helper = Path::new(&program).file_name().is_some_and(|n| n == HELPER_NAME);
        let done = match spawn_wait(command, sink, self.command_timeout, false) {
            Ok(d) => d,
            Err(e) if e.kind() == ErrorKind::NotFound || e.kind() == ErrorKind::PermissionDenied => {
                return Err(if helper { BuildError::HelperMissing(program) } else { BuildError::ToolMissing(program) });
            }
            Err(e) => return Err(BuildError::Launch(format!("{program}: {e}"))),
        };
        diag.push_bytes(&done.stderr);
        if done.timed_out {
            diag.push(&format!("{program}: timed out after {:.0} s\n", self.command_timeout.as_secs_f64()));
            return Ok(false);
        }
        if helper {
            match done.exit_code {
                1 => return Err(BuildError::Spec(format!("{HELPER_NAME} usage error: {}", String::from_utf8_lossy(&done.stderr)))),
                3 => return Err(BuildError::NoPlatform(String::from_utf8_lossy(&done.stderr).into_owned())),
                _ => {}
            }
        }
        if done.exit_code != 0 {
            diag.push_bytes(&done.stdout);
            return Ok(false);
        }
        Ok(true)
    }

    fn run_mock(
        &self,
        stage: Stage,
        args: &[String],
        stdout_path: Option<&str>,
        append: bool,
        diag: &mut Diagnostics,
    ) -> Result<bool, BuildError> {
        let (tool, rest) = args.split_first().ok_or_else(|| BuildError::Spec("@mock without a tool".into()))?;
        let vendor = self.flavour_name();
        let entry = mock::primary_input(rest)
            .and_then(|p| fs::read(p).ok())
            .and_then(|bytes| self.script.lookup(&sha256_hex(&bytes), stage.as_str(), vendor));
        let result = match entry {
            Some(e) if !e.ok => {
                diag.push(&e.diagnostics);
                return Ok(false);
            }
            Some(e) if e.stdout.is_some() || !e.artifacts.is_empty() => {
                diag.push(&e.diagnostics);
                let keys: std::collections::BTreeMap<&str, &str> = rest.iter().filter_map(|a| a.split_once('=')).collect();
                let mut r = mock::ToolResult { ok: true, ..Default::default() };
                r.stdout = e.stdout.clone().unwrap_or_default().into_bytes();
                for (k, content) in &e.artifacts {
                    let path = keys.get(k.as_str()).ok_or_else(|| BuildError::Spec(format!("script artifact `{k}` has no argument")))?;
                    r.files.push((path.to_string(), content.clone()));
                }
                r
            }
            other => {
                if let Some(e) = other {
                    diag.push(&e.diagnostics);
                }
                mock::builtin(tool, rest, vendor)
            }
        };
        if !result.diagnostics.is_empty() {
            diag.push(&result.diagnostics);
            if !result.diagnostics.ends_with('\n') {
                diag.push("\n");
            }
        }
        if !result.ok {
            return Ok(false);
        }
        for (path, content) in &result.files {
            fs::write(path, content)?;
        }
        if let Some(p) = stdout_path {
            let mut f = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(p)?;
            f.write_all(&result.stdout)?;
        }
        Ok(true)
    }
}
