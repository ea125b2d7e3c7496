use std::fs::File;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::BuildError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const POLL: Duration = Duration::from_millis(10);

/// One execution of a binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub exit_code: i32,
    #[serde(with = "crate::text::base64_bytes")]
    pub stdout: Vec<u8>,
    #[serde(with = "crate::text::base64_bytes")]
    pub stderr: Vec<u8>,
    pub wall_time: f64,
    /// Peak resident set of the process tree, MiB.
    pub peak_memory: Option<f64>,
    pub timed_out: bool,
}

pub(crate) enum Sink {
    Capture,
    File(File),
}

pub(crate) struct Finished {
    pub exit_code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub wall_time: f64,
    pub peak_kib: Option<u64>,
    pub timed_out: bool,
}

fn reader<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        buf
    })
}

fn vm_rss_kib(pid: i32) -> Option<u64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn parent_of(pid: i32) -> Option<i32> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // the command name may contain spaces; fields resume after the last ')'
    let rest = &stat[stat.rfind(')')? + 1..];
    rest.split_whitespace().nth(1)?.parse().ok()
}

/// Summed RSS over `root` and its live descendants.
fn tree_rss_kib(root: i32) -> Option<u64> {
    let mut pids: Vec<(i32, i32)> = Vec::new();
    for entry in std::fs::read_dir("/proc").ok()?.flatten() {
        if let Some(pid) = entry.file_name().to_str().and_then(|n| n.parse::<i32>().ok()) {
            if let Some(ppid) = parent_of(pid) {
                pids.push((pid, ppid));
            }
        }
    }
    let mut tree = vec![root];
    let mut i = 0;
    while i < tree.len() {
        let p = tree[i];
        tree.extend(pids.iter().filter(|(_, pp)| *pp == p).map(|(c, _)| *c));
        i += 1;
    }
    let total: u64 = tree.iter().filter_map(|&p| vm_rss_kib(p)).sum();
    (total > 0).then_some(total)
}

/// Spawns `cmd`, polls it to completion or `timeout` and kills its process
/// group on expiry.
pub(crate) fn spawn_wait(mut cmd: Command, stdout: Sink, timeout: Duration, sample_memory: bool) -> io::Result<Finished> {
    cmd.stdin(Stdio::null()).stderr(Stdio::piped()).process_group(0);
    match stdout {
        Sink::Capture => cmd.stdout(Stdio::piped()),
        Sink::File(f) => cmd.stdout(Stdio::from(f)),
    };
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pid = child.id() as i32;
    let out = reader(child.stdout.take());
    let err = reader(child.stderr.take());

    let mut peak: Option<u64> = None;
    let mut status: libc::c_int = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let mut timed_out = false;
    loop {
        // SAFETY: pid is our unreaped child; status and usage are valid out-pointers
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if r == pid {
            break;
        }
        if r < 0 {
            return Err(io::Error::last_os_error());
        }
        if sample_memory {
            if let Some(kib) = tree_rss_kib(pid) {
                peak = Some(peak.map_or(kib, |p| p.max(kib)));
            }
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            // SAFETY: negative pid addresses the process group created above
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
                libc::wait4(pid, &mut status, 0, &mut usage);
            }
            break;
        }
        thread::sleep(POLL);
    }
    let mut wall_time = start.elapsed().as_secs_f64();
    if timed_out {
        wall_time = wall_time.max(timeout.as_secs_f64());
    } else {
        // orphaned grandchildren could hold the pipes open
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    if sample_memory && usage.ru_maxrss > 0 {
        let max = usage.ru_maxrss as u64;
        peak = Some(peak.map_or(max, |p| p.max(max)));
    }
    let exit_code = if libc::WIFEXITED(status) {
        libc::WEXITSTATUS(status)
    } else if libc::WIFSIGNALED(status) {
        128 + libc::WTERMSIG(status)
    } else {
        -1
    };
    Ok(Finished {
        exit_code,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        wall_time,
        peak_kib: peak,
        timed_out,
    })
}

/// Runs `executable` up to `repetitions` times, sequentially.
///
/// A timed-out run ends the series; it is the last trace returned.
pub fn run_binary(
    executable: &Path,
    args: &[String],
    timeout: Duration,
    repetitions: usize,
) -> Result<Vec<ExecutionTrace>, BuildError> {
    let mut argv = vec![executable.to_string_lossy().into_owned()];
    argv.extend_from_slice(args);
    let cwd = executable.parent().filter(|d| !d.as_os_str().is_empty());
    run_argv(&argv, cwd, timeout, repetitions)
}

pub(crate) fn run_argv(
    argv: &[String],
    cwd: Option<&Path>,
    timeout: Duration,
    repetitions: usize,
) -> Result<Vec<ExecutionTrace>, BuildError> {
    let (program, args) = argv.split_first().ok_or_else(|| BuildError::Launch("empty argv".into()))?;
    let mut traces = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut cmd = Command::new(program);
        cmd.args(args);
        if let Some(dir) = cwd {
            cmd.current_dir(dir);
        }
        let f = spawn_wait(cmd, Sink::Capture, timeout, true).map_err(|e| BuildError::Launch(format!("{program}: {e}")))?;
        let trace = ExecutionTrace {
            exit_code: f.exit_code,
            stdout: f.stdout,
            stderr: f.stderr,
            wall_time: f.wall_time,
            peak_memory: f.peak_kib.map(|k| k as f64 / 1024.0),
            timed_out: f.timed_out,
        };
        let stop = trace.timed_out;
        traces.push(trace);
        if stop {
            break;
        }
    }
    Ok(traces)
}
