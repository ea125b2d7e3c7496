use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::buildfarm::{run_executable, BuildError, ExecutionTrace, Toolchain};

pub const DEFAULT_REPETITIONS: usize = 20;
/// Runtime band counted as "close" to the reference, seconds.
pub const HALF_SECOND: f64 = 0.5;

/// Side-by-side timing of a candidate and its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub runtime_delta: Option<f64>,
    pub memory_delta: Option<f64>,
    pub within_half_second: Option<bool>,
    pub timed_out: bool,
    pub candidate: Vec<ExecutionTrace>,
    pub reference: Vec<ExecutionTrace>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn mean_memory(traces: &[ExecutionTrace]) -> Option<f64> {
    let peaks: Option<Vec<f64>> = traces.iter().map(|t| t.peak_memory).collect();
    mean(peaks?.into_iter())
}

/// Runs the reference then the candidate `repetitions` times each and
/// compares mean wall time and mean peak RSS. Any timeout voids the deltas.
pub fn profile_pair(
    tc: &Toolchain,
    candidate: &Path,
    reference: &Path,
    args: &[String],
    repetitions: usize,
    timeout: Duration,
) -> Result<Profile, BuildError> {
    let reference = run_executable(tc, reference, args, timeout, repetitions)?;
    let candidate = run_executable(tc, candidate, args, timeout, repetitions)?;
    let timed_out = reference.iter().chain(&candidate).any(|t| t.timed_out);
    let (runtime_delta, memory_delta) = if timed_out {
        (None, None)
    } else {
        let rt = mean(candidate.iter().map(|t| t.wall_time))
            .zip(mean(reference.iter().map(|t| t.wall_time)))
            .map(|(c, r)| c - r);
        let mem = mean_memory(&candidate).zip(mean_memory(&reference)).map(|(c, r)| c - r);
        (rt, mem)
    };
    Ok(Profile {
        runtime_delta,
        memory_delta,
        within_half_second: runtime_delta.map(|d| d.abs() <= HALF_SECOND),
        timed_out,
        candidate,
        reference,
    })
}
