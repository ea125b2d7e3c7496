use super::Level;
use crate::corpus::CorpusRecord;

pub const ASSEMBLY_PROMPT: &str = include_str!("prompt_assembly.txt");
pub const SOURCE_PROMPT: &str = include_str!("prompt_source.txt");

/// Fence labels accepted when pulling a candidate out of a model reply.
pub const ASSEMBLY_LABELS: &[&str] = &["amdasm", "asm", "s", ""];
pub const SOURCE_LABELS: &[&str] = &["amd", "hip", "cpp", "c++", "cuda", ""];

/// The baseline translation prompt for a task, targeting its AMD arch.
///
/// The architecture is substituted first so text inside the payload is
/// never treated as a placeholder.
pub fn build_baseline_prompt(task: &CorpusRecord, level: Level) -> String {
    let arch = &task.arch.amd_arch;
    match level {
        Level::Assembly => ASSEMBLY_PROMPT.replace("{architecture}", arch).replace("{cuda_asm}", &task.sass.text),
        Level::Source => {
            let code = task.cuda_src.as_ref().map_or("", |s| s.text.as_str());
            SOURCE_PROMPT.replace("{architecture}", arch).replace("{cuda_code}", code)
        }
    }
}
