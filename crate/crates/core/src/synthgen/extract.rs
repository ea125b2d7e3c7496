use super::SynthError;

const ACCEPTED_LABELS: &[&str] = &["", "cuda", "cpp", "c++"];

fn fence_label(line: &str) -> Option<&str> {
    let rest = line.trim().strip_prefix("```")?;
    if rest.contains('`') {
        return None;
    }
    Some(rest.trim())
}

/// Body of the longest fenced block labelled cuda, cpp, c++ or unlabelled.
///
/// Length is measured in lines; on a tie the earlier block wins. Blocks with
/// other labels are skipped, and an unterminated fence does not count.
pub fn extract_code(response: &str) -> Result<String, SynthError> {
    extract_fenced(response, ACCEPTED_LABELS)
}

/// [`extract_code`] with a caller-chosen set of accepted fence labels,
/// compared case-insensitively; `""` accepts unlabelled fences.
pub fn extract_fenced(response: &str, labels: &[&str]) -> Result<String, SynthError> {
    let accepts = |label: &str| labels.iter().any(|l| l.eq_ignore_ascii_case(label));
    let mut best: Option<(usize, &str)> = None;
    let mut open: Option<(bool, usize)> = None;
    let mut offset = 0usize;
    for line in response.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let Some(label) = fence_label(line) else { continue };
        match open {
            None => {
                open = Some((accepts(label), offset));
            }
            Some((accepted, body_start)) => {
                if !label.is_empty() {
                    // an opening fence while one is open; treat it as a restart
                    open = Some((accepts(label), offset));
                    continue;
                }
                open = None;
                if !accepted {
                    continue;
                }
                let body = &response[body_start..start];
                let body = body.strip_suffix('\n').unwrap_or(body);
                let body = body.strip_suffix('\r').unwrap_or(body);
                let lines = if body.is_empty() { 0 } else { body.lines().count() };
                if best.is_none_or(|(n, _)| lines > n) {
                    best = Some((lines, body));
                }
            }
        }
    }
    best.map(|(_, b)| b.to_string()).ok_or(SynthError::NoCodeBlock)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(label: &str, lines: usize) -> String {
        let body: Vec<String> = (0..lines).map(|i| format!("int v{i} = {i};")).collect();
        format!("```{label}\n{}\n```\n", body.join("\n"))
    }

    #[test]
    fn custom_labels() {
        let text = "```cuda\nsrc\n```\n```amdasm\ns_endpgm\n```\n";
        assert_eq!(extract_fenced(text, &["amdasm"]).unwrap(), "s_endpgm");
        assert!(extract_fenced(text, &["hip"]).is_err());
    }

    #[test]
    fn single_block() {
        assert_eq!(extract_code("```cuda\n__global__ void k(){}\n```").unwrap(), "__global__ void k(){}");
    }

    #[test]
    fn prose_only() {
        assert!(matches!(extract_code("Here is some prose."), Err(SynthError::NoCodeBlock)));
        assert!(matches!(extract_code("```cuda\nunterminated"), Err(SynthError::NoCodeBlock)));
    }

    #[test]
    fn longest_block_wins() {
        let text = format!("Intro\n{}middle\n{}outro", block("cuda", 5), block("", 40));
        let got = extract_code(&text).unwrap();
        assert_eq!(got.lines().count(), 40);
        let text = format!("{}{}", block("cpp", 40), block("cuda", 5));
        assert_eq!(extract_code(&text).unwrap().lines().count(), 40);
    }

    #[test]
    fn tie_prefers_first() {
        let text = "```cuda\nfirst\n```\n```c++\nsecond\n```\n";
        assert_eq!(extract_code(text).unwrap(), "first");
    }

    #[test]
    fn other_languages_skipped() {
        let text = format!("{}{}", block("python", 50), block("C++", 3));
        assert_eq!(extract_code(&text).unwrap().lines().count(), 3);
        assert!(extract_code(&block("bash", 3)).is_err());
    }

    #[test]
    fn body_is_byte_exact() {
        let text = "```cuda\n  indented\t\n\n  tail  \n```";
        assert_eq!(extract_code(text).unwrap(), "  indented\t\n\n  tail  ");
    }

    #[test]
    fn no_fence_lines_in_output() {
        let text = format!("{}{}{}", block("cuda", 3), block("", 7), block("cpp", 2));
        let got = extract_code(&text).unwrap();
        assert!(got.lines().all(|l| !l.trim_start().starts_with("```")));
    }
}
