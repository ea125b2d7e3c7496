use super::Isa;

/// Removes comments for the given ISA's assembler dialect.
///
/// SASS and PTX use C-style comments, RDNA3 (LLVM AMDGPU syntax) uses `;`
/// line comments plus C-style ones, x86 GAS uses `#` line comments plus
/// block comments.
fn strip_comments(line: &str, isa: Isa, in_block: &mut bool) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    let mut in_str = false;
    while let Some(c) = chars.next() {
        if *in_block {
            if c == '*' && chars.peek() == Some(&'/') {
                chars.next();
                *in_block = false;
                out.push(' ');
            }
            continue;
        }
        if in_str {
            out.push(c);
            if c == '\\' {
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                out.push(c);
            }
            '/' if chars.peek() == Some(&'/') => break,
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                *in_block = true;
            }
            ';' if isa == Isa::Rdna3 => break,
            '#' if isa == Isa::X86 => break,
            _ => out.push(c),
        }
    }
    out
}

/// First mnemonic of every instruction line.
///
/// Directives (leading `.`), labels (trailing `:`), comment-only and blank
/// lines yield nothing. SASS predicate guards (`@P0`, `@!PT`) and dual-issue
/// braces are skipped, as are `Function :` headers of disassembler dumps.
pub fn extract_opcodes(text: &str, isa: Isa) -> Vec<String> {
    let mut ops = Vec::new();
    let mut in_block = false;
    for raw in text.lines() {
        let line = strip_comments(raw, isa, &mut in_block);
        let mut tokens = line.split_whitespace().peekable();
        if matches!(isa, Isa::Sass) {
            let mut probe = line.split_whitespace();
            if probe.next() == Some("Function") && probe.next().is_some_and(|t| t.starts_with(':')) {
                continue;
            }
        }
        while let Some(tok) = tokens.next() {
            if tok.starts_with('.') {
                break;
            }
            if tok.ends_with(':') && !tok.starts_with(':') {
                continue;
            }
            if matches!(isa, Isa::Sass | Isa::Ptx) && (tok.starts_with('@') || tok == "{" || tok == "}") {
                continue;
            }
            let mnemonic = tok.trim_end_matches([',', ';']);
            if !mnemonic.is_empty() {
                ops.push(mnemonic.to_string());
            }
            break;
        }
    }
    ops
}
