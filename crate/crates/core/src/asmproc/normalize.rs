#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    Str,
    StrEscape,
    LineComment,
    BlockComment,
}

/// Strips `//` and `/* */` comments outside string literals, collapses runs
/// of spaces and tabs, trims each line and drops blank lines.
///
/// String literals end at a closing quote or at the end of the line.
/// Whitespace inside a literal is left alone.
pub fn normalize_sass(text: &str) -> String {
    // Pass 1: comment removal. A removed block comment becomes one space so
    // that no new delimiter can form across it.
    let mut stripped = String::with_capacity(text.len());
    // parallel mask: true where the char belongs to a string literal
    let mut in_literal: Vec<bool> = Vec::with_capacity(text.len());
    let mut state = State::Code;
    let mut chars = text.chars().peekable();
    let push = |s: &mut String, m: &mut Vec<bool>, c: char, lit: bool| {
        s.push(c);
        m.push(lit);
    };
    while let Some(c) = chars.next() {
        if c == '\n' {
            if state != State::BlockComment {
                state = State::Code;
            }
            push(&mut stripped, &mut in_literal, '\n', false);
            continue;
        }
        match state {
            State::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    state = State::LineComment;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    state = State::BlockComment;
                }
                '"' => {
                    push(&mut stripped, &mut in_literal, c, true);
                    state = State::Str;
                }
                _ => push(&mut stripped, &mut in_literal, c, false),
            },
            State::Str => {
                push(&mut stripped, &mut in_literal, c, true);
                match c {
                    '"' => state = State::Code,
                    '\\' => state = State::StrEscape,
                    _ => {}
                }
            }
            State::StrEscape => {
                push(&mut stripped, &mut in_literal, c, true);
                state = State::Str;
            }
            State::LineComment => {}
            State::BlockComment => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    push(&mut stripped, &mut in_literal, ' ', false);
                    state = State::Code;
                }
            }
        }
    }

    // Pass 2: whitespace layout, per line.
    let chars: Vec<char> = stripped.chars().collect();
    let mut out = String::with_capacity(stripped.len());
    let mut line = String::new();
    let mut i = 0;
    let flush = |line: &mut String, out: &mut String| {
        let t = line.trim_matches(|c| c == ' ' || c == '\t');
        if !t.trim().is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(t);
        }
        line.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            flush(&mut line, &mut out);
            i += 1;
            continue;
        }
        if (c == ' ' || c == '\t') && !in_literal[i] {
            while i < chars.len() && (chars[i] == ' ' || chars[i] == '\t') && !in_literal[i] {
                i += 1;
            }
            line.push(' ');
            continue;
        }
        line.push(c);
        i += 1;
    }
    flush(&mut line, &mut out);
    if text.ends_with('\n') && !out.is_empty() {
        out.push('\n');
    }
    out
}

/// RDNA3 assembly is whitespace-sensitive; it is carried through untouched.
pub fn passthrough_rdna3(text: &str) -> String {
    text.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asmproc::extract_opcodes;
    use crate::asmproc::{count_tokens, Isa, Tokenizer};
    use proptest::prelude::*;

    #[test]
    fn rule_application() {
        assert_eq!(normalize_sass("MOV  R1,  R2 ; // copy"), "MOV R1, R2 ;");
        assert_eq!(
            normalize_sass("        /*0000*/                   MOV R1, c[0x0][0x28] ;   /* 0x00000a0000017a02 */\n                  /* 0x000fe40000000f00 */\n"),
            "MOV R1, c[0x0][0x28] ;\n"
        );
    }

    #[test]
    fn already_normalized_unchanged() {
        let t = "MOV R1, c[0x0][0x28] ;\nS2R R0, SR_TID.X ;\nEXIT ;";
        assert_eq!(normalize_sass(t), t);
    }

    #[test]
    fn string_literals_survive() {
        let t = ".ascii \"a  // b\"  // real comment";
        assert_eq!(normalize_sass(t), ".ascii \"a  // b\"");
    }

    #[test]
    fn multi_line_block_comment() {
        assert_eq!(normalize_sass("A /* x\n y */ B\nC"), "A\nB\nC");
    }

    #[test]
    fn passthrough_is_identity() {
        for t in ["", "  s_mov_b32   s3,\ts4  ; odd", "\n\n\tv_add_co_u32 v0, vcc_lo, v1, v2\n"] {
            assert_eq!(passthrough_rdna3(t), t);
        }
    }

    proptest! {
        #[test]
        fn idempotent(text in "[A-Z0-9a-z /*\"\\\\\t\n;,]{0,120}") {
            let once = normalize_sass(&text);
            prop_assert_eq!(normalize_sass(&once), once);
        }

        #[test]
        fn never_increases_tokens(text in "[A-Z0-9 /*\"\t\n;,.\\[\\]]{0,120}") {
            let lex = Tokenizer::lexeme();
            prop_assert!(count_tokens(&normalize_sass(&text), &lex).unwrap() <= count_tokens(&text, &lex).unwrap());
        }

        #[test]
        fn preserves_mnemonics(ops in prop::collection::vec("(MOV|IADD3|LDG\\.E|STG\\.E|BRA|EXIT|@P0 BRA)", 1..10),
                               pad in "[ \t]{0,4}") {
            let text: String = ops.iter().enumerate()
                .map(|(i, op)| format!("{pad}/*{i:04x}*/{pad}{op} R1, R2 ;{pad}/* 0x{i:016x} */\n{pad}/* 0x000fe40000000f00 */\n"))
                .collect();
            prop_assert_eq!(extract_opcodes(&normalize_sass(&text), Isa::Sass), extract_opcodes(&text, Isa::Sass));
        }
    }
}
