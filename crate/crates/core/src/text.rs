//! Shared text helpers: C-family comment stripping, normalisation and hashing.

use sha2::{Digest, Sha256};

/// Serde adapter storing bytes as standard base64 text.
pub mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Lex {
    Code,
    Str,
    StrEscape,
    Char,
    CharEscape,
    LineComment,
    BlockComment,
}

/// Removes `//` and `/* */` comments that are not inside string or character
/// literals. Newlines inside block comments are kept so line numbering survives.
pub fn strip_c_comments(text: &str) -> String {
    scan_c(text, true)
}

/// Like [`strip_c_comments`] but also blanks the contents of string and
/// character literals, leaving only the delimiters. Used for token-presence
/// tests that must ignore text inside literals.
pub fn code_only(text: &str) -> String {
    scan_c(text, false)
}

fn scan_c(text: &str, keep_literals: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut state = Lex::Code;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            Lex::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    state = Lex::LineComment;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    state = Lex::BlockComment;
                }
                '"' => {
                    out.push(c);
                    state = Lex::Str;
                }
                '\'' => {
                    out.push(c);
                    state = Lex::Char;
                }
                _ => out.push(c),
            },
            Lex::Str | Lex::Char => {
                let close = if state == Lex::Str { '"' } else { '\'' };
                if c == close {
                    out.push(c);
                    state = Lex::Code;
                } else if c == '\n' {
                    // unterminated literal: recover at end of line
                    out.push(c);
                    state = Lex::Code;
                } else {
                    if keep_literals {
                        out.push(c);
                    }
                    if c == '\\' {
                        state = if state == Lex::Str { Lex::StrEscape } else { Lex::CharEscape };
                    }
                }
            }
            Lex::StrEscape | Lex::CharEscape => {
                if keep_literals {
                    out.push(c);
                }
                state = if state == Lex::StrEscape { Lex::Str } else { Lex::Char };
            }
            Lex::LineComment => {
                if c == '\n' {
                    out.push('\n');
                    state = Lex::Code;
                }
            }
            Lex::BlockComment => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    out.push(' ');
                    state = Lex::Code;
                } else if c == '\n' {
                    out.push('\n');
                }
            }
        }
    }
    out
}

/// Comment-free text with every whitespace run collapsed to one space.
pub fn normalize_source(text: &str) -> String {
    let stripped = strip_c_comments(text);
    let mut out = String::with_capacity(stripped.len());
    for word in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Hash of [`normalize_source`]; the content-equivalence key used by dedup
/// and bench/train overlap checks.
pub fn normalized_hash(text: &str) -> String {
    sha256_hex(normalize_source(text))
}

/// Number of newline-delimited lines, as counted by [`str::lines`].
pub fn line_count(text: &str) -> usize {
    text.lines().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_comments_outside_strings() {
        let src = "int a; // trailing\nchar* s = \"// not a comment\"; /* block\n more */ int b;";
        let out = strip_c_comments(src);
        assert!(out.contains("\"// not a comment\""));
        assert!(!out.contains("trailing"));
        assert!(!out.contains("more"));
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn code_only_blanks_literals() {
        let out = code_only("printf(\"__global__\"); char c = '\\'';");
        assert!(!out.contains("__global__"));
        assert!(out.contains("printf(\"\")"));
    }

    #[test]
    fn normalization_ignores_layout() {
        let a = "__global__ void k(int* x) {\n  x[0] = 1;\n}\n";
        let b = "\n\n__global__   void k(int* x) { // set\n\n x[0] = 1; }";
        assert_eq!(normalized_hash(a), normalized_hash(b));
        assert_ne!(normalized_hash(a), normalized_hash("__global__ void k(int* x) { x[0] = 2; }"));
    }

    #[test]
    fn line_counting() {
        assert_eq!(line_count(""), 0);
        assert_eq!(line_count("a"), 1);
        assert_eq!(line_count("a\nb\n"), 2);
        assert_eq!(line_count("a\n\nb"), 3);
    }
}
