use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::AsmError;

/// A pluggable tokenizer, e.g. a byte-pair vocabulary of a specific model.
pub trait TokenizerAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    #[default]
    Lexeme,
    External,
}

#[derive(Clone, Default)]
pub struct Tokenizer {
    mode: TokenizerMode,
    adapter: Option<Arc<dyn TokenizerAdapter>>,
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tokenizer")
            .field("mode", &self.mode)
            .field("adapter", &self.adapter.as_ref().map(|a| a.name().to_string()))
            .finish()
    }
}

impl Tokenizer {
    pub fn lexeme() -> Tokenizer {
        Tokenizer { mode: TokenizerMode::Lexeme, adapter: None }
    }

    pub fn external(adapter: Arc<dyn TokenizerAdapter>) -> Tokenizer {
        Tokenizer { mode: TokenizerMode::External, adapter: Some(adapter) }
    }

    pub fn new(mode: TokenizerMode, adapter: Option<Arc<dyn TokenizerAdapter>>) -> Tokenizer {
        Tokenizer { mode, adapter }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }
}

/// Characters that continue a lexeme. Every other non-whitespace character
/// is a one-character punctuation token.
///
/// | class       | members                                  |
/// |-------------|------------------------------------------|
/// | word        | alphanumerics, `_`, `.`, `%`, `$`        |
/// | punctuation | any other non-whitespace char, singly    |
/// | separator   | whitespace (never counted)               |
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '%' | '$')
}

/// Splits `text` into lexemes according to the table on [`is_word_char`].
pub fn lexeme_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

pub fn count_tokens(text: &str, tokenizer: &Tokenizer) -> Result<usize, AsmError> {
    match tokenizer.mode {
        TokenizerMode::Lexeme => Ok(lexeme_tokens(text).len()),
        TokenizerMode::External => tokenizer
            .adapter
            .as_ref()
            .map(|a| a.count(text))
            .ok_or(AsmError::AdapterMissing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    /// Independent reference splitter: one regex alternation over the same table.
    fn reference_count(text: &str) -> usize {
        let re = Regex::new(r"[\p{Alphabetic}\p{N}_.%$]+|[^\s\p{Alphabetic}\p{N}_.%$]").unwrap();
        re.find_iter(text).count()
    }

    #[test]
    fn pinned_examples() {
        let lex = Tokenizer::lexeme();
        assert_eq!(count_tokens("", &lex).unwrap(), 0);
        assert_eq!(lexeme_tokens("mov r1, r2"), vec!["mov", "r1", ",", "r2"]);
        assert_eq!(count_tokens("mov r1, r2", &lex).unwrap(), 4);
        assert_eq!(
            lexeme_tokens("LDG.E R2, [R2.64] ;"),
            vec!["LDG.E", "R2", ",", "[", "R2.64", "]", ";"]
        );
        assert_eq!(lexeme_tokens("movq %rsp, -8(%rbp)"), vec!["movq", "%rsp", ",", "-", "8", "(", "%rbp", ")"]);
        assert_eq!(lexeme_tokens("s[4:5]"), vec!["s", "[", "4", ":", "5", "]"]);
    }

    struct Words;
    impl TokenizerAdapter for Words {
        fn name(&self) -> &str {
            "words"
        }
        fn count(&self, text: &str) -> usize {
            text.split_whitespace().count()
        }
    }

    #[test]
    fn external_mode() {
        let t = Tokenizer::external(Arc::new(Words));
        assert_eq!(count_tokens("mov r1, r2", &t).unwrap(), 3);
        let missing = Tokenizer::new(TokenizerMode::External, None);
        assert!(matches!(count_tokens("x", &missing), Err(AsmError::AdapterMissing)));
    }

    proptest! {
        #[test]
        fn agrees_with_reference(text in "[a-zA-Z0-9_.%$,;:\\[\\](){}/*+\\-@! \t\n]{0,80}") {
            prop_assert_eq!(lexeme_tokens(&text).len(), reference_count(&text));
        }

        #[test]
        fn agrees_with_reference_unicode(text in "\\PC{0,40}") {
            prop_assert_eq!(lexeme_tokens(&text).len(), reference_count(&text));
        }
    }
}
