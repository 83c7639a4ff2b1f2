use std::fmt;

use unicode_normalization::UnicodeNormalization;

/// Ordered tokens produced by [`tokenize`]. Never contains an empty token.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Builds a sequence from already-split tokens, dropping empty strings.
    ///
    /// Useful for tests and for callers that tokenize upstream.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerOptions {
    pub lowercase: bool,
    /// Emit every punctuation character as a token of its own.
    pub split_punctuation: bool,
}

impl Default for TokenizerOptions {
    fn default() -> Self {
        TokenizerOptions {
            lowercase: true,
            split_punctuation: true,
        }
    }
}

/// Punctuation here means any character that is neither alphanumeric nor
/// whitespace, so symbols and emoji also become single-character tokens.
pub(crate) fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// NFC-normalize, lowercase, split off punctuation, split on whitespace.
pub fn tokenize(text: &str) -> TokenSeq {
    tokenize_with(text, TokenizerOptions::default())
}

pub fn tokenize_with(text: &str, opts: TokenizerOptions) -> TokenSeq {
    let normalized: String = text.nfc().collect();
    let normalized = if opts.lowercase {
        normalized.to_lowercase()
    } else {
        normalized
    };

    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in normalized.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if opts.split_punctuation && is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSeq(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).as_slice().to_vec()
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn punctuation_and_case() {
        assert_eq!(toks("The cat, sat!"), ["the", "cat", ",", "sat", "!"]);
        assert_eq!(toks("abc"), ["abc"]);
        assert_eq!(toks("U.S.A"), ["u", ".", "s", ".", "a"]);
    }

    #[test]
    fn nfc_composes_before_comparison() {
        // "e" + combining acute vs precomposed "é"
        assert_eq!(tokenize("caf\u{0065}\u{0301}"), tokenize("caf\u{00e9}"));
    }

    #[test]
    fn options_can_be_disabled() {
        let opts = TokenizerOptions {
            lowercase: false,
            split_punctuation: false,
        };
        assert_eq!(
            tokenize_with("The cat, sat!", opts).as_slice(),
            ["The", "cat,", "sat!"]
        );
    }

    #[test]
    fn never_emits_empty_tokens() {
        for text in ["a  b", ",,", " . ", "x\u{00a0}y", "日本語。テスト"] {
            assert!(tokenize(text).iter().all(|t| !t.is_empty()), "{text:?}");
        }
    }
}
