//! Tokenization and sparse retrieval.

pub mod jamo;
mod index;

pub use index::{Bm25Params, InvertedIndex, Posting};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub jamo_decompose: bool,
    pub token_pattern: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            jamo_decompose: true,
            token_pattern: r"\w+".to_string(),
        }
    }
}

/// A compiled [`TokenizerConfig`].
#[derive(Debug, Clone)]
pub struct Tokenizer {
    config: TokenizerConfig,
    regex: Regex,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> Result<Self> {
        let regex = Regex::new(&config.token_pattern).map_err(|e| Error::Pattern {
            pattern: config.token_pattern.clone(),
            message: e.to_string(),
        })?;
        Ok(Tokenizer { config, regex })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    /// Lowercases, extracts pattern matches, then decomposes Hangul
    /// syllables inside each token.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lowered;
        let text = if self.config.lowercase {
            lowered = text.to_lowercase();
            lowered.as_str()
        } else {
            text
        };
        self.regex
            .find_iter(text)
            .map(|m| {
                if self.config.jamo_decompose {
                    jamo::decompose(m.as_str())
                } else {
                    m.as_str().to_string()
                }
            })
            .collect()
    }
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Result<Vec<String>> {
    Ok(Tokenizer::new(config.clone())?.tokenize(text))
}
