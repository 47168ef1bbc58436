use crate::codec::SecretKey;
use crate::error::{Error, Result};
use crate::lm::{TokenId, Vocabulary};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// All shared session parameters, with contexts already tokenized.
///
/// Both parties must hold an identical config (and model) for extraction
/// to invert embedding: the contexts align the rank computations, the key
/// synchronizes the keystream, and alpha/beta fix the gate.
#[derive(Debug, Clone)]
pub struct StegoConfig {
    /// Entropy-threshold coefficient in (0, 1).
    pub alpha: f64,
    /// Bits embedded per gated token, 1..=16.
    pub beta: u8,
    pub key: SecretKey,
    /// Sampling temperature the provider applies.
    pub temperature: f64,
    /// Private context: the secret prompt ranks are computed under.
    pub private_context: Vec<TokenId>,
    /// Stego context: the public prompt the stego text continues.
    pub stego_context: Vec<TokenId>,
    /// Generation cap; exceeding it with symbols pending is an error.
    pub max_tokens: usize,
    /// Seed for the non-embedding sampler. Extraction never uses it.
    pub rng_seed: u64,
}

impl StegoConfig {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.beta == 0 || self.beta > 16 {
            return Err(Error::Parameter(format!(
                "beta must lie in 1..=16, got {}",
                self.beta
            )));
        }
        if (1u64 << self.beta) > vocab_size as u64 {
            return Err(Error::Parameter(format!(
                "2^beta = {} exceeds vocabulary size {vocab_size}",
                1u64 << self.beta
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::Parameter("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

fn default_alpha() -> f64 {
    0.6
}
fn default_beta() -> u8 {
    3
}
fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> usize {
    4096
}

/// On-disk session config. Contexts are plain strings; they are tokenized
/// against the session's vocabulary when the config is resolved. The key
/// is optional here because operators usually provide it out of band (flag
/// or environment) rather than in a file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfigFile {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: u8,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// 64 hex characters, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default)]
    pub private_context: String,
    #[serde(default)]
    pub stego_context: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SessionConfigFile {
    pub fn load(path: &Path) -> Result<SessionConfigFile> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format("session config", e.to_string()))
    }

    /// Resolves against a vocabulary. The key argument wins over the file's
    /// `key` field; context words outside the vocabulary are an error here
    /// (a silently UNK-ed context would desynchronize the parties).
    pub fn resolve(&self, vocab: &Vocabulary, key: Option<SecretKey>) -> Result<StegoConfig> {
        let key = match (key, &self.key) {
            (Some(k), _) => k,
            (None, Some(hex)) => SecretKey::from_hex(hex)?,
            (None, None) => {
                return Err(Error::Parameter(
                    "no key: provide --key-hex, the key environment variable, or a config key field"
                        .into(),
                ))
            }
        };
        let tokenize_context = |what: &str, text: &str| -> Result<Vec<TokenId>> {
            let (ids, oov) = vocab.tokenize(text);
            if !oov.is_empty() {
                return Err(Error::Parameter(format!(
                    "{what} contains out-of-vocabulary words: {oov:?}"
                )));
            }
            Ok(ids)
        };
        let config = StegoConfig {
            alpha: self.alpha,
            beta: self.beta,
            key,
            temperature: self.temperature,
            private_context: tokenize_context("private context", &self.private_context)?,
            stego_context: tokenize_context("stego context", &self.stego_context)?,
            max_tokens: self.max_tokens,
            rng_seed: self.rng_seed,
        };
        config.validate(vocab.len())?;
        Ok(config)
    }
}
