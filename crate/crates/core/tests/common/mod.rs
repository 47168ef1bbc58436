//! Shared fixtures: a reference corpus (112-word vocabulary), a provider
//! built once per test binary, and deterministic message generators.

#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rankstego_core::ranking::compress_message;
use rankstego_core::stego::StegoConfig;
use rankstego_core::{
    build_codebook, Codebook, ModelProvider, NgramModel, NgramProvider, Rank, SecretKey,
    Smoothing, TokenId, Vocabulary,
};
use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

pub const CORPUS: &str = "\
the old miller grinds red wheat near the quiet river
the young baker sells warm bread beside the stone bridge
a grey cat sleeps under the wooden table every afternoon
the quick brown fox jumps over the lazy dog again
rain falls on the green hills and the dark forest
seven small boats drift past the harbor before dawn
the old sailor mends his torn net by the cold shore
children play simple games around the market square at noon
a tall clock tower rings twice above the busy street
the quiet librarian stacks heavy books along the north wall
fresh apples and sweet plums fill the copper bowl
the young shepherd counts white sheep on the steep meadow
winter wind shakes the bare branches outside my window
the patient teacher repeats every lesson until the class understands
";

pub const PRIVATE_CONTEXT: &str = "near the quiet river";
pub const STEGO_CONTEXT: &str = "the young baker";

/// Calibration sentences for the codebook histogram; in-vocabulary.
pub const CALIBRATION: &[&str] = &[
    "the old miller counts red apples near the stone bridge",
    "rain falls past the quiet harbor before dawn",
    "the young teacher repeats simple games every afternoon",
    "seven white sheep drift along the green meadow",
    "the busy baker sells fresh bread beside the market square",
];

/// The reference provider: bigram, add-1/16 smoothing, temperature 0.7.
pub fn provider() -> Arc<NgramProvider> {
    static PROVIDER: OnceLock<Arc<NgramProvider>> = OnceLock::new();
    Arc::clone(PROVIDER.get_or_init(|| {
        let model = NgramModel::train(CORPUS, 2, Smoothing::new(1, 16).unwrap()).unwrap();
        Arc::new(NgramProvider::new(model, 0.7).unwrap())
    }))
}

pub fn default_config(provider: &NgramProvider) -> StegoConfig {
    let vocab = provider.vocabulary();
    let (h_p, oov) = vocab.tokenize(PRIVATE_CONTEXT);
    assert!(oov.is_empty());
    let (h_s, oov) = vocab.tokenize(STEGO_CONTEXT);
    assert!(oov.is_empty());
    StegoConfig {
        alpha: 0.6,
        beta: 3,
        key: SecretKey::from_bytes([0x24; 32]),
        temperature: provider.temperature(),
        private_context: h_p,
        stego_context: h_s,
        max_tokens: 4096,
        rng_seed: 2024,
    }
}

/// Codebook calibrated the operational way: rank frequencies of the
/// calibration sentences compressed under the private context.
pub fn codebook(provider: &NgramProvider, config: &StegoConfig) -> Codebook {
    static CODEBOOK: OnceLock<Codebook> = OnceLock::new();
    CODEBOOK
        .get_or_init(|| {
            let mut histogram: BTreeMap<Rank, u64> = BTreeMap::new();
            for line in CALIBRATION {
                let (tokens, oov) = provider.vocabulary().tokenize(line);
                assert!(oov.is_empty(), "calibration line has OOV words: {line}");
                let ranks =
                    compress_message(provider, &tokens, &config.private_context).unwrap();
                for r in ranks {
                    *histogram.entry(r).or_insert(0) += 1;
                }
            }
            build_codebook(&histogram, 32, provider.vocabulary().len()).unwrap()
        })
        .clone()
}

/// Message words: every vocabulary surface except the specials.
pub fn message_words(vocab: &Vocabulary) -> Vec<&str> {
    vocab
        .surfaces()
        .filter(|s| *s != rankstego_core::EOS_SURFACE && *s != rankstego_core::UNK_SURFACE)
        .collect()
}

/// A random in-vocabulary message of at most `max_bytes` UTF-8 bytes
/// (at least one word).
pub fn random_message(rng: &mut ChaCha20Rng, words: &[&str], max_bytes: usize) -> String {
    let target = 1 + (rng.next_u64() as usize) % max_bytes;
    let mut out = String::new();
    loop {
        let w = words[(rng.next_u64() as usize) % words.len()];
        let need = if out.is_empty() { w.len() } else { w.len() + 1 };
        if !out.is_empty() && out.len() + need > target {
            break;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
        if out.len() >= target {
            break;
        }
    }
    debug_assert!(!out.is_empty() && out.len() <= 256 + 16);
    out
}

/// Parses newline-delimited decimal token ids (the stego token channel).
pub fn parse_token_lines(text: &str) -> Vec<TokenId> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| TokenId(l.trim().parse().expect("decimal token id")))
        .collect()
}
