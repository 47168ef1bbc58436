//! Shared fixtures for the pipeline benchmarks: a mid-sized reference
//! model, a calibrated codebook, and a default session config.

use rankstego_core::ranking::compress_message;
use rankstego_core::stego::StegoConfig;
use rankstego_core::{
    build_codebook, Codebook, ModelProvider, NgramModel, NgramProvider, Rank, SecretKey,
    Smoothing,
};
use std::collections::BTreeMap;

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

pub fn provider() -> NgramProvider {
    let model = NgramModel::train(CORPUS, 2, Smoothing::new(1, 16).unwrap()).unwrap();
    NgramProvider::new(model, 0.7).unwrap()
}

pub fn config(provider: &NgramProvider, beta: u8) -> StegoConfig {
    let (h_p, _) = provider.vocabulary().tokenize("near the quiet river");
    let (h_s, _) = provider.vocabulary().tokenize("the young baker");
    StegoConfig {
        alpha: 0.6,
        beta,
        key: SecretKey::from_bytes([0x24; 32]),
        temperature: provider.temperature(),
        private_context: h_p,
        stego_context: h_s,
        max_tokens: 1 << 16,
        rng_seed: 99,
    }
}

pub fn codebook(provider: &NgramProvider, config: &StegoConfig) -> Codebook {
    let mut histogram: BTreeMap<Rank, u64> = BTreeMap::new();
    for line in CORPUS.lines() {
        let (tokens, _) = provider.vocabulary().tokenize(line);
        for rank in compress_message(provider, &tokens, &config.private_context).unwrap() {
            *histogram.entry(rank).or_insert(0) += 1;
        }
    }
    build_codebook(&histogram, 64, provider.vocabulary().len()).unwrap()
}
