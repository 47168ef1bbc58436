//! End-to-end closed-loop checks, including a deliberately naive
//! re-implementation of the extraction algorithm that shares no decoding
//! logic with the library: gates recomputed from scratch over string
//! bitstreams, the codebook walked by literal codeword matching, ranks
//! replayed by sorting probability pairs manually.

mod common;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rankstego_core::stego::{embed, extract, StegoConfig};
use rankstego_core::{
    Codebook, ModelProvider, NgramModel, NgramProvider, SecretKey, Smoothing, TokenId,
};
use std::collections::BTreeMap;

/// Straight-line extraction: provider and codebook are shared inputs (the
/// closed-loop conditions require the identical model and code tables),
/// but every algorithmic step is re-derived here independently.
fn naive_extract<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    stego: &[TokenId],
) -> Option<String> {
    let vocab = provider.vocabulary();
    let eos = vocab.eos();

    // Per-token gate replay -> bit string.
    let mut bits = String::new();
    for (pos, &tok) in stego.iter().enumerate() {
        let dist = provider
            .next_distribution(&stego[..pos], &config.stego_context)
            .ok()?;
        let mut pairs: Vec<(f64, u32)> = (0..vocab.len() as u32)
            .filter(|&id| TokenId(id) != eos)
            .map(|id| (dist.prob_f64(TokenId(id)), id))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let width = 1usize << config.beta;
        let top = &pairs[..width];
        let total: f64 = top.iter().map(|p| p.0).sum();
        let mut entropy = 0.0;
        for (p, _) in top {
            let q = p / total;
            if q > 0.0 {
                entropy -= q * q.log2();
            }
        }
        if entropy >= config.alpha * config.beta as f64 {
            let idx = top.iter().position(|&(_, id)| TokenId(id) == tok)?;
            bits.push_str(&format!("{idx:0width$b}", width = config.beta as usize));
        }
    }

    // Undo the keystream, bit by bit.
    let ks = config.key.keystream(bits.len().div_ceil(8));
    let derandom: String = bits
        .bytes()
        .enumerate()
        .map(|(i, c)| {
            let k = (ks[i / 8] >> (7 - i % 8)) & 1;
            if (c == b'1') ^ (k == 1) {
                '1'
            } else {
                '0'
            }
        })
        .collect();

    // Literal codeword matching against the shared table.
    let mut table: Vec<(String, u32)> = (0..=codebook.table_size())
        .map(|s| (codebook.codeword(s).to_string(), s))
        .collect();
    table.sort_by_key(|(c, _)| c.len());
    let mut ranks: Vec<u32> = Vec::new();
    let mut rest = derandom.as_str();
    'decode: while !rest.is_empty() {
        for (code, sym) in &table {
            if let Some(after) = rest.strip_prefix(code.as_str()) {
                if *sym == codebook.table_size() {
                    let w = codebook.escape_width() as usize;
                    if after.len() < w {
                        break 'decode;
                    }
                    ranks.push(u32::from_str_radix(&after[..w], 2).unwrap());
                    rest = &after[w..];
                } else {
                    ranks.push(*sym);
                    rest = after;
                }
                continue 'decode;
            }
        }
        break; // dangling bits
    }

    // Rank-indexed autoregressive reconstruction under the private context.
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut words: Vec<String> = Vec::new();
    for r in ranks {
        let dist = provider
            .next_distribution(&tokens, &config.private_context)
            .ok()?;
        let mut pairs: Vec<(f64, u32)> = (0..vocab.len() as u32)
            .map(|id| (dist.prob_f64(TokenId(id)), id))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let (_, id) = *pairs.get(r as usize)?;
        if TokenId(id) == eos {
            return Some(words.join(" "));
        }
        words.push(vocab.surface(TokenId(id)).ok()?.to_string());
        tokens.push(TokenId(id));
    }
    None // no EOS reached
}

/// A 16-token world: 14 words plus the specials, bigram model, tau = 1 so
/// the probabilities stay plain rationals.
fn small_world() -> (NgramProvider, StegoConfig) {
    let corpus = "\
sun over sea\nwind over land\nsun warms land\nrain cools sea\n\
birds cross sky\nfish swim deep";
    let model = NgramModel::train(corpus, 2, Smoothing::new(1, 8).unwrap()).unwrap();
    let provider = NgramProvider::new(model, 1.0).unwrap();
    assert_eq!(provider.vocabulary().len(), 16);
    let config = StegoConfig {
        alpha: 0.55,
        beta: 2,
        key: SecretKey::from_bytes([0x11; 32]),
        temperature: 1.0,
        private_context: vec![],
        stego_context: vec![],
        max_tokens: 4096,
        rng_seed: 5,
    };
    (provider, config)
}

fn small_codebook(provider: &NgramProvider, config: &StegoConfig) -> Codebook {
    let mut histogram = BTreeMap::new();
    for line in ["sun over sea", "rain cools land", "fish swim deep"] {
        let (tokens, _) = provider.vocabulary().tokenize(line);
        let ranks = rankstego_core::compress_message(provider, &tokens, &config.private_context)
            .unwrap();
        for r in ranks {
            *histogram.entry(r).or_insert(0) += 1;
        }
    }
    rankstego_core::build_codebook(&histogram, 8, provider.vocabulary().len()).unwrap()
}

#[test]
fn independent_extractor_agrees_with_library() {
    let (provider, base) = small_world();
    let codebook = small_codebook(&provider, &base);
    let words: Vec<&str> = common::message_words(provider.vocabulary());
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let mut checked = 0;
    for trial in 0..50 {
        for beta in [1u8, 2] {
            let mut config = base.clone();
            config.beta = beta;
            config.rng_seed = trial;
            let msg = common::random_message(&mut rng, &words, 48);
            let out = embed(&provider, &config, &codebook, &msg).unwrap();
            let library = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
            let naive = naive_extract(&provider, &config, &codebook, &out.stego_tokens)
                .expect("naive extraction succeeds");
            assert_eq!(library, msg, "library round trip, trial {trial} beta {beta}");
            assert_eq!(naive, msg, "naive agreement, trial {trial} beta {beta}");
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
}

#[test]
fn round_trip_on_the_reference_fixture() {
    let provider = common::provider();
    let config = common::default_config(&provider);
    let codebook = common::codebook(&provider, &config);
    let words = common::message_words(provider.vocabulary());
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for _ in 0..40 {
        let msg = common::random_message(&mut rng, &words, 128);
        let out = embed(provider.as_ref(), &config, &codebook, &msg).unwrap();
        let back = extract(provider.as_ref(), &config, &codebook, &out.stego_tokens).unwrap();
        assert_eq!(back, msg);
    }
}

#[test]
fn naive_extractor_rejects_wrong_key_too() {
    let (provider, config) = small_world();
    let codebook = small_codebook(&provider, &config);
    let out = embed(&provider, &config, &codebook, "sun over sea wind").unwrap();
    let mut wrong = config.clone();
    wrong.key = SecretKey::from_bytes([0x77; 32]);
    let naive = naive_extract(&provider, &wrong, &codebook, &out.stego_tokens);
    assert_ne!(naive, Some("sun over sea wind".to_string()));
}
