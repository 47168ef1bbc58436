//! The embedding and extraction state machines.
//!
//! Embedding: tokenize the message, compress it to ranks under the private
//! context, encode the ranks with the prefix-free codebook, XOR with the
//! keyed keystream, chunk into beta-bit symbols, then generate text under
//! the stego context. At every generation step the top `2^beta` candidates
//! (EOS masked out) are renormalized; when their entropy clears
//! `alpha * beta` the next symbol picks the candidate at that index,
//! otherwise the step is plain temperature sampling and consumes nothing.
//!
//! Extraction replays the generation side deterministically: it recomputes
//! every gate from the stego tokens alone, recovers beta bits per gated
//! step from the emitted token's candidate position, and inverts the codec
//! stack back to the message.

mod config;

pub use config::{SessionConfigFile, StegoConfig};

use crate::codec::{
    self, decode_ranks, encode_ranks, from_beta_symbols, keystream_xor, to_beta_symbols,
    BetaSymbolSequence, BitStream, Codebook,
};
use crate::error::{Error, Result};
use crate::lm::{CandidateSet, Distribution, ModelProvider, TokenId};
use crate::ranking::{self, Decompressed, Rank, RankSequence};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::sync::Arc;

/// One generation step of an embedding session.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Position in the stego token stream.
    pub position: usize,
    /// Normalized entropy of the masked top-`2^beta` candidates, in bits.
    pub entropy_bits: f64,
    /// Whether the entropy gate opened (`E >= alpha * beta`).
    pub gated: bool,
    /// The symbol consumed, present exactly when `gated`.
    pub symbol: Option<u16>,
    /// The emitted token.
    pub token: TokenId,
}

/// Audit record of an embedding run, one entry per generated token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTrace {
    pub steps: Vec<TraceStep>,
}

impl EmbeddingTrace {
    pub fn gated_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.gated).count()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Result of [`embed`]: the stego tokens plus diagnostics.
#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub stego_tokens: Vec<TokenId>,
    pub trace: EmbeddingTrace,
    /// Message words that fell outside the vocabulary and were replaced by
    /// UNK. Their surface forms cannot be recovered.
    pub oov_words: Vec<String>,
}

/// Intermediates of the encoding pipeline, kept for closed-loop reports.
#[derive(Debug, Clone)]
pub struct EncodeStages {
    pub message_tokens: Vec<TokenId>,
    pub oov_words: Vec<String>,
    pub ranks: RankSequence,
    /// Compressed bitstream before randomization.
    pub bits_plain: BitStream,
    /// After the keystream XOR.
    pub bits_random: BitStream,
    pub symbols: BetaSymbolSequence,
}

/// The top-`2^beta` candidate view of a distribution: Eq. view used by both
/// sides of the channel. No masking; the stego loop masks EOS itself.
pub fn norm_entropy(dist: &Distribution, beta: u8) -> Result<Arc<CandidateSet>> {
    dist.candidate_set(beta, None)
}

/// Runs the whole encoding pipeline up to (not including) generation.
pub fn encode_stages<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    message: &str,
) -> Result<EncodeStages> {
    config.validate(provider.vocabulary().len())?;
    let (message_tokens, oov_words) = provider.vocabulary().tokenize(message);
    if message_tokens.is_empty() {
        return Err(Error::Parameter("message is empty after tokenization".into()));
    }
    if !oov_words.is_empty() {
        log::warn!(
            "{} out-of-vocabulary words replaced by {}; they will not survive the round trip",
            oov_words.len(),
            crate::lm::UNK_SURFACE
        );
    }
    let ranks = ranking::compress_message(provider, &message_tokens, &config.private_context)?;
    let bits_plain = encode_ranks(codebook, &ranks)?;
    let bits_random = keystream_xor(&config.key, &bits_plain);
    let symbols = to_beta_symbols(&bits_random, config.beta)?;
    Ok(EncodeStages {
        message_tokens,
        oov_words,
        ranks,
        bits_plain,
        bits_random,
        symbols,
    })
}

/// Generates stego tokens under the stego context, consuming one symbol per
/// gated step. Fails with [`Error::CapacityExhausted`] when `max_tokens`
/// steps cannot absorb all symbols.
pub fn generate_stego_tokens<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    symbols: &BetaSymbolSequence,
) -> Result<(Vec<TokenId>, EmbeddingTrace)> {
    let eos = provider.vocabulary().eos();
    let mut rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut trace = EmbeddingTrace::default();
    let mut cursor = 0usize;
    while cursor < symbols.len() {
        if tokens.len() >= config.max_tokens {
            return Err(Error::CapacityExhausted {
                embedded: cursor,
                total: symbols.len(),
                max_tokens: config.max_tokens,
            });
        }
        let dist = provider.next_distribution(&tokens, &config.stego_context)?;
        let candidates = dist.candidate_set(config.beta, Some(eos))?;
        let gated = candidates
            .entropy()
            .meets_threshold(config.alpha, config.beta);
        let (token, symbol) = if gated {
            let d = symbols.symbols()[cursor];
            cursor += 1;
            let token = candidates
                .token_at(d as usize)
                .expect("symbol fits candidate width");
            (token, Some(d))
        } else {
            (dist.sample_masked(Some(eos), uniform_unit(&mut rng)), None)
        };
        trace.steps.push(TraceStep {
            position: tokens.len(),
            entropy_bits: candidates.entropy().bits(),
            gated,
            symbol,
            token,
        });
        tokens.push(token);
    }
    Ok((tokens, trace))
}

/// Embeds a message, returning the stego tokens and the per-step trace.
pub fn embed<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    message: &str,
) -> Result<EmbedOutcome> {
    let stages = encode_stages(provider, config, codebook, message)?;
    let (stego_tokens, trace) = generate_stego_tokens(provider, config, &stages.symbols)?;
    Ok(EmbedOutcome {
        stego_tokens,
        trace,
        oov_words: stages.oov_words,
    })
}

/// How far an extraction got, with every intermediate it produced. The
/// closed-loop report compares these against [`EncodeStages`].
#[derive(Debug, Default)]
pub struct DecodeProgress {
    /// Concatenated beta-bit chunks recovered from gated steps.
    pub bits_recovered: Option<BitStream>,
    /// After undoing the keystream XOR.
    pub bits_derandom: Option<BitStream>,
    pub ranks: Option<Vec<Rank>>,
    pub decompressed: Option<Decompressed>,
    pub message: Option<String>,
    pub error: Option<Error>,
}

impl DecodeProgress {
    fn fail(mut self, error: Error) -> DecodeProgress {
        self.error = Some(error);
        self
    }
}

/// Replays the stego tokens and inverts the codec stack, recording every
/// intermediate. Never panics on desync; the error lands in the result.
pub fn decode_progress<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    stego_tokens: &[TokenId],
) -> DecodeProgress {
    let mut progress = DecodeProgress::default();
    if let Err(e) = config.validate(provider.vocabulary().len()) {
        return progress.fail(e);
    }
    let eos = provider.vocabulary().eos();
    let mut bits = BitStream::new();
    for (pos, &token) in stego_tokens.iter().enumerate() {
        let dist = match provider.next_distribution(&stego_tokens[..pos], &config.stego_context) {
            Ok(d) => d,
            Err(e) => return progress.fail(e),
        };
        let candidates = match dist.candidate_set(config.beta, Some(eos)) {
            Ok(c) => c,
            Err(e) => return progress.fail(e),
        };
        if candidates
            .entropy()
            .meets_threshold(config.alpha, config.beta)
        {
            match candidates.position_of(token) {
                Some(idx) => bits.push_uint(idx as u64, config.beta as u32),
                None => {
                    return progress.fail(Error::Desync(format!(
                        "gated token {token} at step {pos} is not among the top {} candidates",
                        candidates.candidates().len()
                    )))
                }
            }
        }
    }
    progress.bits_recovered = Some(bits.clone());
    let derandom = keystream_xor(&config.key, &bits);
    progress.bits_derandom = Some(derandom.clone());
    let ranks = decode_ranks(codebook, &derandom);
    progress.ranks = Some(ranks.clone());
    let decompressed =
        match ranking::decompress_ranks_detailed(provider, &ranks, &config.private_context) {
            Ok(d) => d,
            Err(Error::RankOutOfRange { rank, vocab }) => {
                return progress.fail(Error::Desync(format!(
                    "decoded rank {rank} outside vocabulary of {vocab}"
                )))
            }
            Err(Error::Parameter(_)) => {
                return progress.fail(Error::Desync(
                    "no ranks recovered from the stego text".into(),
                ))
            }
            Err(e) => return progress.fail(e),
        };
    if !decompressed.eos_seen {
        progress.decompressed = Some(decompressed);
        return progress.fail(Error::Desync(
            "ranks exhausted before an end-of-sequence marker".into(),
        ));
    }
    match provider.vocabulary().detokenize(&decompressed.tokens) {
        Ok(text) => {
            progress.decompressed = Some(decompressed);
            progress.message = Some(text);
        }
        Err(e) => return progress.fail(e),
    }
    progress
}

/// Extracts the message from stego tokens. Requires the same provider and
/// config the sender used; anything else surfaces as [`Error::Desync`] or
/// a garbled message.
pub fn extract<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    stego_tokens: &[TokenId],
) -> Result<String> {
    let mut progress = decode_progress(provider, config, codebook, stego_tokens);
    if let Some(e) = progress.error.take() {
        return Err(e);
    }
    Ok(progress.message.expect("message set when no error"))
}

/// One stage comparison of a closed-loop run.
#[derive(Debug, Clone)]
pub struct StageCheck {
    pub stage: &'static str,
    pub matched: bool,
    pub detail: String,
}

/// Stage-by-stage equality report between an embed and an extract run.
#[derive(Debug)]
pub struct ClosedLoopReport {
    pub stages: Vec<StageCheck>,
    pub message_match: bool,
    pub recovered: Option<String>,
    pub extract_error: Option<String>,
    pub trace: EmbeddingTrace,
    pub stego_tokens: Vec<TokenId>,
}

impl std::fmt::Display for ClosedLoopReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.stages {
            writeln!(
                f,
                "{} {:<24} {}",
                if s.matched { "ok  " } else { "FAIL" },
                s.stage,
                s.detail
            )?;
        }
        if let Some(e) = &self.extract_error {
            writeln!(f, "extract error: {e}")?;
        }
        writeln!(
            f,
            "message: {}",
            if self.message_match { "recovered exactly" } else { "MISMATCH" }
        )
    }
}

/// Embeds with `embed_config`, extracts with `extract_config`, and reports
/// which pipeline stages still agree. With identical configs every stage
/// matches; a flipped key, context, or gate parameter shows up at the
/// stage it corrupts first.
pub fn verify_closed_loop_between<P: ModelProvider + ?Sized>(
    provider: &P,
    embed_config: &StegoConfig,
    extract_config: &StegoConfig,
    codebook: &Codebook,
    message: &str,
) -> Result<ClosedLoopReport> {
    let enc = encode_stages(provider, embed_config, codebook, message)?;
    let (stego_tokens, trace) = generate_stego_tokens(provider, embed_config, &enc.symbols)?;
    let dec = decode_progress(provider, extract_config, codebook, &stego_tokens);

    let mut stages = Vec::new();
    let padded = from_beta_symbols(&enc.symbols)?;
    stages.push(compare_bits(
        "randomized-bitstream",
        &padded,
        dec.bits_recovered.as_ref(),
        0,
    ));
    stages.push(compare_bits(
        "derandomized-bitstream",
        &enc.bits_plain,
        dec.bits_derandom.as_ref(),
        padded.len() - enc.bits_random.len(),
    ));
    let symbol_detail = match &dec.bits_recovered {
        Some(bits) => {
            let got = to_beta_symbols(bits, extract_config.beta)
                .map(|s| s.symbols().to_vec())
                .unwrap_or_default();
            let matched = got == enc.symbols.symbols();
            StageCheck {
                stage: "beta-symbols",
                matched,
                detail: format!("sent {}, recovered {}", enc.symbols.len(), got.len()),
            }
        }
        None => StageCheck {
            stage: "beta-symbols",
            matched: false,
            detail: "never recovered".into(),
        },
    };
    stages.push(symbol_detail);
    let rank_check = match (&dec.ranks, &dec.decompressed) {
        (Some(ranks), maybe_dec) => {
            let consumed = maybe_dec
                .as_ref()
                .map(|d| d.ranks_consumed)
                .unwrap_or(ranks.len());
            let matched = ranks[..consumed.min(ranks.len())] == enc.ranks[..];
            StageCheck {
                stage: "rank-sequence",
                matched,
                detail: format!(
                    "sent {}, decoded {} (consumed {consumed})",
                    enc.ranks.len(),
                    ranks.len()
                ),
            }
        }
        (None, _) => StageCheck {
            stage: "rank-sequence",
            matched: false,
            detail: "never decoded".into(),
        },
    };
    stages.push(rank_check);

    let message_match = dec.message.as_deref() == Some(message);
    stages.push(StageCheck {
        stage: "message",
        matched: message_match,
        detail: match &dec.message {
            Some(m) => format!("recovered {} bytes", m.len()),
            None => "not recovered".into(),
        },
    });

    Ok(ClosedLoopReport {
        stages,
        message_match,
        recovered: dec.message,
        extract_error: dec.error.map(|e| e.to_string()),
        trace,
        stego_tokens,
    })
}

/// [`verify_closed_loop_between`] with one shared config: the matched case.
pub fn verify_closed_loop<P: ModelProvider + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    message: &str,
) -> Result<ClosedLoopReport> {
    verify_closed_loop_between(provider, config, config, codebook, message)
}

fn compare_bits(
    stage: &'static str,
    sent: &BitStream,
    got: Option<&BitStream>,
    padding: usize,
) -> StageCheck {
    match got {
        Some(got) => {
            // The recovered stream carries up to beta-1 padding bits beyond
            // the sent prefix; compare the meaningful prefix.
            let prefix = sent.len().saturating_sub(padding);
            let matched = got.len() + padding >= sent.len()
                && (0..prefix).all(|i| sent.get(i) == got.get(i));
            StageCheck {
                stage,
                matched,
                detail: format!("sent {} bits, recovered {} bits", sent.len(), got.len()),
            }
        }
        None => StageCheck {
            stage,
            matched: false,
            detail: "never recovered".into(),
        },
    }
}

/// One uniform draw in [0, 1): the top 53 bits of a ChaCha word, scaled.
/// Pinned here so the sampler never depends on `rand` internals.
fn uniform_unit(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub use codec::SecretKey;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_codebook;
    use crate::lm::{FixedProvider, NgramModel, NgramProvider, Smoothing};
    use std::collections::BTreeMap;

    fn test_provider() -> NgramProvider {
        let corpus = "\
the quick brown fox jumps over the lazy dog near the old mill
pack my box with five dozen liquor jugs before noon
how vexingly quick daft zebras jump across the wide river
the old dog sleeps near the warm fire while rain falls
five quick foxes carry seven jugs across the frozen lake
my lazy zebra naps under the brown box near the mill";
        let model = NgramModel::train(corpus, 2, Smoothing::new(1, 2).unwrap()).unwrap();
        NgramProvider::new(model, 0.7).unwrap()
    }

    fn test_codebook(provider: &NgramProvider, config: &StegoConfig) -> Codebook {
        let mut histogram: BTreeMap<Rank, u64> = BTreeMap::new();
        for line in ["the quick brown fox", "five lazy dogs", "rain falls near the mill"] {
            let (tokens, _) = provider.vocabulary().tokenize(line);
            let ranks =
                ranking::compress_message(provider, &tokens, &config.private_context).unwrap();
            for r in ranks {
                *histogram.entry(r).or_insert(0) += 1;
            }
        }
        build_codebook(&histogram, 16, provider.vocabulary().len()).unwrap()
    }

    fn test_config(key_byte: u8) -> StegoConfig {
        StegoConfig {
            alpha: 0.6,
            beta: 3,
            key: SecretKey::from_bytes([key_byte; 32]),
            temperature: 0.7,
            private_context: vec![],
            stego_context: vec![],
            max_tokens: 4096,
            rng_seed: 7,
        }
    }

    #[test]
    fn round_trip_identity() {
        let provider = test_provider();
        let mut config = test_config(9);
        let (h_p, _) = provider.vocabulary().tokenize("the quick");
        let (h_s, _) = provider.vocabulary().tokenize("five jugs");
        config.private_context = h_p;
        config.stego_context = h_s;
        let codebook = test_codebook(&provider, &config);
        for message in [
            "the quick brown fox",
            "rain falls near the frozen lake",
            "my box",
            "dog",
        ] {
            let out = embed(&provider, &config, &codebook, message).unwrap();
            assert!(out.oov_words.is_empty());
            let back = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
            assert_eq!(back, message, "round trip failed");
        }
    }

    #[test]
    fn trace_invariants_hold() {
        let provider = test_provider();
        let config = test_config(3);
        let codebook = test_codebook(&provider, &config);
        let out = embed(&provider, &config, &codebook, "the quick brown fox jumps").unwrap();
        let threshold = config.alpha * config.beta as f64;
        let mut gated = 0;
        for step in &out.trace.steps {
            assert_eq!(step.gated, step.symbol.is_some());
            if step.gated {
                gated += 1;
                // f64 view of the exact gate decision; generous slack only
                // against display rounding, the decision itself is exact.
                assert!(step.entropy_bits >= threshold - 1e-9);
            } else {
                assert!(step.entropy_bits < threshold + 1e-9);
            }
        }
        // Symbol conservation: gated steps == symbols sent.
        let stages = encode_stages(&provider, &config, &codebook, "the quick brown fox jumps")
            .unwrap();
        assert_eq!(gated, stages.symbols.len());
    }

    #[test]
    fn uniform_provider_gates_every_step() {
        let provider = FixedProvider::uniform(64).unwrap();
        let mut config = test_config(1);
        config.beta = 4;
        let codebook = {
            let mut h = BTreeMap::new();
            h.insert(Rank(0), 4u64);
            h.insert(Rank(1), 2u64);
            build_codebook(&h, 8, 64).unwrap()
        };
        let out = embed(&provider, &config, &codebook, "w000 w001 w002").unwrap();
        assert!(out.trace.steps.iter().all(|s| s.gated));
        let stages = encode_stages(&provider, &config, &codebook, "w000 w001 w002").unwrap();
        assert_eq!(out.stego_tokens.len(), stages.symbols.len());
        let back = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
        assert_eq!(back, "w000 w001 w002");
    }

    #[test]
    fn peaked_provider_exhausts_capacity() {
        let provider = FixedProvider::peaked(64, TokenId(5)).unwrap();
        let mut config = test_config(1);
        config.max_tokens = 50;
        let codebook = {
            let mut h = BTreeMap::new();
            h.insert(Rank(0), 1u64);
            build_codebook(&h, 8, 64).unwrap()
        };
        let err = embed(&provider, &config, &codebook, "w000 w001");
        assert!(matches!(err, Err(Error::CapacityExhausted { .. })));
    }

    #[test]
    fn extraction_is_deterministic_and_seed_free() {
        let provider = test_provider();
        let config = test_config(2);
        let codebook = test_codebook(&provider, &config);
        let out = embed(&provider, &config, &codebook, "the lazy dog sleeps").unwrap();
        let a = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
        let b = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
        assert_eq!(a, b);
        // A different rng_seed must not affect extraction.
        let mut other = test_config(2);
        other.rng_seed = 999;
        let c = extract(&provider, &other, &codebook, &out.stego_tokens).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn embedding_is_deterministic() {
        let provider = test_provider();
        let config = test_config(2);
        let codebook = test_codebook(&provider, &config);
        let a = embed(&provider, &config, &codebook, "five quick foxes").unwrap();
        let b = embed(&provider, &config, &codebook, "five quick foxes").unwrap();
        assert_eq!(a.stego_tokens, b.stego_tokens);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn wrong_key_breaks_the_loop() {
        let provider = test_provider();
        let config = test_config(1);
        let codebook = test_codebook(&provider, &config);
        let mut wrong = config.clone();
        wrong.key = SecretKey::from_bytes([99; 32]);
        let report = verify_closed_loop_between(
            &provider,
            &config,
            &wrong,
            &codebook,
            "the quick brown fox",
        )
        .unwrap();
        assert!(!report.message_match);
        // The gated bits themselves still agree; the XOR stage is where the
        // streams diverge.
        assert!(report.stages.iter().any(|s| s.stage == "randomized-bitstream" && s.matched));
        assert!(
            !report
                .stages
                .iter()
                .find(|s| s.stage == "derandomized-bitstream")
                .unwrap()
                .matched
        );
    }

    #[test]
    fn wrong_private_context_breaks_decoding() {
        let provider = test_provider();
        let mut config = test_config(1);
        let (h_p, _) = provider.vocabulary().tokenize("the quick");
        config.private_context = h_p;
        let codebook = test_codebook(&provider, &config);
        let mut wrong = config.clone();
        let (other, _) = provider.vocabulary().tokenize("frozen rain");
        wrong.private_context = other;
        // "brown" ranks 0 after "quick" but is unseen after "rain", so the
        // first decoded token already diverges under the wrong context.
        let report = verify_closed_loop_between(
            &provider,
            &config,
            &wrong,
            &codebook,
            "brown fox jumps over the river",
        )
        .unwrap();
        assert!(!report.message_match);
        // Bit-level stages are context-free and still match.
        assert!(report.stages.iter().any(|s| s.stage == "derandomized-bitstream" && s.matched));
    }

    #[test]
    fn matched_verify_reports_all_stages_equal() {
        let provider = test_provider();
        let config = test_config(4);
        let codebook = test_codebook(&provider, &config);
        let report =
            verify_closed_loop(&provider, &config, &codebook, "pack my box with five jugs")
                .unwrap();
        assert!(report.message_match);
        assert!(report.stages.iter().all(|s| s.matched), "{report}");
    }

    #[test]
    fn empty_stego_text_fails_cleanly() {
        let provider = test_provider();
        let config = test_config(1);
        let codebook = test_codebook(&provider, &config);
        let err = extract(&provider, &config, &codebook, &[]);
        assert!(matches!(err, Err(Error::Desync(_))));
    }

    #[test]
    fn monotone_channel_use_in_alpha() {
        let provider = test_provider();
        let codebook = test_codebook(&provider, &test_config(5));
        let message = "the quick brown fox jumps over the lazy dog";
        let mut lengths = Vec::new();
        for alpha in [0.3, 0.5, 0.7] {
            let mut config = test_config(5);
            config.alpha = alpha;
            let out = embed(&provider, &config, &codebook, message).unwrap();
            lengths.push(out.stego_tokens.len());
        }
        assert!(lengths[0] <= lengths[1] && lengths[1] <= lengths[2], "{lengths:?}");
    }
}
