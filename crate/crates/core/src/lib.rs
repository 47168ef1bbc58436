//! A steganographic codec that hides messages in model-generated text.
//!
//! The pipeline compresses a secret message into token-probability ranks
//! under a private context, encodes the ranks with a prefix-free codebook,
//! randomizes the bits with a keyed keystream, and realizes the resulting
//! beta-bit symbols as token choices while generating ordinary-looking
//! text under a public context. Generation steps only carry payload when
//! the normalized entropy of the top candidates clears `alpha * beta`;
//! low-entropy steps fall back to plain sampling so the text stays
//! coherent. The receiver, holding the same model, contexts, and key,
//! replays the gates deterministically and inverts every stage.
//!
//! Perfect recovery rests on three conditions: contextual alignment
//! (identical private and stego contexts), ranking consistency (the
//! deterministic descending-probability order with id tie-breaks), and
//! key synchronization. The [`lm`] module's reference provider uses exact
//! rational arithmetic plus pinned fixed-point transcendentals so those
//! conditions hold bit-for-bit across platforms.

pub mod codec;
pub mod error;
pub mod fixedpoint;
pub mod lm;
pub mod metrics;
pub mod ranking;
pub mod stego;

pub use codec::{
    build_codebook, decode_ranks, encode_ranks, from_beta_symbols, keystream_xor,
    to_beta_symbols, BetaSymbolSequence, BitStream, Codebook, SecretKey, KEY_LEN,
};
pub use error::{Error, Result};
pub use lm::{
    CandidateSet, Distribution, EntropyValue, FixedProvider, ModelProvider, NgramModel,
    NgramProvider, RemoteProvider, Smoothing, TokenId, Vocabulary, EOS_SURFACE, UNK_SURFACE,
};
pub use metrics::{payload_capacity, perplexity, ppl_window, sweep, EvalReport, SweepGrid};
pub use ranking::{
    compress_message, decompress_ranks, rank_to_token, token_to_rank, Rank, RankSequence,
};
pub use stego::{
    embed, extract, norm_entropy, verify_closed_loop, verify_closed_loop_between,
    ClosedLoopReport, EmbedOutcome, EmbeddingTrace, SessionConfigFile, StegoConfig, TraceStep,
};
