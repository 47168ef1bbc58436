//! Rank-token mapping: the bijection, per context, between a token and its
//! position in the canonical descending-probability order.
//!
//! Messages compress to ranks under the private context and reconstruct
//! from ranks the same way. Ranks are 0-based: the modal token always has
//! rank 0, and a rank sequence terminates with the rank of EOS so the
//! decoder carries its stop marker in-band.

use crate::error::{Error, Result};
use crate::lm::{ModelProvider, TokenId};

/// 0-based position of a token in a distribution's canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank(pub u32);

impl Rank {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for Rank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// The ranks a message compresses to, one per token plus the EOS rank.
pub type RankSequence = Vec<Rank>;

/// Rank of `token` in the distribution after `private_context ++ prefix`.
pub fn token_to_rank<P: ModelProvider + ?Sized>(
    provider: &P,
    prefix: &[TokenId],
    token: TokenId,
    private_context: &[TokenId],
) -> Result<Rank> {
    let dist = provider.next_distribution(prefix, private_context)?;
    Ok(Rank(dist.rank_of(token)?))
}

/// Token at `rank` in the distribution after `private_context ++ prefix`.
/// Exact inverse of [`token_to_rank`] under the same context.
pub fn rank_to_token<P: ModelProvider + ?Sized>(
    provider: &P,
    prefix: &[TokenId],
    rank: Rank,
    private_context: &[TokenId],
) -> Result<TokenId> {
    let dist = provider.next_distribution(prefix, private_context)?;
    dist.token_at_rank(rank.0)
}

/// Compresses a message to its rank sequence under the private context.
///
/// Autoregressive: the rank at step `t` conditions on the message tokens
/// before `t`. The model's EOS token is appended before ranking, so the
/// output has one rank per message token plus one terminal rank.
pub fn compress_message<P: ModelProvider + ?Sized>(
    provider: &P,
    message_tokens: &[TokenId],
    private_context: &[TokenId],
) -> Result<RankSequence> {
    if message_tokens.is_empty() {
        return Err(Error::Parameter("cannot compress an empty message".into()));
    }
    let eos = provider.vocabulary().eos();
    let mut ranks = Vec::with_capacity(message_tokens.len() + 1);
    for (t, &token) in message_tokens.iter().chain([&eos]).enumerate() {
        ranks.push(token_to_rank(
            provider,
            &message_tokens[..t.min(message_tokens.len())],
            token,
            private_context,
        )?);
    }
    Ok(ranks)
}

/// Outcome of rank decompression, with enough detail for desync diagnosis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decompressed {
    pub tokens: Vec<TokenId>,
    /// Whether an EOS rank terminated decoding. Ranks after it are codec
    /// padding and were ignored.
    pub eos_seen: bool,
    /// Ranks consumed, including the EOS-producing one.
    pub ranks_consumed: usize,
}

/// Reconstructs tokens from ranks under the private context, stopping at
/// the first reconstructed EOS (exclusive) or when ranks run out. Trailing
/// ranks after EOS are ignored; they are codec padding.
pub fn decompress_ranks<P: ModelProvider + ?Sized>(
    provider: &P,
    ranks: &[Rank],
    private_context: &[TokenId],
) -> Result<Vec<TokenId>> {
    decompress_ranks_detailed(provider, ranks, private_context).map(|d| d.tokens)
}

/// [`decompress_ranks`] with the termination details preserved.
pub fn decompress_ranks_detailed<P: ModelProvider + ?Sized>(
    provider: &P,
    ranks: &[Rank],
    private_context: &[TokenId],
) -> Result<Decompressed> {
    if ranks.is_empty() {
        return Err(Error::Parameter("cannot decompress an empty rank sequence".into()));
    }
    let eos = provider.vocabulary().eos();
    let mut tokens: Vec<TokenId> = Vec::new();
    for (consumed, &rank) in ranks.iter().enumerate() {
        let token = rank_to_token(provider, &tokens, rank, private_context)?;
        if token == eos {
            return Ok(Decompressed {
                tokens,
                eos_seen: true,
                ranks_consumed: consumed + 1,
            });
        }
        tokens.push(token);
    }
    let ranks_consumed = ranks.len();
    Ok(Decompressed {
        tokens,
        eos_seen: false,
        ranks_consumed,
    })
}
