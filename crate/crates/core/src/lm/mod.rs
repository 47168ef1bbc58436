//! Next-token distribution providers.
//!
//! Everything downstream of this module (ranking, embedding, extraction)
//! assumes that a provider is a pure function from a conditioning sequence
//! to a [`Distribution`]: identical inputs must yield bit-identical outputs
//! across calls, processes, and machines. The reference [`NgramProvider`]
//! guarantees this with exact rational arithmetic; the [`RemoteProvider`]
//! validates what an external endpoint returns but cannot enforce it.

mod dist;
mod fixed;
mod ngram;
mod remote;
mod vocab;

pub use dist::{CandidateSet, Distribution, EntropyValue, PROB_SUM_TOLERANCE};
pub use fixed::FixedProvider;
pub use ngram::{NgramModel, NgramProvider, Smoothing};
pub use remote::RemoteProvider;
pub use vocab::{Vocabulary, EOS_SURFACE, UNK_SURFACE};

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Index of a token in a [`Vocabulary`]. Ids are dense: `0..|V|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// A deterministic next-token model.
///
/// The conditioning sequence for a query is `history ++ context`: `history`
/// carries the session prompt and `context` the tokens generated or
/// consumed so far. Providers hold no mutable inference state; all state
/// passes through the arguments, so concurrent read-only queries are safe.
pub trait ModelProvider: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Next-token distribution after `history ++ context`.
    fn next_distribution(&self, context: &[TokenId], history: &[TokenId])
        -> Result<Arc<Distribution>>;

    /// Hard limit on conditioning length, if the backend has one.
    fn max_context(&self) -> Option<usize> {
        None
    }

    /// Label for reports (never used in codec decisions).
    fn describe(&self) -> String;
}
