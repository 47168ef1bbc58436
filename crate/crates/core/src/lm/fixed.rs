use super::{Distribution, ModelProvider, TokenId, Vocabulary};
use crate::error::{Error, Result};
use num_rational::BigRational;
use std::sync::Arc;

/// A provider that returns the same distribution for every context.
///
/// Useful as a degenerate channel: a uniform distribution keeps the
/// embedding gate always open, a near-point-mass distribution keeps it
/// always closed. Also the cheapest way to pin a known probability table
/// in tests.
pub struct FixedProvider {
    vocab: Vocabulary,
    dist: Arc<Distribution>,
}

impl FixedProvider {
    pub fn new(vocab: Vocabulary, dist: Distribution) -> Result<FixedProvider> {
        if dist.len() != vocab.len() {
            return Err(Error::Validation(format!(
                "distribution covers {} tokens, vocabulary has {}",
                dist.len(),
                vocab.len()
            )));
        }
        Ok(FixedProvider {
            vocab,
            dist: Arc::new(dist),
        })
    }

    /// Uniform over a synthetic vocabulary of `size` tokens (EOS and UNK
    /// included in the count).
    pub fn uniform(size: usize) -> Result<FixedProvider> {
        if size < 2 {
            return Err(Error::Parameter("vocabulary needs at least 2 tokens".into()));
        }
        let vocab = Vocabulary::from_words((0..size - 2).map(|i| format!("w{i:03}")));
        let p = BigRational::new(1.into(), (size as i64).into());
        let dist = Distribution::from_exact(vec![p; size])?;
        FixedProvider::new(vocab, dist)
    }

    /// Nearly all mass on one token: `p(token) = 1 - (|V|-1) * epsilon`
    /// with `epsilon = 1/(|V| * 2^20)`. Entropy is close enough to zero
    /// that no sane gate opens.
    pub fn peaked(size: usize, token: TokenId) -> Result<FixedProvider> {
        if size < 2 || token.index() >= size {
            return Err(Error::Parameter("bad peaked-provider shape".into()));
        }
        let vocab = Vocabulary::from_words((0..size - 2).map(|i| format!("w{i:03}")));
        let eps = BigRational::new(1.into(), ((size as i64) << 20).into());
        let mut probs = vec![eps.clone(); size];
        let rest: BigRational = BigRational::new(((size - 1) as i64).into(), 1.into()) * &eps;
        probs[token.index()] = BigRational::from_integer(1.into()) - rest;
        let dist = Distribution::from_exact(probs)?;
        FixedProvider::new(vocab, dist)
    }
}

impl ModelProvider for FixedProvider {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(
        &self,
        _context: &[TokenId],
        _history: &[TokenId],
    ) -> Result<Arc<Distribution>> {
        Ok(Arc::clone(&self.dist))
    }

    fn describe(&self) -> String {
        format!("fixed(|V|={})", self.vocab.len())
    }
}
