use super::{Distribution, ModelProvider, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::fixedpoint::fp_pow;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

/// Add-k smoothing constant as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Smoothing {
    pub numer: u64,
    pub denom: u64,
}

impl Smoothing {
    pub fn new(numer: u64, denom: u64) -> Result<Smoothing> {
        if denom == 0 {
            return Err(Error::Parameter("smoothing denominator is zero".into()));
        }
        Ok(Smoothing { numer, denom })
    }

    /// Parses "num/den" or a bare non-negative integer.
    pub fn parse(s: &str) -> Result<Smoothing> {
        let bad = |_| Error::Parameter(format!("cannot parse smoothing constant {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => Smoothing::new(
                n.trim().parse().map_err(bad)?,
                d.trim().parse().map_err(bad)?,
            ),
            None => Smoothing::new(s.trim().parse().map_err(bad)?, 1),
        }
    }

    fn as_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.numer), BigInt::from(self.denom))
    }
}

impl std::fmt::Display for Smoothing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

const MAGIC: &[u8; 4] = b"NGM1";

/// Word-level add-k n-gram model over exact rationals.
///
/// Training reads the corpus line by line, appending EOS to every non-empty
/// line so the end-of-sequence token carries real statistics. Contexts
/// shorter than `n - 1` tokens (and contexts never observed) fall back to
/// the unigram distribution, which degrades to uniform on an empty corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    smoothing: Smoothing,
    vocab: Vocabulary,
    // (n-1)-token context -> token counts. Empty for order 1.
    contexts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>>,
    unigram: BTreeMap<TokenId, u64>,
}

impl NgramModel {
    /// Trains on a corpus, deriving the vocabulary from its words.
    pub fn train(corpus: &str, order: usize, smoothing: Smoothing) -> Result<NgramModel> {
        let vocab = Vocabulary::from_corpus(corpus);
        NgramModel::train_with_vocab(corpus, vocab, order, smoothing)
    }

    /// Trains with an explicit vocabulary (words outside it become UNK).
    pub fn train_with_vocab(
        corpus: &str,
        vocab: Vocabulary,
        order: usize,
        smoothing: Smoothing,
    ) -> Result<NgramModel> {
        if order == 0 {
            return Err(Error::Parameter("n-gram order must be >= 1".into()));
        }
        let total_words: usize = corpus.split_whitespace().count();
        if total_words > 0 && order > total_words {
            return Err(Error::DegenerateModel(format!(
                "order {order} exceeds corpus length of {total_words} tokens"
            )));
        }
        let mut contexts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = BTreeMap::new();
        let mut unigram: BTreeMap<TokenId, u64> = BTreeMap::new();
        for line in corpus.lines() {
            let (mut seq, _oov) = vocab.tokenize(line);
            if seq.is_empty() {
                continue;
            }
            seq.push(vocab.eos());
            for (i, &tok) in seq.iter().enumerate() {
                *unigram.entry(tok).or_insert(0) += 1;
                if order >= 2 && i >= order - 1 {
                    let ctx = seq[i - (order - 1)..i].to_vec();
                    *contexts.entry(ctx).or_default().entry(tok).or_insert(0) += 1;
                }
            }
        }
        Ok(NgramModel {
            order,
            smoothing,
            vocab,
            contexts,
            unigram,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Exact conditional distribution before any temperature transform.
    /// `conditioning` is the full preceding sequence; only its last
    /// `n - 1` tokens matter.
    pub fn base_probs(&self, conditioning: &[TokenId]) -> Vec<BigRational> {
        let counts = self.effective_counts(conditioning);
        let v = self.vocab.len() as u64;
        let k = self.smoothing.as_rational();
        let total: u64 = counts.map(|c| c.values().sum()).unwrap_or(0);
        if total == 0 && self.smoothing.numer == 0 {
            // Empty corpus without smoothing: pin to uniform.
            let u = BigRational::new(BigInt::one(), BigInt::from(v));
            return vec![u; self.vocab.len()];
        }
        let denom = BigRational::from_u64(total).unwrap() + &k * BigRational::from_u64(v).unwrap();
        let counts = self.effective_counts(conditioning);
        (0..self.vocab.len() as u32)
            .map(|id| {
                let c = counts
                    .and_then(|m| m.get(&TokenId(id)))
                    .copied()
                    .unwrap_or(0);
                (BigRational::from_u64(c).unwrap() + &k) / &denom
            })
            .collect()
    }

    /// The count table a conditioning sequence resolves to: the observed
    /// (n-1)-token context when present, otherwise the unigram table.
    fn effective_counts(&self, conditioning: &[TokenId]) -> Option<&BTreeMap<TokenId, u64>> {
        if self.order >= 2 && conditioning.len() >= self.order - 1 {
            let key = &conditioning[conditioning.len() - (self.order - 1)..];
            if let Some(m) = self.contexts.get(key) {
                return Some(m);
            }
        }
        if self.unigram.is_empty() {
            None
        } else {
            Some(&self.unigram)
        }
    }

    /// Cache key: the observed (n-1)-token suffix, or empty for the
    /// unigram fallback (suffix too short or never observed).
    fn cache_key(&self, suffix: &[TokenId]) -> Box<[TokenId]> {
        if self.order >= 2
            && suffix.len() == self.order - 1
            && self.contexts.contains_key(suffix)
        {
            suffix.into()
        } else {
            Box::default()
        }
    }

    /// Writes the versioned binary container (magic "NGM1", little-endian
    /// 64-bit integers throughout). Serialization is canonical: the same
    /// model always produces identical bytes.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u64::<LittleEndian>(self.order as u64)?;
        w.write_u64::<LittleEndian>(self.smoothing.numer)?;
        w.write_u64::<LittleEndian>(self.smoothing.denom)?;
        w.write_u64::<LittleEndian>(self.vocab.len() as u64)?;
        w.write_u64::<LittleEndian>(self.vocab.eos().0 as u64)?;
        w.write_u64::<LittleEndian>(self.vocab.unk().0 as u64)?;
        for surface in self.vocab.surfaces() {
            w.write_u64::<LittleEndian>(surface.len() as u64)?;
            w.write_all(surface.as_bytes())?;
        }
        w.write_u64::<LittleEndian>(self.unigram.len() as u64)?;
        for (tok, count) in &self.unigram {
            w.write_u64::<LittleEndian>(tok.0 as u64)?;
            w.write_u64::<LittleEndian>(*count)?;
        }
        w.write_u64::<LittleEndian>(self.contexts.len() as u64)?;
        for (ctx, entries) in &self.contexts {
            debug_assert_eq!(ctx.len(), self.order - 1);
            for tok in ctx {
                w.write_u64::<LittleEndian>(tok.0 as u64)?;
            }
            w.write_u64::<LittleEndian>(entries.len() as u64)?;
            for (tok, count) in entries {
                w.write_u64::<LittleEndian>(tok.0 as u64)?;
                w.write_u64::<LittleEndian>(*count)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<NgramModel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::format("model", format!("missing magic: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::format("model", format!("bad magic {magic:?}")));
        }
        let order = read_u64(&mut r, "order")? as usize;
        if order == 0 {
            return Err(Error::format("model", "order 0"));
        }
        let numer = read_u64(&mut r, "smoothing numerator")?;
        let denom = read_u64(&mut r, "smoothing denominator")?;
        let smoothing = Smoothing::new(numer, denom)
            .map_err(|e| Error::format("model", e.to_string()))?;
        let vocab_len = read_u64(&mut r, "vocab size")? as usize;
        let eos = TokenId(read_u64(&mut r, "eos id")? as u32);
        let unk = TokenId(read_u64(&mut r, "unk id")? as u32);
        let mut tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = read_u64(&mut r, "surface length")? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)
                .map_err(|e| Error::format("model", format!("truncated surface: {e}")))?;
            tokens.push(String::from_utf8(buf).map_err(|e| {
                Error::format("model", format!("surface is not UTF-8: {e}"))
            })?);
        }
        let vocab = Vocabulary::from_parts(tokens, eos, unk)?;
        let in_range = |tok: TokenId| -> Result<TokenId> {
            if tok.index() < vocab_len {
                Ok(tok)
            } else {
                Err(Error::format("model", format!("token id {tok} out of range")))
            }
        };
        let unigram_len = read_u64(&mut r, "unigram entries")? as usize;
        let mut unigram = BTreeMap::new();
        for _ in 0..unigram_len {
            let tok = in_range(TokenId(read_u64(&mut r, "unigram token")? as u32))?;
            let count = read_u64(&mut r, "unigram count")?;
            unigram.insert(tok, count);
        }
        let num_contexts = read_u64(&mut r, "context entries")? as usize;
        let mut contexts = BTreeMap::new();
        for _ in 0..num_contexts {
            let mut ctx = Vec::with_capacity(order - 1);
            for _ in 0..order - 1 {
                ctx.push(in_range(TokenId(read_u64(&mut r, "context token")? as u32))?);
            }
            let entries_len = read_u64(&mut r, "count entries")? as usize;
            let mut entries = BTreeMap::new();
            for _ in 0..entries_len {
                let tok = in_range(TokenId(read_u64(&mut r, "count token")? as u32))?;
                let count = read_u64(&mut r, "count value")?;
                entries.insert(tok, count);
            }
            contexts.insert(ctx, entries);
        }
        Ok(NgramModel {
            order,
            smoothing,
            vocab,
            contexts,
            unigram,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NgramModel> {
        let bytes = std::fs::read(path)?;
        NgramModel::read_from(&bytes[..])
    }
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    r.read_u64::<LittleEndian>()
        .map_err(|e| Error::format("model", format!("truncated at {what}: {e}")))
}

/// The reference provider: an [`NgramModel`] plus a temperature transform,
/// with distributions memoized per effective context.
///
/// Temperature is applied inside the provider as the renormalized power
/// transform `p^(1/tau)`. For non-integer exponents the power is computed
/// in deterministic fixed point and then renormalized exactly, so the
/// resulting distribution still sums to exactly one and is bit-identical
/// on every platform.
pub struct NgramProvider {
    model: NgramModel,
    temperature: f64,
    // None when tau == 1 (identity); Some(1/tau) as an exact rational otherwise.
    exponent: Option<BigRational>,
    cache: Mutex<HashMap<Box<[TokenId]>, Arc<Distribution>>>,
}

impl NgramProvider {
    pub fn new(model: NgramModel, temperature: f64) -> Result<NgramProvider> {
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::Parameter(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        let exponent = if temperature == 1.0 {
            None
        } else {
            let tau = BigRational::from_f64(temperature).expect("finite temperature");
            Some(tau.recip())
        };
        Ok(NgramProvider {
            model,
            temperature,
            exponent,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn build_distribution(&self, key: &[TokenId]) -> Result<Distribution> {
        let base = self.model.base_probs(key);
        match &self.exponent {
            None => Distribution::from_exact(base),
            Some(e) if e.is_integer() => {
                // Integer exponent keeps the transform exactly rational.
                let exp = e
                    .to_integer()
                    .try_into()
                    .map_err(|_| Error::Parameter("temperature exponent too large".into()))?;
                let powered: Vec<BigRational> =
                    base.iter().map(|p| pow_rational(p, exp)).collect();
                normalize_exact(powered)
            }
            Some(e) => {
                let powered: Vec<BigRational> = base
                    .iter()
                    .map(|p| BigRational::from_integer(fp_pow(p, e)))
                    .collect();
                normalize_exact(powered)
            }
        }
    }
}

fn pow_rational(p: &BigRational, exp: u32) -> BigRational {
    if exp == 1 {
        p.clone()
    } else {
        p.pow(exp as i32)
    }
}

fn normalize_exact(weights: Vec<BigRational>) -> Result<Distribution> {
    let total: BigRational = weights.iter().sum();
    if total.is_zero() {
        return Err(Error::Validation(
            "temperature transform annihilated the distribution".into(),
        ));
    }
    Distribution::from_exact(weights.into_iter().map(|w| w / &total).collect())
}

impl ModelProvider for NgramProvider {
    fn vocabulary(&self) -> &Vocabulary {
        self.model.vocabulary()
    }

    fn next_distribution(
        &self,
        context: &[TokenId],
        history: &[TokenId],
    ) -> Result<Arc<Distribution>> {
        // Only the last n-1 tokens of history ++ context matter.
        let n1 = self.model.order.saturating_sub(1);
        let mut suffix_buf: Vec<TokenId>;
        let suffix: &[TokenId] = if context.len() >= n1 {
            &context[context.len() - n1..]
        } else if history.len() + context.len() >= n1 {
            let from_history = n1 - context.len();
            suffix_buf = Vec::with_capacity(n1);
            suffix_buf.extend_from_slice(&history[history.len() - from_history..]);
            suffix_buf.extend_from_slice(context);
            &suffix_buf
        } else {
            &[]
        };
        for &tok in suffix {
            if !self.vocabulary().contains(tok) {
                return Err(Error::RankOutOfRange {
                    rank: tok.0,
                    vocab: self.vocabulary().len(),
                });
            }
        }
        let key = self.model.cache_key(suffix);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let dist = Arc::new(self.build_distribution(&key)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&dist));
        Ok(dist)
    }

    fn describe(&self) -> String {
        format!(
            "ngram(order={}, smoothing={}, |V|={}, tau={})",
            self.model.order,
            self.model.smoothing,
            self.vocabulary().len(),
            self.temperature
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    // Unigram on "a a a b" with per-line EOS: counts a=3, b=1, </s>=1,
    // N=5, |V|=4, k=1/2 => P(a) = 3.5/7 = 1/2, P(b) = P(</s>) = 3/14,
    // P(<unk>) = 1/14. Hand-derived from the counts and smoothing rule.
    #[test]
    fn unigram_probabilities_hand_checked() {
        let m = NgramModel::train("a a a b", 1, Smoothing::new(1, 2).unwrap()).unwrap();
        let v = m.vocabulary().clone();
        let p = m.base_probs(&[]);
        let a = v.id_of("a").unwrap();
        let b = v.id_of("b").unwrap();
        assert_eq!(p[a.index()], rat(1, 2));
        assert_eq!(p[b.index()], rat(3, 14));
        assert_eq!(p[v.eos().index()], rat(3, 14));
        assert_eq!(p[v.unk().index()], rat(1, 14));
        let sum: BigRational = p.iter().sum();
        assert!(sum.is_one());
        // Order: a first, then the 3/14 tie resolved by id (eos=0 < b=3).
        let provider = NgramProvider::new(m, 1.0).unwrap();
        let d = provider.next_distribution(&[], &[]).unwrap();
        assert_eq!(d.order()[0], a);
        assert_eq!(d.order()[1], v.eos());
        assert_eq!(d.order()[2], b);
        assert_eq!(d.order()[3], v.unk());
    }

    // Bigrams of "a b a b" (+ EOS): a->b twice, b->a once, b-></s> once.
    #[test]
    fn bigram_hand_checked() {
        let m = NgramModel::train("a b a b", 2, Smoothing::new(0, 1).unwrap()).unwrap();
        let v = m.vocabulary().clone();
        let a = v.id_of("a").unwrap();
        let b = v.id_of("b").unwrap();
        // P(b|a) = 1 without smoothing.
        let p = m.base_probs(&[a]);
        assert_eq!(p[b.index()], rat(1, 1));
        // P(a|b) = P(</s>|b) = 1/2.
        let p = m.base_probs(&[b]);
        assert_eq!(p[a.index()], rat(1, 2));
        assert_eq!(p[v.eos().index()], rat(1, 2));
    }

    #[test]
    fn empty_corpus_is_uniform() {
        let vocab = Vocabulary::from_words(["a", "b"]);
        let m =
            NgramModel::train_with_vocab("", vocab, 3, Smoothing::new(0, 1).unwrap()).unwrap();
        let p = m.base_probs(&[TokenId(0), TokenId(1)]);
        assert_eq!(p, vec![rat(1, 4); 4]);
        let provider = NgramProvider::new(m, 1.0).unwrap();
        let d = provider.next_distribution(&[], &[]).unwrap();
        assert_eq!(
            d.order(),
            &[TokenId(0), TokenId(1), TokenId(2), TokenId(3)]
        );
    }

    #[test]
    fn order_larger_than_corpus_is_degenerate() {
        let err = NgramModel::train("a b", 5, Smoothing::new(1, 1).unwrap());
        assert!(matches!(err, Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn unseen_context_falls_back_to_unigram() {
        let m = NgramModel::train("a b a b", 2, Smoothing::new(1, 1).unwrap()).unwrap();
        let v = m.vocabulary().clone();
        let unk = v.unk();
        // <unk> never opens a bigram, so conditioning on it uses unigrams.
        assert_eq!(m.base_probs(&[unk]), m.base_probs(&[]));
    }

    #[test]
    fn save_load_round_trip_is_exact_and_canonical() {
        let m = NgramModel::train("a b c a b\nc c b", 2, Smoothing::new(1, 3).unwrap()).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        let m2 = NgramModel::read_from(&bytes[..]).unwrap();
        assert_eq!(m, m2);
        let mut bytes2 = Vec::new();
        m2.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn truncated_model_file_rejected() {
        let m = NgramModel::train("a b", 2, Smoothing::new(1, 1).unwrap()).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            NgramModel::read_from(&bytes[..]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn providers_from_same_inputs_agree() {
        let corpus = "the cat sat on the mat\nthe dog sat on the log\ncats and dogs";
        let mk = || {
            let m = NgramModel::train(corpus, 2, Smoothing::new(1, 2).unwrap()).unwrap();
            NgramProvider::new(m, 0.7).unwrap()
        };
        let (p1, p2) = (mk(), mk());
        let vocab_len = p1.vocabulary().len() as u32;
        let mut ctx = Vec::new();
        for step in 0..100u32 {
            let d1 = p1.next_distribution(&ctx, &[]).unwrap();
            let d2 = p2.next_distribution(&ctx, &[]).unwrap();
            assert_eq!(*d1, *d2, "step {step}");
            assert!(d1.check_order_invariant());
            ctx.push(TokenId(step * 7 % vocab_len));
        }
    }

    #[test]
    fn integer_exponent_temperature_is_exactly_rational() {
        // tau = 1/2 squares every probability before renormalizing.
        let m = NgramModel::train("a a a b", 1, Smoothing::new(0, 1).unwrap()).unwrap();
        let v = m.vocabulary().clone();
        let provider = NgramProvider::new(m, 0.5).unwrap();
        let d = provider.next_distribution(&[], &[]).unwrap();
        let p = d.exact_probs().unwrap();
        // Base: a=3/5, b=1/5, eos=1/5 -> squared: 9, 1, 1 (25ths) -> /11.
        assert_eq!(p[v.id_of("a").unwrap().index()], rat(9, 11));
        assert_eq!(p[v.id_of("b").unwrap().index()], rat(1, 11));
        assert_eq!(p[v.eos().index()], rat(1, 11));
    }

    #[test]
    fn fixedpoint_temperature_sums_to_one_and_preserves_order() {
        let m = NgramModel::train("a a a b c c", 1, Smoothing::new(1, 2).unwrap()).unwrap();
        let base = NgramProvider::new(m.clone(), 1.0).unwrap();
        let sharpened = NgramProvider::new(m, 0.7).unwrap();
        let d1 = base.next_distribution(&[], &[]).unwrap();
        let d2 = sharpened.next_distribution(&[], &[]).unwrap();
        let sum: BigRational = d2.exact_probs().unwrap().iter().sum();
        assert!(sum.is_one());
        assert_eq!(d1.order(), d2.order());
        // tau < 1 sharpens: the top token gains mass.
        assert!(d2.probs_f64()[d1.order()[0].index()] > d1.probs_f64()[d1.order()[0].index()]);
    }

    #[test]
    fn cache_returns_identical_arcs() {
        let m = NgramModel::train("x y x y", 2, Smoothing::new(1, 1).unwrap()).unwrap();
        let p = NgramProvider::new(m, 0.7).unwrap();
        let x = p.vocabulary().id_of("x").unwrap();
        let d1 = p.next_distribution(&[x], &[]).unwrap();
        let d2 = p.next_distribution(&[x], &[]).unwrap();
        assert!(Arc::ptr_eq(&d1, &d2));
    }
}
