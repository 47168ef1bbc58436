use super::TokenId;
use crate::error::{Error, Result};
use crate::fixedpoint::{self, fp_log2, fp_mul, prob_to_f64, to_fixed, FRAC};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, Zero};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// Absolute tolerance on the probability sum of floating providers: 2^-40.
pub const PROB_SUM_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;

/// Probability storage. The reference provider keeps exact rationals so
/// sender and receiver agree bit-for-bit; remote providers are doubles.
#[derive(Debug, Clone, PartialEq)]
enum ProbVec {
    Exact(Vec<BigRational>),
    Approx(Vec<f64>),
}

/// Normalized entropy of a candidate set, in the provider's arithmetic.
///
/// `Exact` is a fixed-point value (`fixedpoint::FRAC` fractional bits), so
/// the gate comparison against `alpha * beta` is an integer comparison and
/// cannot drift between platforms. `Approx` is a double computed with a
/// pinned summation order.
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyValue {
    Exact(BigInt),
    Approx(f64),
}

impl EntropyValue {
    /// Entropy in bits, for reports and traces.
    pub fn bits(&self) -> f64 {
        match self {
            EntropyValue::Exact(fp) => fixedpoint::fixed_to_f64(fp),
            EntropyValue::Approx(v) => *v,
        }
    }

    /// The embedding gate: `E >= alpha * beta`.
    pub fn meets_threshold(&self, alpha: f64, beta: u8) -> bool {
        match self {
            EntropyValue::Exact(fp) => {
                let a = BigRational::from_f64(alpha).expect("alpha is finite");
                // E * den >= num * beta * 2^FRAC, all integers.
                fp * a.denom() >= a.numer() * BigInt::from(beta) * (BigInt::one() << FRAC)
            }
            EntropyValue::Approx(v) => *v >= alpha * beta as f64,
        }
    }
}

/// The top `2^beta` tokens of a distribution with their renormalized
/// probabilities and normalized entropy.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    candidates: Vec<TokenId>,
    probs: Vec<f64>,
    entropy: EntropyValue,
    beta: u8,
}

impl CandidateSet {
    /// Candidate tokens in descending-probability order (id tie-break).
    pub fn candidates(&self) -> &[TokenId] {
        &self.candidates
    }

    /// Renormalized candidate probabilities, summing to ~1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy(&self) -> &EntropyValue {
        &self.entropy
    }

    pub fn beta(&self) -> u8 {
        self.beta
    }

    pub fn token_at(&self, symbol: usize) -> Option<TokenId> {
        self.candidates.get(symbol).copied()
    }

    pub fn position_of(&self, token: TokenId) -> Option<usize> {
        self.candidates.iter().position(|&t| t == token)
    }
}

/// A next-token probability distribution with its canonical order:
/// descending probability, ties broken by ascending token id.
///
/// The order and its inverse are fixed at construction; `probs_f64` is a
/// platform-pinned double view used on hot paths (sampling, perplexity).
pub struct Distribution {
    probs: ProbVec,
    probs_f64: Vec<f64>,
    tail_mass: f64,
    order: Vec<TokenId>,
    rank_of: Vec<u32>,
    memo: Mutex<BTreeMap<(u8, bool), Arc<CandidateSet>>>,
}

impl Distribution {
    /// Builds from exact rationals. The sum must be exactly one.
    pub fn from_exact(probs: Vec<BigRational>) -> Result<Distribution> {
        if probs.is_empty() {
            return Err(Error::Validation("empty distribution".into()));
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::Validation("negative probability".into()));
        }
        let sum: BigRational = probs.iter().sum();
        if !sum.is_one() {
            return Err(Error::Validation(format!(
                "exact distribution sums to {sum}, not 1"
            )));
        }
        let order = order_of(probs.len(), |a, b| probs[a].cmp(&probs[b]));
        let probs_f64 = probs.iter().map(prob_to_f64).collect();
        Ok(Distribution::assemble(
            ProbVec::Exact(probs),
            probs_f64,
            0.0,
            order,
        ))
    }

    /// Builds from doubles, e.g. a remote response. `tail_mass` is the
    /// probability mass of tokens the response did not cover; the covered
    /// sum plus tail must land within [`PROB_SUM_TOLERANCE`] of one.
    pub fn from_floats(probs: Vec<f64>, tail_mass: f64) -> Result<Distribution> {
        if probs.is_empty() {
            return Err(Error::Validation("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Validation("probability outside [0, 1]".into()));
        }
        if !tail_mass.is_finite() || tail_mass < 0.0 {
            return Err(Error::Validation("invalid tail mass".into()));
        }
        // Ascending-index summation, pinned.
        let sum: f64 = probs.iter().sum::<f64>() + tail_mass;
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "distribution sums to {sum}, outside 2^-40 of 1"
            )));
        }
        let order = order_of(probs.len(), |a, b| {
            probs[a].partial_cmp(&probs[b]).expect("finite probs")
        });
        let f = probs.clone();
        Ok(Distribution::assemble(ProbVec::Approx(probs), f, tail_mass, order))
    }

    fn assemble(
        probs: ProbVec,
        probs_f64: Vec<f64>,
        tail_mass: f64,
        order: Vec<TokenId>,
    ) -> Distribution {
        let mut rank_of = vec![0u32; order.len()];
        for (rank, tok) in order.iter().enumerate() {
            rank_of[tok.index()] = rank as u32;
        }
        Distribution {
            probs,
            probs_f64,
            tail_mass,
            order,
            rank_of,
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.probs_f64.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs_f64.is_empty()
    }

    /// True when probabilities are exact rationals.
    pub fn is_exact(&self) -> bool {
        matches!(self.probs, ProbVec::Exact(_))
    }

    pub fn prob_f64(&self, token: TokenId) -> f64 {
        self.probs_f64[token.index()]
    }

    pub fn probs_f64(&self) -> &[f64] {
        &self.probs_f64
    }

    pub fn exact_probs(&self) -> Option<&[BigRational]> {
        match &self.probs {
            ProbVec::Exact(v) => Some(v),
            ProbVec::Approx(_) => None,
        }
    }

    /// Mass not covered by this distribution (nonzero only for partial
    /// remote responses).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Tokens in descending-probability order, ties by ascending id.
    pub fn order(&self) -> &[TokenId] {
        &self.order
    }

    /// 0-based position of `token` in the canonical order.
    pub fn rank_of(&self, token: TokenId) -> Result<u32> {
        self.rank_of
            .get(token.index())
            .copied()
            .ok_or(Error::RankOutOfRange {
                rank: token.0,
                vocab: self.len(),
            })
    }

    /// Token at a 0-based rank.
    pub fn token_at_rank(&self, rank: u32) -> Result<TokenId> {
        self.order
            .get(rank as usize)
            .copied()
            .ok_or(Error::RankOutOfRange {
                rank,
                vocab: self.len(),
            })
    }

    /// Verifies the order invariant by scan: a permutation, descending in
    /// probability, equal probabilities resolved by ascending id.
    pub fn check_order_invariant(&self) -> bool {
        if self.order.len() != self.len() {
            return false;
        }
        let mut seen = vec![false; self.len()];
        for t in &self.order {
            if t.index() >= self.len() || seen[t.index()] {
                return false;
            }
            seen[t.index()] = true;
        }
        self.order.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            match &self.probs {
                ProbVec::Exact(p) => {
                    p[a.index()] > p[b.index()] || (p[a.index()] == p[b.index()] && a < b)
                }
                ProbVec::Approx(p) => {
                    p[a.index()] > p[b.index()] || (p[a.index()] == p[b.index()] && a < b)
                }
            }
        })
    }

    /// Top `2^beta` candidates, optionally skipping one masked token
    /// (the EOS during stego generation), with renormalized probabilities
    /// and normalized entropy. Memoized per (beta, masked).
    pub fn candidate_set(&self, beta: u8, mask: Option<TokenId>) -> Result<Arc<CandidateSet>> {
        if beta == 0 || beta > 16 {
            return Err(Error::Parameter(format!("beta {beta} outside 1..=16")));
        }
        let key = (beta, mask.is_some());
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let width = 1usize << beta;
        let candidates: Vec<TokenId> = self
            .order
            .iter()
            .copied()
            .filter(|t| Some(*t) != mask)
            .take(width)
            .collect();
        if candidates.len() < width {
            return Err(Error::Validation(format!(
                "need {width} candidates, vocabulary offers {}",
                candidates.len()
            )));
        }
        let set = Arc::new(self.build_candidate_set(candidates, beta)?);
        self.memo
            .lock()
            .expect("memo lock")
            .insert(key, Arc::clone(&set));
        Ok(set)
    }

    fn build_candidate_set(&self, candidates: Vec<TokenId>, beta: u8) -> Result<CandidateSet> {
        match &self.probs {
            ProbVec::Exact(p) => {
                let total: BigRational =
                    candidates.iter().map(|t| p[t.index()].clone()).sum();
                if total.is_zero() {
                    return Err(Error::Validation("candidate mass is zero".into()));
                }
                let normalized: Vec<BigRational> = candidates
                    .iter()
                    .map(|t| &p[t.index()] / &total)
                    .collect();
                // E = -sum p~ log2 p~ in fixed point; zero terms pinned to 0.
                let mut acc = BigInt::zero();
                for q in &normalized {
                    let fp = to_fixed(q);
                    if fp.is_zero() {
                        continue;
                    }
                    acc -= fp_mul(&fp, &fp_log2(&fp));
                }
                Ok(CandidateSet {
                    probs: normalized.iter().map(prob_to_f64).collect(),
                    candidates,
                    entropy: EntropyValue::Exact(acc),
                    beta,
                })
            }
            ProbVec::Approx(p) => {
                // Pinned: sum and entropy accumulate in ascending candidate
                // index so independently built peers agree.
                let mut total = 0.0f64;
                for t in &candidates {
                    total += p[t.index()];
                }
                if total <= 0.0 {
                    return Err(Error::Validation("candidate mass is zero".into()));
                }
                let normalized: Vec<f64> =
                    candidates.iter().map(|t| p[t.index()] / total).collect();
                let mut entropy = 0.0f64;
                for q in &normalized {
                    if *q > 0.0 {
                        entropy -= q * q.log2();
                    }
                }
                Ok(CandidateSet {
                    probs: normalized,
                    candidates,
                    entropy: EntropyValue::Approx(entropy),
                    beta,
                })
            }
        }
    }

    /// Draws a token from the distribution with one masked token excluded,
    /// using a caller-supplied uniform draw in [0, 1). Walks the canonical
    /// order accumulating mass, so the choice is deterministic in `u`.
    pub fn sample_masked(&self, mask: Option<TokenId>, u: f64) -> TokenId {
        let mut total = 0.0f64;
        for t in &self.order {
            if Some(*t) != mask {
                total += self.probs_f64[t.index()];
            }
        }
        let target = u * total;
        let mut acc = 0.0f64;
        let mut last = None;
        for t in &self.order {
            if Some(*t) == mask {
                continue;
            }
            acc += self.probs_f64[t.index()];
            last = Some(*t);
            if target < acc {
                return *t;
            }
        }
        last.expect("non-empty distribution")
    }
}

impl Clone for Distribution {
    fn clone(&self) -> Self {
        Distribution {
            probs: self.probs.clone(),
            probs_f64: self.probs_f64.clone(),
            tail_mass: self.tail_mass,
            order: self.order.clone(),
            rank_of: self.rank_of.clone(),
            memo: Mutex::new(BTreeMap::new()),
        }
    }
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
            && self.tail_mass == other.tail_mass
            && self.order == other.order
    }
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Distribution")
            .field("len", &self.len())
            .field("exact", &self.is_exact())
            .field("tail_mass", &self.tail_mass)
            .finish_non_exhaustive()
    }
}

fn order_of<F>(n: usize, cmp: F) -> Vec<TokenId>
where
    F: Fn(usize, usize) -> std::cmp::Ordering,
{
    let mut order: Vec<TokenId> = (0..n as u32).map(TokenId).collect();
    order.sort_by(|a, b| cmp(a.index(), b.index()).reverse().then(a.0.cmp(&b.0)));
    order
}
