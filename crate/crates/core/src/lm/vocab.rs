use super::TokenId;
use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

/// Surface form of the end-of-sequence marker.
pub const EOS_SURFACE: &str = "</s>";
/// Surface form substituted for out-of-vocabulary words.
pub const UNK_SURFACE: &str = "<unk>";

/// Dense, ordered token table with reserved EOS and UNK entries.
///
/// Tokenization is whitespace word-level: a surface string is split on
/// Unicode whitespace and each word maps to its id, or to UNK when absent.
/// Word surfaces are unique, so the detokenized form (words joined by a
/// single space) re-tokenizes to the same ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
    unk: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from arbitrary words. EOS and UNK always occupy
    /// ids 0 and 1; the remaining words follow in sorted order.
    pub fn from_words<I, S>(words: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for w in words {
            let w = w.as_ref();
            if !w.is_empty() && w != EOS_SURFACE && w != UNK_SURFACE {
                set.insert(w.to_string());
            }
        }
        let mut tokens = vec![EOS_SURFACE.to_string(), UNK_SURFACE.to_string()];
        tokens.extend(set);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), TokenId(i as u32)))
            .collect();
        Vocabulary {
            tokens,
            index,
            eos: TokenId(0),
            unk: TokenId(1),
        }
    }

    /// Vocabulary of every whitespace-delimited word in a corpus.
    pub fn from_corpus(text: &str) -> Vocabulary {
        Vocabulary::from_words(text.split_whitespace())
    }

    /// Rebuilds from an explicit token table (deserialization path).
    /// Validates density implicitly and surface uniqueness explicitly.
    pub fn from_parts(tokens: Vec<String>, eos: TokenId, unk: TokenId) -> Result<Vocabulary> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, s) in tokens.iter().enumerate() {
            if index.insert(s.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate surface {s:?}")));
            }
        }
        for (role, id) in [("eos", eos), ("unk", unk)] {
            if id.index() >= tokens.len() {
                return Err(Error::format("vocabulary", format!("{role} id {id} out of range")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            eos,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id.index())
            .map(String::as_str)
            .ok_or(Error::RankOutOfRange {
                rank: id.0,
                vocab: self.tokens.len(),
            })
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Tokenizes text. Out-of-vocabulary words map to UNK and are returned
    /// separately so callers can warn; the mapping is lossy for them.
    pub fn tokenize(&self, text: &str) -> (Vec<TokenId>, Vec<String>) {
        let mut ids = Vec::new();
        let mut oov = Vec::new();
        for word in text.split_whitespace() {
            match self.id_of(word) {
                Some(id) => ids.push(id),
                None => {
                    oov.push(word.to_string());
                    ids.push(self.unk);
                }
            }
        }
        (ids, oov)
    }

    /// Inverse of [`tokenize`](Self::tokenize) up to whitespace
    /// canonicalization: words joined by single spaces.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            words.push(self.surface(id)?);
        }
        Ok(words.join(" "))
    }
}
