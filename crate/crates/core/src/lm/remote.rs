use super::{Distribution, ModelProvider, TokenId, Vocabulary};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::sync::Arc;
use std::time::Duration;

/// Wire path of the inference endpoint.
pub const DISTRIBUTION_PATH: &str = "/v1/next-distribution";

#[derive(Serialize)]
struct WireRequest<'a> {
    context: &'a [TokenId],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireEntry {
    id: u32,
    p: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    probs: Vec<WireEntry>,
    #[serde(default)]
    tail_mass: f64,
}

/// Client for an external logits-serving endpoint.
///
/// Protocol: `POST {base}/v1/next-distribution` with body
/// `{"context": [id, ...], "temperature": t}`; the response is
/// `{"probs": [{"id": id, "p": p}, ...]}` covering the full vocabulary, or
/// a top-M prefix plus an explicit `"tail_mass"`. The canonical descending
/// order (id tie-break) is recomputed locally, never trusted from the wire.
///
/// The endpoint must be deterministic for the closed loop to hold; the
/// client validates shape and mass but cannot enforce determinism.
pub struct RemoteProvider {
    url: String,
    vocab: Vocabulary,
    temperature: f64,
    max_context: Option<usize>,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(base_url: &str, vocab: Vocabulary, temperature: f64) -> RemoteProvider {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .build();
        RemoteProvider {
            url: format!("{}{}", base_url.trim_end_matches('/'), DISTRIBUTION_PATH),
            vocab,
            temperature,
            max_context: None,
            agent,
        }
    }

    pub fn with_max_context(mut self, limit: usize) -> RemoteProvider {
        self.max_context = Some(limit);
        self
    }

    /// Rebuilds a [`Distribution`] from a wire response against `vocab`.
    /// Exposed so the response validation path is testable without a server.
    pub fn distribution_from_response(
        vocab: &Vocabulary,
        response: &[u8],
    ) -> Result<Distribution> {
        let parsed: WireResponse = serde_json::from_slice(response)
            .map_err(|e| Error::Protocol(format!("cannot parse response: {e}")))?;
        if parsed.probs.is_empty() {
            return Err(Error::Protocol("response carries no probabilities".into()));
        }
        let mut probs = vec![0.0f64; vocab.len()];
        let mut seen = vec![false; vocab.len()];
        for entry in &parsed.probs {
            let idx = entry.id as usize;
            if idx >= vocab.len() {
                return Err(Error::Protocol(format!(
                    "token id {} outside vocabulary of {}",
                    entry.id,
                    vocab.len()
                )));
            }
            if seen[idx] {
                return Err(Error::Protocol(format!("duplicate token id {}", entry.id)));
            }
            seen[idx] = true;
            probs[idx] = entry.p;
        }
        Distribution::from_floats(probs, parsed.tail_mass)
    }
}

impl ModelProvider for RemoteProvider {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(
        &self,
        context: &[TokenId],
        history: &[TokenId],
    ) -> Result<Arc<Distribution>> {
        let mut full: Vec<TokenId> = Vec::with_capacity(history.len() + context.len());
        full.extend_from_slice(history);
        full.extend_from_slice(context);
        if let Some(limit) = self.max_context {
            if full.len() > limit {
                return Err(Error::ContextOverflow {
                    got: full.len(),
                    limit,
                });
            }
        }
        let request = WireRequest {
            context: &full,
            temperature: self.temperature,
        };
        let response = self
            .agent
            .post(&self.url)
            .send_json(serde_json::to_value(&request).expect("request serializes"))
            .map_err(|e| match e {
                ureq::Error::Status(code, resp) => Error::Protocol(format!(
                    "endpoint answered {code}: {}",
                    resp.into_string().unwrap_or_default()
                )),
                ureq::Error::Transport(t) => Error::Transport(t.to_string()),
            })?;
        let mut body = Vec::new();
        response
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| Error::Transport(format!("reading response: {e}")))?;
        let dist = Self::distribution_from_response(&self.vocab, &body)?;
        Ok(Arc::new(dist))
    }

    fn max_context(&self) -> Option<usize> {
        self.max_context
    }

    fn describe(&self) -> String {
        format!("remote({}, tau={})", self.url, self.temperature)
    }
}
