//! Evaluation measurements: payload capacity, perplexity, the windowed
//! perplexity over the context/generation boundary, and the alpha/beta
//! sweep harness that drives them over a message corpus.

use crate::codec::Codebook;
use crate::error::{Error, Result};
use crate::lm::{ModelProvider, TokenId, Vocabulary};
use crate::stego::{self, StegoConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// Schema tag carried by every report line.
pub const REPORT_SCHEMA: &str = "eval-v1";

/// Payload capacity in percent: message characters over detokenized stego
/// characters. Character counts are Unicode scalar values.
pub fn payload_capacity(
    message: &str,
    stego_tokens: &[TokenId],
    vocab: &Vocabulary,
) -> Result<f64> {
    if stego_tokens.is_empty() {
        return Err(Error::Parameter(
            "payload capacity undefined for empty stego text".into(),
        ));
    }
    let stego_text = vocab.detokenize(stego_tokens)?;
    let msg_chars = message.chars().count() as f64;
    let stego_chars = stego_text.chars().count() as f64;
    Ok(100.0 * msg_chars / stego_chars)
}

/// Unit-independent companion to [`payload_capacity`]: message bits per
/// stego token.
pub fn bits_per_token(message: &str, stego_tokens: &[TokenId]) -> Result<f64> {
    if stego_tokens.is_empty() {
        return Err(Error::Parameter("no stego tokens".into()));
    }
    Ok((message.len() * 8) as f64 / stego_tokens.len() as f64)
}

/// Perplexity of `tokens` under the provider, conditioning autoregressively
/// on `context` and the preceding tokens: `exp2(mean(-log2 p))`.
///
/// A zero-probability token yields the infinite-perplexity sentinel rather
/// than an error.
pub fn perplexity<P: ModelProvider + ?Sized>(
    provider: &P,
    tokens: &[TokenId],
    context: &[TokenId],
) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Parameter("perplexity of an empty sequence".into()));
    }
    let mut total_bits = 0.0f64;
    for (i, &tok) in tokens.iter().enumerate() {
        let dist = provider.next_distribution(&tokens[..i], context)?;
        let p = dist.prob_f64(tok);
        if p <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total_bits -= p.log2();
    }
    Ok((total_bits / tokens.len() as f64).exp2())
}

/// Perplexity over the context/generation seam: the first
/// `min(10, |generated|)` generated tokens conditioned on the last
/// `min(10, |context|)` context tokens.
pub fn ppl_window<P: ModelProvider + ?Sized>(
    provider: &P,
    context: &[TokenId],
    generated: &[TokenId],
) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Parameter("no generated tokens".into()));
    }
    let gen_n = generated.len().min(10);
    let ctx_n = context.len().min(10);
    perplexity(
        provider,
        &generated[..gen_n],
        &context[context.len() - ctx_n..],
    )
}

/// Metrics of one successful (alpha, beta, message) run.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub payload_pct: f64,
    pub bits_per_token: f64,
    pub ppl: f64,
    pub ppl20: f64,
    pub embed_seconds: f64,
    pub extract_seconds: f64,
    pub stego_tokens: usize,
    pub recovered: bool,
}

/// One (alpha, beta, message) evaluation, failed or not.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema: &'static str,
    pub kind: &'static str,
    pub alpha: f64,
    pub beta: u8,
    pub message_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Config echo carried by summaries. Deliberately excludes the key.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub temperature: f64,
    pub max_tokens: usize,
    pub rng_seed: u64,
    pub scoring_model: String,
}

/// Per-cell summary: means over the messages that succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub schema: &'static str,
    pub kind: &'static str,
    pub alpha: f64,
    pub beta: u8,
    pub messages_ok: usize,
    pub messages_failed: usize,
    pub payload_pct: f64,
    pub bits_per_token: f64,
    pub ppl: f64,
    pub ppl20: f64,
    pub embed_seconds: f64,
    pub extract_seconds: f64,
    pub config: ConfigEcho,
}

/// A full sweep: every run plus one summary per (alpha, beta) cell, in
/// grid order (alphas outer, betas inner).
#[derive(Debug)]
pub struct SweepGrid {
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<EvalReport>,
}

impl SweepGrid {
    pub fn summary_for(&self, alpha: f64, beta: u8) -> Option<&EvalReport> {
        self.summaries
            .iter()
            .find(|s| s.alpha == alpha && s.beta == beta)
    }

    /// JSON lines: every run record, then every cell summary.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for run in &self.runs {
            serde_json::to_writer(&mut w, run)
                .map_err(|e| Error::Validation(format!("serializing report: {e}")))?;
            writeln!(w)?;
        }
        for s in &self.summaries {
            serde_json::to_writer(&mut w, s)
                .map_err(|e| Error::Validation(format!("serializing report: {e}")))?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs embed/extract/score over `messages` for every (alpha, beta) pair.
/// Cells are independent and run in parallel; per-message failures (for
/// example capacity exhaustion at small beta) are recorded in their cell
/// and do not abort the sweep.
pub fn sweep<P: ModelProvider + Sync + ?Sized>(
    provider: &P,
    base_config: &StegoConfig,
    codebook: &Codebook,
    alphas: &[f64],
    betas: &[u8],
    messages: &[String],
) -> Result<SweepGrid> {
    if alphas.is_empty() || betas.is_empty() || messages.is_empty() {
        return Err(Error::Parameter("empty sweep grid or corpus".into()));
    }
    let cells: Vec<(f64, u8)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let per_cell: Vec<(Vec<RunRecord>, EvalReport)> = cells
        .par_iter()
        .map(|&(alpha, beta)| run_cell(provider, base_config, codebook, alpha, beta, messages))
        .collect();
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for (cell_runs, summary) in per_cell {
        runs.extend(cell_runs);
        summaries.push(summary);
    }
    Ok(SweepGrid { runs, summaries })
}

fn run_cell<P: ModelProvider + Sync + ?Sized>(
    provider: &P,
    base: &StegoConfig,
    codebook: &Codebook,
    alpha: f64,
    beta: u8,
    messages: &[String],
) -> (Vec<RunRecord>, EvalReport) {
    let mut config = base.clone();
    config.alpha = alpha;
    config.beta = beta;
    let mut runs = Vec::with_capacity(messages.len());
    let mut ok: Vec<RunMetrics> = Vec::new();
    for (message_index, message) in messages.iter().enumerate() {
        let record = match run_one(provider, &config, codebook, message) {
            Ok(metrics) => {
                ok.push(metrics.clone());
                RunRecord {
                    schema: REPORT_SCHEMA,
                    kind: "run",
                    alpha,
                    beta,
                    message_index,
                    metrics: Some(metrics),
                    error: None,
                }
            }
            Err(e) => RunRecord {
                schema: REPORT_SCHEMA,
                kind: "run",
                alpha,
                beta,
                message_index,
                metrics: None,
                error: Some(e.to_string()),
            },
        };
        runs.push(record);
    }
    let mean = |f: fn(&RunMetrics) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(f).sum::<f64>() / ok.len() as f64
        }
    };
    let summary = EvalReport {
        schema: REPORT_SCHEMA,
        kind: "summary",
        alpha,
        beta,
        messages_ok: ok.len(),
        messages_failed: messages.len() - ok.len(),
        payload_pct: mean(|m| m.payload_pct),
        bits_per_token: mean(|m| m.bits_per_token),
        ppl: mean(|m| m.ppl),
        ppl20: mean(|m| m.ppl20),
        embed_seconds: mean(|m| m.embed_seconds),
        extract_seconds: mean(|m| m.extract_seconds),
        config: ConfigEcho {
            temperature: base.temperature,
            max_tokens: base.max_tokens,
            rng_seed: base.rng_seed,
            scoring_model: provider.describe(),
        },
    };
    (runs, summary)
}

fn run_one<P: ModelProvider + Sync + ?Sized>(
    provider: &P,
    config: &StegoConfig,
    codebook: &Codebook,
    message: &str,
) -> Result<RunMetrics> {
    // Timers wrap the codec calls only; model loading happened long ago.
    let t0 = Instant::now();
    let outcome = stego::embed(provider, config, codebook, message)?;
    let embed_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let recovered = stego::extract(provider, config, codebook, &outcome.stego_tokens)
        .map(|m| m == message)
        .unwrap_or(false);
    let extract_seconds = t1.elapsed().as_secs_f64();
    Ok(RunMetrics {
        payload_pct: payload_capacity(message, &outcome.stego_tokens, provider.vocabulary())?,
        bits_per_token: bits_per_token(message, &outcome.stego_tokens)?,
        ppl: perplexity(provider, &outcome.stego_tokens, &config.stego_context)?,
        ppl20: ppl_window(provider, &config.stego_context, &outcome.stego_tokens)?,
        embed_seconds,
        extract_seconds,
        stego_tokens: outcome.stego_tokens.len(),
        recovered,
    })
}
