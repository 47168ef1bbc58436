//! `rankstego`: train reference models, calibrate codebooks, and run the
//! embed / extract / verify / sweep pipeline from the shell.
//!
//! Exit codes: 0 success, 1 usage or operational error, 2 codec or desync
//! error, 3 message too long for the channel (capacity exhausted).

mod ops;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rankstego_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Environment variable consulted for the session key when `--key-hex` is
/// absent. Precedence: flag, then environment, then the config file.
pub const KEY_ENV: &str = "RANKSTEGO_KEY";

#[derive(Parser)]
#[command(
    name = "rankstego",
    version,
    about = "Hide messages in model-generated text via entropy-gated rank-token mapping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SessionArgs {
    /// Session config JSON (alpha, beta, temperature, contexts, ...).
    #[arg(long)]
    config: PathBuf,
    /// Reference model container (provides the vocabulary everywhere).
    #[arg(long)]
    model: PathBuf,
    /// Codebook container.
    #[arg(long)]
    codebook: PathBuf,
    /// Base URL of a remote inference endpoint; the local model then only
    /// supplies the vocabulary.
    #[arg(long)]
    endpoint: Option<String>,
    /// Session key as 64 hex characters. Prefer the RANKSTEGO_KEY
    /// environment variable: flags leak into shell history.
    #[arg(long)]
    key_hex: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ChannelFormat {
    /// Newline-delimited decimal token ids.
    Tokens,
    /// The detokenized surface string (word vocabularies re-tokenize
    /// unambiguously).
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum FlipParam {
    Key,
    PrivateContext,
    StegoContext,
    Alpha,
    Beta,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference n-gram model from a text corpus.
    TrainModel {
        /// UTF-8 corpus, whitespace word-level tokens, one sequence per line.
        #[arg(long)]
        corpus: PathBuf,
        /// N-gram order (1 = unigram, 2 = bigram, ...).
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Add-k smoothing constant, "num/den" or an integer.
        #[arg(long, default_value = "1/2")]
        smoothing: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the rank codebook from messages compressed under the
    /// private context.
    TrainCodebook {
        #[arg(long)]
        model: PathBuf,
        /// Session config (only the private context is used here).
        #[arg(long)]
        config: PathBuf,
        /// Calibration text, one message per line.
        #[arg(long)]
        calibration: PathBuf,
        /// Huffman table size K; ranks beyond it take the escape path.
        #[arg(long, default_value_t = 256)]
        table_size: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a message file into stego tokens.
    Embed {
        #[command(flatten)]
        session: SessionArgs,
        /// Raw UTF-8 message.
        #[arg(long)]
        message_file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stego channel encoding.
        #[arg(long, value_enum, default_value = "tokens")]
        emit: ChannelFormat,
        /// Overrides the config rng_seed for the non-embedding sampler.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract the message from a stego file.
    Extract {
        #[command(flatten)]
        session: SessionArgs,
        /// Stego file (format per --emit).
        #[arg(long)]
        stego: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "tokens")]
        emit: ChannelFormat,
    },
    /// Embed then extract in-process and report stage-by-stage equality.
    Verify {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        message_file: PathBuf,
        /// Deliberately flip one parameter on the extract side to
        /// demonstrate closed-loop breakage.
        #[arg(long, value_enum)]
        flip: Option<FlipParam>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate payload and text-quality metrics over an alpha/beta grid.
    Sweep {
        #[command(flatten)]
        session: SessionArgs,
        /// Messages, one per line.
        #[arg(long)]
        messages: PathBuf,
        /// Comma-separated alpha values, e.g. 0.4,0.6,0.8.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Comma-separated beta values, e.g. 1,2,3,4.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<u8>,
        /// JSONL report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; everything else is a
            // usage error (exit 1 by contract, not clap's default 2).
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match ops::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Desync(_) | Error::RankOutOfRange { .. } => 2,
        Error::CapacityExhausted { .. } => 3,
        _ => 1,
    }
}
