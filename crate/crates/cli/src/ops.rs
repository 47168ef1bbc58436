use crate::{ChannelFormat, Command, FlipParam, SessionArgs, KEY_ENV};
use rankstego_core::ranking::compress_message;
use rankstego_core::stego::{
    embed, extract, verify_closed_loop_between, SessionConfigFile, StegoConfig,
};
use rankstego_core::{
    build_codebook, metrics, Codebook, Error, ModelProvider, NgramModel, NgramProvider, Rank,
    RemoteProvider, Result, SecretKey, Smoothing, TokenId,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::TrainModel {
            corpus,
            order,
            smoothing,
            out,
        } => train_model(&corpus, order, &smoothing, &out),
        Command::TrainCodebook {
            model,
            config,
            calibration,
            table_size,
            out,
        } => train_codebook(&model, &config, &calibration, table_size, &out),
        Command::Embed {
            session,
            message_file,
            out,
            emit,
            seed,
        } => cmd_embed(&session, &message_file, &out, emit, seed),
        Command::Extract {
            session,
            stego,
            out,
            emit,
        } => cmd_extract(&session, &stego, &out, emit),
        Command::Verify {
            session,
            message_file,
            flip,
            seed,
        } => cmd_verify(&session, &message_file, flip, seed),
        Command::Sweep {
            session,
            messages,
            alphas,
            betas,
            out,
            seed,
        } => cmd_sweep(&session, &messages, &alphas, &betas, &out, seed),
    }
}

/// Everything a session subcommand needs, resolved and validated.
struct Session {
    provider: Box<dyn ModelProvider>,
    config: StegoConfig,
    codebook: Codebook,
}

impl Session {
    fn open(args: &SessionArgs) -> Result<Session> {
        let file = SessionConfigFile::load(&args.config)?;
        let model = NgramModel::load(&args.model)?;
        let key = resolve_key(args.key_hex.as_deref())?;
        let provider: Box<dyn ModelProvider> = match &args.endpoint {
            Some(url) => Box::new(RemoteProvider::new(
                url,
                model.vocabulary().clone(),
                file.temperature,
            )),
            None => Box::new(NgramProvider::new(model, file.temperature)?),
        };
        let config = file.resolve(provider.vocabulary(), key)?;
        let codebook = Codebook::load(&args.codebook)?;
        Ok(Session {
            provider,
            config,
            codebook,
        })
    }
}

/// Flag wins over environment; the config file is the last resort (handled
/// by the resolver when this returns None).
fn resolve_key(flag: Option<&str>) -> Result<Option<SecretKey>> {
    if let Some(hex) = flag {
        return Ok(Some(SecretKey::from_hex(hex)?));
    }
    match std::env::var(KEY_ENV) {
        Ok(hex) => Ok(Some(SecretKey::from_hex(&hex)?)),
        Err(_) => Ok(None),
    }
}

fn train_model(corpus: &Path, order: usize, smoothing: &str, out: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(corpus)?;
    let smoothing = Smoothing::parse(smoothing)?;
    let model = NgramModel::train(&text, order, smoothing)?;
    let mut bytes = Vec::new();
    model.write_to(&mut bytes)?;
    write_atomic(out, &bytes)?;
    eprintln!(
        "trained order-{order} model: |V| = {}, saved to {}",
        model.vocabulary().len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_codebook(
    model_path: &Path,
    config_path: &Path,
    calibration: &Path,
    table_size: u32,
    out: &Path,
) -> Result<ExitCode> {
    let file = SessionConfigFile::load(config_path)?;
    let model = NgramModel::load(model_path)?;
    let provider = NgramProvider::new(model, file.temperature)?;
    let vocab = provider.vocabulary();
    let (private_context, oov) = vocab.tokenize(&file.private_context);
    if !oov.is_empty() {
        return Err(Error::Parameter(format!(
            "private context contains out-of-vocabulary words: {oov:?}"
        )));
    }
    let text = std::fs::read_to_string(calibration)?;
    let mut histogram: BTreeMap<Rank, u64> = BTreeMap::new();
    let mut lines = 0usize;
    for line in text.lines() {
        let (tokens, _oov) = vocab.tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        lines += 1;
        for rank in compress_message(&provider, &tokens, &private_context)? {
            *histogram.entry(rank).or_insert(0) += 1;
        }
    }
    if lines == 0 {
        return Err(Error::Parameter("calibration file has no messages".into()));
    }
    let codebook = build_codebook(&histogram, table_size, vocab.len())?;
    let mut bytes = Vec::new();
    codebook.write_to(&mut bytes)?;
    write_atomic(out, &bytes)?;
    eprintln!(
        "calibrated codebook over {lines} messages ({} distinct ranks), saved to {}",
        histogram.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_embed(
    args: &SessionArgs,
    message_file: &Path,
    out: &Path,
    emit: ChannelFormat,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut session = Session::open(args)?;
    if let Some(seed) = seed {
        session.config.rng_seed = seed;
    }
    let message = std::fs::read_to_string(message_file)?;
    let outcome = embed(
        session.provider.as_ref(),
        &session.config,
        &session.codebook,
        &message,
    )?;
    if !outcome.oov_words.is_empty() {
        eprintln!(
            "warning: {} out-of-vocabulary words became {} and will not survive extraction: {:?}",
            outcome.oov_words.len(),
            rankstego_core::UNK_SURFACE,
            outcome.oov_words
        );
    }
    let bytes = render_channel(&outcome.stego_tokens, emit, session.provider.vocabulary())?;
    write_atomic(out, &bytes)?;
    eprintln!(
        "embedded {} bytes into {} stego tokens ({} gated steps)",
        message.len(),
        outcome.stego_tokens.len(),
        outcome.trace.gated_steps()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_extract(
    args: &SessionArgs,
    stego: &Path,
    out: &Path,
    emit: ChannelFormat,
) -> Result<ExitCode> {
    let session = Session::open(args)?;
    let text = std::fs::read_to_string(stego)?;
    let tokens = parse_channel(&text, emit, session.provider.vocabulary())?;
    let message = extract(
        session.provider.as_ref(),
        &session.config,
        &session.codebook,
        &tokens,
    )?;
    write_atomic(out, message.as_bytes())?;
    eprintln!("extracted {} bytes from {} stego tokens", message.len(), tokens.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    args: &SessionArgs,
    message_file: &Path,
    flip: Option<FlipParam>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut session = Session::open(args)?;
    if let Some(seed) = seed {
        session.config.rng_seed = seed;
    }
    let message = std::fs::read_to_string(message_file)?;
    let mut extract_config = session.config.clone();
    if let Some(flip) = flip {
        apply_flip(&mut extract_config, flip);
        eprintln!("flipping {} on the extract side", flip_name(flip));
    }
    let report = verify_closed_loop_between(
        session.provider.as_ref(),
        &session.config,
        &extract_config,
        &session.codebook,
        &message,
    )?;
    print!("{report}");
    Ok(if report.message_match {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn apply_flip(config: &mut StegoConfig, flip: FlipParam) {
    match flip {
        FlipParam::Key => {
            let mut bytes = *config.key.as_bytes();
            for b in &mut bytes {
                *b ^= 0xff;
            }
            config.key = SecretKey::from_bytes(bytes);
        }
        FlipParam::PrivateContext => {
            config.private_context = config.stego_context.clone();
        }
        FlipParam::StegoContext => {
            config.stego_context = config.private_context.clone();
        }
        FlipParam::Alpha => {
            config.alpha = if config.alpha < 0.5 { 0.9 } else { 0.1 };
        }
        FlipParam::Beta => {
            config.beta = if config.beta == 1 { 2 } else { config.beta - 1 };
        }
    }
}

fn flip_name(flip: FlipParam) -> &'static str {
    match flip {
        FlipParam::Key => "key",
        FlipParam::PrivateContext => "private-context",
        FlipParam::StegoContext => "stego-context",
        FlipParam::Alpha => "alpha",
        FlipParam::Beta => "beta",
    }
}

fn cmd_sweep(
    args: &SessionArgs,
    messages: &Path,
    alphas: &[f64],
    betas: &[u8],
    out: &Path,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut session = Session::open(args)?;
    if let Some(seed) = seed {
        session.config.rng_seed = seed;
    }
    let text = std::fs::read_to_string(messages)?;
    let corpus: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    let grid = metrics::sweep(
        session.provider.as_ref(),
        &session.config,
        &session.codebook,
        alphas,
        betas,
        &corpus,
    )?;
    let mut bytes = Vec::new();
    grid.write_jsonl(&mut bytes)?;
    write_atomic(out, &bytes)?;
    for s in &grid.summaries {
        eprintln!(
            "alpha {:>4} beta {}: payload {:>6.2}%  ppl {:>8.3}  ok {}/{}",
            s.alpha,
            s.beta,
            s.payload_pct,
            s.ppl,
            s.messages_ok,
            s.messages_ok + s.messages_failed
        );
    }
    eprintln!("report written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn render_channel(
    tokens: &[TokenId],
    emit: ChannelFormat,
    vocab: &rankstego_core::Vocabulary,
) -> Result<Vec<u8>> {
    match emit {
        ChannelFormat::Tokens => {
            let mut out = String::new();
            for t in tokens {
                out.push_str(&t.to_string());
                out.push('\n');
            }
            Ok(out.into_bytes())
        }
        ChannelFormat::Text => Ok(vocab.detokenize(tokens)?.into_bytes()),
    }
}

fn parse_channel(
    text: &str,
    emit: ChannelFormat,
    vocab: &rankstego_core::Vocabulary,
) -> Result<Vec<TokenId>> {
    match emit {
        ChannelFormat::Tokens => {
            let mut tokens = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let id: u32 = line.parse().map_err(|_| {
                    Error::Desync(format!("stego token channel carries non-decimal line {line:?}"))
                })?;
                if !vocab.contains(TokenId(id)) {
                    return Err(Error::Desync(format!(
                        "stego token {id} outside vocabulary of {}",
                        vocab.len()
                    )));
                }
                tokens.push(TokenId(id));
            }
            Ok(tokens)
        }
        ChannelFormat::Text => {
            let (tokens, oov) = vocab.tokenize(text);
            if !oov.is_empty() {
                return Err(Error::Desync(format!(
                    "stego text contains out-of-vocabulary words: {oov:?}"
                )));
            }
            Ok(tokens)
        }
    }
}

/// Write-temp-then-rename in the destination directory, so a crash never
/// leaves a half-written artifact behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .map_err(|e| Error::Io(std::io::Error::other(format!("persisting {}: {e}", path.display()))))?;
    Ok(())
}
