//! Exercises the inference wire protocol against a real local HTTP server:
//! request shape, response parsing, canonical re-ordering, validation
//! failures, and a full embed/extract round trip through the remote path.

mod common;

use rankstego_core::stego::{embed, extract, StegoConfig};
use rankstego_core::{
    Codebook, ModelProvider, Rank, RemoteProvider, SecretKey, TokenId, Vocabulary,
};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

/// Minimal HTTP server: answers every POST /v1/next-distribution with the
/// body `responder` builds from the parsed request JSON.
fn serve<F>(responder: F) -> (String, thread::JoinHandle<()>)
where
    F: Fn(&serde_json::Value) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            if !handle_request(stream, &responder) {
                break;
            }
        }
    });
    (format!("http://{addr}"), handle)
}

/// Returns false when the client asked the server to stop.
fn handle_request<F>(stream: TcpStream, responder: &F) -> bool
where
    F: Fn(&serde_json::Value) -> (u16, String),
{
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.is_empty() {
        return true;
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() {
            return true;
        }
        if line == "\r\n" || line == "\n" || line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return true;
    }
    if request_line.starts_with("POST /shutdown") {
        return false;
    }
    assert!(
        request_line.starts_with("POST /v1/next-distribution"),
        "unexpected request line: {request_line}"
    );
    let request: serde_json::Value = serde_json::from_slice(&body).expect("request is JSON");
    let (status, response) = responder(&request);
    let mut stream = reader.into_inner();
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response}",
        if status == 200 { "OK" } else { "Error" },
        response.len(),
    );
    true
}

fn stop(url: &str, handle: thread::JoinHandle<()>) {
    let _ = ureq::post(&format!("{url}/shutdown")).send_string("");
    let _ = handle.join();
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_words((0..n - 2).map(|i| format!("w{i:02}")))
}

/// Deterministic synthetic distribution: integer weights derived from the
/// context length, normalized in f64.
fn synthetic_response(vocab_len: usize, request: &serde_json::Value) -> (u16, String) {
    let context = request["context"].as_array().expect("context array");
    let temperature = request["temperature"].as_f64().expect("temperature");
    assert!(temperature > 0.0);
    let salt = context.len() as u64;
    let weights: Vec<u64> = (0..vocab_len as u64)
        .map(|i| 1 + (i * 7 + salt * 13) % 23)
        .collect();
    let total: u64 = weights.iter().sum();
    let probs: Vec<String> = weights
        .iter()
        .enumerate()
        .map(|(id, w)| format!(r#"{{"id": {id}, "p": {}}}"#, *w as f64 / total as f64))
        .collect();
    (200, format!(r#"{{"probs": [{}]}}"#, probs.join(", ")))
}

#[test]
fn wire_protocol_round_trip() {
    let v = vocab(32);
    let vocab_len = v.len();
    let (url, handle) = serve(move |req| synthetic_response(vocab_len, req));
    let provider = RemoteProvider::new(&url, v, 0.7);
    let d0 = provider.next_distribution(&[], &[]).unwrap();
    assert!(d0.check_order_invariant());
    // Deterministic server: the same context yields the same distribution.
    let d0b = provider.next_distribution(&[], &[]).unwrap();
    assert_eq!(*d0, *d0b);
    // Context length changes the synthetic distribution.
    let d1 = provider
        .next_distribution(&[TokenId(3)], &[TokenId(1)])
        .unwrap();
    assert_ne!(*d0, *d1);
    stop(&url, handle);
}

#[test]
fn server_errors_map_to_protocol_errors() {
    let (url, handle) = serve(|_| (500, r#"{"oops": true}"#.to_string()));
    let provider = RemoteProvider::new(&url, vocab(8), 0.7);
    let err = provider.next_distribution(&[], &[]);
    assert!(matches!(err, Err(rankstego_core::Error::Protocol(_))), "{err:?}");
    stop(&url, handle);
}

#[test]
fn truncated_distributions_fail_validation() {
    // Sums to 0.93: outside the 2^-40 band.
    let (url, handle) = serve(|_| {
        (
            200,
            r#"{"probs": [{"id": 0, "p": 0.5}, {"id": 1, "p": 0.43}]}"#.to_string(),
        )
    });
    let provider = RemoteProvider::new(&url, vocab(8), 0.7);
    let err = provider.next_distribution(&[], &[]);
    assert!(matches!(err, Err(rankstego_core::Error::Validation(_))), "{err:?}");
    stop(&url, handle);
}

#[test]
fn top_m_with_tail_mass_is_accepted() {
    let (url, handle) = serve(|_| {
        (
            200,
            r#"{"probs": [{"id": 2, "p": 0.5}, {"id": 5, "p": 0.25}, {"id": 1, "p": 0.125}], "tail_mass": 0.125}"#
                .to_string(),
        )
    });
    let provider = RemoteProvider::new(&url, vocab(8), 0.7);
    let d = provider.next_distribution(&[], &[]).unwrap();
    assert_eq!(&d.order()[..3], &[TokenId(2), TokenId(5), TokenId(1)]);
    assert_eq!(d.tail_mass(), 0.125);
    stop(&url, handle);
}

/// Full pipeline over the wire: embed and extract against the same
/// deterministic endpoint recover the message exactly.
#[test]
fn embed_extract_through_the_remote_provider() {
    let v = vocab(32);
    let vocab_len = v.len();
    let (url, handle) = serve(move |req| synthetic_response(vocab_len, req));
    let provider = RemoteProvider::new(&url, v, 0.7);
    let config = StegoConfig {
        alpha: 0.5,
        beta: 2,
        key: SecretKey::from_bytes([9; 32]),
        temperature: 0.7,
        private_context: vec![],
        stego_context: vec![TokenId(4), TokenId(7)],
        max_tokens: 4096,
        rng_seed: 3,
    };
    let codebook = flat_codebook(vocab_len);
    let message = "w03 w11 w07";
    let out = embed(&provider, &config, &codebook, message).unwrap();
    let back = extract(&provider, &config, &codebook, &out.stego_tokens).unwrap();
    assert_eq!(back, message);
    stop(&url, handle);
}

fn flat_codebook(vocab_len: usize) -> Codebook {
    let mut h: BTreeMap<Rank, u64> = BTreeMap::new();
    for r in 0..8u32 {
        h.insert(Rank(r), 8 - r as u64);
    }
    rankstego_core::build_codebook(&h, 16, vocab_len).unwrap()
}
