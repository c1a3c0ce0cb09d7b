//! Remote clients against an in-process fake HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use pcib_backends::{BackendConfig, BackendError, LanguageModel, NliModel, RemoteLlm, RemoteNli};
use serde_json::{json, Value};

type Handler = dyn Fn(&str, &Value) -> (u16, String) + Send + Sync;

#[derive(Default)]
struct Stats {
    requests: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
}

struct FakeServer {
    url: String,
    stats: Arc<Stats>,
}

fn read_request(stream: &mut TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((path, serde_json::from_slice(&body).unwrap_or(Value::Null)))
}

impl FakeServer {
    fn start(delay: Duration, handler: Arc<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let stats = Arc::new(Stats::default());
        let shared = Arc::clone(&stats);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let stats = Arc::clone(&shared);
                let handler = Arc::clone(&handler);
                thread::spawn(move || {
                    let Some((path, body)) = read_request(&mut stream) else { return };
                    stats.requests.fetch_add(1, Ordering::SeqCst);
                    let now = stats.active.fetch_add(1, Ordering::SeqCst) + 1;
                    stats.peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(delay);
                    let (status, text) = handler(&path, &body);
                    stats.active.fetch_sub(1, Ordering::SeqCst);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                        text.len()
                    );
                });
            }
        });
        Self { url, stats }
    }

    fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }
}

fn config(url: &str) -> BackendConfig {
    let mut cfg = BackendConfig::new(url, "fake-model");
    cfg.backoff_base = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(10);
    cfg
}

fn nli_ok() -> Arc<Handler> {
    Arc::new(|_, _| (200, json!({"entailment": 0.7, "neutral": 0.2, "contradiction": 0.1}).to_string()))
}

#[test]
fn in_flight_cap_is_never_exceeded() {
    let server = FakeServer::start(Duration::from_millis(40), nli_ok());
    let mut cfg = config(&server.url);
    cfg.max_in_flight = 2;
    let nli = Arc::new(RemoteNli::new(cfg).unwrap());
    let workers: Vec<_> = (0..8)
        .map(|i| {
            let nli = Arc::clone(&nli);
            thread::spawn(move || nli.nli_probs("premise text", &format!("hypothesis {i}")).unwrap())
        })
        .collect();
    for w in workers {
        let d = w.join().unwrap();
        assert!((d.entailment - 0.7).abs() < 1e-12);
    }
    assert_eq!(server.requests(), 8);
    let peak = server.stats.peak.load(Ordering::SeqCst);
    assert!(peak <= 2, "peak concurrency {peak}");
}

#[test]
fn persistent_5xx_exhausts_retries_with_status() {
    let server = FakeServer::start(Duration::ZERO, Arc::new(|_, _| (500, "{\"error\":\"boom\"}".into())));
    let mut cfg = config(&server.url);
    cfg.retries = 3;
    let err = RemoteNli::new(cfg).unwrap().nli_probs("p", "h").unwrap_err();
    assert!(matches!(err, BackendError::Transport { status: Some(500), .. }), "{err:?}");
    assert_eq!(server.requests(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeServer::start(Duration::ZERO, Arc::new(|_, _| (400, "{}".into())));
    let err = RemoteNli::new(config(&server.url)).unwrap().nli_probs("p", "h").unwrap_err();
    assert!(matches!(err, BackendError::Transport { status: Some(400), .. }));
    assert_eq!(server.requests(), 1);
}

#[test]
fn transient_429_then_success() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let server = FakeServer::start(
        Duration::ZERO,
        Arc::new(move |_, _| {
            if seen.fetch_add(1, Ordering::SeqCst) < 2 {
                (429, "{}".into())
            } else {
                (200, json!([{"label": "ENTAILMENT", "score": 0.1}, {"label": "NEUTRAL", "score": 0.3}, {"label": "CONTRADICTION", "score": 0.6}]).to_string())
            }
        }),
    );
    let d = RemoteNli::new(config(&server.url)).unwrap().nli_probs("p", "h").unwrap();
    assert!((d.contradiction - 0.6).abs() < 1e-12);
    assert_eq!(server.requests(), 3);
}

/// Completion endpoint that echoes the prompt as GPT-style tokens (each
/// word carries its leading space) with log-probabilities of -len/10.
fn echo_completion(body: &Value, with_logprobs: bool) -> (u16, String) {
    let prompt = body["prompt"].as_str().unwrap_or_default();
    let mut tokens: Vec<String> = Vec::new();
    let mut offsets = Vec::new();
    for (pos, ch) in prompt.chars().enumerate() {
        let starts_token = match tokens.last() {
            None => true,
            Some(last) => ch.is_whitespace() && !last.trim().is_empty(),
        };
        if starts_token {
            tokens.push(String::new());
            offsets.push(pos);
        }
        tokens.last_mut().unwrap().push(ch);
    }
    let mut values: Vec<Value> = tokens.iter().map(|t| Value::from(-(t.trim().len() as f64) / 10.0)).collect();
    values[0] = Value::Null;
    let logprobs = if with_logprobs {
        json!({"tokens": tokens, "token_logprobs": values, "text_offset": offsets})
    } else {
        Value::Null
    };
    (200, json!({"choices": [{"text": "", "logprobs": logprobs}]}).to_string())
}

#[test]
fn echoed_logprobs_align_to_answer_tokens() {
    let server = FakeServer::start(
        Duration::ZERO,
        Arc::new(|path, body| {
            assert_eq!(path, "/v1/completions");
            assert_eq!(body["echo"], json!(true));
            echo_completion(body, true)
        }),
    );
    let llm = RemoteLlm::new(config(&server.url)).unwrap();
    let with_ctx = llm
        .answer_token_logliks("Where is it?", "It is in Paris.", Some("Paris is in France."))
        .unwrap();
    let tokens: Vec<&str> = with_ctx.tokens().iter().map(|t| t.trim()).collect();
    assert_eq!(tokens, ["It", "is", "in", "Paris."]);
    assert_eq!(with_ctx.logliks(), &[-0.2, -0.2, -0.2, -0.6]);
    let without = llm.answer_token_logliks("Where is it?", "It is in Paris.", None).unwrap();
    assert_eq!(without.tokens(), with_ctx.tokens());
}

#[test]
fn missing_logprobs_is_capability_error() {
    let server = FakeServer::start(Duration::ZERO, Arc::new(|_, body| echo_completion(body, false)));
    let err = RemoteLlm::new(config(&server.url))
        .unwrap()
        .answer_token_logliks("q?", "an answer", None)
        .unwrap_err();
    assert!(matches!(err, BackendError::Capability(_)), "{err:?}");
}

#[test]
fn chat_calls_parse_lists_and_traces() {
    let server = FakeServer::start(
        Duration::ZERO,
        Arc::new(|path, body| {
            assert_eq!(path, "/v1/chat/completions");
            let system = body["messages"][0]["content"].as_str().unwrap_or_default().to_lowercase();
            let content = if system.contains("claim") {
                "1. The tower is in Paris.\n2. It was built in 1889.".to_string()
            } else if system.contains("paraphrase") || system.contains("rewrite") {
                "- The tower stands in Paris.\n- Paris is home to the tower.\n- In Paris is the tower.".to_string()
            } else {
                format!("Trace number {}", body["seed"])
            };
            (200, json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
        }),
    );
    let llm = RemoteLlm::new(config(&server.url)).unwrap();
    let claims = llm
        .extract_claims("The tower is in Paris. It was built in 1889.", 5)
        .unwrap();
    assert_eq!(claims, ["The tower is in Paris.", "It was built in 1889."]);
    let variants = llm.paraphrase("The tower is in Paris.", 3, 0.7).unwrap();
    assert_eq!(variants.len(), 3);
    let traces = llm.reasoning_traces("Where?", "Paris.", 3).unwrap();
    assert_eq!(traces, ["Trace number 0", "Trace number 1", "Trace number 2"]);
    assert_eq!(llm.model_name(), "fake-model");
}

#[test]
fn unreachable_server_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut cfg = config(&url);
    cfg.retries = 1;
    let err = RemoteNli::new(cfg).unwrap().nli_probs("p", "h").unwrap_err();
    assert!(err.is_transport());
}
