use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use pcib::backend::{load_extractor, Backends};
use pcib::commands;
use pcib::server::{serve, ServiceState};
use pcib::{ScoreResponse, Scorer};
use pcib_backends::{BackendError, LanguageModel, MockBackend, TokenLogliks};
use pcib_core::QcaTriple;
use serde_json::{json, Value};

/// Mock LLM that fails on answers containing `FAIL` and parks answers
/// containing `SLOW` until the gate opens.
struct Gated {
    inner: MockBackend,
    entered: AtomicBool,
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gated {
    fn new() -> Arc<Self> {
        Arc::new(Self {
            inner: MockBackend::new(0),
            entered: AtomicBool::new(false),
            open: Mutex::new(false),
            cv: Condvar::new(),
        })
    }

    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }
}

impl LanguageModel for Gated {
    fn answer_token_logliks(&self, q: &str, a: &str, c: Option<&str>) -> pcib_backends::Result<TokenLogliks> {
        if a.contains("FAIL") {
            return Err(BackendError::Transport { status: Some(503), message: "upstream down".into() });
        }
        self.inner.answer_token_logliks(q, a, c)
    }
    fn extract_claims(&self, a: &str, n: usize) -> pcib_backends::Result<Vec<String>> {
        self.inner.extract_claims(a, n)
    }
    fn paraphrase(&self, c: &str, k: usize, t: f64) -> pcib_backends::Result<Vec<String>> {
        self.inner.paraphrase(c, k, t)
    }
    fn reasoning_traces(&self, q: &str, a: &str, m: usize) -> pcib_backends::Result<Vec<String>> {
        if a.contains("SLOW") {
            self.entered.store(true, Ordering::SeqCst);
            let mut open = self.open.lock().unwrap();
            while !*open {
                open = self.cv.wait(open).unwrap();
            }
        }
        self.inner.reasoning_traces(q, a, m)
    }
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}

fn backends(llm: Arc<Gated>) -> Backends {
    Backends { llm, nli: Arc::new(MockBackend::new(0)), model_id: "gated".into() }
}

fn start(llm: Arc<Gated>, max_in_flight: usize) -> SocketAddr {
    let (extractor, _) = load_extractor(None, None).unwrap();
    let state = Arc::new(ServiceState::new(extractor, backends(llm), Scorer::TheoryGuided, 0.5, max_in_flight));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, state).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into()
}

fn post(addr: SocketAddr, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(&format!("http://{addr}/v1/score"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
}

fn triple_json(answer: &str) -> String {
    json!({
        "question": "Where is the Eiffel Tower?",
        "context": "The Eiffel Tower is in Paris. It was completed in 1889.",
        "answer": answer,
    })
    .to_string()
}

#[test]
fn health_reports_model() {
    let addr = start(Gated::new(), 4);
    let mut resp = agent().get(&format!("http://{addr}/health")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let body: Value = resp.body_mut().read_json().unwrap();
    assert_eq!(body, json!({"status": "ok", "model": "theory-guided"}));
}

#[test]
fn score_matches_cli_path() {
    let addr = start(Gated::new(), 4);
    let answer = "It was definitely completed in Berlin in 1920.";
    let (status, body) = post(addr, &triple_json(answer));
    assert_eq!(status, 200, "{body}");
    let served: ScoreResponse = serde_json::from_value(body).unwrap();

    let (extractor, _) = load_extractor(None, None).unwrap();
    let t = QcaTriple::new(
        "x",
        "Where is the Eiffel Tower?",
        "The Eiffel Tower is in Paris. It was completed in 1889.",
        answer,
    )
    .unwrap();
    let direct = commands::score(&t, &extractor, &backends(Gated::new()), &Scorer::TheoryGuided, 0.5).unwrap();
    assert_eq!(served, direct);
}

#[test]
fn empty_body_lists_missing_fields() {
    let addr = start(Gated::new(), 4);
    let (status, body) = post(addr, "{}");
    assert_eq!(status, 400);
    let fields: Vec<&str> = body["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["question", "context", "answer"]);

    let (status, body) = post(addr, r#"{"question": "q", "context": 3, "answer": " "}"#);
    assert_eq!(status, 400);
    assert_eq!(body["fields"].as_array().unwrap().len(), 2);

    let (status, _) = post(addr, "{not json");
    assert_eq!(status, 400);
}

#[test]
fn backend_failure_is_502_and_isolated() {
    let addr = start(Gated::new(), 4);
    let bad = std::thread::spawn(move || post(addr, &triple_json("FAIL here")));
    let (status, good) = post(addr, &triple_json("It is in Paris."));
    let (bad_status, bad_body) = bad.join().unwrap();
    assert_eq!(bad_status, 502);
    assert!(bad_body["detail"].as_str().unwrap().contains("upstream down"), "{bad_body}");
    assert_eq!(status, 200, "{good}");
    assert!(good["risk"].is_number());
}

#[test]
fn overload_is_429() {
    let llm = Gated::new();
    let addr = start(llm.clone(), 1);
    let slow = std::thread::spawn(move || post(addr, &triple_json("SLOW answer")));
    while !llm.entered.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(5));
    }
    let (status, body) = post(addr, &triple_json("It is in Paris."));
    assert_eq!(status, 429, "{body}");
    llm.release();
    assert_eq!(slow.join().unwrap().0, 200);
    assert_eq!(post(addr, &triple_json("It is in Paris.")).0, 200);
}
