//! HTTP+JSON backends.
//!
//! The language model side talks to OpenAI-compatible endpoints:
//!
//! * `POST {base_url}{completions_path}` with
//!   `{"model", "prompt", "max_tokens": 0, "echo": true, "logprobs": 0, "temperature": 0}`;
//!   the response must carry `choices[0].logprobs.{tokens, token_logprobs, text_offset}`
//!   covering the echoed prompt. Servers that cannot echo prompt log-probs are
//!   rejected with [`BackendError::Capability`].
//! * `POST {base_url}{chat_path}` with `{"model", "messages", "temperature", "seed"}`;
//!   the text is read from `choices[0].message.content`.
//!
//! The NLI side posts `{"premise", "hypothesis"}` to its URL and accepts either
//! `{"entailment", "neutral", "contradiction"}` or a list of
//! `{"label", "score"}` objects. Scores are renormalized.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use crate::prompts;
use crate::{
    check_paraphrase_args, check_trace_args, finalize_claims, finalize_variants,
    require_non_empty, require_positive, BackendError, LanguageModel, NliDistribution, NliModel,
    Result, TokenLogliks,
};

pub const ENV_BACKEND_URL: &str = "PCIB_BACKEND_URL";
pub const ENV_BACKEND_KEY: &str = "PCIB_BACKEND_KEY";
pub const ENV_BACKEND_MODEL: &str = "PCIB_BACKEND_MODEL";
pub const ENV_NLI_URL: &str = "PCIB_NLI_URL";
pub const ENV_NLI_KEY: &str = "PCIB_NLI_KEY";

pub const MAX_RETRIES: u32 = 5;

#[derive(Clone)]
pub struct BackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model_name: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retries: u32,
    /// First backoff delay; doubles per attempt, jittered to [0.5, 1.0) of itself.
    pub backoff_base: Duration,
    pub completions_path: String,
    pub chat_path: String,
}

impl std::fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_name", &self.model_name)
            .field("timeout", &self.timeout)
            .field("max_in_flight", &self.max_in_flight)
            .field("retries", &self.retries)
            .finish_non_exhaustive()
    }
}

impl BackendConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_name: model_name.into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 8,
            retries: 3,
            backoff_base: Duration::from_millis(250),
            completions_path: "/v1/completions".into(),
            chat_path: "/v1/chat/completions".into(),
        }
    }

    /// Language model settings from `PCIB_BACKEND_URL`, `PCIB_BACKEND_KEY`
    /// and `PCIB_BACKEND_MODEL`.
    pub fn llm_from_env() -> Result<Self> {
        let url = env_required(ENV_BACKEND_URL)?;
        let model = std::env::var(ENV_BACKEND_MODEL).unwrap_or_else(|_| "default".into());
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var(ENV_BACKEND_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    /// NLI settings from `PCIB_NLI_URL` and `PCIB_NLI_KEY`. The URL is the
    /// full classification endpoint.
    pub fn nli_from_env() -> Result<Self> {
        let url = env_required(ENV_NLI_URL)?;
        let mut cfg = Self::new(url, "nli");
        cfg.api_key = std::env::var(ENV_NLI_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(BackendError::Precondition("max_in_flight must be >= 1".into()));
        }
        if self.retries > MAX_RETRIES {
            return Err(BackendError::Precondition(format!(
                "retries must be <= {MAX_RETRIES}, got {}",
                self.retries
            )));
        }
        if self.base_url.trim().is_empty() {
            return Err(BackendError::Precondition("base_url must not be empty".into()));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

fn env_required(name: &str) -> Result<String> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| BackendError::Precondition(format!("environment variable {name} is not set")))
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

struct HttpJson {
    cfg: BackendConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpJson {
    fn new(cfg: BackendConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = InFlight::new(cfg.max_in_flight);
        Ok(Self {
            cfg,
            agent,
            in_flight,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let jitter: f64 = rand::rng().random_range(0.5..1.0);
        self.cfg.backoff_base.mul_f64(f64::from(1u32 << attempt.min(16)) * jitter)
    }

    /// POSTs a JSON body, retrying transport failures, 429 and 5xx.
    fn post(&self, url: &str, body: &Value) -> Result<Value> {
        let mut last = BackendError::Transport {
            status: None,
            message: "no attempt made".into(),
        };
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let outcome = {
                let _permit = self.in_flight.acquire();
                let mut req = self.agent.post(url).header("Content-Type", "application/json");
                if let Some(key) = &self.cfg.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.send_json(body).and_then(|mut resp| {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string()?;
                    Ok((status, text))
                })
            };
            match outcome {
                Ok((status, text)) if (200..300).contains(&status) => {
                    return serde_json::from_str(&text).map_err(|e| {
                        BackendError::InvalidResponse(format!("response from {url} is not JSON: {e}"))
                    });
                }
                Ok((status, text)) => {
                    let err = BackendError::Transport {
                        status: Some(status),
                        message: format!("{url}: {}", truncate(&text, 200)),
                    };
                    if status != 429 && status < 500 {
                        return Err(err);
                    }
                    log::warn!("attempt {} to {url} failed with HTTP {status}", attempt + 1);
                    last = err;
                }
                Err(e) => {
                    log::warn!("attempt {} to {url} failed: {e}", attempt + 1);
                    last = BackendError::Transport {
                        status: None,
                        message: format!("{url}: {e}"),
                    };
                }
            }
        }
        Err(last)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// OpenAI-compatible language model backend.
pub struct RemoteLlm {
    http: HttpJson,
}

impl RemoteLlm {
    pub fn new(cfg: BackendConfig) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg)?,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.http.cfg
    }

    fn chat(&self, system: &str, user: &str, temperature: f64, seed: u64) -> Result<String> {
        let body = json!({
            "model": self.http.cfg.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
            "seed": seed,
        });
        let resp = self.http.post(&self.http.cfg.url(&self.http.cfg.chat_path), &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::InvalidResponse("chat response lacks choices[0].message.content".into())
            })
    }
}

/// Pulls the answer's tokens out of an echoed completion response.
/// `answer_start` and `answer_end` are character offsets into the prompt.
pub(crate) fn answer_tokens_from_echo(
    resp: &Value,
    answer_start: usize,
    answer_end: usize,
) -> Result<TokenLogliks> {
    let missing = || {
        BackendError::Capability(
            "completion endpoint did not echo prompt token log-probabilities \
             (needs echo=true with logprobs)"
                .into(),
        )
    };
    let lp = resp.pointer("/choices/0/logprobs").ok_or_else(missing)?;
    let tokens = lp.get("tokens").and_then(Value::as_array).ok_or_else(missing)?;
    let values = lp.get("token_logprobs").and_then(Value::as_array).ok_or_else(missing)?;
    let offsets = lp.get("text_offset").and_then(Value::as_array).ok_or_else(missing)?;
    if tokens.len() != values.len() || tokens.len() != offsets.len() {
        return Err(BackendError::InvalidResponse(
            "logprobs arrays have different lengths".into(),
        ));
    }
    let mut out_tokens = Vec::new();
    let mut out_values = Vec::new();
    for ((tok, val), off) in tokens.iter().zip(values).zip(offsets) {
        let tok = tok
            .as_str()
            .ok_or_else(|| BackendError::InvalidResponse("token is not a string".into()))?;
        let off = off
            .as_u64()
            .ok_or_else(|| BackendError::InvalidResponse("text_offset is not an integer".into()))?
            as usize;
        let end = off + tok.chars().count();
        if end <= answer_start || off >= answer_end {
            continue;
        }
        if off < answer_start {
            return Err(BackendError::Capability(format!(
                "token {tok:?} straddles the prompt/answer boundary; cannot align answer tokens"
            )));
        }
        let v = val.as_f64().ok_or_else(|| {
            BackendError::Capability(format!("no log-probability returned for answer token {tok:?}"))
        })?;
        out_tokens.push(tok.to_string());
        out_values.push(v.min(0.0));
    }
    if out_tokens.is_empty() {
        return Err(missing());
    }
    TokenLogliks::new(out_tokens, out_values)
}

impl LanguageModel for RemoteLlm {
    fn answer_token_logliks(
        &self,
        question: &str,
        answer: &str,
        context: Option<&str>,
    ) -> Result<TokenLogliks> {
        require_non_empty("question", question)?;
        require_non_empty("answer", answer)?;
        let prefix = prompts::scoring_prefix(question, context);
        let answer = answer.trim();
        let prompt = format!("{prefix} {answer}");
        let start = prefix.chars().count();
        let end = prompt.chars().count();
        let body = json!({
            "model": self.http.cfg.model_name,
            "prompt": prompt,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0.0,
        });
        let resp = self
            .http
            .post(&self.http.cfg.url(&self.http.cfg.completions_path), &body)?;
        answer_tokens_from_echo(&resp, start, end)
    }

    fn extract_claims(&self, answer: &str, max_claims: usize) -> Result<Vec<String>> {
        require_non_empty("answer", answer)?;
        require_positive("max_claims", max_claims)?;
        let text = self.chat(
            prompts::CLAIMS_SYSTEM,
            &prompts::claims_user(answer, max_claims),
            0.0,
            0,
        )?;
        Ok(finalize_claims(answer, prompts::parse_lines(&text), max_claims))
    }

    fn paraphrase(&self, claim: &str, k: usize, temperature: f64) -> Result<Vec<String>> {
        check_paraphrase_args(claim, k, temperature)?;
        let text = self.chat(
            prompts::PARAPHRASE_SYSTEM,
            &prompts::paraphrase_user(claim, k),
            temperature,
            0,
        )?;
        Ok(finalize_variants(claim, prompts::parse_lines(&text), k))
    }

    fn reasoning_traces(&self, question: &str, answer: &str, m: usize) -> Result<Vec<String>> {
        check_trace_args(question, answer, m)?;
        let user = prompts::trace_user(question, answer);
        (0..m as u64)
            .map(|i| {
                self.chat(prompts::TRACE_SYSTEM, &user, crate::DEFAULT_PARAPHRASE_TEMPERATURE, i)
                    .map(|t| t.trim().to_string())
            })
            .collect()
    }

    fn model_name(&self) -> &str {
        &self.http.cfg.model_name
    }
}

/// NLI classifier behind a JSON endpoint.
pub struct RemoteNli {
    http: HttpJson,
}

impl RemoteNli {
    pub fn new(cfg: BackendConfig) -> Result<Self> {
        Ok(Self {
            http: HttpJson::new(cfg)?,
        })
    }
}

pub(crate) fn parse_nli(resp: &Value) -> Result<NliDistribution> {
    let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_f64);
    if let (Some(e), Some(n), Some(c)) = (
        field(resp, "entailment"),
        field(resp, "neutral"),
        field(resp, "contradiction"),
    ) {
        return NliDistribution::from_raw(e, n, c);
    }
    // Some servers wrap a single prediction in an outer list.
    let list = match resp.as_array() {
        Some(items) if items.len() == 1 && items[0].is_array() => items[0].as_array(),
        other => other,
    };
    if let Some(items) = list {
        let mut scores = [None; 3];
        for item in items {
            let label = item.get("label").and_then(Value::as_str).map(str::to_lowercase);
            let score = item.get("score").and_then(Value::as_f64);
            let slot = match label.as_deref() {
                Some(l) if l.starts_with("entail") => 0,
                Some(l) if l.starts_with("neutral") => 1,
                Some(l) if l.starts_with("contradict") => 2,
                _ => continue,
            };
            scores[slot] = score;
        }
        if let [Some(e), Some(n), Some(c)] = scores {
            return NliDistribution::from_raw(e, n, c);
        }
    }
    Err(BackendError::InvalidResponse(format!(
        "unrecognised NLI response: {}",
        truncate(&resp.to_string(), 200)
    )))
}

impl NliModel for RemoteNli {
    fn nli_probs(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution> {
        require_non_empty("premise", premise)?;
        require_non_empty("hypothesis", hypothesis)?;
        let body = json!({ "premise": premise, "hypothesis": hypothesis });
        let resp = self.http.post(&self.http.cfg.base_url, &body)?;
        parse_nli(&resp)
    }
}
