//! Single-token completions with label logprobs.
//!
//! A [`Backend`] answers one prompt; [`InferenceClient`] adds retries, the
//! append-only replay cache and order-preserving batch execution on top of
//! it. Backends are a live OpenAI-compatible endpoint (feature `http`), the
//! synthetic-world mock, or anything else implementing the trait.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::{PromptCondition, RenderedPrompt};
use crate::synth::{SynthError, SyntheticWorld};

/// Generation is always limited to one token.
pub const MAX_TOKENS: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `POST {endpoint}/completions` with a flat prompt.
    Completion,
    /// `POST {endpoint}/chat/completions` with system and user messages.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub model_name: String,
    pub endpoint_url: String,
    pub api_style: ApiStyle,
    pub temperature: f64,
    pub seed: u64,
    pub top_logprobs: u32,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            model_name: "meta-llama/Llama-3.1-70B-Instruct".into(),
            endpoint_url: "http://127.0.0.1:8000/v1".into(),
            api_style: ApiStyle::Completion,
            temperature: 0.0,
            seed: 42,
            top_logprobs: 20,
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(InferenceError::Config("temperature must be finite and >= 0".into()));
        }
        if self.top_logprobs == 0 {
            return Err(InferenceError::Config("top_logprobs must be at least 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(InferenceError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Live,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenResponse {
    pub top_token: String,
    /// The endpoint's reported top-k, token to log probability.
    pub logprobs: BTreeMap<String, f64>,
    pub latency_ms: f64,
    pub source: ResponseSource,
}

impl TokenResponse {
    /// Same answer, ignoring latency and provenance.
    pub fn same_content(&self, other: &TokenResponse) -> bool {
        self.top_token == other.top_token && self.logprobs == other.logprobs
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint does not report logprobs: {0}")]
    Capability(String),
    #[error("request rejected ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("mock: {0}")]
    Mock(String),
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("prompt {prompt_hash}: transport failed after {attempts} attempts: {message}")]
    Transport {
        prompt_hash: String,
        attempts: u32,
        message: String,
    },
    #[error("prompt {prompt_hash}: {source}")]
    Backend {
        prompt_hash: String,
        #[source]
        source: BackendError,
    },
    #[error("cache: {0}")]
    Cache(#[from] CacheError),
    #[error("invalid decoding config: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt, config: &DecodingConfig) -> Result<TokenResponse, BackendError>;
}

/// Content hash of everything that determines the model's answer.
pub fn cache_key(prompt: &RenderedPrompt, config: &DecodingConfig) -> String {
    let canonical = json!({
        "system": prompt.system_text,
        "user": prompt.user_text,
        "model": config.model_name,
        "api_style": config.api_style,
        "temperature": config.temperature,
        "seed": config.seed,
        "max_tokens": MAX_TOKENS,
        "top_logprobs": config.top_logprobs,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("cache corruption: key {0} already holds a different response")]
    Corruption(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    top_token: String,
    logprobs: BTreeMap<String, f64>,
    latency_ms: f64,
}

/// Append-only response cache, one JSON object per line.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, TokenResponse>>,
    writer: Mutex<Option<(PathBuf, BufWriter<File>)>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CacheError::Io { path: path.clone(), source };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|source| CacheError::Record {
                    path: path.clone(),
                    line: i + 1,
                    source,
                })?;
                let resp = TokenResponse {
                    top_token: rec.top_token,
                    logprobs: rec.logprobs,
                    latency_ms: rec.latency_ms,
                    source: ResponseSource::Cache,
                };
                match entries.get(&rec.key) {
                    Some(existing) if !resp.same_content(existing) => return Err(CacheError::Corruption(rec.key)),
                    Some(_) => {}
                    None => {
                        entries.insert(rec.key, resp);
                    }
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            writer: Mutex::new(Some((path, BufWriter::new(file)))),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<TokenResponse> {
        self.entries.read().expect("cache lock").get(key).map(|r| TokenResponse {
            source: ResponseSource::Cache,
            ..r.clone()
        })
    }

    /// Stores a response. Re-inserting identical content is a no-op;
    /// different content under an existing key is corruption.
    pub fn insert(&self, key: &str, response: &TokenResponse) -> Result<(), CacheError> {
        let mut entries = self.entries.write().expect("cache lock");
        if let Some(existing) = entries.get(key) {
            if existing.same_content(response) {
                return Ok(());
            }
            return Err(CacheError::Corruption(key.to_string()));
        }
        if let Some((path, w)) = self.writer.lock().expect("cache writer lock").as_mut() {
            let rec = CacheRecord {
                key: key.to_string(),
                top_token: response.top_token.clone(),
                logprobs: response.logprobs.clone(),
                latency_ms: response.latency_ms,
            };
            let line = serde_json::to_string(&rec).expect("cache record serializes");
            let io = |source| CacheError::Io { path: path.clone(), source };
            writeln!(w, "{line}").map_err(io)?;
            w.flush().map_err(io)?;
        }
        entries.insert(key.to_string(), response.clone());
        Ok(())
    }
}

/// Retrying, caching front end over a backend.
pub struct InferenceClient {
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
    config: DecodingConfig,
    backend_calls: AtomicUsize,
    /// Log progress every this many completed tasks in a batch.
    pub progress_every: usize,
}

impl InferenceClient {
    pub fn new(backend: Arc<dyn Backend>, cache: Arc<ResponseCache>, config: DecodingConfig) -> Result<Self, InferenceError> {
        config.validate()?;
        Ok(InferenceClient {
            backend,
            cache,
            config,
            backend_calls: AtomicUsize::new(0),
            progress_every: 1000,
        })
    }

    pub fn config(&self) -> &DecodingConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Number of requests that reached the backend, retries included.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn complete_single_token(&self, prompt: &RenderedPrompt) -> Result<TokenResponse, InferenceError> {
        let key = cache_key(prompt, &self.config);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(prompt, &self.config) {
                Ok(r) => break r,
                Err(BackendError::Transport(message)) => {
                    if attempt >= self.config.max_attempts {
                        return Err(InferenceError::Transport {
                            prompt_hash: key,
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    log::debug!("prompt {key}: attempt {attempt} failed ({message}), retrying in {delay} ms");
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                Err(source) => return Err(InferenceError::Backend { prompt_hash: key, source }),
            }
        };
        if response.logprobs.values().any(|v| *v > 1e-9) {
            log::warn!("prompt {key}: endpoint reported positive logprobs");
        }
        self.cache.insert(&key, &response)?;
        Ok(response)
    }

    /// Runs every prompt, returning results in input order. A failed task
    /// stays in place as an error; the batch never aborts.
    pub fn batch_annotate(
        &self,
        prompts: &[RenderedPrompt],
        parallelism: usize,
    ) -> Vec<Result<TokenResponse, InferenceError>> {
        let parallelism = parallelism.max(1).min(prompts.len().max(1));
        let every = self.progress_every.max(1);
        let done = AtomicUsize::new(0);
        let report = |total: usize| {
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(every) || n == total {
                log::info!("completed {n}/{total}");
            }
        };
        if parallelism == 1 {
            return prompts
                .iter()
                .map(|p| {
                    let r = self.complete_single_token(p);
                    report(prompts.len());
                    r
                })
                .collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<TokenResponse, InferenceError>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..parallelism {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= prompts.len() {
                        break;
                    }
                    let r = self.complete_single_token(&prompts[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                    report(prompts.len());
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }
}

/// How the mock answers direct hate/non-hate prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    /// Echo the thresholded ground-truth score.
    Truth,
    AlwaysHate,
    AlwaysNonHate,
}

/// Backend answering from a synthetic world.
pub struct MockBackend {
    world: Arc<SyntheticWorld>,
    pub baseline_policy: BaselinePolicy,
}

impl MockBackend {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        MockBackend { world, baseline_policy: BaselinePolicy::Truth }
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &RenderedPrompt, _config: &DecodingConfig) -> Result<TokenResponse, BackendError> {
        mock_respond(prompt, &self.world, self.baseline_policy).map_err(|e| BackendError::Mock(e.to_string()))
    }
}

/// Mass reserved for a non-label distractor token in mock responses.
const DISTRACTOR_MASS: f64 = 1e-4;

/// Logprobs whose renormalization over `labels` gives `confidence` to
/// `chosen`, with the remaining mass split evenly across the other labels.
pub fn logprobs_for_confidence(labels: &[String], chosen: usize, confidence: f64) -> BTreeMap<String, f64> {
    let scale = 1.0 - DISTRACTOR_MASS;
    let mut out = BTreeMap::new();
    out.insert("\n".to_string(), DISTRACTOR_MASS.ln());
    let others = labels.len().saturating_sub(1);
    if confidence >= 1.0 - 1e-12 || others == 0 {
        out.insert(labels[chosen].clone(), scale.ln());
        return out;
    }
    let rest = (1.0 - confidence) / others as f64;
    for (k, token) in labels.iter().enumerate() {
        let p = if k == chosen { confidence } else { rest };
        out.insert(token.clone(), (p * scale).ln());
    }
    out
}

/// Deterministic answer of the synthetic world to a rendered prompt.
pub fn mock_respond(
    prompt: &RenderedPrompt,
    world: &SyntheticWorld,
    policy: BaselinePolicy,
) -> Result<TokenResponse, SynthError> {
    let meta = &prompt.meta;
    let labels = &prompt.expected_label_set;
    let (chosen, confidence) = match (meta.condition, meta.attribute) {
        (PromptCondition::Baseline(_), _) | (_, None) => {
            let comment = world.comment(&meta.comment_id)?;
            let hate = match policy {
                BaselinePolicy::Truth => comment.hate_score > crate::corpus::HATE_THRESHOLD,
                BaselinePolicy::AlwaysHate => true,
                BaselinePolicy::AlwaysNonHate => false,
            };
            (usize::from(hate), 0.8)
        }
        (condition, Some(attribute)) => {
            let (label, confidence) = world.world_label(&meta.comment_id, attribute, condition)?;
            (usize::from(label), confidence)
        }
    };
    Ok(TokenResponse {
        top_token: labels[chosen].clone(),
        logprobs: logprobs_for_confidence(labels, chosen, confidence),
        latency_ms: 0.0,
        source: ResponseSource::Mock,
    })
}

/// Request body for a single-token, logprob-enabled completion.
pub fn build_request_body(prompt: &RenderedPrompt, config: &DecodingConfig) -> Value {
    match config.api_style {
        ApiStyle::Completion => json!({
            "model": config.model_name,
            "prompt": format!("{}\n\n{}\n", prompt.system_text, prompt.user_text),
            "max_tokens": MAX_TOKENS,
            "temperature": config.temperature,
            "seed": config.seed,
            "logprobs": config.top_logprobs,
        }),
        ApiStyle::Chat => json!({
            "model": config.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
            "max_tokens": MAX_TOKENS,
            "temperature": config.temperature,
            "seed": config.seed,
            "logprobs": true,
            "top_logprobs": config.top_logprobs,
        }),
    }
}

pub fn request_url(config: &DecodingConfig) -> String {
    let base = config.endpoint_url.trim_end_matches('/');
    let path = match config.api_style {
        ApiStyle::Completion => "/completions",
        ApiStyle::Chat => "/chat/completions",
    };
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}{path}")
    }
}

/// Extracts the generated token and its top-k alternatives.
pub fn parse_response_body(body: &Value, style: ApiStyle) -> Result<(String, BTreeMap<String, f64>), BackendError> {
    let choice = body
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
    let missing = || BackendError::Capability("no top logprobs in response".into());
    match style {
        ApiStyle::Completion => {
            let text = choice.get("text").and_then(Value::as_str).unwrap_or_default().to_string();
            let top = choice
                .pointer("/logprobs/top_logprobs/0")
                .and_then(Value::as_object)
                .ok_or_else(missing)?;
            let logprobs: BTreeMap<String, f64> =
                top.iter().filter_map(|(k, v)| v.as_f64().map(|v| (k.clone(), v))).collect();
            if logprobs.is_empty() {
                return Err(missing());
            }
            Ok((text, logprobs))
        }
        ApiStyle::Chat => {
            let first = choice.pointer("/logprobs/content/0").ok_or_else(missing)?;
            let text = choice
                .pointer("/message/content")
                .and_then(Value::as_str)
                .or_else(|| first.get("token").and_then(Value::as_str))
                .unwrap_or_default()
                .to_string();
            let entries = first.get("top_logprobs").and_then(Value::as_array).ok_or_else(missing)?;
            let mut logprobs = BTreeMap::new();
            for e in entries {
                if let (Some(t), Some(lp)) = (e.get("token").and_then(Value::as_str), e.get("logprob").and_then(Value::as_f64)) {
                    logprobs.insert(t.to_string(), lp);
                }
            }
            if logprobs.is_empty() {
                return Err(missing());
            }
            Ok((text, logprobs))
        }
    }
}

/// OpenAI-compatible HTTP endpoint.
#[cfg(feature = "http")]
pub struct HttpBackend {
    agent: ureq::Agent,
    api_key: Option<String>,
}

#[cfg(feature = "http")]
impl HttpBackend {
    /// Environment variables consulted for the API key, in order.
    pub const API_KEY_VARS: [&'static str; 2] = ["MHS_RECON_API_KEY", "OPENAI_API_KEY"];

    pub fn new(config: &DecodingConfig, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { agent, api_key }
    }

    pub fn from_env(config: &DecodingConfig) -> Self {
        let key = Self::API_KEY_VARS
            .iter()
            .find_map(|v| std::env::var(v).ok().filter(|k| !k.is_empty()));
        Self::new(config, key)
    }
}

#[cfg(feature = "http")]
impl Backend for HttpBackend {
    fn complete(&self, prompt: &RenderedPrompt, config: &DecodingConfig) -> Result<TokenResponse, BackendError> {
        let url = request_url(config);
        let body = build_request_body(prompt, config);
        log::debug!(
            "POST {url} (authorization: {}) {body}",
            if self.api_key.is_some() { "<redacted>" } else { "none" }
        );
        let started = std::time::Instant::now();
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        log::debug!("response {status}: {text}");
        if status == 429 || status >= 500 {
            return Err(BackendError::Transport(format!("status {status}")));
        }
        if status >= 400 {
            if text.to_ascii_lowercase().contains("logprob") {
                return Err(BackendError::Capability(text));
            }
            return Err(BackendError::Rejected { status, body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Transport(e.to_string()))?;
        let (top_token, logprobs) = parse_response_body(&value, config.api_style)?;
        Ok(TokenResponse {
            top_token,
            logprobs,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
            source: ResponseSource::Live,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::Attribute;
    use crate::prompting::{PromptMeta, PromptTemplates};
    use crate::scoring::extract_confidence;
    use crate::synth::{generate_world, WorldConfig};

    fn world() -> Arc<SyntheticWorld> {
        Arc::new(generate_world(&WorldConfig { n_comments: 30, n_annotators: 10, ..Default::default() }).unwrap())
    }

    fn prompts(world: &SyntheticWorld, n: usize) -> Vec<RenderedPrompt> {
        let corpus = world.to_corpus().unwrap();
        let t = PromptTemplates::default();
        corpus
            .comments()
            .iter()
            .flat_map(|c| Attribute::ALL.map(|a| t.build_vanilla_prompt(a.spec(), c).unwrap()))
            .take(n)
            .collect()
    }

    fn fast_config() -> DecodingConfig {
        DecodingConfig { backoff_ms: 0, ..Default::default() }
    }

    struct Failing;
    impl Backend for Failing {
        fn complete(&self, _: &RenderedPrompt, _: &DecodingConfig) -> Result<TokenResponse, BackendError> {
            Err(BackendError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn mock_confidence_is_recovered() {
        for c in [0.9, 0.2, 0.5, 0.999_999, 1.0] {
            let labels: Vec<String> = (0..5).map(|k| k.to_string()).collect();
            let lp = logprobs_for_confidence(&labels, 3, c);
            let (k, conf) = extract_confidence(&lp, Attribute::Insult.spec()).unwrap();
            if c > 0.2 {
                assert_eq!(k, 3);
            }
            assert!((conf - c).abs() < 1e-9, "{c} -> {conf}");
            assert!(lp.values().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn mock_is_deterministic_and_checks_comment() {
        let w = world();
        let p = prompts(&w, 3);
        let a = mock_respond(&p[2], &w, BaselinePolicy::Truth).unwrap();
        let b = mock_respond(&p[2], &w, BaselinePolicy::Truth).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let mut bad = p[0].clone();
        bad.meta.comment_id = "missing".into();
        assert!(mock_respond(&bad, &w, BaselinePolicy::Truth).is_err());
    }

    #[test]
    fn cache_replay_skips_backend() {
        let w = world();
        let client = InferenceClient::new(Arc::new(MockBackend::new(w.clone())), Arc::new(ResponseCache::in_memory()), fast_config()).unwrap();
        let p = prompts(&w, 1);
        let first = client.complete_single_token(&p[0]).unwrap();
        assert_eq!(first.source, ResponseSource::Mock);
        let second = client.complete_single_token(&p[0]).unwrap();
        assert_eq!(second.source, ResponseSource::Cache);
        assert!(first.same_content(&second));
        assert_eq!(client.backend_calls(), 1);
    }

    #[test]
    fn batch_order_independent_of_parallelism() {
        let w = world();
        let p = prompts(&w, 37);
        let run = |par| {
            let client = InferenceClient::new(Arc::new(MockBackend::new(w.clone())), Arc::new(ResponseCache::in_memory()), fast_config()).unwrap();
            client
                .batch_annotate(&p, par)
                .into_iter()
                .map(|r| serde_json::to_string(&r.unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn failures_stay_in_place() {
        let w = world();
        let p = prompts(&w, 1);
        let client = InferenceClient::new(Arc::new(Failing), Arc::new(ResponseCache::in_memory()), fast_config()).unwrap();
        let out = client.batch_annotate(&p, 4);
        assert_eq!(out.len(), 1);
        match &out[0] {
            Err(InferenceError::Transport { attempts, prompt_hash, .. }) => {
                assert_eq!(*attempts, 3);
                assert_eq!(prompt_hash, &cache_key(&p[0], client.config()));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(client.backend_calls(), 3);
    }

    #[test]
    fn file_cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let resp = TokenResponse {
            top_token: "3".into(),
            logprobs: [("3".to_string(), -0.1), ("2".to_string(), -2.5)].into_iter().collect(),
            latency_ms: 12.5,
            source: ResponseSource::Live,
        };
        {
            let cache = ResponseCache::open(&path).unwrap();
            cache.insert("k1", &resp).unwrap();
            cache.insert("k1", &resp).unwrap();
            let mut other = resp.clone();
            other.top_token = "2".into();
            assert!(matches!(cache.insert("k1", &other), Err(CacheError::Corruption(_))));
        }
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 1);
        let cache = ResponseCache::open(&path).unwrap();
        let hit = cache.get("k1").unwrap();
        assert!(hit.same_content(&resp));
        assert_eq!(hit.source, ResponseSource::Cache);

        std::fs::write(
            &path,
            format!("{lines}{}\n", lines.trim_end().replace("\"top_token\":\"3\"", "\"top_token\":\"2\"")),
        )
        .unwrap();
        assert!(matches!(ResponseCache::open(&path), Err(CacheError::Corruption(_))));
    }

    #[test]
    fn cache_key_depends_on_decoding_fields() {
        let w = world();
        let p = &prompts(&w, 1)[0];
        let base = DecodingConfig::default();
        let k = cache_key(p, &base);
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key(p, &DecodingConfig { seed: 7, ..base.clone() }));
        assert_ne!(k, cache_key(p, &DecodingConfig { model_name: "other".into(), ..base.clone() }));
        assert_eq!(k, cache_key(p, &DecodingConfig { endpoint_url: "http://elsewhere/v1".into(), ..base }));
    }

    #[test]
    fn request_bodies() {
        let prompt = RenderedPrompt {
            system_text: "SYS".into(),
            user_text: "USER".into(),
            expected_label_set: vec!["0".into(), "1".into()],
            meta: PromptMeta { comment_id: "c".into(), attribute: None, annotator_id: None, condition: PromptCondition::Vanilla },
        };
        let cfg = DecodingConfig::default();
        let body = build_request_body(&prompt, &cfg);
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["logprobs"], 20);
        assert_eq!(body["seed"], 42);
        assert_eq!(body["temperature"], 0.0);
        let chat = DecodingConfig { api_style: ApiStyle::Chat, ..cfg };
        let body = build_request_body(&prompt, &chat);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 20);
        assert_eq!(body["messages"][0]["content"], "SYS");
        assert_eq!(request_url(&chat), "http://127.0.0.1:8000/v1/chat/completions");
    }

    #[test]
    fn parse_bodies() {
        let completion = json!({"choices": [{"text": "3", "logprobs": {"tokens": ["3"], "top_logprobs": [{"3": -0.05, " 3": -4.0, "2": -3.2}]}}]});
        let (t, lp) = parse_response_body(&completion, ApiStyle::Completion).unwrap();
        assert_eq!(t, "3");
        assert_eq!(lp.len(), 3);
        let chat = json!({"choices": [{"message": {"content": "2"}, "logprobs": {"content": [{"token": "2", "logprob": -0.1, "top_logprobs": [{"token": "2", "logprob": -0.1}, {"token": "1", "logprob": -2.4}]}]}}]});
        let (t, lp) = parse_response_body(&chat, ApiStyle::Chat).unwrap();
        assert_eq!(t, "2");
        assert_eq!(lp["1"], -2.4);
        let no_lp = json!({"choices": [{"text": "3", "logprobs": null}]});
        assert!(matches!(parse_response_body(&no_lp, ApiStyle::Completion), Err(BackendError::Capability(_))));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = DecodingConfig { temperature: -1.0, ..Default::default() };
        assert!(InferenceClient::new(Arc::new(Failing), Arc::new(ResponseCache::in_memory()), bad).is_err());
    }
}
