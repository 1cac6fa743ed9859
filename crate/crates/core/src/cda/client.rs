//! Text generation backends: an OpenAI-compatible HTTP client, a replay
//! client serving committed fixtures, and a caching wrapper.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Distinguishes repeated requests for the same prompt, e.g. a retry
    /// after a malformed demonstration. Part of the cache key only; never
    /// sent to the server.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub sample_index: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_id: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            max_tokens: 256,
            sample_index: 0,
        }
    }
}

impl GenerationParams {
    pub fn with_sample(&self, sample_index: u32) -> Self {
        Self {
            sample_index,
            ..self.clone()
        }
    }
}

pub trait GenerationClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String>;

    /// Recorded in augmentation provenance.
    fn generator_id(&self, params: &GenerationParams) -> String {
        params.model_id.clone()
    }
}

impl<C: GenerationClient + ?Sized> GenerationClient for &C {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        (**self).complete(prompt, params)
    }

    fn generator_id(&self, params: &GenerationParams) -> String {
        (**self).generator_id(params)
    }
}

impl<C: GenerationClient + ?Sized> GenerationClient for Box<C> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        (**self).complete(prompt, params)
    }

    fn generator_id(&self, params: &GenerationParams) -> String {
        (**self).generator_id(params)
    }
}

pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of a replay fixture or prompt cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    pub params: GenerationParams,
    pub response_text: String,
}

pub fn read_fixture(path: &Path) -> Result<Vec<FixtureEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: n + 1,
            field: "$".into(),
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_fixture(path: &Path, entries: &[FixtureEntry]) -> Result<()> {
    let mut body = String::new();
    for e in entries {
        body.push_str(&serde_json::to_string(e)?);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Deterministic client answering from a fixture keyed by prompt hash.
///
/// An entry whose parameters match exactly wins; otherwise the first entry
/// recorded for the prompt is used.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    entries: HashMap<String, Vec<FixtureEntry>>,
}

impl ReplayClient {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut map: HashMap<String, Vec<FixtureEntry>> = HashMap::new();
        for e in entries {
            map.entry(e.prompt_sha256.clone()).or_default().push(e);
        }
        Self { entries: map }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_entries(read_fixture(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl GenerationClient for ReplayClient {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let sha = prompt_sha256(prompt);
        let candidates = self
            .entries
            .get(&sha)
            .ok_or_else(|| Error::MissingFixture(sha.clone()))?;
        let hit = candidates
            .iter()
            .find(|e| &e.params == params)
            .unwrap_or(&candidates[0]);
        Ok(hit.response_text.clone())
    }
}

type CacheKey = (String, String);

fn cache_key(prompt_sha: &str, params: &GenerationParams) -> CacheKey {
    let p = serde_json::to_string(params).unwrap_or_default();
    (prompt_sha.to_string(), p)
}

/// Content-addressed cache in front of another client. Reads are
/// concurrent; appends to the backing file are serialized.
pub struct CachingClient<C> {
    inner: C,
    entries: RwLock<HashMap<CacheKey, String>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl<C: GenerationClient> CachingClient<C> {
    pub fn in_memory(inner: C) -> Self {
        Self {
            inner,
            entries: RwLock::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    /// Load existing entries from `path` and append new ones to it.
    pub fn with_file(inner: C, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for e in read_fixture(path)? {
                entries.insert(cache_key(&e.prompt_sha256, &e.params), e.response_text);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner,
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<C: GenerationClient> GenerationClient for CachingClient<C> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let sha = prompt_sha256(prompt);
        let key = cache_key(&sha, params);
        if let Some(hit) = self.entries.read().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(hit);
        }
        let text = self.inner.complete(prompt, params)?;
        let mut map = self
            .entries
            .write()
            .map_err(|_| Error::Transport("cache lock poisoned".into()))?;
        if let Some(existing) = map.get(&key) {
            return Ok(existing.clone());
        }
        map.insert(key, text.clone());
        if let (Some(file), Some(path)) = (&self.file, &self.path) {
            let entry = FixtureEntry {
                prompt_sha256: sha,
                params: params.clone(),
                response_text: text.clone(),
            };
            let line = serde_json::to_string(&entry)? + "\n";
            let mut f = file
                .lock()
                .map_err(|_| Error::Transport("cache file lock poisoned".into()))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        Ok(text)
    }

    fn generator_id(&self, params: &GenerationParams) -> String {
        self.inner.generator_id(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    #[default]
    Chat,
    Completions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub endpoint: Endpoint,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; doubled after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            endpoint: Endpoint::Chat,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

/// Client for OpenAI-compatible `chat/completions` and `completions`
/// endpoints. Transport errors, 429 and 5xx responses are retried with
/// exponential backoff.
pub struct HttpClient {
    settings: HttpSettings,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("settings", &self.settings)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpClient {
    /// Read the API key from the configured environment variable.
    pub fn from_env(settings: HttpSettings) -> Result<Self> {
        let key = std::env::var(&settings.api_key_env).map_err(|_| {
            Error::Config(format!("environment variable {} is not set", settings.api_key_env))
        })?;
        Self::new(settings, key)
    }

    pub fn new(settings: HttpSettings, api_key: String) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            settings,
            api_key,
            http,
        })
    }

    fn request_body(&self, prompt: &str, params: &GenerationParams) -> (String, Value) {
        let base = self.settings.base_url.trim_end_matches('/');
        match self.settings.endpoint {
            Endpoint::Chat => (
                format!("{base}/chat/completions"),
                json!({
                    "model": params.model_id,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": params.temperature,
                    "max_tokens": params.max_tokens,
                }),
            ),
            Endpoint::Completions => (
                format!("{base}/completions"),
                json!({
                    "model": params.model_id,
                    "prompt": prompt,
                    "temperature": params.temperature,
                    "max_tokens": params.max_tokens,
                }),
            ),
        }
    }

    fn extract(&self, body: &Value) -> Result<String> {
        let choice = &body["choices"][0];
        let text = match self.settings.endpoint {
            Endpoint::Chat => choice["message"]["content"].as_str(),
            Endpoint::Completions => choice["text"].as_str(),
        };
        text.map(str::to_string)
            .ok_or_else(|| Error::Transport(format!("response has no completion text: {body}")))
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl GenerationClient for HttpClient {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let (url, body) = self.request_body(prompt, params);
        let mut delay = Duration::from_millis(self.settings.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.settings.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            let outcome = self
                .http
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| Attempt::Retry(e.to_string()))
                .and_then(|resp| {
                    let status = resp.status();
                    if status.is_success() {
                        resp.json::<Value>().map_err(|e| Attempt::Retry(e.to_string()))
                    } else if status.as_u16() == 429 || status.is_server_error() {
                        Err(Attempt::Retry(format!("HTTP {status}")))
                    } else {
                        let text = resp.text().unwrap_or_default();
                        Err(Attempt::Fatal(format!("HTTP {status}: {text}")))
                    }
                });
            match outcome {
                Ok(json) => return self.extract(&json),
                Err(Attempt::Fatal(msg)) => return Err(Error::Transport(msg)),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last}",
            self.settings.max_retries + 1
        )))
    }
}

/// Run requests concurrently on at most `bound` threads. Results come back
/// sorted by request id.
pub fn complete_all<C: GenerationClient>(
    client: &C,
    requests: Vec<(String, String, GenerationParams)>,
    bound: usize,
) -> Result<Vec<(String, Result<String>)>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(bound.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut out: Vec<(String, Result<String>)> = pool.install(|| {
        requests
            .into_par_iter()
            .map(|(id, prompt, params)| {
                let r = client.complete(&prompt, &params);
                (id, r)
            })
            .collect()
    });
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl GenerationClient for Counting {
        fn complete(&self, prompt: &str, _: &GenerationParams) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {prompt}"))
        }
    }

    #[test]
    fn replay_prefers_exact_params() {
        let p = GenerationParams::default();
        let c = ReplayClient::from_entries([
            FixtureEntry {
                prompt_sha256: prompt_sha256("hi"),
                params: p.clone(),
                response_text: "first".into(),
            },
            FixtureEntry {
                prompt_sha256: prompt_sha256("hi"),
                params: p.with_sample(1),
                response_text: "second".into(),
            },
        ]);
        assert_eq!(c.complete("hi", &p).unwrap(), "first");
        assert_eq!(c.complete("hi", &p.with_sample(1)).unwrap(), "second");
        assert_eq!(c.complete("hi", &p.with_sample(7)).unwrap(), "first");
        assert!(matches!(c.complete("bye", &p), Err(Error::MissingFixture(_))));
    }

    #[test]
    fn cache_hits_skip_the_inner_client_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let p = GenerationParams::default();
        {
            let c = CachingClient::with_file(Counting(AtomicUsize::new(0)), &path).unwrap();
            assert_eq!(c.complete("x", &p).unwrap(), "echo x");
            assert_eq!(c.complete("x", &p).unwrap(), "echo x");
            assert_eq!(c.inner.0.load(Ordering::SeqCst), 1);
        }
        let c = CachingClient::with_file(Counting(AtomicUsize::new(0)), &path).unwrap();
        assert_eq!(c.complete("x", &p).unwrap(), "echo x");
        assert_eq!(c.inner.0.load(Ordering::SeqCst), 0);
        let replay = ReplayClient::load(&path).unwrap();
        assert_eq!(replay.complete("x", &p).unwrap(), "echo x");
    }

    #[test]
    fn complete_all_orders_by_id() {
        let c = Counting(AtomicUsize::new(0));
        let p = GenerationParams::default();
        let reqs = (0..20)
            .rev()
            .map(|i| (format!("r{i:02}"), format!("p{i}"), p.clone()))
            .collect();
        let out = complete_all(&c, reqs, 4).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(out[0].0, "r00");
        assert_eq!(out[0].1.as_ref().unwrap(), "echo p0");
    }

    /// Serve canned HTTP responses, one per connection.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| {
                                let lower = l.to_ascii_lowercase();
                                lower.strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap())
                            })
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                seen.push(String::from_utf8_lossy(&buf).to_string());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn settings(base_url: String) -> HttpSettings {
        HttpSettings {
            base_url,
            backoff_ms: 1,
            max_retries: 2,
            timeout_secs: 5,
            ..Default::default()
        }
    }

    #[test]
    fn http_retries_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Choice B"}}]}"#;
        let (url, handle) = stub_server(vec![(500, "{}".into()), (429, "{}".into()), (200, ok.into())]);
        let client = HttpClient::new(settings(url), "sk-test".into()).unwrap();
        let out = client.complete("prompt text", &GenerationParams::default().with_sample(3)).unwrap();
        assert_eq!(out, "Choice B");
        let requests = handle.join().unwrap();
        assert_eq!(requests.len(), 3);
        assert!(requests[2].starts_with("POST /v1/chat/completions"));
        assert!(requests[2].to_lowercase().contains("authorization: bearer sk-test"));
        assert!(requests[2].contains("\"content\":\"prompt text\""));
        assert!(!requests[2].contains("sample_index"));
    }

    #[test]
    fn http_client_errors_are_not_retried() {
        let (url, handle) = stub_server(vec![(400, r#"{"error":"bad"}"#.into())]);
        let client = HttpClient::new(settings(url), "k".into()).unwrap();
        let err = client.complete("p", &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, Error::Transport(ref m) if m.contains("400")), "{err}");
        assert_eq!(handle.join().unwrap().len(), 1);
    }

    #[test]
    fn completions_endpoint_and_missing_key() {
        let ok = r#"{"choices":[{"text":" none"}]}"#;
        let (url, handle) = stub_server(vec![(200, ok.into())]);
        let mut s = settings(url);
        s.endpoint = Endpoint::Completions;
        let client = HttpClient::new(s, "k".into()).unwrap();
        assert_eq!(client.complete("p", &GenerationParams::default()).unwrap(), " none");
        assert!(handle.join().unwrap()[0].starts_with("POST /v1/completions"));

        let missing = HttpSettings {
            api_key_env: "TKC_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..Default::default()
        };
        assert!(matches!(HttpClient::from_env(missing), Err(Error::Config(_))));
    }
}
