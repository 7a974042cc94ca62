//! Chat-completions client with a record/replay cache, plus the two VLM
//! stages of the pipeline: asset grouping and layout proposal.
//!
//! Endpoint configuration comes from `LAYOUTVLM_API_BASE`,
//! `LAYOUTVLM_API_KEY` and `LAYOUTVLM_MODEL`. In replay mode no network
//! client is ever built.

pub mod cache;
pub mod prompts;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dsl::{extract_code_block, ProgramText};
use crate::error::{Error, Result};
use crate::render::{render_asset_panel, render_topdown, RenderOptions};
use crate::scene::{AssetSpec, SceneState};

pub use cache::{CacheEntry, ReplayCache};

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const ENV_API_BASE: &str = "LAYOUTVLM_API_BASE";
pub const ENV_API_KEY: &str = "LAYOUTVLM_API_KEY";
pub const ENV_MODEL: &str = "LAYOUTVLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image { media_type: String, bytes: Vec<u8> },
}

impl Part {
    pub fn png(bytes: Vec<u8>) -> Self {
        Part::Image {
            media_type: "image/png".into(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ChatRequest {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            messages: Vec::new(),
            temperature: 0.0,
        }
    }

    pub fn message(mut self, role: Role, parts: Vec<Part>) -> Self {
        self.messages.push(Message { role, parts });
        self
    }

    pub fn system(self, text: impl Into<String>) -> Self {
        self.message(Role::System, vec![Part::Text(text.into())])
    }

    pub fn user_text(self, text: impl Into<String>) -> Self {
        self.message(Role::User, vec![Part::Text(text.into())])
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Precondition("chat request has no messages".into()));
        }
        for m in &self.messages {
            for p in &m.parts {
                if let Part::Image { bytes, .. } = p {
                    if bytes.is_empty() {
                        return Err(Error::Precondition(
                            "chat request contains an empty image".into(),
                        ));
                    }
                }
            }
        }
        if !self.temperature.is_finite() {
            return Err(Error::Precondition("temperature must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 over a length-prefixed encoding of model, temperature, and
    /// every message part including raw image bytes.
    pub fn digest(&self) -> String {
        fn field(h: &mut Sha256, bytes: &[u8]) {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        let mut h = Sha256::new();
        field(&mut h, b"chat-request/v1");
        field(&mut h, self.model.as_bytes());
        h.update(self.temperature.to_bits().to_le_bytes());
        h.update((self.messages.len() as u64).to_le_bytes());
        for m in &self.messages {
            field(&mut h, m.role.as_str().as_bytes());
            h.update((m.parts.len() as u64).to_le_bytes());
            for p in &m.parts {
                match p {
                    Part::Text(t) => {
                        field(&mut h, b"text");
                        field(&mut h, t.as_bytes());
                    }
                    Part::Image { media_type, bytes } => {
                        field(&mut h, b"image");
                        field(&mut h, media_type.as_bytes());
                        field(&mut h, bytes);
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Request body for a chat-completions endpoint; images become data URLs.
    pub fn to_wire(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let content = match m.parts.as_slice() {
                    [Part::Text(t)] => Value::String(t.clone()),
                    parts => Value::Array(
                        parts
                            .iter()
                            .map(|p| match p {
                                Part::Text(t) => json!({"type": "text", "text": t}),
                                Part::Image { media_type, bytes } => {
                                    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                                    json!({"type": "image_url", "image_url": {"url": format!("data:{media_type};base64,{b64}")}})
                                }
                            })
                            .collect(),
                    ),
                };
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({"model": self.model, "temperature": self.temperature, "messages": messages})
    }

    /// Cache-friendly summary: texts verbatim, images as size and hash.
    pub fn summary(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image { media_type, bytes } => json!({
                            "type": "image",
                            "media_type": media_type,
                            "bytes": bytes.len(),
                            "sha256": sha256_hex(bytes),
                        }),
                    })
                    .collect();
                json!({"role": m.role.as_str(), "parts": parts})
            })
            .collect();
        json!({"model": self.model, "temperature": self.temperature, "messages": messages})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMode {
    pub mode: Mode,
    pub cache_dir: Option<PathBuf>,
}

impl ReplayMode {
    pub fn live() -> Self {
        Self {
            mode: Mode::Live,
            cache_dir: None,
        }
    }

    pub fn record(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Record,
            cache_dir: Some(dir.into()),
        }
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Replay,
            cache_dir: Some(dir.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.cache_dir) {
            (Mode::Live, _) => Ok(()),
            (_, None) => Err(Error::Precondition(format!(
                "{:?} mode needs a cache directory",
                self.mode
            ))),
            (Mode::Replay, Some(dir)) if !dir.is_dir() => Err(Error::Precondition(format!(
                "replay cache {} does not exist",
                dir.display()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    /// Base URL; requests go to `{base}/chat/completions`.
    pub base: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_API_BASE).ok().filter(|s| !s.is_empty())?;
        Some(Self {
            base,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty()),
        })
    }
}

pub fn model_from_env() -> String {
    std::env::var(ENV_MODEL)
        .ok()
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| DEFAULT_MODEL.into())
}

/// A VLM client bound to one replay mode. Safe to share across threads.
#[derive(Debug)]
pub struct VlmClient {
    mode: ReplayMode,
    endpoint: Option<Endpoint>,
    model: String,
    backoff: Vec<Duration>,
    network_attempts: AtomicUsize,
    http: OnceLock<reqwest::blocking::Client>,
}

impl VlmClient {
    /// Client configured from the environment.
    pub fn from_env(mode: ReplayMode) -> Result<Self> {
        Self::new(mode, Endpoint::from_env(), model_from_env())
    }

    pub fn new(
        mode: ReplayMode,
        endpoint: Option<Endpoint>,
        model: impl Into<String>,
    ) -> Result<Self> {
        mode.validate()?;
        if mode.mode != Mode::Replay && endpoint.is_none() {
            return Err(Error::NotConfigured(format!(
                "set {ENV_API_BASE} for {:?} mode",
                mode.mode
            )));
        }
        Ok(Self {
            mode,
            endpoint,
            model: model.into(),
            backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
            network_attempts: AtomicUsize::new(0),
            http: OnceLock::new(),
        })
    }

    /// Delays between retries; the number of entries is the retry count.
    pub fn with_backoff(mut self, backoff: Vec<Duration>) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn mode(&self) -> &ReplayMode {
        &self.mode
    }

    /// HTTP attempts made so far, retries included.
    pub fn network_attempts(&self) -> usize {
        self.network_attempts.load(Ordering::SeqCst)
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest::new(self.model.clone())
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let digest = req.digest();
        let cache = self.mode.cache_dir.as_ref().map(ReplayCache::new);
        match self.mode.mode {
            Mode::Replay => {
                let cache = cache.expect("validated");
                match cache.lookup(&digest)? {
                    Some(entry) => {
                        log::debug!("replayed {digest}");
                        Ok(entry.response)
                    }
                    None => Err(Error::CacheMiss { digest }),
                }
            }
            Mode::Live => self.send(req),
            Mode::Record => {
                let response = self.send(req)?;
                cache
                    .expect("validated")
                    .store(&digest, req.summary(), &response)?;
                log::info!("recorded {digest}");
                Ok(response)
            }
        }
    }

    fn send(&self, req: &ChatRequest) -> Result<String> {
        let endpoint = self
            .endpoint
            .as_ref()
            .ok_or_else(|| Error::NotConfigured(format!("set {ENV_API_BASE}")))?;
        let http = match self.http.get() {
            Some(c) => c,
            None => {
                let c = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(300))
                    .build()
                    .map_err(|e| Error::Transport(e.to_string()))?;
                self.http.get_or_init(|| c)
            }
        };
        let url = format!("{}/chat/completions", endpoint.base.trim_end_matches('/'));
        let body = serde_json::to_vec(&req.to_wire())?;
        let mut attempt = 0;
        loop {
            self.network_attempts.fetch_add(1, Ordering::SeqCst);
            let mut builder = http
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone());
            if let Some(key) = &endpoint.api_key {
                builder = builder.bearer_auth(key);
            }
            let outcome = match builder.send() {
                Err(e) => Err((true, Error::Transport(e.to_string()))),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| Error::Transport(e.to_string()));
                    match text {
                        Err(e) => Err((true, e)),
                        Ok(text) if status.is_success() => {
                            parse_completion(&text).map_err(|e| (false, e))
                        }
                        Ok(text) => {
                            let transient = status.as_u16() == 429 || status.is_server_error();
                            Err((
                                transient,
                                Error::HttpStatus {
                                    status: status.as_u16(),
                                    body: text.chars().take(500).collect(),
                                },
                            ))
                        }
                    }
                }
            };
            match outcome {
                Ok(content) => return Ok(content),
                Err((true, e)) if attempt < self.backoff.len() => {
                    log::warn!(
                        "VLM request failed ({e}); retrying in {:?}",
                        self.backoff[attempt]
                    );
                    std::thread::sleep(self.backoff[attempt]);
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

fn parse_completion(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(Error::Transport(format!(
            "response has no message content: {}",
            text.chars().take(200).collect::<String>()
        ))),
    }
}

/// One-shot completion with a client configured from the environment.
pub fn complete(req: &ChatRequest, mode: ReplayMode) -> Result<String> {
    VlmClient::from_env(mode)?.complete(req)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Grouping {
    pub groups: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

/// Repairs a parsed grouping into a partition of `ids`.
fn repair_groups(
    parsed: Vec<Vec<String>>,
    ids: &[String],
    warnings: &mut Vec<String>,
) -> Vec<Vec<String>> {
    let known: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut groups = Vec::new();
    for group in parsed {
        let mut kept = Vec::new();
        for id in group {
            if !known.contains(id.as_str()) {
                warnings.push(format!("grouping names unknown asset `{id}`; ignored"));
            } else if !seen.insert(id.clone()) {
                warnings.push(format!(
                    "asset `{id}` appears in more than one group; kept the first"
                ));
            } else {
                kept.push(id);
            }
        }
        if !kept.is_empty() {
            groups.push(kept);
        }
    }
    for id in ids {
        if !seen.contains(id) {
            warnings.push(format!("grouping omits `{id}`; appended as its own group"));
            groups.push(vec![id.clone()]);
        }
    }
    groups
}

/// Parses a grouping response: the outermost JSON list of id lists.
pub fn parse_grouping(response: &str, ids: &[String]) -> Grouping {
    let mut warnings = Vec::new();
    let parsed = match (response.find('['), response.rfind(']')) {
        (Some(a), Some(b)) if a < b => {
            serde_json::from_str::<Vec<Vec<String>>>(&response[a..=b]).ok()
        }
        _ => None,
    };
    let groups = match parsed {
        Some(p) => repair_groups(p, ids, &mut warnings),
        None => {
            warnings
                .push("grouping response is not a JSON list of id lists; using one group".into());
            vec![ids.to_vec()]
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Grouping { groups, warnings }
}

pub fn grouping_request(
    client: &VlmClient,
    inventory: &[AssetSpec],
    instruction: &str,
) -> ChatRequest {
    let prompt = prompts::fill(
        prompts::GROUPING,
        &[
            ("instruction", instruction),
            ("assets", &prompts::asset_lines(inventory)),
        ],
    );
    client.request().user_text(prompt)
}

/// Asks the VLM to split the inventory into placement groups.
pub fn group_assets(
    client: &VlmClient,
    inventory: &[AssetSpec],
    instruction: &str,
) -> Result<Grouping> {
    if inventory.is_empty() {
        return Err(Error::Precondition(
            "cannot group an empty inventory".into(),
        ));
    }
    let response = client.complete(&grouping_request(client, inventory, instruction))?;
    let ids: Vec<String> = inventory.iter().map(|a| a.id.clone()).collect();
    Ok(parse_grouping(&response, &ids))
}

/// System prompt, instruction, top-down render, asset panel.
pub fn layout_request(
    client: &VlmClient,
    state: &SceneState,
    group: &[AssetSpec],
    instruction: &str,
) -> Result<ChatRequest> {
    if group.is_empty() {
        return Err(Error::Precondition(
            "layout proposal needs a nonempty group".into(),
        ));
    }
    if let Some(a) = group.iter().find(|a| state.get(&a.id).is_some()) {
        return Err(Error::Precondition(format!(
            "asset `{}` is already placed",
            a.id
        )));
    }
    let room = prompts::room_vars(&state.room);
    let placed = prompts::placed_lines(&state.placed);
    let assets = prompts::asset_lines(group);
    let mut vars: Vec<(&str, &str)> = room.iter().map(|(k, v)| (*k, v.as_str())).collect();
    vars.push(("placed", &placed));
    vars.push(("group", &assets));
    let system = prompts::fill(prompts::LAYOUT, &vars);
    let opts = RenderOptions::png();
    let topdown = render_topdown(state, &opts)?;
    let panel = render_asset_panel(group, &opts)?;
    Ok(client.request().system(system).message(
        Role::User,
        vec![
            Part::Text(instruction.to_string()),
            Part::png(topdown),
            Part::png(panel),
        ],
    ))
}

/// Asks the VLM for a scene program placing `group` into `state`.
pub fn propose_layout(
    client: &VlmClient,
    state: &SceneState,
    group: &[AssetSpec],
    instruction: &str,
) -> Result<ProgramText> {
    let req = layout_request(client, state, group, instruction)?;
    let response = client.complete(&req)?;
    Ok(extract_code_block(&response))
}
