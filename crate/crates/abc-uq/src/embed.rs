//! Embedding providers and the distance function used for acceptance
//! decisions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::remote::{
    parse_embedding_response, post_with_retries, HttpTransport, JsonTransport, DEFAULT_API_KEY_ENV,
};
use crate::seeds;
use crate::types::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    RemoteHttp,
    HashedBagOfWords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_cache_enabled")]
    pub cache_enabled: bool,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    3
}

fn default_cache_enabled() -> bool {
    true
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl EmbedderConfig {
    pub fn hashed_bag_of_words(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::HashedBagOfWords,
            endpoint: None,
            model_name: None,
            dim,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            cache_enabled: true,
            api_key_env: default_api_key_env(),
        }
    }

    pub fn remote_http(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        dim: usize,
    ) -> Self {
        Self {
            kind: EmbedderKind::RemoteHttp,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            dim,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            cache_enabled: true,
            api_key_env: default_api_key_env(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("embedder dim must be positive".into()));
        }
        if self.kind == EmbedderKind::RemoteHttp {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(Error::InvalidInput(
                    "remote-http embedder requires an endpoint".into(),
                ));
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err(Error::InvalidInput(
                    "remote-http embedder requires a model name".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Maps text into the shared semantic space. Implementations must be safe to
/// call from many threads at once.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    fn dim(&self) -> usize;
    fn model_name(&self) -> &str;
}

/// Builds the configured provider, wrapping it in a cache when enabled.
pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn Embedder>> {
    cfg.validate()?;
    match cfg.kind {
        EmbedderKind::HashedBagOfWords => finish(cfg, Box::new(HashedBagOfWordsEmbedder::new(cfg.dim)?)),
        EmbedderKind::RemoteHttp => {
            let transport = Arc::new(HttpTransport::new(
                Duration::from_secs(cfg.timeout_secs),
                &cfg.api_key_env,
            )?);
            finish(cfg, Box::new(RemoteHttpEmbedder::new(cfg, transport)?))
        }
    }
}

/// As [`build_embedder`] but with an injected transport; used by tests and by
/// callers that manage connection reuse themselves.
pub fn build_embedder_with_transport(
    cfg: &EmbedderConfig,
    transport: Arc<dyn JsonTransport>,
) -> Result<Box<dyn Embedder>> {
    cfg.validate()?;
    match cfg.kind {
        EmbedderKind::HashedBagOfWords => finish(cfg, Box::new(HashedBagOfWordsEmbedder::new(cfg.dim)?)),
        EmbedderKind::RemoteHttp => finish(cfg, Box::new(RemoteHttpEmbedder::new(cfg, transport)?)),
    }
}

fn finish(cfg: &EmbedderConfig, inner: Box<dyn Embedder>) -> Result<Box<dyn Embedder>> {
    if cfg.cache_enabled {
        Ok(Box::new(CachedEmbedder::new(inner)))
    } else {
        Ok(inner)
    }
}

/// Deterministic offline embedder: lowercase, split on non-alphanumerics,
/// hash each token to a bucket, accumulate counts, L2-normalize.
pub struct HashedBagOfWordsEmbedder {
    dim: usize,
    model_name: String,
}

impl HashedBagOfWordsEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedder dim must be positive".into()));
        }
        Ok(Self {
            dim,
            model_name: format!("hashed-bow-{dim}"),
        })
    }
}

impl Embedder for HashedBagOfWordsEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let mut counts = vec![0.0f64; self.dim];
        let mut any = false;
        for token in text.split(|c: char| !c.is_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            any = true;
            let lowered = token.to_lowercase();
            let bucket = (seeds::fnv1a(lowered.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        if !any {
            return Err(Error::InvalidInput(format!(
                "text has no alphanumeric tokens to embed: {text:?}"
            )));
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut counts {
            *c /= norm;
        }
        EmbeddingVector::new(counts)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

/// Embeddings-over-HTTP provider: POSTs `{"model", "input"}` and reads back
/// `data[0].embedding`.
pub struct RemoteHttpEmbedder {
    endpoint: String,
    model_name: String,
    dim: usize,
    max_retries: u32,
    transport: Arc<dyn JsonTransport>,
}

impl RemoteHttpEmbedder {
    pub fn new(cfg: &EmbedderConfig, transport: Arc<dyn JsonTransport>) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != EmbedderKind::RemoteHttp {
            return Err(Error::Contract("config is not for a remote embedder".into()));
        }
        Ok(Self {
            endpoint: cfg.endpoint.clone().unwrap(),
            model_name: cfg.model_name.clone().unwrap(),
            dim: cfg.dim,
            max_retries: cfg.max_retries,
            transport,
        })
    }
}

impl Embedder for RemoteHttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let body = json!({ "model": self.model_name, "input": text });
        let resp = post_with_retries(&*self.transport, &self.endpoint, &body, self.max_retries)?;
        let values = parse_embedding_response(&resp)?;
        if values.len() != self.dim {
            return Err(Error::Contract(format!(
                "embedding dimension mismatch: endpoint returned {}, config expects {}",
                values.len(),
                self.dim
            )));
        }
        EmbeddingVector::new(values)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}

type CacheSlot = Arc<Mutex<Option<EmbeddingVector>>>;

/// Wraps any embedder with a (model name, exact text) keyed cache. Duplicate
/// texts wait on the first fetch; distinct texts embed concurrently.
pub struct CachedEmbedder {
    inner: Box<dyn Embedder>,
    slots: Mutex<HashMap<(String, String), CacheSlot>>,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn Embedder>) -> Self {
        Self {
            inner,
            slots: Mutex::new(HashMap::new()),
        }
    }
}

impl Embedder for CachedEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let key = (self.inner.model_name().to_string(), text.to_string());
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock poisoned");
            slots.entry(key).or_default().clone()
        };
        let mut guard = slot.lock().expect("cache slot poisoned");
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        *guard = Some(v.clone());
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}

/// `1 - cosine similarity`, in `[0, 2]`. Zero vectors are rejected rather
/// than mapped to a conventional value.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch in cosine distance: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dot = 0.0;
    let mut na2 = 0.0;
    let mut nb2 = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
    }
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::InvalidInput(
            "cosine distance undefined for the zero vector".into(),
        ));
    }
    let d = 1.0 - dot / (na2.sqrt() * nb2.sqrt());
    Ok(d.clamp(0.0, 2.0))
}
