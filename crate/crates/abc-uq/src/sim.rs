//! Simulators that generate a class-conditioned description: remote LLM,
//! vector-store replay, and a synthetic oracle for offline runs.
//!
//! Every provider exposes an explicit per-call sub-stream (`ordinal`), so the
//! engine can assign streams per slot and parallel dispatch cannot change
//! what gets sampled.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::remote::{ChatMessage, ChatRequest, ChatTransport};
use crate::seeds;
use crate::store::{sample_from_store, VectorStore};
use crate::types::{EmbeddingVector, LabelSpace};

/// Placeholder that prompt templates must contain; replaced with the
/// hypothesis label's display name.
pub const LABEL_PLACEHOLDER: &str = "{label_name}";

/// Default template for free-form patient-style generation. Naming the
/// diagnosis in the generated text would let the embedder match on the label
/// token instead of the symptoms, so the template forbids it.
pub const PATIENT_DESCRIPTION_TEMPLATE: &str = "Generate a brief, plain-English patient complaint \
consistent with a diagnosis of {label_name}. Do not name the diagnosis.";

/// Default template for the sign/symptom-list generation mode, which anchors
/// generation in salient clinical features.
pub const SIGN_SYMPTOM_LIST_TEMPLATE: &str = "List the characteristic clinical signs and symptoms \
of {label_name} as short phrases.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulatorKind {
    RemoteChat,
    StoreReplay,
    SyntheticOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    PatientDescription,
    SignSymptomList,
}

impl PromptMode {
    pub fn default_template(&self) -> &'static str {
        match self {
            PromptMode::PatientDescription => PATIENT_DESCRIPTION_TEMPLATE,
            PromptMode::SignSymptomList => SIGN_SYMPTOM_LIST_TEMPLATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub kind: SimulatorKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_prompt_mode")]
    pub prompt_mode: PromptMode,
    /// Overrides the mode's default template when set.
    pub prompt_template: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    pub seed: Option<u64>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_prompt_mode() -> PromptMode {
    PromptMode::PatientDescription
}

fn default_max_tokens() -> u32 {
    256
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

impl SimulatorConfig {
    pub fn remote_chat(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: SimulatorKind::RemoteChat,
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            temperature: default_temperature(),
            prompt_mode: default_prompt_mode(),
            prompt_template: None,
            max_tokens: default_max_tokens(),
            seed: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }

    pub fn template(&self) -> &str {
        self.prompt_template
            .as_deref()
            .unwrap_or_else(|| self.prompt_mode.default_template())
    }

    pub fn render_prompt(&self, label_name: &str) -> String {
        self.template().replace(LABEL_PLACEHOLDER, label_name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidInput(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !self.template().contains(LABEL_PLACEHOLDER) {
            return Err(Error::InvalidInput(format!(
                "prompt template must contain the {LABEL_PLACEHOLDER} placeholder"
            )));
        }
        if self.kind == SimulatorKind::RemoteChat {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(Error::InvalidInput(
                    "remote-chat simulator requires an endpoint".into(),
                ));
            }
            if self.model_name.as_deref().unwrap_or("").is_empty() {
                return Err(Error::InvalidInput(
                    "remote-chat simulator requires a model name".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Generates a description conditioned on a hypothesis label.
pub trait Simulator: Send + Sync {
    /// Generation for `label` on the deterministic sub-stream `ordinal`.
    fn simulate_at(&self, label: usize, ordinal: u64) -> Result<String>;

    /// Claims the next internally assigned call ordinal.
    fn next_ordinal(&self) -> u64;

    /// Generation plus embedding in one step. Providers that already hold
    /// vectors (store replay, the oracle's fast path) skip the embedder.
    fn simulate_embedded_at(
        &self,
        label: usize,
        ordinal: u64,
        embedder: &dyn Embedder,
    ) -> Result<(String, EmbeddingVector)> {
        let text = self.simulate_at(label, ordinal)?;
        let vector = embedder.embed(&text)?;
        Ok((text, vector))
    }

    fn simulate(&self, label: usize) -> Result<String> {
        self.simulate_at(label, self.next_ordinal())
    }

    fn simulate_embedded(
        &self,
        label: usize,
        embedder: &dyn Embedder,
    ) -> Result<(String, EmbeddingVector)> {
        self.simulate_embedded_at(label, self.next_ordinal(), embedder)
    }

    /// True for providers that replay a persisted store; store builds refuse
    /// these to avoid self-referential stores.
    fn is_store_replay(&self) -> bool {
        false
    }
}

// Stream tags keeping provider RNG derivations disjoint.
const ORACLE_STREAM: u64 = 0x6f5a;
const REPLAY_STREAM: u64 = 0x5e9a;

/// Per-label behavior of the synthetic oracle: a centroid in embedding
/// space, gaussian noise, and an optional phrase bank for text generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleClass {
    pub centroid: EmbeddingVector,
    pub noise_scale: f64,
    #[serde(default)]
    pub phrases: Vec<String>,
}

/// Full specification of the synthetic test oracle: one class entry per
/// label plus the root seed for its streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleSpec {
    pub classes: Vec<OracleClass>,
    pub rng_seed: u64,
}

impl SyntheticOracleSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.classes.len() != k {
            return Err(Error::InvalidInput(format!(
                "oracle has {} classes but the label space has {k}",
                self.classes.len()
            )));
        }
        let dim = self.classes[0].centroid.dim();
        for (i, class) in self.classes.iter().enumerate() {
            if class.centroid.dim() != dim {
                return Err(Error::InvalidInput(format!(
                    "oracle centroid {i} has dim {} but centroid 0 has dim {dim}",
                    class.centroid.dim()
                )));
            }
            if !(class.noise_scale >= 0.0 && class.noise_scale.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "oracle class {i} has invalid noise scale {}",
                    class.noise_scale
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Offline test simulator. With a phrase bank it returns seeded phrase
/// draws; with an empty bank, `simulate_embedded_at` samples directly in
/// embedding space (centroid plus gaussian noise), skipping text entirely.
pub struct SyntheticOracle {
    spec: SyntheticOracleSpec,
    calls: AtomicU64,
}

impl SyntheticOracle {
    pub fn new(spec: SyntheticOracleSpec, k: usize) -> Result<Self> {
        spec.validate(k)?;
        Ok(Self {
            spec,
            calls: AtomicU64::new(0),
        })
    }

    fn class(&self, label: usize) -> Result<&OracleClass> {
        self.spec.classes.get(label).ok_or_else(|| {
            Error::Contract(format!(
                "label {label} outside oracle with {} classes",
                self.spec.classes.len()
            ))
        })
    }
}

impl Simulator for SyntheticOracle {
    fn simulate_at(&self, label: usize, ordinal: u64) -> Result<String> {
        let class = self.class(label)?;
        if class.phrases.is_empty() {
            return Err(Error::Simulator(format!(
                "oracle class {label} has an empty phrase bank; only embedded simulation is available"
            )));
        }
        let mut rng = seeds::sub_rng(self.spec.rng_seed, &[ORACLE_STREAM, label as u64, ordinal]);
        let idx = rng.random_range(0..class.phrases.len());
        Ok(class.phrases[idx].clone())
    }

    fn simulate_embedded_at(
        &self,
        label: usize,
        ordinal: u64,
        embedder: &dyn Embedder,
    ) -> Result<(String, EmbeddingVector)> {
        let class = self.class(label)?;
        if class.phrases.is_empty() {
            let values: Vec<f64> = if class.noise_scale == 0.0 {
                class.centroid.values().to_vec()
            } else {
                let mut rng =
                    seeds::sub_rng(self.spec.rng_seed, &[ORACLE_STREAM, label as u64, ordinal]);
                class
                    .centroid
                    .values()
                    .iter()
                    .map(|c| c + class.noise_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            return Ok((format!("synthetic:{label}"), EmbeddingVector::new(values)?));
        }
        let text = self.simulate_at(label, ordinal)?;
        let vector = embedder.embed(&text)?;
        Ok((text, vector))
    }

    fn next_ordinal(&self) -> u64 {
        self.calls.fetch_add(1, Ordering::Relaxed)
    }
}

/// Replays a persisted vector store: each call is a uniform draw from the
/// label's bucket, returning the stored text and embedding without any
/// remote work.
pub struct StoreReplaySimulator {
    store: Arc<VectorStore>,
    seed: u64,
    calls: AtomicU64,
}

impl StoreReplaySimulator {
    pub fn new(store: Arc<VectorStore>, seed: u64) -> Self {
        Self {
            store,
            seed,
            calls: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }
}

impl Simulator for StoreReplaySimulator {
    fn simulate_at(&self, label: usize, ordinal: u64) -> Result<String> {
        let mut rng = seeds::sub_rng(self.seed, &[REPLAY_STREAM, label as u64, ordinal]);
        let (text, _) = sample_from_store(&self.store, label, &mut rng)?;
        Ok(text.to_string())
    }

    fn simulate_embedded_at(
        &self,
        label: usize,
        ordinal: u64,
        _embedder: &dyn Embedder,
    ) -> Result<(String, EmbeddingVector)> {
        let mut rng = seeds::sub_rng(self.seed, &[REPLAY_STREAM, label as u64, ordinal]);
        let (text, vector) = sample_from_store(&self.store, label, &mut rng)?;
        Ok((text.to_string(), vector.clone()))
    }

    fn next_ordinal(&self) -> u64 {
        self.calls.fetch_add(1, Ordering::Relaxed)
    }

    fn is_store_replay(&self) -> bool {
        true
    }
}

/// Hosted-LLM simulator speaking the common chat-completion wire shape.
pub struct RemoteChatSimulator {
    cfg: SimulatorConfig,
    space: Arc<LabelSpace>,
    chat: Arc<dyn ChatTransport>,
    calls: AtomicU64,
}

impl RemoteChatSimulator {
    pub fn new(
        cfg: SimulatorConfig,
        space: Arc<LabelSpace>,
        chat: Arc<dyn ChatTransport>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != SimulatorKind::RemoteChat {
            return Err(Error::Contract("config is not for a remote-chat simulator".into()));
        }
        Ok(Self {
            cfg,
            space,
            chat,
            calls: AtomicU64::new(0),
        })
    }

    fn request_for(&self, label: usize) -> Result<ChatRequest> {
        let name = self.space.name(label).ok_or_else(|| {
            Error::Contract(format!(
                "label {label} outside label space of size {}",
                self.space.k()
            ))
        })?;
        Ok(ChatRequest {
            model: self.cfg.model_name.clone().unwrap_or_default(),
            messages: vec![ChatMessage::user(self.cfg.render_prompt(name))],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            logprobs: None,
            top_logprobs: None,
        })
    }
}

impl Simulator for RemoteChatSimulator {
    fn simulate_at(&self, label: usize, _ordinal: u64) -> Result<String> {
        let request = self.request_for(label)?;
        // Empty completions get one retry before failing.
        for attempt in 0..2 {
            let output = self.chat.complete(&request)?;
            let text = output.content.trim();
            if !text.is_empty() {
                return Ok(text.to_string());
            }
            if attempt == 1 {
                break;
            }
        }
        Err(Error::Simulator("model returned empty output after retry".into()))
    }

    fn next_ordinal(&self) -> u64 {
        self.calls.fetch_add(1, Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBagOfWordsEmbedder;
    use crate::embed::{cosine_distance, Embedder};
    use crate::remote::ChatOutput;
    use std::sync::atomic::AtomicU32;

    fn unit(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbeddingVector::new(v).unwrap()
    }

    fn oracle_spec_with_phrases() -> SyntheticOracleSpec {
        SyntheticOracleSpec {
            classes: vec![
                OracleClass {
                    centroid: unit(4, 0),
                    noise_scale: 0.0,
                    phrases: vec!["sore patch".into(), "white lesion".into(), "rough ulcer".into()],
                },
                OracleClass {
                    centroid: unit(4, 1),
                    noise_scale: 0.0,
                    phrases: vec!["smooth bump".into(), "fluid swelling".into()],
                },
            ],
            rng_seed: 7,
        }
    }

    fn fast_path_spec(noise: f64) -> SyntheticOracleSpec {
        SyntheticOracleSpec {
            classes: vec![
                OracleClass {
                    centroid: unit(4, 0),
                    noise_scale: noise,
                    phrases: vec![],
                },
                OracleClass {
                    centroid: unit(4, 1),
                    noise_scale: noise,
                    phrases: vec![],
                },
            ],
            rng_seed: 11,
        }
    }

    #[test]
    fn oracle_streams_are_reproducible_across_fresh_instances() {
        let a = SyntheticOracle::new(oracle_spec_with_phrases(), 2).unwrap();
        let b = SyntheticOracle::new(oracle_spec_with_phrases(), 2).unwrap();
        let stream_a: Vec<String> = (0..20).map(|_| a.simulate(0).unwrap()).collect();
        let stream_b: Vec<String> = (0..20).map(|_| b.simulate(0).unwrap()).collect();
        assert_eq!(stream_a, stream_b);
    }

    #[test]
    fn oracle_fast_path_zero_noise_returns_centroid_exactly() {
        let oracle = SyntheticOracle::new(fast_path_spec(0.0), 2).unwrap();
        let embedder = HashedBagOfWordsEmbedder::new(4).unwrap();
        let (_, v) = oracle.simulate_embedded(0, &embedder).unwrap();
        assert_eq!(v, unit(4, 0));
    }

    #[test]
    fn oracle_fast_path_distance_matches_analytic_centroid_distance() {
        let oracle = SyntheticOracle::new(fast_path_spec(0.0), 2).unwrap();
        let embedder = HashedBagOfWordsEmbedder::new(4).unwrap();
        let (_, v) = oracle.simulate_embedded(0, &embedder).unwrap();
        // Orthogonal unit centroids sit at cosine distance 1 from each other.
        let d = cosine_distance(&v, &unit(4, 1)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_text_path_requires_phrases() {
        let oracle = SyntheticOracle::new(fast_path_spec(0.0), 2).unwrap();
        assert!(matches!(oracle.simulate(0), Err(Error::Simulator(_))));
    }

    #[test]
    fn oracle_class_count_must_match_space() {
        assert!(SyntheticOracle::new(oracle_spec_with_phrases(), 3).is_err());
    }

    #[test]
    fn prompt_template_renders_only_the_requested_label() {
        let cfg = SimulatorConfig {
            kind: SimulatorKind::SyntheticOracle,
            endpoint: None,
            model_name: None,
            temperature: 0.2,
            prompt_mode: PromptMode::PatientDescription,
            prompt_template: None,
            max_tokens: 64,
            seed: None,
            timeout_secs: 5,
            max_retries: 0,
        };
        let names = ["Oral Mucocele", "Atrophic Glossitis", "Leukoplakia"];
        for (i, name) in names.iter().enumerate() {
            let prompt = cfg.render_prompt(name);
            assert!(prompt.contains(name));
            for (j, other) in names.iter().enumerate() {
                if i != j {
                    assert!(!prompt.contains(other), "prompt for {name} leaked {other}");
                }
            }
        }
    }

    #[test]
    fn config_rejects_template_without_placeholder() {
        let mut cfg = SimulatorConfig::remote_chat("http://x", "m");
        cfg.prompt_template = Some("describe the condition".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_rejects_negative_temperature() {
        let mut cfg = SimulatorConfig::remote_chat("http://x", "m");
        cfg.temperature = -0.1;
        assert!(cfg.validate().is_err());
    }

    struct ScriptedChat {
        outputs: Vec<String>,
        calls: AtomicU32,
        last_prompt: std::sync::Mutex<String>,
    }

    impl ScriptedChat {
        fn new(outputs: Vec<&str>) -> Self {
            Self {
                outputs: outputs.into_iter().map(String::from).collect(),
                calls: AtomicU32::new(0),
                last_prompt: std::sync::Mutex::new(String::new()),
            }
        }
    }

    impl ChatTransport for ScriptedChat {
        fn complete(&self, request: &ChatRequest) -> Result<ChatOutput> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            *self.last_prompt.lock().unwrap() = request.messages[0].content.clone();
            let content = self
                .outputs
                .get(i.min(self.outputs.len().saturating_sub(1)))
                .cloned()
                .unwrap_or_default();
            Ok(ChatOutput {
                content,
                top_logprobs: vec![],
            })
        }
    }

    #[test]
    fn remote_chat_substitutes_label_into_prompt() {
        let space = Arc::new(LabelSpace::new(vec!["Oral Mucocele", "Atrophic Glossitis"]).unwrap());
        let chat = Arc::new(ScriptedChat::new(vec!["a swollen bump on the lip"]));
        let cfg = SimulatorConfig::remote_chat("http://x", "m");
        let sim = RemoteChatSimulator::new(cfg, space, chat.clone()).unwrap();
        let text = sim.simulate(0).unwrap();
        assert_eq!(text, "a swollen bump on the lip");
        assert!(chat.last_prompt.lock().unwrap().contains("Oral Mucocele"));
    }

    #[test]
    fn remote_chat_retries_empty_output_once_then_fails() {
        let space = Arc::new(LabelSpace::new(vec!["A", "B"]).unwrap());

        let chat = Arc::new(ScriptedChat::new(vec!["", "second try"]));
        let sim =
            RemoteChatSimulator::new(SimulatorConfig::remote_chat("http://x", "m"), space.clone(), chat.clone())
                .unwrap();
        assert_eq!(sim.simulate(0).unwrap(), "second try");
        assert_eq!(chat.calls.load(Ordering::SeqCst), 2);

        let chat = Arc::new(ScriptedChat::new(vec!["", ""]));
        let sim = RemoteChatSimulator::new(SimulatorConfig::remote_chat("http://x", "m"), space, chat.clone())
            .unwrap();
        assert!(matches!(sim.simulate(0), Err(Error::Simulator(_))));
        assert_eq!(chat.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn oracle_spec_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.json");
        let spec = oracle_spec_with_phrases();
        spec.to_json_file(&path).unwrap();
        assert_eq!(SyntheticOracleSpec::from_json_file(&path).unwrap(), spec);
    }
}
