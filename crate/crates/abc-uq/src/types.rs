//! Domain types shared by every other module. No I/O lives here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Tolerance for "sums to one" checks on probability vectors and weights.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// The finite hypothesis set: ordered, uniquely named class labels.
///
/// Label indices are implicit positions `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, name) in labels.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::InvalidInput(format!("label {i} has an empty name")));
            }
            if labels[..i].contains(name) {
                return Err(Error::InvalidInput(format!("duplicate label name `{name}`")));
            }
        }
        Ok(Self { labels })
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn contains_index(&self, index: usize) -> bool {
        index < self.labels.len()
    }

    /// Stable content hash; binds persisted artifacts to the space they were
    /// built for.
    pub fn content_hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for name in &self.labels {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(0x1f);
        }
        seeds::fnv1a(&bytes)
    }
}

/// A fixed-length vector in the shared semantic space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding vector must be non-empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding vector contains a non-finite value ({bad})"
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One observed text to classify, with optional gold label and cached
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub description: String,
    pub gold_label: Option<usize>,
    pub embedding: Option<EmbeddingVector>,
}

impl CaseRecord {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Result<Self> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(Error::InvalidInput("case description must be non-empty".into()));
        }
        Ok(Self {
            id: id.into(),
            description,
            gold_label: None,
            embedding: None,
        })
    }

    pub fn with_gold(mut self, label: usize) -> Self {
        self.gold_label = Some(label);
        self
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVector) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

/// A sampled label hypothesis with its importance weight and the accepted
/// simulation's distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub label: usize,
    pub weight: f64,
    pub distance: f64,
    pub generation_text: Option<String>,
}

/// A weighted set of accepted particles plus the threshold that admitted
/// them.
///
/// Constructed only through [`Population::new`], which enforces the weight
/// and distance invariants, so a `Population` in hand is always consistent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    particles: Vec<Particle>,
    epsilon: f64,
    index: usize,
    simulations_used: usize,
}

impl Population {
    /// `index` is the 1-based population number in an SMC schedule.
    pub fn new(
        particles: Vec<Particle>,
        epsilon: f64,
        index: usize,
        simulations_used: usize,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Contract("degenerate population: no particles".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Contract(format!(
                "population epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if index < 1 {
            return Err(Error::Contract("population index must be >= 1".into()));
        }
        let mut weight_sum = 0.0;
        for (i, p) in particles.iter().enumerate() {
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(Error::Contract(format!(
                    "particle {i} has invalid weight {}",
                    p.weight
                )));
            }
            if !(p.distance >= 0.0 && p.distance.is_finite()) {
                return Err(Error::Contract(format!(
                    "particle {i} has invalid distance {}",
                    p.distance
                )));
            }
            if p.distance > epsilon {
                return Err(Error::Contract(format!(
                    "particle {i} distance {} exceeds epsilon {epsilon}",
                    p.distance
                )));
            }
            weight_sum += p.weight;
        }
        if (weight_sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Contract(format!(
                "population weights sum to {weight_sum}, expected 1"
            )));
        }
        Ok(Self {
            particles,
            epsilon,
            index,
            simulations_used,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn simulations_used(&self) -> usize {
        self.simulations_used
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

/// The inference method that produced a posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RS")]
    Rejection,
    #[serde(rename = "SMC")]
    Smc,
    #[serde(rename = "ML")]
    Logits,
    #[serde(rename = "EP")]
    Elicited,
}

impl Method {
    pub fn code(&self) -> &'static str {
        match self {
            Method::Rejection => "RS",
            Method::Smc => "SMC",
            Method::Logits => "ML",
            Method::Elicited => "EP",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Quality annotation attached when an inference run could not complete
/// cleanly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorFlag {
    /// The simulation budget ran out with fewer acceptances than requested.
    Partial,
    /// A population accepted nothing; the previous population's posterior was
    /// returned instead.
    Stalled,
}

/// Categorical posterior p(y | x_obs) over the label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    probs: Vec<f64>,
    method: Method,
    simulations_used: usize,
    accepted: usize,
    flag: Option<PosteriorFlag>,
}

impl Posterior {
    pub fn new(
        probs: Vec<f64>,
        method: Method,
        simulations_used: usize,
        accepted: usize,
    ) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Contract("posterior must have at least one entry".into()));
        }
        let mut sum = 0.0;
        for (i, p) in probs.iter().enumerate() {
            if !(*p >= 0.0 && *p <= 1.0) {
                return Err(Error::Contract(format!(
                    "posterior entry {i} out of [0, 1]: {p}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Contract(format!(
                "posterior sums to {sum}, expected 1"
            )));
        }
        Ok(Self {
            probs,
            method,
            simulations_used,
            accepted,
            flag: None,
        })
    }

    pub fn with_flag(mut self, flag: PosteriorFlag) -> Self {
        self.flag = Some(flag);
        self
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn simulations_used(&self) -> usize {
        self.simulations_used
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn flag(&self) -> Option<PosteriorFlag> {
        self.flag
    }
}

/// Per-case method output feeding the evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub gold: usize,
    pub confidence: f64,
    pub correct: bool,
}

impl PredictionRecord {
    pub fn new(case_id: impl Into<String>, probs: Vec<f64>, gold: usize) -> Result<Self> {
        let predicted = argmax_label(&probs)?;
        if gold >= probs.len() {
            return Err(Error::Contract(format!(
                "gold label {gold} outside probability vector of length {}",
                probs.len()
            )));
        }
        let confidence = probs[predicted];
        Ok(Self {
            case_id: case_id.into(),
            probs,
            predicted,
            gold,
            confidence,
            correct: predicted == gold,
        })
    }
}

/// Index of the maximum entry; the lowest index wins ties.
pub fn argmax_label(probs: &[f64]) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("argmax of an empty vector is undefined".into()));
    }
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "argmax input contains non-finite entry at {i}"
            )));
        }
        if *p > probs[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Posterior mass as weighted label frequency over an accepted population.
pub fn posterior_from_population(pop: &Population, space: &LabelSpace) -> Result<Posterior> {
    if pop.is_empty() {
        return Err(Error::Contract("degenerate population: no particles".into()));
    }
    let mut probs = vec![0.0; space.k()];
    for p in pop.particles() {
        if !space.contains_index(p.label) {
            return Err(Error::Contract(format!(
                "particle label {} outside label space of size {}",
                p.label,
                space.k()
            )));
        }
        probs[p.label] += p.weight;
    }
    Posterior::new(probs, Method::Smc, pop.simulations_used(), pop.len())
}
