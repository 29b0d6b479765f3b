use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::RaterError;
use crate::corpus::ExposureDistribution;

pub const DEFAULT_API_KEY_ENV: &str = "GAISI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub runs_per_cell: u32,
    pub max_parallel: usize,
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "mock".into(),
            temperature: 0.2,
            runs_per_cell: 5,
            max_parallel: 4,
            max_attempts: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), RaterError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RaterError::InvalidConfig(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.runs_per_cell < 1 {
            return Err(RaterError::InvalidConfig("runs_per_cell must be at least 1".into()));
        }
        if self.max_parallel < 1 {
            return Err(RaterError::InvalidConfig("max_parallel must be at least 1".into()));
        }
        if self.max_attempts < 1 {
            return Err(RaterError::InvalidConfig("max_attempts must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(RaterError::InvalidConfig("model_id is empty".into()));
        }
        Ok(())
    }
}

/// One prompt for one occupation, category and run.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRequest {
    pub occ_code: String,
    pub category: String,
    pub task_ids: Vec<String>,
    pub run_index: u32,
    pub system: String,
    pub user: String,
    pub model_id: String,
    pub temperature: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    /// Rate limits, server errors and transport failures are worth retrying.
    pub retryable: bool,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &RateRequest) -> Result<String, BackendError>;
}

/// Chat-completion client for endpoints speaking the common `messages` schema.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable; a missing key is an error here,
    /// before any request is issued.
    pub fn from_config(config: &BackendConfig) -> Result<Self, RaterError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| RaterError::MissingCredential(config.api_key_env.clone()))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent, endpoint: config.endpoint.clone(), api_key })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &RateRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError { message: e.to_string(), retryable: true })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError {
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                retryable: status == 429 || status >= 500,
            });
        }
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError { message: format!("unreadable response body: {e}"), retryable: true })?;
        value["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| BackendError {
            message: "response has no choices[0].message.content".into(),
            retryable: false,
        })
    }
}

fn seeded_rng(parts: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(seed)
}

const AFFORDANCE_PHRASES: [&str; 5] = [
    "An assistant could draft much of the written output.",
    "It can look up reference material quickly.",
    "It helps analyse the information gathered.",
    "It can help schedule the sequence of steps.",
    "Image recognition would speed up checking.",
];
const INTEGRATION_PHRASE: &str = "Larger gains need integration with workplace software systems.";
const CONSTRAINT_PHRASE: &str = "The work requires physical presence and manual dexterity.";
const LIMITED_PHRASE: &str = "The assistant plays a limited role here.";
const UNCERTAIN_PHRASE: &str = "The size of the saving is uncertain.";
const CONTRAST_PHRASE: &str = "However, much of the effort stays with the worker.";

/// Deterministic stand-in rater. Each run perturbs the cell's reference
/// distribution with independent Gaussian noise of the configured SD, clamps at
/// zero and renormalises. Cells without a reference get one derived from the seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockRater {
    pub seed: u64,
    pub noise: f64,
    pub truth: BTreeMap<(String, String), ExposureDistribution>,
}

impl MockRater {
    pub fn new(seed: u64, noise: f64) -> Self {
        Self { seed, noise, truth: BTreeMap::new() }
    }

    pub fn with_truth(mut self, truth: BTreeMap<(String, String), ExposureDistribution>) -> Self {
        self.truth = truth;
        self
    }

    pub fn reference(&self, occ: &str, task: &str) -> ExposureDistribution {
        if let Some(d) = self.truth.get(&(occ.to_string(), task.to_string())) {
            return *d;
        }
        let mut rng = seeded_rng(&["cell", &self.seed.to_string(), occ, task]);
        let u: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        ExposureDistribution::from_mass([0.2 + u[0], u[1], 0.8 * u[2], 0.1 * u[3]])
    }

    /// Distribution and justification for one run of one cell.
    pub fn rate(&self, occ: &str, task: &str, run_index: u32) -> (ExposureDistribution, String) {
        let base = self.reference(occ, task);
        let mut rng = seeded_rng(&["run", &self.seed.to_string(), occ, task, &run_index.to_string()]);
        let dist = if self.noise > 0.0 {
            let normal = Normal::new(0.0, self.noise).expect("positive sd");
            let mass = base.probs().map(|p| (p + rng.sample(normal)).max(0.0));
            if mass.iter().sum::<f64>() > 0.0 {
                ExposureDistribution::from_mass(mass)
            } else {
                base
            }
        } else {
            base
        };
        let text = justification(&dist, &mut rng);
        (dist, text)
    }
}

fn justification(d: &ExposureDistribution, rng: &mut ChaCha8Rng) -> String {
    let [e0, e1, e2, e3] = d.probs();
    let g = d.gaisi(0.5);
    let count = ((6.0 * g + rng.random::<f64>()).floor() as usize).min(5);
    let mut order: Vec<usize> = (0..4).collect();
    order.shuffle(rng);
    // Image capability is mentioned first when it carries real weight.
    if e3 > 0.05 {
        order.insert(0, 4);
    } else {
        order.push(4);
    }
    let mut parts = vec!["Rating for this occupation and task follows.".to_string()];
    for &i in order.iter().take(count) {
        parts.push(AFFORDANCE_PHRASES[i].to_string());
    }
    if e2 > 0.2 {
        parts.push(INTEGRATION_PHRASE.into());
    }
    if e0 > 0.6 {
        parts.push(CONSTRAINT_PHRASE.into());
    }
    if e1 < 0.1 && rng.random::<f64>() < 0.5 {
        parts.push(LIMITED_PHRASE.into());
    }
    if (0.35..0.6).contains(&e0) && rng.random::<f64>() < 0.5 {
        parts.push(UNCERTAIN_PHRASE.into());
    }
    if rng.random::<f64>() < 0.3 {
        parts.push(CONTRAST_PHRASE.into());
    }
    parts.join(" ")
}

/// [`ChatBackend`] answering from a [`MockRater`], formatted like a real response.
#[derive(Debug, Default)]
pub struct MockBackend {
    pub rater: MockRater,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(rater: MockRater) -> Self {
        Self { rater, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &RateRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let ratings: Vec<serde_json::Value> = request
            .task_ids
            .iter()
            .map(|t| {
                let (d, text) = self.rater.rate(&request.occ_code, t, request.run_index);
                let [e0, e1, e2, e3] = d.probs();
                json!({"task_id": t, "E0": e0, "E1": e1, "E2": e2, "E3": e3, "justification": text})
            })
            .collect();
        let block = serde_json::to_string_pretty(&json!({ "ratings": ratings })).expect("serialisable");
        Ok(format!(
            "Overview for occupation {} and category {}.\n\n```json\n{block}\n```\n",
            request.occ_code, request.category
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rater::tag_justification;

    #[test]
    fn phrases_hit_only_their_tag() {
        for (i, p) in AFFORDANCE_PHRASES.iter().enumerate() {
            let t = tag_justification(p);
            assert_eq!(t.affordance_count(), 1, "{p}");
            assert!(t.affordances[i], "{p}");
            assert!(!t.any_cue(), "{p}");
        }
        let cues = [INTEGRATION_PHRASE, CONSTRAINT_PHRASE, LIMITED_PHRASE, UNCERTAIN_PHRASE, CONTRAST_PHRASE];
        for (i, p) in cues.iter().enumerate() {
            let t = tag_justification(p);
            assert_eq!(t.affordance_count(), 0, "{p}");
            assert_eq!(t.cues().iter().filter(|c| **c).count(), 1, "{p}");
            assert!(t.cues()[i], "{p}");
        }
        assert_eq!(tag_justification("Rating for this occupation and task follows."), JustificationTags::default());
    }

    use crate::rater::JustificationTags;

    #[test]
    fn zero_noise_runs_identical() {
        let m = MockRater::new(3, 0.0);
        assert_eq!(m.rate("11", "T01", 1).0, m.rate("11", "T01", 4).0);
        let noisy = MockRater::new(3, 0.05);
        assert_ne!(noisy.rate("11", "T01", 1).0, noisy.rate("11", "T01", 2).0);
    }
}
