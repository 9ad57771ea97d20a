//! Prompt dispatch to a language-model backend and intent collection.
//!
//! A slot's N prompts are fanned out over at most `max_in_flight` worker
//! threads. Responses are re-indexed by agent, so results never depend on
//! completion order. Transport failures become `ParseError` statuses with
//! all-zero rows; nothing is dropped.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::allocation::{AssignmentMatrix, FeedbackStatus};
use crate::config::mix_seed;
use crate::error::{Error, Result};
use crate::intent::{parse_intent, IntentObject};
use crate::observation::AgentObservation;
use crate::policy::{self, PolicySpec};
use crate::prompt::PromptBundle;

pub const DEFAULT_CHAT_PATH: &str = "/api/chat";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_path")]
        path: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
    },
    /// Answers from a classical policy, serialized as schema-true JSON.
    Mock { policy: PolicySpec, n_antennas: usize },
}

fn default_path() -> String {
    DEFAULT_CHAT_PATH.to_string()
}

fn default_timeout_ms() -> u64 {
    120_000
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendConfig {
    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig::Http {
            endpoint: endpoint.into(),
            model: model.into(),
            path: default_path(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub backend: BackendConfig,
    pub max_in_flight: usize,
    /// Sent as the request's `format` field; `None` omits it.
    pub format_hint: Option<String>,
}

impl GatewayConfig {
    pub fn new(backend: BackendConfig) -> Self {
        Self {
            backend,
            max_in_flight: 4,
            format_hint: Some("json".into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::config("max_in_flight", "must be at least 1"));
        }
        match &self.backend {
            BackendConfig::Http { timeout_ms: 0, .. } => Err(Error::config("timeout_ms", "must be > 0")),
            BackendConfig::Http { endpoint, .. } if endpoint.is_empty() => {
                Err(Error::config("endpoint", "must not be empty"))
            }
            BackendConfig::Mock { policy: PolicySpec::Llm, .. } | BackendConfig::Mock { policy: PolicySpec::Oracle { .. }, .. } => {
                Err(Error::Policy("mock backend supports bcq, random and greedy".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One agent's request as seen by a backend.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub slot: usize,
    pub agent: usize,
    pub prompt: &'a str,
    pub observation: &'a AgentObservation,
}

/// A source of raw model text. `Err` means a transport-level failure.
pub trait IntentBackend: Send + Sync {
    fn complete(&self, request: &AgentRequest<'_>) -> std::result::Result<String, String>;
}

/// Emits the row a classical policy would give the agent.
#[derive(Debug, Clone)]
pub struct MockBackend {
    policy: PolicySpec,
    n_antennas: usize,
}

impl MockBackend {
    pub fn new(policy: PolicySpec, n_antennas: usize) -> Self {
        Self { policy, n_antennas }
    }

    fn assignment(&self, obs: &AgentObservation, slot: usize) -> Result<AssignmentMatrix> {
        let m = self.n_antennas;
        match self.policy {
            PolicySpec::Bcq { k, per_ru: false } => policy::bcq_assign(&obs.zeta, k, m),
            PolicySpec::Bcq { k, per_ru: true } => policy::bcq_per_ru_assign(&obs.zeta, k, m),
            PolicySpec::Greedy => policy::greedy_assign(&obs.zeta, &obs.eta, m),
            PolicySpec::Random { seed, p } => {
                // independent draw per agent: no shared matrix, so no self-correction here
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[slot as u64, obs.agent as u64]));
                let r = obs.zeta.n_rus();
                let mut a = AssignmentMatrix::zeros(obs.zeta.n_stations(), r);
                for l in 0..r {
                    a.set(obs.agent, l, rng.random_bool(p));
                }
                Ok(a)
            }
            PolicySpec::Oracle { .. } | PolicySpec::Llm => Err(Error::Policy(format!("mock cannot emulate {}", self.policy))),
        }
    }
}

impl IntentBackend for MockBackend {
    fn complete(&self, request: &AgentRequest<'_>) -> std::result::Result<String, String> {
        let a = self.assignment(request.observation, request.slot).map_err(|e| e.to_string())?;
        let reasoning = format!("mock {} decision", self.policy);
        Ok(IntentObject::from_row(request.agent, a.row(request.agent), reasoning).to_json())
    }
}

/// Chat endpoint client: POST `{model, messages, stream: false, format}`.
pub struct HttpBackend {
    url: String,
    model: String,
    format_hint: Option<String>,
    retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        path: &str,
        model: &str,
        timeout: Duration,
        retries: u32,
        backoff: Duration,
        format_hint: Option<String>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        let url = if path.is_empty() {
            endpoint.to_string()
        } else {
            format!("{}/{}", endpoint.trim_end_matches('/'), path.trim_start_matches('/'))
        };
        Self {
            url,
            model: model.to_string(),
            format_hint,
            retries,
            backoff,
            agent,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "stream": false,
        });
        if let Some(fmt) = &self.format_hint {
            body["format"] = Value::String(fmt.clone());
        }
        body
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, String> {
        let mut resp = self.agent.post(&self.url).send_json(body).map_err(|e| e.to_string())?;
        let value: Value = resp.body_mut().read_json().map_err(|e| format!("invalid response body: {e}"))?;
        message_content(&value).ok_or_else(|| "response has no message content".to_string())
    }
}

/// Extracts the assistant text from common chat response shapes.
pub fn message_content(value: &Value) -> Option<String> {
    let candidates = [
        value.pointer("/message/content"),
        value.pointer("/choices/0/message/content"),
        value.get("response"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| v.as_str().map(str::to_string))
}

impl IntentBackend for HttpBackend {
    fn complete(&self, request: &AgentRequest<'_>) -> std::result::Result<String, String> {
        let body = self.request_body(request.prompt);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(format!("{} attempt(s) failed: {last}", self.retries + 1))
    }
}

/// Raw and parsed answer for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentResponse {
    pub agent: usize,
    /// `None` when the backend never produced text.
    pub raw: Option<String>,
    pub row: Vec<bool>,
    pub status: FeedbackStatus,
    pub latency_ms: f64,
}

impl IntentResponse {
    pub fn transport_failed(&self) -> bool {
        self.raw.is_none()
    }
}

pub struct Gateway {
    backend: Box<dyn IntentBackend>,
    max_in_flight: usize,
}

impl Gateway {
    pub fn from_config(config: &GatewayConfig) -> Result<Self> {
        config.validate()?;
        let backend: Box<dyn IntentBackend> = match &config.backend {
            BackendConfig::Http {
                endpoint,
                model,
                path,
                timeout_ms,
                retries,
                backoff_ms,
            } => Box::new(HttpBackend::new(
                endpoint,
                path,
                model,
                Duration::from_millis(*timeout_ms),
                *retries,
                Duration::from_millis(*backoff_ms),
                config.format_hint.clone(),
            )),
            BackendConfig::Mock { policy, n_antennas } => Box::new(MockBackend::new(policy.clone(), *n_antennas)),
        };
        Ok(Self::with_backend(backend, config.max_in_flight))
    }

    pub fn with_backend(backend: Box<dyn IntentBackend>, max_in_flight: usize) -> Self {
        Self {
            backend,
            max_in_flight: max_in_flight.max(1),
        }
    }

    /// Sends every prompt and returns exactly one response per agent, in agent order.
    pub fn dispatch(&self, bundle: &PromptBundle, observations: &[AgentObservation]) -> Result<Vec<IntentResponse>> {
        let n = bundle.prompts.len();
        if observations.len() != n {
            return Err(Error::Shape(format!("{n} prompts for {} observations", observations.len())));
        }
        let n_rus = observations.first().map_or(0, |o| o.zeta.n_rus());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<IntentResponse>>> = Mutex::new(vec![None; n]);
        let workers = self.max_in_flight.min(n);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= n {
                        break;
                    }
                    let resp = self.request_one(bundle, &observations[idx], n_rus);
                    slots.lock().expect("response table poisoned")[idx] = Some(resp);
                });
            }
        });
        Ok(slots
            .into_inner()
            .expect("response table poisoned")
            .into_iter()
            .map(|r| r.expect("every agent answered"))
            .collect())
    }

    fn request_one(&self, bundle: &PromptBundle, obs: &AgentObservation, n_rus: usize) -> IntentResponse {
        let request = AgentRequest {
            slot: bundle.slot,
            agent: obs.agent,
            prompt: &bundle.prompts[obs.agent],
            observation: obs,
        };
        let started = Instant::now();
        let outcome = self.backend.complete(&request);
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(raw) => {
                let parsed = parse_intent(&raw, obs.agent, n_rus);
                IntentResponse {
                    agent: obs.agent,
                    raw: Some(raw),
                    row: parsed.row,
                    status: parsed.status,
                    latency_ms,
                }
            }
            Err(e) => IntentResponse {
                agent: obs.agent,
                raw: None,
                row: vec![false; n_rus],
                status: FeedbackStatus::ParseError(format!("gateway: {e}")),
                latency_ms,
            },
        }
    }
}

/// One line of the response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLogEntry {
    pub slot: usize,
    pub agent: usize,
    pub prompt_hash: String,
    pub raw: Option<String>,
    pub status: FeedbackStatus,
    pub latency_ms: f64,
}

pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn log_entries(bundle: &PromptBundle, responses: &[IntentResponse]) -> Vec<ResponseLogEntry> {
    responses
        .iter()
        .map(|r| ResponseLogEntry {
            slot: bundle.slot,
            agent: r.agent,
            prompt_hash: prompt_hash(&bundle.prompts[r.agent]),
            raw: r.raw.clone(),
            status: r.status.clone(),
            latency_ms: r.latency_ms,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compute_gains, generate_channels};
    use crate::config::WlanConfig;
    use crate::observation::{impact_factors, make_observations};
    use crate::prompt::{build_prompts, PromptOptions, PromptTemplates};

    fn slot_inputs(n: usize) -> (Vec<AgentObservation>, PromptBundle) {
        let chan = generate_channels(&WlanConfig::new(n, 4, 9, 1).with_seed(5)).unwrap();
        let g = compute_gains(&chan, 0).unwrap();
        let eta = impact_factors(&g);
        let obs = make_observations(g, eta, &vec![FeedbackStatus::Initial; n]).unwrap();
        let b = build_prompts(&obs, &PromptTemplates::default(), &PromptOptions::default(), 4, 0);
        (obs, b)
    }

    #[test]
    fn mock_bcq_matches_policy() {
        let (obs, b) = slot_inputs(10);
        let gw = Gateway::from_config(&GatewayConfig::new(BackendConfig::Mock {
            policy: PolicySpec::bcq(4),
            n_antennas: 4,
        }))
        .unwrap();
        let resp = gw.dispatch(&b, &obs).unwrap();
        let expected = policy::bcq_assign(&obs[0].zeta, 4, 4).unwrap();
        assert_eq!(resp.len(), 10);
        for r in &resp {
            assert_eq!(r.status, FeedbackStatus::ParseSuccess);
            assert_eq!(r.row.as_slice(), expected.row(r.agent));
        }
    }

    #[test]
    fn empty_bundle() {
        let gw = Gateway::with_backend(Box::new(MockBackend::new(PolicySpec::Greedy, 4)), 4);
        let b = PromptBundle {
            slot: 0,
            template: crate::prompt::TemplateId::Pt1,
            strategy: crate::prompt::Strategy::RateSum,
            prompts: vec![],
        };
        assert!(gw.dispatch(&b, &[]).unwrap().is_empty());
    }

    struct Failing;
    impl IntentBackend for Failing {
        fn complete(&self, _: &AgentRequest<'_>) -> std::result::Result<String, String> {
            Err("connection refused".into())
        }
    }

    #[test]
    fn transport_failures_are_contained() {
        let (obs, b) = slot_inputs(5);
        let resp = Gateway::with_backend(Box::new(Failing), 2).dispatch(&b, &obs).unwrap();
        assert_eq!(resp.len(), 5);
        for (i, r) in resp.iter().enumerate() {
            assert_eq!(r.agent, i);
            assert!(r.transport_failed());
            assert!(r.status.is_error());
            assert_eq!(r.row, vec![false; 9]);
        }
    }

    #[test]
    fn concurrency_does_not_change_results() {
        let (obs, b) = slot_inputs(10);
        let run = |k| {
            Gateway::with_backend(Box::new(MockBackend::new(PolicySpec::Random { seed: 3, p: 0.5 }, 4)), k)
                .dispatch(&b, &obs)
                .unwrap()
                .into_iter()
                .map(|r| (r.row, r.status))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn request_body_shape() {
        let hb = HttpBackend::new("http://h:1/", "/api/chat", "m", Duration::from_secs(1), 0, Duration::ZERO, Some("json".into()));
        assert_eq!(hb.url(), "http://h:1/api/chat");
        let body = hb.request_body("hi");
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["stream"], false);
        assert_eq!(body["format"], "json");
    }

    #[test]
    fn content_shapes() {
        assert_eq!(message_content(&json!({"message": {"content": "a"}})).as_deref(), Some("a"));
        assert_eq!(message_content(&json!({"choices": [{"message": {"content": "b"}}]})).as_deref(), Some("b"));
        assert_eq!(message_content(&json!({"response": "c"})).as_deref(), Some("c"));
        assert_eq!(message_content(&json!({"x": 1})), None);
    }

}
