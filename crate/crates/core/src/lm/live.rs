use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    build_prompt, cache_key, parse_final_answer, AnswerSource, LmError, PromptPair, Query, RelevanceAnswer,
    RelevanceBackend, ResponseCache,
};
use crate::sim::Catalog;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "LGA_LM_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Total attempts per query, counting the first.
    pub retries: usize,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com".into(),
            model: "gpt-4-0613".into(),
            retries: 3,
            backoff_ms: 500,
            timeout_ms: 60_000,
        }
    }
}

/// Chat-completions relevance backend with a response cache.
pub struct LiveClient {
    config: LiveConfig,
    api_key: String,
    catalog: Arc<Catalog>,
    cache: Arc<ResponseCache>,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

impl LiveClient {
    pub fn new(config: LiveConfig, api_key: String, catalog: Arc<Catalog>, cache: Arc<ResponseCache>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        Self { config, api_key, catalog, cache, agent, requests: AtomicUsize::new(0) }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(config: LiveConfig, catalog: Arc<Catalog>, cache: Arc<ResponseCache>) -> Result<Self, LmError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| LmError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(config, key, catalog, cache))
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Number of HTTP requests issued so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn post(&self, prompt: &PromptPair) -> Result<String, String> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/v1/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let resp = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, r) => format!("HTTP {code}: {}", r.into_string().unwrap_or_default()),
                other => other.to_string(),
            })?;
        let v: serde_json::Value = resp.into_json().map_err(|e| format!("bad response body: {e}"))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| format!("response has no message content: {v}"))
    }
}

impl RelevanceBackend for LiveClient {
    fn name(&self) -> &str {
        "lm"
    }

    fn query(&self, q: &Query) -> Result<RelevanceAnswer, LmError> {
        let prompt = build_prompt(&self.catalog, &q.utterance, q.group, &q.candidate, q.role)?;
        let key = cache_key(&self.config.model, &prompt);
        if let Some(e) = self.cache.get(&key) {
            return Ok(RelevanceAnswer { verdict: e.verdict, transcript: e.transcript, source: AnswerSource::Cache });
        }
        let attempts = self.config.retries.max(1);
        let mut last_error = String::new();
        let mut transcript = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(6)));
            }
            match self.post(&prompt) {
                Ok(text) => match parse_final_answer(&text) {
                    Ok(verdict) => {
                        self.cache.insert(key, &self.config.model, verdict, &text)?;
                        return Ok(RelevanceAnswer { verdict, transcript: text, source: AnswerSource::Live });
                    }
                    Err(e) => {
                        last_error = e.to_string();
                        transcript = text;
                    }
                },
                Err(e) => last_error = e,
            }
        }
        Err(LmError::Backend { message: last_error, attempts, transcript })
    }
}
