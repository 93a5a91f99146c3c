//! Relevance backends: decide whether a catalog candidate could describe the
//! target (or the object to avoid) of an utterance.
//!
//! - [`LiveClient`]: OpenAI-compatible chat-completions client with a
//!   persistent [`ResponseCache`].
//! - [`RuleOracle`]: answers from the registered ground truth.
//! - [`stub`]: a tiny local HTTP server for exercising the live client.

mod cache;
mod live;
mod oracle;
mod parse;
mod prompt;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use live::{LiveClient, LiveConfig, API_KEY_ENV};
pub use oracle::RuleOracle;
pub use parse::parse_final_answer;
pub use prompt::{build_prompt, system_prompt, user_prompt, PromptPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "object type")]
    ObjectType,
    #[serde(rename = "object color")]
    ObjectColor,
}

impl Group {
    pub fn phrase(self) -> &'static str {
        match self {
            Group::ObjectType => "object type",
            Group::ObjectColor => "object color",
        }
    }
}

/// Whose features are being asked about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryRole {
    Target,
    Avoid,
}

impl QueryRole {
    pub fn phrase(self) -> &'static str {
        match self {
            QueryRole::Target => "target object",
            QueryRole::Avoid => "object to avoid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn is_yes(self) -> bool {
        self == Verdict::Yes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    Live,
    Cache,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceAnswer {
    pub verdict: Verdict,
    pub transcript: String,
    pub source: AnswerSource,
}

/// One binary relevance question.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub utterance: String,
    pub group: Group,
    pub candidate: String,
    pub role: QueryRole,
}

#[derive(Debug, Error)]
pub enum LmError {
    #[error("specification error: {0}")]
    Specification(String),
    #[error("could not parse answer: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend failed after {attempts} attempts: {message}")]
    Backend { message: String, attempts: usize, transcript: String },
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Anything that can answer relevance queries. Implementations are shared
/// across threads.
pub trait RelevanceBackend: Send + Sync {
    fn name(&self) -> &str;
    fn query(&self, q: &Query) -> Result<RelevanceAnswer, LmError>;
}
