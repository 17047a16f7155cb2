//! Consumer-supplied intelligence. Every hook is optional; the engine has a
//! deterministic fallback for each, so it runs with no model and no network.
//!
//! Hooks are advisory. Their outputs are validated before use and anything
//! the engine records because of a hook carries the hook's name.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::Claim;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("hook `{hook}` failed: {message}")]
pub struct HookError {
    pub hook: String,
    pub message: String,
}

impl HookError {
    pub fn new(hook: impl Into<String>, message: impl Into<String>) -> Self {
        HookError {
            hook: hook.into(),
            message: message.into(),
        }
    }
}

/// The persistence layer a piece of content or a query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerLabel {
    Knowledge,
    Memory,
    Wisdom,
}

impl LayerLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerLabel::Knowledge => "knowledge",
            LayerLabel::Memory => "memory",
            LayerLabel::Wisdom => "wisdom",
        }
    }
}

impl fmt::Display for LayerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayerLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knowledge" => Ok(LayerLabel::Knowledge),
            "memory" => Ok(LayerLabel::Memory),
            "wisdom" => Ok(LayerLabel::Wisdom),
            other => Err(format!("unknown layer `{other}`")),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str {
        "embedding_provider"
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, HookError>;
}

pub trait SummaryGenerator: Send + Sync {
    fn name(&self) -> &str {
        "summary_generator"
    }
    fn summarize(&self, items: &[String]) -> Result<String, HookError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArbiterVerdict {
    ASupersedesB,
    BSupersedesA,
    Independent,
    Duplicate,
}

pub trait ConflictArbiter: Send + Sync {
    fn name(&self) -> &str {
        "conflict_arbiter"
    }
    fn arbitrate(&self, a: &Claim, b: &Claim) -> Result<ArbiterVerdict, HookError>;
}

pub trait PersistenceClassifier: Send + Sync {
    fn name(&self) -> &str {
        "persistence_classifier"
    }
    fn classify(&self, content: &str) -> Result<LayerLabel, HookError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankCandidate {
    pub id: String,
    pub text: String,
}

pub trait Reranker: Send + Sync {
    fn name(&self) -> &str {
        "reranker"
    }
    /// Returns candidate ids in the preferred order.
    fn rerank(&self, query: &str, candidates: &[RerankCandidate])
        -> Result<Vec<String>, HookError>;
}

/// The five optional consumer hooks. `HookSet::default()` is the fully
/// offline configuration.
#[derive(Clone, Default)]
pub struct HookSet {
    pub embedding_provider: Option<Arc<dyn EmbeddingProvider>>,
    pub summary_generator: Option<Arc<dyn SummaryGenerator>>,
    pub conflict_arbiter: Option<Arc<dyn ConflictArbiter>>,
    pub persistence_classifier: Option<Arc<dyn PersistenceClassifier>>,
    pub reranker: Option<Arc<dyn Reranker>>,
}

impl HookSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_null(&self) -> bool {
        self.embedding_provider.is_none()
            && self.summary_generator.is_none()
            && self.conflict_arbiter.is_none()
            && self.persistence_classifier.is_none()
            && self.reranker.is_none()
    }
}

impl fmt::Debug for HookSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HookSet")
            .field("embedding_provider", &self.embedding_provider.is_some())
            .field("summary_generator", &self.summary_generator.is_some())
            .field("conflict_arbiter", &self.conflict_arbiter.is_some())
            .field(
                "persistence_classifier",
                &self.persistence_classifier.is_some(),
            )
            .field("reranker", &self.reranker.is_some())
            .finish()
    }
}

/// Default summary: items joined with "; " and cut to `budget` bytes on a
/// char boundary.
pub fn null_summary(items: &[String], budget: usize) -> String {
    let joined = items.join("; ");
    if joined.len() <= budget {
        return joined;
    }
    let mut end = budget;
    while !joined.is_char_boundary(end) {
        end -= 1;
    }
    joined[..end].to_string()
}

/// Default arbiter verdict.
pub fn null_verdict() -> ArbiterVerdict {
    ArbiterVerdict::Independent
}
