//! Query routing, ephemeral sessions and the flat control store.
//!
//! A query's layer comes from, in order: an oracle label supplied by the
//! caller, the persistence classifier hook, or the keyword heuristic.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::Stores;
use crate::error::Result;
use crate::hooks::{HookSet, LayerLabel};
use crate::ids::ContextId;
use crate::knowledge::SearchOptions;
use crate::memory::RecallOptions;
use crate::retrieval::{self, FusionConfig, RankedList};
use crate::temporal::Timestamp;

/// Marker lexicons for the heuristic router and memory ordering. Markers
/// may span several words ("how do i"); matching is on whole tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub temporal_markers: Vec<String>,
    pub directive_markers: Vec<String>,
    /// Temporal markers that ask for the most recent item first.
    pub newest_first_markers: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            temporal_markers: words(&["when", "before", "after", "first", "last", "changed"]),
            directive_markers: words(&["should", "prefer", "always", "never", "how do i"]),
            newest_first_markers: words(&["last", "latest", "recent", "recently"]),
        }
    }
}

fn has_marker(tokens: &[String], marker: &str) -> bool {
    let m = retrieval::tokenize(marker);
    !m.is_empty() && tokens.windows(m.len()).any(|w| w == m.as_slice())
}

fn any_marker(tokens: &[String], markers: &[String]) -> bool {
    markers.iter().any(|m| has_marker(tokens, m))
}

/// Temporal markers route to memory, directive markers to wisdom,
/// everything else to knowledge.
pub fn classify_heuristic(text: &str, config: &RouterConfig) -> LayerLabel {
    let tokens = retrieval::tokenize(text);
    if any_marker(&tokens, &config.temporal_markers) {
        LayerLabel::Memory
    } else if any_marker(&tokens, &config.directive_markers) {
        LayerLabel::Wisdom
    } else {
        LayerLabel::Knowledge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Oracle,
    ClassifierHook,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedQuery {
    pub text: String,
    pub label: LayerLabel,
    pub label_source: LabelSource,
    /// `(system_time, valid_time)` for memory recall.
    pub as_of: Option<(Timestamp, Timestamp)>,
}

impl RoutedQuery {
    /// Resolves the label through the fallback chain. A failing classifier
    /// hook is an error, not a silent fallback.
    pub fn resolve(
        text: &str,
        oracle: Option<LayerLabel>,
        hooks: &HookSet,
        config: &RouterConfig,
    ) -> Result<Self> {
        let (label, label_source) = match (oracle, &hooks.persistence_classifier) {
            (Some(l), _) => (l, LabelSource::Oracle),
            (None, Some(c)) => (c.classify(text)?, LabelSource::ClassifierHook),
            (None, None) => (classify_heuristic(text, config), LabelSource::Heuristic),
        };
        Ok(RoutedQuery {
            text: text.to_string(),
            label,
            label_source,
            as_of: None,
        })
    }

    pub fn as_of(mut self, system_time: Timestamp, valid_time: Timestamp) -> Self {
        self.as_of = Some((system_time, valid_time));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    /// `None` for answers from the flat store.
    pub layer: Option<LayerLabel>,
    pub id: String,
    pub text: String,
    pub score: f64,
    pub valid_from: Option<Timestamp>,
    pub explanation: String,
}

/// Where to look in memory and which wisdom scope applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouteScope {
    pub context: Option<ContextId>,
}

/// Dispatches a routed query to its layer. Read-only.
#[allow(clippy::too_many_arguments)]
pub fn route(
    query: &RoutedQuery,
    stores: &Stores,
    hooks: &HookSet,
    config: &RouterConfig,
    fusion: FusionConfig,
    scope: RouteScope,
    k: usize,
    now: Timestamp,
) -> Result<Vec<Answer>> {
    if k == 0 {
        return Err(crate::error::Error::Parameter(
            "k must be at least 1".into(),
        ));
    }
    match query.label {
        LayerLabel::Knowledge => route_knowledge(query, stores, hooks, fusion, k),
        LayerLabel::Memory => route_memory(query, stores, config, scope, k, now),
        LayerLabel::Wisdom => route_wisdom(query, stores, scope, k),
    }
}

fn route_knowledge(
    query: &RoutedQuery,
    stores: &Stores,
    hooks: &HookSet,
    fusion: FusionConfig,
    k: usize,
) -> Result<Vec<Answer>> {
    let options = SearchOptions {
        fusion,
        ..SearchOptions::default()
    };
    let hits = stores
        .knowledge
        .search_knowledge(&query.text, k, &options, hooks)?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let valid_from = match h.item {
                crate::knowledge::KnowledgeItem::Claim(id) => stores
                    .knowledge
                    .get_claim(id)
                    .ok()
                    .map(|c| c.stamp.valid_from),
                crate::knowledge::KnowledgeItem::Conclusion(_) => None,
            };
            Answer {
                layer: Some(LayerLabel::Knowledge),
                id: h.item.to_string(),
                text: h.text,
                score: h.score,
                valid_from,
                explanation: format!("current knowledge via {}", h.sources.join("+")),
            }
        })
        .collect())
}

fn route_memory(
    query: &RoutedQuery,
    stores: &Stores,
    config: &RouterConfig,
    scope: RouteScope,
    k: usize,
    now: Timestamp,
) -> Result<Vec<Answer>> {
    let tokens = retrieval::tokenize(&query.text);
    let chronological = any_marker(&tokens, &config.temporal_markers);
    let newest_first = chronological && any_marker(&tokens, &config.newest_first_markers);
    // markers steer the ordering; they are not content to match
    let text = if chronological {
        let marker_tokens: BTreeSet<String> = config
            .temporal_markers
            .iter()
            .chain(&config.newest_first_markers)
            .flat_map(|m| retrieval::tokenize(m))
            .collect();
        let kept: Vec<&str> = tokens
            .iter()
            .filter(|t| !marker_tokens.contains(*t))
            .map(String::as_str)
            .collect();
        kept.join(" ")
    } else {
        query.text.clone()
    };
    let options = RecallOptions {
        as_of: query.as_of,
        include_archived: false,
    };
    let contexts: Vec<ContextId> = match scope.context {
        Some(c) => vec![c],
        None => stores.memory.contexts().map(|c| c.id).collect(),
    };
    let pool = k.max(50);
    let mut hits = Vec::new();
    for ctx in contexts {
        hits.extend(stores.memory.recall(&text, ctx, pool, now, &options)?);
    }
    if chronological {
        hits.sort_by(|a, b| {
            let order = a.stamp.valid_from.cmp(&b.stamp.valid_from);
            let order = if newest_first { order.reverse() } else { order };
            order.then(a.id.cmp(&b.id))
        });
    } else {
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.stamp.system_created.cmp(&a.stamp.system_created))
                .then(a.id.cmp(&b.id))
        });
    }
    hits.truncate(k);
    let why = match (chronological, newest_first) {
        (false, _) => "recall by relevance x retention",
        (true, false) => "recall ordered oldest first",
        (true, true) => "recall ordered newest first",
    };
    Ok(hits
        .into_iter()
        .map(|h| Answer {
            layer: Some(LayerLabel::Memory),
            id: h.id.to_string(),
            text: h.content,
            score: h.score,
            valid_from: Some(h.stamp.valid_from),
            explanation: format!("{why} (retention {:.3})", h.retention),
        })
        .collect())
}

fn route_wisdom(
    query: &RoutedQuery,
    stores: &Stores,
    scope: RouteScope,
    k: usize,
) -> Result<Vec<Answer>> {
    let scope_name = scope
        .context
        .and_then(|c| stores.memory.contexts().find(|x| x.id == c))
        .map(|c| c.name.as_str());
    let active = stores.wisdom.active_directives(scope_name);
    let corpus: Vec<(crate::ids::EntryId, &str)> = active
        .iter()
        .map(|e| (e.id, e.directive.as_str()))
        .collect();
    let ranked = retrieval::lexical_rank(&corpus, &query.text, k);
    Ok(ranked
        .items
        .into_iter()
        .map(|s| {
            let e = stores
                .wisdom
                .entry(s.id)
                .expect("ranked ids come from the store");
            Answer {
                layer: Some(LayerLabel::Wisdom),
                id: s.id.to_string(),
                text: e.directive.clone(),
                score: s.score,
                valid_from: None,
                explanation: format!("{:?} directive", e.tier).to_lowercase(),
            }
        })
        .collect())
}

/// An inference-time session. The working set is scratch space that is
/// never persisted; dropping the session leaves the stores untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub context_id: Option<ContextId>,
    pub started_at: Timestamp,
    pub working_set: Vec<Answer>,
}

impl Session {
    pub fn new(id: &str, context_id: Option<ContextId>, started_at: Timestamp) -> Self {
        Session {
            id: id.to_string(),
            context_id,
            started_at,
            working_set: Vec::new(),
        }
    }

    /// Routes a query in this session's context and keeps the answers in
    /// the working set.
    #[allow(clippy::too_many_arguments)]
    pub fn ask(
        &mut self,
        query: &RoutedQuery,
        stores: &Stores,
        hooks: &HookSet,
        config: &RouterConfig,
        fusion: FusionConfig,
        k: usize,
        now: Timestamp,
    ) -> Result<Vec<Answer>> {
        let scope = RouteScope {
            context: self.context_id,
        };
        let answers = route(query, stores, hooks, config, fusion, scope, k, now)?;
        self.working_set.extend(answers.iter().cloned());
        Ok(answers)
    }
}

/// The control condition: one undifferentiated lexical corpus. No layers,
/// no decay, no supersession, no temporal ordering.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatStore {
    docs: Vec<String>,
}

impl FlatStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a document and returns its index.
    pub fn add(&mut self, text: &str) -> usize {
        self.docs.push(text.to_string());
        self.docs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, index: usize) -> Option<&str> {
        self.docs.get(index).map(String::as_str)
    }

    /// Everything the typed stores hold, flattened: claims (superseded or
    /// not), conclusions, memory facts (archived or not) and directives.
    pub fn from_stores(stores: &Stores) -> Self {
        let mut flat = FlatStore::new();
        for c in stores.knowledge.claims() {
            flat.add(&c.statement);
        }
        for c in stores.knowledge.state().conclusions.values() {
            flat.add(&c.statement);
        }
        for f in stores.memory.facts() {
            flat.add(&f.content);
        }
        for e in stores.wisdom.entries() {
            flat.add(&e.directive);
        }
        flat
    }

    pub fn ranked(&self, query: &str, k: usize) -> RankedList<usize> {
        let corpus: Vec<(usize, &str)> = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.as_str()))
            .collect();
        retrieval::lexical_rank(&corpus, query, k)
    }

    pub fn flat_query(&self, query: &str, k: usize) -> Vec<Answer> {
        self.ranked(query, k)
            .items
            .into_iter()
            .map(|s| Answer {
                layer: None,
                id: format!("d{}", s.id),
                text: self.docs[s.id].clone(),
                score: s.score,
                valid_from: None,
                explanation: "flat lexical match".into(),
            })
            .collect()
    }
}
