//! Memory layer: an append-only event log of experiences and its projection
//! into decay-bearing facts, scoped per context.
//!
//! Retrievability is never stored. It is recomputed at query time from the
//! fact's `(initial_strength, last_reinforced, reinforcement_count)`; the only
//! storage-level consequence of decay is [`MemoryStore::sweep`], which
//! archives facts below the recall threshold without deleting anything.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ContextId, EntryId, IntentionId, MemoryId};
use crate::retrieval::{self, Bm25Params};
use crate::temporal::{
    reinforced_half_life, retention, visible_as_of, BitemporalStamp, DecayParams, Span, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub id: ContextId,
    pub name: String,
    pub created_at: Timestamp,
}

/// Per-fact decay profile, fixed at observation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactDecay {
    pub initial_strength: f64,
    pub base_half_life: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFact {
    pub id: MemoryId,
    pub content: String,
    pub context_id: ContextId,
    pub session_id: Option<String>,
    pub stamp: BitemporalStamp,
    pub decay: FactDecay,
    pub last_reinforced: Timestamp,
    pub reinforcement_count: u32,
    pub archived: bool,
    /// Sequence number of the `observed` event that created this fact.
    pub observed_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    TimeBased { due_at: Timestamp },
    EventBased { tag: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentionStatus {
    Pending,
    Surfaced,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intention {
    pub id: IntentionId,
    pub description: String,
    pub trigger: Trigger,
    pub status: IntentionStatus,
    pub surfaced_at: Option<Timestamp>,
    pub context_id: ContextId,
    pub scheduled_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationRecord {
    pub pattern_key: String,
    pub entry: EntryId,
    pub members: Vec<MemoryId>,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryPayload {
    ContextCreated {
        context: Context,
    },
    Observed {
        fact: MemoryFact,
    },
    Reinforced {
        id: MemoryId,
    },
    Invalidated {
        id: MemoryId,
        valid_until: Timestamp,
        reason: String,
    },
    Archived {
        id: MemoryId,
        retention: f64,
    },
    IntentionScheduled {
        intention: Intention,
    },
    IntentionSurfaced {
        id: IntentionId,
    },
    IntentionCompleted {
        id: IntentionId,
    },
    IntentionExpired {
        id: IntentionId,
    },
    Consolidated {
        record: ConsolidationRecord,
    },
}

impl MemoryPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            MemoryPayload::ContextCreated { .. } => "context_created",
            MemoryPayload::Observed { .. } => "observed",
            MemoryPayload::Reinforced { .. } => "reinforced",
            MemoryPayload::Invalidated { .. } => "invalidated",
            MemoryPayload::Archived { .. } => "archived",
            MemoryPayload::IntentionScheduled { .. } => "intention_scheduled",
            MemoryPayload::IntentionSurfaced { .. } => "intention_surfaced",
            MemoryPayload::IntentionCompleted { .. } => "intention_completed",
            MemoryPayload::IntentionExpired { .. } => "intention_expired",
            MemoryPayload::Consolidated { .. } => "consolidated",
        }
    }

    pub fn subject_id(&self) -> String {
        match self {
            MemoryPayload::ContextCreated { context } => context.id.to_string(),
            MemoryPayload::Observed { fact } => fact.id.to_string(),
            MemoryPayload::Reinforced { id }
            | MemoryPayload::Invalidated { id, .. }
            | MemoryPayload::Archived { id, .. } => id.to_string(),
            MemoryPayload::IntentionScheduled { intention } => intention.id.to_string(),
            MemoryPayload::IntentionSurfaced { id }
            | MemoryPayload::IntentionCompleted { id }
            | MemoryPayload::IntentionExpired { id } => id.to_string(),
            MemoryPayload::Consolidated { record } => record.pattern_key.clone(),
        }
    }
}

/// One immutable entry of the memory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub seq: u64,
    pub recorded_at: Timestamp,
    pub payload: MemoryPayload,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub contexts: BTreeMap<ContextId, Context>,
    pub facts: BTreeMap<MemoryId, MemoryFact>,
    pub intentions: BTreeMap<IntentionId, Intention>,
    pub consolidated: BTreeMap<String, ConsolidationRecord>,
    pub events: Vec<MemoryEvent>,
}

impl MemoryState {
    fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    pub fn apply(&mut self, event: &MemoryEvent) -> Result<()> {
        if event.seq != self.next_seq() {
            return Err(Error::Corrupt(format!(
                "memory event seq {} out of order (expected {})",
                event.seq,
                self.next_seq()
            )));
        }
        let now = event.recorded_at;
        match &event.payload {
            MemoryPayload::ContextCreated { context } => {
                self.contexts.insert(context.id, context.clone());
            }
            MemoryPayload::Observed { fact } => {
                self.facts.insert(fact.id, fact.clone());
            }
            MemoryPayload::Reinforced { id } => {
                let f = self.fact_mut(*id)?;
                f.reinforcement_count += 1;
                f.last_reinforced = now;
            }
            MemoryPayload::Invalidated {
                id, valid_until, ..
            } => {
                self.fact_mut(*id)?.stamp.valid_until = Some(*valid_until);
            }
            MemoryPayload::Archived { id, .. } => {
                self.fact_mut(*id)?.archived = true;
            }
            MemoryPayload::IntentionScheduled { intention } => {
                self.intentions.insert(intention.id, intention.clone());
            }
            MemoryPayload::IntentionSurfaced { id } => {
                let i = self.intention_mut(*id)?;
                i.status = IntentionStatus::Surfaced;
                i.surfaced_at = Some(now);
            }
            MemoryPayload::IntentionCompleted { id } => {
                let i = self.intention_mut(*id)?;
                i.status = IntentionStatus::Completed;
                i.surfaced_at.get_or_insert(now);
            }
            MemoryPayload::IntentionExpired { id } => {
                self.intention_mut(*id)?.status = IntentionStatus::Expired;
            }
            MemoryPayload::Consolidated { record } => {
                self.consolidated
                    .insert(record.pattern_key.clone(), record.clone());
            }
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn fact_mut(&mut self, id: MemoryId) -> Result<&mut MemoryFact> {
        self.facts
            .get_mut(&id)
            .ok_or_else(|| Error::Corrupt(format!("event for unknown memory {id}")))
    }

    fn intention_mut(&mut self, id: IntentionId) -> Result<&mut Intention> {
        self.intentions
            .get_mut(&id)
            .ok_or_else(|| Error::Corrupt(format!("event for unknown intention {id}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObserveOptions {
    /// Defaults to the observation instant.
    pub valid_from: Option<Timestamp>,
    pub session_id: Option<String>,
    /// Overrides the store's default strength and half-life for this fact.
    pub decay: Option<FactDecay>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RecallOptions {
    /// `(system_time, valid_time)`; defaults to `(now, now)`.
    pub as_of: Option<(Timestamp, Timestamp)>,
    /// Also consider archived facts and skip the recall threshold.
    pub include_archived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallHit {
    pub id: MemoryId,
    pub content: String,
    pub score: f64,
    pub relevance: f64,
    pub retention: f64,
    pub stamp: BitemporalStamp,
    pub archived: bool,
}

#[derive(Debug, Clone)]
pub struct MemoryStore {
    config: DecayParams,
    state: MemoryState,
    pending: Vec<MemoryEvent>,
}

impl Default for MemoryStore {
    fn default() -> Self {
        MemoryStore::new(DecayParams::default()).expect("default decay params are valid")
    }
}

impl MemoryStore {
    pub fn new(config: DecayParams) -> Result<Self> {
        config.validate()?;
        Ok(MemoryStore {
            config,
            state: MemoryState::default(),
            pending: Vec::new(),
        })
    }

    pub fn replay<'a>(
        config: DecayParams,
        events: impl IntoIterator<Item = &'a MemoryEvent>,
    ) -> Result<Self> {
        let mut store = MemoryStore::new(config)?;
        for ev in events {
            store.state.apply(ev)?;
        }
        Ok(store)
    }

    pub fn from_state(config: DecayParams, state: MemoryState) -> Result<Self> {
        config.validate()?;
        Ok(MemoryStore {
            config,
            state,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &DecayParams {
        &self.config
    }

    pub fn state(&self) -> &MemoryState {
        &self.state
    }

    pub fn take_pending(&mut self) -> Vec<MemoryEvent> {
        std::mem::take(&mut self.pending)
    }

    pub(crate) fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub(crate) fn apply_external(&mut self, event: &MemoryEvent) -> Result<()> {
        self.state.apply(event)
    }

    fn emit(&mut self, payload: MemoryPayload, now: Timestamp) -> Result<u64> {
        let event = MemoryEvent {
            seq: self.state.next_seq(),
            recorded_at: now,
            payload,
        };
        self.state.apply(&event)?;
        let seq = event.seq;
        self.pending.push(event);
        Ok(seq)
    }

    pub fn events(&self) -> &[MemoryEvent] {
        &self.state.events
    }

    pub fn event(&self, seq: u64) -> Option<&MemoryEvent> {
        // seqs are dense from 1
        seq.checked_sub(1)
            .and_then(|i| self.state.events.get(i as usize))
            .filter(|e| e.seq == seq)
    }

    pub fn create_context(&mut self, name: &str, now: Timestamp) -> Result<ContextId> {
        if name.trim().is_empty() {
            return Err(Error::Validation("context name is empty".into()));
        }
        if self.context_by_name(name).is_some() {
            return Err(Error::Validation(format!(
                "context `{name}` already exists"
            )));
        }
        let id = ContextId(
            self.state
                .contexts
                .keys()
                .next_back()
                .map_or(1, |c| c.0 + 1),
        );
        self.emit(
            MemoryPayload::ContextCreated {
                context: Context {
                    id,
                    name: name.to_string(),
                    created_at: now,
                },
            },
            now,
        )?;
        Ok(id)
    }

    pub fn context_by_name(&self, name: &str) -> Option<&Context> {
        self.state.contexts.values().find(|c| c.name == name)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.state.contexts.values()
    }

    fn require_context(&self, id: ContextId) -> Result<()> {
        if self.state.contexts.contains_key(&id) {
            Ok(())
        } else {
            Err(Error::not_found("context", id))
        }
    }

    pub fn observe(
        &mut self,
        content: &str,
        context_id: ContextId,
        options: ObserveOptions,
        now: Timestamp,
    ) -> Result<MemoryId> {
        self.require_context(context_id)?;
        if content.trim().is_empty() {
            return Err(Error::Validation("memory content is empty".into()));
        }
        let decay = options.decay.unwrap_or(FactDecay {
            initial_strength: self.config.initial_strength,
            base_half_life: self.config.half_life,
        });
        DecayParams {
            initial_strength: decay.initial_strength,
            half_life: decay.base_half_life,
            ..self.config
        }
        .validate()?;
        let id = MemoryId(self.state.facts.keys().next_back().map_or(1, |m| m.0 + 1));
        let fact = MemoryFact {
            id,
            content: content.to_string(),
            context_id,
            session_id: options.session_id,
            stamp: BitemporalStamp::open(now, options.valid_from.unwrap_or(now)),
            decay,
            last_reinforced: now,
            reinforcement_count: 0,
            archived: false,
            observed_seq: self.state.next_seq(),
        };
        self.emit(MemoryPayload::Observed { fact }, now)?;
        Ok(id)
    }

    pub fn fact(&self, id: MemoryId) -> Result<&MemoryFact> {
        self.state
            .facts
            .get(&id)
            .ok_or_else(|| Error::not_found("memory", id))
    }

    pub fn facts(&self) -> impl Iterator<Item = &MemoryFact> {
        self.state.facts.values()
    }

    pub fn effective_half_life(&self, fact: &MemoryFact) -> Span {
        reinforced_half_life(
            fact.decay.base_half_life,
            fact.reinforcement_count,
            self.config.reinforcement_growth,
            self.config.half_life_cap,
        )
    }

    /// Retrievability of `fact` at `now`.
    pub fn retrievability(&self, fact: &MemoryFact, now: Timestamp) -> f64 {
        retention(
            fact.decay.initial_strength,
            now.since(fact.last_reinforced),
            self.effective_half_life(fact),
        )
        .unwrap_or(0.0)
    }

    /// Resets elapsed time and grows the half-life. Returns the new
    /// retrievability, which equals the fact's initial strength.
    pub fn reinforce(&mut self, id: MemoryId, now: Timestamp) -> Result<f64> {
        let fact = self.fact(id)?;
        if fact.archived {
            return Err(Error::InvalidState(format!("memory {id} is archived")));
        }
        self.emit(MemoryPayload::Reinforced { id }, now)?;
        let fact = self.fact(id)?;
        Ok(self.retrievability(fact, now))
    }

    /// Closes the validity window at `valid_until`.
    pub fn invalidate(
        &mut self,
        id: MemoryId,
        valid_until: Timestamp,
        reason: &str,
        now: Timestamp,
    ) -> Result<()> {
        let fact = self.fact(id)?;
        if valid_until < fact.stamp.valid_from {
            return Err(Error::Window(format!(
                "valid_until {valid_until} precedes valid_from {} of {id}",
                fact.stamp.valid_from
            )));
        }
        self.emit(
            MemoryPayload::Invalidated {
                id,
                valid_until,
                reason: reason.to_string(),
            },
            now,
        )?;
        Ok(())
    }

    /// Facts in `context_id` that a recall could consider, before relevance.
    pub fn recall_candidates(
        &self,
        context_id: ContextId,
        now: Timestamp,
        options: &RecallOptions,
    ) -> Vec<&MemoryFact> {
        let (system_time, valid_time) = options.as_of.unwrap_or((now, now));
        self.state
            .facts
            .values()
            .filter(|f| f.context_id == context_id)
            .filter(|f| options.include_archived || !f.archived)
            .filter(|f| visible_as_of(&f.stamp, system_time, valid_time))
            .collect()
    }

    /// Ranked recall: BM25 relevance (over the candidate set) times
    /// retrievability at `now`. An empty query treats every candidate as
    /// equally relevant. Ties break by newer `system_created`, then id.
    pub fn recall(
        &self,
        query: &str,
        context_id: ContextId,
        k: usize,
        now: Timestamp,
        options: &RecallOptions,
    ) -> Result<Vec<RecallHit>> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        self.require_context(context_id)?;
        let candidates = self.recall_candidates(context_id, now, options);
        let relevance: BTreeMap<MemoryId, f64> = if retrieval::tokenize(query).is_empty() {
            candidates.iter().map(|f| (f.id, 1.0)).collect()
        } else {
            let corpus: Vec<(MemoryId, &str)> = candidates
                .iter()
                .map(|f| (f.id, f.content.as_str()))
                .collect();
            retrieval::bm25_scores(&corpus, query, Bm25Params::default())
                .into_iter()
                .map(|s| (s.id, s.score))
                .collect()
        };
        let mut hits: Vec<RecallHit> = candidates
            .into_iter()
            .filter_map(|f| {
                let rel = *relevance.get(&f.id)?;
                let ret = self.retrievability(f, now);
                if !options.include_archived && ret < self.config.recall_threshold {
                    return None;
                }
                Some(RecallHit {
                    id: f.id,
                    content: f.content.clone(),
                    score: rel * ret,
                    relevance: rel,
                    retention: ret,
                    stamp: f.stamp,
                    archived: f.archived,
                })
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(b.stamp.system_created.cmp(&a.stamp.system_created))
                .then(a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Archives every live fact whose retrievability at `now` is below the
    /// recall threshold. Archived facts stay in the log and projection.
    pub fn sweep(
        &mut self,
        context_id: Option<ContextId>,
        now: Timestamp,
    ) -> Result<Vec<MemoryId>> {
        let doomed: Vec<(MemoryId, f64)> = self
            .state
            .facts
            .values()
            .filter(|f| !f.archived && context_id.is_none_or(|c| f.context_id == c))
            .map(|f| (f.id, self.retrievability(f, now)))
            .filter(|(_, r)| *r < self.config.recall_threshold)
            .collect();
        for (id, r) in &doomed {
            self.emit(
                MemoryPayload::Archived {
                    id: *id,
                    retention: *r,
                },
                now,
            )?;
        }
        Ok(doomed.into_iter().map(|(id, _)| id).collect())
    }

    pub fn schedule_intention(
        &mut self,
        description: &str,
        trigger: Trigger,
        context_id: ContextId,
        now: Timestamp,
    ) -> Result<IntentionId> {
        self.require_context(context_id)?;
        if description.trim().is_empty() {
            return Err(Error::Validation("intention description is empty".into()));
        }
        match &trigger {
            Trigger::TimeBased { due_at } if *due_at <= now => {
                return Err(Error::Validation(format!(
                    "due_at {due_at} is not after now {now}"
                )));
            }
            Trigger::EventBased { tag } if tag.is_empty() => {
                return Err(Error::Validation("event tag is empty".into()));
            }
            _ => {}
        }
        let id = IntentionId(
            self.state
                .intentions
                .keys()
                .next_back()
                .map_or(1, |i| i.0 + 1),
        );
        self.emit(
            MemoryPayload::IntentionScheduled {
                intention: Intention {
                    id,
                    description: description.to_string(),
                    trigger,
                    status: IntentionStatus::Pending,
                    surfaced_at: None,
                    context_id,
                    scheduled_at: now,
                },
            },
            now,
        )?;
        Ok(id)
    }

    pub fn intention(&self, id: IntentionId) -> Result<&Intention> {
        self.state
            .intentions
            .get(&id)
            .ok_or_else(|| Error::not_found("intention", id))
    }

    pub fn intentions(&self) -> impl Iterator<Item = &Intention> {
        self.state.intentions.values()
    }

    fn pending_due(&self) -> impl Iterator<Item = (Timestamp, &Intention)> {
        self.state
            .intentions
            .values()
            .filter_map(|i| match i.trigger {
                Trigger::TimeBased { due_at } if i.status == IntentionStatus::Pending => {
                    Some((due_at, i))
                }
                _ => None,
            })
    }

    /// Pending time-based intentions with `due_at <= now`, by (due_at, id).
    pub fn list_due(&self, now: Timestamp) -> Vec<&Intention> {
        let mut due: Vec<(Timestamp, &Intention)> =
            self.pending_due().filter(|(t, _)| *t <= now).collect();
        due.sort_by_key(|(t, i)| (*t, i.id));
        due.into_iter().map(|(_, i)| i).collect()
    }

    pub fn next_due_time(&self) -> Option<Timestamp> {
        self.pending_due().map(|(t, _)| t).min()
    }

    pub fn mark_surfaced(&mut self, id: IntentionId, now: Timestamp) -> Result<()> {
        let i = self.intention(id)?;
        if i.status != IntentionStatus::Pending {
            return Err(Error::InvalidState(format!(
                "intention {id} is not pending"
            )));
        }
        self.emit(MemoryPayload::IntentionSurfaced { id }, now)?;
        Ok(())
    }

    pub fn complete_intention(&mut self, id: IntentionId, now: Timestamp) -> Result<()> {
        let i = self.intention(id)?;
        if !matches!(
            i.status,
            IntentionStatus::Pending | IntentionStatus::Surfaced
        ) {
            return Err(Error::InvalidState(format!(
                "intention {id} is already closed"
            )));
        }
        self.emit(MemoryPayload::IntentionCompleted { id }, now)?;
        Ok(())
    }

    pub fn expire_intention(&mut self, id: IntentionId, now: Timestamp) -> Result<()> {
        let i = self.intention(id)?;
        if i.status != IntentionStatus::Pending {
            return Err(Error::InvalidState(format!(
                "intention {id} is not pending"
            )));
        }
        self.emit(MemoryPayload::IntentionExpired { id }, now)?;
        Ok(())
    }

    /// Surfaces every pending event-based intention whose tag equals `tag`
    /// exactly. Returns them in id order.
    pub fn trigger_event(&mut self, tag: &str, now: Timestamp) -> Result<Vec<IntentionId>> {
        let matched: Vec<IntentionId> = self
            .state
            .intentions
            .values()
            .filter(|i| i.status == IntentionStatus::Pending)
            .filter(|i| matches!(&i.trigger, Trigger::EventBased { tag: t } if t == tag))
            .map(|i| i.id)
            .collect();
        for id in &matched {
            self.emit(MemoryPayload::IntentionSurfaced { id: *id }, now)?;
        }
        Ok(matched)
    }

    pub fn is_consolidated(&self, pattern_key: &str) -> bool {
        self.state.consolidated.contains_key(pattern_key)
    }

    pub fn record_consolidation(
        &mut self,
        pattern_key: &str,
        entry: EntryId,
        members: BTreeSet<MemoryId>,
        now: Timestamp,
    ) -> Result<()> {
        if let Some(m) = members.iter().find(|m| !self.state.facts.contains_key(m)) {
            return Err(Error::not_found("memory", m));
        }
        self.emit(
            MemoryPayload::Consolidated {
                record: ConsolidationRecord {
                    pattern_key: pattern_key.to_string(),
                    entry,
                    members: members.into_iter().collect(),
                    at: now,
                },
            },
            now,
        )?;
        Ok(())
    }
}
