//! Wisdom layer: behavioral directives that change only through explicit,
//! evidence-gated revision. Entries never decay.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{EntryId, MemoryId};
use crate::knowledge::Provenance;
use crate::temporal::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Prediction,
    Core,
    Anchor,
}

impl Tier {
    fn next(self) -> Option<Tier> {
        match self {
            Tier::Prediction => Some(Tier::Core),
            Tier::Core => Some(Tier::Anchor),
            Tier::Anchor => None,
        }
    }

    fn prev(self) -> Tier {
        match self {
            Tier::Anchor => Tier::Core,
            _ => Tier::Prediction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Active,
    UnderReview,
    Retired,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceLedger {
    pub episode_refs: BTreeSet<MemoryId>,
    pub session_ids: BTreeSet<String>,
    pub contradiction_count: u32,
    /// Consolidation cycles completed without a contradiction.
    pub cycles_survived: u32,
    /// Contradictions recorded since the last completed cycle.
    pub fresh_contradictions: u32,
}

/// Promotion thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub core_min_sessions: u32,
    pub anchor_min_cycles: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            core_min_sessions: 3,
            anchor_min_cycles: 10,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.core_min_sessions == 0 || self.anchor_min_cycles == 0 {
            return Err(Error::Parameter(
                "gate thresholds must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The tier an entry may be promoted to right now, if any. Only active
/// entries with no recorded contradictions move, and never more than one
/// tier at a time.
pub fn promotion_target(
    tier: Tier,
    status: EntryStatus,
    ledger: &EvidenceLedger,
    gate: &GateConfig,
) -> Option<Tier> {
    if status != EntryStatus::Active || ledger.contradiction_count != 0 {
        return None;
    }
    let ready = match tier {
        Tier::Prediction => ledger.session_ids.len() as u64 >= gate.core_min_sessions as u64,
        Tier::Core => ledger.cycles_survived >= gate.anchor_min_cycles,
        Tier::Anchor => false,
    };
    if ready {
        tier.next()
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionChange {
    Proposed,
    Corroborated,
    Contradicted,
    Promoted,
    Demoted,
    Reinstated,
    Retired,
    Replaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSnapshot {
    pub episodes: u32,
    pub sessions: u32,
    pub contradictions: u32,
    pub cycles_survived: u32,
}

impl From<&EvidenceLedger> for EvidenceSnapshot {
    fn from(l: &EvidenceLedger) -> Self {
        EvidenceSnapshot {
            episodes: l.episode_refs.len() as u32,
            sessions: l.session_ids.len() as u32,
            contradictions: l.contradiction_count,
            cycles_survived: l.cycles_survived,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub at: Timestamp,
    pub change: RevisionChange,
    pub detail: String,
    pub evidence_snapshot: EvidenceSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WisdomEntry {
    pub id: EntryId,
    pub directive: String,
    pub tier: Tier,
    pub status: EntryStatus,
    pub evidence: EvidenceLedger,
    pub provenance: Provenance,
    /// Context name this directive applies to; `None` means everywhere.
    pub scope: Option<String>,
    pub created_at: Timestamp,
    /// Number of consolidation cycles completed before this entry existed.
    pub created_after_cycle: u64,
    pub replaced_by: Option<EntryId>,
    pub revision_log: Vec<RevisionRecord>,
}

/// One piece of supporting evidence: an episode, the session it came from,
/// or both.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    pub episode: Option<MemoryId>,
    pub session: Option<String>,
}

impl Evidence {
    pub fn new(episode: Option<MemoryId>, session: Option<&str>) -> Self {
        Evidence {
            episode,
            session: session.map(str::to_string),
        }
    }

    pub fn session(session: &str) -> Self {
        Evidence::new(None, Some(session))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Back to active at the same tier; the contradiction stays on record.
    Dismiss,
    /// Back to active one tier lower.
    Demote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum WisdomEvent {
    Proposed {
        entry: WisdomEntry,
    },
    Corroborated {
        id: EntryId,
        episode: Option<MemoryId>,
        session: Option<String>,
        at: Timestamp,
    },
    Contradicted {
        id: EntryId,
        episode: Option<MemoryId>,
        detail: String,
        at: Timestamp,
    },
    Promoted {
        id: EntryId,
        from: Tier,
        to: Tier,
        at: Timestamp,
    },
    ReviewResolved {
        id: EntryId,
        resolution: Resolution,
        note: String,
        at: Timestamp,
    },
    Retired {
        id: EntryId,
        replacement: Option<EntryId>,
        reason: String,
        at: Timestamp,
    },
    CycleCompleted {
        cycle: u64,
        survived: Vec<EntryId>,
        at: Timestamp,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WisdomState {
    pub entries: std::collections::BTreeMap<EntryId, WisdomEntry>,
    pub cycles_completed: u64,
}

impl WisdomState {
    fn entry_mut(&mut self, id: EntryId) -> Result<&mut WisdomEntry> {
        self.entries
            .get_mut(&id)
            .ok_or_else(|| Error::Corrupt(format!("event for unknown wisdom entry {id}")))
    }

    pub fn apply(&mut self, event: &WisdomEvent) -> Result<()> {
        fn record(e: &mut WisdomEntry, at: Timestamp, change: RevisionChange, detail: String) {
            let snap = EvidenceSnapshot::from(&e.evidence);
            e.revision_log.push(RevisionRecord {
                at,
                change,
                detail,
                evidence_snapshot: snap,
            });
        }
        match event {
            WisdomEvent::Proposed { entry } => {
                self.entries.insert(entry.id, entry.clone());
            }
            WisdomEvent::Corroborated {
                id,
                episode,
                session,
                at,
            } => {
                let e = self.entry_mut(*id)?;
                e.evidence.episode_refs.extend(episode.iter().copied());
                e.evidence.session_ids.extend(session.iter().cloned());
                let detail = match (episode, session) {
                    (Some(m), Some(s)) => format!("{m} in session {s}"),
                    (Some(m), None) => m.to_string(),
                    (None, Some(s)) => format!("session {s}"),
                    (None, None) => String::new(),
                };
                record(e, *at, RevisionChange::Corroborated, detail);
            }
            WisdomEvent::Contradicted {
                id,
                episode,
                detail,
                at,
            } => {
                let e = self.entry_mut(*id)?;
                e.evidence.contradiction_count += 1;
                e.evidence.fresh_contradictions += 1;
                e.evidence.cycles_survived = 0;
                e.evidence.episode_refs.extend(episode.iter().copied());
                e.status = EntryStatus::UnderReview;
                record(e, *at, RevisionChange::Contradicted, detail.clone());
            }
            WisdomEvent::Promoted { id, from, to, at } => {
                let e = self.entry_mut(*id)?;
                e.tier = *to;
                record(
                    e,
                    *at,
                    RevisionChange::Promoted,
                    format!("{from:?} -> {to:?}").to_lowercase(),
                );
            }
            WisdomEvent::ReviewResolved {
                id,
                resolution,
                note,
                at,
            } => {
                let e = self.entry_mut(*id)?;
                e.status = EntryStatus::Active;
                match resolution {
                    Resolution::Dismiss => record(e, *at, RevisionChange::Reinstated, note.clone()),
                    Resolution::Demote => {
                        e.tier = e.tier.prev();
                        record(e, *at, RevisionChange::Demoted, note.clone());
                    }
                }
            }
            WisdomEvent::Retired {
                id,
                replacement,
                reason,
                at,
            } => {
                let e = self.entry_mut(*id)?;
                e.status = EntryStatus::Retired;
                e.replaced_by = *replacement;
                match replacement {
                    Some(r) => record(
                        e,
                        *at,
                        RevisionChange::Replaced,
                        format!("replaced by {r}: {reason}"),
                    ),
                    None => record(e, *at, RevisionChange::Retired, reason.clone()),
                }
            }
            WisdomEvent::CycleCompleted {
                cycle, survived, ..
            } => {
                self.cycles_completed = *cycle;
                for id in survived {
                    self.entry_mut(*id)?.evidence.cycles_survived += 1;
                }
                for e in self.entries.values_mut() {
                    e.evidence.fresh_contradictions = 0;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum TierDecision {
    Promoted { from: Tier, to: Tier },
    Unchanged { tier: Tier },
}

#[derive(Debug, Clone, Default)]
pub struct WisdomStore {
    state: WisdomState,
    pending: Vec<WisdomEvent>,
}

impl WisdomStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a WisdomEvent>) -> Result<Self> {
        let mut state = WisdomState::default();
        for ev in events {
            state.apply(ev)?;
        }
        Ok(WisdomStore {
            state,
            pending: Vec::new(),
        })
    }

    pub fn from_state(state: WisdomState) -> Self {
        WisdomStore {
            state,
            pending: Vec::new(),
        }
    }

    pub fn state(&self) -> &WisdomState {
        &self.state
    }

    pub fn take_pending(&mut self) -> Vec<WisdomEvent> {
        std::mem::take(&mut self.pending)
    }

    pub(crate) fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub(crate) fn apply_external(&mut self, event: &WisdomEvent) -> Result<()> {
        self.state.apply(event)
    }

    fn emit(&mut self, event: WisdomEvent) -> Result<()> {
        self.state.apply(&event)?;
        self.pending.push(event);
        Ok(())
    }

    pub fn entry(&self, id: EntryId) -> Result<&WisdomEntry> {
        self.state
            .entries
            .get(&id)
            .ok_or_else(|| Error::not_found("wisdom entry", id))
    }

    pub fn entries(&self) -> impl Iterator<Item = &WisdomEntry> {
        self.state.entries.values()
    }

    pub fn cycles_completed(&self) -> u64 {
        self.state.cycles_completed
    }

    fn open_entry(&self, id: EntryId) -> Result<&WisdomEntry> {
        let e = self.entry(id)?;
        if e.status == EntryStatus::Retired {
            return Err(Error::InvalidState(format!("wisdom entry {id} is retired")));
        }
        Ok(e)
    }

    /// New prediction-tier entry seeded with one piece of evidence.
    /// Identical directives are not merged.
    pub fn propose(
        &mut self,
        directive: &str,
        evidence: Evidence,
        provenance: Provenance,
        scope: Option<&str>,
        now: Timestamp,
    ) -> Result<EntryId> {
        if directive.trim().is_empty() {
            return Err(Error::Validation("directive is empty".into()));
        }
        provenance.validate()?;
        let id = EntryId(self.state.entries.keys().next_back().map_or(1, |e| e.0 + 1));
        let ledger = EvidenceLedger {
            episode_refs: evidence.episode.into_iter().collect(),
            session_ids: evidence.session.into_iter().collect(),
            ..EvidenceLedger::default()
        };
        let entry = WisdomEntry {
            id,
            directive: directive.to_string(),
            tier: Tier::Prediction,
            status: EntryStatus::Active,
            revision_log: vec![RevisionRecord {
                at: now,
                change: RevisionChange::Proposed,
                detail: String::new(),
                evidence_snapshot: EvidenceSnapshot::from(&ledger),
            }],
            evidence: ledger,
            provenance,
            scope: scope.map(str::to_string),
            created_at: now,
            created_after_cycle: self.state.cycles_completed,
            replaced_by: None,
        };
        self.emit(WisdomEvent::Proposed { entry })?;
        Ok(id)
    }

    pub fn corroborate(&mut self, id: EntryId, evidence: Evidence, now: Timestamp) -> Result<()> {
        self.open_entry(id)?;
        self.emit(WisdomEvent::Corroborated {
            id,
            episode: evidence.episode,
            session: evidence.session,
            at: now,
        })
    }

    /// Records a contradiction: the entry goes under review and its survival
    /// counter restarts. Tier is left alone until the review is resolved.
    pub fn contradict(
        &mut self,
        id: EntryId,
        episode: Option<MemoryId>,
        detail: &str,
        now: Timestamp,
    ) -> Result<()> {
        self.open_entry(id)?;
        self.emit(WisdomEvent::Contradicted {
            id,
            episode,
            detail: detail.to_string(),
            at: now,
        })
    }

    /// Applies the promotion gate once. Promotions are written to the
    /// entry's revision log; an unchanged decision leaves no record.
    pub fn review(
        &mut self,
        id: EntryId,
        gate: &GateConfig,
        now: Timestamp,
    ) -> Result<TierDecision> {
        gate.validate()?;
        let e = self.entry(id)?;
        match promotion_target(e.tier, e.status, &e.evidence, gate) {
            Some(to) => {
                let from = e.tier;
                self.emit(WisdomEvent::Promoted {
                    id,
                    from,
                    to,
                    at: now,
                })?;
                Ok(TierDecision::Promoted { from, to })
            }
            None => Ok(TierDecision::Unchanged { tier: e.tier }),
        }
    }

    pub fn resolve_review(
        &mut self,
        id: EntryId,
        resolution: Resolution,
        note: &str,
        now: Timestamp,
    ) -> Result<()> {
        let e = self.entry(id)?;
        if e.status != EntryStatus::UnderReview {
            return Err(Error::InvalidState(format!(
                "wisdom entry {id} is not under review"
            )));
        }
        self.emit(WisdomEvent::ReviewResolved {
            id,
            resolution,
            note: note.to_string(),
            at: now,
        })
    }

    pub fn retire(
        &mut self,
        id: EntryId,
        replacement: Option<EntryId>,
        reason: &str,
        now: Timestamp,
    ) -> Result<()> {
        if replacement == Some(id) {
            return Err(Error::Validation(format!("{id} cannot replace itself")));
        }
        self.open_entry(id)?;
        if let Some(r) = replacement {
            self.open_entry(r)?;
        }
        self.emit(WisdomEvent::Retired {
            id,
            replacement,
            reason: reason.to_string(),
            at: now,
        })
    }

    /// Marks one consolidation cycle complete. Every active entry without a
    /// contradiction since the previous cycle gains one survived cycle.
    /// Returns the new cycle number.
    pub fn complete_cycle(&mut self, now: Timestamp) -> Result<u64> {
        let survived: Vec<EntryId> = self
            .state
            .entries
            .values()
            .filter(|e| e.status == EntryStatus::Active && e.evidence.fresh_contradictions == 0)
            .map(|e| e.id)
            .collect();
        let cycle = self.state.cycles_completed + 1;
        self.emit(WisdomEvent::CycleCompleted {
            cycle,
            survived,
            at: now,
        })?;
        Ok(cycle)
    }

    /// Active entries for preloading, anchors first, then by creation.
    /// With a scope, only unscoped entries and entries for that scope.
    pub fn active_directives(&self, scope: Option<&str>) -> Vec<&WisdomEntry> {
        let mut out: Vec<&WisdomEntry> = self
            .state
            .entries
            .values()
            .filter(|e| e.status == EntryStatus::Active)
            .filter(|e| match (scope, &e.scope) {
                (Some(want), Some(have)) => want == have,
                _ => true,
            })
            .collect();
        out.sort_by(|a, b| {
            b.tier
                .cmp(&a.tier)
                .then(a.created_at.cmp(&b.created_at))
                .then(a.id.cmp(&b.id))
        });
        out
    }

    /// Entries awaiting a review decision.
    pub fn review_queue(&self) -> Vec<&WisdomEntry> {
        self.state
            .entries
            .values()
            .filter(|e| e.status == EntryStatus::UnderReview)
            .collect()
    }
}

/// Plain-text preload block, one directive per line.
pub fn render_preload(entries: &[&WisdomEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let tier = match e.tier {
            Tier::Anchor => "anchor",
            Tier::Core => "core",
            Tier::Prediction => "prediction",
        };
        out.push_str(&format!("[{tier}] {}\n", e.directive));
    }
    out
}
