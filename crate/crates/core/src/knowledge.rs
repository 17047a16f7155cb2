//! Knowledge layer: append-only claims with provenance, linked by an acyclic
//! supersession graph. Nothing here decays; a superseded claim stays fully
//! readable and only drops out of the "current" view.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hooks::HookSet;
use crate::ids::{ClaimId, ConclusionId, EntityId, RelationshipId};
use crate::retrieval::{self, FusionConfig, RankedList};
use crate::temporal::{BitemporalStamp, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Document,
    Conversation,
    Agent,
    Human,
}

impl std::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" => Ok(SourceKind::Document),
            "conversation" => Ok(SourceKind::Conversation),
            "agent" => Ok(SourceKind::Agent),
            "human" => Ok(SourceKind::Human),
            other => Err(format!("unknown source kind `{other}`")),
        }
    }
}

/// Who asserted something, when, and on what evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub source_kind: SourceKind,
    pub author: Option<String>,
    pub asserted_at: Timestamp,
    pub evidence_note: Option<String>,
}

impl Provenance {
    pub fn new(
        source_id: impl Into<String>,
        source_kind: SourceKind,
        asserted_at: Timestamp,
    ) -> Self {
        Provenance {
            source_id: source_id.into(),
            source_kind,
            author: None,
            asserted_at,
            evidence_note: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_id.trim().is_empty() {
            return Err(Error::Validation("provenance source_id is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Current,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub statement: String,
    pub entity_refs: BTreeSet<EntityId>,
    pub provenance: Provenance,
    pub stamp: BitemporalStamp,
    pub confidence: Option<f64>,
    pub status: Status,
}

/// `old_id` has been improved upon by `new_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupersessionLink<I> {
    pub old_id: I,
    pub new_id: I,
    pub reason: String,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub kind: String,
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub id: RelationshipId,
    pub src: EntityId,
    pub dst: EntityId,
    pub label: String,
    pub provenance: Provenance,
    pub stamp: BitemporalStamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conclusion {
    pub id: ConclusionId,
    pub statement: String,
    pub supporting_claims: BTreeSet<ClaimId>,
    pub provenance: Provenance,
    pub recorded_at: Timestamp,
    pub status: Status,
}

/// Input for [`KnowledgeStore::ingest_claim`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimDraft {
    pub statement: String,
    pub provenance: Provenance,
    pub entity_refs: BTreeSet<EntityId>,
    /// Defaults to `provenance.asserted_at`.
    pub valid_from: Option<Timestamp>,
    pub confidence: Option<f64>,
}

impl ClaimDraft {
    pub fn new(statement: impl Into<String>, provenance: Provenance) -> Self {
        ClaimDraft {
            statement: statement.into(),
            provenance,
            entity_refs: BTreeSet::new(),
            valid_from: None,
            confidence: None,
        }
    }

    pub fn with_entities(mut self, refs: impl IntoIterator<Item = EntityId>) -> Self {
        self.entity_refs.extend(refs);
        self
    }

    pub fn valid_from(mut self, t: Timestamp) -> Self {
        self.valid_from = Some(t);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum KnowledgeEvent {
    ClaimIngested {
        claim: Claim,
    },
    ClaimSuperseded {
        link: SupersessionLink<ClaimId>,
    },
    EntityAdded {
        entity: Entity,
    },
    RelationshipAdded {
        relationship: Relationship,
    },
    ConclusionRecorded {
        conclusion: Conclusion,
    },
    ConclusionSuperseded {
        link: SupersessionLink<ConclusionId>,
    },
}

/// The projection of the knowledge event stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeState {
    pub claims: BTreeMap<ClaimId, Claim>,
    pub links: Vec<SupersessionLink<ClaimId>>,
    pub entities: BTreeMap<EntityId, Entity>,
    pub relationships: BTreeMap<RelationshipId, Relationship>,
    pub conclusions: BTreeMap<ConclusionId, Conclusion>,
    pub conclusion_links: Vec<SupersessionLink<ConclusionId>>,
}

impl KnowledgeState {
    pub fn apply(&mut self, event: &KnowledgeEvent) -> Result<()> {
        match event {
            KnowledgeEvent::ClaimIngested { claim } => {
                if self.claims.contains_key(&claim.id) {
                    return Err(Error::Corrupt(format!("claim {} ingested twice", claim.id)));
                }
                self.claims.insert(claim.id, claim.clone());
            }
            KnowledgeEvent::ClaimSuperseded { link } => {
                if !self.claims.contains_key(&link.new_id) {
                    return Err(Error::Corrupt(format!(
                        "link to unknown claim {}",
                        link.new_id
                    )));
                }
                let old = self.claims.get_mut(&link.old_id).ok_or_else(|| {
                    Error::Corrupt(format!("link from unknown claim {}", link.old_id))
                })?;
                old.status = Status::Superseded;
                self.links.push(link.clone());
            }
            KnowledgeEvent::EntityAdded { entity } => {
                self.entities.insert(entity.id, entity.clone());
            }
            KnowledgeEvent::RelationshipAdded { relationship } => {
                self.relationships
                    .insert(relationship.id, relationship.clone());
            }
            KnowledgeEvent::ConclusionRecorded { conclusion } => {
                self.conclusions.insert(conclusion.id, conclusion.clone());
            }
            KnowledgeEvent::ConclusionSuperseded { link } => {
                let old = self.conclusions.get_mut(&link.old_id).ok_or_else(|| {
                    Error::Corrupt(format!("link from unknown conclusion {}", link.old_id))
                })?;
                old.status = Status::Superseded;
                self.conclusion_links.push(link.clone());
            }
        }
        Ok(())
    }

    fn next_claim_id(&self) -> ClaimId {
        ClaimId(self.claims.keys().next_back().map_or(1, |id| id.0 + 1))
    }
}

/// Would adding `old -> new` close a cycle? True iff `new` already reaches
/// `old` along existing links (or they are equal).
fn closes_cycle<I: Ord + Copy>(links: &[SupersessionLink<I>], old: I, new: I) -> bool {
    if old == new {
        return true;
    }
    let mut succ: BTreeMap<I, Vec<I>> = BTreeMap::new();
    for l in links {
        succ.entry(l.old_id).or_default().push(l.new_id);
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![new];
    while let Some(n) = stack.pop() {
        if n == old {
            return true;
        }
        if seen.insert(n) {
            if let Some(next) = succ.get(&n) {
                stack.extend(next.iter().copied());
            }
        }
    }
    false
}

/// Optional restriction for [`KnowledgeStore::current_claims`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClaimFilter {
    pub entity: Option<EntityId>,
    /// Case-insensitive substring of the statement.
    pub text: Option<String>,
}

impl ClaimFilter {
    fn matches(&self, claim: &Claim) -> bool {
        if let Some(e) = self.entity {
            if !claim.entity_refs.contains(&e) {
                return false;
            }
        }
        if let Some(t) = &self.text {
            if !claim.statement.to_lowercase().contains(&t.to_lowercase()) {
                return false;
            }
        }
        true
    }
}

/// One hop in a provenance walk. `link` is the supersession edge that
/// connects this claim to the one before it in the walk (None for the start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHop {
    pub claim: Claim,
    pub link: Option<SupersessionLink<ClaimId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum KnowledgeItem {
    Claim(ClaimId),
    Conclusion(ConclusionId),
}

impl fmt::Display for KnowledgeItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnowledgeItem::Claim(id) => id.fmt(f),
            KnowledgeItem::Conclusion(id) => id.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchOptions {
    pub include_superseded: bool,
    pub include_conclusions: bool,
    pub fusion: FusionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeHit {
    pub item: KnowledgeItem,
    pub text: String,
    pub score: f64,
    pub superseded: bool,
    /// Ranked lists that contributed to this hit ("lexical", "vector").
    pub sources: Vec<String>,
    pub reranked: bool,
    /// Conclusion cites at least one superseded claim.
    pub stale_support: bool,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeStore {
    state: KnowledgeState,
    pending: Vec<KnowledgeEvent>,
}

impl KnowledgeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay<'a>(events: impl IntoIterator<Item = &'a KnowledgeEvent>) -> Result<Self> {
        let mut state = KnowledgeState::default();
        for ev in events {
            state.apply(ev)?;
        }
        Ok(KnowledgeStore {
            state,
            pending: Vec::new(),
        })
    }

    pub fn from_state(state: KnowledgeState) -> Self {
        KnowledgeStore {
            state,
            pending: Vec::new(),
        }
    }

    pub fn state(&self) -> &KnowledgeState {
        &self.state
    }

    /// Events emitted since the last call.
    pub fn take_pending(&mut self) -> Vec<KnowledgeEvent> {
        std::mem::take(&mut self.pending)
    }

    pub(crate) fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub(crate) fn apply_external(&mut self, event: &KnowledgeEvent) -> Result<()> {
        self.state.apply(event)
    }

    fn emit(&mut self, event: KnowledgeEvent) -> Result<()> {
        self.state.apply(&event)?;
        self.pending.push(event);
        Ok(())
    }

    pub fn add_entity(
        &mut self,
        name: &str,
        kind: &str,
        aliases: impl IntoIterator<Item = String>,
    ) -> Result<EntityId> {
        if name.trim().is_empty() {
            return Err(Error::Validation("entity name is empty".into()));
        }
        let id = EntityId(
            self.state
                .entities
                .keys()
                .next_back()
                .map_or(1, |id| id.0 + 1),
        );
        self.emit(KnowledgeEvent::EntityAdded {
            entity: Entity {
                id,
                name: name.to_string(),
                kind: kind.to_string(),
                aliases: aliases.into_iter().collect(),
            },
        })?;
        Ok(id)
    }

    pub fn add_relationship(
        &mut self,
        src: EntityId,
        dst: EntityId,
        label: &str,
        provenance: Provenance,
        now: Timestamp,
    ) -> Result<RelationshipId> {
        provenance.validate()?;
        for e in [src, dst] {
            if !self.state.entities.contains_key(&e) {
                return Err(Error::not_found("entity", e));
            }
        }
        let id = RelationshipId(
            self.state
                .relationships
                .keys()
                .next_back()
                .map_or(1, |id| id.0 + 1),
        );
        let stamp = BitemporalStamp::open(now, provenance.asserted_at);
        self.emit(KnowledgeEvent::RelationshipAdded {
            relationship: Relationship {
                id,
                src,
                dst,
                label: label.to_string(),
                provenance,
                stamp,
            },
        })?;
        Ok(id)
    }

    /// Stores a new current claim. Identical statements are not deduplicated.
    pub fn ingest_claim(&mut self, draft: ClaimDraft, now: Timestamp) -> Result<ClaimId> {
        if draft.statement.trim().is_empty() {
            return Err(Error::Validation("claim statement is empty".into()));
        }
        draft.provenance.validate()?;
        if let Some(c) = draft.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Validation(format!("confidence {c} outside [0, 1]")));
            }
        }
        if let Some(missing) = draft
            .entity_refs
            .iter()
            .find(|e| !self.state.entities.contains_key(e))
        {
            return Err(Error::not_found("entity", missing));
        }
        let id = self.state.next_claim_id();
        let valid_from = draft.valid_from.unwrap_or(draft.provenance.asserted_at);
        let claim = Claim {
            id,
            statement: draft.statement,
            entity_refs: draft.entity_refs,
            provenance: draft.provenance,
            stamp: BitemporalStamp::open(now, valid_from),
            confidence: draft.confidence,
            status: Status::Current,
        };
        self.emit(KnowledgeEvent::ClaimIngested { claim })?;
        Ok(id)
    }

    /// Marks `old_id` as improved upon by `new_id`. Both stay readable; the
    /// old claim's record window is not closed.
    pub fn supersede(
        &mut self,
        old_id: ClaimId,
        new_id: ClaimId,
        reason: &str,
        now: Timestamp,
    ) -> Result<SupersessionLink<ClaimId>> {
        if old_id == new_id {
            return Err(Error::Cycle(format!("{old_id} cannot supersede itself")));
        }
        for id in [old_id, new_id] {
            if !self.state.claims.contains_key(&id) {
                return Err(Error::not_found("claim", id));
            }
        }
        if self
            .state
            .links
            .iter()
            .any(|l| l.old_id == old_id && l.new_id == new_id)
        {
            return Err(Error::Validation(format!(
                "{old_id} is already superseded by {new_id}"
            )));
        }
        if closes_cycle(&self.state.links, old_id, new_id) {
            return Err(Error::Cycle(format!(
                "{new_id} already leads to {old_id}; linking {old_id} -> {new_id} would close a cycle"
            )));
        }
        let link = SupersessionLink {
            old_id,
            new_id,
            reason: reason.to_string(),
            recorded_at: now,
        };
        self.emit(KnowledgeEvent::ClaimSuperseded { link: link.clone() })?;
        Ok(link)
    }

    pub fn get_claim(&self, id: ClaimId) -> Result<&Claim> {
        self.state
            .claims
            .get(&id)
            .ok_or_else(|| Error::not_found("claim", id))
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.state.claims.values()
    }

    pub fn links(&self) -> &[SupersessionLink<ClaimId>] {
        &self.state.links
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.state.entities.get(&id)
    }

    pub fn find_entity(&self, name: &str) -> Option<&Entity> {
        let lower = name.to_lowercase();
        self.state.entities.values().find(|e| {
            e.name.to_lowercase() == lower || e.aliases.iter().any(|a| a.to_lowercase() == lower)
        })
    }

    pub fn relationships_of(&self, entity: EntityId) -> Vec<&Relationship> {
        self.state
            .relationships
            .values()
            .filter(|r| r.src == entity || r.dst == entity)
            .collect()
    }

    /// Current claims matching `filter`, ordered by (system_created, id).
    pub fn current_claims(&self, filter: &ClaimFilter) -> Vec<&Claim> {
        let mut out: Vec<&Claim> = self
            .state
            .claims
            .values()
            .filter(|c| c.status == Status::Current && filter.matches(c))
            .collect();
        out.sort_by_key(|c| (c.stamp.system_created, c.id));
        out
    }

    /// The claim followed by its transitive predecessors, newest first.
    /// Siblings are visited by (recorded_at, id) of the connecting link.
    pub fn provenance_chain(&self, id: ClaimId) -> Result<Vec<ChainHop>> {
        let start = self.get_claim(id)?.clone();
        let mut preds: BTreeMap<ClaimId, Vec<&SupersessionLink<ClaimId>>> = BTreeMap::new();
        for l in &self.state.links {
            preds.entry(l.new_id).or_default().push(l);
        }
        for v in preds.values_mut() {
            v.sort_by_key(|l| (l.recorded_at, l.old_id));
        }
        let mut out = vec![ChainHop {
            claim: start,
            link: None,
        }];
        let mut seen = BTreeSet::from([id]);
        let mut queue = VecDeque::from([id]);
        while let Some(cur) = queue.pop_front() {
            for link in preds.get(&cur).into_iter().flatten() {
                if seen.insert(link.old_id) {
                    out.push(ChainHop {
                        claim: self.state.claims[&link.old_id].clone(),
                        link: Some((*link).clone()),
                    });
                    queue.push_back(link.old_id);
                }
            }
        }
        Ok(out)
    }

    pub fn record_conclusion(
        &mut self,
        statement: &str,
        supporting_claims: BTreeSet<ClaimId>,
        provenance: Provenance,
        now: Timestamp,
    ) -> Result<ConclusionId> {
        if statement.trim().is_empty() {
            return Err(Error::Validation("conclusion statement is empty".into()));
        }
        if supporting_claims.is_empty() {
            return Err(Error::Validation(
                "conclusion needs at least one supporting claim".into(),
            ));
        }
        provenance.validate()?;
        if let Some(missing) = supporting_claims
            .iter()
            .find(|c| !self.state.claims.contains_key(c))
        {
            return Err(Error::not_found("claim", missing));
        }
        let id = ConclusionId(
            self.state
                .conclusions
                .keys()
                .next_back()
                .map_or(1, |id| id.0 + 1),
        );
        self.emit(KnowledgeEvent::ConclusionRecorded {
            conclusion: Conclusion {
                id,
                statement: statement.to_string(),
                supporting_claims,
                provenance,
                recorded_at: now,
                status: Status::Current,
            },
        })?;
        Ok(id)
    }

    pub fn supersede_conclusion(
        &mut self,
        old_id: ConclusionId,
        new_id: ConclusionId,
        reason: &str,
        now: Timestamp,
    ) -> Result<SupersessionLink<ConclusionId>> {
        if old_id == new_id {
            return Err(Error::Cycle(format!("{old_id} cannot supersede itself")));
        }
        for id in [old_id, new_id] {
            if !self.state.conclusions.contains_key(&id) {
                return Err(Error::not_found("conclusion", id));
            }
        }
        if closes_cycle(&self.state.conclusion_links, old_id, new_id) {
            return Err(Error::Cycle(format!(
                "linking {old_id} -> {new_id} would close a cycle"
            )));
        }
        let link = SupersessionLink {
            old_id,
            new_id,
            reason: reason.to_string(),
            recorded_at: now,
        };
        self.emit(KnowledgeEvent::ConclusionSuperseded { link: link.clone() })?;
        Ok(link)
    }

    pub fn get_conclusion(&self, id: ConclusionId) -> Result<&Conclusion> {
        self.state
            .conclusions
            .get(&id)
            .ok_or_else(|| Error::not_found("conclusion", id))
    }

    pub fn current_conclusions(&self) -> Vec<&Conclusion> {
        let mut out: Vec<&Conclusion> = self
            .state
            .conclusions
            .values()
            .filter(|c| c.status == Status::Current)
            .collect();
        out.sort_by_key(|c| (c.recorded_at, c.id));
        out
    }

    /// Supporting claims of a conclusion that have since been superseded.
    /// Supersession never cascades into conclusion status; callers see the
    /// staleness here and in search explanations.
    pub fn stale_support(&self, id: ConclusionId) -> Result<Vec<ClaimId>> {
        let c = self.get_conclusion(id)?;
        Ok(c.supporting_claims
            .iter()
            .copied()
            .filter(|cid| self.state.claims[cid].status == Status::Superseded)
            .collect())
    }

    fn item_text(&self, item: KnowledgeItem) -> String {
        match item {
            KnowledgeItem::Claim(id) => self.state.claims[&id].statement.clone(),
            KnowledgeItem::Conclusion(id) => self.state.conclusions[&id].statement.clone(),
        }
    }

    /// Hybrid search: BM25, plus cosine when an embedding provider is
    /// present, fused with RRF and optionally reranked. Superseded items are
    /// excluded unless `include_superseded`. Time plays no part in scoring.
    pub fn search_knowledge(
        &self,
        query: &str,
        k: usize,
        options: &SearchOptions,
        hooks: &HookSet,
    ) -> Result<Vec<KnowledgeHit>> {
        if k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        let mut corpus: Vec<(KnowledgeItem, &str)> = self
            .state
            .claims
            .values()
            .filter(|c| options.include_superseded || c.status == Status::Current)
            .map(|c| (KnowledgeItem::Claim(c.id), c.statement.as_str()))
            .collect();
        if options.include_conclusions {
            corpus.extend(
                self.state
                    .conclusions
                    .values()
                    .filter(|c| options.include_superseded || c.status == Status::Current)
                    .map(|c| (KnowledgeItem::Conclusion(c.id), c.statement.as_str())),
            );
        }
        let pool = k.max(50);
        let mut lists = vec![retrieval::lexical_rank(&corpus, query, pool)];
        if let Some(embedder) = &hooks.embedding_provider {
            let q = embedder.embed(query)?;
            let mut embeddings = Vec::with_capacity(corpus.len());
            for (item, text) in &corpus {
                embeddings.push((*item, embedder.embed(text)?));
            }
            lists.push(retrieval::vector_rank(&embeddings, &q, pool)?);
        }
        let fused = retrieval::rrf_fuse(&lists, options.fusion)?;
        let reranked = hooks.reranker.is_some();
        let ordered: RankedList<KnowledgeItem> = retrieval::rerank(
            query,
            &fused.list,
            |item| self.item_text(*item),
            hooks.reranker.as_deref(),
        )?;
        let mut hits = Vec::new();
        for scored in ordered.items.into_iter().take(k) {
            let (superseded, stale) = match scored.id {
                KnowledgeItem::Claim(id) => {
                    (self.state.claims[&id].status == Status::Superseded, false)
                }
                KnowledgeItem::Conclusion(id) => (
                    self.state.conclusions[&id].status == Status::Superseded,
                    !self.stale_support(id)?.is_empty(),
                ),
            };
            hits.push(KnowledgeHit {
                item: scored.id,
                text: self.item_text(scored.id),
                score: scored.score,
                superseded,
                sources: fused.sources.get(&scored.id).cloned().unwrap_or_default(),
                reranked,
                stale_support: stale,
            });
        }
        Ok(hits)
    }
}
