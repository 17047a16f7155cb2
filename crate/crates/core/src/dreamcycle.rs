//! Offline consolidation: find recurring memory patterns, propose them as
//! wisdom with full provenance, sweep decayed facts and advance the wisdom
//! survival counters. Runs only when called.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::Stores;
use crate::error::{Error, Result};
use crate::hooks::HookSet;
use crate::ids::{ContextId, EntryId, MemoryId};
use crate::knowledge::{Provenance, SourceKind};
use crate::memory::{MemoryFact, MemoryStore};
use crate::retrieval::{self, cosine};
use crate::temporal::Timestamp;
use crate::wisdom::{Evidence, GateConfig, TierDecision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    pub min_occurrences: usize,
    pub min_sessions: usize,
    pub jaccard_threshold: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            min_occurrences: 3,
            min_sessions: 3,
            jaccard_threshold: 0.5,
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_occurrences == 0 || self.min_sessions == 0 {
            return Err(Error::Parameter("pattern minima must be at least 1".into()));
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::Parameter(format!(
                "jaccard_threshold must be in (0, 1], got {}",
                self.jaccard_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityBasis {
    LexicalOverlap,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCandidate {
    pub context_id: ContextId,
    pub representative_content: String,
    pub member_ids: BTreeSet<MemoryId>,
    pub distinct_sessions: BTreeSet<String>,
    pub similarity_basis: SimilarityBasis,
    /// Sorted token set of the representative content; the dedup key.
    pub pattern_key: String,
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    retrieval::tokenize(text).into_iter().collect()
}

/// |a ∩ b| / |a ∪ b|; two empty sets score 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn pattern_key(text: &str) -> String {
    token_set(text).into_iter().collect::<Vec<_>>().join(" ")
}

/// Single-linkage clusters over live facts, per context: two facts join
/// when their similarity reaches the threshold, and clusters are the
/// connected components. Clusters meeting both minima become candidates,
/// in order of their lowest member id.
pub fn detect_patterns(
    memory: &MemoryStore,
    config: &PatternConfig,
    hooks: &HookSet,
) -> Result<Vec<PatternCandidate>> {
    config.validate()?;
    let mut by_context: BTreeMap<ContextId, Vec<&MemoryFact>> = BTreeMap::new();
    for f in memory.facts().filter(|f| !f.archived) {
        by_context.entry(f.context_id).or_default().push(f);
    }
    let basis = if hooks.embedding_provider.is_some() {
        SimilarityBasis::Embedding
    } else {
        SimilarityBasis::LexicalOverlap
    };
    let mut out = Vec::new();
    for (ctx, facts) in by_context {
        let tokens: Vec<BTreeSet<String>> = facts.iter().map(|f| token_set(&f.content)).collect();
        let embeddings = match &hooks.embedding_provider {
            Some(e) => {
                let mut v = Vec::with_capacity(facts.len());
                for f in &facts {
                    v.push(e.embed(&f.content)?);
                }
                Some(v)
            }
            None => None,
        };
        let similar = |i: usize, j: usize| -> bool {
            let s = match &embeddings {
                Some(v) => cosine(&v[i], &v[j]),
                None => jaccard(&tokens[i], &tokens[j]),
            };
            s >= config.jaccard_threshold
        };
        let mut seen = vec![false; facts.len()];
        for start in 0..facts.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut cluster = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                #[allow(clippy::needless_range_loop)]
                for j in 0..facts.len() {
                    if !seen[j] && similar(i, j) {
                        seen[j] = true;
                        cluster.push(j);
                        queue.push_back(j);
                    }
                }
            }
            let sessions: BTreeSet<String> = cluster
                .iter()
                .filter_map(|&i| facts[i].session_id.clone())
                .collect();
            if cluster.len() < config.min_occurrences || sessions.len() < config.min_sessions {
                continue;
            }
            cluster.sort_unstable();
            let centre = *cluster
                .iter()
                .max_by(|&&a, &&b| {
                    let sa: f64 = cluster
                        .iter()
                        .map(|&j| jaccard(&tokens[a], &tokens[j]))
                        .sum();
                    let sb: f64 = cluster
                        .iter()
                        .map(|&j| jaccard(&tokens[b], &tokens[j]))
                        .sum();
                    // ties go to the earlier fact
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .expect("cluster is non-empty");
            let content = facts[centre].content.clone();
            out.push(PatternCandidate {
                context_id: ctx,
                pattern_key: pattern_key(&content),
                representative_content: content,
                member_ids: cluster.iter().map(|&i| facts[i].id).collect(),
                distinct_sessions: sessions,
                similarity_basis: basis,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewOutcome {
    pub entry: EntryId,
    pub decision: TierDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_number: u64,
    pub archived: usize,
    pub candidates: Vec<PatternCandidate>,
    /// Wisdom entries proposed from candidates in this cycle.
    pub promoted: Vec<EntryId>,
    pub wisdom_reviews: Vec<ReviewOutcome>,
}

fn already_consolidated(memory: &MemoryStore, c: &PatternCandidate) -> bool {
    if memory.is_consolidated(&c.pattern_key) {
        return true;
    }
    let covered: BTreeSet<MemoryId> = memory
        .state()
        .consolidated
        .values()
        .flat_map(|r| r.members.iter().copied())
        .collect();
    c.member_ids.is_subset(&covered)
}

/// One consolidation cycle. Order: sweep, detect, propose, complete the
/// cycle, review, then reinforce and record the promoted patterns.
pub fn run_cycle(
    stores: &mut Stores,
    hooks: &HookSet,
    patterns: &PatternConfig,
    gate: &GateConfig,
    now: Timestamp,
) -> Result<CycleReport> {
    gate.validate()?;
    let archived = stores.memory.sweep(None, now)?.len();
    let candidates = detect_patterns(&stores.memory, patterns, hooks)?;

    let mut fresh = Vec::new();
    for c in &candidates {
        if already_consolidated(&stores.memory, c) {
            continue;
        }
        let directive = match &hooks.summary_generator {
            Some(g) => {
                let items: Vec<String> = c
                    .member_ids
                    .iter()
                    .map(|m| stores.memory.fact(*m).map(|f| f.content.clone()))
                    .collect::<Result<_>>()?;
                let s = g.summarize(&items)?;
                if s.trim().is_empty() {
                    c.representative_content.clone()
                } else {
                    s
                }
            }
            None => c.representative_content.clone(),
        };
        fresh.push((c, directive));
    }

    let mut promoted = Vec::new();
    for (c, directive) in &fresh {
        let scope = stores
            .memory
            .contexts()
            .find(|x| x.id == c.context_id)
            .map(|x| x.name.clone());
        let members: Vec<MemoryId> = c.member_ids.iter().copied().collect();
        let mut provenance = Provenance::new(
            format!("consolidation:{}", c.pattern_key),
            SourceKind::Agent,
            now,
        );
        provenance.author = Some("dreamcycle".into());
        provenance.evidence_note = Some(
            members
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let mut sessions_seen = BTreeSet::new();
        let mut evidence_for = |m: MemoryId, memory: &MemoryStore| -> Result<Evidence> {
            let session = memory.fact(m)?.session_id.clone();
            let session = session.filter(|s| sessions_seen.insert(s.clone()));
            Ok(Evidence {
                episode: Some(m),
                session,
            })
        };
        let first = evidence_for(members[0], &stores.memory)?;
        let id = stores
            .wisdom
            .propose(directive, first, provenance, scope.as_deref(), now)?;
        for &m in &members[1..] {
            let ev = evidence_for(m, &stores.memory)?;
            stores.wisdom.corroborate(id, ev, now)?;
        }
        promoted.push(id);
    }

    let cycle_number = stores.wisdom.complete_cycle(now)?;

    let active: Vec<EntryId> = stores
        .wisdom
        .entries()
        .filter(|e| e.status == crate::wisdom::EntryStatus::Active)
        .map(|e| e.id)
        .collect();
    let mut wisdom_reviews = Vec::with_capacity(active.len());
    for id in active {
        let decision = stores.wisdom.review(id, gate, now)?;
        wisdom_reviews.push(ReviewOutcome {
            entry: id,
            decision,
        });
    }

    for ((c, _), id) in fresh.iter().zip(&promoted) {
        for m in &c.member_ids {
            if !stores.memory.fact(*m)?.archived {
                stores.memory.reinforce(*m, now)?;
            }
        }
        stores
            .memory
            .record_consolidation(&c.pattern_key, *id, c.member_ids.clone(), now)?;
    }

    Ok(CycleReport {
        cycle_number,
        archived,
        candidates,
        promoted,
        wisdom_reviews,
    })
}
