//! Independent reference implementations used as test oracles, plus a
//! random operation driver for replay tests. Nothing here calls the code
//! under test to compute an expected value.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use strata_core::bench::Lcg;
use strata_core::config::EngineConfig;
use strata_core::engine::Engine;
use strata_core::ids::{ClaimId, ContextId, EntryId, IntentionId, MemoryId};
use strata_core::knowledge::{ClaimDraft, Provenance, SourceKind};
use strata_core::memory::{ObserveOptions, Trigger};
use strata_core::temporal::{ManualClock, Span, Timestamp, MILLIS_PER_DAY};
use strata_core::wisdom::{Evidence, Resolution};

pub const DAY: u64 = MILLIS_PER_DAY;

/// Four independent clauses of point-in-time visibility over half-open
/// windows.
pub fn visible_oracle(
    created: u64,
    expired: Option<u64>,
    valid_from: u64,
    valid_until: Option<u64>,
    system_time: u64,
    valid_time: u64,
) -> bool {
    let c1 = created <= system_time;
    let c2 = match expired {
        None => true,
        Some(e) => system_time < e,
    };
    let c3 = valid_from <= valid_time;
    let c4 = match valid_until {
        None => true,
        Some(u) => valid_time < u,
    };
    c1 && c2 && c3 && c4
}

/// Brute-force supersession model: a claim is current iff no accepted link
/// names it as the old side; a link is accepted iff it is not a duplicate
/// and the transitive closure stays irreflexive.
#[derive(Debug, Default, Clone)]
pub struct SupersessionOracle {
    pub claims: BTreeSet<u64>,
    pub links: BTreeSet<(u64, u64)>,
}

impl SupersessionOracle {
    pub fn closure(&self) -> BTreeSet<(u64, u64)> {
        let nodes: Vec<u64> = self.claims.iter().copied().collect();
        let mut reach: BTreeSet<(u64, u64)> = self.links.clone();
        // Floyd-Warshall style closure
        for &k in &nodes {
            for &i in &nodes {
                if reach.contains(&(i, k)) {
                    for &j in &nodes {
                        if reach.contains(&(k, j)) {
                            reach.insert((i, j));
                        }
                    }
                }
            }
        }
        reach
    }

    pub fn would_accept(&self, old: u64, new: u64) -> bool {
        if old == new || self.links.contains(&(old, new)) {
            return false;
        }
        if !self.claims.contains(&old) || !self.claims.contains(&new) {
            return false;
        }
        let mut trial = self.clone();
        trial.links.insert((old, new));
        trial.closure().iter().all(|(a, b)| a != b)
    }

    pub fn current(&self) -> BTreeSet<u64> {
        let olds: BTreeSet<u64> = self.links.iter().map(|l| l.0).collect();
        self.claims.difference(&olds).copied().collect()
    }
}

/// Exact two-sided binomial tail with integer arithmetic.
pub fn mcnemar_reference(b: u64, c: u64) -> f64 {
    let n = b + c;
    assert!(n > 0 && n <= 120, "reference is exact only for small n");
    let m = b.min(c);
    let mut choose: u128 = 1;
    let mut sum: u128 = 0;
    for i in 0..=m {
        if i > 0 {
            choose = choose * (n - i + 1) as u128 / i as u128;
        }
        sum += choose;
    }
    let p = 2.0 * sum as f64 / 2f64.powi(n as i32);
    p.min(1.0)
}

/// Second bootstrap implementation: same generator constants, written out
/// by hand, with quantiles taken by counting rather than slicing a sorted
/// vector.
pub fn bootstrap_reference(
    pairs: &[(bool, bool)],
    resamples: usize,
    level: f64,
    seed: u64,
) -> (f64, f64) {
    const A: u64 = 6364136223846793005;
    const C: u64 = 1442695040888963407;
    let n = pairs.len() as u64;
    let mut x = seed;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for _ in 0..resamples {
        let mut diff = 0i64;
        for _ in 0..n {
            x = x.wrapping_mul(A).wrapping_add(C);
            let hi = x >> 32;
            let idx = ((hi * n) >> 32) as usize;
            let (a, b) = pairs[idx];
            diff += i64::from(a) - i64::from(b);
        }
        *counts.entry(diff).or_default() += 1;
    }
    let nth = |k: usize| -> f64 {
        let mut seen = 0;
        for (d, c) in &counts {
            seen += c;
            if seen > k {
                return *d as f64 / n as f64;
            }
        }
        unreachable!()
    };
    let r = resamples as f64;
    let lo = (r * (1.0 - level) / 2.0 + 1e-9).floor() as usize;
    let hi = (r * (1.0 + level) / 2.0 - 1e-9).ceil() as usize - 1;
    (nth(lo), nth(hi))
}

/// Union-find over all pairs.
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

pub struct FactView {
    pub id: u64,
    pub context: u64,
    pub text: String,
    pub session: Option<String>,
}

/// Pattern clusters by exhaustive pairwise Jaccard and union-find.
pub fn cluster_oracle(
    facts: &[FactView],
    threshold: f64,
    min_occurrences: usize,
    min_sessions: usize,
) -> BTreeSet<BTreeSet<u64>> {
    let sets: Vec<BTreeSet<String>> = facts.iter().map(|f| words(&f.text)).collect();
    let mut uf = UnionFind::new(facts.len());
    for i in 0..facts.len() {
        for j in i + 1..facts.len() {
            if facts[i].context != facts[j].context {
                continue;
            }
            let inter = sets[i].intersection(&sets[j]).count() as f64;
            let uni = sets[i].union(&sets[j]).count() as f64;
            if uni > 0.0 && inter / uni >= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..facts.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups
        .into_values()
        .filter(|g| {
            let sessions: BTreeSet<&String> = g
                .iter()
                .filter_map(|&i| facts[i].session.as_ref())
                .collect();
            g.len() >= min_occurrences && sessions.len() >= min_sessions
        })
        .map(|g| g.iter().map(|&i| facts[i].id).collect())
        .collect()
}

/// Textbook BM25 (k1 = 1.2, b = 0.75, idf = ln(1 + (N - n + 0.5)/(n + 0.5))),
/// computed per document from raw term counts.
pub fn bm25_reference(docs: &[&str], query: &str) -> Vec<f64> {
    let tokenized: Vec<Vec<String>> = docs
        .iter()
        .map(|d| {
            d.split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(|w| w.to_lowercase())
                .collect()
        })
        .collect();
    let n_docs = docs.len() as f64;
    let avgdl = tokenized.iter().map(|t| t.len()).sum::<usize>() as f64 / n_docs;
    let q: BTreeSet<String> = words(query);
    tokenized
        .iter()
        .map(|doc| {
            let mut s = 0.0;
            for term in &q {
                let tf = doc.iter().filter(|w| *w == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = (1.0 + (n_docs - df + 0.5) / (df + 0.5)).ln();
                let norm = 1.2 * (1.0 - 0.75 + 0.75 * doc.len() as f64 / avgdl);
                s += idf * tf * 2.2 / (tf + norm);
            }
            s
        })
        .collect()
}

pub fn prov(src: &str, at: u64) -> Provenance {
    Provenance::new(src, SourceKind::Document, Timestamp(at))
}

const VOCAB: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "deploy", "cache", "index", "review", "merge", "branch",
    "latency", "budget", "schema", "tenant", "quota", "replica",
];

fn phrase(rng: &mut Lcg, len: usize) -> String {
    (0..len)
        .map(|_| VOCAB[rng.below(VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn pick<T: Copy>(rng: &mut Lcg, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.below(items.len())])
    }
}

/// Drives `ops` random operations across all three stores through the
/// engine. Operations that the domain rejects are fine: they must roll
/// back cleanly. Returns the number that committed.
pub fn random_ops(engine: &mut Engine, clock: &ManualClock, rng: &mut Lcg, ops: usize) -> usize {
    let mut ok = 0;
    for _ in 0..ops {
        if rng.below(4) == 0 {
            clock.advance(Span::from_millis(rng.below(3 * DAY as usize) as u64 + 1));
        }
        let claims: Vec<ClaimId> = engine.knowledge().claims().map(|c| c.id).collect();
        let contexts: Vec<ContextId> = engine.memory().contexts().map(|c| c.id).collect();
        let facts: Vec<MemoryId> = engine.memory().facts().map(|f| f.id).collect();
        let intents: Vec<IntentionId> = engine.memory().intentions().map(|i| i.id).collect();
        let entries: Vec<EntryId> = engine.wisdom().entries().map(|e| e.id).collect();
        let op = rng.below(20);
        let len = 2 + rng.below(4);
        let text = phrase(rng, len);
        let session = format!("s{}", rng.below(5));
        let (a, b) = (pick(rng, &claims), pick(rng, &claims));
        let ctx = pick(rng, &contexts);
        let fact = pick(rng, &facts);
        let intent = pick(rng, &intents);
        let entry = pick(rng, &entries);
        let tag = format!("t{}", rng.below(3));
        let offset = rng.below(10 * DAY as usize) as u64;
        let res = match op {
            0 | 1 => engine
                .write(|s, now| {
                    s.knowledge
                        .ingest_claim(ClaimDraft::new(&text, prov("src", now.0)), now)
                })
                .map(|_| ()),
            2 => engine.write(|s, now| match (a, b) {
                (Some(a), Some(b)) => s.knowledge.supersede(a, b, "newer", now).map(|_| ()),
                _ => Ok(()),
            }),
            3 => engine.write(|s, now| match a {
                Some(a) => s
                    .knowledge
                    .record_conclusion(
                        &text,
                        [a].into_iter().collect(),
                        prov("analysis", now.0),
                        now,
                    )
                    .map(|_| ()),
                None => Ok(()),
            }),
            4 => engine.write(|s, now| {
                s.memory
                    .create_context(&format!("ctx{}", text.len() % 4), now)
                    .map(|_| ())
            }),
            5..=7 => engine.write(|s, now| match ctx {
                Some(c) => {
                    let opts = ObserveOptions {
                        valid_from: Some(Timestamp(now.0.saturating_sub(offset))),
                        session_id: Some(session.clone()),
                        decay: None,
                    };
                    s.memory.observe(&text, c, opts, now).map(|_| ())
                }
                None => Ok(()),
            }),
            8 => engine.write(|s, now| match fact {
                Some(f) => s.memory.reinforce(f, now).map(|_| ()),
                None => Ok(()),
            }),
            9 => engine.write(|s, now| match fact {
                Some(f) => s
                    .memory
                    .invalidate(f, Timestamp(now.0 + offset), "stale", now),
                None => Ok(()),
            }),
            10 => engine.write(|s, now| s.memory.sweep(None, now).map(|_| ())),
            11 => engine.write(|s, now| match ctx {
                Some(c) => {
                    let trigger = if offset.is_multiple_of(2) {
                        Trigger::TimeBased {
                            due_at: Timestamp(now.0 + offset + 1),
                        }
                    } else {
                        Trigger::EventBased { tag: tag.clone() }
                    };
                    s.memory
                        .schedule_intention(&text, trigger, c, now)
                        .map(|_| ())
                }
                None => Ok(()),
            }),
            12 => engine.write(|s, now| s.memory.trigger_event(&tag, now).map(|_| ())),
            13 => engine.write(|s, now| match intent {
                Some(i) if offset.is_multiple_of(3) => s.memory.complete_intention(i, now),
                Some(i) if offset % 3 == 1 => s.memory.expire_intention(i, now),
                Some(i) => s.memory.mark_surfaced(i, now),
                None => Ok(()),
            }),
            14 => engine.write(|s, now| {
                s.wisdom
                    .propose(
                        &text,
                        Evidence::new(fact, Some(&session)),
                        prov("ops", now.0),
                        None,
                        now,
                    )
                    .map(|_| ())
            }),
            15 => engine.write(|s, now| match entry {
                Some(e) => s
                    .wisdom
                    .corroborate(e, Evidence::new(fact, Some(&session)), now),
                None => Ok(()),
            }),
            16 => engine.write(|s, now| match entry {
                Some(e) if offset.is_multiple_of(4) => {
                    s.wisdom.contradict(e, fact, "counterexample", now)
                }
                Some(e) if offset % 4 == 1 => {
                    s.wisdom.resolve_review(e, Resolution::Dismiss, "ok", now)
                }
                Some(e) if offset % 4 == 2 => {
                    s.wisdom
                        .resolve_review(e, Resolution::Demote, "weaker", now)
                }
                Some(e) => s.wisdom.retire(e, None, "obsolete", now),
                None => Ok(()),
            }),
            17 => {
                let gate = engine.config().gate;
                engine.write(|s, now| match entry {
                    Some(e) => s.wisdom.review(e, &gate, now).map(|_| ()),
                    None => Ok(()),
                })
            }
            18 => engine.write(|s, now| s.wisdom.complete_cycle(now).map(|_| ())),
            _ => engine.consolidate().map(|_| ()),
        };
        ok += res.is_ok() as usize;
    }
    ok
}

pub fn manual_engine(start: u64) -> (Engine, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(Timestamp(start)));
    let engine =
        Engine::in_memory(EngineConfig::default(), clock.clone()).expect("default config is valid");
    (engine, clock)
}
