//! One check per acceptance criterion. Each returns a one-line detail on
//! success and the first failure otherwise. The topic test files and the
//! acceptance runner both call these.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use strata_core::bench::{self, BenchOptions, Category, Condition, Lcg};
use strata_core::config::EngineConfig;
use strata_core::engine::Engine;
use strata_core::hooks::{HookSet, LayerLabel};
use strata_core::ids::{ClaimId, ContextId, EntryId, IntentionId, MemoryId};
use strata_core::knowledge::{
    ClaimDraft, ClaimFilter, KnowledgeStore, SearchOptions, SourceKind, Status,
};
use strata_core::memory::{
    IntentionStatus, MemoryPayload, MemoryStore, ObserveOptions, RecallOptions, Trigger,
};
use strata_core::router::RouteScope;
use strata_core::storage::LogRecord;
use strata_core::temporal::{
    retention, visible_as_of, BitemporalStamp, DecayParams, Span, Timestamp,
};
use strata_core::wisdom::{
    EntryStatus, Evidence, EvidenceLedger, GateConfig, Resolution, Tier, TierDecision, WisdomEntry,
    WisdomState, WisdomStore,
};

use super::{
    manual_engine, mcnemar_reference, prov, random_ops, visible_oracle, SupersessionOracle, DAY,
};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn unit(rng: &mut Lcg) -> f64 {
    f64::from(rng.next_u32()) / 4_294_967_296.0
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// 1. decay algebra

pub fn c1_decay_algebra() -> Outcome {
    let mut rng = Lcg::new(0xdeca1);
    let mut worst_half = 0.0f64;
    for _ in 0..10_000 {
        let s0 = (f64::from(rng.next_u32()) + 1.0) / 4_294_967_296.0;
        let h = Span::from_millis(1 + rng.below(400 * DAY as usize) as u64);
        let r = retention(s0, h, h).map_err(|e| e.to_string())?;
        worst_half = worst_half.max(rel_err(r, s0 / 2.0));
    }
    ensure!(
        worst_half <= 1e-12,
        "retention(s0, h, h) off by {worst_half:e}"
    );

    let mut worst_mul = 0.0f64;
    let mut worst_ref = 0.0f64;
    for _ in 0..10_000 {
        let s0 = (f64::from(rng.next_u32()) + 1.0) / 4_294_967_296.0;
        let h = 1 + rng.below(60 * DAY as usize) as u64;
        // keep exponents where the product is a normal float
        let a = (unit(&mut rng) * 20.0 * h as f64) as u64;
        let b = (unit(&mut rng) * 20.0 * h as f64) as u64;
        let h = Span::from_millis(h);
        let whole = retention(s0, Span::from_millis(a + b), h).map_err(|e| e.to_string())?;
        let first = retention(s0, Span::from_millis(a), h).map_err(|e| e.to_string())?;
        let chained = retention(first, Span::from_millis(b), h).map_err(|e| e.to_string())?;
        worst_mul = worst_mul.max(rel_err(whole, chained));
        let reference = s0 * 0.5f64.powf((a + b) as f64 / h.0 as f64);
        worst_ref = worst_ref.max(rel_err(whole, reference));
    }
    ensure!(worst_mul <= 1e-9, "multiplicativity off by {worst_mul:e}");
    ensure!(
        worst_ref <= 1e-9,
        "disagrees with s0*0.5^(t/h) by {worst_ref:e}"
    );
    Ok(format!(
        "half-life point max rel err {worst_half:.1e}; 1e4 tuples multiplicative max rel err {worst_mul:.1e}"
    ))
}

// 2. supersession

pub fn c2_supersession() -> Outcome {
    let mut rng = Lcg::new(0x5e9e);
    let mut links_accepted = 0usize;
    let mut rejected = 0usize;
    for seq in 0..1000 {
        let mut store = KnowledgeStore::new();
        let mut oracle = SupersessionOracle::default();
        let ops = 5 + rng.below(40);
        let mut now = 1_000u64;
        for _ in 0..ops {
            now += 1 + rng.below(1000) as u64;
            let n = oracle.claims.len() as u64;
            if n < 2 || rng.below(3) == 0 {
                let id = store
                    .ingest_claim(
                        ClaimDraft::new(format!("claim {n}"), prov("s", now)),
                        Timestamp(now),
                    )
                    .map_err(|e| e.to_string())?;
                oracle.claims.insert(id.0);
                continue;
            }
            // occasionally name a claim that does not exist
            let old = 1 + rng.below(n as usize + 1) as u64;
            let new = 1 + rng.below(n as usize + 1) as u64;
            let expect = oracle.would_accept(old, new);
            let got = store
                .supersede(ClaimId(old), ClaimId(new), "r", Timestamp(now))
                .is_ok();
            ensure!(
                got == expect,
                "sequence {seq}: link {old}->{new} accepted={got}, oracle says {expect}"
            );
            if got {
                oracle.links.insert((old, new));
                links_accepted += 1;
            } else {
                rejected += 1;
            }
        }
        let current: BTreeSet<u64> = store
            .current_claims(&ClaimFilter::default())
            .iter()
            .map(|c| c.id.0)
            .collect();
        ensure!(
            current == oracle.current(),
            "sequence {seq}: current claims differ"
        );

        let stored = SupersessionOracle {
            claims: oracle.claims.clone(),
            links: store
                .links()
                .iter()
                .map(|l| (l.old_id.0, l.new_id.0))
                .collect(),
        };
        ensure!(
            stored.closure().iter().all(|(a, b)| a != b),
            "sequence {seq}: stored links contain a cycle"
        );

        for &id in &oracle.claims {
            let c = store
                .get_claim(ClaimId(id))
                .map_err(|e| format!("sequence {seq}: {e}"))?;
            let superseded = !oracle.current().contains(&id);
            ensure!(
                (c.status == Status::Superseded) == superseded,
                "sequence {seq}: claim {id} has status {:?}",
                c.status
            );
            ensure!(
                c.stamp.system_expired.is_none(),
                "sequence {seq}: claim {id} record window closed"
            );
            let chain = store
                .provenance_chain(ClaimId(id))
                .map_err(|e| e.to_string())?;
            ensure!(
                chain[0].claim.id.0 == id,
                "sequence {seq}: chain does not start at {id}"
            );
        }
    }
    Ok(format!(
        "1000 sequences, {links_accepted} links accepted, {rejected} rejected, all match oracle"
    ))
}

// 3. bi-temporal

fn probe_time(rng: &mut Lcg, marks: &[u64]) -> u64 {
    match rng.below(3) {
        0 => rng.below(2_000) as u64,
        1 => marks[rng.below(marks.len())],
        _ => marks[rng.below(marks.len())].saturating_sub(1),
    }
}

pub fn c3_bitemporal() -> Outcome {
    let mut rng = Lcg::new(0xb17e);
    // pure function over arbitrary stamps, including closed record windows
    let mut stamps = Vec::new();
    let mut marks = Vec::new();
    for _ in 0..200 {
        let created = rng.below(1_000) as u64;
        let expired = (rng.below(2) == 0).then(|| created + rng.below(600) as u64);
        let from = rng.below(1_000) as u64;
        let until = (rng.below(2) == 0).then(|| from + rng.below(600) as u64);
        let stamp = BitemporalStamp::new(
            Timestamp(created),
            expired.map(Timestamp),
            Timestamp(from),
            until.map(Timestamp),
        )
        .map_err(|e| e.to_string())?;
        marks.extend(
            [Some(created), expired, Some(from), until]
                .into_iter()
                .flatten(),
        );
        stamps.push((stamp, created, expired, from, until));
    }
    let mut pure_checks = 0usize;
    for _ in 0..2_500 {
        let st = probe_time(&mut rng, &marks);
        let vt = probe_time(&mut rng, &marks);
        for (stamp, c, e, f, u) in &stamps {
            let got = visible_as_of(stamp, Timestamp(st), Timestamp(vt));
            let want = visible_oracle(*c, *e, *f, *u, st, vt);
            ensure!(
                got == want,
                "stamp {stamp:?} at ({st}, {vt}): got {got}, oracle {want}"
            );
            pure_checks += 1;
        }
    }

    // the store path: facts recorded at different system times, some
    // validity windows closed later
    let mut store = MemoryStore::new(DecayParams::default()).map_err(|e| e.to_string())?;
    let ctx = store
        .create_context("probe", Timestamp(0))
        .map_err(|e| e.to_string())?;
    let mut truth: BTreeMap<MemoryId, (u64, u64, Option<u64>)> = BTreeMap::new();
    let mut marks = Vec::new();
    let mut now = 0u64;
    for i in 0..200 {
        now += rng.below(10) as u64;
        let from = rng.below(1_000) as u64;
        let opts = ObserveOptions {
            valid_from: Some(Timestamp(from)),
            session_id: None,
            decay: None,
        };
        let id = store
            .observe(&format!("fact {i}"), ctx, opts, Timestamp(now))
            .map_err(|e| e.to_string())?;
        truth.insert(id, (now, from, None));
        marks.extend([now, from]);
    }
    for (id, t) in truth.iter_mut() {
        if rng.below(2) == 0 {
            let until = t.1 + rng.below(600) as u64;
            store
                .invalidate(*id, Timestamp(until), "ended", Timestamp(now))
                .map_err(|e| e.to_string())?;
            t.2 = Some(until);
            marks.push(until);
        }
    }
    let mut store_checks = 0usize;
    for _ in 0..2_500 {
        let st = probe_time(&mut rng, &marks);
        let vt = probe_time(&mut rng, &marks);
        let opts = RecallOptions {
            as_of: Some((Timestamp(st), Timestamp(vt))),
            include_archived: true,
        };
        let got: BTreeSet<MemoryId> = store
            .recall_candidates(ctx, Timestamp(now), &opts)
            .iter()
            .map(|f| f.id)
            .collect();
        let want: BTreeSet<MemoryId> = truth
            .iter()
            .filter(|(_, (c, f, u))| visible_oracle(*c, None, *f, *u, st, vt))
            .map(|(id, _)| *id)
            .collect();
        ensure!(
            got == want,
            "store probe ({st}, {vt}): {} visible, oracle {}",
            got.len(),
            want.len()
        );
        store_checks += truth.len();
    }
    Ok(format!(
        "{pure_checks} stamp probes and {store_checks} store probes, 0 mismatches"
    ))
}

// 4. replay determinism

pub fn c4_replay() -> Outcome {
    let mut committed = 0usize;
    for seed in 0..100u64 {
        let (mut engine, clock) = manual_engine(1_000);
        committed += random_ops(&mut engine, &clock, &mut Lcg::new(seed), 500);
        let records: Vec<LogRecord> = engine.records().ok_or("no in-memory log")?.to_vec();
        let replayed = Engine::from_records(EngineConfig::default(), clock.clone(), &records)
            .map_err(|e| e.to_string())?;
        let (a, b) = (
            engine.canonical_hash().map_err(|e| e.to_string())?,
            replayed.canonical_hash().map_err(|e| e.to_string())?,
        );
        ensure!(a == b, "seed {seed}: incremental {a} vs replayed {b}");
    }
    Ok(format!(
        "100/100 hashes equal ({committed} of 50000 ops committed)"
    ))
}

// 5. type-appropriate decay

const KNOWLEDGE_CORPUS: &[&str] = &[
    "Postgres is the primary datastore for billing",
    "The billing service runs in the eu-west region",
    "Invoices are generated nightly at 02:00 UTC",
    "The search cluster uses three replicas",
    "Search latency budget is 200 ms at p99",
    "Billing retries failed charges twice",
    "The mobile app ships every second Tuesday",
    "Postgres backups are kept for 35 days",
    "The eu-west region hosts the analytics warehouse",
    "Failed charges trigger an email to the account owner",
];

const KNOWLEDGE_QUERIES: &[&str] = &[
    "billing datastore",
    "search replicas latency",
    "postgres backups",
    "failed charges",
    "eu-west region",
    "mobile release",
];

fn knowledge_ranking(engine: &Engine) -> Result<Vec<Vec<(String, u64)>>, String> {
    let mut out = Vec::new();
    for q in KNOWLEDGE_QUERIES {
        let hits = engine
            .knowledge()
            .search_knowledge(q, 10, &SearchOptions::default(), &HookSet::none())
            .map_err(|e| e.to_string())?;
        let (_, routed) = engine
            .query(q, Some(LayerLabel::Knowledge), RouteScope::default(), 10)
            .map_err(|e| e.to_string())?;
        let mut row: Vec<(String, u64)> = hits
            .iter()
            .map(|h| (h.item.to_string(), h.score.to_bits()))
            .collect();
        row.extend(routed.iter().map(|a| (a.id.clone(), a.score.to_bits())));
        out.push(row);
    }
    Ok(out)
}

pub fn c5_knowledge_timeless() -> Outcome {
    let (mut engine, clock) = manual_engine(10 * DAY);
    let mut ids = Vec::new();
    for (i, s) in KNOWLEDGE_CORPUS.iter().enumerate() {
        clock.advance(Span::from_days(i as u64));
        let p = strata_core::knowledge::Provenance::new("wiki", SourceKind::Document, engine.now());
        ids.push(
            engine
                .ingest_claim(ClaimDraft::new(*s, p))
                .map_err(|e| e.to_string())?,
        );
    }
    engine
        .supersede(ids[1], ids[8], "moved")
        .map_err(|e| e.to_string())?;
    let before = knowledge_ranking(&engine)?;
    ensure!(
        before.iter().all(|r| !r.is_empty()),
        "a fixed query returned nothing"
    );
    for days in [1, 30, 365] {
        clock.advance(Span::from_days(days));
        let after = knowledge_ranking(&engine)?;
        ensure!(
            after == before,
            "ranking changed after advancing {days} more days"
        );
    }
    Ok(format!(
        "{} queries identical at t, t+1d, t+31d, t+396d",
        KNOWLEDGE_QUERIES.len()
    ))
}

pub fn c5_memory_decays() -> Outcome {
    let mut rng = Lcg::new(0x3e3);
    let mut store = MemoryStore::new(DecayParams::default()).map_err(|e| e.to_string())?;
    let ctx = store
        .create_context("m", Timestamp(0))
        .map_err(|e| e.to_string())?;
    for i in 0..50 {
        let opts = ObserveOptions {
            valid_from: None,
            session_id: None,
            decay: Some(strata_core::memory::FactDecay {
                initial_strength: 0.2 + 0.8 * unit(&mut rng),
                base_half_life: Span::from_millis(3_600_000 + rng.below(60 * DAY as usize) as u64),
            }),
        };
        store
            .observe(
                &format!("standup note {i} about the release train"),
                ctx,
                opts,
                Timestamp(rng.below(DAY as usize) as u64),
            )
            .map_err(|e| e.to_string())?;
    }
    let facts: Vec<_> = store.facts().cloned().collect();
    let mut checks = 0usize;
    let mut prev: BTreeMap<MemoryId, f64> = BTreeMap::new();
    let mut prev_recall: BTreeMap<MemoryId, f64> = BTreeMap::new();
    let mut t = DAY;
    for step in 0..400 {
        t += 3_600_000 + rng.below(5 * DAY as usize) as u64;
        for f in &facts {
            let r = store.retrievability(f, Timestamp(t));
            if let Some(&p) = prev.get(&f.id) {
                ensure!(r <= p, "step {step}: {} rose from {p} to {r}", f.id);
                // strict while the previous value is a normal float
                ensure!(
                    r < p || p < f64::MIN_POSITIVE,
                    "step {step}: {} did not decrease ({p})",
                    f.id
                );
            }
            prev.insert(f.id, r);
            checks += 1;
        }
        let opts = RecallOptions {
            as_of: None,
            include_archived: true,
        };
        let hits = store
            .recall("release train", ctx, 50, Timestamp(t), &opts)
            .map_err(|e| e.to_string())?;
        for h in hits {
            if let Some(&p) = prev_recall.get(&h.id) {
                ensure!(h.score <= p, "step {step}: recall score of {} rose", h.id);
            }
            prev_recall.insert(h.id, h.score);
        }
    }
    Ok(format!(
        "{checks} retrievability probes over 400 clock steps, never increasing"
    ))
}

pub fn c5_wisdom_timeless() -> Outcome {
    let (mut engine, clock) = manual_engine(DAY);
    let gate = engine.config().gate;
    let snapshot = |engine: &Engine| -> Vec<(EntryId, Tier, EntryStatus)> {
        engine
            .wisdom()
            .active_directives(None)
            .iter()
            .map(|e| (e.id, e.tier, e.status))
            .collect()
    };
    engine
        .write(|s, now| {
            let p = prov("retro", now.0);
            let a = s.wisdom.propose(
                "Write the rollback plan first",
                Evidence::session("s1"),
                p.clone(),
                None,
                now,
            )?;
            let b = s.wisdom.propose(
                "Review schema changes in pairs",
                Evidence::session("s1"),
                p.clone(),
                None,
                now,
            )?;
            let c = s.wisdom.propose(
                "Freeze deploys on Fridays",
                Evidence::session("s1"),
                p,
                None,
                now,
            )?;
            for e in [b, c] {
                s.wisdom.corroborate(e, Evidence::session("s2"), now)?;
                s.wisdom.corroborate(e, Evidence::session("s3"), now)?;
                s.wisdom.review(e, &gate, now)?;
            }
            for _ in 0..10 {
                s.wisdom.complete_cycle(now)?;
            }
            s.wisdom.review(c, &gate, now)?;
            let _ = a;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let before = snapshot(&engine);
    let tiers: BTreeSet<Tier> = before.iter().map(|e| e.1).collect();
    ensure!(
        tiers.len() == 3,
        "setup did not reach all three tiers: {before:?}"
    );
    let mut advanced = 0u64;
    for days in [1, 7, 30, 365, 3650] {
        clock.advance(Span::from_days(days));
        advanced += days;
        engine
            .write(|s, now| s.memory.sweep(None, now))
            .map_err(|e| e.to_string())?;
        let after = snapshot(&engine);
        ensure!(
            after == before,
            "tiers changed after {advanced} days: {after:?}"
        );
    }
    Ok(format!(
        "prediction/core/anchor unchanged across {advanced} days of clock advance"
    ))
}

// 6. wisdom gate truth table

fn gate_oracle(tier: Tier, sessions: u32, contradictions: u32, cycles: u32) -> Option<Tier> {
    if contradictions > 0 {
        return None;
    }
    match tier {
        Tier::Prediction if sessions >= 3 => Some(Tier::Core),
        Tier::Core if cycles >= 10 => Some(Tier::Anchor),
        _ => None,
    }
}

fn entry_with(tier: Tier, sessions: u32, contradictions: u32, cycles: u32) -> WisdomEntry {
    WisdomEntry {
        id: EntryId(1),
        directive: "keep the gate honest".into(),
        tier,
        status: EntryStatus::Active,
        evidence: EvidenceLedger {
            episode_refs: BTreeSet::new(),
            session_ids: (0..sessions).map(|s| format!("s{s}")).collect(),
            contradiction_count: contradictions,
            cycles_survived: cycles,
            fresh_contradictions: 0,
        },
        provenance: prov("test", 0),
        scope: None,
        created_at: Timestamp(0),
        created_after_cycle: 0,
        replaced_by: None,
        revision_log: Vec::new(),
    }
}

fn decision_tier(d: TierDecision) -> Option<Tier> {
    match d {
        TierDecision::Promoted { to, .. } => Some(to),
        TierDecision::Unchanged { .. } => None,
    }
}

/// Drives a prediction entry to the ledger state through store operations.
fn prediction_via_ops(
    sessions: u32,
    contradictions: u32,
    cycles: u32,
    gate: &GateConfig,
) -> Result<Option<Tier>, String> {
    let mut w = WisdomStore::new();
    let now = Timestamp(0);
    let first = if sessions > 0 {
        Evidence::session("s0")
    } else {
        Evidence::default()
    };
    let id = w
        .propose("keep the gate honest", first, prov("t", 0), None, now)
        .map_err(|e| e.to_string())?;
    for s in 1..sessions {
        w.corroborate(id, Evidence::session(&format!("s{s}")), now)
            .map_err(|e| e.to_string())?;
    }
    for _ in 0..contradictions {
        w.contradict(id, None, "counterexample", now)
            .map_err(|e| e.to_string())?;
        w.resolve_review(id, Resolution::Dismiss, "kept", now)
            .map_err(|e| e.to_string())?;
    }
    for _ in 0..cycles {
        w.complete_cycle(now).map_err(|e| e.to_string())?;
    }
    let e = w.entry(id).map_err(|e| e.to_string())?;
    if e.evidence.session_ids.len() as u32 != sessions
        || e.evidence.contradiction_count != contradictions
    {
        return Err(format!("ops produced ledger {:?}", e.evidence));
    }
    w.review(id, gate, now)
        .map(decision_tier)
        .map_err(|e| e.to_string())
}

pub fn c6_gate_truth_table() -> Outcome {
    let gate = GateConfig::default();
    let mut states = 0usize;
    let mut via_ops = 0usize;
    for tier in [Tier::Prediction, Tier::Core] {
        for sessions in 0..=5u32 {
            for contradictions in 0..=2u32 {
                for cycles in 0..=12u32 {
                    let want = gate_oracle(tier, sessions, contradictions, cycles);
                    let mut state = WisdomState::default();
                    state.entries.insert(
                        EntryId(1),
                        entry_with(tier, sessions, contradictions, cycles),
                    );
                    let mut store = WisdomStore::from_state(state);
                    let got = store
                        .review(EntryId(1), &gate, Timestamp(1))
                        .map(decision_tier)
                        .map_err(|e| e.to_string())?;
                    ensure!(
                        got == want,
                        "{tier:?} sessions={sessions} contradictions={contradictions} cycles={cycles}: got {got:?}, want {want:?}"
                    );
                    if tier == Tier::Prediction {
                        let ops = prediction_via_ops(sessions, contradictions, cycles, &gate)?;
                        ensure!(ops == want, "ops path sessions={sessions} contradictions={contradictions} cycles={cycles}: {ops:?}");
                        via_ops += 1;
                    }
                    states += 1;
                }
            }
        }
    }
    ensure!(states == 468, "enumerated {states} states");

    // one session repeated many times never reaches core
    let mut w = WisdomStore::new();
    let id = w
        .propose(
            "one loud session",
            Evidence::new(Some(MemoryId(1)), Some("solo")),
            prov("t", 0),
            None,
            Timestamp(0),
        )
        .map_err(|e| e.to_string())?;
    for i in 0..1_000u64 {
        let ev = if i % 2 == 0 {
            Evidence::new(Some(MemoryId(i + 2)), Some("solo"))
        } else {
            Evidence::new(Some(MemoryId(i + 2)), None)
        };
        w.corroborate(id, ev, Timestamp(i))
            .map_err(|e| e.to_string())?;
        if i % 50 == 0 {
            w.complete_cycle(Timestamp(i)).map_err(|e| e.to_string())?;
        }
        let d = w
            .review(id, &gate, Timestamp(i))
            .map_err(|e| e.to_string())?;
        ensure!(
            decision_tier(d).is_none(),
            "single-session flood promoted after {i} corroborations"
        );
    }
    Ok(format!("{states}/468 states match ({via_ops} also driven through store ops); 1000-step flood stayed at prediction"))
}

// 7. prospective memory

#[derive(Clone)]
struct ModelIntent {
    id: IntentionId,
    trigger: Trigger,
    status: IntentionStatus,
}

const TAGS: &[&str] = &[
    "deploy",
    "deploy-prod",
    "Deploy",
    "review",
    "deploy ",
    "oncall",
];

pub fn c7_prospective() -> Outcome {
    let mut rng = Lcg::new(0x9205);
    let mut checks = 0usize;
    let mut round = 0;
    while checks < 10_000 {
        round += 1;
        let mut store = MemoryStore::new(DecayParams::default()).map_err(|e| e.to_string())?;
        let ctx: ContextId = store
            .create_context("p", Timestamp(0))
            .map_err(|e| e.to_string())?;
        let mut model: Vec<ModelIntent> = Vec::new();
        let n = 5 + rng.below(40);
        for i in 0..n {
            let trigger = if rng.below(3) == 0 {
                Trigger::EventBased {
                    tag: TAGS[rng.below(TAGS.len())].to_string(),
                }
            } else {
                Trigger::TimeBased {
                    due_at: Timestamp(1 + rng.below(1_000) as u64),
                }
            };
            let id = store
                .schedule_intention(&format!("todo {i}"), trigger.clone(), ctx, Timestamp(0))
                .map_err(|e| e.to_string())?;
            model.push(ModelIntent {
                id,
                trigger,
                status: IntentionStatus::Pending,
            });
        }
        for _ in 0..rng.below(2 * n) {
            let k = rng.below(model.len());
            let m = &mut model[k];
            let (res, allowed, next) = match rng.below(3) {
                0 => (
                    store.mark_surfaced(m.id, Timestamp(1)),
                    m.status == IntentionStatus::Pending,
                    IntentionStatus::Surfaced,
                ),
                1 => (
                    store.complete_intention(m.id, Timestamp(1)),
                    matches!(
                        m.status,
                        IntentionStatus::Pending | IntentionStatus::Surfaced
                    ),
                    IntentionStatus::Completed,
                ),
                _ => (
                    store.expire_intention(m.id, Timestamp(1)),
                    m.status == IntentionStatus::Pending,
                    IntentionStatus::Expired,
                ),
            };
            ensure!(
                res.is_ok() == allowed,
                "round {round}: transition on {} from {:?} returned {res:?}",
                m.id,
                m.status
            );
            if allowed {
                m.status = next;
            }
            checks += 1;
        }

        let pending_due = |model: &[ModelIntent]| -> Vec<(Timestamp, IntentionId)> {
            model
                .iter()
                .filter(|m| m.status == IntentionStatus::Pending)
                .filter_map(|m| match m.trigger {
                    Trigger::TimeBased { due_at } => Some((due_at, m.id)),
                    _ => None,
                })
                .collect()
        };
        let due = pending_due(&model);
        for _ in 0..20 {
            let t = if !due.is_empty() && rng.below(2) == 0 {
                due[rng.below(due.len())].0
            } else {
                Timestamp(rng.below(1_100) as u64)
            };
            let got: Vec<IntentionId> = store.list_due(t).iter().map(|i| i.id).collect();
            let mut want: Vec<(Timestamp, IntentionId)> =
                due.iter().copied().filter(|(d, _)| *d <= t).collect();
            want.sort();
            let want: Vec<IntentionId> = want.into_iter().map(|(_, id)| id).collect();
            ensure!(
                got == want,
                "round {round}: list_due({t}) = {got:?}, want {want:?}"
            );
            checks += 1;
        }
        let want_next = due.iter().map(|(d, _)| *d).min();
        ensure!(
            store.next_due_time() == want_next,
            "round {round}: next_due_time {:?} vs {want_next:?}",
            store.next_due_time()
        );
        checks += 1;

        for _ in 0..3 {
            let tag = TAGS[rng.below(TAGS.len())];
            let want: Vec<IntentionId> = model
                .iter()
                .filter(|m| m.status == IntentionStatus::Pending)
                .filter(|m| matches!(&m.trigger, Trigger::EventBased { tag: t } if t == tag))
                .map(|m| m.id)
                .collect();
            let got = store
                .trigger_event(tag, Timestamp(2))
                .map_err(|e| e.to_string())?;
            ensure!(
                got == want,
                "round {round}: trigger {tag:?} surfaced {got:?}, want {want:?}"
            );
            for m in model.iter_mut().filter(|m| want.contains(&m.id)) {
                m.status = IntentionStatus::Surfaced;
            }
            for m in &model {
                let s = store.intention(m.id).map_err(|e| e.to_string())?.status;
                ensure!(
                    s == m.status,
                    "round {round}: {} is {s:?}, model {:?}",
                    m.id,
                    m.status
                );
            }
            checks += 1;
        }
        // event firing never touches time-based intentions
        ensure!(
            pending_due(&model) == due,
            "round {round}: time-based intentions changed"
        );
    }
    Ok(format!(
        "{checks} randomized checks over {round} schedules, 0 failures"
    ))
}

// 8. consolidation closure

pub fn c8_dreamcycle() -> Outcome {
    let (mut engine, clock) = manual_engine(100 * DAY);
    let mut sources = Vec::new();
    let texts = [
        (
            "mon",
            "the staging deploy failed because the migration lock was held",
            "lunch order went to the wrong desk",
        ),
        (
            "tue",
            "staging deploy failed because the migration lock was still held",
            "printer on floor two is out of toner",
        ),
        (
            "wed",
            "the staging deploy failed again because the migration lock was held",
            "new hire starts next week",
        ),
    ];
    for (session, text, noise) in texts {
        clock.advance(Span::from_days(1));
        let id = engine
            .write(|s, now| {
                let ctx = match s.memory.context_by_name("infra") {
                    Some(c) => c.id,
                    None => s.memory.create_context("infra", now)?,
                };
                let opts = ObserveOptions {
                    session_id: Some(session.to_string()),
                    ..ObserveOptions::default()
                };
                s.memory.observe(noise, ctx, opts.clone(), now)?;
                s.memory.observe(text, ctx, opts, now)
            })
            .map_err(|e| e.to_string())?;
        sources.push((id, session, text));
    }
    let first = engine.consolidate().map_err(|e| e.to_string())?;
    let entries: Vec<WisdomEntry> = engine.wisdom().entries().cloned().collect();
    ensure!(
        entries.len() == 1,
        "{} wisdom entries after one cycle",
        entries.len()
    );
    let e = &entries[0];
    ensure!(e.tier == Tier::Core, "entry is at {:?}", e.tier);
    ensure!(
        first.promoted == vec![e.id],
        "report promoted {:?}",
        first.promoted
    );
    let want: BTreeSet<MemoryId> = sources.iter().map(|s| s.0).collect();
    ensure!(
        e.evidence.episode_refs == want,
        "episode_refs {:?}, want {want:?}",
        e.evidence.episode_refs
    );
    for (id, session, text) in &sources {
        let fact = engine.memory().fact(*id).map_err(|e| e.to_string())?;
        ensure!(
            fact.content == *text && fact.session_id.as_deref() == Some(*session),
            "{id} resolves to the wrong fact"
        );
        let ev = engine
            .memory()
            .event(fact.observed_seq)
            .ok_or(format!("{id}: observed event missing"))?;
        ensure!(
            matches!(&ev.payload, MemoryPayload::Observed { fact: f } if f.id == *id),
            "{id}: event {} is not its observation",
            fact.observed_seq
        );
    }
    let second = engine.consolidate().map_err(|e| e.to_string())?;
    ensure!(
        second.promoted.is_empty(),
        "second cycle promoted {:?}",
        second.promoted
    );
    ensure!(
        engine.wisdom().entries().count() == 1,
        "second cycle added entries"
    );
    Ok(format!(
        "one core entry with refs {want:?}; second cycle promoted nothing"
    ))
}

// 9. bench directionality

pub fn c9_bench() -> Outcome {
    let started = Instant::now();
    let report = bench::run_bench(BenchOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let cases = bench::generate_corpus(42, 20, 4).map_err(|e| e.to_string())?;
    ensure!(cases.len() == 80, "{} cases", cases.len());
    let contradiction = cases
        .iter()
        .filter(|c| c.category == Category::ContradictionResolution)
        .count();
    ensure!(contradiction == 40, "{contradiction} contradiction cases");
    let acc = |c: Condition| report.conditions.iter().find(|s| s.condition == c).cloned();
    let oracle = acc(Condition::TypedOracle).ok_or("no typed_oracle row")?;
    let heuristic = acc(Condition::TypedHeuristic).ok_or("no typed_heuristic row")?;
    let flat = acc(Condition::Flat).ok_or("no flat row")?;
    ensure!(
        oracle.contradiction_accuracy == 1.0,
        "typed_oracle contradiction accuracy {}",
        oracle.contradiction_accuracy
    );
    ensure!(
        oracle.accuracy >= flat.accuracy,
        "typed_oracle {} < flat {}",
        oracle.accuracy,
        flat.accuracy
    );
    ensure!(
        heuristic.accuracy <= oracle.accuracy,
        "typed_heuristic {} > typed_oracle {}",
        heuristic.accuracy,
        oracle.accuracy
    );
    let m = &report.mcnemar;
    let p = m.p_value.ok_or("McNemar p not computed")?;
    let p_ref = mcnemar_reference(m.b, m.c);
    ensure!(
        rel_err(p, p_ref) <= 1e-9,
        "McNemar p {p} vs reference {p_ref}"
    );
    let p81 = bench::mcnemar_exact(8, 1).map_err(|e| e.to_string())?;
    ensure!((p81 - 0.0390625).abs() <= 1e-12, "mcnemar(8, 1) = {p81}");
    ensure!(
        (p81 - mcnemar_reference(8, 1)).abs() <= 1e-12,
        "mcnemar(8, 1) disagrees with reference"
    );
    ensure!(elapsed.as_secs_f64() < 60.0, "bench took {elapsed:?}");
    Ok(format!(
        "oracle {:.3} (contradiction {:.3}), heuristic {:.3}, flat {:.3}; McNemar b={} c={} p={p:.3e}; {:.2}s",
        oracle.accuracy,
        oracle.contradiction_accuracy,
        heuristic.accuracy,
        flat.accuracy,
        m.b,
        m.c,
        elapsed.as_secs_f64()
    ))
}

/// Number, name, check and runtime limit in seconds.
pub type Criterion = (u8, &'static str, fn() -> Outcome, Option<f64>);

/// Criteria 1-9 in order.
pub const CORE: &[Criterion] = &[
    (1, "decay algebra", c1_decay_algebra, Some(1.0)),
    (2, "supersession correctness", c2_supersession, Some(10.0)),
    (
        3,
        "bi-temporal point-in-time accuracy",
        c3_bitemporal,
        Some(10.0),
    ),
    (4, "replay determinism", c4_replay, None),
    (5, "type-appropriate decay", c5_all, None),
    (6, "wisdom gate truth table", c6_gate_truth_table, None),
    (7, "prospective memory", c7_prospective, None),
    (8, "consolidation closure", c8_dreamcycle, None),
    (9, "bench directionality", c9_bench, Some(60.0)),
];

pub fn c5_all() -> Outcome {
    let k = c5_knowledge_timeless().map_err(|e| format!("knowledge: {e}"))?;
    let m = c5_memory_decays().map_err(|e| format!("memory: {e}"))?;
    let w = c5_wisdom_timeless().map_err(|e| format!("wisdom: {e}"))?;
    Ok(format!("knowledge: {k} | memory: {m} | wisdom: {w}"))
}

/// Runs one criterion with its time limit folded into the outcome.
pub fn timed(f: fn() -> Outcome, limit: Option<f64>) -> (Outcome, f64) {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    let out = match (out, limit) {
        (Ok(_), Some(l)) if secs >= l => Err(format!("took {secs:.2}s, limit {l}s")),
        (o, _) => o,
    };
    (out, secs)
}
