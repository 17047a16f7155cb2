//! Desk-scale typed-vs-flat comparison on a synthetic corpus with two
//! question categories: contradiction resolution (a value was restated)
//! and temporal reasoning (which activity came first or last).
//!
//! Scoring is deterministic: an answer is correct when the gold string is a
//! case-insensitive substring of the top-1 result. The typed/flat gap on
//! this corpus is produced by its construction and says nothing about
//! magnitudes on natural data.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::hooks::LayerLabel;
use crate::knowledge::{ClaimDraft, Provenance, SourceKind};
use crate::memory::ObserveOptions;
use crate::router::{FlatStore, LabelSource, RouteScope};
use crate::temporal::{FixedClock, Span, Timestamp, MILLIS_PER_DAY};
use crate::wisdom::Evidence;

/// 64-bit linear congruential generator, `x' = a·x + c (mod 2^64)`, with
/// Knuth's MMIX constants. Only the high 32 bits of each state are used.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform-ish index in `0..n` by multiply-shift. `n` must be non-zero.
    /// Above 2^32 the draw still has only 32 bits of resolution.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u32() as u128 * n as u128) >> 32) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct picks from `pool`, in draw order.
    fn pick<'a>(&mut self, pool: &[&'a str], k: usize) -> Vec<&'a str> {
        let mut p = pool.to_vec();
        self.shuffle(&mut p);
        p.truncate(k);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ContradictionResolution,
    TemporalReasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "turn", rename_all = "snake_case")]
pub enum Turn {
    Claim {
        key: String,
        statement: String,
        asserted_at: Timestamp,
    },
    /// Typed ingest links the two claims; the flat store ignores this.
    Supersede {
        old: String,
        new: String,
    },
    Event {
        content: String,
        valid_from: Timestamp,
        session: String,
    },
    Directive {
        text: String,
        session: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub conversation_id: u32,
    pub turns: Vec<Turn>,
    pub question: String,
    pub category: Category,
    pub oracle_label: LayerLabel,
    pub gold_answer: String,
}

/// Generator knobs. Defaults give 20 conversations of 4 questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_conversations: u32,
    pub questions_per: u32,
    /// People in a conversation besides the main subject.
    pub colleagues: usize,
    pub events_per_person: usize,
    /// Uncontested attributes, one claim per person each. Colleagues
    /// appear only here, so a contested attribute has exactly two claims.
    pub background_claims: usize,
    pub directives: usize,
    /// Days between consecutive activity events.
    pub event_spacing_days: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            n_conversations: 20,
            questions_per: 4,
            colleagues: 2,
            events_per_person: 4,
            background_claims: 2,
            directives: 2,
            event_spacing_days: 9,
        }
    }
}

const NAMES: &[&str] = &[
    "Alice", "Bruno", "Chen", "Dana", "Emeka", "Farah", "Goran", "Hana", "Ivan", "Jonas", "Kira",
    "Liam", "Mina", "Noor", "Omar", "Priya", "Quinn", "Rosa", "Sami", "Tariq", "Uma", "Viktor",
    "Wen", "Yara",
];

const ATTRIBUTES: &[(&str, &[&str])] = &[
    (
        "home city",
        &[
            "Lisbon", "Berlin", "Osaka", "Toronto", "Nairobi", "Santiago", "Hanoi", "Oslo",
            "Dublin", "Quito",
        ],
    ),
    (
        "current employer",
        &[
            "Acme Robotics",
            "Borealis Labs",
            "Cobalt Foods",
            "Dynamo Health",
            "Elm Logistics",
            "Fjord Media",
            "Granite Bank",
        ],
    ),
    (
        "favorite language",
        &[
            "Rust", "Haskell", "Python", "Kotlin", "Elixir", "Julia", "Scala", "Fortran",
        ],
    ),
    (
        "project team",
        &[
            "Platform",
            "Payments",
            "Search",
            "Billing",
            "Growth",
            "Security",
            "Compliance",
        ],
    ),
    (
        "company car",
        &[
            "Volvo", "Subaru", "Tesla", "Fiat", "Skoda", "Mazda", "Renault",
        ],
    ),
    (
        "phone carrier",
        &[
            "Vodafone", "Orange", "Telia", "Movistar", "Verizon", "Airtel",
        ],
    ),
];

const ACTIVITIES: &[&str] = &[
    "pottery",
    "chess",
    "rowing",
    "salsa",
    "archery",
    "fencing",
    "sailing",
    "climbing",
    "origami",
    "karate",
    "violin",
    "welding",
    "juggling",
    "kayaking",
    "calligraphy",
    "beekeeping",
    "judo",
    "knitting",
    "surfing",
    "birdwatching",
];

const EVENT_TEMPLATES: &[&str] = &[
    "{p} started {a}",
    "{p} took {a} classes",
    "{p} joined a {a} club",
    "{p} enrolled in {a}",
    "{p} got into {a} over the weekend",
];

const ORIGINAL_TEMPLATES: &[&str] = &[
    "{p}'s {attr} is {v}.",
    "According to {p}, their {attr} is {v} for the foreseeable future.",
    "{p} told us the {attr} was {v} when we first met them.",
    "Noted: {p} has {v} as {attr}.",
];

// Restatements share no words with the question templates beyond the
// person and the attribute.
const UPDATE_TEMPLATES: &[&str] = &[
    "{p}'s {attr} is now {v}.",
    "Update: {p} says the {attr} switched to {v}.",
    "Correction from {p}: {attr} is {v} these days.",
    "{p} mentioned that their {attr} became {v}.",
];

// Some phrasings carry router markers on purpose ("after", "changed",
// "should"), which sends the heuristic router to the wrong layer.
const CONTRADICTION_QUESTIONS: &[&str] = &[
    "What is {p}'s {attr}?",
    "What is {p}'s {attr} at present?",
    "What {attr} does {p} have after the move?",
    "Tell me {p}'s {attr} since it changed",
    "What {attr} should I list for {p}?",
];

const TEMPORAL_QUESTIONS: &[(&str, bool)] = &[
    ("What hobby did {p} pick first?", false),
    ("Which pastime did {p} try first?", false),
    ("What hobby did {p} pick last?", true),
    ("Which pastime did {p} try last?", true),
];

const DIRECTIVES: &[&str] = &[
    "Always confirm meeting times in the invite",
    "Never paste credentials into chat",
    "Prefer short written summaries over calls",
    "Keep weekly notes in the shared folder",
    "Ask before sharing contact details",
    "Reply to urgent requests within a day",
];

fn fill(template: &str, p: &str, attr: &str, v: &str) -> String {
    template
        .replace("{p}", p)
        .replace("{attr}", attr)
        .replace("{v}", v)
        .replace("{a}", v)
}

/// The instant every bench conversation is queried at.
pub const BENCH_NOW: Timestamp = Timestamp(2_000 * MILLIS_PER_DAY);

fn days_ago(d: u64) -> Timestamp {
    BENCH_NOW.minus(Span::from_days(d))
}

pub fn generate_corpus(
    seed: u64,
    n_conversations: u32,
    questions_per: u32,
) -> Result<Vec<BenchCase>> {
    generate_corpus_with(
        seed,
        CorpusParams {
            n_conversations,
            questions_per,
            ..CorpusParams::default()
        },
    )
}

/// Fully determined by `seed` and `params`. Even-indexed questions of a
/// conversation are contradiction cases, odd-indexed are temporal.
pub fn generate_corpus_with(seed: u64, params: CorpusParams) -> Result<Vec<BenchCase>> {
    let n_contra = params.questions_per.div_ceil(2) as usize;
    let n_temporal = (params.questions_per / 2) as usize;
    let people = 1 + params.colleagues;
    if n_contra + params.background_claims > ATTRIBUTES.len()
        || people > NAMES.len()
        || people * params.events_per_person > ACTIVITIES.len()
        || params.directives > DIRECTIVES.len()
        || (n_temporal > 0 && params.events_per_person == 0)
        || params.event_spacing_days == 0
    {
        return Err(Error::Parameter(
            "corpus parameters exceed the generator vocabulary".into(),
        ));
    }
    let mut rng = Lcg::new(seed);
    let mut cases = Vec::new();
    for conv in 0..params.n_conversations {
        let names = rng.pick(NAMES, people);
        let mut attr_idx: Vec<usize> = (0..ATTRIBUTES.len()).collect();
        rng.shuffle(&mut attr_idx);
        let contested = &attr_idx[..n_contra];
        let background = &attr_idx[n_contra..n_contra + params.background_claims];
        let session = |i: usize| format!("conv{conv}-s{i}");
        let mut turns = Vec::new();
        let mut contra = Vec::new();

        for (j, &a) in contested.iter().enumerate() {
            let (attr, values) = ATTRIBUTES[a];
            let vals = rng.pick(values, 2);
            let (v1, v2) = (vals[0], vals[1]);
            let old = format!("{conv}-{j}-old");
            let new = format!("{conv}-{j}-new");
            turns.push(Turn::Claim {
                key: old.clone(),
                statement: fill(
                    ORIGINAL_TEMPLATES[rng.below(ORIGINAL_TEMPLATES.len())],
                    names[0],
                    attr,
                    v1,
                ),
                asserted_at: days_ago(200 + rng.below(200) as u64),
            });
            let template = UPDATE_TEMPLATES[rng.below(UPDATE_TEMPLATES.len())];
            turns.push(Turn::Claim {
                key: new.clone(),
                statement: fill(template, names[0], attr, v2),
                asserted_at: days_ago(10 + rng.below(90) as u64),
            });
            turns.push(Turn::Supersede { old, new });
            let q = CONTRADICTION_QUESTIONS[rng.below(CONTRADICTION_QUESTIONS.len())];
            contra.push((fill(q, names[0], attr, ""), v2.to_string()));
        }
        for (j, &a) in background.iter().enumerate() {
            let (attr, values) = ATTRIBUTES[a];
            for (i, name) in names.iter().enumerate() {
                let v = values[rng.below(values.len())];
                turns.push(Turn::Claim {
                    key: format!("{conv}-bg{j}-{i}"),
                    statement: fill("{p}'s {attr} is {v}.", name, attr, v),
                    asserted_at: days_ago(50 + rng.below(300) as u64),
                });
            }
        }

        let acts = rng.pick(ACTIVITIES, people * params.events_per_person);
        let mut events = Vec::new();
        let mut firsts_lasts = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let mine = &acts[i * params.events_per_person..(i + 1) * params.events_per_person];
            let offset = rng.below(params.event_spacing_days as usize) as u64;
            for (step, act) in mine.iter().enumerate() {
                let ago = 400 - offset - step as u64 * params.event_spacing_days;
                let template = EVENT_TEMPLATES[rng.below(EVENT_TEMPLATES.len())];
                events.push(Turn::Event {
                    content: fill(template, name, "", act),
                    valid_from: days_ago(ago),
                    session: session(step),
                });
            }
            firsts_lasts.push((mine[0].to_string(), mine[mine.len() - 1].to_string()));
        }
        // observation order differs from valid-time order
        rng.shuffle(&mut events);
        turns.extend(events);

        for (i, text) in rng
            .pick(DIRECTIVES, params.directives)
            .into_iter()
            .enumerate()
        {
            turns.push(Turn::Directive {
                text: text.to_string(),
                session: session(i),
            });
        }

        let mut temporal = Vec::new();
        for t in 0..n_temporal {
            let who = t % people;
            let (q, last) = TEMPORAL_QUESTIONS[rng.below(TEMPORAL_QUESTIONS.len())];
            let (first, latest) = &firsts_lasts[who];
            temporal.push((
                fill(q, names[who], "", ""),
                if last { latest.clone() } else { first.clone() },
            ));
        }

        let mut contra = contra.into_iter();
        let mut temporal = temporal.into_iter();
        for q in 0..params.questions_per {
            let (question, gold, category, label) = if q % 2 == 0 {
                let (qq, g) = contra.next().expect("counted above");
                (
                    qq,
                    g,
                    Category::ContradictionResolution,
                    LayerLabel::Knowledge,
                )
            } else {
                let (qq, g) = temporal.next().expect("counted above");
                (qq, g, Category::TemporalReasoning, LayerLabel::Memory)
            };
            cases.push(BenchCase {
                conversation_id: conv,
                turns: turns.clone(),
                question,
                category,
                oracle_label: label,
                gold_answer: gold,
            });
        }
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    TypedOracle,
    TypedHeuristic,
    Flat,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::TypedOracle,
        Condition::TypedHeuristic,
        Condition::Flat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::TypedOracle => "typed_oracle",
            Condition::TypedHeuristic => "typed_heuristic",
            Condition::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub correct: bool,
    pub answer: String,
    /// Layer the query was dispatched to; `None` under the flat condition.
    pub routed_to: Option<LayerLabel>,
    pub label_source: Option<LabelSource>,
}

/// Case-insensitive substring match.
pub fn score_answer(answer: &str, gold: &str) -> bool {
    answer.to_lowercase().contains(&gold.to_lowercase())
}

/// Typed ingest of one conversation into a fresh in-memory substrate.
pub fn ingest_typed(conversation_id: u32, turns: &[Turn]) -> Result<Engine> {
    let mut engine = Engine::in_memory(EngineConfig::default(), Arc::new(FixedClock(BENCH_NOW)))?;
    let source = format!("conv{conversation_id}");
    engine.write(|s, now| {
        let ctx = s.memory.create_context(&source, now)?;
        let mut keys = BTreeMap::new();
        for turn in turns {
            match turn {
                Turn::Claim {
                    key,
                    statement,
                    asserted_at,
                } => {
                    let prov = Provenance::new(&source, SourceKind::Conversation, *asserted_at);
                    let id = s
                        .knowledge
                        .ingest_claim(ClaimDraft::new(statement, prov), now)?;
                    keys.insert(key.clone(), id);
                }
                Turn::Supersede { old, new } => {
                    let find = |k: &String| {
                        keys.get(k)
                            .copied()
                            .ok_or_else(|| Error::not_found("claim key", k))
                    };
                    s.knowledge
                        .supersede(find(old)?, find(new)?, "restated later", now)?;
                }
                Turn::Event {
                    content,
                    valid_from,
                    session,
                } => {
                    let opts = ObserveOptions {
                        valid_from: Some(*valid_from),
                        session_id: Some(session.clone()),
                        decay: None,
                    };
                    s.memory.observe(content, ctx, opts, now)?;
                }
                Turn::Directive { text, session } => {
                    let prov = Provenance::new(&source, SourceKind::Conversation, now);
                    s.wisdom
                        .propose(text, Evidence::session(session), prov, None, now)?;
                }
            }
        }
        Ok(())
    })?;
    Ok(engine)
}

/// Everything in the conversation as one lexical corpus.
pub fn ingest_flat(turns: &[Turn]) -> FlatStore {
    let mut flat = FlatStore::new();
    for turn in turns {
        match turn {
            Turn::Claim { statement, .. } => {
                flat.add(statement);
            }
            Turn::Event { content, .. } => {
                flat.add(content);
            }
            Turn::Directive { text, .. } => {
                flat.add(text);
            }
            Turn::Supersede { .. } => {}
        }
    }
    flat
}

/// Per-case outcomes, in input order. Each conversation is ingested once
/// per condition.
pub fn run_condition(cases: &[BenchCase], condition: Condition) -> Result<Vec<CaseOutcome>> {
    let mut out = Vec::with_capacity(cases.len());
    let mut current: Option<(u32, Option<Engine>, Option<FlatStore>)> = None;
    for case in cases {
        if current.as_ref().map(|c| c.0) != Some(case.conversation_id) {
            current = Some(match condition {
                Condition::Flat => (case.conversation_id, None, Some(ingest_flat(&case.turns))),
                _ => (
                    case.conversation_id,
                    Some(ingest_typed(case.conversation_id, &case.turns)?),
                    None,
                ),
            });
        }
        let (_, engine, flat) = current.as_ref().expect("set above");
        let outcome = match (engine, flat) {
            (Some(engine), _) => {
                let oracle = (condition == Condition::TypedOracle).then_some(case.oracle_label);
                let (q, answers) =
                    engine.query(&case.question, oracle, RouteScope::default(), 1)?;
                let answer = answers
                    .into_iter()
                    .next()
                    .map(|a| a.text)
                    .unwrap_or_default();
                CaseOutcome {
                    correct: score_answer(&answer, &case.gold_answer),
                    answer,
                    routed_to: Some(q.label),
                    label_source: Some(q.label_source),
                }
            }
            (None, Some(flat)) => {
                let answer = flat
                    .flat_query(&case.question, 1)
                    .into_iter()
                    .next()
                    .map(|a| a.text)
                    .unwrap_or_default();
                CaseOutcome {
                    correct: score_answer(&answer, &case.gold_answer),
                    answer,
                    routed_to: None,
                    label_source: None,
                }
            }
            (None, None) => unreachable!("one of the two is always built"),
        };
        out.push(outcome);
    }
    Ok(out)
}

/// Two-sided exact McNemar test: a binomial test on the `b + c` discordant
/// pairs with success probability 1/2, capped at 1. Summed in the log
/// domain so large `n` does not underflow.
pub fn mcnemar_exact(b: u64, c: u64) -> Result<f64> {
    let n = b + c;
    if n == 0 {
        return Err(Error::Parameter(
            "McNemar test needs at least one discordant pair".into(),
        ));
    }
    let m = b.min(c);
    let ln2 = std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64;
    let mut logs = Vec::with_capacity(m as usize + 1);
    for i in 0..=m {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        logs.push(ln_choose - n as f64 * ln2);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>();
    Ok((2.0 * tail).min(1.0))
}

/// Percentile bootstrap CI for the mean paired difference `a - b`.
/// Each resample draws `n` case indices with [`Lcg::below`]; the bounds are
/// the sorted differences at `floor(R(1-level)/2)` and `ceil(R(1+level)/2) - 1`.
pub fn bootstrap_ci(
    pairs: &[(bool, bool)],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Parameter("bootstrap needs at least one pair".into()));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(
            "need resamples >= 1 and level in (0, 1)".into(),
        ));
    }
    let n = pairs.len();
    let mut rng = Lcg::new(seed);
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut d: i64 = 0;
            for _ in 0..n {
                let (a, b) = pairs[rng.below(n)];
                d += a as i64 - b as i64;
            }
            d as f64 / n as f64
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let r = resamples as f64;
    // small epsilon so 9750.000000001 does not round up a whole index
    let lo = ((r * (1.0 - level) / 2.0) + 1e-9).floor() as usize;
    let hi = ((r * (1.0 + level) / 2.0) - 1e-9).ceil() as usize;
    let hi = hi.saturating_sub(1).min(resamples - 1);
    Ok((diffs[lo.min(resamples - 1)], diffs[hi]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub n: usize,
    pub accuracy: f64,
    pub contradiction_accuracy: f64,
    pub temporal_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarSummary {
    /// typed_oracle correct, flat wrong.
    pub b: u64,
    /// flat correct, typed_oracle wrong.
    pub c: u64,
    /// `None` when there are no discordant pairs.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub note: String,
    pub seed: u64,
    pub n_conversations: u32,
    pub questions_per: u32,
    pub conditions: Vec<ConditionSummary>,
    /// typed_oracle accuracy minus flat accuracy.
    pub delta: f64,
    /// typed_heuristic accuracy minus flat accuracy.
    pub heuristic_delta: f64,
    pub bootstrap: BootstrapSummary,
    pub mcnemar: McNemarSummary,
    pub outcomes: BTreeMap<Condition, Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub seed: u64,
    pub n_conversations: u32,
    pub questions_per: u32,
    pub resamples: usize,
    pub level_permille: u32,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: 42,
            n_conversations: 20,
            questions_per: 4,
            resamples: 10_000,
            level_permille: 950,
        }
    }
}

fn accuracy(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hit += f as usize;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

pub fn run_bench(options: BenchOptions) -> Result<BenchReport> {
    let cases = generate_corpus(options.seed, options.n_conversations, options.questions_per)?;
    if cases.is_empty() {
        return Err(Error::Parameter("bench corpus is empty".into()));
    }
    let mut outcomes = BTreeMap::new();
    let mut conditions = Vec::new();
    for condition in Condition::ALL {
        let flags: Vec<bool> = run_condition(&cases, condition)?
            .into_iter()
            .map(|o| o.correct)
            .collect();
        let by_cat = |cat: Category| {
            accuracy(
                cases
                    .iter()
                    .zip(&flags)
                    .filter(|(c, _)| c.category == cat)
                    .map(|(_, f)| *f),
            )
        };
        conditions.push(ConditionSummary {
            condition,
            n: flags.len(),
            accuracy: accuracy(flags.iter().copied()),
            contradiction_accuracy: by_cat(Category::ContradictionResolution),
            temporal_accuracy: by_cat(Category::TemporalReasoning),
        });
        outcomes.insert(condition, flags);
    }
    let typed = &outcomes[&Condition::TypedOracle];
    let flat = &outcomes[&Condition::Flat];
    let pairs: Vec<(bool, bool)> = typed.iter().copied().zip(flat.iter().copied()).collect();
    let b = pairs.iter().filter(|(t, f)| *t && !*f).count() as u64;
    let c = pairs.iter().filter(|(t, f)| !*t && *f).count() as u64;
    let level = options.level_permille as f64 / 1000.0;
    let (lo, hi) = bootstrap_ci(&pairs, options.resamples, level, options.seed)?;
    let acc = |c: Condition| {
        conditions
            .iter()
            .find(|s| s.condition == c)
            .map_or(0.0, |s| s.accuracy)
    };
    Ok(BenchReport {
        note: "synthetic corpus; the typed/flat gap is produced by construction and is not an estimate of effect size on natural data".into(),
        seed: options.seed,
        n_conversations: options.n_conversations,
        questions_per: options.questions_per,
        delta: acc(Condition::TypedOracle) - acc(Condition::Flat),
        heuristic_delta: acc(Condition::TypedHeuristic) - acc(Condition::Flat),
        conditions,
        bootstrap: BootstrapSummary {
            level,
            resamples: options.resamples,
            seed: options.seed,
            lo,
            hi,
        },
        mcnemar: McNemarSummary {
            b,
            c,
            p_value: if b + c == 0 { None } else { Some(mcnemar_exact(b, c)?) },
        },
        outcomes,
    })
}

impl BenchReport {
    pub fn render_human(&self) -> String {
        let mut s = format!("note: {}\n", self.note);
        s.push_str(&format!(
            "seed {}  conversations {}  questions/conversation {}\n\n",
            self.seed, self.n_conversations, self.questions_per
        ));
        s.push_str(&format!(
            "{:<16} {:>4} {:>9} {:>14} {:>9}\n",
            "condition", "n", "overall", "contradiction", "temporal"
        ));
        for c in &self.conditions {
            s.push_str(&format!(
                "{:<16} {:>4} {:>9.3} {:>14.3} {:>9.3}\n",
                c.condition.as_str(),
                c.n,
                c.accuracy,
                c.contradiction_accuracy,
                c.temporal_accuracy
            ));
        }
        s.push_str(&format!(
            "\ndelta (typed_oracle - flat) = {:+.3}\ndelta (typed_heuristic - flat) = {:+.3}\n",
            self.delta, self.heuristic_delta
        ));
        s.push_str(&format!(
            "bootstrap {:.0}% CI on delta: [{:.3}, {:.3}] ({} resamples, seed {})\n",
            self.bootstrap.level * 100.0,
            self.bootstrap.lo,
            self.bootstrap.hi,
            self.bootstrap.resamples,
            self.bootstrap.seed
        ));
        match self.mcnemar.p_value {
            Some(p) => s.push_str(&format!(
                "McNemar exact: b={} c={} p={:.4}\n",
                self.mcnemar.b, self.mcnemar.c, p
            )),
            None => s.push_str("McNemar exact: no discordant pairs\n"),
        }
        s
    }
}
