use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use strata_core::bench::{self, BenchOptions};
use strata_core::config::EngineConfig;
use strata_core::engine::Engine;
use strata_core::error::{Error, Result};
use strata_core::hooks::LayerLabel;
use strata_core::ids::{ClaimId, ContextId, MemoryId};
use strata_core::knowledge::{ClaimDraft, Provenance, SourceKind};
use strata_core::memory::{ObserveOptions, Trigger};
use strata_core::router::{FlatStore, RouteScope};
use strata_core::temporal::{Clock, FixedClock, SystemClock, Timestamp};
use strata_core::wisdom::{Evidence, Tier};

/// Operator interface to a strata substrate directory.
#[derive(Debug, Parser)]
#[command(name = "strata", version)]
struct Cli {
    /// Substrate directory.
    #[arg(long, env = "STRATA_DIR", default_value = ".strata", global = true)]
    dir: PathBuf,

    #[arg(long, value_enum, default_value_t = Output::Human, global = true)]
    output: Output,

    /// Pin the clock to this instant (ms since epoch) for reproducible runs.
    #[arg(long, value_name = "MS", global = true)]
    clock: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Human,
    /// One JSON record per line.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayerArg {
    Auto,
    Knowledge,
    Memory,
    Wisdom,
    Flat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a substrate directory with a default config and empty log.
    Init {
        /// Start from this config file instead of the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ingest a knowledge claim.
    Ingest {
        statement: String,
        #[arg(long)]
        source: String,
        #[arg(long, default_value = "document")]
        kind: String,
        #[arg(long)]
        author: Option<String>,
        /// When the source asserted it; defaults to now.
        #[arg(long, value_name = "MS")]
        asserted_at: Option<u64>,
        #[arg(long, value_name = "MS")]
        valid_from: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
    },
    /// Record a memory observation.
    Observe {
        content: String,
        #[arg(long)]
        context: String,
        /// Create the context if it does not exist.
        #[arg(long)]
        new_context: bool,
        #[arg(long)]
        session: Option<String>,
        #[arg(long, value_name = "MS")]
        valid_from: Option<u64>,
    },
    /// Propose a wisdom directive at prediction tier.
    Propose {
        directive: String,
        #[arg(long)]
        source: String,
        #[arg(long)]
        session: Option<String>,
        #[arg(long)]
        episode: Option<MemoryId>,
        /// Context name the directive applies to.
        #[arg(long)]
        scope: Option<String>,
    },
    /// Query one layer, the flat control store, or let the router decide.
    Query {
        text: String,
        #[arg(long, value_enum, default_value_t = LayerArg::Auto)]
        layer: LayerArg,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        /// Restrict memory recall and wisdom scope to this context.
        #[arg(long)]
        context: Option<String>,
        /// System time for an as-of memory query.
        #[arg(long, value_name = "MS", requires = "as_of_valid")]
        as_of_system: Option<u64>,
        /// Valid time for an as-of memory query.
        #[arg(long, value_name = "MS", requires = "as_of_system")]
        as_of_valid: Option<u64>,
    },
    /// Mark `old` as superseded by `new`.
    Supersede {
        old: ClaimId,
        new: ClaimId,
        #[arg(long)]
        reason: String,
    },
    /// Reinforce a memory fact.
    Reinforce { id: MemoryId },
    /// Schedule a prospective intention.
    Schedule {
        description: String,
        #[arg(long)]
        context: String,
        #[arg(
            long,
            value_name = "MS",
            conflicts_with = "on_event",
            required_unless_present = "on_event"
        )]
        due: Option<u64>,
        #[arg(long, value_name = "TAG")]
        on_event: Option<String>,
    },
    /// List pending time-based intentions due at or before `--now`.
    Due {
        #[arg(long, value_name = "MS")]
        now: Option<u64>,
    },
    /// Run one consolidation cycle.
    Consolidate {
        /// Write the JSON report here instead of
        /// `<dir>/consolidate.<cycle>.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Archive memory facts below the recall threshold.
    Sweep {
        #[arg(long)]
        context: Option<String>,
    },
    /// Print the active wisdom directives as a plain-text block.
    Preload {
        /// Only unscoped directives and those for this scope.
        #[arg(long)]
        scope: Option<String>,
    },
    /// Print substrate counts and the canonical state hash.
    Stats,
    /// Write a snapshot of the current state.
    Snapshot,
    /// Run the typed-vs-flat benchmark.
    Bench {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the structured report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        conversations: u32,
        #[arg(long, default_value_t = 4)]
        questions: u32,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
    },
}

struct Printer {
    mode: Output,
}

impl Printer {
    fn record<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> Result<()> {
        match self.mode {
            Output::Structured => {
                let line =
                    serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))?;
                println!("{line}");
            }
            Output::Human => println!("{}", human()),
        }
        Ok(())
    }

    fn human(&self, text: &str) {
        if self.mode == Output::Human {
            println!("{text}");
        }
    }
}

fn clock(cli: &Cli) -> Arc<dyn Clock> {
    match cli.clock {
        Some(ms) => Arc::new(FixedClock(Timestamp(ms))),
        None => Arc::new(SystemClock::new()),
    }
}

fn open(cli: &Cli) -> Result<Engine> {
    Engine::open(&cli.dir, clock(cli))
}

fn context_id(engine: &Engine, name: &str) -> Result<ContextId> {
    engine
        .memory()
        .context_by_name(name)
        .map(|c| c.id)
        .ok_or_else(|| Error::not_found("context", name))
}

fn run(cli: &Cli) -> Result<()> {
    let out = Printer { mode: cli.output };
    match &cli.command {
        Command::Init { config } => {
            let config = match config {
                Some(path) => EngineConfig::load(path)?,
                None => EngineConfig::default(),
            };
            Engine::init(&cli.dir, &config)?;
            out.human(&format!("initialized {}", cli.dir.display()));
        }
        Command::Ingest {
            statement,
            source,
            kind,
            author,
            asserted_at,
            valid_from,
            confidence,
        } => {
            let mut engine = open(cli)?;
            let kind: SourceKind = kind.parse().map_err(Error::Validation)?;
            let asserted = asserted_at.map(Timestamp).unwrap_or_else(|| engine.now());
            let mut provenance = Provenance::new(source.as_str(), kind, asserted);
            provenance.author = author.clone();
            let mut draft = ClaimDraft::new(statement.as_str(), provenance);
            if let Some(v) = valid_from {
                draft = draft.valid_from(Timestamp(*v));
            }
            if let Some(c) = confidence {
                draft.confidence = Some(*c);
            }
            let id = engine.ingest_claim(draft)?;
            let claim = engine.knowledge().get_claim(id)?;
            out.record(claim, || format!("{id}  {}", claim.statement))?;
        }
        Command::Observe {
            content,
            context,
            new_context,
            session,
            valid_from,
        } => {
            let mut engine = open(cli)?;
            let existing = engine.memory().context_by_name(context).map(|c| c.id);
            let id = engine.write(|s, now| {
                let ctx = match existing {
                    Some(c) => c,
                    None if *new_context => s.memory.create_context(context, now)?,
                    None => return Err(Error::not_found("context", context)),
                };
                let opts = ObserveOptions {
                    valid_from: valid_from.map(Timestamp),
                    session_id: session.clone(),
                    decay: None,
                };
                s.memory.observe(content, ctx, opts, now)
            })?;
            let fact = engine.memory().fact(id)?;
            out.record(fact, || format!("{id}  {}", fact.content))?;
        }
        Command::Propose {
            directive,
            source,
            session,
            episode,
            scope,
        } => {
            let mut engine = open(cli)?;
            let id = engine.write(|s, now| {
                if let Some(m) = episode {
                    s.memory.fact(*m)?;
                }
                let prov = Provenance::new(source.as_str(), SourceKind::Human, now);
                let evidence = Evidence::new(*episode, session.as_deref());
                s.wisdom
                    .propose(directive, evidence, prov, scope.as_deref(), now)
            })?;
            let entry = engine.wisdom().entry(id)?;
            out.record(entry, || format!("{id}  [prediction] {}", entry.directive))?;
        }
        Command::Query {
            text,
            layer,
            k,
            context,
            as_of_system,
            as_of_valid,
        } => {
            let engine = open(cli)?;
            let scope = RouteScope {
                context: context
                    .as_deref()
                    .map(|c| context_id(&engine, c))
                    .transpose()?,
            };
            if *layer == LayerArg::Flat {
                if *k == 0 {
                    return Err(Error::Parameter("k must be at least 1".into()));
                }
                let flat = FlatStore::from_stores(engine.stores());
                let answers = flat.flat_query(text, *k);
                out.human("flat store");
                for a in &answers {
                    out.record(a, || format!("  {:>8.4}  {}", a.score, a.text))?;
                }
                return Ok(());
            }
            let oracle = match layer {
                LayerArg::Knowledge => Some(LayerLabel::Knowledge),
                LayerArg::Memory => Some(LayerLabel::Memory),
                LayerArg::Wisdom => Some(LayerLabel::Wisdom),
                LayerArg::Auto | LayerArg::Flat => None,
            };
            let (q, answers) = match (as_of_system, as_of_valid) {
                (Some(st), Some(vt)) => {
                    let q = strata_core::router::RoutedQuery::resolve(
                        text,
                        oracle,
                        engine.hooks(),
                        &engine.config().router,
                    )?
                    .as_of(Timestamp(*st), Timestamp(*vt));
                    let answers = strata_core::router::route(
                        &q,
                        engine.stores(),
                        engine.hooks(),
                        &engine.config().router,
                        engine.config().fusion,
                        scope,
                        *k,
                        engine.now(),
                    )?;
                    (q, answers)
                }
                _ => engine.query(text, oracle, scope, *k)?,
            };
            out.record(&q, || {
                format!(
                    "routed to {} ({})",
                    q.label,
                    serde_json::to_value(q.label_source)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default()
                )
            })?;
            for a in &answers {
                out.record(a, || {
                    let when = a.valid_from.map(|t| format!("  @{t}")).unwrap_or_default();
                    format!(
                        "  {:<6} {:>8.4}  {}{when}\n         {}",
                        a.id, a.score, a.text, a.explanation
                    )
                })?;
            }
        }
        Command::Supersede { old, new, reason } => {
            let mut engine = open(cli)?;
            let link = engine.write(|s, now| s.knowledge.supersede(*old, *new, reason, now))?;
            out.record(&link, || {
                format!(
                    "{} superseded by {}: {}",
                    link.old_id, link.new_id, link.reason
                )
            })?;
        }
        Command::Reinforce { id } => {
            let mut engine = open(cli)?;
            let r = engine.write(|s, now| s.memory.reinforce(*id, now))?;
            let fact = engine.memory().fact(*id)?;
            out.record(fact, || {
                format!(
                    "{id}  retrievability {r:.3}, half-life {:.1} days",
                    engine.memory().effective_half_life(fact).as_days()
                )
            })?;
        }
        Command::Schedule {
            description,
            context,
            due,
            on_event,
        } => {
            let mut engine = open(cli)?;
            let ctx = context_id(&engine, context)?;
            let trigger = match (due, on_event) {
                (Some(t), _) => Trigger::TimeBased {
                    due_at: Timestamp(*t),
                },
                (None, Some(tag)) => Trigger::EventBased { tag: tag.clone() },
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let id = engine
                .write(|s, now| s.memory.schedule_intention(description, trigger, ctx, now))?;
            let i = engine.memory().intention(id)?;
            out.record(i, || format!("{id}  {}", i.description))?;
        }
        Command::Due { now } => {
            let engine = open(cli)?;
            let t = now.map(Timestamp).unwrap_or_else(|| engine.now());
            let due = engine.memory().list_due(t);
            if due.is_empty() {
                out.human("nothing due");
            }
            for i in due {
                out.record(i, || {
                    let at = match &i.trigger {
                        Trigger::TimeBased { due_at } => due_at.to_string(),
                        Trigger::EventBased { tag } => tag.clone(),
                    };
                    format!("{}  due {at}  {}", i.id, i.description)
                })?;
            }
        }
        Command::Consolidate { report } => {
            let mut engine = open(cli)?;
            let r = engine.consolidate()?;
            let path = report
                .clone()
                .unwrap_or_else(|| cli.dir.join(format!("consolidate.{}.json", r.cycle_number)));
            write_json(&path, &r)?;
            out.record(&r, || {
                let mut s = format!(
                    "cycle {}: archived {}, candidates {}, promoted {}, reviews {}",
                    r.cycle_number,
                    r.archived,
                    r.candidates.len(),
                    r.promoted.len(),
                    r.wisdom_reviews.len()
                );
                for c in &r.candidates {
                    s.push_str(&format!(
                        "\n  candidate ({} members, {} sessions): {}",
                        c.member_ids.len(),
                        c.distinct_sessions.len(),
                        c.representative_content
                    ));
                }
                s
            })?;
        }
        Command::Sweep { context } => {
            let mut engine = open(cli)?;
            let ctx = context
                .as_deref()
                .map(|c| context_id(&engine, c))
                .transpose()?;
            let archived = engine.write(|s, now| s.memory.sweep(ctx, now))?;
            out.human(&format!("archived {}", archived.len()));
            for id in archived {
                let f = engine.memory().fact(id)?;
                out.record(f, || format!("  {id}  {}", f.content))?;
            }
        }
        Command::Preload { scope } => {
            let engine = open(cli)?;
            let active = engine.wisdom().active_directives(scope.as_deref());
            match out.mode {
                Output::Structured => {
                    for e in &active {
                        out.record(e, String::new)?;
                    }
                }
                Output::Human => {
                    for e in &active {
                        let tier = match e.tier {
                            Tier::Prediction => "prediction",
                            Tier::Core => "core",
                            Tier::Anchor => "anchor",
                        };
                        println!("- [{tier}] {}", e.directive);
                    }
                }
            }
        }
        Command::Stats => {
            let engine = open(cli)?;
            let s = engine.stats()?;
            out.record(&s, || {
                let v = serde_json::to_value(&s).unwrap_or_default();
                v.as_object()
                    .map(|m| {
                        m.iter()
                            .map(|(k, v)| format!("{k:<22} {v}"))
                            .collect::<Vec<_>>()
                            .join("\n")
                    })
                    .unwrap_or_default()
            })?;
        }
        Command::Snapshot => {
            let engine = open(cli)?;
            let path = engine.snapshot()?;
            out.human(&format!("wrote {}", path.display()));
        }
        Command::Bench {
            seed,
            out: path,
            conversations,
            questions,
            resamples,
        } => {
            let report = bench::run_bench(BenchOptions {
                seed: *seed,
                n_conversations: *conversations,
                questions_per: *questions,
                resamples: *resamples,
                ..BenchOptions::default()
            })?;
            if let Some(p) = path {
                write_json(p, &report)?;
            }
            out.record(&report, || report.render_human())?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
