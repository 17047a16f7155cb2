//! The substrate handle: three stores, one journal, an injected clock and the
//! consumer hook set.
//!
//! All mutation goes through [`Engine::write`]. The closure sees the stores
//! and the current instant; if it returns `Ok`, every event it produced is
//! appended to the journal (and synced, for file-backed substrates) as one
//! batch. If it returns `Err`, the stores are rebuilt from the journal so no
//! partial effect survives.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::dreamcycle::{self, CycleReport};
use crate::error::{Error, Result};
use crate::hooks::{null_verdict, ArbiterVerdict, HookSet, LayerLabel};
use crate::ids::ClaimId;
use crate::knowledge::{Claim, ClaimDraft, KnowledgeStore, Status};
use crate::memory::MemoryStore;
use crate::router::{self, Answer, RouteScope, RoutedQuery};
use crate::storage::{
    self, LogRecord, LogWriter, MetaEvent, Record, StateView, SubstrateState, CONFIG_FILE,
    FORMAT_VERSION, LOCK_FILE, LOG_FILE,
};
use crate::temporal::{BitemporalStamp, Clock, Timestamp};
use crate::wisdom::{EntryStatus, Tier, WisdomStore};

/// Mutable access to all three stores inside [`Engine::write`].
#[derive(Debug, Clone)]
pub struct Stores {
    pub knowledge: KnowledgeStore,
    pub memory: MemoryStore,
    pub wisdom: WisdomStore,
}

impl Stores {
    fn empty(config: &EngineConfig) -> Result<Self> {
        Ok(Stores {
            knowledge: KnowledgeStore::new(),
            memory: MemoryStore::new(config.decay)?,
            wisdom: WisdomStore::new(),
        })
    }

    fn from_state(config: &EngineConfig, state: SubstrateState) -> Result<Self> {
        if state.format != FORMAT_VERSION {
            return Err(Error::Format(format!("snapshot format {}", state.format)));
        }
        Ok(Stores {
            knowledge: KnowledgeStore::from_state(state.knowledge),
            memory: MemoryStore::from_state(config.decay, state.memory)?,
            wisdom: WisdomStore::from_state(state.wisdom),
        })
    }

    fn has_pending(&self) -> bool {
        self.knowledge.has_pending() || self.memory.has_pending() || self.wisdom.has_pending()
    }

    fn drain(&mut self) -> Vec<Record> {
        let mut out = Vec::new();
        out.extend(
            self.knowledge
                .take_pending()
                .into_iter()
                .map(Record::Knowledge),
        );
        out.extend(self.memory.take_pending().into_iter().map(Record::Memory));
        out.extend(self.wisdom.take_pending().into_iter().map(Record::Wisdom));
        out
    }

    fn apply(&mut self, record: &Record) -> Result<()> {
        match record {
            Record::Knowledge(e) => self.knowledge.apply_external(e),
            Record::Memory(e) => self.memory.apply_external(e),
            Record::Wisdom(e) => self.wisdom.apply_external(e),
            Record::Meta(MetaEvent::Header { format }) => {
                if *format != FORMAT_VERSION {
                    Err(Error::Format(format!(
                        "log format {format}, this build reads {FORMAT_VERSION}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn view(&self) -> StateView<'_> {
        StateView {
            format: FORMAT_VERSION,
            knowledge: self.knowledge.state(),
            memory: self.memory.state(),
            wisdom: self.wisdom.state(),
        }
    }
}

enum Journal {
    InMemory(Vec<LogRecord>),
    File {
        dir: PathBuf,
        writer: LogWriter,
        // held for the advisory lock
        _lock: File,
    },
}

/// Summary counts for `stats`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub last_seq: u64,
    pub claims: usize,
    pub current_claims: usize,
    pub supersession_links: usize,
    pub entities: usize,
    pub conclusions: usize,
    pub contexts: usize,
    pub memory_facts: usize,
    pub archived_facts: usize,
    pub memory_events: usize,
    pub pending_intentions: usize,
    pub wisdom_active: usize,
    pub wisdom_under_review: usize,
    pub wisdom_retired: usize,
    pub wisdom_anchor: usize,
    pub wisdom_core: usize,
    pub wisdom_prediction: usize,
    pub cycles_completed: u64,
    pub state_hash: String,
}

pub struct Engine {
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    hooks: HookSet,
    stores: Stores,
    journal: Journal,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("last_seq", &self.last_seq())
            .field("hooks", &self.hooks)
            .finish_non_exhaustive()
    }
}

fn header() -> Record {
    Record::Meta(MetaEvent::Header {
        format: FORMAT_VERSION,
    })
}

impl Engine {
    /// A volatile substrate whose journal lives in memory.
    pub fn in_memory(config: EngineConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        config.validate()?;
        let first = LogRecord::encode(1, &header())?;
        Ok(Engine {
            stores: Stores::empty(&config)?,
            config,
            clock,
            hooks: HookSet::none(),
            journal: Journal::InMemory(vec![first]),
        })
    }

    /// Rebuilds an in-memory substrate by replaying `records` from scratch.
    pub fn from_records(
        config: EngineConfig,
        clock: Arc<dyn Clock>,
        records: &[LogRecord],
    ) -> Result<Self> {
        config.validate()?;
        let mut stores = Stores::empty(&config)?;
        for r in records {
            stores.apply(&r.decode()?)?;
        }
        Ok(Engine {
            stores,
            config,
            clock,
            hooks: HookSet::none(),
            journal: Journal::InMemory(records.to_vec()),
        })
    }

    /// Creates a substrate directory with a config file and an empty log.
    pub fn init(dir: &Path, config: &EngineConfig) -> Result<()> {
        config.validate()?;
        fs::create_dir_all(dir)?;
        let log = dir.join(LOG_FILE);
        if log.exists() {
            return Err(Error::Validation(format!(
                "{} already holds a substrate",
                dir.display()
            )));
        }
        fs::write(dir.join(CONFIG_FILE), config.render())?;
        let (mut writer, _) = LogWriter::open(&log)?;
        writer.append(&[header()])?;
        Ok(())
    }

    /// Opens an existing substrate: newest valid snapshot, then the log tail.
    /// A torn final record is truncated.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        let log = dir.join(LOG_FILE);
        let config_path = dir.join(CONFIG_FILE);
        if !log.exists() || !config_path.exists() {
            return Err(Error::not_found("substrate", dir.display()));
        }
        let config = EngineConfig::load(&config_path)?;
        let lock = acquire_lock(dir)?;
        let (writer, scan) = LogWriter::open(&log)?;
        let stores = load_stores(dir, &config, &scan.records)?;
        Ok(Engine {
            stores,
            config,
            clock,
            hooks: HookSet::none(),
            journal: Journal::File {
                dir: dir.to_path_buf(),
                writer,
                _lock: lock,
            },
        })
    }

    pub fn with_hooks(mut self, hooks: HookSet) -> Self {
        self.hooks = hooks;
        self
    }

    pub fn set_hooks(&mut self, hooks: HookSet) {
        self.hooks = hooks;
    }

    pub fn hooks(&self) -> &HookSet {
        &self.hooks
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn knowledge(&self) -> &KnowledgeStore {
        &self.stores.knowledge
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.stores.memory
    }

    pub fn wisdom(&self) -> &WisdomStore {
        &self.stores.wisdom
    }

    pub fn dir(&self) -> Option<&Path> {
        match &self.journal {
            Journal::File { dir, .. } => Some(dir),
            Journal::InMemory(_) => None,
        }
    }

    /// Journal records, for in-memory substrates.
    pub fn records(&self) -> Option<&[LogRecord]> {
        match &self.journal {
            Journal::InMemory(r) => Some(r),
            Journal::File { .. } => None,
        }
    }

    pub fn last_seq(&self) -> u64 {
        match &self.journal {
            Journal::InMemory(r) => r.last().map_or(0, |r| r.seq),
            Journal::File { writer, .. } => writer.next_seq() - 1,
        }
    }

    pub fn state_view(&self) -> StateView<'_> {
        self.stores.view()
    }

    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        storage::canonical_bytes(&self.state_view())
    }

    pub fn canonical_hash(&self) -> Result<String> {
        storage::canonical_hash(&self.state_view())
    }

    /// Runs `f` as one atomic write.
    pub fn write<T>(&mut self, f: impl FnOnce(&mut Stores, Timestamp) -> Result<T>) -> Result<T> {
        let now = self.clock.now();
        match f(&mut self.stores, now) {
            Ok(value) => {
                let records = self.stores.drain();
                if let Err(e) = self.append(&records) {
                    self.rebuild()?;
                    return Err(e);
                }
                Ok(value)
            }
            Err(e) => {
                if self.stores.has_pending() {
                    self.rebuild()?;
                }
                Err(e)
            }
        }
    }

    fn append(&mut self, records: &[Record]) -> Result<()> {
        match &mut self.journal {
            Journal::InMemory(log) => {
                let first = log.last().map_or(1, |r| r.seq + 1);
                for (seq, r) in (first..).zip(records) {
                    log.push(LogRecord::encode(seq, r)?);
                }
            }
            Journal::File { writer, .. } => {
                writer.append(records)?;
            }
        }
        Ok(())
    }

    /// Discards in-flight state and re-derives the stores from the journal.
    fn rebuild(&mut self) -> Result<()> {
        self.stores = match &self.journal {
            Journal::InMemory(records) => {
                let mut stores = Stores::empty(&self.config)?;
                for r in records {
                    stores.apply(&r.decode()?)?;
                }
                stores
            }
            Journal::File { dir, .. } => {
                let scan = storage::scan_log(&dir.join(LOG_FILE))?;
                load_stores(dir, &self.config, &scan.records)?
            }
        };
        Ok(())
    }

    /// Writes `substrate.snap.<last_seq>` for a file-backed substrate.
    pub fn snapshot(&self) -> Result<PathBuf> {
        match &self.journal {
            Journal::File { dir, .. } => {
                storage::write_snapshot(dir, self.last_seq(), &self.state_view())
            }
            Journal::InMemory(_) => Err(Error::InvalidState(
                "in-memory substrate has no directory to snapshot into".into(),
            )),
        }
    }

    pub fn stats(&self) -> Result<Stats> {
        let k = self.knowledge();
        let m = self.memory();
        let w = self.wisdom();
        let count_status = |s: EntryStatus| w.entries().filter(|e| e.status == s).count();
        let count_tier = |t: Tier| {
            w.entries()
                .filter(|e| e.status == EntryStatus::Active && e.tier == t)
                .count()
        };
        Ok(Stats {
            last_seq: self.last_seq(),
            claims: k.claims().count(),
            current_claims: k.claims().filter(|c| c.status == Status::Current).count(),
            supersession_links: k.links().len(),
            entities: k.state().entities.len(),
            conclusions: k.state().conclusions.len(),
            contexts: m.contexts().count(),
            memory_facts: m.facts().count(),
            archived_facts: m.facts().filter(|f| f.archived).count(),
            memory_events: m.events().len(),
            pending_intentions: m
                .intentions()
                .filter(|i| i.status == crate::memory::IntentionStatus::Pending)
                .count(),
            wisdom_active: count_status(EntryStatus::Active),
            wisdom_under_review: count_status(EntryStatus::UnderReview),
            wisdom_retired: count_status(EntryStatus::Retired),
            wisdom_anchor: count_tier(Tier::Anchor),
            wisdom_core: count_tier(Tier::Core),
            wisdom_prediction: count_tier(Tier::Prediction),
            cycles_completed: w.cycles_completed(),
            state_hash: self.canonical_hash()?,
        })
    }

    pub fn ingest_claim(&mut self, draft: ClaimDraft) -> Result<ClaimId> {
        self.write(|s, now| s.knowledge.ingest_claim(draft, now))
    }

    pub fn supersede(&mut self, old: ClaimId, new: ClaimId, reason: &str) -> Result<()> {
        self.write(|s, now| s.knowledge.supersede(old, new, reason, now).map(|_| ()))
    }

    /// Ingests `draft` after asking the conflict arbiter how it relates to
    /// `existing`. The arbiter is consulted before any mutation; its verdict
    /// is recorded as the supersession reason. A `duplicate` verdict stores
    /// nothing and returns `existing`. Without an arbiter the verdict is
    /// `independent`.
    pub fn ingest_arbitrated(
        &mut self,
        draft: ClaimDraft,
        existing: ClaimId,
    ) -> Result<(ClaimId, ArbiterVerdict)> {
        let old = self.knowledge().get_claim(existing)?.clone();
        let (verdict, arbiter) = match &self.hooks.conflict_arbiter {
            Some(arbiter) => {
                let provisional = Claim {
                    id: ClaimId(0),
                    statement: draft.statement.clone(),
                    entity_refs: draft.entity_refs.clone(),
                    provenance: draft.provenance.clone(),
                    stamp: BitemporalStamp::open(
                        self.now(),
                        draft.valid_from.unwrap_or(draft.provenance.asserted_at),
                    ),
                    confidence: draft.confidence,
                    status: Status::Current,
                };
                (
                    arbiter.arbitrate(&provisional, &old)?,
                    arbiter.name().to_string(),
                )
            }
            None => (null_verdict(), "null".to_string()),
        };
        if verdict == ArbiterVerdict::Duplicate {
            return Ok((existing, verdict));
        }
        let reason = format!(
            "conflict_arbiter({arbiter}): {}",
            serde_json::to_value(verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        );
        let id = self.write(|s, now| {
            let id = s.knowledge.ingest_claim(draft, now)?;
            match verdict {
                ArbiterVerdict::ASupersedesB => {
                    s.knowledge.supersede(existing, id, &reason, now)?;
                }
                ArbiterVerdict::BSupersedesA => {
                    s.knowledge.supersede(id, existing, &reason, now)?;
                }
                _ => {}
            }
            Ok(id)
        })?;
        Ok((id, verdict))
    }

    /// Resolves the query label (oracle, classifier hook, heuristic) and
    /// dispatches it. Read-only.
    pub fn query(
        &self,
        text: &str,
        oracle: Option<LayerLabel>,
        scope: RouteScope,
        k: usize,
    ) -> Result<(RoutedQuery, Vec<Answer>)> {
        let q = RoutedQuery::resolve(text, oracle, &self.hooks, &self.config.router)?;
        let answers = router::route(
            &q,
            &self.stores,
            &self.hooks,
            &self.config.router,
            self.config.fusion,
            scope,
            k,
            self.now(),
        )?;
        Ok((q, answers))
    }

    /// Runs one consolidation cycle as a single write across all stores.
    pub fn consolidate(&mut self) -> Result<CycleReport> {
        let hooks = self.hooks.clone();
        let patterns = self.config.consolidation;
        let gate = self.config.gate;
        self.write(|s, now| dreamcycle::run_cycle(s, &hooks, &patterns, &gate, now))
    }
}

fn acquire_lock(dir: &Path) -> Result<File> {
    let file = File::options()
        .create(true)
        .truncate(false)
        .write(true)
        .open(dir.join(LOCK_FILE))?;
    match file.try_lock() {
        Ok(()) => Ok(file),
        Err(fs::TryLockError::WouldBlock) => Err(Error::Locked(dir.to_path_buf())),
        Err(fs::TryLockError::Error(e)) => Err(e.into()),
    }
}

fn load_stores(dir: &Path, config: &EngineConfig, records: &[LogRecord]) -> Result<Stores> {
    let last_seq = records.last().map_or(0, |r| r.seq);
    let (mut stores, from_seq) = match storage::newest_valid_snapshot(dir, last_seq)? {
        Some(snap) => (Stores::from_state(config, snap.state)?, snap.as_of_seq),
        None => (Stores::empty(config)?, 0),
    };
    for r in records.iter().filter(|r| r.seq > from_seq) {
        stores.apply(&r.decode()?)?;
    }
    Ok(stores)
}
