//! Durable substrate: one interleaved append-only log for all stores,
//! snapshots of the combined projection, and the canonical serialization
//! used for replay-determinism checks.
//!
//! # Log format (`substrate.log`)
//!
//! One record per line:
//!
//! ```text
//! <seq> <tag> <crc32> <len> <body>\n
//! ```
//!
//! * `seq`: decimal, dense from 1 across the whole file
//! * `tag`: `knowledge` | `memory` | `wisdom` | `meta`
//! * `crc32`: 8 lowercase hex digits, CRC-32 (IEEE) of the body bytes
//! * `len`: decimal byte length of the body
//! * `body`: compact JSON of the event, fields in declaration order
//!
//! A trailing record that is incomplete or fails its checksum is a torn
//! write and is truncated on open. Damage anywhere else is corruption.
//!
//! # Snapshot format (`substrate.snap.<seq>`)
//!
//! ```text
//! strata-snapshot <version> <as_of_seq> <sha256 hex>\n
//! <canonical state bytes>
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeEvent, KnowledgeState};
use crate::memory::{MemoryEvent, MemoryState};
use crate::wisdom::{WisdomEvent, WisdomState};

pub const FORMAT_VERSION: u32 = 1;
pub const LOG_FILE: &str = "substrate.log";
pub const SNAPSHOT_PREFIX: &str = "substrate.snap.";
pub const CONFIG_FILE: &str = "config";
pub const LOCK_FILE: &str = "substrate.lock";
const SNAPSHOT_MAGIC: &str = "strata-snapshot";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreTag {
    Knowledge,
    Memory,
    Wisdom,
    Meta,
}

impl StoreTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StoreTag::Knowledge => "knowledge",
            StoreTag::Memory => "memory",
            StoreTag::Wisdom => "wisdom",
            StoreTag::Meta => "meta",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "knowledge" => Some(StoreTag::Knowledge),
            "memory" => Some(StoreTag::Memory),
            "wisdom" => Some(StoreTag::Wisdom),
            "meta" => Some(StoreTag::Meta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MetaEvent {
    Header { format: u32 },
}

/// A decoded log entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Knowledge(KnowledgeEvent),
    Memory(MemoryEvent),
    Wisdom(WisdomEvent),
    Meta(MetaEvent),
}

impl Record {
    pub fn tag(&self) -> StoreTag {
        match self {
            Record::Knowledge(_) => StoreTag::Knowledge,
            Record::Memory(_) => StoreTag::Memory,
            Record::Wisdom(_) => StoreTag::Wisdom,
            Record::Meta(_) => StoreTag::Meta,
        }
    }

    fn body(&self) -> Result<String> {
        let body = match self {
            Record::Knowledge(e) => serde_json::to_string(e),
            Record::Memory(e) => serde_json::to_string(e),
            Record::Wisdom(e) => serde_json::to_string(e),
            Record::Meta(e) => serde_json::to_string(e),
        };
        body.map_err(|e| Error::Format(format!("cannot encode record: {e}")))
    }
}

/// A framed log entry: sequence number, store tag, checksummed body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub seq: u64,
    pub tag: StoreTag,
    pub body: String,
    pub checksum: u32,
}

impl LogRecord {
    pub fn encode(seq: u64, record: &Record) -> Result<Self> {
        let body = record.body()?;
        Ok(LogRecord {
            seq,
            tag: record.tag(),
            checksum: crc32fast::hash(body.as_bytes()),
            body,
        })
    }

    pub fn decode(&self) -> Result<Record> {
        fn parse<T: for<'de> Deserialize<'de>>(tag: StoreTag, seq: u64, body: &str) -> Result<T> {
            serde_json::from_str(body).map_err(|e| {
                Error::Format(format!(
                    "record {seq}: unknown {} record kind ({e})",
                    tag.as_str()
                ))
            })
        }
        Ok(match self.tag {
            StoreTag::Knowledge => Record::Knowledge(parse(self.tag, self.seq, &self.body)?),
            StoreTag::Memory => Record::Memory(parse(self.tag, self.seq, &self.body)?),
            StoreTag::Wisdom => Record::Wisdom(parse(self.tag, self.seq, &self.body)?),
            StoreTag::Meta => Record::Meta(parse(self.tag, self.seq, &self.body)?),
        })
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {:08x} {} {}\n",
            self.seq,
            self.tag.as_str(),
            self.checksum,
            self.body.len(),
            self.body
        )
    }
}

/// Result of scanning a log: the whole records and the byte length they
/// occupy. `torn` is set when bytes past `valid_len` had to be discarded.
#[derive(Debug, Clone, Default)]
pub struct LogScan {
    pub records: Vec<LogRecord>,
    pub valid_len: u64,
    pub torn: bool,
}

enum Frame {
    Whole(LogRecord, usize),
    Damaged(String, Option<usize>),
    Incomplete,
}

fn parse_frame(buf: &[u8]) -> Frame {
    // header: four space-terminated fields
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        let Some(off) = buf[pos..].iter().position(|&b| b == b' ' || b == b'\n') else {
            return Frame::Incomplete;
        };
        if buf[pos + off] == b'\n' {
            return Frame::Damaged("truncated header".into(), Some(pos + off + 1));
        }
        fields.push(&buf[pos..pos + off]);
        pos += off + 1;
    }
    let text = |b: &[u8]| std::str::from_utf8(b).ok().map(str::to_string);
    let next_newline = |from: usize| {
        buf[from..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|o| from + o + 1)
    };
    let (Some(seq), Some(tag), Some(crc), Some(len)) = (
        text(fields[0]),
        text(fields[1]),
        text(fields[2]),
        text(fields[3]),
    ) else {
        return Frame::Damaged("non-utf8 header".into(), next_newline(pos));
    };
    let (Ok(seq), Some(tag), Ok(crc), Ok(len)) = (
        seq.parse::<u64>(),
        StoreTag::parse(&tag),
        u32::from_str_radix(&crc, 16),
        len.parse::<usize>(),
    ) else {
        return Frame::Damaged(
            format!("bad header `{seq} {tag} {crc} {len}`"),
            next_newline(pos),
        );
    };
    if buf.len() < pos + len + 1 {
        return Frame::Incomplete;
    }
    let body = &buf[pos..pos + len];
    let end = pos + len + 1;
    if buf[pos + len] != b'\n' {
        return Frame::Damaged(
            format!("record {seq}: missing terminator"),
            next_newline(pos),
        );
    }
    if crc32fast::hash(body) != crc {
        return Frame::Damaged(format!("record {seq}: checksum mismatch"), Some(end));
    }
    let Ok(body) = std::str::from_utf8(body) else {
        return Frame::Damaged(format!("record {seq}: body is not utf-8"), Some(end));
    };
    Frame::Whole(
        LogRecord {
            seq,
            tag,
            body: body.to_string(),
            checksum: crc,
        },
        end,
    )
}

/// Parses log bytes. A damaged or incomplete final record is reported as
/// torn; damage followed by further data is corruption.
pub fn scan_log_bytes(buf: &[u8]) -> Result<LogScan> {
    let mut scan = LogScan::default();
    let mut pos = 0usize;
    while pos < buf.len() {
        match parse_frame(&buf[pos..]) {
            Frame::Whole(rec, used) => {
                let expected = scan.records.last().map_or(1, |r| r.seq + 1);
                if rec.seq != expected {
                    return Err(Error::Corrupt(format!(
                        "log seq {} at byte {pos}, expected {expected}",
                        rec.seq
                    )));
                }
                scan.records.push(rec);
                pos += used;
                scan.valid_len = pos as u64;
            }
            Frame::Incomplete => {
                scan.torn = true;
                break;
            }
            Frame::Damaged(why, end) => match end {
                Some(end) if pos + end < buf.len() => {
                    return Err(Error::Corrupt(format!("{why} at byte {pos}")));
                }
                _ => {
                    scan.torn = true;
                    break;
                }
            },
        }
    }
    Ok(scan)
}

pub fn scan_log(path: &Path) -> Result<LogScan> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    scan_log_bytes(&buf)
}

/// Appends framed records; every `append` is flushed and synced before it
/// returns.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
    next_seq: u64,
}

impl LogWriter {
    /// Opens `path` for appending, truncating a torn tail first.
    pub fn open(path: &Path) -> Result<(Self, LogScan)> {
        let scan = if path.exists() {
            scan_log(path)?
        } else {
            LogScan::default()
        };
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)?;
        if scan.torn {
            file.set_len(scan.valid_len)?;
            file.sync_all()?;
        }
        let next_seq = scan.records.last().map_or(1, |r| r.seq + 1);
        Ok((LogWriter { file, next_seq }, scan))
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, records: &[Record]) -> Result<Vec<LogRecord>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let mut framed = Vec::with_capacity(records.len());
        let mut out = String::new();
        for (i, r) in records.iter().enumerate() {
            let rec = LogRecord::encode(self.next_seq + i as u64, r)?;
            out.push_str(&rec.to_line());
            framed.push(rec);
        }
        self.file.write_all(out.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        self.next_seq += records.len() as u64;
        Ok(framed)
    }
}

/// The full projection of all three stores, in canonical field order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubstrateState {
    pub format: u32,
    pub knowledge: KnowledgeState,
    pub memory: MemoryState,
    pub wisdom: WisdomState,
}

/// Borrowed view with the same serialized shape as [`SubstrateState`].
#[derive(Debug, Serialize)]
pub struct StateView<'a> {
    pub format: u32,
    pub knowledge: &'a KnowledgeState,
    pub memory: &'a MemoryState,
    pub wisdom: &'a WisdomState,
}

/// Whitespace-free JSON, fields in declaration order, maps in key order.
pub fn canonical_bytes(view: &StateView<'_>) -> Result<Vec<u8>> {
    serde_json::to_vec(view).map_err(|e| Error::Format(format!("cannot serialize state: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn canonical_hash(view: &StateView<'_>) -> Result<String> {
    Ok(sha256_hex(&canonical_bytes(view)?))
}

pub fn snapshot_path(dir: &Path, seq: u64) -> PathBuf {
    dir.join(format!("{SNAPSHOT_PREFIX}{seq}"))
}

/// Writes a snapshot atomically (temp file + rename). Returns its path.
pub fn write_snapshot(dir: &Path, as_of_seq: u64, view: &StateView<'_>) -> Result<PathBuf> {
    let bytes = canonical_bytes(view)?;
    let hash = sha256_hex(&bytes);
    let path = snapshot_path(dir, as_of_seq);
    let tmp = dir.join(format!(".{SNAPSHOT_PREFIX}{as_of_seq}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{SNAPSHOT_MAGIC} {FORMAT_VERSION} {as_of_seq} {hash}")?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub as_of_seq: u64,
    pub hash: String,
    pub state: SubstrateState,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let buf = fs::read(path)?;
    let nl = buf
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corrupt(format!("{}: no snapshot header", path.display())))?;
    let header = std::str::from_utf8(&buf[..nl])
        .map_err(|_| Error::Corrupt(format!("{}: bad header", path.display())))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != SNAPSHOT_MAGIC {
        return Err(Error::Corrupt(format!("{}: bad header", path.display())));
    }
    if parts[1] != FORMAT_VERSION.to_string() {
        return Err(Error::Format(format!("snapshot format {}", parts[1])));
    }
    let as_of_seq = parts[2]
        .parse()
        .map_err(|_| Error::Corrupt(format!("{}: bad seq", path.display())))?;
    let body = &buf[nl + 1..];
    if sha256_hex(body) != parts[3] {
        return Err(Error::Corrupt(format!("{}: hash mismatch", path.display())));
    }
    let state: SubstrateState = serde_json::from_slice(body)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(Snapshot {
        as_of_seq,
        hash: parts[3].to_string(),
        state,
    })
}

/// Snapshot files in `dir`, newest first.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(seq) = name
            .to_str()
            .and_then(|n| n.strip_prefix(SNAPSHOT_PREFIX))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        out.push((seq, entry.path()));
    }
    out.sort_by_key(|e| std::cmp::Reverse(e.0));
    Ok(out)
}

/// Newest snapshot that verifies and does not run past the log.
pub fn newest_valid_snapshot(dir: &Path, last_seq: u64) -> Result<Option<Snapshot>> {
    for (seq, path) in list_snapshots(dir)? {
        if seq > last_seq {
            continue;
        }
        match read_snapshot(&path) {
            Ok(s) if s.as_of_seq == seq => return Ok(Some(s)),
            _ => continue,
        }
    }
    Ok(None)
}

/// Removes all but the newest `keep` snapshots. Returns how many were removed.
pub fn prune_snapshots(dir: &Path, keep: usize) -> Result<usize> {
    let snaps = list_snapshots(dir)?;
    let mut removed = 0;
    for (_, path) in snaps.into_iter().skip(keep) {
        fs::remove_file(path)?;
        removed += 1;
    }
    Ok(removed)
}
