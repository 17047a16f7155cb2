//! Time representation, injectable clocks, bi-temporal visibility and the
//! decay algebra shared by every store.
//!
//! All instants are UTC milliseconds since the Unix epoch. A "day" is exactly
//! 86 400 000 ms; there is no calendar, DST or leap-second handling.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MILLIS_PER_DAY: u64 = 86_400_000;

/// An instant, in milliseconds since the Unix epoch (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const EPOCH: Timestamp = Timestamp(0);

    pub fn from_millis(ms: u64) -> Self {
        Timestamp(ms)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    /// Elapsed span from `earlier` to `self`, zero if `earlier` is later.
    pub fn since(self, earlier: Timestamp) -> Span {
        Span(self.0.saturating_sub(earlier.0))
    }

    pub fn plus(self, span: Span) -> Timestamp {
        Timestamp(self.0.saturating_add(span.0))
    }

    pub fn minus(self, span: Span) -> Timestamp {
        Timestamp(self.0.saturating_sub(span.0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-negative duration in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Span(pub u64);

impl Span {
    pub const ZERO: Span = Span(0);

    pub fn from_millis(ms: u64) -> Self {
        Span(ms)
    }

    pub fn from_days(days: u64) -> Self {
        Span(days.saturating_mul(MILLIS_PER_DAY))
    }

    /// Fractional days, rounded to the nearest millisecond. Negative or
    /// non-finite input yields zero.
    pub fn from_days_f64(days: f64) -> Self {
        if !days.is_finite() || days <= 0.0 {
            return Span::ZERO;
        }
        Span((days * MILLIS_PER_DAY as f64).round() as u64)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn as_days(self) -> f64 {
        self.0 as f64 / MILLIS_PER_DAY as f64
    }
}

impl std::ops::Add for Span {
    type Output = Span;
    fn add(self, rhs: Span) -> Span {
        Span(self.0.saturating_add(rhs.0))
    }
}

/// Four timestamps separating record time (when the system learned a fact)
/// from validity time (when the fact held in the world). Both windows are
/// half-open: `[created, expired)` and `[valid_from, valid_until)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitemporalStamp {
    pub system_created: Timestamp,
    pub system_expired: Option<Timestamp>,
    pub valid_from: Timestamp,
    pub valid_until: Option<Timestamp>,
}

impl BitemporalStamp {
    /// Both windows open-ended.
    pub fn open(system_created: Timestamp, valid_from: Timestamp) -> Self {
        BitemporalStamp {
            system_created,
            system_expired: None,
            valid_from,
            valid_until: None,
        }
    }

    pub fn new(
        system_created: Timestamp,
        system_expired: Option<Timestamp>,
        valid_from: Timestamp,
        valid_until: Option<Timestamp>,
    ) -> Result<Self> {
        let stamp = BitemporalStamp {
            system_created,
            system_expired,
            valid_from,
            valid_until,
        };
        stamp.validate()?;
        Ok(stamp)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(expired) = self.system_expired {
            if expired < self.system_created {
                return Err(Error::Window(format!(
                    "system_expired {expired} precedes system_created {}",
                    self.system_created
                )));
            }
        }
        if let Some(until) = self.valid_until {
            if until < self.valid_from {
                return Err(Error::Window(format!(
                    "valid_until {until} precedes valid_from {}",
                    self.valid_from
                )));
            }
        }
        Ok(())
    }

    pub fn visible_as_of(&self, system_time: Timestamp, valid_time: Timestamp) -> bool {
        visible_as_of(self, system_time, valid_time)
    }
}

/// True iff the record existed at `system_time` and the fact held at
/// `valid_time`.
pub fn visible_as_of(
    stamp: &BitemporalStamp,
    system_time: Timestamp,
    valid_time: Timestamp,
) -> bool {
    let recorded =
        stamp.system_created <= system_time && stamp.system_expired.is_none_or(|e| e > system_time);
    let valid = stamp.valid_from <= valid_time && stamp.valid_until.is_none_or(|u| u > valid_time);
    recorded && valid
}

/// Source of the current instant. Implementations must be monotone
/// non-decreasing and shareable across threads.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Wall clock, clamped so it never runs backwards within a process.
#[derive(Debug, Default)]
pub struct SystemClock {
    last: AtomicU64,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let prev = self.last.fetch_max(wall, Ordering::SeqCst);
        Timestamp(prev.max(wall))
    }
}

/// Manually driven clock for tests and reproducible runs. `set` never moves
/// time backwards.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        ManualClock {
            now: AtomicU64::new(start.0),
        }
    }

    pub fn set(&self, t: Timestamp) {
        self.now.fetch_max(t.0, Ordering::SeqCst);
    }

    pub fn advance(&self, span: Span) -> Timestamp {
        let prev = self.now.fetch_add(span.0, Ordering::SeqCst);
        Timestamp(prev + span.0)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.now.load(Ordering::SeqCst))
    }
}

/// Clock frozen at a single instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

/// Forgetting-curve parameters for memory facts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub initial_strength: f64,
    pub half_life: Span,
    pub reinforcement_growth: f64,
    pub half_life_cap: Span,
    pub recall_threshold: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            initial_strength: 1.0,
            half_life: Span::from_days(7),
            reinforcement_growth: 2.0,
            half_life_cap: Span::from_days(365),
            recall_threshold: 0.05,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<()> {
        let s0 = self.initial_strength;
        if !(s0 > 0.0 && s0 <= 1.0) {
            return Err(Error::Parameter(format!(
                "initial strength must be in (0, 1], got {s0}"
            )));
        }
        if self.half_life.0 == 0 {
            return Err(Error::Parameter("half-life must be positive".into()));
        }
        if !(self.reinforcement_growth >= 1.0) || !self.reinforcement_growth.is_finite() {
            return Err(Error::Parameter(format!(
                "reinforcement growth must be >= 1, got {}",
                self.reinforcement_growth
            )));
        }
        if self.half_life_cap.0 == 0 {
            return Err(Error::Parameter("half-life cap must be positive".into()));
        }
        let theta = self.recall_threshold;
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::Parameter(format!(
                "recall threshold must be in [0, 1), got {theta}"
            )));
        }
        Ok(())
    }
}

/// Retrievability after `elapsed`: `s0 * 2^(-elapsed / half_life)`.
pub fn retention(s0: f64, elapsed: Span, half_life: Span) -> Result<f64> {
    if half_life.0 == 0 {
        return Err(Error::Parameter("half-life must be positive".into()));
    }
    let exponent = elapsed.0 as f64 / half_life.0 as f64;
    Ok(s0 * (-exponent).exp2())
}

/// Effective half-life after `count` reinforcements: `min(h * g^count, cap)`.
pub fn reinforced_half_life(half_life: Span, count: u32, growth: f64, cap: Span) -> Span {
    let grown = half_life.0 as f64 * growth.powi(count.min(i32::MAX as u32) as i32);
    if !grown.is_finite() || grown >= cap.0 as f64 {
        cap
    } else {
        Span(grown.round() as u64)
    }
}
