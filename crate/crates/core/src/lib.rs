//! Layered persistence for agents: a knowledge store with supersession, a
//! decaying bi-temporal memory store, an evidence-gated wisdom store, a
//! router over the three, an offline consolidation pass, and one
//! append-only log underneath. Everything is deterministic and local.

// `!(x > 0.0)` style checks are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod dreamcycle;
pub mod engine;
pub mod error;
pub mod hooks;
pub mod ids;
pub mod knowledge;
pub mod memory;
pub mod retrieval;
pub mod router;
pub mod storage;
pub mod temporal;
pub mod wisdom;
