//! Round-synchronous simulator and protocol library for k-token dissemination
//! in adversarial dynamic networks.
//!
//! The library is organized around five pieces:
//!
//! - [`graph`]: dynamic graph traces (per-round edge sets), trace generators,
//!   the line-oriented trace file format, and the connectivity / edge-stability
//!   validators.
//! - [`engine`]: the round loop. It asks the adversary for the round's edge
//!   set, drives the per-node protocol state machines, enforces the bandwidth
//!   rules (one message per directed edge, or one broadcast per node), and
//!   keeps the message ledger and token-learning record.
//! - [`adversary`]: topology strategies — an oblivious adversary replaying a
//!   pre-committed trace, the free-edge adversary for the local-broadcast
//!   model, and an idle-edge-cutting stressor for unicast runs.
//! - [`protocol`]: the four token-forwarding protocols (flooding,
//!   single-source unicast, multi-source unicast, oblivious multi-source with
//!   random-walk source reduction).
//! - [`lowerbound`]: the local-broadcast lower-bound lab — K' sampling, the
//!   knowledge potential, free-edge graphs, and per-round progress caps.

pub mod adversary;
pub mod config;
pub mod dsu;
pub mod engine;
pub mod graph;
pub mod lowerbound;
pub mod protocol;
pub mod rng;

use thiserror::Error;

/// Node identifier, dense in `0..n`.
pub type NodeId = u32;

/// Token identifier, dense in `0..k`.
pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum Error {
    /// The adversary produced an edge set that violates the model (e.g. a
    /// disconnected round graph).
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// A protocol emitted an illegal message (over a non-edge, over-budget on
    /// a directed edge, or a token it does not hold). Fail fast.
    #[error("protocol bug: {0}")]
    ProtocolBug(String),

    /// The free-edge construction violated one of its own caps.
    #[error("construction bug: {0}")]
    ConstructionBug(String),

    #[error("round {round} out of range (trace has {rounds} rounds)")]
    RoundOutOfRange { round: u64, rounds: u64 },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
