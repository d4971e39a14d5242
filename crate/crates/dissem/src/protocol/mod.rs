//! The token-forwarding protocols, as per-node state machines driven by the
//! engine.
//!
//! Node state machines are invoked sequentially within a round and must not
//! read other nodes' state except through delivered messages; everything a
//! protocol struct stores is per-node, indexed by node id.

mod flooding;
mod multi_source;
mod oblivious;
mod params;
mod single_source;

pub use flooding::Flooding;
pub use multi_source::MultiSource;
pub use oblivious::ObliviousMultiSource;
pub use params::{oblivious_params, ObliviousOverrides, ObliviousParams};
pub use single_source::SingleSource;

use crate::engine::{Message, MessageKind};
use crate::{NodeId, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Broadcast,
    Unicast,
}

/// Messages delivered to one node at the end of the previous round.
pub type Inbox = Vec<(NodeId, MessageKind)>;

/// Phase-1 walk instrumentation for the oblivious protocol.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WalkSummary {
    /// Nodes elected as centers at round 0.
    pub centers: u64,
    /// Tokens still in a non-center node's hands at the phase switch, whose
    /// holders were promoted to centers.
    pub promoted_tokens: u64,
    /// Rounds spent in phase 1.
    pub phase1_rounds: u64,
    pub per_node: Vec<NodeWalkStats>,
}

/// Lazy-walk move decisions of one node, against the exact per-round
/// Bernoulli(d/n) law.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeWalkStats {
    /// Token-round decision trials while low-degree.
    pub trials: u64,
    /// Decisions that chose an actual edge over the virtual self-loop.
    pub moves: u64,
    /// Sum of d/n over trials.
    pub expected: f64,
    /// Sum of (d/n)(1 - d/n) over trials.
    pub variance: f64,
}

pub trait Protocol {
    fn name(&self) -> &'static str;

    fn mode(&self) -> Mode;

    /// True for protocols with a fixed send schedule (flooding) that keep
    /// sending after dissemination completes; the engine then runs until
    /// [`Protocol::quiescent`] as well.
    fn run_to_quiescence(&self) -> bool {
        false
    }

    fn quiescent(&self) -> bool {
        true
    }

    /// True if the protocol's guarantees hold only against an oblivious
    /// adversary; the engine rejects adaptive adversaries for it.
    fn requires_oblivious_adversary(&self) -> bool {
        false
    }

    /// Unicast step: per-node messages for this round, given each node's
    /// current neighbor id set and the messages delivered to it at the end of
    /// the previous round. Nodes are processed in ascending id order.
    fn step_unicast(
        &mut self,
        _round: u64,
        _neighbors: &[Vec<NodeId>],
        _inboxes: &[Inbox],
    ) -> Vec<Message> {
        Vec::new()
    }

    /// Broadcast step: each node's token intent for this round, fixed before
    /// the adversary chooses the topology. Nodes do not see their neighbors.
    fn step_broadcast(&mut self, _round: u64, _inboxes: &[Inbox]) -> Vec<Option<TokenId>> {
        Vec::new()
    }

    fn walk_summary(&self) -> Option<WalkSummary> {
        None
    }
}

/// Per-node view of one incident edge, enough to derive the
/// new / contributive / idle classification.
#[derive(Debug, Clone)]
pub(crate) struct EdgeInfo {
    /// Round the edge was (last) inserted, as observed by this node.
    pub inserted: u64,
    /// Sources whose tokens crossed this edge since the last insertion.
    /// Single-source trackers use a single sentinel entry.
    pub crossed: std::collections::BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum EdgeClass {
    New,
    Idle,
    Contributive,
}

impl EdgeInfo {
    pub fn classify(&self, round: u64, source: NodeId) -> EdgeClass {
        if self.inserted + 1 >= round {
            EdgeClass::New
        } else if self.crossed.contains(&source) {
            EdgeClass::Contributive
        } else {
            EdgeClass::Idle
        }
    }
}

/// Tracks a node's incident edges across rounds, detecting insertions from
/// the per-round neighbor sets.
#[derive(Debug, Clone, Default)]
pub(crate) struct NeighborTracker {
    pub edges: std::collections::BTreeMap<NodeId, EdgeInfo>,
}

impl NeighborTracker {
    /// Reconcile with this round's neighbor set. Absent neighbors are
    /// dropped; reappearing ones count as fresh insertions.
    pub fn observe(&mut self, round: u64, neighbors: &[NodeId]) {
        self.edges.retain(|u, _| neighbors.binary_search(u).is_ok());
        for &u in neighbors {
            self.edges.entry(u).or_insert(EdgeInfo {
                inserted: round,
                crossed: Default::default(),
            });
        }
    }

    /// Record a token of `source` crossing the edge to `peer`, if the edge is
    /// still tracked.
    pub fn mark_crossed(&mut self, peer: NodeId, source: NodeId, delivery_round: u64) {
        if let Some(info) = self.edges.get_mut(&peer) {
            if info.inserted <= delivery_round {
                info.crossed.insert(source);
            }
        }
    }
}

/// Order edges for request assignment: NEW first, then IDLE, then
/// CONTRIBUTIVE, ascending neighbor id within each class.
pub(crate) fn request_priority_order(
    tracker: &NeighborTracker,
    round: u64,
    source: NodeId,
    eligible: impl Iterator<Item = NodeId>,
) -> Vec<NodeId> {
    let mut new = Vec::new();
    let mut idle = Vec::new();
    let mut contributive = Vec::new();
    for u in eligible {
        match tracker.edges[&u].classify(round, source) {
            EdgeClass::New => new.push(u),
            EdgeClass::Idle => idle.push(u),
            EdgeClass::Contributive => contributive.push(u),
        }
    }
    new.extend(idle);
    new.extend(contributive);
    new
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_classification() {
        let mut t = NeighborTracker::default();
        t.observe(1, &[1, 2]);
        assert_eq!(t.edges[&1].classify(1, 0), EdgeClass::New);
        t.observe(2, &[1, 2]);
        assert_eq!(t.edges[&1].classify(2, 0), EdgeClass::New);
        t.observe(3, &[1, 2]);
        assert_eq!(t.edges[&1].classify(3, 0), EdgeClass::Idle);
        t.mark_crossed(1, 0, 3);
        assert_eq!(t.edges[&1].classify(4, 0), EdgeClass::Contributive);
        // Reinsertion resets the history.
        t.observe(4, &[2]);
        t.observe(5, &[1, 2]);
        assert_eq!(t.edges[&1].classify(5, 0), EdgeClass::New);
        assert!(t.edges[&1].crossed.is_empty());
    }

    #[test]
    fn priority_order_new_idle_contributive() {
        let mut t = NeighborTracker::default();
        t.observe(1, &[1, 2, 3]);
        t.mark_crossed(2, 0, 1);
        t.observe(5, &[1, 2, 3, 4]);
        // Round 5: 4 is new; 2 is contributive; 1 and 3 are idle.
        let order = request_priority_order(&t, 5, 0, [1, 2, 3, 4].into_iter());
        assert_eq!(order, vec![4, 1, 3, 2]);
    }
}
