//! Single-source unicast dissemination.
//!
//! All k tokens start at one source, which labels them by ascending id.
//! Complete nodes announce completeness (once per peer) and answer the
//! previous round's requests; incomplete nodes spread token requests over
//! their edges to known-complete neighbors, new edges first, then idle, then
//! contributive, one distinct request per edge.

use std::collections::{BTreeMap, BTreeSet};

use fixedbitset::FixedBitSet;

use crate::engine::{Message, MessageKind};
use crate::protocol::{
    request_priority_order, EdgeClass, Inbox, Mode, NeighborTracker, Protocol,
};
use crate::{NodeId, TokenId};

struct NodeState {
    known: FixedBitSet,
    known_count: u32,
    complete: bool,
    /// R_v: peers this node told about its completeness.
    informed: BTreeSet<NodeId>,
    /// Neighbors known to be complete (announced to us).
    known_complete: BTreeSet<NodeId>,
    tracker: NeighborTracker,
    /// (insertion epoch, class) per classified edge, for the
    /// no-NEW-to-IDLE soundness check.
    last_class: BTreeMap<NodeId, (u64, EdgeClass)>,
    /// Requests sent last round: peer -> token.
    pending_out: BTreeMap<NodeId, TokenId>,
    /// Cursor below which every token is known.
    cursor: u32,
}

pub struct SingleSource {
    n: u32,
    k: u32,
    source: NodeId,
    nodes: Vec<NodeState>,
    /// Classified edges that went NEW -> IDLE without a reinsertion. Zero on
    /// 3-edge-stable traces.
    pub new_to_idle_transitions: u64,
}

impl SingleSource {
    pub fn new(n: u32, k: u32, source: NodeId) -> Self {
        let nodes = (0..n)
            .map(|v| {
                let mut known = FixedBitSet::with_capacity(k as usize);
                let at_source = v == source;
                if at_source {
                    known.insert_range(..);
                }
                NodeState {
                    known,
                    known_count: if at_source { k } else { 0 },
                    complete: at_source,
                    informed: BTreeSet::new(),
                    known_complete: BTreeSet::new(),
                    tracker: NeighborTracker::default(),
                    last_class: BTreeMap::new(),
                    pending_out: BTreeMap::new(),
                    cursor: 0,
                }
            })
            .collect();
        SingleSource {
            n,
            k,
            source,
            nodes,
            new_to_idle_transitions: 0,
        }
    }
}

impl Protocol for SingleSource {
    fn name(&self) -> &'static str {
        "single-source"
    }

    fn mode(&self) -> Mode {
        Mode::Unicast
    }

    fn step_unicast(
        &mut self,
        round: u64,
        neighbors: &[Vec<NodeId>],
        inboxes: &[Inbox],
    ) -> Vec<Message> {
        let mut out = Vec::new();
        for v in 0..self.n {
            let st = &mut self.nodes[v as usize];
            let nbrs = &neighbors[v as usize];
            st.tracker.observe(round, nbrs);

            let mut requests_in: Vec<(NodeId, TokenId)> = Vec::new();
            for &(src, kind) in &inboxes[v as usize] {
                match kind {
                    MessageKind::Completeness { .. } => {
                        st.known_complete.insert(src);
                    }
                    MessageKind::Token(t) => {
                        if !st.known.contains(t as usize) {
                            st.known.insert(t as usize);
                            st.known_count += 1;
                        }
                        st.tracker.mark_crossed(src, self.source, round - 1);
                    }
                    MessageKind::Request { rank, .. } => {
                        requests_in.push((src, rank));
                    }
                    _ => {}
                }
            }
            if st.known_count == self.k {
                st.complete = true;
                st.pending_out.clear();
            }

            if st.complete {
                for &u in nbrs {
                    if st.informed.insert(u) {
                        out.push(Message {
                            src: v,
                            dst: u,
                            kind: MessageKind::Completeness {
                                origin: self.source,
                                count: self.k,
                            },
                        });
                    } else if let Some(&(_, t)) = requests_in.iter().find(|&&(w, _)| w == u) {
                        // Token ids are the source's labels, so the requested
                        // rank is the token itself.
                        out.push(Message {
                            src: v,
                            dst: u,
                            kind: MessageKind::Token(t),
                        });
                    }
                }
                continue;
            }

            // Tokens already on their way over surviving edges are excluded
            // from the missing set this round.
            let anticipated: BTreeSet<TokenId> = st
                .pending_out
                .iter()
                .filter(|(u, _)| nbrs.binary_search(u).is_ok())
                .map(|(_, &t)| t)
                .collect();

            let eligible: Vec<NodeId> = nbrs
                .iter()
                .copied()
                .filter(|u| st.known_complete.contains(u))
                .collect();
            let order =
                request_priority_order(&st.tracker, round, self.source, eligible.iter().copied());

            // Classification soundness bookkeeping.
            for &u in &eligible {
                let info = &st.tracker.edges[&u];
                let class = info.classify(round, self.source);
                if let Some(&(epoch, prev)) = st.last_class.get(&u) {
                    if epoch == info.inserted && prev == EdgeClass::New && class == EdgeClass::Idle
                    {
                        self.new_to_idle_transitions += 1;
                    }
                }
                st.last_class.insert(u, (info.inserted, class));
            }

            while st.cursor < self.k && st.known.contains(st.cursor as usize) {
                st.cursor += 1;
            }
            let mut next = st.cursor;
            let mut new_pending = BTreeMap::new();
            for u in order {
                while next < self.k
                    && (st.known.contains(next as usize) || anticipated.contains(&next))
                {
                    next += 1;
                }
                if next >= self.k {
                    break;
                }
                out.push(Message {
                    src: v,
                    dst: u,
                    kind: MessageKind::Request {
                        origin: self.source,
                        rank: next,
                    },
                });
                new_pending.insert(u, next);
                next += 1;
            }
            st.pending_out = new_pending;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_starts_complete() {
        let p = SingleSource::new(3, 2, 0);
        assert!(p.nodes[0].complete);
        assert!(!p.nodes[1].complete);
    }

    #[test]
    fn round_one_announces_only() {
        let mut p = SingleSource::new(3, 1, 0);
        let neighbors = vec![vec![1], vec![0, 2], vec![1]];
        let inboxes: Vec<Inbox> = vec![Vec::new(); 3];
        let msgs = p.step_unicast(1, &neighbors, &inboxes);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].src, 0);
        assert_eq!(msgs[0].dst, 1);
        assert!(matches!(msgs[0].kind, MessageKind::Completeness { .. }));
    }

    #[test]
    fn incomplete_node_requests_from_known_complete() {
        let mut p = SingleSource::new(3, 1, 0);
        let neighbors = vec![vec![1], vec![0, 2], vec![1]];
        let empty: Vec<Inbox> = vec![Vec::new(); 3];
        p.step_unicast(1, &neighbors, &empty);
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); 3];
        inboxes[1].push((
            0,
            MessageKind::Completeness {
                origin: 0,
                count: 1,
            },
        ));
        let msgs = p.step_unicast(2, &neighbors, &inboxes);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].src, 1);
        assert_eq!(msgs[0].dst, 0);
        assert_eq!(msgs[0].kind, MessageKind::Request { origin: 0, rank: 0 });
    }

    #[test]
    fn anticipated_tokens_are_not_rerequested() {
        let mut p = SingleSource::new(2, 1, 0);
        let neighbors = vec![vec![1], vec![0]];
        let empty: Vec<Inbox> = vec![Vec::new(); 2];
        p.step_unicast(1, &neighbors, &empty);
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); 2];
        inboxes[1].push((
            0,
            MessageKind::Completeness {
                origin: 0,
                count: 1,
            },
        ));
        let msgs = p.step_unicast(2, &neighbors, &inboxes);
        assert_eq!(msgs.len(), 1); // the request
        // Round 3: request is in flight over a surviving edge; node 1 must
        // stay silent while the source answers.
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); 2];
        inboxes[0].push((1, MessageKind::Request { origin: 0, rank: 0 }));
        let msgs = p.step_unicast(3, &neighbors, &inboxes);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].kind, MessageKind::Token(0));
    }
}
