//! Multi-source unicast dissemination.
//!
//! Sources a_1 < ... < a_s each own a batch of tokens, labeled by rank within
//! their source. Per round every node runs three tasks: announce completeness
//! with respect to the minimum unannounced source per edge, answer last
//! round's requests, and run the single-source request logic for the minimum
//! source it is not yet complete for. Per directed edge, a token reply wins
//! over an announcement, which wins over a request.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::{Message, MessageKind};
use crate::protocol::{request_priority_order, Inbox, Mode, NeighborTracker, Protocol};
use crate::{NodeId, TokenId};

struct SourceView {
    /// k_x, carried by completeness announcements.
    count: u32,
    /// rank -> global token id, for the ranks received so far.
    have: BTreeMap<u32, TokenId>,
    complete: bool,
    /// R_v(x): peers told about this node's completeness w.r.t. x.
    informed: BTreeSet<NodeId>,
    /// S_v(x): peers that told this node about theirs.
    informed_by: BTreeSet<NodeId>,
    /// Lowest possibly-missing rank.
    cursor: u32,
}

impl SourceView {
    fn empty(count: u32) -> Self {
        SourceView {
            count,
            have: BTreeMap::new(),
            complete: false,
            informed: BTreeSet::new(),
            informed_by: BTreeSet::new(),
            cursor: 0,
        }
    }
}

struct NodeState {
    views: BTreeMap<NodeId, SourceView>,
    tracker: NeighborTracker,
    /// Outstanding requests per peer, oldest first. A reply takes two rounds
    /// to come back, so up to two can be in flight per edge; replies arrive
    /// in request order. Dropped when the edge disappears (the reply is
    /// lost with it).
    pending_out: BTreeMap<NodeId, VecDeque<(NodeId, u32)>>,
}

pub struct MultiSource {
    n: u32,
    nodes: Vec<NodeState>,
}

impl MultiSource {
    /// `sources`: `(source node, its token ids ascending)`, ascending by
    /// source. Every source is complete with respect to itself at time 0.
    pub fn new(n: u32, sources: &[(NodeId, Vec<TokenId>)]) -> Self {
        let mut nodes: Vec<NodeState> = (0..n)
            .map(|_| NodeState {
                views: BTreeMap::new(),
                tracker: NeighborTracker::default(),
                pending_out: BTreeMap::new(),
            })
            .collect();
        for (x, tokens) in sources {
            let mut view = SourceView::empty(tokens.len() as u32);
            for (rank, &t) in tokens.iter().enumerate() {
                view.have.insert(rank as u32, t);
            }
            view.complete = true;
            nodes[*x as usize].views.insert(*x, view);
        }
        MultiSource { n, nodes }
    }
}

impl Protocol for MultiSource {
    fn name(&self) -> &'static str {
        "multi-source"
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

            let mut requests_in: Vec<(NodeId, NodeId, u32)> = Vec::new();
            for &(src, kind) in &inboxes[v as usize] {
                match kind {
                    MessageKind::Completeness { origin, count } => {
                        st.views
                            .entry(origin)
                            .or_insert_with(|| SourceView::empty(count))
                            .informed_by
                            .insert(src);
                    }
                    MessageKind::Token(t) => {
                        let (x, rank) = st
                            .pending_out
                            .get_mut(&src)
                            .and_then(VecDeque::pop_front)
                            .expect("token delivery without a matching request");
                        let view = st.views.get_mut(&x).expect("requested unknown source");
                        view.have.insert(rank, t);
                        if view.have.len() as u32 == view.count {
                            view.complete = true;
                        }
                        st.tracker.mark_crossed(src, x, round - 1);
                    }
                    MessageKind::Request { origin, rank } => {
                        requests_in.push((src, origin, rank));
                    }
                    _ => {}
                }
            }
            // Requests whose edge is gone will never be answered.
            st.pending_out
                .retain(|u, q| !q.is_empty() && nbrs.binary_search(u).is_ok());

            let mut used: BTreeSet<NodeId> = BTreeSet::new();

            // Task 2: answer last round's requests, if still connected.
            for &(w, x, rank) in &requests_in {
                if nbrs.binary_search(&w).is_err() {
                    continue;
                }
                let t = *self.nodes[v as usize].views[&x]
                    .have
                    .get(&rank)
                    .expect("request for a token we do not have");
                out.push(Message {
                    src: v,
                    dst: w,
                    kind: MessageKind::Token(t),
                });
                used.insert(w);
            }

            let st = &mut self.nodes[v as usize];

            // Task 1: per free edge, announce completeness w.r.t. the
            // minimum source the peer has not been told about.
            for &u in nbrs {
                if used.contains(&u) {
                    continue;
                }
                let announce = st
                    .views
                    .iter()
                    .find(|(_, view)| view.complete && !view.informed.contains(&u))
                    .map(|(&x, view)| (x, view.count));
                if let Some((x, count)) = announce {
                    st.views.get_mut(&x).unwrap().informed.insert(u);
                    out.push(Message {
                        src: v,
                        dst: u,
                        kind: MessageKind::Completeness { origin: x, count },
                    });
                    used.insert(u);
                }
            }

            // Task 3: request tokens of the minimum incomplete source some
            // neighbor-side completeness is known for.
            let active = st
                .views
                .iter()
                .find(|(_, view)| !view.complete && !view.informed_by.is_empty())
                .map(|(&x, _)| x);
            if let Some(x) = active {
                let anticipated: BTreeSet<u32> = st
                    .pending_out
                    .values()
                    .flatten()
                    .filter(|&&(sx, _)| sx == x)
                    .map(|&(_, rank)| rank)
                    .collect();
                let view = &st.views[&x];
                let eligible: Vec<NodeId> = nbrs
                    .iter()
                    .copied()
                    .filter(|u| !used.contains(u) && view.informed_by.contains(u))
                    .collect();
                let order =
                    request_priority_order(&st.tracker, round, x, eligible.iter().copied());
                let mut cursor = view.cursor;
                while cursor < view.count && view.have.contains_key(&cursor) {
                    cursor += 1;
                }
                st.views.get_mut(&x).unwrap().cursor = cursor;
                let view = &st.views[&x];
                let mut next = cursor;
                let mut sent: Vec<(NodeId, u32)> = Vec::new();
                for u in order {
                    while next < view.count
                        && (view.have.contains_key(&next) || anticipated.contains(&next))
                    {
                        next += 1;
                    }
                    if next >= view.count {
                        break;
                    }
                    out.push(Message {
                        src: v,
                        dst: u,
                        kind: MessageKind::Request {
                            origin: x,
                            rank: next,
                        },
                    });
                    sent.push((u, next));
                    next += 1;
                }
                for (u, rank) in sent {
                    st.pending_out.entry(u).or_default().push_back((x, rank));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_complete_for_themselves_at_time_zero() {
        let p = MultiSource::new(3, &[(0, vec![0]), (2, vec![1])]);
        assert!(p.nodes[0].views[&0].complete);
        assert!(p.nodes[2].views[&2].complete);
        assert!(p.nodes[1].views.is_empty());
    }

    #[test]
    fn minimum_source_priority_for_requests() {
        // Node 1 has been told about completeness w.r.t. both 0 and 2;
        // it must request from source 0 first.
        let mut p = MultiSource::new(3, &[(0, vec![0]), (2, vec![1])]);
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
        inboxes[1].push((
            2,
            MessageKind::Completeness {
                origin: 2,
                count: 1,
            },
        ));
        let msgs = p.step_unicast(2, &neighbors, &inboxes);
        let reqs: Vec<_> = msgs
            .iter()
            .filter(|m| m.src == 1 && matches!(m.kind, MessageKind::Request { .. }))
            .collect();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].kind, MessageKind::Request { origin: 0, rank: 0 });
    }

    #[test]
    fn announcements_carry_source_and_count() {
        let mut p = MultiSource::new(2, &[(0, vec![0, 1, 2])]);
        let neighbors = vec![vec![1], vec![0]];
        let empty: Vec<Inbox> = vec![Vec::new(); 2];
        let msgs = p.step_unicast(1, &neighbors, &empty);
        assert_eq!(msgs.len(), 1);
        assert_eq!(
            msgs[0].kind,
            MessageKind::Completeness {
                origin: 0,
                count: 3
            }
        );
    }
}
