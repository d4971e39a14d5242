//! Oblivious multi-source dissemination (center election + lazy random walk).
//!
//! Meant for oblivious adversaries only: randomness would leak to an adaptive
//! one. With few sources (s <= s_threshold) the protocol is plain
//! multi-source. Otherwise tokens are first concentrated on ~f randomly
//! elected centers: for ell rounds each token at a low-degree non-center
//! takes a lazy walk step on the virtual n-regular multigraph (move with
//! probability d(u)/n, then a uniform incident edge, skipped if the directed
//! edge is already carrying a walk token this round), while high-degree
//! (d >= gamma) holders hand one token to each neighboring center. Tokens
//! reaching a center stop there. Phase 2 is multi-source with the
//! token-owning centers as sources; holders of tokens still in transit are
//! promoted to centers so the hand-off is total.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Message, MessageKind};
use crate::protocol::{
    Inbox, Mode, MultiSource, NodeWalkStats, ObliviousParams, Protocol, WalkSummary,
};
use crate::rng::{node_rng, stream_rng, STREAM_ELECTION};
use crate::{NodeId, TokenId};

enum Inner {
    /// s <= s_threshold: multi-source from round 1.
    Delegate(MultiSource),
    Phased(Phased),
}

pub struct ObliviousMultiSource {
    inner: Inner,
}

struct Phased {
    n: u32,
    k: u32,
    params: ObliviousParams,
    centers: Vec<bool>,
    /// Tokens currently held (walking or settled) per node.
    held: Vec<BTreeSet<TokenId>>,
    /// Tokens already at a center.
    settled: u64,
    /// Centers this node has received a CenterAnnounce from.
    known_centers: Vec<BTreeSet<NodeId>>,
    /// Last round's neighbor set, to detect edge insertions for announces.
    prev_nbrs: Vec<Vec<NodeId>>,
    rngs: Vec<ChaCha8Rng>,
    stats: Vec<NodeWalkStats>,
    elected: u64,
    promoted_tokens: u64,
    phase1_rounds: u64,
    /// Phase-2 protocol and the absolute round at which it started (its own
    /// round numbering restarts at 1).
    phase2: Option<(MultiSource, u64)>,
}

impl ObliviousMultiSource {
    /// `sources` as in [`MultiSource::new`]; `k` is the total token count,
    /// known to all nodes up front.
    pub fn new(
        n: u32,
        k: u32,
        sources: &[(NodeId, Vec<TokenId>)],
        params: ObliviousParams,
        run_seed: u64,
    ) -> Self {
        if sources.len() as u64 <= params.s_threshold {
            return ObliviousMultiSource {
                inner: Inner::Delegate(MultiSource::new(n, sources)),
            };
        }
        let mut election = stream_rng(run_seed, STREAM_ELECTION);
        let p = f64::from(params.f) / f64::from(n);
        let centers: Vec<bool> = (0..n).map(|_| election.random_bool(p)).collect();
        let elected = centers.iter().filter(|&&c| c).count() as u64;
        let mut held: Vec<BTreeSet<TokenId>> = vec![BTreeSet::new(); n as usize];
        let mut settled = 0u64;
        for (x, tokens) in sources {
            held[*x as usize].extend(tokens.iter().copied());
            if centers[*x as usize] {
                settled += tokens.len() as u64;
            }
        }
        ObliviousMultiSource {
            inner: Inner::Phased(Phased {
                n,
                k,
                params,
                centers,
                held,
                settled,
                known_centers: vec![BTreeSet::new(); n as usize],
                prev_nbrs: vec![Vec::new(); n as usize],
                rngs: (0..n).map(|v| node_rng(run_seed, v)).collect(),
                stats: vec![NodeWalkStats::default(); n as usize],
                elected,
                promoted_tokens: 0,
                phase1_rounds: 0,
                phase2: None,
            }),
        }
    }
}

impl Phased {
    fn step(&mut self, round: u64, neighbors: &[Vec<NodeId>], inboxes: &[Inbox]) -> Vec<Message> {
        if let Some((multi, start)) = &mut self.phase2 {
            return multi.step_unicast(round - *start + 1, neighbors, inboxes);
        }

        // Settle walk deliveries from the previous round before deciding
        // whether phase 1 is over.
        for v in 0..self.n as usize {
            for &(src, kind) in &inboxes[v] {
                match kind {
                    MessageKind::WalkToken(t) => {
                        self.held[v].insert(t);
                        if self.centers[v] {
                            self.settled += 1;
                        }
                    }
                    MessageKind::CenterAnnounce => {
                        self.known_centers[v].insert(src);
                    }
                    _ => {}
                }
            }
        }

        // All tokens at centers, or the walk budget is spent: hand off.
        if self.settled == u64::from(self.k) || round > self.params.ell {
            self.phase1_rounds = round - 1;
            for v in 0..self.n as usize {
                if !self.centers[v] && !self.held[v].is_empty() {
                    self.centers[v] = true;
                    self.promoted_tokens += self.held[v].len() as u64;
                }
            }
            let sources: Vec<(NodeId, Vec<TokenId>)> = self
                .held
                .iter()
                .enumerate()
                .filter(|(_, tokens)| !tokens.is_empty())
                .map(|(v, tokens)| (v as NodeId, tokens.iter().copied().collect()))
                .collect();
            let mut multi = MultiSource::new(self.n, &sources);
            let empty: Vec<Inbox> = vec![Vec::new(); self.n as usize];
            let out = multi.step_unicast(1, neighbors, &empty);
            self.phase2 = Some((multi, round));
            return out;
        }

        let mut out = Vec::new();
        for v in 0..self.n as usize {
            let nbrs = &neighbors[v];

            // Centers announce themselves over every newly inserted edge.
            if self.centers[v] {
                for &u in nbrs {
                    if self.prev_nbrs[v].binary_search(&u).is_err() {
                        out.push(Message {
                            src: v as NodeId,
                            dst: u,
                            kind: MessageKind::CenterAnnounce,
                        });
                    }
                }
                self.prev_nbrs[v] = nbrs.clone();
                continue;
            }
            self.prev_nbrs[v] = nbrs.clone();

            if self.held[v].is_empty() || nbrs.is_empty() {
                continue;
            }
            let d = nbrs.len() as u64;
            let tokens: Vec<TokenId> = self.held[v].iter().copied().collect();
            if d >= self.params.gamma {
                // High degree: one token to each neighboring center.
                let centers_adj: Vec<NodeId> = nbrs
                    .iter()
                    .copied()
                    .filter(|u| self.known_centers[v].contains(u))
                    .collect();
                for (&u, &t) in centers_adj.iter().zip(tokens.iter()) {
                    self.held[v].remove(&t);
                    out.push(Message {
                        src: v as NodeId,
                        dst: u,
                        kind: MessageKind::WalkToken(t),
                    });
                }
            } else {
                // Low degree: lazy walk step per token, one walk token per
                // directed edge per round.
                let p = d as f64 / f64::from(self.n);
                let mut used: BTreeSet<NodeId> = BTreeSet::new();
                for t in tokens {
                    let st = &mut self.stats[v];
                    st.trials += 1;
                    st.expected += p;
                    st.variance += p * (1.0 - p);
                    if !self.rngs[v].random_bool(p) {
                        continue;
                    }
                    st.moves += 1;
                    let u = nbrs[self.rngs[v].random_range(0..nbrs.len())];
                    if used.insert(u) {
                        self.held[v].remove(&t);
                        out.push(Message {
                            src: v as NodeId,
                            dst: u,
                            kind: MessageKind::WalkToken(t),
                        });
                    }
                }
            }
        }
        out
    }
}

impl Protocol for ObliviousMultiSource {
    fn name(&self) -> &'static str {
        "oblivious-multi"
    }

    fn mode(&self) -> Mode {
        Mode::Unicast
    }

    fn requires_oblivious_adversary(&self) -> bool {
        true
    }

    fn step_unicast(
        &mut self,
        round: u64,
        neighbors: &[Vec<NodeId>],
        inboxes: &[Inbox],
    ) -> Vec<Message> {
        match &mut self.inner {
            Inner::Delegate(multi) => multi.step_unicast(round, neighbors, inboxes),
            Inner::Phased(p) => p.step(round, neighbors, inboxes),
        }
    }

    fn walk_summary(&self) -> Option<WalkSummary> {
        match &self.inner {
            Inner::Delegate(_) => None,
            Inner::Phased(p) => Some(WalkSummary {
                centers: p.elected,
                promoted_tokens: p.promoted_tokens,
                phase1_rounds: p.phase1_rounds,
                per_node: p.stats.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::oblivious_params;
    use crate::protocol::ObliviousOverrides;

    fn params(f: u32, ell: u64, s_threshold: u64) -> ObliviousParams {
        oblivious_params(
            8,
            4,
            &ObliviousOverrides {
                f: Some(f),
                ell: Some(ell),
                s_threshold: Some(s_threshold),
                ..Default::default()
            },
        )
    }

    #[test]
    fn few_sources_delegate_to_multi_source() {
        let p = ObliviousMultiSource::new(8, 2, &[(0, vec![0]), (1, vec![1])], params(2, 10, 4), 1);
        assert!(matches!(p.inner, Inner::Delegate(_)));
        assert!(p.walk_summary().is_none());
    }

    #[test]
    fn all_centers_skip_phase_one() {
        // f = n: every node is a center, every token settled at round 0.
        let sources: Vec<(NodeId, Vec<TokenId>)> = (0..8).map(|v| (v, vec![v])).collect();
        let mut p = ObliviousMultiSource::new(8, 8, &sources, params(8, 100, 0), 1);
        let ring: Vec<Vec<NodeId>> = (0..8u32)
            .map(|v| {
                let mut ns = vec![(v + 1) % 8, (v + 7) % 8];
                ns.sort_unstable();
                ns
            })
            .collect();
        let empty: Vec<Inbox> = vec![Vec::new(); 8];
        let msgs = p.step_unicast(1, &ring, &empty);
        let summary = p.walk_summary().unwrap();
        assert_eq!(summary.phase1_rounds, 0);
        assert_eq!(summary.centers, 8);
        assert_eq!(summary.promoted_tokens, 0);
        // Round 1 is already multi-source: completeness announcements only.
        assert!(msgs
            .iter()
            .all(|m| matches!(m.kind, MessageKind::Completeness { .. })));
    }

    #[test]
    fn high_degree_node_sends_one_token_per_neighboring_center() {
        // gamma = 1 so node 0 is high-degree; it knows centers 1 and 2 and
        // holds 3 tokens: exactly two walk tokens go out.
        let sources = vec![(0, vec![0, 1, 2]), (5, vec![3]), (6, vec![4]), (7, vec![5])];
        let mut params = params(2, 100, 0);
        params.gamma = 1;
        let mut p = ObliviousMultiSource::new(8, 6, &sources, params, 1);
        let phased = match &mut p.inner {
            Inner::Phased(ph) => ph,
            _ => panic!("expected phased mode"),
        };
        phased.centers = vec![false, true, true, false, false, false, false, false];
        phased.settled = 0;
        phased.known_centers[0] = [1, 2].into_iter().collect();
        let star: Vec<Vec<NodeId>> = vec![
            vec![1, 2, 3, 4, 5, 6, 7],
            vec![0],
            vec![0],
            vec![0],
            vec![0],
            vec![0],
            vec![0],
            vec![0],
        ];
        let empty: Vec<Inbox> = vec![Vec::new(); 8];
        let msgs = p.step_unicast(1, &star, &empty);
        let walks: Vec<_> = msgs
            .iter()
            .filter(|m| m.src == 0 && matches!(m.kind, MessageKind::WalkToken(_)))
            .collect();
        assert_eq!(walks.len(), 2);
        let dsts: BTreeSet<NodeId> = walks.iter().map(|m| m.dst).collect();
        assert_eq!(dsts, [1, 2].into_iter().collect());
    }

    #[test]
    fn promotion_covers_in_flight_tokens() {
        // ell = 1 and nobody is a center: after one walk round every holder
        // is promoted and phase 2 sources own all tokens.
        let sources = vec![(0, vec![0]), (1, vec![1]), (2, vec![2]), (3, vec![3])];
        let mut p = ObliviousMultiSource::new(4, 4, &sources, params(1, 1, 0), 3);
        if let Inner::Phased(ph) = &mut p.inner {
            ph.centers = vec![false; 4];
            ph.settled = 0;
            ph.elected = 0;
        }
        let path: Vec<Vec<NodeId>> = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let empty: Vec<Inbox> = vec![Vec::new(); 4];
        let sent = p.step_unicast(1, &path, &empty);
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); 4];
        for m in sent {
            inboxes[m.dst as usize].push((m.src, m.kind));
        }
        p.step_unicast(2, &path, &inboxes);
        let summary = p.walk_summary().unwrap();
        assert_eq!(summary.phase1_rounds, 1);
        assert_eq!(summary.promoted_tokens, 4);
    }
}
