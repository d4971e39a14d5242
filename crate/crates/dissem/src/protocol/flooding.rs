//! Flooding baseline for the local-broadcast model: each node broadcasts each
//! token it knows for n rounds.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;

use crate::engine::{MessageKind, Placement};
use crate::protocol::{Inbox, Mode, Protocol};
use crate::TokenId;

struct NodeState {
    known: FixedBitSet,
    /// (token, remaining broadcast count) round-robin queue.
    queue: VecDeque<(TokenId, u32)>,
}

pub struct Flooding {
    n: u32,
    nodes: Vec<NodeState>,
}

impl Flooding {
    pub fn new(n: u32, placement: &Placement) -> Self {
        let k = placement.k();
        let mut nodes: Vec<NodeState> = (0..n)
            .map(|_| NodeState {
                known: FixedBitSet::with_capacity(k as usize),
                queue: VecDeque::new(),
            })
            .collect();
        for t in 0..k {
            for &holder in placement.holders(t) {
                let state = &mut nodes[holder as usize];
                if !state.known.contains(t as usize) {
                    state.known.insert(t as usize);
                    state.queue.push_back((t, n));
                }
            }
        }
        Flooding { n, nodes }
    }
}

impl Protocol for Flooding {
    fn name(&self) -> &'static str {
        "flooding"
    }

    fn mode(&self) -> Mode {
        Mode::Broadcast
    }

    fn run_to_quiescence(&self) -> bool {
        true
    }

    fn quiescent(&self) -> bool {
        self.nodes.iter().all(|s| s.queue.is_empty())
    }

    fn step_broadcast(&mut self, _round: u64, inboxes: &[Inbox]) -> Vec<Option<TokenId>> {
        let n = self.n;
        let mut intents = Vec::with_capacity(self.nodes.len());
        for (v, state) in self.nodes.iter_mut().enumerate() {
            // Enqueue tokens first heard last round, ascending token id.
            let mut fresh: Vec<TokenId> = inboxes[v]
                .iter()
                .filter_map(|(_, kind)| match kind {
                    MessageKind::Token(t) if !state.known.contains(*t as usize) => Some(*t),
                    _ => None,
                })
                .collect();
            fresh.sort_unstable();
            fresh.dedup();
            for t in fresh {
                state.known.insert(t as usize);
                state.queue.push_back((t, n));
            }
            // Broadcast the head of the queue, round-robin.
            intents.push(match state.queue.pop_front() {
                Some((t, remaining)) => {
                    if remaining > 1 {
                        state.queue.push_back((t, remaining - 1));
                    }
                    Some(t)
                }
                None => None,
            });
        }
        intents
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcasts_each_token_n_times() {
        let placement = Placement::single(0, 2);
        let mut p = Flooding::new(3, &placement);
        let empty: Vec<Inbox> = vec![Vec::new(); 3];
        let mut count = 0;
        for round in 1..=10 {
            let intents = p.step_broadcast(round, &empty);
            count += intents.iter().flatten().count();
            if p.quiescent() {
                break;
            }
        }
        // Node 0 alone: 2 tokens x 3 broadcasts each.
        assert_eq!(count, 6);
    }

    #[test]
    fn round_robin_alternates_tokens() {
        let placement = Placement::single(0, 2);
        let mut p = Flooding::new(2, &placement);
        let empty: Vec<Inbox> = vec![Vec::new(); 2];
        let seq: Vec<Option<TokenId>> = (1..=4)
            .map(|r| p.step_broadcast(r, &empty)[0])
            .collect();
        assert_eq!(seq, vec![Some(0), Some(1), Some(0), Some(1)]);
    }

    #[test]
    fn learned_tokens_are_enqueued() {
        let placement = Placement::single(0, 1);
        let mut p = Flooding::new(2, &placement);
        let mut inboxes: Vec<Inbox> = vec![Vec::new(); 2];
        inboxes[1].push((0, MessageKind::Token(0)));
        let intents = p.step_broadcast(1, &inboxes);
        assert_eq!(intents, vec![Some(0), Some(0)]);
        assert!(!p.quiescent());
    }
}
