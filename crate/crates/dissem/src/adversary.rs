//! Adversaries: per-round topology control under three information regimes.
//!
//! An oblivious adversary replays a pre-committed trace and never reads node
//! state. The free-edge adversary is the strongly adaptive broadcast
//! construction: it sees this round's broadcast assignment and keeps the
//! graph saturated with edges that cannot grow the knowledge potential,
//! plus the minimum connectors. The idle-cutter is an adaptive unicast
//! stressor that tears down request-carrying edges as soon as the stability
//! constraint allows.

use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;

use crate::dsu::Dsu;
use crate::graph::{
    edge, random_connected, DynamicGraphTrace, Edge, EdgeSet, GeneratorSpec, TraceStream,
};
use crate::lowerbound::{free_graph, potential, sample_kprime};
use crate::rng::{stream_rng, STREAM_ADVERSARY, STREAM_KPRIME};
use crate::{Error, NodeId, Result, TokenId};

/// What the engine exposes to the adversary when asking for round `round`.
/// Oblivious adversaries must ignore everything but the round index.
pub struct Observables<'a> {
    pub round: u64,
    /// This round's broadcast intents (broadcast mode only), fixed before the
    /// topology: the strongly adaptive adversary sees them.
    pub broadcast_assignment: Option<&'a [Option<TokenId>]>,
    /// Current per-node token knowledge.
    pub holdings: &'a [FixedBitSet],
    /// Undirected edges that carried at least one Request last round.
    pub last_request_edges: &'a EdgeSet,
}

pub trait Adversary {
    fn name(&self) -> String;

    /// True iff the edge sequence is a pure function of (seed, round).
    fn is_oblivious(&self) -> bool;

    fn next_round(&mut self, obs: &Observables<'_>) -> Result<EdgeSet>;
}

/// Replays a pre-committed trace. Past the trace horizon it either freezes
/// the final graph (default) or reports exhaustion.
pub struct ObliviousTrace {
    trace: DynamicGraphTrace,
    freeze_on_exhaustion: bool,
}

impl ObliviousTrace {
    pub fn new(trace: DynamicGraphTrace) -> Self {
        ObliviousTrace {
            trace,
            freeze_on_exhaustion: true,
        }
    }

    /// Error out instead of freezing when the trace runs out.
    pub fn strict(trace: DynamicGraphTrace) -> Self {
        ObliviousTrace {
            trace,
            freeze_on_exhaustion: false,
        }
    }

    pub fn trace(&self) -> &DynamicGraphTrace {
        &self.trace
    }
}

impl Adversary for ObliviousTrace {
    fn name(&self) -> String {
        self.trace.meta.generator.clone()
    }

    fn is_oblivious(&self) -> bool {
        true
    }

    fn next_round(&mut self, obs: &Observables<'_>) -> Result<EdgeSet> {
        let x = self.trace.horizon();
        if obs.round <= x {
            Ok(self.trace.edges(obs.round).clone())
        } else if self.freeze_on_exhaustion {
            Ok(self.trace.edges(x).clone())
        } else {
            Err(Error::RoundOutOfRange {
                round: obs.round,
                rounds: x,
            })
        }
    }
}

/// An oblivious adversary generating its pre-committed trace lazily: the
/// edge sequence is a pure function of the generator spec, produced round by
/// round so long horizons never materialize a full trace.
pub struct GeneratedTrace {
    stream: TraceStream,
    produced: u64,
}

impl GeneratedTrace {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        Ok(GeneratedTrace {
            stream: TraceStream::new(spec)?,
            produced: 0,
        })
    }
}

impl Adversary for GeneratedTrace {
    fn name(&self) -> String {
        self.stream.family().name().into()
    }

    fn is_oblivious(&self) -> bool {
        true
    }

    fn next_round(&mut self, obs: &Observables<'_>) -> Result<EdgeSet> {
        if obs.round != self.produced + 1 {
            return Err(Error::Config(format!(
                "generated trace asked for round {} after round {}",
                obs.round, self.produced
            )));
        }
        self.produced = obs.round;
        Ok(self.stream.next_round())
    }
}

/// The broadcast lower-bound adversary: every free edge — one whose two
/// endpoints' broadcasts cannot teach the other endpoint anything outside
/// K ∪ K′ — plus exactly components−1 connectors between the free graph's
/// components (minimum-id representatives, ascending).
pub struct FreeEdge {
    n: u32,
    kprime: Vec<FixedBitSet>,
    /// (potential at the previous call, component count it answered with),
    /// for the growth-cap self check.
    prev: Option<(u64, usize)>,
}

impl FreeEdge {
    /// K′ sampled per (node, token) with probability 1/4 from the dedicated
    /// stream of `run_seed`.
    pub fn new(n: u32, k: u32, run_seed: u64) -> Self {
        let mut rng = stream_rng(run_seed, STREAM_KPRIME);
        FreeEdge {
            n,
            kprime: sample_kprime(n, k, 0.25, &mut rng),
            prev: None,
        }
    }

    pub fn with_kprime(n: u32, kprime: Vec<FixedBitSet>) -> Self {
        FreeEdge {
            n,
            kprime,
            prev: None,
        }
    }
}

impl Adversary for FreeEdge {
    fn name(&self) -> String {
        "freeedge".into()
    }

    fn is_oblivious(&self) -> bool {
        false
    }

    fn next_round(&mut self, obs: &Observables<'_>) -> Result<EdgeSet> {
        let assignment = obs.broadcast_assignment.ok_or_else(|| {
            Error::Config("the free-edge adversary is defined for broadcast mode only".into())
        })?;
        // Growth since the last call may not exceed 2(l-1) for the component
        // count l we answered with; anything else is a construction bug.
        let phi = potential(obs.holdings, &self.kprime);
        if let Some((phi_prev, ell_prev)) = self.prev {
            let cap = 2 * (ell_prev as u64 - 1);
            if phi - phi_prev > cap {
                return Err(Error::ConstructionBug(format!(
                    "round {}: potential grew by {} > cap {}",
                    obs.round,
                    phi - phi_prev,
                    cap
                )));
            }
        }

        let (mut edges, ell) = free_graph(assignment, obs.holdings, &self.kprime);
        if ell > 1 {
            let mut dsu = Dsu::new(self.n as usize);
            for &(u, v) in &edges {
                dsu.union(u, v);
            }
            let reps = dsu.representatives();
            for pair in reps.windows(2) {
                edges.insert(edge(pair[0], pair[1]));
            }
        }
        self.prev = Some((phi, ell));
        Ok(edges)
    }
}

/// Adaptive unicast stressor: starting from a random connected graph, each
/// round it removes every edge that carried a Request last round and is old
/// enough to remove under sigma-stability, then restores connectivity with
/// random bridging edges.
pub struct IdleCutter {
    n: u32,
    sigma: u64,
    target: usize,
    rng: ChaCha8Rng,
    cur: EdgeSet,
    /// Insertion round per live edge.
    born: BTreeMap<Edge, u64>,
}

impl IdleCutter {
    pub fn new(n: u32, sigma: u64, run_seed: u64) -> Self {
        assert!(sigma >= 1);
        let max = n as usize * (n as usize).saturating_sub(1) / 2;
        let target = ((0.15 * max as f64).round() as usize)
            .max((n as usize).saturating_sub(1))
            .min(max);
        IdleCutter {
            n,
            sigma,
            target,
            rng: stream_rng(run_seed, STREAM_ADVERSARY),
            cur: EdgeSet::new(),
            born: BTreeMap::new(),
        }
    }
}

impl Adversary for IdleCutter {
    fn name(&self) -> String {
        "idle-cutter".into()
    }

    fn is_oblivious(&self) -> bool {
        false
    }

    fn next_round(&mut self, obs: &Observables<'_>) -> Result<EdgeSet> {
        let r = obs.round;
        if r == 1 {
            self.cur = random_connected(self.n, self.target, &mut self.rng);
            self.born = self.cur.iter().map(|&e| (e, 1)).collect();
            return Ok(self.cur.clone());
        }

        let mut removed = EdgeSet::new();
        for &e in obs.last_request_edges {
            if self.cur.contains(&e) && r - self.born[&e] >= self.sigma {
                self.cur.remove(&e);
                self.born.remove(&e);
                removed.insert(e);
            }
        }

        let mut dsu = Dsu::new(self.n as usize);
        for &(u, v) in &self.cur {
            dsu.union(u, v);
        }
        if dsu.components() > 1 {
            let mut groups: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
            for v in 0..self.n {
                let root = dsu.find(v);
                groups.entry(root).or_default().push(v);
            }
            let groups: Vec<Vec<NodeId>> = groups.into_values().collect();
            for other in &groups[1..] {
                // Random bridge, avoiding re-inserting a just-cut edge (which
                // would undo the cut) if a few tries find an alternative.
                let mut e = edge(
                    *groups[0].choose(&mut self.rng).unwrap(),
                    *other.choose(&mut self.rng).unwrap(),
                );
                for _ in 0..8 {
                    if !removed.contains(&e) {
                        break;
                    }
                    e = edge(
                        *groups[0].choose(&mut self.rng).unwrap(),
                        *other.choose(&mut self.rng).unwrap(),
                    );
                }
                if self.cur.insert(e) {
                    self.born.insert(e, r);
                }
            }
        }
        Ok(self.cur.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, Family, GeneratorSpec};

    fn obs(round: u64) -> Observables<'static> {
        static EMPTY: EdgeSet = EdgeSet::new();
        Observables {
            round,
            broadcast_assignment: None,
            holdings: &[],
            last_request_edges: &EMPTY,
        }
    }

    #[test]
    fn oblivious_replays_and_freezes() {
        let spec = GeneratorSpec::new(Family::RandomChurn, 6, 2, 9);
        let trace = generate(&spec, 5).unwrap();
        let mut adv = ObliviousTrace::new(trace.clone());
        assert_eq!(adv.next_round(&obs(1)).unwrap(), *trace.edges(1));
        assert_eq!(adv.next_round(&obs(5)).unwrap(), *trace.edges(5));
        // Past the horizon: frozen final graph.
        assert_eq!(adv.next_round(&obs(6)).unwrap(), *trace.edges(5));
        let mut strict = ObliviousTrace::strict(trace);
        assert!(matches!(
            strict.next_round(&obs(6)),
            Err(Error::RoundOutOfRange { .. })
        ));
    }

    #[test]
    fn oblivious_ignores_node_state() {
        let spec = GeneratorSpec::new(Family::RandomChurn, 6, 2, 9);
        let mut a = ObliviousTrace::new(generate(&spec, 5).unwrap());
        let mut b = ObliviousTrace::new(generate(&spec, 5).unwrap());
        let holdings = vec![FixedBitSet::with_capacity(3); 6];
        let requests: EdgeSet = [(0, 1)].into_iter().collect();
        let rich = Observables {
            round: 3,
            broadcast_assignment: None,
            holdings: &holdings,
            last_request_edges: &requests,
        };
        assert_eq!(a.next_round(&rich).unwrap(), b.next_round(&obs(3)).unwrap());
    }

    #[test]
    fn freeedge_all_silent_is_complete_graph() {
        let holdings = vec![FixedBitSet::with_capacity(2); 4];
        let mut adv = FreeEdge::with_kprime(4, vec![FixedBitSet::with_capacity(2); 4]);
        let assignment = vec![None; 4];
        let requests = EdgeSet::new();
        let edges = adv
            .next_round(&Observables {
                round: 1,
                broadcast_assignment: Some(&assignment),
                holdings: &holdings,
                last_request_edges: &requests,
            })
            .unwrap();
        assert_eq!(edges.len(), 6);
    }

    #[test]
    fn freeedge_three_node_example() {
        // u=0 broadcasts token 1, v=1 broadcasts token 2, w=2 silent;
        // K_u={1}, K_v={2}, K'_v={1}, K'_w={1}: free = {uw} only, so one
        // connector joins {u,w} and {v}.
        let k = 3;
        let mut holdings = vec![FixedBitSet::with_capacity(k); 3];
        holdings[0].insert(1);
        holdings[1].insert(2);
        let mut kprime = vec![FixedBitSet::with_capacity(k); 3];
        kprime[1].insert(1);
        kprime[2].insert(1);
        let mut adv = FreeEdge::with_kprime(3, kprime);
        let assignment = vec![Some(1), Some(2), None];
        let requests = EdgeSet::new();
        let edges = adv
            .next_round(&Observables {
                round: 1,
                broadcast_assignment: Some(&assignment),
                holdings: &holdings,
                last_request_edges: &requests,
            })
            .unwrap();
        let expected: EdgeSet = [(0, 2), (0, 1)].into_iter().collect();
        assert_eq!(edges, expected);
    }

    #[test]
    fn freeedge_requires_broadcast_mode() {
        let mut adv = FreeEdge::new(4, 2, 1);
        assert!(matches!(adv.next_round(&obs(1)), Err(Error::Config(_))));
    }

    #[test]
    fn idle_cutter_unchanged_without_requests() {
        let mut adv = IdleCutter::new(8, 3, 5);
        let first = adv.next_round(&obs(1)).unwrap();
        let second = adv.next_round(&obs(2)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn idle_cutter_removes_exactly_the_requested_removable_edge() {
        let mut adv = IdleCutter::new(3, 1, 0);
        adv.cur = [(0, 1), (0, 2), (1, 2)].into_iter().collect();
        adv.born = adv.cur.iter().map(|&e| (e, 1)).collect();
        let requests: EdgeSet = [(0, 1)].into_iter().collect();
        let edges = adv
            .next_round(&Observables {
                round: 2,
                broadcast_assignment: None,
                holdings: &[],
                last_request_edges: &requests,
            })
            .unwrap();
        let expected: EdgeSet = [(0, 2), (1, 2)].into_iter().collect();
        assert_eq!(edges, expected);
    }

    #[test]
    fn idle_cutter_retains_young_edges() {
        let mut adv = IdleCutter::new(3, 3, 0);
        adv.cur = [(0, 1), (1, 2)].into_iter().collect();
        adv.born = adv.cur.iter().map(|&e| (e, 1)).collect();
        let requests: EdgeSet = [(0, 1)].into_iter().collect();
        let edges = adv
            .next_round(&Observables {
                round: 2,
                broadcast_assignment: None,
                holdings: &[],
                last_request_edges: &requests,
            })
            .unwrap();
        assert_eq!(edges, adv.cur);
        assert_eq!(edges.len(), 2);
    }
}
