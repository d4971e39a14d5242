//! Dynamic graph traces: the adversary's side of the model.
//!
//! A trace is the per-round sequence of undirected edge sets `E_1..E_x` over a
//! fixed node set `0..n`, with `E_0` implicitly empty. This module holds the
//! trace representation, the round-delta and topological-change accounting,
//! the sigma-edge-stability and connectivity checkers, the trace generators,
//! and the line-oriented trace file format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dsu::Dsu;
use crate::rng;
use crate::{Error, NodeId, Result};

/// Undirected edge as a normalized pair `(u, v)` with `u < v`.
pub type Edge = (NodeId, NodeId);

pub type EdgeSet = BTreeSet<Edge>;

/// Normalize an unordered node pair into an [`Edge`].
pub fn edge(u: NodeId, v: NodeId) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Connectivity over all `n` nodes via union-find.
pub fn is_connected(edges: &EdgeSet, n: u32) -> bool {
    if n <= 1 {
        return true;
    }
    let mut dsu = Dsu::new(n as usize);
    for &(u, v) in edges {
        dsu.union(u, v);
    }
    dsu.components() == 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundDelta {
    /// `E_r \ E_{r-1}`
    pub inserted: EdgeSet,
    /// `E_{r-1} \ E_r`
    pub removed: EdgeSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub generator: String,
    pub seed: u64,
}

/// The per-round edge sets `E_1..E_x` of an execution.
///
/// Immutable after construction; safe to share read-only across parallel runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicGraphTrace {
    n: u32,
    rounds: Vec<EdgeSet>,
    pub meta: TraceMeta,
}

impl DynamicGraphTrace {
    /// Build a trace, validating that all edges are pairs of distinct node ids
    /// below `n`. Connectivity is checked separately (see
    /// [`DynamicGraphTrace::check_connectivity`]) so that hand-written
    /// violating traces can still be loaded by the validator.
    pub fn new(n: u32, rounds: Vec<EdgeSet>, meta: TraceMeta) -> Result<Self> {
        for (i, set) in rounds.iter().enumerate() {
            for &(u, v) in set {
                if u >= v || v >= n {
                    return Err(Error::Parse(format!(
                        "round {}: invalid edge ({u},{v}) for n={n}",
                        i + 1
                    )));
                }
            }
        }
        Ok(DynamicGraphTrace { n, rounds, meta })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of rounds `x`.
    pub fn horizon(&self) -> u64 {
        self.rounds.len() as u64
    }

    /// Edge set of round `r` (1-based). `edges(0)` is the empty set.
    pub fn edges(&self, r: u64) -> &EdgeSet {
        static EMPTY: EdgeSet = EdgeSet::new();
        if r == 0 {
            &EMPTY
        } else {
            &self.rounds[(r - 1) as usize]
        }
    }

    fn check_round(&self, r: u64) -> Result<()> {
        if r < 1 || r > self.horizon() {
            Err(Error::RoundOutOfRange {
                round: r,
                rounds: self.horizon(),
            })
        } else {
            Ok(())
        }
    }

    /// Inserted and removed edges of round `r >= 1`, with `E_0` empty.
    pub fn delta(&self, r: u64) -> Result<RoundDelta> {
        self.check_round(r)?;
        let prev = self.edges(r - 1);
        let cur = self.edges(r);
        Ok(RoundDelta {
            inserted: cur.difference(prev).copied().collect(),
            removed: prev.difference(cur).copied().collect(),
        })
    }

    /// `TC = sum_{r=1}^{up_to} |E_r^+|`.
    pub fn topological_changes(&self, up_to: u64) -> Result<u64> {
        if up_to > self.horizon() {
            return Err(Error::RoundOutOfRange {
                round: up_to,
                rounds: self.horizon(),
            });
        }
        let mut tc = 0u64;
        for r in 1..=up_to {
            tc += self.delta(r)?.inserted.len() as u64;
        }
        Ok(tc)
    }

    /// True iff every edge occurrence lies inside a presence window of at
    /// least `sigma` consecutive rounds. A window cut off by the end of the
    /// trace counts as stable if the edge persists to the last round.
    pub fn is_sigma_stable(&self, sigma: u64) -> bool {
        assert!(sigma >= 1);
        let x = self.horizon();
        // Maximal presence intervals per edge.
        let mut open: std::collections::BTreeMap<Edge, u64> = Default::default();
        for r in 1..=x {
            let d = self.delta(r).expect("in range");
            for e in d.inserted {
                open.insert(e, r);
            }
            for e in d.removed {
                let start = open.remove(&e).expect("removed edge was present");
                if r - start < sigma {
                    return false;
                }
            }
        }
        // Intervals still open at round x are stable by the boundary rule.
        true
    }

    /// Per-round connectivity verdicts, 1-based.
    pub fn connectivity(&self) -> Vec<bool> {
        self.rounds
            .iter()
            .map(|set| is_connected(set, self.n))
            .collect()
    }

    pub fn check_connectivity(&self) -> Result<()> {
        for (i, ok) in self.connectivity().iter().enumerate() {
            if !ok {
                return Err(Error::ModelViolation(format!(
                    "round {} graph is disconnected",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// First `(edge, removal round)` that breaks `sigma`-stability, if any.
    pub fn first_stability_violation(&self, sigma: u64) -> Option<(Edge, u64)> {
        let mut open: std::collections::BTreeMap<Edge, u64> = Default::default();
        for r in 1..=self.horizon() {
            let d = self.delta(r).expect("in range");
            for e in d.inserted {
                open.insert(e, r);
            }
            for e in d.removed {
                let start = open.remove(&e).expect("present");
                if r - start < sigma {
                    return Some((e, r));
                }
            }
        }
        None
    }

    /// Serialize to the trace file format. Deltas are emitted in ascending
    /// `(u, v)` order, insertions before removals, so output is byte-stable.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n {}", self.n).unwrap();
        for r in 1..=self.horizon() {
            writeln!(out, "round {r}").unwrap();
            let d = self.delta(r).expect("in range");
            for (u, v) in d.inserted {
                writeln!(out, "+ {u} {v}").unwrap();
            }
            for (u, v) in d.removed {
                writeln!(out, "- {u} {v}").unwrap();
            }
        }
        out
    }

    /// Parse the trace file format. `#` comments and blank lines are ignored;
    /// rounds must be contiguous from 1.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n: Option<u32> = None;
        let mut rounds: Vec<EdgeSet> = Vec::new();
        let mut current: EdgeSet = EdgeSet::new();
        let mut in_round = false;

        let parse_pair = |rest: &str, line_no: usize| -> Result<Edge> {
            let mut it = rest.split_whitespace();
            let u: NodeId = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("line {line_no}: expected node id")))?;
            let v: NodeId = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("line {line_no}: expected node id")))?;
            if it.next().is_some() {
                return Err(Error::Parse(format!("line {line_no}: trailing tokens")));
            }
            if u == v {
                return Err(Error::Parse(format!("line {line_no}: self-loop {u}")));
            }
            Ok(edge(u, v))
        };

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("n ") {
                if n.is_some() {
                    return Err(Error::Parse(format!("line {line_no}: duplicate n")));
                }
                n = Some(
                    rest.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {line_no}: bad node count")))?,
                );
            } else if let Some(rest) = line.strip_prefix("round ") {
                if in_round {
                    rounds.push(current.clone());
                }
                let r: u64 = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {line_no}: bad round index")))?;
                if r != rounds.len() as u64 + 1 {
                    return Err(Error::Parse(format!(
                        "line {line_no}: round {r} not contiguous (expected {})",
                        rounds.len() + 1
                    )));
                }
                in_round = true;
            } else if let Some(rest) = line.strip_prefix("+ ") {
                if !in_round {
                    return Err(Error::Parse(format!("line {line_no}: delta before round")));
                }
                let e = parse_pair(rest, line_no)?;
                if !current.insert(e) {
                    return Err(Error::Parse(format!(
                        "line {line_no}: edge ({},{}) already present",
                        e.0, e.1
                    )));
                }
            } else if let Some(rest) = line.strip_prefix("- ") {
                if !in_round {
                    return Err(Error::Parse(format!("line {line_no}: delta before round")));
                }
                let e = parse_pair(rest, line_no)?;
                if !current.remove(&e) {
                    return Err(Error::Parse(format!(
                        "line {line_no}: edge ({},{}) not present",
                        e.0, e.1
                    )));
                }
            } else {
                return Err(Error::Parse(format!("line {line_no}: unrecognized: {line}")));
            }
        }
        if in_round {
            rounds.push(current);
        }
        let n = n.ok_or_else(|| Error::Parse("missing `n <count>` header".into()))?;
        if rounds.is_empty() && n == 0 {
            return Err(Error::Parse("empty trace".into()));
        }
        DynamicGraphTrace::new(
            n,
            rounds,
            TraceMeta {
                generator: "trace-file".into(),
                seed: 0,
            },
        )
    }
}

/// Trace generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// One connected random graph, repeated every round.
    Static,
    /// Random insertions and stability-respecting removals each round, with
    /// connectivity repaired by bridging edges.
    RandomChurn,
    /// A Hamiltonian path whose node order is perturbed every `sigma` rounds.
    PathRewire,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Static => "static",
            Family::RandomChurn => "random-churn",
            Family::PathRewire => "path-rewire",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: u32,
    /// Required edge stability, >= 1.
    pub sigma: u64,
    /// Max insertions (and removal attempts) per round for random churn.
    pub churn_budget: usize,
    /// Target edge density as a fraction of the complete graph. The spanning
    /// requirement `n - 1` always wins if larger.
    pub density: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: u32, sigma: u64, seed: u64) -> Self {
        GeneratorSpec {
            family,
            n,
            sigma,
            churn_budget: (n as usize / 4).max(1),
            density: 0.15,
            seed,
        }
    }

    pub(crate) fn target_edges(&self) -> usize {
        let n = self.n as usize;
        let max = n * n.saturating_sub(1) / 2;
        let want = (self.density * max as f64).round() as usize;
        want.max(n.saturating_sub(1)).min(max)
    }
}

/// A connected random graph: random spanning tree plus random extra edges up
/// to the target count.
pub(crate) fn random_connected(n: u32, m_target: usize, rng: &mut ChaCha8Rng) -> EdgeSet {
    let mut set = EdgeSet::new();
    if n <= 1 {
        return set;
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n as usize {
        let j = rng.random_range(0..i);
        set.insert(edge(order[i], order[j]));
    }
    let mut guard = 0usize;
    while set.len() < m_target && guard < m_target * 20 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            set.insert(edge(u, v));
        }
        guard += 1;
    }
    set
}

enum StreamState {
    Static {
        edges: EdgeSet,
    },
    Churn {
        cur: EdgeSet,
        /// Insertion round per live edge, for the stability constraint.
        born: std::collections::BTreeMap<Edge, u64>,
    },
    Path {
        order: Vec<NodeId>,
    },
}

/// Incremental trace generator: the same per-round sequence as [`generate`]
/// for the same spec, produced one round at a time so long executions never
/// materialize the whole trace.
pub struct TraceStream {
    spec: GeneratorSpec,
    rng: ChaCha8Rng,
    round: u64,
    state: StreamState,
}

impl TraceStream {
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        if spec.n == 0 {
            return Err(Error::Generation("n must be at least 1".into()));
        }
        if spec.sigma == 0 {
            return Err(Error::Generation("sigma must be at least 1".into()));
        }
        let mut rng = rng::stream_rng(spec.seed, rng::STREAM_GENERATOR);
        let state = match spec.family {
            Family::Static => StreamState::Static {
                edges: random_connected(spec.n, spec.target_edges(), &mut rng),
            },
            Family::RandomChurn => {
                let cur = random_connected(spec.n, spec.target_edges(), &mut rng);
                let born = cur.iter().map(|&e| (e, 1)).collect();
                StreamState::Churn { cur, born }
            }
            Family::PathRewire => {
                let mut order: Vec<NodeId> = (0..spec.n).collect();
                order.shuffle(&mut rng);
                StreamState::Path { order }
            }
        };
        Ok(TraceStream {
            spec: spec.clone(),
            rng,
            round: 0,
            state,
        })
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Edge set of the next round (rounds 1, 2, ...).
    pub fn next_round(&mut self) -> EdgeSet {
        self.round += 1;
        let r = self.round;
        let n = self.spec.n;
        match &mut self.state {
            StreamState::Static { edges } => edges.clone(),
            StreamState::Churn { cur, born } => {
                if r > 1 {
                    // Remove up to churn_budget edges present >= sigma rounds.
                    let removable: Vec<Edge> = cur
                        .iter()
                        .copied()
                        .filter(|e| r - born[e] >= self.spec.sigma)
                        .collect();
                    let mut removed = EdgeSet::new();
                    for _ in 0..self.spec.churn_budget {
                        if let Some(&e) = removable.choose(&mut self.rng) {
                            if removed.insert(e) {
                                cur.remove(&e);
                                born.remove(&e);
                            }
                        }
                    }
                    // Insert up to churn_budget fresh edges (never re-adding a
                    // removal of this round, so its stability window truly
                    // closed).
                    for _ in 0..self.spec.churn_budget {
                        if n < 2 {
                            break;
                        }
                        let u = self.rng.random_range(0..n);
                        let v = self.rng.random_range(0..n);
                        if u == v {
                            continue;
                        }
                        let e = edge(u, v);
                        if !cur.contains(&e) && !removed.contains(&e) && cur.insert(e) {
                            born.insert(e, r);
                        }
                    }
                    // Repair connectivity with bridging edges; these count
                    // toward TC.
                    let mut dsu = Dsu::new(n as usize);
                    for &(u, v) in cur.iter() {
                        dsu.union(u, v);
                    }
                    while dsu.components() > 1 {
                        let reps = dsu.representatives();
                        let e = edge(reps[0], reps[1]);
                        if cur.insert(e) {
                            born.insert(e, r);
                        }
                        dsu.union(reps[0], reps[1]);
                    }
                }
                cur.clone()
            }
            StreamState::Path { order } => {
                // Rewire every sigma rounds so replaced edges are exactly old
                // enough.
                if r > 1 && (r - 1) % self.spec.sigma == 0 && n >= 2 {
                    let i = self.rng.random_range(0..n as usize);
                    let j = self.rng.random_range(0..n as usize);
                    order.swap(i, j);
                }
                path_edges(order)
            }
        }
    }
}

/// Generate a trace of `horizon` rounds satisfying per-round connectivity and
/// `spec.sigma`-edge stability. Deterministic for a fixed seed.
pub fn generate(spec: &GeneratorSpec, horizon: u64) -> Result<DynamicGraphTrace> {
    let mut stream = TraceStream::new(spec)?;
    let rounds = (0..horizon).map(|_| stream.next_round()).collect();
    let trace = DynamicGraphTrace::new(
        spec.n,
        rounds,
        TraceMeta {
            generator: spec.family.name().into(),
            seed: spec.seed,
        },
    )?;
    trace.check_connectivity().map_err(|e| {
        Error::Generation(format!("generated trace violates connectivity: {e}"))
    })?;
    if !trace.is_sigma_stable(spec.sigma) {
        return Err(Error::Generation(format!(
            "generated trace violates {}-edge stability",
            spec.sigma
        )));
    }
    Ok(trace)
}

fn path_edges(order: &[NodeId]) -> EdgeSet {
    order.windows(2).map(|w| edge(w[0], w[1])).collect()
}
