//! The round-synchronous execution loop and the accounting ledger.
//!
//! Round `r` semantics: the adversary fixes `E_r` (under its information
//! rule), nodes emit messages subject to the bandwidth rules, and all messages
//! over edges of `E_r` are delivered at the end of round `r` — a message sent
//! in round `r` is actionable by its receiver in round `r + 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;

use crate::adversary::{Adversary, Observables};
use crate::graph::{edge, EdgeSet};
use crate::graph::is_connected;
use crate::protocol::{Inbox, Mode, Protocol, WalkSummary};
use crate::{Error, NodeId, Result, TokenId};

pub const KIND_COUNT: usize = 5;

/// One unit of accounting. A message carries at most one token plus
/// O(log n) control bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    /// A token payload, identified by its global id.
    Token(TokenId),
    /// Request for the `rank`-th token (0-based) of source `origin`.
    Request { origin: NodeId, rank: u32 },
    /// Completeness announcement with respect to `origin`, carrying the
    /// number of tokens that source holds.
    Completeness { origin: NodeId, count: u32 },
    /// A center advertising itself over a freshly inserted edge.
    CenterAnnounce,
    /// A token taking a random-walk step (or a hand-off to a center).
    WalkToken(TokenId),
}

impl MessageKind {
    pub fn index(&self) -> usize {
        match self {
            MessageKind::Token(_) => 0,
            MessageKind::Request { .. } => 1,
            MessageKind::Completeness { .. } => 2,
            MessageKind::CenterAnnounce => 3,
            MessageKind::WalkToken(_) => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        ["token", "request", "completeness", "center", "walk"][self.index()]
    }

    /// Token column for the event log.
    fn token_field(&self) -> String {
        match self {
            MessageKind::Token(t) | MessageKind::WalkToken(t) => t.to_string(),
            MessageKind::Request { origin, rank } => format!("{origin}.{rank}"),
            MessageKind::Completeness { origin, .. } => origin.to_string(),
            MessageKind::CenterAnnounce => "-".into(),
        }
    }
}

/// A unicast message emitted by a protocol in the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
}

/// Initial token placement: holders per token id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    holders: Vec<Vec<NodeId>>,
}

impl Placement {
    pub fn new(holders: Vec<Vec<NodeId>>) -> Result<Self> {
        for (t, h) in holders.iter().enumerate() {
            if h.is_empty() {
                return Err(Error::Config(format!("token {t} has no initial holder")));
            }
        }
        Ok(Placement { holders })
    }

    /// All `k` tokens at one node.
    pub fn single(node: NodeId, k: u32) -> Self {
        Placement {
            holders: (0..k).map(|_| vec![node]).collect(),
        }
    }

    /// Token `i` at node `i mod s`: `s` sources, round-robin.
    pub fn uniform(s: u32, k: u32) -> Result<Self> {
        if s == 0 {
            return Err(Error::Config("uniform placement needs s >= 1".into()));
        }
        Ok(Placement {
            holders: (0..k).map(|i| vec![i % s]).collect(),
        })
    }

    pub fn k(&self) -> u32 {
        self.holders.len() as u32
    }

    pub fn holders(&self, token: TokenId) -> &[NodeId] {
        &self.holders[token as usize]
    }

    /// Owner per token, if every token has exactly one initial holder.
    pub fn single_owner(&self) -> Option<Vec<NodeId>> {
        self.holders
            .iter()
            .map(|h| if h.len() == 1 { Some(h[0]) } else { None })
            .collect()
    }

    /// `(source, its token ids ascending)` pairs, ascending by source id.
    /// Only defined for single-owner placements.
    pub fn sources(&self) -> Option<Vec<(NodeId, Vec<TokenId>)>> {
        let owners = self.single_owner()?;
        let mut by_source: std::collections::BTreeMap<NodeId, Vec<TokenId>> = Default::default();
        for (t, &owner) in owners.iter().enumerate() {
            by_source.entry(owner).or_default().push(t as TokenId);
        }
        Some(by_source.into_iter().collect())
    }

    /// Number of distinct initial holders (the `s` of a multi-source run).
    pub fn source_count(&self) -> u32 {
        let mut set: BTreeSet<NodeId> = BTreeSet::new();
        for h in &self.holders {
            set.extend(h.iter().copied());
        }
        set.len() as u32
    }

    /// Parse `token <id> at <node>` lines; `#` comments ignored. Token ids
    /// must be contiguous from 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: std::collections::BTreeMap<u32, Vec<NodeId>> = Default::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["token", id, "at", node] => {
                    let id: u32 = id
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad token id", i + 1)))?;
                    let node: NodeId = node
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad node id", i + 1)))?;
                    map.entry(id).or_default().push(node);
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected `token <id> at <node>`",
                        i + 1
                    )))
                }
            }
        }
        if map.is_empty() {
            return Err(Error::Parse("empty placement file".into()));
        }
        let k = map.len() as u32;
        if *map.keys().next_back().unwrap() != k - 1 || *map.keys().next().unwrap() != 0 {
            return Err(Error::Parse("token ids must be contiguous from 0".into()));
        }
        let mut holders: Vec<Vec<NodeId>> = map.into_values().collect();
        for h in &mut holders {
            h.sort_unstable();
            h.dedup();
        }
        Placement::new(holders)
    }
}

/// `k(n-1)`, the number of token learnings a single-owner run must produce.
pub fn learning_count_expected(n: u32, placement: &Placement) -> Result<u64> {
    if placement.single_owner().is_none() {
        return Err(Error::NotApplicable(
            "learning count k(n-1) requires exactly one owner per token".into(),
        ));
    }
    Ok(u64::from(placement.k()) * u64::from(n.saturating_sub(1)))
}

/// A node receiving a token for the first time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLearning {
    pub node: NodeId,
    pub token: TokenId,
    pub round: u64,
}

/// Per-kind, per-round message counts plus the learning record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    /// `per_round[r - 1][kind]`, rounds 1-based.
    pub per_round: Vec<[u64; KIND_COUNT]>,
    pub totals: [u64; KIND_COUNT],
    pub learning_events: Vec<TokenLearning>,
    pub tc_running: u64,
}

impl Ledger {
    fn count(&mut self, round: u64, kind: &MessageKind) {
        while self.per_round.len() < round as usize {
            self.per_round.push([0; KIND_COUNT]);
        }
        self.per_round[round as usize - 1][kind.index()] += 1;
        self.totals[kind.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.totals.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub protocol: String,
    pub adversary: String,
    pub n: u32,
    pub k: u32,
    pub s: u32,
    pub sigma: u64,
    pub seed: u64,
    /// Rounds actually executed.
    pub rounds: u64,
    /// First round at the end of which every node held all k tokens, if any.
    pub completion_round: Option<u64>,
    pub ledger: Ledger,
    pub tc: u64,
    /// Total edge deletions; the Request bound is k(n-1) plus this.
    pub deletions: u64,
    pub walk: Option<WalkSummary>,
}

impl ExecutionReport {
    pub fn total_messages(&self) -> u64 {
        self.ledger.total()
    }

    pub fn completed(&self) -> bool {
        self.completion_round.is_some()
    }

    /// Amortized message cost per token; 0 for k = 0.
    pub fn amortized(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.total_messages() as f64 / f64::from(self.k)
        }
    }

    pub const CSV_HEADER: &'static str = "run_id,protocol,adversary,n,k,s,sigma,seed,rounds,\
completed,msgs_total,msgs_token,msgs_request,msgs_completeness,msgs_center,msgs_walk,tc,\
amortized,residual_alpha1";

    pub fn csv_row(&self, run_id: &str) -> String {
        let t = &self.ledger.totals;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            run_id,
            self.protocol,
            self.adversary,
            self.n,
            self.k,
            self.s,
            self.sigma,
            self.seed,
            self.rounds,
            match self.completion_round {
                Some(r) => r.to_string(),
                None => "NONE".into(),
            },
            self.total_messages(),
            t[0],
            t[1],
            t[2],
            t[3],
            t[4],
            self.tc,
            self.amortized(),
            competitive_residual(self, 1.0),
        )
    }
}

/// `total_messages - alpha * TC`; may be negative.
pub fn competitive_residual(report: &ExecutionReport, alpha: f64) -> f64 {
    report.total_messages() as f64 - alpha * report.tc as f64
}

pub struct RunSetup<'a> {
    pub protocol: &'a mut dyn Protocol,
    pub adversary: &'a mut dyn Adversary,
    pub n: u32,
    pub placement: &'a Placement,
    pub horizon: u64,
    pub seed: u64,
    /// Config echo for the report row.
    pub sigma: u64,
    /// Optional per-message event log (one `round,src,dst,kind,token` line
    /// per message).
    pub event_log: Option<&'a mut String>,
}

/// Default horizon: generously above the O(nk) termination bound for unicast
/// protocols on 3-edge-stable traces.
pub fn default_horizon(n: u32, k: u32) -> u64 {
    8 * u64::from(n) * u64::from(k.max(1))
}

struct Bookkeeping {
    n: u32,
    k: u32,
    holdings: Vec<FixedBitSet>,
    held_pairs: u64,
    ledger: Ledger,
}

impl Bookkeeping {
    fn new(n: u32, placement: &Placement) -> Self {
        let k = placement.k();
        let mut holdings = vec![FixedBitSet::with_capacity(k as usize); n as usize];
        let mut held_pairs = 0u64;
        for t in 0..k {
            for &node in placement.holders(t) {
                if !holdings[node as usize].contains(t as usize) {
                    holdings[node as usize].insert(t as usize);
                    held_pairs += 1;
                }
            }
        }
        Bookkeeping {
            n,
            k,
            holdings,
            held_pairs,
            ledger: Ledger::default(),
        }
    }

    fn all_complete(&self) -> bool {
        self.held_pairs == u64::from(self.n) * u64::from(self.k)
    }

    fn holds(&self, node: NodeId, token: TokenId) -> bool {
        self.holdings[node as usize].contains(token as usize)
    }

    fn deliver_token(&mut self, node: NodeId, token: TokenId, round: u64) {
        if !self.holds(node, token) {
            self.holdings[node as usize].insert(token as usize);
            self.held_pairs += 1;
            self.ledger.learning_events.push(TokenLearning {
                node,
                token,
                round,
            });
        }
    }
}

fn log_event(
    log: &mut Option<&mut String>,
    round: u64,
    src: NodeId,
    dst: Option<NodeId>,
    kind: &MessageKind,
) {
    if let Some(buf) = log {
        let dst = match dst {
            Some(d) => d.to_string(),
            None => "*".into(),
        };
        writeln!(
            buf,
            "{round},{src},{dst},{},{}",
            kind.label(),
            kind.token_field()
        )
        .unwrap();
    }
}

/// Execute rounds until dissemination completes (and, for protocols with a
/// fixed schedule like flooding, the protocol is quiescent) or the horizon is
/// hit. Horizon exhaustion is reported via `completion_round = None`, not as
/// an error.
pub fn run(setup: RunSetup<'_>) -> Result<ExecutionReport> {
    let RunSetup {
        protocol,
        adversary,
        n,
        placement,
        horizon,
        seed,
        sigma,
        mut event_log,
    } = setup;
    if horizon < 1 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    for t in 0..placement.k() {
        for &holder in placement.holders(t) {
            if holder >= n {
                return Err(Error::Config(format!(
                    "token {t} placed at node {holder} >= n={n}"
                )));
            }
        }
    }
    if protocol.requires_oblivious_adversary() && !adversary.is_oblivious() {
        return Err(Error::Config(format!(
            "protocol `{}` is only defined against an oblivious adversary",
            protocol.name()
        )));
    }

    let mode = protocol.mode();
    let mut book = Bookkeeping::new(n, placement);
    let mut report = ExecutionReport {
        protocol: protocol.name().to_string(),
        adversary: adversary.name(),
        n,
        k: placement.k(),
        s: placement.source_count(),
        sigma,
        seed,
        rounds: 0,
        completion_round: None,
        ledger: Ledger::default(),
        tc: 0,
        deletions: 0,
        walk: None,
    };

    // Nothing to disseminate: complete at round 0 with zero messages.
    if book.all_complete() {
        report.completion_round = Some(0);
        report.walk = protocol.walk_summary();
        return Ok(report);
    }

    let mut prev_edges = EdgeSet::new();
    let mut inboxes: Vec<Inbox> = vec![Vec::new(); n as usize];
    let mut last_request_edges = EdgeSet::new();
    let mut tc = 0u64;
    let mut deletions = 0u64;

    for round in 1..=horizon {
        // Broadcast intents are fixed before the topology: the strongly
        // adaptive broadcast adversary sees them.
        let intents = if mode == Mode::Broadcast {
            let v = protocol.step_broadcast(round, &inboxes);
            debug_assert_eq!(v.len(), n as usize);
            Some(v)
        } else {
            None
        };

        let obs = Observables {
            round,
            broadcast_assignment: intents.as_deref(),
            holdings: &book.holdings,
            last_request_edges: &last_request_edges,
        };
        let edges = adversary.next_round(&obs)?;
        for &(u, v) in &edges {
            if u >= v || v >= n {
                return Err(Error::ModelViolation(format!(
                    "round {round}: adversary produced invalid edge ({u},{v})"
                )));
            }
        }
        if !is_connected(&edges, n) {
            return Err(Error::ModelViolation(format!(
                "round {round}: adversary produced a disconnected graph"
            )));
        }
        tc += edges.difference(&prev_edges).count() as u64;
        deletions += prev_edges.difference(&edges).count() as u64;

        let mut next_inboxes: Vec<Inbox> = vec![Vec::new(); n as usize];
        last_request_edges.clear();

        match mode {
            Mode::Broadcast => {
                let intents = intents.unwrap();
                // Adjacency for delivery.
                let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n as usize];
                for &(u, v) in &edges {
                    adj[u as usize].push(v);
                    adj[v as usize].push(u);
                }
                for (u, intent) in intents.iter().enumerate() {
                    let Some(token) = *intent else { continue };
                    let u = u as NodeId;
                    if !book.holds(u, token) {
                        return Err(Error::ProtocolBug(format!(
                            "round {round}: node {u} broadcast token {token} it does not hold"
                        )));
                    }
                    let kind = MessageKind::Token(token);
                    book.ledger.count(round, &kind);
                    log_event(&mut event_log, round, u, None, &kind);
                    for &v in &adj[u as usize] {
                        next_inboxes[v as usize].push((u, kind));
                        book.deliver_token(v, token, round);
                    }
                }
            }
            Mode::Unicast => {
                let mut neighbors: Vec<Vec<NodeId>> = vec![Vec::new(); n as usize];
                for &(u, v) in &edges {
                    neighbors[u as usize].push(v);
                    neighbors[v as usize].push(u);
                }
                for list in &mut neighbors {
                    list.sort_unstable();
                }
                let msgs = protocol.step_unicast(round, &neighbors, &inboxes);
                let mut used: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
                for msg in &msgs {
                    let Message { src, dst, kind } = *msg;
                    if src == dst || src >= n || dst >= n || !edges.contains(&edge(src, dst)) {
                        return Err(Error::ProtocolBug(format!(
                            "round {round}: message {src}->{dst} over a non-edge"
                        )));
                    }
                    if !used.insert((src, dst)) {
                        return Err(Error::ProtocolBug(format!(
                            "round {round}: two messages over directed edge {src}->{dst}"
                        )));
                    }
                    match kind {
                        MessageKind::Token(t) | MessageKind::WalkToken(t) => {
                            if !book.holds(src, t) {
                                return Err(Error::ProtocolBug(format!(
                                    "round {round}: node {src} sent token {t} it does not hold"
                                )));
                            }
                        }
                        MessageKind::Request { .. } => {
                            last_request_edges.insert(edge(src, dst));
                        }
                        _ => {}
                    }
                    book.ledger.count(round, &kind);
                    log_event(&mut event_log, round, src, Some(dst), &kind);
                    next_inboxes[dst as usize].push((src, kind));
                    if let MessageKind::Token(t) | MessageKind::WalkToken(t) = kind {
                        book.deliver_token(dst, t, round);
                    }
                }
            }
        }

        inboxes = next_inboxes;
        prev_edges = edges;
        report.rounds = round;

        if book.all_complete() && report.completion_round.is_none() {
            report.completion_round = Some(round);
        }
        if report.completion_round.is_some()
            && (!protocol.run_to_quiescence() || protocol.quiescent())
        {
            break;
        }
    }

    // A fixed-schedule protocol that completed dissemination but hit the
    // horizon mid-schedule still counts as completed.
    report.tc = tc;
    report.deletions = deletions;
    book.ledger.tc_running = tc;
    report.ledger = book.ledger;
    report.walk = protocol.walk_summary();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_count_formula() {
        let p = Placement::single(0, 1);
        assert_eq!(learning_count_expected(3, &p).unwrap(), 2);
        let p = Placement::single(0, 7);
        assert_eq!(learning_count_expected(1, &p).unwrap(), 0);
        let p = Placement::uniform(4, 4).unwrap();
        assert_eq!(learning_count_expected(5, &p).unwrap(), 16);
    }

    #[test]
    fn learning_count_rejects_multi_owner() {
        let p = Placement::new(vec![vec![0, 1]]).unwrap();
        assert!(matches!(
            learning_count_expected(3, &p),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn residual_arithmetic() {
        let mut report = ExecutionReport {
            protocol: "x".into(),
            adversary: "y".into(),
            n: 3,
            k: 1,
            s: 1,
            sigma: 1,
            seed: 0,
            rounds: 6,
            completion_round: Some(6),
            ledger: Ledger::default(),
            tc: 30,
            deletions: 0,
            walk: None,
        };
        report.ledger.totals[0] = 100;
        assert_eq!(competitive_residual(&report, 1.0), 70.0);
        assert_eq!(competitive_residual(&report, 0.0), 100.0);
    }

    #[test]
    fn placement_parse() {
        let p = Placement::parse("# two tokens\ntoken 0 at 2\ntoken 1 at 0\n").unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.holders(0), &[2]);
        assert_eq!(p.single_owner(), Some(vec![2, 0]));
        assert!(Placement::parse("token 1 at 0\n").is_err());
        assert!(Placement::parse("").is_err());
    }

    #[test]
    fn placement_sources() {
        let p = Placement::uniform(2, 5).unwrap();
        let sources = p.sources().unwrap();
        assert_eq!(sources, vec![(0, vec![0, 2, 4]), (1, vec![1, 3])]);
        assert_eq!(p.source_count(), 2);
    }
}
