//! Core automaton types: unifilar topologies, deterministic path tracing,
//! stationary distributions, and the information measures over them.
//!
//! States are dense integers `0..n`, symbols dense integers `0..k`, so the
//! hot loops (tracing a 2^17-symbol series through tens of thousands of
//! candidate machines) are flat array lookups. All types are immutable
//! after construction and every operation is a pure function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// One output symbol, an integer in `[0, k)` for the owning alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u8);

impl Symbol {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An observed symbol series over a fixed alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSeries {
    symbols: Vec<Symbol>,
    alphabet_size: usize,
}

impl DataSeries {
    pub fn new(symbols: Vec<Symbol>, alphabet_size: usize) -> Result<Self> {
        if alphabet_size == 0 || alphabet_size > 256 {
            return Err(Error::InvalidSeries(format!(
                "alphabet size {alphabet_size} out of range"
            )));
        }
        if let Some(bad) = symbols.iter().find(|s| s.index() >= alphabet_size) {
            return Err(Error::InvalidSeries(format!(
                "symbol {} outside alphabet of size {alphabet_size}",
                bad.0
            )));
        }
        Ok(Self {
            symbols,
            alphabet_size,
        })
    }

    /// Parse a series from ASCII digit characters; whitespace is ignored.
    /// Only alphabets up to size 10 are representable in this format.
    pub fn from_digits(text: &str, alphabet_size: usize) -> Result<Self> {
        if alphabet_size > 10 {
            return Err(Error::InvalidSeries(
                "digit format supports alphabets up to size 10".into(),
            ));
        }
        let mut symbols = Vec::with_capacity(text.len());
        for ch in text.chars() {
            if ch.is_whitespace() {
                continue;
            }
            let digit = ch.to_digit(10).ok_or_else(|| {
                Error::InvalidSeries(format!("character {ch:?} is not a digit"))
            })?;
            symbols.push(Symbol(digit as u8));
        }
        Self::new(symbols, alphabet_size)
    }

    pub fn to_digits(&self) -> String {
        self.symbols.iter().map(|s| (b'0' + s.0) as char).collect()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// The subsample consisting of the first `len` symbols.
    pub fn prefix(&self, len: usize) -> DataSeries {
        assert!(len <= self.symbols.len(), "prefix longer than the series");
        DataSeries {
            symbols: self.symbols[..len].to_vec(),
            alphabet_size: self.alphabet_size,
        }
    }
}

/// An edge-labeled unifilar machine: a partial map `(state, symbol) -> state`.
///
/// Unifilarity holds by construction (the map key admits at most one
/// successor), every state has out-degree at least one, and all referenced
/// states lie in `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    id: String,
    n_states: usize,
    alphabet_size: usize,
    // succ[state * k + symbol] = successor, or None when the edge is absent
    succ: Vec<Option<u8>>,
}

impl Topology {
    pub fn from_edges(
        id: impl Into<String>,
        n_states: usize,
        alphabet_size: usize,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        if n_states == 0 || n_states > 255 {
            return Err(Error::InvalidTopology(format!(
                "state count {n_states} out of range"
            )));
        }
        if alphabet_size == 0 || alphabet_size > 255 {
            return Err(Error::InvalidTopology(format!(
                "alphabet size {alphabet_size} out of range"
            )));
        }
        let mut succ = vec![None; n_states * alphabet_size];
        for &(from, symbol, to) in edges {
            if from >= n_states || to >= n_states {
                return Err(Error::InvalidTopology(format!(
                    "edge ({from}, {symbol}, {to}) references a state outside [0, {n_states})"
                )));
            }
            if symbol >= alphabet_size {
                return Err(Error::InvalidTopology(format!(
                    "edge ({from}, {symbol}, {to}) uses a symbol outside [0, {alphabet_size})"
                )));
            }
            let slot = from * alphabet_size + symbol;
            if succ[slot].is_some() {
                return Err(Error::InvalidTopology(format!(
                    "unifilarity violated: state {from} has two edges for symbol {symbol}"
                )));
            }
            succ[slot] = Some(to as u8);
        }
        let top = Self {
            id: id.into(),
            n_states,
            alphabet_size,
            succ,
        };
        for state in 0..n_states {
            if top.out_degree(state) == 0 {
                return Err(Error::InvalidTopology(format!(
                    "state {state} has no outgoing edge"
                )));
            }
        }
        Ok(top)
    }

    /// Build from a flat successor table already known to satisfy the
    /// invariants (enumeration and canonicalization internals).
    pub(crate) fn from_succ(
        id: impl Into<String>,
        n_states: usize,
        alphabet_size: usize,
        succ: Vec<Option<u8>>,
    ) -> Self {
        debug_assert_eq!(succ.len(), n_states * alphabet_size);
        Self {
            id: id.into(),
            n_states,
            alphabet_size,
            succ,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    #[inline]
    pub fn successor(&self, state: usize, symbol: Symbol) -> Option<usize> {
        self.succ[state * self.alphabet_size + symbol.index()].map(|s| s as usize)
    }

    pub(crate) fn succ_raw(&self) -> &[Option<u8>] {
        &self.succ
    }

    pub fn out_degree(&self, state: usize) -> usize {
        let k = self.alphabet_size;
        self.succ[state * k..(state + 1) * k]
            .iter()
            .filter(|s| s.is_some())
            .count()
    }

    /// States with more than one outgoing edge -- the ones carrying free
    /// transition probabilities.
    pub fn multi_edge_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_states).filter(|&s| self.out_degree(s) > 1)
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().filter(|s| s.is_some()).count()
    }

    /// Edges in `(from, symbol)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, Symbol, usize)> + '_ {
        let k = self.alphabet_size;
        self.succ.iter().enumerate().filter_map(move |(slot, s)| {
            s.map(|to| (slot / k, Symbol((slot % k) as u8), to as usize))
        })
    }

    /// Deterministically trace `data` through the machine from `start`,
    /// counting edge traversals. Returns `None` when some symbol has no
    /// outgoing edge from the current state -- the rejection that assigns
    /// the series zero likelihood under this (topology, start) pair.
    pub fn trace_path(&self, start: usize, data: &DataSeries) -> Option<EdgeCounts> {
        assert!(start < self.n_states, "start state out of range");
        assert!(
            data.alphabet_size() <= self.alphabet_size,
            "series alphabet larger than the machine alphabet"
        );
        let k = self.alphabet_size;
        let mut counts = vec![0u64; self.succ.len()];
        let mut current = start;
        for &sym in data.symbols() {
            let slot = current * k + sym.index();
            let next = self.succ[slot]?;
            counts[slot] += 1;
            current = next as usize;
        }
        Some(EdgeCounts {
            start_state: start,
            alphabet_size: k,
            counts,
        })
    }

    /// True when every state can reach and be reached by every other.
    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(self.n_states, self.edges().map(|(f, _, t)| (f, t)))
    }
}

/// Reachability in both directions from state 0; with finitely many states
/// this is equivalent to strong connectivity.
pub(crate) fn strongly_connected(
    n_states: usize,
    edges: impl Iterator<Item = (usize, usize)>,
) -> bool {
    let mut fwd = vec![Vec::new(); n_states];
    let mut bwd = vec![Vec::new(); n_states];
    for (from, to) in edges {
        fwd[from].push(to);
        bwd[to].push(from);
    }
    let covers = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n_states];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(s) = stack.pop() {
            for &t in &adj[s] {
                if !seen[t] {
                    seen[t] = true;
                    count += 1;
                    stack.push(t);
                }
            }
        }
        count == n_states
    };
    covers(&fwd) && covers(&bwd)
}

/// Edge traversal counts from tracing one series through one topology
/// from one start state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeCounts {
    start_state: usize,
    alphabet_size: usize,
    counts: Vec<u64>,
}

impl EdgeCounts {
    pub fn start_state(&self) -> usize {
        self.start_state
    }

    #[inline]
    pub fn count(&self, state: usize, symbol: Symbol) -> u64 {
        self.counts[state * self.alphabet_size + symbol.index()]
    }

    /// Visits to `state`: the counts summed over its outgoing symbols.
    pub fn visits(&self, state: usize) -> u64 {
        let k = self.alphabet_size;
        self.counts[state * k..(state + 1) * k].iter().sum()
    }

    /// Total count over all edges; equals the traced series length.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// A concrete probability setting for a topology's edges.
///
/// Probabilities on existing edges lie in `(0, 1]`, each state's outgoing
/// probabilities sum to one within 1e-12, and out-degree-one states carry
/// probability exactly one. Absent edges carry zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionAssignment {
    alphabet_size: usize,
    probs: Vec<f64>,
}

impl TransitionAssignment {
    pub fn new(topology: &Topology, probs: Vec<f64>) -> Result<Self> {
        let k = topology.alphabet_size();
        if probs.len() != topology.n_states() * k {
            return Err(Error::InvalidAssignment(format!(
                "expected {} probabilities, got {}",
                topology.n_states() * k,
                probs.len()
            )));
        }
        for state in 0..topology.n_states() {
            let mut sum = 0.0;
            for symbol in 0..k {
                let p = probs[state * k + symbol];
                match topology.successor(state, Symbol(symbol as u8)) {
                    Some(_) => {
                        if !(p > 0.0 && p <= 1.0) {
                            return Err(Error::InvalidAssignment(format!(
                                "edge ({state}, {symbol}) probability {p} outside (0, 1]"
                            )));
                        }
                        sum += p;
                    }
                    None => {
                        if p != 0.0 {
                            return Err(Error::InvalidAssignment(format!(
                                "absent edge ({state}, {symbol}) given probability {p}"
                            )));
                        }
                    }
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidAssignment(format!(
                    "state {state} probabilities sum to {sum}"
                )));
            }
            if topology.out_degree(state) == 1 {
                let symbol = (0..k)
                    .find(|&x| topology.successor(state, Symbol(x as u8)).is_some())
                    .expect("out-degree checked");
                if probs[state * k + symbol] != 1.0 {
                    return Err(Error::InvalidAssignment(format!(
                        "single-edge state {state} must carry probability exactly 1"
                    )));
                }
            }
        }
        Ok(Self {
            alphabet_size: k,
            probs,
        })
    }

    /// The equal-outgoing-probability setting: `1/out_degree` on each edge.
    pub fn uniform(topology: &Topology) -> Self {
        let k = topology.alphabet_size();
        let mut probs = vec![0.0; topology.n_states() * k];
        for state in 0..topology.n_states() {
            let share = 1.0 / topology.out_degree(state) as f64;
            for symbol in 0..k {
                if topology.successor(state, Symbol(symbol as u8)).is_some() {
                    probs[state * k + symbol] = share;
                }
            }
        }
        Self {
            alphabet_size: k,
            probs,
        }
    }

    #[inline]
    pub fn prob(&self, state: usize, symbol: Symbol) -> f64 {
        self.probs[state * self.alphabet_size + symbol.index()]
    }
}

/// Stationary state distribution: sums to one, `pi T = pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Stationary distribution of the internal Markov chain `T = sum_x T^(x)`.
///
/// The topology must be strongly connected (library machines always are);
/// anything else is a caller fault.
pub fn stationary_distribution(
    topology: &Topology,
    theta: &TransitionAssignment,
) -> StationaryDistribution {
    assert!(
        topology.is_strongly_connected(),
        "stationary distribution requires a strongly connected topology"
    );
    let n = topology.n_states();
    let mut t = vec![0.0; n * n];
    for (from, symbol, to) in topology.edges() {
        t[from * n + to] += theta.prob(from, symbol);
    }
    StationaryDistribution::from_probs(math::stationary_from_transition(&t, n))
}

/// Entropy rate in bits per symbol:
/// `h = -sum_s pi(s) sum_x p(x|s) log2 p(x|s)`.
///
/// Edges with probability one contribute zero; absent edges do not exist,
/// and `0 log 0` is taken as zero.
pub fn entropy_rate(
    topology: &Topology,
    theta: &TransitionAssignment,
    pi: &StationaryDistribution,
) -> f64 {
    debug_assert_eq!(pi.len(), topology.n_states());
    let mut h = 0.0;
    for (from, symbol, _) in topology.edges() {
        let p = theta.prob(from, symbol);
        if p > 0.0 {
            h -= pi.probs()[from] * p * p.log2();
        }
    }
    h.clamp(0.0, (topology.alphabet_size() as f64).log2())
}

/// Statistical complexity in bits: the Shannon entropy of the stationary
/// state distribution, `C = -sum_s pi(s) log2 pi(s)`.
pub fn statistical_complexity(pi: &StationaryDistribution) -> f64 {
    let mut c = 0.0;
    for &p in pi.probs() {
        if p > 0.0 {
            c -= p * p.log2();
        }
    }
    c.clamp(0.0, (pi.len() as f64).log2())
}

/// Log-likelihood (natural log) of a traced path under a fixed assignment:
/// `sum over edges of n(s, x) * ln p(x|s)`.
pub fn log_likelihood(
    topology: &Topology,
    theta: &TransitionAssignment,
    counts: &EdgeCounts,
) -> f64 {
    let mut ll = 0.0;
    for (from, symbol, _) in topology.edges() {
        let n = counts.count(from, symbol);
        if n > 0 {
            ll += n as f64 * theta.prob(from, symbol).ln();
        }
    }
    ll
}
