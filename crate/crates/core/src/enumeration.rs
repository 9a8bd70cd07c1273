//! Exact enumeration of candidate machine topologies, one representative
//! per state-relabeling isomorphism class, plus the line-oriented library
//! file format.
//!
//! A machine belongs to the library for `(n, k)` when it
//!   (a) is unifilar by construction,
//!   (b) has out-degree >= 1 at every state,
//!   (c) is strongly connected,
//!   (d) uses every symbol of the alphabet on at least one edge, and
//!   (e) has no pair of states equivalent under the equal-outgoing-
//!       probability setting (`is_minimal_uniform`).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{strongly_connected, Topology};

/// An ordered set of canonical topologies with its census metadata.
#[derive(Debug, Clone)]
pub struct MachineLibrary {
    max_states: usize,
    alphabet_size: usize,
    census: Vec<usize>,
    machines: Vec<Topology>,
}

impl MachineLibrary {
    /// A library from an explicit candidate set: machines must share the
    /// alphabet, be strongly connected, and be structurally distinct.
    /// Inference does not require the candidates to come from the
    /// enumerated census.
    pub fn from_machines(machines: Vec<Topology>, alphabet_size: usize) -> Result<Self> {
        if machines.is_empty() {
            return Err(Error::InvalidArgument("a library needs machines".into()));
        }
        let max_states = machines.iter().map(|m| m.n_states()).max().unwrap();
        let mut census = vec![0usize; max_states];
        let mut ids = HashSet::new();
        let mut encodings = HashSet::new();
        for machine in &machines {
            if machine.alphabet_size() != alphabet_size {
                return Err(Error::InvalidArgument(format!(
                    "machine {} has alphabet {}, library expects {alphabet_size}",
                    machine.id(),
                    machine.alphabet_size()
                )));
            }
            if !machine.is_strongly_connected() {
                return Err(Error::InvalidTopology(format!(
                    "machine {} is not strongly connected",
                    machine.id()
                )));
            }
            if !ids.insert(machine.id().to_string()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate machine id {}",
                    machine.id()
                )));
            }
            if !encodings.insert(canonical_encoding(machine)) {
                return Err(Error::InvalidArgument(format!(
                    "machine {} duplicates another machine's structure",
                    machine.id()
                )));
            }
            census[machine.n_states() - 1] += 1;
        }
        Ok(Self {
            max_states,
            alphabet_size,
            census,
            machines,
        })
    }

    pub fn machines(&self) -> &[Topology] {
        &self.machines
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }

    pub fn max_states(&self) -> usize {
        self.max_states
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Machine counts per state count; `census()[i]` is the count for
    /// `i + 1` states.
    pub fn census(&self) -> &[usize] {
        &self.census
    }
}

/// All topologies on exactly `n` states over `k` symbols satisfying the
/// five membership predicates, one per isomorphism class, sorted by
/// canonical encoding. Ids are `n{n}k{k}c{index}` in that order.
pub fn enumerate_topological_machines(n: usize, k: usize) -> Result<Vec<Topology>> {
    if n == 0 {
        return Err(Error::InvalidArgument("state count must be >= 1".into()));
    }
    if k < 2 {
        return Err(Error::InvalidArgument("alphabet size must be >= 2".into()));
    }
    if n > 250 || k > 250 {
        return Err(Error::Capacity(format!("n={n}, k={k} exceeds supported sizes")));
    }
    // Raw search width: ((n+1)^k - 1) per-state assignments, n states.
    let per_state = ((n + 1) as f64).powi(k as i32) - 1.0;
    if per_state.powi(n as i32) > 1e11 {
        return Err(Error::Capacity(format!(
            "search space for n={n}, k={k} is out of desk-scale reach"
        )));
    }

    let keys = search_canonical_keys(n, k);
    let mut sorted: Vec<Vec<u8>> = keys.into_iter().collect();
    sorted.sort_unstable();

    let machines = sorted
        .into_iter()
        .enumerate()
        .map(|(index, key)| {
            let succ = decode_key(&key);
            Topology::from_succ(format!("n{n}k{k}c{index:05}"), n, k, succ)
        })
        .collect();
    Ok(machines)
}

/// Concatenated enumerations for every state count in `states`.
pub fn build_library(states: RangeInclusive<usize>, k: usize) -> Result<MachineLibrary> {
    let (lo, hi) = (*states.start(), *states.end());
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "invalid state range {lo}..={hi}"
        )));
    }
    let mut census = vec![0usize; hi];
    let mut machines = Vec::new();
    for n in lo..=hi {
        let mut batch = enumerate_topological_machines(n, k)?;
        census[n - 1] = batch.len();
        machines.append(&mut batch);
    }
    Ok(MachineLibrary {
        max_states: hi,
        alphabet_size: k,
        census,
        machines,
    })
}

/// Depth-first construction over partial transition maps, one state's
/// edges at a time, pruned so surviving assignments are labelable by
/// breadth-first discovery order: every state `s > 0` must get an in-edge
/// from some state `< s` by the time states `0..s` are fully assigned.
/// Survivors are canonicalized and deduplicated; the dedup set is the only
/// shared structure and parallel prefixes merge into it deterministically.
fn search_canonical_keys(n: usize, k: usize) -> HashSet<Vec<u8>> {
    // Sequentially expand the first two states worth of assignments, then
    // scan the remaining subtrees in parallel.
    let prefix_depth = if n >= 4 { 2 } else { 0 };
    if prefix_depth == 0 {
        let mut ctx = SearchCtx::new(n, k);
        ctx.fill_state(0);
        return ctx.found;
    }

    let mut prefixes = Vec::new();
    {
        let mut ctx = SearchCtx::new(n, k);
        collect_prefixes(&mut ctx, 0, prefix_depth, &mut prefixes);
    }
    prefixes
        .into_par_iter()
        .map(|succ| {
            let mut ctx = SearchCtx::new(n, k);
            ctx.succ = succ;
            ctx.sym_used = vec![0; k];
            for slot in 0..prefix_depth * k {
                if ctx.succ[slot].is_some() {
                    ctx.sym_used[slot % k] += 1;
                }
            }
            ctx.fill_state(prefix_depth);
            ctx.found
        })
        .reduce(HashSet::new, |mut acc, local| {
            acc.extend(local);
            acc
        })
}

fn collect_prefixes(
    ctx: &mut SearchCtx,
    state: usize,
    depth: usize,
    out: &mut Vec<Vec<Option<u8>>>,
) {
    if state == depth {
        out.push(ctx.succ.clone());
        return;
    }
    ctx.enumerate_state(state, &mut |ctx| {
        collect_prefixes(ctx, state + 1, depth, out);
    });
}

struct SearchCtx {
    n: usize,
    k: usize,
    succ: Vec<Option<u8>>,
    sym_used: Vec<u32>,
    found: HashSet<Vec<u8>>,
}

impl SearchCtx {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            succ: vec![None; n * k],
            sym_used: vec![0; k],
            found: HashSet::new(),
        }
    }

    fn fill_state(&mut self, state: usize) {
        if state == self.n {
            self.check_leaf();
            return;
        }
        self.enumerate_state(state, &mut |ctx| ctx.fill_state(state + 1));
    }

    /// Enumerate every non-empty edge assignment for `state`, invoking
    /// `next` for each one that keeps the BFS-order pruning condition
    /// satisfiable.
    fn enumerate_state(&mut self, state: usize, next: &mut dyn FnMut(&mut Self)) {
        self.enumerate_slots(state, 0, false, next);
    }

    fn enumerate_slots(
        &mut self,
        state: usize,
        symbol: usize,
        any_edge: bool,
        next: &mut dyn FnMut(&mut Self),
    ) {
        if symbol == self.k {
            if !any_edge {
                return; // out-degree >= 1
            }
            if state + 1 < self.n && !self.has_early_in_edge(state + 1, state) {
                return;
            }
            next(self);
            return;
        }
        let slot = state * self.k + symbol;
        self.enumerate_slots(state, symbol + 1, any_edge, next);
        for target in 0..self.n {
            self.succ[slot] = Some(target as u8);
            self.sym_used[symbol] += 1;
            self.enumerate_slots(state, symbol + 1, true, next);
            self.sym_used[symbol] -= 1;
            self.succ[slot] = None;
        }
    }

    /// Does `target` have an in-edge from any state `0..=upto`?
    fn has_early_in_edge(&self, target: usize, upto: usize) -> bool {
        let t = Some(target as u8);
        self.succ[..(upto + 1) * self.k].contains(&t)
    }

    fn check_leaf(&mut self) {
        if self.sym_used.contains(&0) {
            return; // full alphabet
        }
        if !strongly_connected_succ(&self.succ, self.n, self.k) {
            return;
        }
        if !minimal_from_succ(&self.succ, self.n, self.k) {
            return;
        }
        let key = canonical_key(&self.succ, self.n, self.k);
        self.found.insert(key);
    }
}

fn strongly_connected_succ(succ: &[Option<u8>], n: usize, k: usize) -> bool {
    strongly_connected(
        n,
        succ.iter()
            .enumerate()
            .filter_map(|(slot, s)| s.map(|t| (slot / k, t as usize))),
    )
}

/// Probabilistic distinctness at the equal-outgoing-probability setting,
/// by partition refinement.
///
/// The initial partition groups states by their per-symbol probability
/// signature: `1/out_degree` on existing edges, zero otherwise, which for
/// a fixed alphabet is exactly the symbol-presence pattern. Blocks split
/// while members disagree on any (symbol, successor-block) pair; the
/// machine is minimal when the fixed point leaves every state alone.
pub fn is_minimal_uniform(topology: &Topology) -> bool {
    minimal_from_succ(
        topology.succ_raw(),
        topology.n_states(),
        topology.alphabet_size(),
    )
}

fn minimal_from_succ(succ: &[Option<u8>], n: usize, k: usize) -> bool {
    // Initial blocks: symbol-presence pattern (which fixes the uniform
    // probabilities).
    let mut block = vec![0u32; n];
    {
        let mut ids: HashMap<[u64; 4], u32> = HashMap::new();
        for state in 0..n {
            let mut mask = [0u64; 4];
            for symbol in 0..k {
                if succ[state * k + symbol].is_some() {
                    mask[symbol / 64] |= 1 << (symbol % 64);
                }
            }
            let next = ids.len() as u32;
            block[state] = *ids.entry(mask).or_insert(next);
        }
        if ids.len() == n {
            return true;
        }
    }

    let mut n_blocks = 0usize;
    loop {
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut new_block = vec![0u32; n];
        for state in 0..n {
            let mut sig = Vec::with_capacity(k + 1);
            sig.push(block[state]);
            for symbol in 0..k {
                sig.push(match succ[state * k + symbol] {
                    Some(t) => block[t as usize],
                    None => u32::MAX,
                });
            }
            let next = ids.len() as u32;
            new_block[state] = *ids.entry(sig).or_insert(next);
        }
        let count = ids.len();
        if count == n {
            return true;
        }
        if count == n_blocks {
            return false;
        }
        n_blocks = count;
        block = new_block;
    }
}

/// Strong connectivity; trivial reachability in both directions.
pub fn is_strongly_connected(topology: &Topology) -> bool {
    topology.is_strongly_connected()
}

/// The canonical flat successor table: states relabeled by breadth-first
/// discovery order with symbol-ordered expansion, minimized over all
/// candidate roots. Byte 0 encodes an absent edge, `t + 1` a successor `t`.
fn canonical_key(succ: &[Option<u8>], n: usize, k: usize) -> Vec<u8> {
    let mut best: Option<Vec<u8>> = None;
    let mut relabel = vec![u8::MAX; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        relabel.iter_mut().for_each(|r| *r = u8::MAX);
        order.clear();
        relabel[root] = 0;
        order.push(root);
        let mut cursor = 0;
        while cursor < order.len() {
            let state = order[cursor];
            cursor += 1;
            for symbol in 0..k {
                if let Some(t) = succ[state * k + symbol] {
                    if relabel[t as usize] == u8::MAX {
                        relabel[t as usize] = order.len() as u8;
                        order.push(t as usize);
                    }
                }
            }
        }
        debug_assert_eq!(order.len(), n, "canonical form needs a connected machine");
        let mut key = Vec::with_capacity(n * k);
        for &state in &order {
            for symbol in 0..k {
                key.push(match succ[state * k + symbol] {
                    Some(t) => relabel[t as usize] + 1,
                    None => 0,
                });
            }
        }
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    best.expect("at least one root")
}

fn decode_key(key: &[u8]) -> Vec<Option<u8>> {
    key.iter()
        .map(|&b| if b == 0 { None } else { Some(b - 1) })
        .collect()
}

/// The input relabeled into its canonical form; the id is preserved.
/// Idempotent: canonicalizing a canonical machine is the identity.
pub fn canonicalize(topology: &Topology) -> Topology {
    let key = canonical_key(
        topology.succ_raw(),
        topology.n_states(),
        topology.alphabet_size(),
    );
    Topology::from_succ(
        topology.id(),
        topology.n_states(),
        topology.alphabet_size(),
        decode_key(&key),
    )
}

/// Serialized canonical edge list, identical for isomorphic machines and
/// distinct otherwise: `n{n}k{k}:` then per-state symbol tokens, `_` for
/// an absent edge.
pub fn canonical_encoding(topology: &Topology) -> String {
    let n = topology.n_states();
    let k = topology.alphabet_size();
    let key = canonical_key(topology.succ_raw(), n, k);
    let mut out = format!("n{n}k{k}:");
    for state in 0..n {
        if state > 0 {
            out.push(';');
        }
        for symbol in 0..k {
            if symbol > 0 {
                out.push(',');
            }
            match key[state * k + symbol] {
                0 => out.push('_'),
                b => {
                    let _ = write!(out, "{}", b - 1);
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct LibraryHeader {
    max_states: usize,
    alphabet_size: usize,
    census: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MachineRecord {
    id: String,
    n: usize,
    k: usize,
    edges: Vec<(usize, usize, usize)>,
}

/// Write the library: a JSON header line, then one JSON machine per line
/// with edges sorted by (from, symbol), so files diff cleanly.
pub fn save_library(library: &MachineLibrary, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = LibraryHeader {
        max_states: library.max_states,
        alphabet_size: library.alphabet_size,
        census: library.census.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for machine in &library.machines {
        let record = MachineRecord {
            id: machine.id().to_string(),
            n: machine.n_states(),
            k: machine.alphabet_size(),
            edges: machine
                .edges()
                .map(|(f, s, t)| (f, s.index(), t))
                .collect(),
        };
        serde_json::to_writer(&mut w, &record).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_library(path: impl AsRef<Path>) -> Result<MachineLibrary> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty library file".into()))??;
    let header: LibraryHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.census.len() != header.max_states {
        return Err(Error::Format(
            "census length does not match max_states".into(),
        ));
    }

    let mut machines = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut seen_encodings = HashSet::new();
    let mut per_n = vec![0usize; header.max_states];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MachineRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        if record.k != header.alphabet_size {
            return Err(Error::Format(format!(
                "machine {} has alphabet {} but the library alphabet is {}",
                record.id, record.k, header.alphabet_size
            )));
        }
        if record.n > header.max_states {
            return Err(Error::Format(format!(
                "machine {} has {} states, above the declared maximum {}",
                record.id, record.n, header.max_states
            )));
        }
        let topology = Topology::from_edges(record.id.clone(), record.n, record.k, &record.edges)?;
        if !topology.is_strongly_connected() {
            return Err(Error::Format(format!(
                "machine {} is not strongly connected",
                record.id
            )));
        }
        if !seen_ids.insert(record.id.clone()) {
            return Err(Error::Format(format!("duplicate machine id {}", record.id)));
        }
        if !seen_encodings.insert(canonical_encoding(&topology)) {
            return Err(Error::Format(format!(
                "machine {} duplicates another machine's canonical encoding",
                record.id
            )));
        }
        per_n[record.n - 1] += 1;
        machines.push(topology);
    }
    if per_n != header.census {
        return Err(Error::Format(format!(
            "census {:?} does not match machine counts {:?}",
            header.census, per_n
        )));
    }
    Ok(MachineLibrary {
        max_states: header.max_states,
        alphabet_size: header.alphabet_size,
        census: header.census,
        machines,
    })
}
