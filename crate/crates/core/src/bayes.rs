//! Closed-form Dirichlet-conjugate evidence and the three-level posterior:
//! transition probabilities, then start states, then topologies.
//!
//! All probability arithmetic runs in natural-log space through log-gamma
//! and log-sum-exp; a 2^17-symbol series drives raw likelihoods far below
//! floating-point range. Rejected (topology, start) pairs carry zero
//! likelihood and are excluded from normalization rather than carried at
//! negative infinity.

use rayon::prelude::*;

use crate::enumeration::MachineLibrary;
use crate::error::{Error, Result};
use crate::machine::{
    log_likelihood, DataSeries, EdgeCounts, Symbol, Topology, TransitionAssignment,
};
use crate::math::{ln_gamma, log_sum_exp};

/// Symmetric Dirichlet pseudocounts over each state's outgoing edges.
///
/// The default assigns one pseudocount per edge -- a uniform density over
/// every transition-probability simplex. The strength is configured per
/// run, not per edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletPrior {
    alpha: f64,
}

impl DirichletPrior {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet pseudocount must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    /// Pseudocount for one edge; the same for every `(state, symbol)`.
    pub fn alpha(&self, _state: usize, _symbol: Symbol) -> f64 {
        self.alpha
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha
    }
}

impl Default for DirichletPrior {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Structural prior over a candidate set: `Pr(M) ~ exp(-beta * n_states)`,
/// with a uniform prior over start states within each machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPriorSpec {
    beta: f64,
}

impl ModelPriorSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "model size penalty must be nonnegative and finite, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for ModelPriorSpec {
    fn default() -> Self {
        // Structurally conservative for one- to five-state binary
        // libraries: small machines win until the data demands more.
        Self { beta: 4.0 }
    }
}

/// Log marginal likelihood of the data for one (topology, start) pair,
/// integrating the path likelihood against the Dirichlet prior:
///
/// ```text
/// sum over multi-edge states s of
///     ln G(a(s.)) - sum_x ln G(a(sx))
///   + sum_x ln G(a(sx) + n(sx)) - ln G(a(s.) + n(s.))
/// ```
///
/// Single-edge states contribute zero. With empty counts this is zero
/// (evidence one).
pub fn log_evidence_given_start(
    topology: &Topology,
    counts: &EdgeCounts,
    prior: &DirichletPrior,
) -> f64 {
    let k = topology.alphabet_size();
    let mut total = 0.0;
    for state in topology.multi_edge_states() {
        let mut alpha_dot = 0.0;
        let mut visits = 0u64;
        let mut term = 0.0;
        for symbol in 0..k {
            let symbol = Symbol(symbol as u8);
            if topology.successor(state, symbol).is_none() {
                continue;
            }
            let a = prior.alpha(state, symbol);
            let n = counts.count(state, symbol);
            alpha_dot += a;
            visits += n;
            term += ln_gamma(a + n as f64) - ln_gamma(a);
        }
        term += ln_gamma(alpha_dot) - ln_gamma(alpha_dot + visits as f64);
        total += term;
    }
    total
}

/// Posterior mean transition probabilities,
/// `E[p(x|s)] = (a(sx) + n(sx)) / (a(s.) + n(s.))` on multi-edge states
/// and exactly one on single-edge states. With zero counts this is the
/// prior mean.
pub fn transition_posterior_mean(
    topology: &Topology,
    counts: &EdgeCounts,
    prior: &DirichletPrior,
) -> TransitionAssignment {
    let k = topology.alphabet_size();
    let mut probs = vec![0.0; topology.n_states() * k];
    for state in 0..topology.n_states() {
        if topology.out_degree(state) == 1 {
            for symbol in 0..k {
                if topology.successor(state, Symbol(symbol as u8)).is_some() {
                    probs[state * k + symbol] = 1.0;
                }
            }
            continue;
        }
        let mut alpha_dot = 0.0;
        let mut visits = 0u64;
        for symbol in 0..k {
            let symbol = Symbol(symbol as u8);
            if topology.successor(state, symbol).is_some() {
                alpha_dot += prior.alpha(state, symbol);
                visits += counts.count(state, symbol);
            }
        }
        let denom = alpha_dot + visits as f64;
        for symbol in 0..k {
            let symbol = Symbol(symbol as u8);
            if topology.successor(state, symbol).is_some() {
                probs[state * k + symbol.index()] =
                    (prior.alpha(state, symbol) + counts.count(state, symbol) as f64) / denom;
            }
        }
    }
    TransitionAssignment::new(topology, probs).expect("posterior mean satisfies the invariants")
}

/// Per-start log evidence for every start state; `None` for rejecting
/// starts.
pub fn start_log_evidences(
    topology: &Topology,
    data: &DataSeries,
    prior: &DirichletPrior,
) -> Vec<Option<f64>> {
    (0..topology.n_states())
        .map(|start| {
            topology
                .trace_path(start, data)
                .map(|counts| log_evidence_given_start(topology, &counts, prior))
        })
        .collect()
}

fn normalize_start_posterior(log_evidences: &[Option<f64>]) -> Option<Vec<f64>> {
    // Uniform start prior: the constant 1/n cancels in the ratio.
    let finite: Vec<f64> = log_evidences.iter().filter_map(|v| *v).collect();
    if finite.is_empty() {
        return None;
    }
    let log_z = log_sum_exp(&finite);
    Some(
        log_evidences
            .iter()
            .map(|v| match v {
                Some(le) => (le - log_z).exp(),
                None => 0.0,
            })
            .collect(),
    )
}

/// Posterior over start states, `Pr(s0 | D, M)`, normalized over the
/// accepting starts; `None` when every start rejects the series.
pub fn start_state_posterior(
    topology: &Topology,
    data: &DataSeries,
    prior: &DirichletPrior,
) -> Option<Vec<f64>> {
    normalize_start_posterior(&start_log_evidences(topology, data, prior))
}

/// Start-state posterior when the transition probabilities are known
/// rather than integrated out: the path likelihood replaces the evidence.
pub fn start_state_posterior_known_theta(
    topology: &Topology,
    theta: &TransitionAssignment,
    data: &DataSeries,
) -> Option<Vec<f64>> {
    let log_liks: Vec<Option<f64>> = (0..topology.n_states())
        .map(|start| {
            topology
                .trace_path(start, data)
                .map(|counts| log_likelihood(topology, theta, &counts))
        })
        .collect();
    normalize_start_posterior(&log_liks)
}

/// Log evidence of the data for a topology, averaging over start-state
/// uncertainty with the uniform start prior; `None` when every start
/// rejects.
pub fn model_log_evidence(
    topology: &Topology,
    data: &DataSeries,
    prior: &DirichletPrior,
) -> Option<f64> {
    model_log_evidence_from(topology, &start_log_evidences(topology, data, prior))
}

fn model_log_evidence_from(topology: &Topology, log_evidences: &[Option<f64>]) -> Option<f64> {
    let log_start_prior = -(topology.n_states() as f64).ln();
    let weighted: Vec<f64> = log_evidences
        .iter()
        .filter_map(|v| v.map(|le| le + log_start_prior))
        .collect();
    if weighted.is_empty() {
        None
    } else {
        Some(log_sum_exp(&weighted))
    }
}

/// Prior probabilities over the library's machines:
/// `Pr(M_i) = exp(-beta n_i) / sum_j exp(-beta n_j)`, computed stably.
pub fn model_prior(library: &MachineLibrary, spec: &ModelPriorSpec) -> Vec<f64> {
    let logs: Vec<f64> = library
        .machines()
        .iter()
        .map(|m| -spec.beta() * m.n_states() as f64)
        .collect();
    let log_z = log_sum_exp(&logs);
    logs.iter().map(|l| (l - log_z).exp()).collect()
}

/// One library machine's inference results.
#[derive(Debug, Clone)]
pub struct PosteriorRow {
    pub library_index: usize,
    pub id: String,
    pub n_states: usize,
    /// Whether at least one start state accepts the series.
    pub accepted: bool,
    /// `ln Pr(D | M)`; `-inf` when rejected.
    pub log_evidence: f64,
    /// `Pr(M | D, library)`; exactly zero when rejected.
    pub posterior: f64,
    /// Per-start log evidence; `None` for rejecting starts. Empty when the
    /// whole machine rejects.
    pub start_log_evidence: Vec<Option<f64>>,
    /// `Pr(s0 | D, M)`; zeros for rejecting starts. Empty when the whole
    /// machine rejects.
    pub start_posterior: Vec<f64>,
    /// Edge counts per accepting start, cached for posterior sampling.
    pub(crate) start_counts: Vec<Option<EdgeCounts>>,
}

/// Posterior over a machine library given one series: per-machine log
/// evidence, normalized posterior weights, and per-start detail.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    rows: Vec<PosteriorRow>,
    accepting: usize,
}

impl PosteriorTable {
    pub fn rows(&self) -> &[PosteriorRow] {
        &self.rows
    }

    pub fn accepting_count(&self) -> usize {
        self.accepting
    }

    /// The maximum a posteriori row; exact ties resolve to the smaller
    /// canonical id, which is the smaller library index. `None` when
    /// nothing accepts.
    pub fn map_row(&self) -> Option<&PosteriorRow> {
        let mut best: Option<&PosteriorRow> = None;
        for row in self.rows.iter().filter(|r| r.accepted) {
            match best {
                Some(b) if row.posterior <= b.posterior => {}
                _ => best = Some(row),
            }
        }
        best
    }
}

/// Scan the whole library against the series: trace every (machine, start)
/// pair, compute evidences, and normalize `Pr(M | D)` over the accepting
/// machines under the size-penalized prior.
///
/// The per-machine work is a pure function, so the scan is a parallel map;
/// results are keyed by library order, making the output identical for any
/// worker count.
pub fn topology_posterior(
    library: &MachineLibrary,
    data: &DataSeries,
    prior: &DirichletPrior,
    spec: &ModelPriorSpec,
) -> PosteriorTable {
    let mut rows: Vec<PosteriorRow> = library
        .machines()
        .par_iter()
        .enumerate()
        .map(|(library_index, machine)| {
            let mut start_log_evidence = Vec::with_capacity(machine.n_states());
            let mut start_counts = Vec::with_capacity(machine.n_states());
            for start in 0..machine.n_states() {
                match machine.trace_path(start, data) {
                    Some(counts) => {
                        start_log_evidence
                            .push(Some(log_evidence_given_start(machine, &counts, prior)));
                        start_counts.push(Some(counts));
                    }
                    None => {
                        start_log_evidence.push(None);
                        start_counts.push(None);
                    }
                }
            }
            let log_evidence = model_log_evidence_from(machine, &start_log_evidence);
            let accepted = log_evidence.is_some();
            let start_posterior = if accepted {
                normalize_start_posterior(&start_log_evidence).expect("accepted machine")
            } else {
                Vec::new()
            };
            PosteriorRow {
                library_index,
                id: machine.id().to_string(),
                n_states: machine.n_states(),
                accepted,
                log_evidence: log_evidence.unwrap_or(f64::NEG_INFINITY),
                posterior: 0.0,
                start_log_evidence: if accepted { start_log_evidence } else { Vec::new() },
                start_posterior,
                start_counts: if accepted { start_counts } else { Vec::new() },
            }
        })
        .collect();

    let weights: Vec<f64> = rows
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.log_evidence - spec.beta() * r.n_states as f64)
        .collect();
    let accepting = weights.len();
    if accepting > 0 {
        let log_z = log_sum_exp(&weights);
        for row in rows.iter_mut().filter(|r| r.accepted) {
            row.posterior =
                (row.log_evidence - spec.beta() * row.n_states as f64 - log_z).exp();
        }
    }
    PosteriorTable { rows, accepting }
}

/// How many library machines have at least one accepting start state.
pub fn accepting_count(library: &MachineLibrary, data: &DataSeries) -> usize {
    library
        .machines()
        .par_iter()
        .filter(|machine| (0..machine.n_states()).any(|s| machine.trace_path(s, data).is_some()))
        .count()
}
