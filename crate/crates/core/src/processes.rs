//! Reference data generators: weighted hidden Markov machines that need
//! not be unifilar, with seeded simulation for tests and reproduction
//! runs.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{
    strongly_connected, DataSeries, StationaryDistribution, Symbol, Topology,
};
use crate::math::stationary_from_transition;

/// A weighted edge of a generator machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorEdge {
    pub from: usize,
    pub symbol: Symbol,
    pub to: usize,
    pub p: f64,
}

/// A generator: states, alphabet, and weighted edges. Unifilarity is NOT
/// required -- two edges may leave one state with the same symbol -- so
/// nonunifilar sources can be simulated even though they cannot be traced.
#[derive(Debug, Clone)]
pub struct GeneratorHmm {
    n_states: usize,
    alphabet_size: usize,
    edges: Vec<GeneratorEdge>,
}

impl GeneratorHmm {
    pub fn new(n_states: usize, alphabet_size: usize, mut edges: Vec<GeneratorEdge>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidGenerator("no states".into()));
        }
        edges.sort_by_key(|e| (e.from, e.symbol, e.to));
        let mut out_mass = vec![0.0f64; n_states];
        for e in &edges {
            if e.from >= n_states || e.to >= n_states {
                return Err(Error::InvalidGenerator(format!(
                    "edge ({}, {}, {}) references a state outside [0, {n_states})",
                    e.from, e.symbol.0, e.to
                )));
            }
            if e.symbol.index() >= alphabet_size {
                return Err(Error::InvalidGenerator(format!(
                    "edge symbol {} outside the alphabet", e.symbol.0
                )));
            }
            if !(e.p > 0.0 && e.p <= 1.0) {
                return Err(Error::InvalidGenerator(format!(
                    "edge probability {} outside (0, 1]", e.p
                )));
            }
            out_mass[e.from] += e.p;
        }
        for (state, mass) in out_mass.iter().enumerate() {
            if (mass - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidGenerator(format!(
                    "state {state} outgoing probabilities sum to {mass}"
                )));
            }
        }
        if !strongly_connected(n_states, edges.iter().map(|e| (e.from, e.to))) {
            return Err(Error::InvalidGenerator("not strongly connected".into()));
        }
        Ok(Self {
            n_states,
            alphabet_size,
            edges,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn edges(&self) -> &[GeneratorEdge] {
        &self.edges
    }

    /// False when some state has two outgoing edges with the same symbol.
    pub fn is_unifilar(&self) -> bool {
        self.edges
            .windows(2)
            .all(|w| (w[0].from, w[0].symbol) != (w[1].from, w[1].symbol))
    }

    /// Stationary distribution of the state-to-state chain.
    pub fn stationary(&self) -> StationaryDistribution {
        let n = self.n_states;
        let mut t = vec![0.0; n * n];
        for e in &self.edges {
            t[e.from * n + e.to] += e.p;
        }
        StationaryDistribution::from_probs(stationary_from_transition(&t, n))
    }
}

/// The built-in reference processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProcess {
    /// No two consecutive zeros; a two-state machine.
    GoldenMean,
    /// Maximal blocks of ones between zeros have even length; infinite
    /// Markov order, still two states.
    Even,
    /// The simple nonunifilar source: state A emits 1 on both outgoing
    /// edges, so observed data never pins down the hidden path.
    Sns,
}

impl BuiltinProcess {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinProcess::GoldenMean => "golden-mean",
            BuiltinProcess::Even => "even",
            BuiltinProcess::Sns => "sns",
        }
    }
}

impl FromStr for BuiltinProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "golden-mean" | "golden_mean" | "goldenmean" => Ok(BuiltinProcess::GoldenMean),
            "even" => Ok(BuiltinProcess::Even),
            "sns" => Ok(BuiltinProcess::Sns),
            other => Err(Error::InvalidArgument(format!(
                "unknown process {other:?} (expected golden-mean, even, or sns)"
            ))),
        }
    }
}

pub fn builtin(process: BuiltinProcess) -> GeneratorHmm {
    let edge = |from, symbol, to, p| GeneratorEdge {
        from,
        symbol: Symbol(symbol),
        to,
        p,
    };
    let edges = match process {
        BuiltinProcess::GoldenMean => vec![
            edge(0, 1, 0, 0.5),
            edge(0, 0, 1, 0.5),
            edge(1, 1, 0, 1.0),
        ],
        BuiltinProcess::Even => vec![
            edge(0, 0, 0, 0.5),
            edge(0, 1, 1, 0.5),
            edge(1, 1, 0, 1.0),
        ],
        BuiltinProcess::Sns => vec![
            edge(0, 1, 0, 0.5),
            edge(0, 1, 1, 0.5),
            edge(1, 1, 1, 0.5),
            edge(1, 0, 0, 0.5),
        ],
    };
    GeneratorHmm::new(2, 2, edges).expect("built-in machines are valid")
}

/// The unifilar topology underlying a built-in process, where one exists;
/// the nonunifilar source has none.
pub fn builtin_topology(process: BuiltinProcess) -> Option<Topology> {
    let edges: &[(usize, usize, usize)] = match process {
        BuiltinProcess::GoldenMean => &[(0, 1, 0), (0, 0, 1), (1, 1, 0)],
        BuiltinProcess::Even => &[(0, 0, 0), (0, 1, 1), (1, 1, 0)],
        BuiltinProcess::Sns => return None,
    };
    Some(Topology::from_edges(process.name(), 2, 2, edges).expect("built-in topologies are valid"))
}

/// Seeded simulation. The start state is drawn from the stationary
/// distribution unless pinned.
pub fn generate_series(
    hmm: &GeneratorHmm,
    length: usize,
    seed: u64,
    start: Option<usize>,
) -> DataSeries {
    if let Some(s) = start {
        assert!(s < hmm.n_states(), "pinned start state out of range");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-state cumulative edge table.
    let mut table: Vec<Vec<(f64, Symbol, usize)>> = vec![Vec::new(); hmm.n_states()];
    for e in hmm.edges() {
        let acc = table[e.from].last().map_or(0.0, |t| t.0) + e.p;
        table[e.from].push((acc, e.symbol, e.to));
    }

    let mut state = start.unwrap_or_else(|| {
        let pi = hmm.stationary();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = hmm.n_states() - 1;
        for (i, &p) in pi.probs().iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        chosen
    });

    let mut symbols = Vec::with_capacity(length);
    for _ in 0..length {
        let u: f64 = rng.random();
        let row = &table[state];
        let target = u * row.last().expect("out-degree >= 1").0;
        let mut idx = row.len() - 1;
        for (i, entry) in row.iter().enumerate() {
            if target < entry.0 {
                idx = i;
                break;
            }
        }
        let (_, symbol, to) = row[idx];
        symbols.push(symbol);
        state = to;
    }
    DataSeries::new(symbols, hmm.alphabet_size()).expect("generated symbols are in range")
}

#[derive(Serialize, Deserialize)]
struct GeneratorRecord {
    #[serde(default)]
    id: Option<String>,
    n: usize,
    k: usize,
    edges: Vec<(usize, usize, usize, f64)>,
}

/// Load a user machine: the library record shape with a probability on
/// each edge, `{"n": ..., "k": ..., "edges": [[from, symbol, to, p], ...]}`.
pub fn load_generator(path: impl AsRef<Path>) -> Result<GeneratorHmm> {
    let text = std::fs::read_to_string(path)?;
    let record: GeneratorRecord =
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    let edges = record
        .edges
        .iter()
        .map(|&(from, symbol, to, p)| {
            if symbol > 255 {
                return Err(Error::InvalidGenerator(format!("symbol {symbol} too large")));
            }
            Ok(GeneratorEdge {
                from,
                symbol: Symbol(symbol as u8),
                to,
                p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GeneratorHmm::new(record.n, record.k, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_mean_stationary() {
        let pi = builtin(BuiltinProcess::GoldenMean).stationary();
        assert!((pi.probs()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.probs()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn even_information_coordinates() {
        use crate::machine::{
            entropy_rate, stationary_distribution, statistical_complexity,
            TransitionAssignment,
        };
        let top = builtin_topology(BuiltinProcess::Even).unwrap();
        let theta = TransitionAssignment::uniform(&top);
        let pi = stationary_distribution(&top, &theta);
        assert!((entropy_rate(&top, &theta, &pi) - 2.0 / 3.0).abs() < 1e-12);
        assert!((statistical_complexity(&pi) - 0.9182958340544896).abs() < 1e-12);
    }

    #[test]
    fn sns_is_nonunifilar() {
        let sns = builtin(BuiltinProcess::Sns);
        assert!(!sns.is_unifilar());
        assert!(builtin(BuiltinProcess::GoldenMean).is_unifilar());
        assert!(builtin_topology(BuiltinProcess::Sns).is_none());
    }

    #[test]
    fn generation_is_seeded_and_length_exact() {
        let gm = builtin(BuiltinProcess::GoldenMean);
        assert_eq!(generate_series(&gm, 0, 1, None).len(), 0);
        let a = generate_series(&gm, 500, 123, None);
        let b = generate_series(&gm, 500, 123, None);
        assert_eq!(a, b);
        let c = generate_series(&gm, 500, 124, None);
        assert_ne!(a, c);
    }

    #[test]
    fn golden_mean_never_emits_double_zero() {
        let gm = builtin(BuiltinProcess::GoldenMean);
        let d = generate_series(&gm, 20_000, 7, None);
        assert!(!d.to_digits().contains("00"));
    }

    #[test]
    fn even_process_interior_one_blocks_have_even_length() {
        let even = builtin(BuiltinProcess::Even);
        let digits = generate_series(&even, 20_000, 8, None).to_digits();
        // Interior blocks only: boundary blocks may be truncated.
        let mut parts = digits.split('0').collect::<Vec<_>>();
        if parts.len() > 2 {
            parts.remove(0);
            parts.pop();
            for block in parts {
                assert_eq!(block.len() % 2, 0, "odd interior 1-block");
            }
        }
    }

    #[test]
    fn even_from_state_b_must_open_with_one() {
        let even = builtin(BuiltinProcess::Even);
        for seed in 0..20 {
            let d = generate_series(&even, 10, seed, Some(1));
            assert_eq!(d.symbols()[0], Symbol(1));
        }
    }

    #[test]
    fn empirical_symbol_frequency_matches_stationary() {
        // Golden Mean: Pr(1) = pi_A/2 + pi_B = 2/3.
        let gm = builtin(BuiltinProcess::GoldenMean);
        let n = 1_000_000;
        let d = generate_series(&gm, n, 99, None);
        let ones = d.symbols().iter().filter(|s| s.0 == 1).count() as f64;
        let p = 2.0 / 3.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones / n as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn generator_validation() {
        let bad_sum = GeneratorHmm::new(
            1,
            2,
            vec![GeneratorEdge {
                from: 0,
                symbol: Symbol(0),
                to: 0,
                p: 0.7,
            }],
        );
        assert!(matches!(bad_sum, Err(Error::InvalidGenerator(_))));

        let disconnected = GeneratorHmm::new(
            2,
            2,
            vec![
                GeneratorEdge {
                    from: 0,
                    symbol: Symbol(0),
                    to: 0,
                    p: 1.0,
                },
                GeneratorEdge {
                    from: 1,
                    symbol: Symbol(1),
                    to: 0,
                    p: 1.0,
                },
            ],
        );
        assert!(matches!(disconnected, Err(Error::InvalidGenerator(_))));
    }

    #[test]
    fn load_generator_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("machine.json");
        std::fs::write(
            &path,
            "{\"n\":2,\"k\":2,\"edges\":[[0,1,0,0.5],[0,0,1,0.5],[1,1,0,1.0]]}",
        )
        .unwrap();
        let hmm = load_generator(&path).unwrap();
        assert_eq!(hmm.n_states(), 2);
        assert!(hmm.is_unifilar());
        let pi = hmm.stationary();
        assert!((pi.probs()[0] - 2.0 / 3.0).abs() < 1e-12);
    }
}
