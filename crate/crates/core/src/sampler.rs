//! Sampling the posterior hierarchy: topology, then start state, then
//! transition probabilities, then the induced information coordinates.
//!
//! Each sample owns an RNG stream derived from `(seed, sample index)`, so
//! the sample list is bit-identical for any worker count and the work
//! parallelizes over indices with a deterministic assembly.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::bayes::{DirichletPrior, PosteriorTable};
use crate::enumeration::MachineLibrary;
use crate::error::{Error, Result};
use crate::machine::{
    entropy_rate, stationary_distribution, statistical_complexity, StationaryDistribution,
    Symbol, Topology, TransitionAssignment,
};
use crate::math::stream_rng;

/// Whether each sample draws its own topology from the posterior or every
/// sample reuses the maximum a posteriori topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Full,
    Map,
}

impl SampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleMode::Full => "full",
            SampleMode::Map => "map",
        }
    }
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SampleMode::Full),
            "map" => Ok(SampleMode::Map),
            other => Err(Error::InvalidArgument(format!(
                "unknown sample mode {other:?} (expected full or map)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub mode: SampleMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 50_000,
            seed: 0,
            mode: SampleMode::Full,
        }
    }
}

/// One draw from the posterior hierarchy with its derived quantities.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub topology_index: usize,
    pub topology_id: String,
    pub start_state: usize,
    pub theta: TransitionAssignment,
    pub pi: StationaryDistribution,
    pub h_mu: f64,
    pub c_mu: f64,
}

/// Standard Gamma-normalization Dirichlet draw; components are positive
/// and sum to one within 1e-12.
pub fn dirichlet_sample<R: Rng>(alphas: &[f64], rng: &mut R) -> Vec<f64> {
    debug_assert!(alphas.iter().all(|&a| a > 0.0));
    let mut draws: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
            if g > 0.0 {
                g
            } else {
                f64::MIN_POSITIVE
            }
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in draws.iter_mut() {
        *d /= total;
    }
    draws
}

/// Generate `config.n_samples` draws of (topology, start, theta) from the
/// posterior the table describes, evaluating the stationary distribution,
/// entropy rate, and statistical complexity for each.
///
/// With an empty series the table is the prior, so this samples the prior
/// hierarchy. Errors when no topology accepts the data.
pub fn sample_posterior(
    library: &MachineLibrary,
    table: &PosteriorTable,
    prior: &DirichletPrior,
    config: &SamplerConfig,
) -> Result<Vec<PosteriorSample>> {
    if table.accepting_count() == 0 {
        return Err(Error::NoAcceptingTopology);
    }

    // Cumulative posterior over accepted rows, in library (id) order.
    let accepted: Vec<usize> = table
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.accepted)
        .map(|(i, _)| i)
        .collect();
    let mut cumulative = Vec::with_capacity(accepted.len());
    let mut acc = 0.0;
    for &row in &accepted {
        acc += table.rows()[row].posterior;
        cumulative.push(acc);
    }

    // Per accepted row, cumulative start posterior.
    let start_cumulative: Vec<Vec<f64>> = accepted
        .iter()
        .map(|&row| {
            let mut acc = 0.0;
            table.rows()[row]
                .start_posterior
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();

    let map_pos = match config.mode {
        SampleMode::Map => {
            let map_row = table.map_row().expect("accepting topology exists");
            Some(
                accepted
                    .binary_search(&map_row.library_index)
                    .expect("map row is accepted"),
            )
        }
        SampleMode::Full => None,
    };

    let samples = (0..config.n_samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = stream_rng(config.seed, index as u64);
            let pos = match map_pos {
                Some(p) => p,
                None => pick_cumulative(&cumulative, rng.random::<f64>()),
            };
            let row = &table.rows()[accepted[pos]];
            let machine = &library.machines()[row.library_index];
            let start = pick_cumulative(&start_cumulative[pos], rng.random::<f64>());
            let counts = row.start_counts[start]
                .as_ref()
                .expect("sampled start accepts");
            let theta = sample_theta(machine, counts, prior, &mut rng);
            let pi = stationary_distribution(machine, &theta);
            let h_mu = entropy_rate(machine, &theta, &pi);
            let c_mu = statistical_complexity(&pi);
            PosteriorSample {
                topology_index: row.library_index,
                topology_id: row.id.clone(),
                start_state: start,
                theta,
                pi,
                h_mu,
                c_mu,
            }
        })
        .collect();
    Ok(samples)
}

fn pick_cumulative(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative.last().copied().unwrap_or(1.0);
    match cumulative.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
        Ok(i) | Err(i) => i.min(cumulative.len() - 1),
    }
}

/// Draw transition probabilities from the per-state Dirichlet posteriors;
/// single-edge states keep probability one without a draw.
fn sample_theta<R: Rng>(
    machine: &Topology,
    counts: &crate::machine::EdgeCounts,
    prior: &DirichletPrior,
    rng: &mut R,
) -> TransitionAssignment {
    let k = machine.alphabet_size();
    let mut probs = vec![0.0; machine.n_states() * k];
    for state in 0..machine.n_states() {
        let edges: Vec<usize> = (0..k)
            .filter(|&x| machine.successor(state, Symbol(x as u8)).is_some())
            .collect();
        if edges.len() == 1 {
            probs[state * k + edges[0]] = 1.0;
            continue;
        }
        let alphas: Vec<f64> = edges
            .iter()
            .map(|&x| {
                prior.alpha(state, Symbol(x as u8)) + counts.count(state, Symbol(x as u8)) as f64
            })
            .collect();
        let draw = dirichlet_sample(&alphas, rng);
        for (&x, &p) in edges.iter().zip(&draw) {
            probs[state * k + x] = p;
        }
    }
    TransitionAssignment::new(machine, probs).expect("sampled rows are normalized")
}

/// Mean and 95% equal-tailed credible interval of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
}

/// Empirical equal-tailed credible interval: the `(1-level)/2` and
/// `(1+level)/2` quantiles with linear interpolation between order
/// statistics.
pub fn credible_interval(values: &[f64], level: f64) -> (f64, f64) {
    assert!(!values.is_empty(), "credible interval of no samples");
    assert!((0.0..=1.0).contains(&level));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    (quantile(&sorted, tail), quantile(&sorted, 1.0 - tail))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64], level: f64) -> SummaryStats {
    let (ci_low, ci_high) = credible_interval(values, level);
    SummaryStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        ci_low,
        ci_high,
        count: values.len(),
    }
}

/// Silverman's rule of thumb, `1.06 * sd * n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// A kernel density estimate evaluated on a regular grid, or the explicit
/// degeneracy marker when the samples carry no variation and no density
/// can be drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum KdeOutcome {
    Degenerate { value: f64 },
    Curve(KdeCurve),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Gaussian kernel density estimate on a grid spanning four bandwidths
/// beyond the sample range. `bandwidth = None` applies Silverman's rule.
pub fn gaussian_kde(values: &[f64], grid_size: usize, bandwidth: Option<f64>) -> KdeOutcome {
    assert!(!values.is_empty(), "kde of no samples");
    assert!(grid_size >= 2, "kde needs at least two grid points");
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(values));
    if !(h > 0.0 && h.is_finite()) {
        return KdeOutcome::Degenerate { value: values[0] };
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = min - 4.0 * h;
    let hi = max + 4.0 * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let xs: Vec<f64> = (0..grid_size).map(|i| lo + i as f64 * step).collect();
    let density: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let sum: f64 = values
                .iter()
                .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum();
            norm * sum
        })
        .collect();
    KdeOutcome::Curve(KdeCurve {
        xs,
        density,
        bandwidth: h,
    })
}

/// Write samples as CSV with the header
/// `index,topology_id,start_state,h_mu,c_mu`.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[PosteriorSample]) -> std::io::Result<()> {
    writeln!(w, "index,topology_id,start_state,h_mu,c_mu")?;
    for (index, s) in samples.iter().enumerate() {
        writeln!(
            w,
            "{index},{},{},{},{}",
            s.topology_id, s.start_state, s.h_mu, s.c_mu
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{topology_posterior, ModelPriorSpec};
    use crate::enumeration::build_library;
    use crate::machine::DataSeries;

    #[test]
    fn dirichlet_draws_sum_to_one() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let draw = dirichlet_sample(&[1.0, 2.0, 0.5], &mut rng);
            assert!(draw.iter().all(|&p| p > 0.0));
            assert!((draw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_flat_mean_is_half() {
        let mut rng = stream_rng(2, 0);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += dirichlet_sample(&[1.0, 1.0], &mut rng)[0];
        }
        assert!((acc / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn dirichlet_concentrates_at_large_alpha() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..1000 {
            let draw = dirichlet_sample(&[1e6, 1e6], &mut rng);
            assert!((draw[0] - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn zero_samples_is_empty() {
        let lib = build_library(1..=2, 2).unwrap();
        let data = DataSeries::from_digits("1101", 2).unwrap();
        let table = topology_posterior(
            &lib,
            &data,
            &DirichletPrior::default(),
            &ModelPriorSpec::default(),
        );
        let config = SamplerConfig {
            n_samples: 0,
            ..Default::default()
        };
        let samples =
            sample_posterior(&lib, &table, &DirichletPrior::default(), &config).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn sampling_is_reproducible_and_thread_count_invariant() {
        let lib = build_library(1..=2, 2).unwrap();
        let data = DataSeries::from_digits("110110", 2).unwrap();
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::default());
        let config = SamplerConfig {
            n_samples: 400,
            seed: 42,
            mode: SampleMode::Full,
        };
        let run = || {
            let mut buf = Vec::new();
            let samples = sample_posterior(&lib, &table, &prior, &config).unwrap();
            write_samples_csv(&mut buf, &samples).unwrap();
            buf
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(a, single);
    }

    #[test]
    fn samples_satisfy_machine_invariants() {
        let lib = build_library(1..=3, 2).unwrap();
        let data = DataSeries::from_digits("11011011110", 2).unwrap();
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::default());
        let config = SamplerConfig {
            n_samples: 500,
            seed: 7,
            mode: SampleMode::Full,
        };
        for s in sample_posterior(&lib, &table, &prior, &config).unwrap() {
            let machine = &lib.machines()[s.topology_index];
            for state in 0..machine.n_states() {
                let row: f64 = (0..2).map(|x| s.theta.prob(state, Symbol(x as u8))).sum();
                assert!((row - 1.0).abs() < 1e-12);
            }
            // pi T = pi residual.
            let n = machine.n_states();
            for j in 0..n {
                let mut flow = 0.0;
                for (from, symbol, to) in machine.edges() {
                    if to == j {
                        flow += s.pi.probs()[from] * s.theta.prob(from, symbol);
                    }
                }
                assert!((flow - s.pi.probs()[j]).abs() <= 1e-10);
            }
            assert!((0.0..=1.0).contains(&s.h_mu));
            assert!((0.0..=(n as f64).log2().max(0.0)).contains(&s.c_mu));
        }
    }

    #[test]
    fn no_accepting_topology_is_an_error() {
        // A library of one two-cycle machine rejects "11".
        let lib = {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("cycle.jsonl");
            std::fs::write(
                &path,
                "{\"max_states\":2,\"alphabet_size\":2,\"census\":[0,1]}\n\
                 {\"id\":\"n2k2c00000\",\"n\":2,\"k\":2,\"edges\":[[0,1,1],[1,0,0]]}\n",
            )
            .unwrap();
            crate::enumeration::load_library(&path).unwrap()
        };
        let data = DataSeries::from_digits("11", 2).unwrap();
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::default());
        let err = sample_posterior(&lib, &table, &prior, &SamplerConfig::default());
        assert!(matches!(err, Err(Error::NoAcceptingTopology)));
    }

    #[test]
    fn prior_sampling_census_matches_flat_prior() {
        // With no data and beta = 0 the topology draw is uniform over the
        // library; compare per-state-count frequencies by chi-square.
        let lib = build_library(1..=3, 2).unwrap();
        let data = DataSeries::from_digits("", 2).unwrap();
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::new(0.0).unwrap());
        let config = SamplerConfig {
            n_samples: 20_000,
            seed: 11,
            mode: SampleMode::Full,
        };
        let samples = sample_posterior(&lib, &table, &prior, &config).unwrap();
        let mut observed = [0usize; 3];
        for s in &samples {
            observed[lib.machines()[s.topology_index].n_states() - 1] += 1;
        }
        let total = config.n_samples as f64;
        let census = lib.census();
        let lib_total: usize = census.iter().sum();
        let mut chi2 = 0.0;
        for i in 0..3 {
            let expected = total * census[i] as f64 / lib_total as f64;
            chi2 += (observed[i] as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 15.0, "chi-square {chi2} too large for 2 dof");
    }

    #[test]
    fn full_and_map_agree_when_posterior_is_concentrated() {
        let lib = build_library(1..=2, 2).unwrap();
        // Long Golden Mean-looking data pins its topology.
        let text = "110101101101101011011010110110101101101011010110".repeat(40);
        let data = DataSeries::from_digits(&text, 2).unwrap();
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::default());
        let map = table.map_row().unwrap();
        assert!(map.posterior > 0.9999, "posterior {}", map.posterior);

        let n = 20_000;
        let full = sample_posterior(
            &lib,
            &table,
            &prior,
            &SamplerConfig {
                n_samples: n,
                seed: 5,
                mode: SampleMode::Full,
            },
        )
        .unwrap();
        let map_samples = sample_posterior(
            &lib,
            &table,
            &prior,
            &SamplerConfig {
                n_samples: n,
                seed: 6,
                mode: SampleMode::Map,
            },
        )
        .unwrap();
        let hs: Vec<f64> = full.iter().map(|s| s.h_mu).collect();
        let hm: Vec<f64> = map_samples.iter().map(|s| s.h_mu).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let (mf, mm) = (mean(&hs), mean(&hm));
        let se = (sd(&hs, mf).powi(2) / n as f64 + sd(&hm, mm).powi(2) / n as f64).sqrt();
        assert!(
            (mf - mm).abs() <= 3.0 * se,
            "means {mf} vs {mm} differ beyond 3 MC standard errors ({se})"
        );
    }

    #[test]
    fn known_even_topology_recovers_the_half_probability() {
        // Pin the candidate set to the Even machine itself and check that
        // the sampled posterior for its free edge concentrates around the
        // generating value 1/2.
        use crate::enumeration::MachineLibrary;
        use crate::processes::{builtin, builtin_topology, generate_series, BuiltinProcess};

        let top = builtin_topology(BuiltinProcess::Even).unwrap();
        let lib = MachineLibrary::from_machines(vec![top], 2).unwrap();
        let data = generate_series(&builtin(BuiltinProcess::Even), 1 << 14, 2, None);
        let prior = DirichletPrior::default();
        let table = topology_posterior(&lib, &data, &prior, &ModelPriorSpec::default());
        let config = SamplerConfig {
            n_samples: 20_000,
            seed: 21,
            mode: SampleMode::Map,
        };
        let samples = sample_posterior(&lib, &table, &prior, &config).unwrap();
        let p0: Vec<f64> = samples
            .iter()
            .map(|s| s.theta.prob(0, Symbol(0)))
            .collect();
        let (lo, hi) = credible_interval(&p0, 0.95);
        assert!(lo <= 0.5 && 0.5 <= hi, "95% CI ({lo}, {hi}) misses 1/2");
        assert!(hi - lo < 0.05, "CI ({lo}, {hi}) has not concentrated");
    }

    #[test]
    fn credible_interval_basics() {
        assert_eq!(credible_interval(&[2.5; 10], 0.95), (2.5, 2.5));

        let n = 1000;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let (lo, hi) = credible_interval(&grid, 0.95);
        assert!((lo - 0.025).abs() <= 1.0 / n as f64);
        assert!((hi - 0.975).abs() <= 1.0 / n as f64);
    }

    #[test]
    fn credible_interval_matches_beta_quantiles() {
        // Beta(2, 2) has CDF 3x^2 - 2x^3; invert by bisection.
        let inv_cdf = |q: f64| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 3.0 * mid * mid - 2.0 * mid * mid * mid < q {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let mut rng = stream_rng(9, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| dirichlet_sample(&[2.0, 2.0], &mut rng)[0])
            .collect();
        let (lo, hi) = credible_interval(&draws, 0.95);
        assert!((lo - inv_cdf(0.025)).abs() < 0.01);
        assert!((hi - inv_cdf(0.975)).abs() < 0.01);
    }

    #[test]
    fn kde_single_sample_integrates_to_one() {
        let out = gaussian_kde(&[3.0], 801, Some(0.5));
        let KdeOutcome::Curve(curve) = out else {
            panic!("expected a curve");
        };
        let step = curve.xs[1] - curve.xs[0];
        let integral: f64 = curve
            .density
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * step)
            .sum();
        assert!((integral - 1.0).abs() < 1e-2);
    }

    #[test]
    fn kde_degenerates_on_constant_samples() {
        let out = gaussian_kde(&[1.25; 50], 64, None);
        assert_eq!(out, KdeOutcome::Degenerate { value: 1.25 });
    }

    #[test]
    fn kde_separates_two_clusters() {
        let mut values = vec![0.0; 40];
        values.extend(vec![10.0; 40]);
        let KdeOutcome::Curve(curve) = gaussian_kde(&values, 512, Some(0.5)) else {
            panic!("expected a curve");
        };
        let maxima: Vec<usize> = (1..curve.density.len() - 1)
            .filter(|&i| {
                curve.density[i] > curve.density[i - 1] && curve.density[i] > curve.density[i + 1]
            })
            .collect();
        assert_eq!(maxima.len(), 2);
        assert!((curve.xs[maxima[0]] - 0.0).abs() < 0.2);
        assert!((curve.xs[maxima[1]] - 10.0).abs() < 0.2);
    }

    #[test]
    fn samples_csv_has_header_even_when_empty() {
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "index,topology_id,start_state,h_mu,c_mu\n"
        );
    }
}
