//! Small numerical helpers shared across the crate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Numerically stable `ln(sum(exp(v)))`. Empty input yields `-inf`.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for `(seed, stream)`. Streams with the same seed
/// but different indices are decorrelated, so per-sample work can be
/// scheduled on any worker without changing the draws.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0xA24B_AED4_963E_E407);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Solve `pi T = pi`, `sum(pi) = 1` for the stationary distribution of an
/// irreducible row-stochastic matrix `t` (row-major, n x n).
///
/// A direct linear solve of `(T' - I) pi = 0` with one row replaced by the
/// normalization constraint; periodic chains, where power iteration never
/// settles, are handled exactly.
pub(crate) fn stationary_from_transition(t: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(t.len(), n * n);
    if n == 1 {
        return vec![1.0];
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[j * n + i] = t[i * n + j];
        }
    }
    for d in 0..n {
        a[d * n + d] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    gauss_solve(&mut a, &mut b, n);

    // Rounding can leave harmless negatives of order machine epsilon.
    let mut sum = 0.0;
    for p in b.iter_mut() {
        assert!(
            *p > -1e-9,
            "stationary solve produced a negative component; matrix not irreducible?"
        );
        if *p < 0.0 {
            *p = 0.0;
        }
        sum += *p;
    }
    for p in b.iter_mut() {
        *p /= sum;
    }
    b
}

/// Gaussian elimination with partial pivoting; `a` is row-major n x n,
/// `b` the right-hand side, overwritten with the solution.
fn gauss_solve(a: &mut [f64], b: &mut [f64], n: usize) {
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let mag = a[row * n + col].abs();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        assert!(best > 1e-13, "singular linear system in stationary solve");
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
}
