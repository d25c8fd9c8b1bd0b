//! Monte Carlo estimates over indexed samples. Sample `i` depends only on
//! `(seed, i)` and partial results are integers, so every estimate is
//! independent of the worker count and of scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Mean and standard error of a sample average.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate {
    /// Indicator average with the binomial error `sqrt(m (1 − m) / n)`.
    pub fn from_successes(successes: u64, n_samples: u64, seed: u64) -> Self {
        assert!(n_samples > 0, "an estimate needs samples");
        let mean = successes as f64 / n_samples as f64;
        let stderr = (mean * (1.0 - mean) / n_samples as f64).sqrt();
        Estimate { mean, stderr, n_samples, seed }
    }

    /// Average of integer observations with the sample standard error.
    pub fn from_sums(sums: Sums, seed: u64) -> Self {
        assert!(sums.n > 0, "an estimate needs samples");
        let n = sums.n as f64;
        let mean = sums.sum as f64 / n;
        let var = if sums.n > 1 {
            ((sums.sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate { mean, stderr: (var / n).sqrt(), n_samples: sums.n, seed }
    }

    /// Whether `value` lies within `k` standard errors (plus rounding slack).
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + 1e-12
    }
}

/// Exact integer moments; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sums {
    pub n: u64,
    pub sum: u128,
    pub sum_sq: u128,
}

impl Sums {
    pub fn one(x: u64) -> Self {
        Sums { n: 1, sum: x as u128, sum_sq: (x as u128) * (x as u128) }
    }

    pub fn merge(self, o: Sums) -> Sums {
        Sums { n: self.n + o.n, sum: self.sum + o.sum, sum_sq: self.sum_sq + o.sum_sq }
    }
}

/// Number of indices in `0..n` where `f` holds.
pub fn count_true(n: u64, f: impl Fn(u64) -> bool + Sync + Send) -> u64 {
    (0..n).into_par_iter().filter(|&i| f(i)).count() as u64
}

/// [`count_true`] with per-worker scratch state built by `init`.
pub fn count_true_with<S, I, F>(n: u64, init: I, f: F) -> u64
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> bool + Sync + Send,
{
    (0..n).into_par_iter().map_init(&init, |s, i| f(s, i) as u64).sum()
}

/// Integer moments of `f` over `0..n`.
pub fn sums(n: u64, f: impl Fn(u64) -> u64 + Sync + Send) -> Sums {
    (0..n).into_par_iter().map(|i| Sums::one(f(i))).reduce(Sums::default, Sums::merge)
}

/// [`sums`] with per-worker scratch state.
pub fn sums_with<S, I, F>(n: u64, init: I, f: F) -> Sums
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> u64 + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map_init(&init, |s, i| Sums::one(f(s, i)))
        .reduce(Sums::default, Sums::merge)
}

/// Runs `job` on a pool of `workers` threads, or on the global pool when
/// `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// A seed for sub-experiment `tag` derived from `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_error() {
        let e = Estimate::from_successes(25, 100, 0);
        assert_eq!(e.mean, 0.25);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        let all = Estimate::from_successes(7, 7, 0);
        assert_eq!((all.mean, all.stderr), (1.0, 0.0));
    }

    #[test]
    fn sums_match_direct() {
        let s = sums(1000, |i| i % 7);
        let direct: u64 = (0..1000).map(|i| i % 7).sum();
        assert_eq!(s.sum, direct as u128);
        let e = Estimate::from_sums(s, 0);
        let m = direct as f64 / 1000.0;
        let v: f64 = (0..1000).map(|i| ((i % 7) as f64 - m).powi(2)).sum::<f64>() / 999.0;
        assert!((e.stderr - (v / 1000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let f = |i: u64| derive_seed(3, i) % 3 == 0;
        let a = with_workers(Some(1), || count_true(5000, f)).unwrap();
        let b = with_workers(Some(4), || count_true(5000, f)).unwrap();
        assert_eq!(a, b);
        assert!(with_workers(Some(0), || 0).is_err());
    }
}
