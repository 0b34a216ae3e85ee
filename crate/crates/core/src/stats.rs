//! Replicate-parallel tallies and the small amount of statistics the
//! estimators need.
//!
//! Every estimator reduces integer counts. Integer addition is associative and
//! commutative, so results do not depend on how rayon splits the replicates or
//! on the thread count.

use rayon::prelude::*;
use serde::Serialize;

pub trait Tally: Default + Send {
    fn merge(&mut self, other: Self);
}

impl Tally for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl Tally for u128 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

/// Elementwise sum; an empty vector is the identity.
impl Tally for Vec<u64> {
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
    }
}

impl<A: Tally, B: Tally> Tally for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Tally, B: Tally, C: Tally> Tally for (A, B, C) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
        self.2.merge(other.2);
    }
}

/// Runs `step` for every replicate index in `0..replicates` and merges the
/// per-worker tallies.
pub fn tally_replicates<T, F>(replicates: u64, step: F) -> T
where
    T: Tally,
    F: Fn(u64, &mut T) + Sync,
{
    (0..replicates)
        .into_par_iter()
        .fold(T::default, |mut acc, i| {
            step(i, &mut acc);
            acc
        })
        .reduce(T::default, |mut a, b| {
            a.merge(b);
            a
        })
}

/// Fallible variant: the first error in replicate order wins.
pub fn try_tally_replicates<T, E, F>(replicates: u64, step: F) -> Result<T, E>
where
    T: Tally,
    E: Send,
    F: Fn(u64, &mut T) -> Result<(), E> + Sync,
{
    let out: (T, Option<(u64, E)>) = (0..replicates)
        .into_par_iter()
        .fold(
            || (T::default(), None),
            |(mut acc, err): (T, Option<(u64, E)>), i| {
                if err.is_some() {
                    return (acc, err);
                }
                match step(i, &mut acc) {
                    Ok(()) => (acc, None),
                    Err(e) => (acc, Some((i, e))),
                }
            },
        )
        .reduce(
            || (T::default(), None),
            |(mut a, ea), (b, eb)| {
                a.merge(b);
                let err = match (ea, eb) {
                    (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
                    (x, y) => x.or(y),
                };
                (a, err)
            },
        );
    match out.1 {
        Some((_, e)) => Err(e),
        None => Ok(out.0),
    }
}

/// A binomial frequency with its plug-in standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(successes <= trials);
        Proportion { successes, trials }
    }

    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.successes as f64 / self.trials as f64
    }

    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.estimate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Sample mean and standard error from a count, a sum and a sum of squares.
pub fn mean_and_stderr(n: u64, sum: u128, sum_sq: u128) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq as f64) - nf * mean * mean).max(0.0) / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}
