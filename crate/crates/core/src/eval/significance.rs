use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{compute, Answer, Metric};
use crate::error::{Error, Result};

/// Outcome of a paired randomization test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomizationOutcome {
    pub a: f64,
    pub b: f64,
    /// `a - b`.
    pub delta: f64,
    pub p_value: f64,
    pub iterations: usize,
}

/// Two-sided paired randomization test for an arbitrary statistic of a
/// prediction list.
///
/// Each iteration swaps the two systems' predictions of every instance with
/// probability one half. The p-value is `(1 + hits) / (1 + iterations)`,
/// where a hit is a permuted difference at least as large in magnitude as
/// the observed one. Iteration `i` draws from its own ChaCha stream, so the
/// result depends only on `seed`, not on the thread count.
pub fn randomization_test_with<T, F>(
    a: &[T],
    b: &[T],
    stat: F,
    iterations: usize,
    seed: u64,
) -> Result<RandomizationOutcome>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if iterations == 0 {
        return Err(Error::Config("randomization test needs at least one iteration".into()));
    }
    let ra: Vec<&T> = a.iter().collect();
    let rb: Vec<&T> = b.iter().collect();
    let sa = stat(&ra);
    let sb = stat(&rb);
    let observed = (sa - sb).abs();
    let tolerance = 1e-12;

    let hits: usize = (0..iterations)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(a.len()), Vec::with_capacity(a.len())),
            |(pa, pb), i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                pa.clear();
                pb.clear();
                for (x, y) in a.iter().zip(b) {
                    if rng.random_bool(0.5) {
                        pa.push(y);
                        pb.push(x);
                    } else {
                        pa.push(x);
                        pb.push(y);
                    }
                }
                usize::from((stat(pa) - stat(pb)).abs() + tolerance >= observed)
            },
        )
        .sum();

    Ok(RandomizationOutcome {
        a: sa,
        b: sb,
        delta: sa - sb,
        p_value: (1 + hits) as f64 / (1 + iterations) as f64,
        iterations,
    })
}

/// Randomization test on one metric over aligned predictions and golds.
pub fn randomization_test(
    preds_a: &[Answer],
    preds_b: &[Answer],
    golds: &[Answer],
    metric: Metric,
    iterations: usize,
    seed: u64,
) -> Result<RandomizationOutcome> {
    if preds_a.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds_a.len(),
            right: golds.len(),
        });
    }
    // Validate answer kinds once so the statistic itself cannot fail.
    compute(metric, preds_a.iter().zip(golds))?;
    compute(metric, preds_b.iter().zip(golds))?;
    randomization_test_with(
        preds_a,
        preds_b,
        |preds| compute(metric, preds.iter().copied().zip(golds)).unwrap_or(0.0),
        iterations,
        seed,
    )
}
