//! Counter-derived random streams for reproducible parallel Monte Carlo.
//!
//! Every task (one sample of one estimator) gets its own ChaCha stream,
//! selected by `(seed, task id)`. The numbers a task consumes therefore do
//! not depend on scheduling, and parallel reductions are performed in task
//! order, so a run is bit-identical for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Independent generator for the given task of a seeded run.
pub fn derive_stream(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Task id combining a group (estimator-internal subdivision, e.g. a
/// permutation or a cycle type) with a sample index.
pub fn task_id(group: u64, index: u64) -> u64 {
    debug_assert!(group < (1 << 24) && index < (1 << 40));
    (group << 40) | index
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / ((n - 1) as f64 * n as f64)).sqrt())
}

/// Evaluate `f` on `samples` independent streams and reduce in index order.
pub fn parallel_mean<F>(seed: u64, group: u64, samples: u64, f: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| f(&mut derive_stream(seed, task_id(group, i))))
        .collect();
    mean_stderr(&values)
}
