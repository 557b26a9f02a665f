//! Integer partitions, conjugacy-class combinatorics, and the two
//! permutation-side routes to the partition function.
//!
//! Any permutation of N labels splits into cycles; summing over conjugacy
//! classes turns the N!-term sum into one over integer partitions
//! (lambda_k) with sum_k k lambda_k = N, each weighted by the class size
//!
//!   A(lambda) = N! / prod_k (lambda_k! k^{lambda_k}).
//!
//! The cycle route then reads
//!
//!   Z_N = sum_lambda prod_k (|L| q_k)^{lambda_k} / lambda_k!
//!         * E[ e^{-G(lambda)} ],
//!
//! with independent uniform-start cycles and G the same leg-paired
//! interaction kernel used by the Hamiltonian. The brute-force route
//! evaluates the defining permutation sum directly by importance sampling:
//! uniform anchors weighted by the kernel masses g(x_i, x_{sigma(i)}) |L|^N
//! and normalized one-leg bridges between them.

use crate::bridges::{
    gaussian_kernel, periodic_kernel, sample_leg_path, stays_inside, Bc, BoxSpec, TimeGrid,
};
use crate::estimator::{EstimatorResult, McParams};
use crate::poisson_field::{
    draw_conditional_marks, hamiltonian_of, interaction_paths, weights_for_partition,
    EstimateError, Metric,
};
use crate::rng::{derive_stream, mean_stderr, task_id};
use num_bigint::BigUint;
use rayon::prelude::*;

/// Occupation numbers (lambda_k) of an integer partition of `n`:
/// occupations[k-1] cycles of length k, sum_k k lambda_k = n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerPartition {
    pub n: usize,
    pub occupations: Vec<usize>,
}

impl IntegerPartition {
    pub fn cycle_count(&self) -> usize {
        self.occupations.iter().sum()
    }
}

/// Visit every partition of `n` exactly once (largest part chosen first).
pub fn for_each_partition(n: usize, mut f: impl FnMut(&[usize])) {
    let mut occ = vec![0usize; n];
    fn helper(rem: usize, max_part: usize, occ: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if rem == 0 {
            f(occ);
            return;
        }
        if max_part == 0 {
            return;
        }
        let k = max_part.min(rem);
        for count in (0..=rem / k).rev() {
            occ[k - 1] = count;
            helper(rem - count * k, k - 1, occ, f);
            occ[k - 1] = 0;
        }
    }
    helper(n, n, &mut occ, &mut f);
}

pub fn integer_partitions(n: usize) -> Vec<IntegerPartition> {
    assert!(n >= 1);
    let mut out = Vec::new();
    for_each_partition(n, |occ| {
        out.push(IntegerPartition {
            n,
            occupations: occ.to_vec(),
        })
    });
    out
}

/// Exact conjugacy-class size N! / prod_k (lambda_k! k^{lambda_k}).
pub fn class_size(partition: &IntegerPartition) -> BigUint {
    let mut numerator = BigUint::from(1u32);
    for k in 1..=partition.n {
        numerator *= BigUint::from(k);
    }
    let mut denominator = BigUint::from(1u32);
    for (idx, &count) in partition.occupations.iter().enumerate() {
        let k = idx + 1;
        for j in 1..=count {
            denominator *= BigUint::from(j);
        }
        denominator *= BigUint::from(k).pow(count as u32);
    }
    numerator / denominator
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Partition function by the cycle expansion. Exact (no Monte Carlo) for
/// the free gas; otherwise the per-partition sample budget follows the
/// partition's share of the combinatorial prefactor mass.
pub fn partition_cycle(
    n: usize,
    boxspec: &BoxSpec,
    pot: &crate::potentials::PairPotential,
    grid: &TimeGrid,
    mc: &McParams,
) -> Result<EstimatorResult, EstimateError> {
    const MAX_N: usize = 40;
    if n == 0 || n > MAX_N {
        return Err(EstimateError::BadParticleNumber { n, max: MAX_N });
    }
    let weights = weights_for_partition(boxspec, grid.beta, n);
    let volume = boxspec.volume();
    let mut partitions: Vec<(Vec<usize>, f64)> = Vec::new();
    for_each_partition(n, |occ| {
        let mut w = 1.0;
        for (idx, &count) in occ.iter().enumerate() {
            if count > 0 {
                w *= (volume * weights.q[idx]).powi(count as i32) / factorial(count);
            }
        }
        partitions.push((occ.to_vec(), w));
    });
    let weight_sum: f64 = partitions.iter().map(|(_, w)| w).sum();

    if pot.is_zero() && boxspec.bc != Bc::Dirichlet {
        return Ok(EstimatorResult::exact(weight_sum, mc.seed));
    }

    let metric = match boxspec.bc {
        Bc::Periodic => Metric::Torus(boxspec.length),
        _ => Metric::Euclidean,
    };
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut drawn = 0u64;
    for (pi, (occ, w)) in partitions.iter().enumerate() {
        let budget = ((mc.samples as f64 * w / weight_sum).ceil() as u64).max(32);
        drawn += budget;
        let values: Vec<Result<f64, EstimateError>> = (0..budget)
            .into_par_iter()
            .map(|i| {
                let mut rng = derive_stream(mc.seed, task_id(pi as u64, i));
                let sample =
                    draw_conditional_marks(occ, boxspec, grid, mc.rejection_cap, &mut rng)?;
                if !sample.all_inside {
                    return Ok(0.0);
                }
                let g = hamiltonian_of(&sample.marks, pot, grid, metric, boxspec.dim);
                Ok((-g).exp())
            })
            .collect();
        let mut payload = Vec::with_capacity(values.len());
        for v in values {
            payload.push(v?);
        }
        let (m, se) = mean_stderr(&payload);
        mean += w * m;
        variance += (w * se) * (w * se);
    }
    Ok(EstimatorResult::estimated(
        mean,
        variance.sqrt(),
        drawn,
        mc.seed,
    ))
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn helper(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                helper(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    helper(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Partition function by brute force over all N! permutations. Guarded at
/// N <= 6.
pub fn partition_bruteforce(
    n: usize,
    boxspec: &BoxSpec,
    pot: &crate::potentials::PairPotential,
    grid: &TimeGrid,
    mc: &McParams,
) -> Result<EstimatorResult, EstimateError> {
    const MAX_N: usize = 6;
    if n == 0 || n > MAX_N {
        return Err(EstimateError::BadParticleNumber { n, max: MAX_N });
    }
    let perms = all_permutations(n);
    let volume = boxspec.volume();
    let beta = grid.beta;
    let dim = boxspec.dim;
    let metric = match boxspec.bc {
        Bc::Periodic => Metric::Torus(boxspec.length),
        _ => Metric::Euclidean,
    };
    let zero = [0.0; 3];
    let mut total_mean = 0.0;
    let mut total_var = 0.0;
    for (pi, sigma) in perms.iter().enumerate() {
        let values: Vec<f64> = (0..mc.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = derive_stream(mc.seed, task_id(pi as u64, i));
                let anchors: Vec<_> = (0..n).map(|_| boxspec.sample_point(&mut rng)).collect();
                let mut weight = volume.powi(n as i32);
                for (a, &target) in sigma.iter().enumerate().map(|(a, t)| (a, t)) {
                    weight *= match boxspec.bc {
                        Bc::Periodic => {
                            periodic_kernel(&anchors[a], &anchors[target], beta, boxspec)
                        }
                        _ => gaussian_kernel(&anchors[a], &anchors[target], beta, dim),
                    };
                }
                let mut legs = Vec::with_capacity(n);
                let mut inside = true;
                for (a, &target) in sigma.iter().enumerate() {
                    let path =
                        sample_leg_path(&anchors[a], &anchors[target], grid, boxspec, &mut rng);
                    if boxspec.bc == Bc::Dirichlet && !stays_inside(&path, boxspec) {
                        inside = false;
                    }
                    legs.push(path);
                }
                if !inside {
                    return 0.0;
                }
                let mut interaction = 0.0;
                for a in 0..n {
                    for b in (a + 1)..n {
                        let t = interaction_paths(
                            &legs[a], 1, &zero, &legs[b], 1, &zero, false, pot, grid, metric, dim,
                        );
                        if t == f64::INFINITY {
                            return 0.0;
                        }
                        interaction += 2.0 * t;
                    }
                }
                weight * (-interaction).exp()
            })
            .collect();
        let (m, se) = mean_stderr(&values);
        total_mean += m;
        total_var += se * se;
    }
    let nf = factorial(n);
    Ok(EstimatorResult::estimated(
        total_mean / nf,
        total_var.sqrt() / nf,
        mc.samples * perms.len() as u64,
        mc.seed,
    ))
}
