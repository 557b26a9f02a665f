//! Computable bounds on the interacting free energy, and a restricted
//! variational principle over Poisson candidate fields.
//!
//! The candidate family assigns density a_k >= 0 to anchors of length-k
//! cycles, independent marks. For that family both functionals are
//! computable without any large-deviations machinery:
//!
//!   entropy rate   I(a) = sum_k [ q_k - a_k + a_k log(a_k / q_k) ],
//!   energy rate    <Phi> = sum_k a_k E_self(k)
//!                   + 1/2 beta alpha(v) (sum_k k a_k)^2,
//!
//! the second because the displacement integral of the leg-paired
//! interaction collapses to alpha(v) per slice pair (Campbell's formula).
//! Minimizing their sum under sum_k k a_k <= rho (or = rho) therefore has
//! an explicit Lagrangian structure, a_k = q_k exp(-E_k - gamma k), and
//! reduces to a one-dimensional root find in the multiplier gamma. Because
//! the family is restricted, the minimum is an upper bound on the true
//! variational constant chi, hence a certified upper bound on the free
//! energy through f = -q_bar / beta + chi / beta.

use crate::bridges::{heat_kernel_norm, reference_weight, sample_bridge, Bc, BoxSpec, LengthWeights, TimeGrid};
use crate::estimator::{EstimatorResult, McParams};
use crate::ideal_gas::zeta;
use crate::poisson_field::{estimate_partition_poisson, interaction_paths, EstimateError, Metric};
use crate::potentials::PairPotential;
use crate::rng::{derive_stream, mean_stderr, task_id};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::fmt;

/// Verdict of the high-temperature / low-density domain test
/// (4 pi beta)^{-d/2} >= rho exp(beta rho alpha(v)).
#[derive(Debug, Clone, Copy)]
pub struct DomainReport {
    pub in_domain: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub alpha: f64,
}

pub fn in_domain_dv(beta: f64, rho: f64, pot: &PairPotential, d: usize) -> DomainReport {
    let alpha = pot.alpha(d);
    let lhs = heat_kernel_norm(beta, d);
    let rhs = rho * (beta * rho * alpha).exp();
    DomainReport {
        in_domain: alpha.is_finite() && lhs >= rhs,
        lhs,
        rhs,
        alpha,
    }
}

/// Lower bound on Z_{N+1}/Z_N:
/// (4 pi beta)^{-d/2} |L| e^{-N beta alpha(v)/|L|} / (N + 1).
/// With alpha(v) infinite the bound degenerates to 0 (trivially valid).
pub fn quotient_lower_bound(n: usize, boxspec: &BoxSpec, beta: f64, pot: &PairPotential) -> f64 {
    let volume = boxspec.volume();
    let alpha = pot.alpha(boxspec.dim);
    let decay = if alpha.is_finite() {
        (-(n as f64) * beta * alpha / volume).exp()
    } else {
        0.0
    };
    heat_kernel_norm(beta, boxspec.dim) * volume / (n as f64 + 1.0) * decay
}

/// Iterated-quotient upper bound on the free energy:
/// rho/beta log(rho (4 pi beta)^{d/2}) + rho^2 alpha(v).
pub fn free_energy_upper_bound(beta: f64, rho: f64, pot: &PairPotential, d: usize) -> f64 {
    rho / beta * (rho / heat_kernel_norm(beta, d)).ln() + rho * rho * pot.alpha(d)
}

/// Monotonicity audit of N -> Z_N inside the domain D_v.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// False when (beta, rho) lies outside D_v; the claim is then not
    /// asserted and nothing is checked.
    pub evaluated: bool,
    pub domain: DomainReport,
    pub values: Vec<EstimatorResult>,
    pub passes: bool,
}

/// Estimate Z_1..Z_n with a common seed and check the sequence is
/// nondecreasing within 3 sigma per adjacent pair.
pub fn check_monotonicity(
    n: usize,
    boxspec: &BoxSpec,
    pot: &PairPotential,
    grid: &TimeGrid,
    mc: &McParams,
) -> Result<MonotonicityReport, EstimateError> {
    let rho = n as f64 / boxspec.volume();
    let domain = in_domain_dv(grid.beta, rho, pot, boxspec.dim);
    if !domain.in_domain {
        return Ok(MonotonicityReport {
            evaluated: false,
            domain,
            values: Vec::new(),
            passes: true,
        });
    }
    let mut values = Vec::with_capacity(n);
    for m in 1..=n {
        values.push(estimate_partition_poisson(m, boxspec, pot, grid, mc)?);
    }
    let passes = values.windows(2).all(|w| {
        let se = w[0].stderr.hypot(w[1].stderr);
        w[1].mean >= w[0].mean - 3.0 * se
    });
    Ok(MonotonicityReport {
        evaluated: true,
        domain,
        values,
        passes,
    })
}

// ---------------------------------------------------------------------------
// Poisson candidate family

/// Densities a_k of length-k cycle anchors per unit volume.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    pub a: Vec<f64>,
}

impl IntensityVector {
    pub fn new(a: Vec<f64>) -> Self {
        assert!(a.iter().all(|&x| x >= 0.0), "intensities must be >= 0");
        IntensityVector { a }
    }

    /// Expected mark length per unit volume, sum_k k a_k.
    pub fn mass(&self) -> f64 {
        self.a
            .iter()
            .enumerate()
            .map(|(i, &a)| (i + 1) as f64 * a)
            .sum()
    }
}

/// Relative entropy rate of the Poisson field with intensities a against
/// the reference with intensities q: sum_k [q_k - a_k + a_k log(a_k/q_k)],
/// with 0 log 0 = 0.
pub fn entropy_rate_poisson(a: &IntensityVector, weights: &LengthWeights) -> f64 {
    assert!(
        a.a.len() <= weights.q.len(),
        "intensity support exceeds the weight table"
    );
    let mut total = 0.0;
    for (idx, &qk) in weights.q.iter().enumerate() {
        let ak = a.a.get(idx).copied().unwrap_or(0.0);
        total += qk - ak;
        if ak > 0.0 {
            total += ak * (ak / qk).ln();
        }
    }
    total
}

/// Expected self-interaction of one free mark of k legs, by Monte Carlo.
fn self_interaction(
    k: usize,
    pot: &PairPotential,
    grid: &TimeGrid,
    samples: u64,
    seed: u64,
    group: u64,
) -> (f64, f64) {
    if k == 1 || pot.is_zero() {
        return (0.0, 0.0);
    }
    // free marks live on all of R^d; any anchor does
    let free_box = BoxSpec::new(3, 1.0, Bc::Empty);
    let dim = 3;
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, task_id(group, i));
            let bridge = sample_bridge(&[0.0; 3], k, grid, &free_box, 1, &mut rng)
                .expect("free bridges never reject");
            interaction_paths(
                &bridge.positions,
                k,
                &[0.0; 3],
                &bridge.positions,
                k,
                &[0.0; 3],
                true,
                pot,
                grid,
                Metric::Euclidean,
                dim,
            )
        })
        .collect();
    mean_stderr(&values)
}

/// Displacement-integrated pair interaction between independent free marks
/// of k and k' legs, by importance sampling over the displacement:
/// I(k,k') = int dz E[T(mark at 0, mark at z)]. Analytically this equals
/// 1/2 beta alpha(v) k k'; the Monte Carlo route cross-checks it.
fn pair_interaction_integral(
    k1: usize,
    k2: usize,
    pot: &PairPotential,
    grid: &TimeGrid,
    dim: usize,
    samples: u64,
    seed: u64,
    group: u64,
) -> (f64, f64) {
    let scale2 = (k1 + k2) as f64 * grid.beta + pot.scale_hint().powi(2);
    let sd = scale2.sqrt();
    let norm = (2.0 * std::f64::consts::PI * scale2).powf(-(dim as f64) / 2.0);
    let free_box = BoxSpec::new(dim, 1.0, Bc::Empty);
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, task_id(group, i));
            let a = sample_bridge(&[0.0; 3], k1, grid, &free_box, 1, &mut rng).unwrap();
            let b = sample_bridge(&[0.0; 3], k2, grid, &free_box, 1, &mut rng).unwrap();
            let mut z = [0.0; 3];
            let mut r2 = 0.0;
            for c in z.iter_mut().take(dim) {
                let g: f64 = rng.sample(StandardNormal);
                *c = sd * g;
                r2 += *c * *c;
            }
            let density = norm * (-r2 / (2.0 * scale2)).exp();
            let t = interaction_paths(
                &a.positions,
                k1,
                &[0.0; 3],
                &b.positions,
                k2,
                &z,
                false,
                pot,
                grid,
                Metric::Euclidean,
                dim,
            );
            t / density
        })
        .collect();
    mean_stderr(&values)
}

/// The exact displacement-integrated pair term for intensities a:
/// 1/2 beta alpha(v) (sum_k k a_k)^2.
pub fn pair_energy_analytic(a: &IntensityVector, pot: &PairPotential, beta: f64, d: usize) -> f64 {
    let m = a.mass();
    0.5 * beta * pot.alpha(d) * m * m
}

/// Energy rate <P_a, Phi> of the Poisson candidate by Monte Carlo: self
/// terms per length plus importance-sampled displacement integrals for
/// every pair of lengths.
pub fn energy_rate_poisson(
    a: &IntensityVector,
    pot: &PairPotential,
    grid: &TimeGrid,
    dim: usize,
    mc: &McParams,
) -> EstimatorResult {
    if pot.is_zero() {
        return EstimatorResult::exact(0.0, mc.seed);
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut group = 0u64;
    for (idx, &ak) in a.a.iter().enumerate() {
        if ak == 0.0 {
            continue;
        }
        let (m, se) = self_interaction(idx + 1, pot, grid, mc.samples, mc.seed, group);
        group += 1;
        mean += ak * m;
        variance += (ak * se).powi(2);
    }
    for (i, &ai) in a.a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &aj) in a.a.iter().enumerate().skip(i) {
            if aj == 0.0 {
                continue;
            }
            let coef = if i == j { ai * aj } else { 2.0 * ai * aj };
            let (m, se) =
                pair_interaction_integral(i + 1, j + 1, pot, grid, dim, mc.samples, mc.seed, group);
            group += 1;
            mean += coef * m;
            variance += (coef * se).powi(2);
        }
    }
    EstimatorResult::estimated(mean, variance.sqrt(), mc.samples, mc.seed)
}

// ---------------------------------------------------------------------------
// the restricted minimization

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChiMode {
    /// Mass constraint sum_k k a_k <= rho.
    UpTo,
    /// Mass constraint sum_k k a_k = rho.
    Exact,
}

impl fmt::Display for ChiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChiMode::UpTo => write!(f, "le"),
            ChiMode::Exact => write!(f, "eq"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChiOptions {
    /// Number of cycle lengths carried by the candidate family.
    pub k_max: usize,
    /// Monte Carlo samples for each self-interaction constant.
    pub self_samples: u64,
    pub seed: u64,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions {
            k_max: 64,
            self_samples: 2_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChiError {
    AlphaNotFinite,
    NoConvergence { best: f64 },
}

impl fmt::Display for ChiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChiError::AlphaNotFinite => {
                write!(f, "the candidate energy needs a finite alpha(v)")
            }
            ChiError::NoConvergence { best } => {
                write!(f, "multiplier solve did not converge (best value {best})")
            }
        }
    }
}

impl std::error::Error for ChiError {}

/// Result of the restricted minimization. `value` is an upper bound on the
/// variational constant; `free_energy` the induced upper bound
/// -q_bar/beta + value/beta.
#[derive(Debug, Clone)]
pub struct ChiResult {
    pub value: f64,
    pub intensity: IntensityVector,
    pub free_energy: f64,
    /// First-order propagation of the self-term Monte Carlo errors.
    pub uncertainty: f64,
    pub mode: ChiMode,
    pub multiplier: f64,
    pub mass: f64,
    /// |value at K| - |value at K/2|, a truncation-sensitivity diagnostic.
    pub tail_gap: f64,
}

struct CandidateProblem {
    q: Vec<f64>,
    self_means: Vec<f64>,
    self_errs: Vec<f64>,
    coupling: f64, // beta alpha(v)
}

impl CandidateProblem {
    fn intensities(&self, gamma: f64, k_max: usize) -> Vec<f64> {
        (0..k_max)
            .map(|i| {
                let k = (i + 1) as f64;
                self.q[i] * (-self.self_means[i] - gamma * k).exp()
            })
            .collect()
    }

    fn mass(&self, gamma: f64, k_max: usize) -> f64 {
        self.intensities(gamma, k_max)
            .iter()
            .enumerate()
            .map(|(i, a)| (i + 1) as f64 * a)
            .sum()
    }

    fn objective(&self, a: &[f64], k_max: usize) -> f64 {
        let mut entropy = 0.0;
        let mut linear = 0.0;
        let mut mass = 0.0;
        for i in 0..k_max {
            let ak = a[i];
            entropy += self.q[i] - ak;
            if ak > 0.0 {
                entropy += ak * (ak / self.q[i]).ln();
            }
            linear += ak * self.self_means[i];
            mass += (i + 1) as f64 * ak;
        }
        entropy + linear + 0.5 * self.coupling * mass * mass
    }

    fn solve(&self, rho: f64, mode: ChiMode, k_max: usize) -> (f64, f64, Vec<f64>) {
        let gamma = match mode {
            ChiMode::UpTo => {
                // stationary multiplier gamma = coupling * mass(gamma)
                let mut g0 = 0.0;
                if self.coupling > 0.0 {
                    let h = |g: f64| g - self.coupling * self.mass(g, k_max);
                    let mut hi = 1.0;
                    while h(hi) < 0.0 {
                        hi *= 2.0;
                    }
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if h(mid) < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    g0 = 0.5 * (lo + hi);
                }
                if self.mass(g0, k_max) <= rho {
                    g0 // constraint slack
                } else {
                    self.solve_mass_equal(rho, g0, k_max)
                }
            }
            ChiMode::Exact => {
                let mut lo = 0.0;
                while self.mass(lo, k_max) < rho {
                    lo = if lo == 0.0 { -1.0 } else { lo * 2.0 };
                    assert!(lo > -1e6, "mass bracket failed");
                }
                self.solve_mass_equal(rho, lo, k_max)
            }
        };
        let a = self.intensities(gamma, k_max);
        let mass = a.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
        (gamma, mass, a)
    }

    /// Bisect mass(gamma) = rho starting from a lower bracket end.
    fn solve_mass_equal(&self, rho: f64, mut lo: f64, k_max: usize) -> f64 {
        let mut hi = if lo > 0.0 { 2.0 * lo + 1.0 } else { 1.0 };
        while self.mass(hi, k_max) > rho {
            hi = 2.0 * hi + 1.0;
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if self.mass(mid, k_max) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Minimize entropy + energy over the Poisson candidates under the mass
/// constraint. The value is an upper bound on the unrestricted variational
/// constant (the family is restricted by construction).
pub fn optimize_chi_restricted(
    beta: f64,
    rho: f64,
    pot: &PairPotential,
    d: usize,
    mode: ChiMode,
    grid: &TimeGrid,
    opts: &ChiOptions,
) -> Result<ChiResult, ChiError> {
    assert!(beta > 0.0 && rho > 0.0 && (1..=3).contains(&d));
    let alpha = pot.alpha(d);
    if !alpha.is_finite() {
        return Err(ChiError::AlphaNotFinite);
    }
    let k_max = opts.k_max.max(1);
    let q: Vec<f64> = (1..=k_max).map(|k| reference_weight(beta, d, k)).collect();
    let mut self_means = vec![0.0; k_max];
    let mut self_errs = vec![0.0; k_max];
    if !pot.is_zero() {
        for k in 2..=k_max {
            // accuracy matters most where the intensities are largest
            let samples = (opts.self_samples / (k * k) as u64).max(64);
            let (m, se) = self_interaction(k, pot, grid, samples, opts.seed, k as u64);
            self_means[k - 1] = m;
            self_errs[k - 1] = se;
        }
    }
    let problem = CandidateProblem {
        q,
        self_means,
        self_errs,
        coupling: beta * alpha,
    };
    let (gamma, mass, a) = problem.solve(rho, mode, k_max);
    let value = problem.objective(&a, k_max);
    if !value.is_finite() {
        return Err(ChiError::NoConvergence { best: value });
    }
    // truncation sensitivity: same problem on half the table
    let half = (k_max / 2).max(1);
    let (_, _, a_half) = problem.solve(rho, mode, half);
    let mut padded = a_half;
    padded.resize(k_max, 0.0);
    let value_half = problem.objective(&padded, k_max);
    let uncertainty: f64 = a
        .iter()
        .zip(problem.self_errs.iter())
        .map(|(ak, se)| ak * se)
        .sum();
    let qbar_full = heat_kernel_norm(beta, d) * zeta(1.0 + d as f64 / 2.0).expect("d/2+1 > 1");
    Ok(ChiResult {
        value,
        intensity: IntensityVector::new(a),
        free_energy: -qbar_full / beta + value / beta,
        uncertainty,
        mode,
        multiplier: gamma,
        mass,
        tail_gap: (value_half - value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridges::length_weights;
    use crate::ideal_gas::{free_energy_ideal, minimize_j};

    const NORM_3D: f64 = 0.02244839026564582;
    const UB_003: f64 = 0.0086993541940186354; // 0.03 ln(0.03 (4 pi)^{3/2})
    const PAIR_01_GAUSS: f64 = 0.027841639984158539; // rho^2 beta alpha / 2

    #[test]
    fn domain_examples() {
        let v0 = PairPotential::zero();
        assert!(in_domain_dv(1.0, 0.01, &v0, 3).in_domain);
        assert!(!in_domain_dv(1.0, 0.05, &v0, 3).in_domain);
        // the free boundary is exactly rho = (4 pi beta)^{-3/2}
        assert!(in_domain_dv(1.0, NORM_3D, &v0, 3).in_domain);
        assert!(!in_domain_dv(1.0, NORM_3D * (1.0 + 1e-12), &v0, 3).in_domain);
        // infinite alpha disqualifies
        let hc = PairPotential::inverse_power(1.0, 6.0, 0.2).unwrap();
        let rep = in_domain_dv(1.0, 0.001, &hc, 3);
        assert!(!rep.in_domain && rep.alpha.is_infinite());
    }

    #[test]
    fn quotient_bound_values() {
        let b = BoxSpec::new(3, 10f64.powf(1.0 / 3.0), Bc::Empty);
        let v0 = PairPotential::zero();
        let bound = quotient_lower_bound(1, &b, 1.0, &v0);
        assert!((bound - NORM_3D * 10.0 / 2.0).abs() < 1e-15);
        // v = 0 at fixed density: bound = norm / rho * n / (n + 1)
        let n = 5;
        let rho = n as f64 / b.volume();
        let expect = NORM_3D / rho * n as f64 / (n as f64 + 1.0);
        assert!((quotient_lower_bound(n, &b, 1.0, &v0) - expect).abs() < 1e-14);
    }

    #[test]
    fn quotient_bound_verified_by_estimates() {
        let b = BoxSpec::new(3, 10f64.powf(1.0 / 3.0), Bc::Empty);
        let grid = TimeGrid::new(1.0, 8);
        let pot = PairPotential::gaussian(1.0, 1.0).unwrap();
        let mc = McParams::new(20_000, 67);
        let mut prev = estimate_partition_poisson(1, &b, &pot, &grid, &mc).unwrap();
        for n in 1..=3usize {
            let next = estimate_partition_poisson(n + 1, &b, &pot, &grid, &mc).unwrap();
            let ratio = next.mean / prev.mean;
            let ratio_se = ratio
                * ((next.stderr / next.mean).powi(2) + (prev.stderr / prev.mean).powi(2)).sqrt();
            let bound = quotient_lower_bound(n, &b, 1.0, &pot);
            assert!(
                ratio >= bound - 3.0 * ratio_se,
                "n={n}: ratio {ratio} below bound {bound}"
            );
            prev = next;
        }
    }

    #[test]
    fn upper_bound_values_and_ideal_comparison() {
        let v0 = PairPotential::zero();
        assert!((free_energy_upper_bound(1.0, 0.03, &v0, 3) - UB_003).abs() < 1e-15);
        // log term vanishes exactly at rho = (4 pi beta)^{-d/2}
        assert!(free_energy_upper_bound(1.0, NORM_3D, &v0, 3).abs() < 1e-15);
        for i in 1..=10 {
            let rho = 0.006 * i as f64;
            let f = free_energy_ideal(1.0, rho, 3).free_energy;
            assert!(f <= free_energy_upper_bound(1.0, rho, &v0, 3) + 1e-12);
        }
    }

    #[test]
    fn monotonicity_guard_and_free_case() {
        let grid = TimeGrid::new(1.0, 4);
        let v0 = PairPotential::zero();
        // rho above the free domain boundary: skipped
        let small = BoxSpec::new(3, 2.0, Bc::Empty);
        let rep = check_monotonicity(4, &small, &v0, &grid, &McParams::new(10, 1)).unwrap();
        assert!(!rep.evaluated);
        // inside the domain the exact free values increase strictly
        let big = BoxSpec::new(3, 600f64.powf(1.0 / 3.0), Bc::Empty);
        let rep = check_monotonicity(6, &big, &v0, &grid, &McParams::new(10, 1)).unwrap();
        assert!(rep.evaluated && rep.passes);
        for w in rep.values.windows(2) {
            assert!(w[1].mean > w[0].mean);
        }
    }

    #[test]
    fn entropy_rate_reference_cases() {
        let b = BoxSpec::new(3, 4.0, Bc::Empty);
        let grid = TimeGrid::new(1.0, 2);
        let w = length_weights(1.0, &b, 16, &grid, &McParams::default());
        let qbar = w.q_bar();
        let at_q = IntensityVector::new(w.q.clone());
        assert!(entropy_rate_poisson(&at_q, &w).abs() < 1e-15);
        let doubled = IntensityVector::new(w.q.iter().map(|q| 2.0 * q).collect());
        let expect = (2.0 * (2f64).ln() - 1.0) * qbar;
        assert!((entropy_rate_poisson(&doubled, &w) - expect).abs() < 1e-14);
        let vacuum = IntensityVector::new(vec![0.0; 16]);
        assert!((entropy_rate_poisson(&vacuum, &w) - qbar).abs() < 1e-15);
    }

    #[test]
    fn entropy_rate_nonnegative_random() {
        let b = BoxSpec::new(3, 4.0, Bc::Empty);
        let grid = TimeGrid::new(1.0, 2);
        let w = length_weights(1.0, &b, 8, &grid, &McParams::default());
        let mut rng = derive_stream(71, 0);
        for _ in 0..200 {
            let a: Vec<f64> = w.q.iter().map(|q| q * rng.gen_range(0.0..3.0)).collect();
            let v = entropy_rate_poisson(&IntensityVector::new(a.clone()), &w);
            assert!(v >= -1e-14);
            if a.iter().zip(w.q.iter()).any(|(x, q)| (x - q).abs() > 1e-12) {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn energy_rate_free_gas_is_zero() {
        let grid = TimeGrid::new(1.0, 4);
        let a = IntensityVector::new(vec![0.3, 0.1]);
        let e = energy_rate_poisson(&a, &PairPotential::zero(), &grid, 3, &McParams::new(10, 1));
        assert!(e.exact && e.mean == 0.0);
    }

    #[test]
    fn energy_rate_single_length_matches_analytic() {
        let grid = TimeGrid::new(1.0, 8);
        let pot = PairPotential::gaussian(1.0, 1.0).unwrap();
        let a = IntensityVector::new(vec![0.1]);
        let est = energy_rate_poisson(&a, &pot, &grid, 3, &McParams::new(20_000, 73));
        let analytic = pair_energy_analytic(&a, &pot, 1.0, 3);
        assert!((analytic - PAIR_01_GAUSS).abs() < 1e-15);
        assert!(
            (est.mean - analytic).abs() <= 3.0 * est.stderr,
            "{} +- {} vs {analytic}",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn energy_rate_monotone_in_intensity_shared_streams() {
        let grid = TimeGrid::new(1.0, 4);
        let pot = PairPotential::gaussian(0.8, 0.9).unwrap();
        let mc = McParams::new(400, 79);
        let mut rng = derive_stream(83, 0);
        for _ in 0..10 {
            let base: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..0.2)).collect();
            let bumped: Vec<f64> = base.iter().map(|x| x + rng.gen_range(0.0..0.1)).collect();
            let lo = energy_rate_poisson(&IntensityVector::new(base), &pot, &grid, 3, &mc);
            let hi = energy_rate_poisson(&IntensityVector::new(bumped), &pot, &grid, 3, &mc);
            assert!(hi.mean >= lo.mean - 1e-12);
        }
    }

    #[test]
    fn chi_free_gas_recovers_constrained_minimum() {
        let grid = TimeGrid::new(1.0, 4);
        let v0 = PairPotential::zero();
        let opts = ChiOptions {
            k_max: 64,
            self_samples: 100,
            seed: 1,
        };
        for rho in [0.03, 0.0586, 0.12] {
            let chi = optimize_chi_restricted(1.0, rho, &v0, 3, ChiMode::UpTo, &grid, &opts)
                .unwrap();
            let oracle = minimize_j(1.0, rho, 3, 2000);
            assert!(
                (chi.free_energy - oracle.free_energy).abs() < 1e-5,
                "rho={rho}: {} vs {}",
                chi.free_energy,
                oracle.free_energy
            );
        }
    }

    #[test]
    fn chi_exact_mode_dominates_relaxed_mode() {
        let grid = TimeGrid::new(1.0, 4);
        let pot = PairPotential::gaussian(0.5, 1.0).unwrap();
        let opts = ChiOptions {
            k_max: 24,
            self_samples: 400,
            seed: 5,
        };
        for rho in [0.02, 0.08] {
            let le =
                optimize_chi_restricted(1.0, rho, &pot, 3, ChiMode::UpTo, &grid, &opts).unwrap();
            let eq =
                optimize_chi_restricted(1.0, rho, &pot, 3, ChiMode::Exact, &grid, &opts).unwrap();
            assert!(eq.value >= le.value - 1e-12);
        }
    }

    #[test]
    fn chi_weak_coupling_approaches_free_value() {
        let grid = TimeGrid::new(1.0, 4);
        let opts = ChiOptions {
            k_max: 24,
            self_samples: 400,
            seed: 7,
        };
        let rho = 0.03;
        let free = optimize_chi_restricted(1.0, rho, &PairPotential::zero(), 3, ChiMode::UpTo, &grid, &opts)
            .unwrap()
            .value;
        let mut prev_gap = f64::INFINITY;
        for c in [0.1, 0.01, 0.001] {
            let pot = PairPotential::gaussian(c, 1.0).unwrap();
            let chi =
                optimize_chi_restricted(1.0, rho, &pot, 3, ChiMode::UpTo, &grid, &opts).unwrap();
            let gap = (chi.value - free).abs();
            assert!(gap <= prev_gap + 1e-12, "coupling {c} gap {gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn chi_rejects_nonintegrable_potentials() {
        let grid = TimeGrid::new(1.0, 4);
        let hc = PairPotential::inverse_power(1.0, 6.0, 0.2).unwrap();
        assert!(matches!(
            optimize_chi_restricted(
                1.0,
                0.01,
                &hc,
                3,
                ChiMode::UpTo,
                &grid,
                &ChiOptions::default()
            ),
            Err(ChiError::AlphaNotFinite)
        ));
    }

    #[test]
    fn ordering_chain_free_gas() {
        // -q_bar + chi_le = beta f_ideal <= beta * (iterated-quotient bound)
        let grid = TimeGrid::new(1.0, 4);
        let v0 = PairPotential::zero();
        let opts = ChiOptions {
            k_max: 64,
            self_samples: 100,
            seed: 1,
        };
        for rho in [0.01, 0.02] {
            let chi =
                optimize_chi_restricted(1.0, rho, &v0, 3, ChiMode::UpTo, &grid, &opts).unwrap();
            let f = free_energy_ideal(1.0, rho, 3).free_energy;
            assert!((chi.free_energy - f).abs() < 1e-5);
            assert!(f <= free_energy_upper_bound(1.0, rho, &v0, 3) + 1e-12);
        }
    }
}
