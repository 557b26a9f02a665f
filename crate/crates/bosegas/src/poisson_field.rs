//! The reference marked Poisson field, its Hamiltonian, and the
//! partition-function estimator built on an exact treatment of the
//! total-mark-length constraint.
//!
//! The interaction between two marks pairs legs at equal time offsets:
//!
//!   T_{x,y} = 1/2 sum_{i,j} 1{(x,i) != (y,j)}
//!             int_0^beta v(|f_x(i beta + s) - f_y(j beta + s)|) ds,
//!
//! the time integral by the trapezoid rule on the shared grid. The
//! Hamiltonian H is the ordered double sum of T over anchors in the box.
//! Exactly one implementation of this kernel exists; the cycle-expansion
//! and empirical-field functionals reuse it, so their agreement on equal
//! inputs is an identity rather than a numerical accident.
//!
//! For a target total length N, the counts (N_k) of length-k marks are
//! independent Poissons, so P(sum_k k N_k = N) and the conditional law of
//! the counts come from a convolution dynamic program rather than rejection.
//! Marks longer than N cannot satisfy the constraint, so truncating the
//! field at length N is exact, and the partition function reads
//!
//!   Z_N = exp(|L| sum_{k<=N} q_k) P(sum k N_k = N) E[e^{-H} | sum = N].

use crate::bridges::{
    sample_bridge, sample_free_path, stays_inside, Bc, BoxSpec, Bridge, BridgeError,
    LengthWeights, Point, TimeGrid,
};
use crate::estimator::{EstimatorResult, McParams};
use crate::potentials::PairPotential;
use crate::rng::{derive_stream, mean_stderr, task_id};
use crate::bridges;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// Distance rule for leg interactions.
#[derive(Debug, Clone, Copy)]
pub enum Metric {
    Euclidean,
    /// Minimum-image distance on a torus of the given side.
    Torus(f64),
}

impl Metric {
    pub fn for_box(boxspec: &BoxSpec) -> Metric {
        match boxspec.bc {
            Bc::Periodic => Metric::Torus(boxspec.length),
            _ => Metric::Euclidean,
        }
    }

    #[inline]
    fn dist(&self, a: &Point, b: &Point, dim: usize) -> f64 {
        match self {
            Metric::Euclidean => bridges::dist2(a, b, dim).sqrt(),
            Metric::Torus(l) => {
                let mut s = 0.0;
                for i in 0..dim {
                    let mut d = a[i] - b[i];
                    d -= l * (d / l + 0.5).floor();
                    s += d * d;
                }
                s.sqrt()
            }
        }
    }
}

/// A finite marked configuration restricted to a box.
#[derive(Debug, Clone)]
pub struct MarkedConfiguration {
    pub boxspec: BoxSpec,
    pub particles: Vec<Bridge>,
    /// Master seed the configuration was drawn under (0 for constructed).
    pub seed: u64,
}

impl MarkedConfiguration {
    pub fn metric(&self) -> Metric {
        Metric::for_box(&self.boxspec)
    }

    /// Anchors inside the centered box of the given side.
    pub fn anchors_in(&self, side: f64) -> usize {
        let h = 0.5 * side;
        self.particles
            .iter()
            .filter(|b| (0..self.boxspec.dim).all(|i| b.anchor[i].abs() <= h))
            .count()
    }

    pub fn anchors_outside(&self, side: f64) -> usize {
        self.particles.len() - self.anchors_in(side)
    }
}

/// Total mark length of the particles anchored in the centered box of side
/// `region_side` (marks themselves may leave the region).
pub fn total_mark_length(conf: &MarkedConfiguration, region_side: f64) -> usize {
    let h = 0.5 * region_side;
    conf.particles
        .iter()
        .filter(|b| (0..conf.boxspec.dim).all(|i| b.anchor[i].abs() <= h))
        .map(|b| b.legs)
        .sum()
}

// ---------------------------------------------------------------------------
// the interaction kernel

/// Leg-paired interaction between two discretized marks, with spatial
/// offsets applied to each (used by the periodized-field functionals).
/// Returns +infinity on hard-core contact at any grid time.
#[allow(clippy::too_many_arguments)]
pub fn interaction_paths(
    pa: &[Point],
    legs_a: usize,
    off_a: &Point,
    pb: &[Point],
    legs_b: usize,
    off_b: &Point,
    same_mark: bool,
    pot: &PairPotential,
    grid: &TimeGrid,
    metric: Metric,
    dim: usize,
) -> f64 {
    let ns = grid.slices_per_leg;
    let dt = grid.step();
    debug_assert_eq!(pa.len(), legs_a * ns + 1);
    debug_assert_eq!(pb.len(), legs_b * ns + 1);
    let mut total = 0.0;
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    for i in 0..legs_a {
        for j in 0..legs_b {
            if same_mark && i == j {
                continue;
            }
            let base_a = i * ns;
            let base_b = j * ns;
            let mut leg = 0.0;
            for m in 0..=ns {
                let qa = &pa[base_a + m];
                let qb = &pb[base_b + m];
                for c in 0..dim {
                    a[c] = qa[c] + off_a[c];
                    b[c] = qb[c] + off_b[c];
                }
                let v = pot.eval(metric.dist(&a, &b, dim));
                if v == f64::INFINITY {
                    return f64::INFINITY;
                }
                let w = if m == 0 || m == ns { 0.5 } else { 1.0 };
                leg += w * v;
            }
            total += leg * dt;
        }
    }
    0.5 * total
}

fn interaction_marks(
    a: &Bridge,
    b: &Bridge,
    same_mark: bool,
    pot: &PairPotential,
    grid: &TimeGrid,
    metric: Metric,
    dim: usize,
) -> f64 {
    let zero = [0.0; 3];
    interaction_paths(
        &a.positions,
        a.legs,
        &zero,
        &b.positions,
        b.legs,
        &zero,
        same_mark,
        pot,
        grid,
        metric,
        dim,
    )
}

/// T between particles `i` and `j` of a configuration (i == j gives the
/// self-interaction of the legs of one mark). Operands are ordered
/// canonically so T is exactly symmetric in (i, j).
pub fn pair_interaction(
    conf: &MarkedConfiguration,
    i: usize,
    j: usize,
    pot: &PairPotential,
    grid: &TimeGrid,
) -> f64 {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    interaction_marks(
        &conf.particles[lo],
        &conf.particles[hi],
        lo == hi,
        pot,
        grid,
        conf.metric(),
        conf.boxspec.dim,
    )
}

/// H = sum over ordered pairs of anchors of T; evaluated once per unordered
/// pair and doubled.
pub fn hamiltonian(conf: &MarkedConfiguration, pot: &PairPotential, grid: &TimeGrid) -> f64 {
    hamiltonian_of(
        &conf.particles,
        pot,
        grid,
        conf.metric(),
        conf.boxspec.dim,
    )
}

/// The same ordered double sum over a bare slice of marks.
pub fn hamiltonian_of(
    marks: &[Bridge],
    pot: &PairPotential,
    grid: &TimeGrid,
    metric: Metric,
    dim: usize,
) -> f64 {
    let mut h = 0.0;
    for i in 0..marks.len() {
        let self_term = interaction_marks(&marks[i], &marks[i], true, pot, grid, metric, dim);
        if self_term == f64::INFINITY {
            return f64::INFINITY;
        }
        h += self_term;
        for j in (i + 1)..marks.len() {
            let t = interaction_marks(&marks[i], &marks[j], false, pot, grid, metric, dim);
            if t == f64::INFINITY {
                return f64::INFINITY;
            }
            h += 2.0 * t;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// sampling

/// Draw a length from the weight table (probabilities q_k / q_bar).
fn sample_length(weights: &LengthWeights, rng: &mut ChaCha8Rng) -> usize {
    let total = weights.q_bar();
    let mut u = rng.gen_range(0.0..total);
    for (idx, &w) in weights.q.iter().enumerate() {
        if u < w {
            return idx + 1;
        }
        u -= w;
    }
    weights.q.len()
}

/// One cycle with a uniformly proposed start. For empty and periodic
/// boundary conditions the start is exactly uniform; for Dirichlet the
/// anchor is re-drawn on every rejection, which tilts the accepted anchor
/// law to the on-diagonal Dirichlet mass, as the reference intensity
/// demands.
pub fn sample_cycle(
    boxspec: &BoxSpec,
    k: usize,
    grid: &TimeGrid,
    rejection_cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Bridge, BridgeError> {
    match boxspec.bc {
        Bc::Dirichlet => {
            let total_time = k as f64 * grid.beta;
            let steps = k * grid.slices_per_leg;
            for _ in 0..rejection_cap {
                let x = boxspec.sample_point(rng);
                let positions = sample_free_path(&x, &x, total_time, steps, boxspec.dim, rng);
                if stays_inside(&positions, boxspec) {
                    return Ok(Bridge {
                        anchor: x,
                        legs: k,
                        positions,
                        winding: [0; 3],
                    });
                }
            }
            Err(BridgeError::RejectionExhausted {
                attempts: rejection_cap,
                acceptance_estimate: 0.0,
            })
        }
        _ => {
            let x = boxspec.sample_point(rng);
            sample_bridge(&x, k, grid, boxspec, rejection_cap, rng)
        }
    }
}

/// Draw the reference field on the box: Poisson particle count with
/// intensity q_bar |Lambda|, i.i.d. lengths with weights q_k, and a mark
/// per particle.
pub fn sample_marked_poisson(
    boxspec: &BoxSpec,
    weights: &LengthWeights,
    grid: &TimeGrid,
    mc: &McParams,
    task: u64,
) -> Result<MarkedConfiguration, BridgeError> {
    let mut rng = derive_stream(mc.seed, task);
    let lambda = weights.q_bar() * boxspec.volume();
    let n = sample_poisson(lambda, &mut rng);
    let mut particles = Vec::with_capacity(n);
    for _ in 0..n {
        let k = sample_length(weights, &mut rng);
        particles.push(sample_cycle(boxspec, k, grid, mc.rejection_cap, &mut rng)?);
    }
    Ok(MarkedConfiguration {
        boxspec: *boxspec,
        particles,
        seed: mc.seed,
    })
}

fn sample_poisson(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    use rand_distr::{Distribution, Poisson};
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive intensity").sample(rng) as usize
}

// ---------------------------------------------------------------------------
// the length-constraint dynamic program

/// Distribution of S = sum_k k N_k for independent N_k ~ Poisson(|L| q_k),
/// built layer by layer so the count vector can be sampled backward
/// conditioned on {S = n}.
#[derive(Debug, Clone)]
pub struct LengthConstraintDp {
    intensities: Vec<f64>,
    /// layers[k][m] = P(sum_{j<=k} j N_j = m) for m = 0..n.
    layers: Vec<Vec<f64>>,
}

impl LengthConstraintDp {
    pub fn new(volume: f64, q: &[f64], n: usize) -> Self {
        assert!(q.len() >= n, "need weights up to the target length");
        let intensities: Vec<f64> = q[..n].iter().map(|qk| qk * volume).collect();
        let mut layers = Vec::with_capacity(n + 1);
        let mut base = vec![0.0; n + 1];
        base[0] = 1.0;
        layers.push(base);
        for k in 1..=n {
            let c = intensities[k - 1];
            let prev = &layers[k - 1];
            let mut next = vec![0.0; n + 1];
            for (m, slot) in next.iter_mut().enumerate() {
                let mut p = 0.0;
                let mut pois = (-c).exp();
                let mut j = 0usize;
                while j * k <= m {
                    p += pois * prev[m - j * k];
                    j += 1;
                    pois *= c / j as f64;
                }
                *slot = p;
            }
            layers.push(next);
        }
        LengthConstraintDp {
            intensities,
            layers,
        }
    }

    pub fn target(&self) -> usize {
        self.layers.len() - 1
    }

    /// P(S = m) over lengths 1..target.
    pub fn prob_total(&self, m: usize) -> f64 {
        self.layers[self.target()][m]
    }

    /// Occupation numbers (lambda_k) drawn conditionally on {S = target}.
    pub fn sample_occupations(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.target();
        let mut occ = vec![0usize; n];
        let mut rem = n;
        for k in (1..=n).rev() {
            if rem == 0 {
                break;
            }
            let c = self.intensities[k - 1];
            let total = self.layers[k][rem];
            let mut u = rng.gen_range(0.0..1.0) * total;
            let mut pois = (-c).exp();
            let mut j = 0usize;
            loop {
                let w = pois * self.layers[k - 1][rem - j * k];
                if u < w || (j + 1) * k > rem {
                    break;
                }
                u -= w;
                j += 1;
                pois *= c / j as f64;
            }
            occ[k - 1] = j;
            rem -= j * k;
        }
        occ
    }
}

/// P(total mark length = n) under the reference field truncated at the
/// weight table's K_max: marks longer than n must be absent, which
/// contributes the exponential factor in front of the convolution DP.
pub fn length_constraint_probability(volume: f64, weights: &LengthWeights, n: usize) -> f64 {
    let k_max = weights.k_max();
    assert!(k_max >= n);
    let long_tail: f64 = weights.q[n..].iter().sum();
    let dp = LengthConstraintDp::new(volume, &weights.q, n);
    (-volume * long_tail).exp() * dp.prob_total(n)
}

// ---------------------------------------------------------------------------
// the partition-function estimator

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateError {
    BadParticleNumber { n: usize, max: usize },
    Sampling(BridgeError),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::BadParticleNumber { n, max } => {
                write!(f, "particle number {n} outside supported range 1..={max}")
            }
            EstimateError::Sampling(e) => write!(f, "sampling failed: {e}"),
        }
    }
}

impl std::error::Error for EstimateError {}

impl From<BridgeError> for EstimateError {
    fn from(e: BridgeError) -> Self {
        EstimateError::Sampling(e)
    }
}

/// Weights entering the Z estimators. Dirichlet runs through the free
/// field: the stay-inside indicators live in the Monte Carlo payload, so no
/// estimated weights contaminate the exact prefactor.
pub(crate) fn weights_for_partition(boxspec: &BoxSpec, beta: f64, n: usize) -> LengthWeights {
    let effective = BoxSpec {
        bc: match boxspec.bc {
            Bc::Dirichlet => Bc::Empty,
            other => other,
        },
        ..*boxspec
    };
    // grid/mc unused for the exact branches
    let grid = TimeGrid::new(beta, 2);
    bridges::length_weights(beta, &effective, n, &grid, &McParams::default())
}

pub(crate) struct ConditionalSample {
    pub marks: Vec<Bridge>,
    pub all_inside: bool,
}

/// Draw marks conditioned on the occupation vector: anchors uniform,
/// bridges free (empty) or wound (periodic); for the Dirichlet route the
/// marks stay free and the stay flag is reported.
pub(crate) fn draw_conditional_marks(
    occ: &[usize],
    boxspec: &BoxSpec,
    grid: &TimeGrid,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ConditionalSample, BridgeError> {
    let effective = BoxSpec {
        bc: match boxspec.bc {
            Bc::Dirichlet => Bc::Empty,
            other => other,
        },
        ..*boxspec
    };
    let mut marks = Vec::new();
    let mut all_inside = true;
    for (idx, &count) in occ.iter().enumerate() {
        let k = idx + 1;
        for _ in 0..count {
            let x = effective.sample_point(rng);
            let bridge = sample_bridge(&x, k, grid, &effective, cap, rng)?;
            if boxspec.bc == Bc::Dirichlet && !stays_inside(&bridge.positions, boxspec) {
                all_inside = false;
            }
            marks.push(bridge);
        }
    }
    Ok(ConditionalSample { marks, all_inside })
}

/// Partition function of n particles through the marked-Poisson
/// representation: exact prefactor exp(|L| q_bar_n) P(S = n) times the Monte
/// Carlo conditional expectation of the Boltzmann factor.
pub fn estimate_partition_poisson(
    n: usize,
    boxspec: &BoxSpec,
    pot: &PairPotential,
    grid: &TimeGrid,
    mc: &McParams,
) -> Result<EstimatorResult, EstimateError> {
    const MAX_N: usize = 4096;
    if n == 0 || n > MAX_N {
        return Err(EstimateError::BadParticleNumber { n, max: MAX_N });
    }
    let volume = boxspec.volume();
    let weights = weights_for_partition(boxspec, grid.beta, n);
    let dp = LengthConstraintDp::new(volume, &weights.q, n);
    let prefactor = (volume * weights.q_bar()).exp() * dp.prob_total(n);

    if pot.is_zero() && boxspec.bc != Bc::Dirichlet {
        return Ok(EstimatorResult::exact(prefactor, mc.seed));
    }

    let metric = match boxspec.bc {
        Bc::Periodic => Metric::Torus(boxspec.length),
        _ => Metric::Euclidean,
    };
    let dim = boxspec.dim;
    let values: Vec<Result<f64, BridgeError>> = (0..mc.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(mc.seed, task_id(1, i));
            let occ = dp.sample_occupations(&mut rng);
            let sample = draw_conditional_marks(&occ, boxspec, grid, mc.rejection_cap, &mut rng)?;
            if !sample.all_inside {
                return Ok(0.0);
            }
            let h = hamiltonian_of(&sample.marks, pot, grid, metric, dim);
            Ok((-h).exp())
        })
        .collect();
    let mut payload = Vec::with_capacity(values.len());
    for v in values {
        payload.push(v?);
    }
    let (mean, stderr) = mean_stderr(&payload);
    Ok(EstimatorResult::estimated(
        prefactor * mean,
        prefactor * stderr,
        mc.samples,
        mc.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridges::length_weights;

    const NORM_3D: f64 = 0.02244839026564582;
    const QBAR_3D: f64 = 0.030114229487159399;
    const ZETA_32: f64 = 2.6123753486854883;
    const Z1_L10: f64 = 0.2244839026564582;
    const Z2_L10: f64 = 0.064880033734837707;

    fn box3(l: f64, bc: Bc) -> BoxSpec {
        BoxSpec::new(3, l, bc)
    }

    /// A mark whose every position sits at `p` (zero spatial extent), handy
    /// for pinning interaction values with step potentials.
    fn frozen_mark(p: Point, legs: usize, grid: &TimeGrid) -> Bridge {
        Bridge {
            anchor: p,
            legs,
            positions: vec![p; legs * grid.slices_per_leg + 1],
            winding: [0; 3],
        }
    }

    fn conf_of(marks: Vec<Bridge>, boxspec: BoxSpec) -> MarkedConfiguration {
        MarkedConfiguration {
            boxspec,
            particles: marks,
            seed: 0,
        }
    }

    #[test]
    fn pair_interaction_constant_potential_values() {
        let grid = TimeGrid::new(1.0, 4);
        let b = box3(10.0, Bc::Empty);
        // v = c inside radius 1 covers the separation 0.5 at all grid times
        let pot = PairPotential::compact_step(2.0, 1.0).unwrap();
        let conf = conf_of(
            vec![
                frozen_mark([0.0; 3], 1, &grid),
                frozen_mark([0.5, 0.0, 0.0], 1, &grid),
            ],
            b,
        );
        // single (0,0) leg pair with the 1/2 prefactor: c beta / 2
        let t = pair_interaction(&conf, 0, 1, &pot, &grid);
        assert!((t - 1.0).abs() < 1e-12);
        // symmetry is exact by canonical operand order
        assert_eq!(t, pair_interaction(&conf, 1, 0, &pot, &grid));

        // two legs of one mark: ordered pairs (0,1) and (1,0), c beta total
        let conf2 = conf_of(vec![frozen_mark([0.0; 3], 2, &grid)], b);
        let t_self = pair_interaction(&conf2, 0, 0, &pot, &grid);
        assert!((t_self - 2.0).abs() < 1e-12);

        // a single-leg mark has no self-interaction
        let conf1 = conf_of(vec![frozen_mark([0.0; 3], 1, &grid)], b);
        assert_eq!(pair_interaction(&conf1, 0, 0, &pot, &grid), 0.0);
    }

    #[test]
    fn hamiltonian_values_and_infinity_absorption() {
        let grid = TimeGrid::new(1.0, 4);
        let b = box3(10.0, Bc::Empty);
        let pot = PairPotential::compact_step(2.0, 1.0).unwrap();
        let conf = conf_of(
            vec![
                frozen_mark([0.0; 3], 1, &grid),
                frozen_mark([0.5, 0.0, 0.0], 1, &grid),
            ],
            b,
        );
        // H = T_xy + T_yx = c beta
        assert!((hamiltonian(&conf, &pot, &grid) - 2.0).abs() < 1e-12);

        let empty = conf_of(vec![], b);
        assert_eq!(hamiltonian(&empty, &pot, &grid), 0.0);

        let hard = PairPotential::inverse_power(1.0, 6.0, 0.8).unwrap();
        let h = hamiltonian(&conf, &hard, &grid);
        assert!(h.is_infinite());
        assert_eq!((-h).exp(), 0.0);
    }

    #[test]
    fn total_mark_length_counts_anchors_in_region() {
        let grid = TimeGrid::new(1.0, 2);
        let b = box3(10.0, Bc::Empty);
        let conf = conf_of(
            vec![
                frozen_mark([0.0; 3], 3, &grid),
                frozen_mark([4.0, 4.0, 4.0], 2, &grid),
                frozen_mark([0.5, -0.5, 0.0], 4, &grid),
            ],
            b,
        );
        assert_eq!(total_mark_length(&conf, 10.0), 9);
        assert_eq!(total_mark_length(&conf, 2.0), 7); // excludes the corner particle
        assert_eq!(total_mark_length(&conf, 0.1), 3);
    }

    #[test]
    fn interaction_symmetric_under_swap_random() {
        let grid = TimeGrid::new(0.7, 3);
        let b = box3(6.0, Bc::Empty);
        let pot = PairPotential::gaussian(1.3, 0.9).unwrap();
        let weights = length_weights(0.7, &b, 4, &grid, &McParams::default());
        let conf =
            sample_marked_poisson(&b, &weights, &grid, &McParams::new(100, 21), 0).unwrap();
        if conf.particles.len() >= 2 {
            for i in 0..conf.particles.len().min(4) {
                for j in 0..conf.particles.len().min(4) {
                    let tij = pair_interaction(&conf, i, j, &pot, &grid);
                    let tji = pair_interaction(&conf, j, i, &pot, &grid);
                    assert_eq!(tij, tji);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_monotone_under_insertion() {
        let grid = TimeGrid::new(1.0, 3);
        let b = box3(4.0, Bc::Empty);
        let pot = PairPotential::gaussian(1.0, 1.0).unwrap();
        let weights = length_weights(1.0, &b, 4, &grid, &McParams::default());
        let mc = McParams::new(100, 22);
        for task in 0..100 {
            let mut conf = sample_marked_poisson(&b, &weights, &grid, &mc, task).unwrap();
            let h0 = hamiltonian(&conf, &pot, &grid);
            let mut rng = derive_stream(999, task);
            let k = 1 + (task % 3) as usize;
            conf.particles
                .push(sample_cycle(&b, k, &grid, 1000, &mut rng).unwrap());
            let h1 = hamiltonian(&conf, &pot, &grid);
            assert!(h1 >= h0 - 1e-12, "insertion lowered H: {h0} -> {h1}");
        }
    }

    #[test]
    fn dp_no_particle_probability() {
        // P(total length = 0) = exp(-|L| q_bar) with a deep weight table
        let b = box3(10f64.powf(1.0 / 3.0), Bc::Empty);
        let grid = TimeGrid::new(1.0, 2);
        let w = length_weights(1.0, &b, 100_000, &grid, &McParams::default());
        let p0 = length_constraint_probability(b.volume(), &w, 0);
        let expect = (-b.volume() * QBAR_3D).exp();
        // the K_max tail of q_bar is ~1e-7 relative
        assert!((p0 - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn dp_distribution_sums_to_one_marginally() {
        let w = weights_for_partition(&box3(2.0, Bc::Empty), 1.0, 12);
        let dp = LengthConstraintDp::new(8.0, &w.q, 12);
        // first layer is the Poisson over k = 1 alone
        let c = 8.0 * w.q[0];
        for m in 0..=4usize {
            let pois =
                (-c).exp() * c.powi(m as i32) / (1..=m).map(|j| j as f64).product::<f64>().max(1.0);
            assert!((dp.layers[1][m] - pois).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_sampler_matches_enumeration() {
        // chi^2 against the exact conditional law on partitions of 6
        let n = 6usize;
        let volume = 10.0;
        let w = weights_for_partition(&box3(10f64.powf(1.0 / 3.0), Bc::Empty), 1.0, n);
        let dp = LengthConstraintDp::new(volume, &w.q, n);
        let mut expected: Vec<(Vec<usize>, f64)> = Vec::new();
        crate::cycle_expansion::for_each_partition(n, |occ| {
            let mut weight = 1.0;
            for (idx, &cnt) in occ.iter().enumerate() {
                if cnt > 0 {
                    let c = volume * w.q[idx];
                    weight *= c.powi(cnt as i32)
                        / (1..=cnt).map(|j| j as f64).product::<f64>();
                }
            }
            expected.push((occ.to_vec(), weight));
        });
        let total: f64 = expected.iter().map(|(_, w)| w).sum();
        let draws = 40_000usize;
        let mut counts = vec![0usize; expected.len()];
        for i in 0..draws {
            let mut rng = derive_stream(23, i as u64);
            let occ = dp.sample_occupations(&mut rng);
            let idx = expected
                .iter()
                .position(|(o, _)| o == &occ)
                .expect("sampled occupation must be a partition");
            counts[idx] += 1;
        }
        let mut chi2 = 0.0;
        let mut dof = 0.0;
        for ((_, w), &c) in expected.iter().zip(counts.iter()) {
            let e = draws as f64 * w / total;
            if e > 5.0 {
                chi2 += (c as f64 - e).powi(2) / e;
                dof += 1.0;
            }
        }
        // chi^2 concentration: mean dof, sd sqrt(2 dof)
        assert!(
            chi2 < dof + 4.0 * (2.0 * dof).sqrt(),
            "chi2 {chi2} with {dof} dof"
        );
    }

    #[test]
    fn partition_estimate_exact_for_free_gas() {
        let b = box3(10f64.powf(1.0 / 3.0), Bc::Empty);
        let grid = TimeGrid::new(1.0, 4);
        let pot = PairPotential::zero();
        let z1 = estimate_partition_poisson(1, &b, &pot, &grid, &McParams::new(10, 1)).unwrap();
        assert!(z1.exact);
        assert!((z1.mean - Z1_L10).abs() < 1e-12 * Z1_L10);
        let z2 = estimate_partition_poisson(2, &b, &pot, &grid, &McParams::new(10, 1)).unwrap();
        assert!((z2.mean - Z2_L10).abs() < 1e-12 * Z2_L10);
    }

    #[test]
    fn field_sampler_statistics() {
        // particle count, length histogram and total mark length against the
        // reference law
        let b = box3(10f64.powf(1.0 / 3.0), Bc::Empty);
        let grid = TimeGrid::new(1.0, 2);
        let k_max = 10_000;
        let w = length_weights(1.0, &b, k_max, &grid, &McParams::default());
        let mc = McParams::new(0, 31);
        let draws = 10_000usize;
        let mut count_sum = 0.0;
        let mut len_total = 0.0;
        let mut hist = vec![0usize; 6];
        for task in 0..draws {
            let conf = sample_marked_poisson(&b, &w, &grid, &mc, task as u64).unwrap();
            count_sum += conf.particles.len() as f64;
            len_total += total_mark_length(&conf, b.length) as f64;
            for p in &conf.particles {
                if p.legs <= 6 {
                    hist[p.legs - 1] += 1;
                }
            }
        }
        let vol = b.volume();
        let mean_count = count_sum / draws as f64;
        let want_count = w.q_bar() * vol;
        // Poisson variance = mean
        let sd_count = (want_count / draws as f64).sqrt();
        assert!(
            (mean_count - want_count).abs() < 4.0 * sd_count,
            "count {mean_count} vs {want_count}"
        );

        // E[total length] = |L| sum k q_k -> |L| zeta(d/2) (4 pi b)^{-d/2}
        let want_len = vol * ZETA_32 * NORM_3D;
        let mean_len = len_total / draws as f64;
        // var(total) = |L| sum k^2 q_k, truncated
        let var_len: f64 = vol
            * (1..=k_max)
                .map(|k| (k * k) as f64 * w.q[k - 1])
                .sum::<f64>();
        let sd_len = (var_len / draws as f64).sqrt();
        assert!(
            (mean_len - want_len).abs() < 4.0 * sd_len,
            "length {mean_len} vs {want_len}"
        );

        // chi^2 on the length histogram
        let total_particles: usize = hist.iter().sum();
        let mut chi2 = 0.0;
        let mut dof = 0.0;
        for (idx, &c) in hist.iter().enumerate() {
            let p = w.q[idx] / w.q_bar();
            let e = total_particles as f64 * p
                / (w.q.iter().take(6).sum::<f64>() / w.q_bar());
            if e > 10.0 {
                chi2 += (c as f64 - e).powi(2) / e;
                dof += 1.0;
            }
        }
        assert!(
            chi2 < dof + 4.0 * (2.0 * dof).sqrt(),
            "length histogram chi2 {chi2} dof {dof}"
        );
    }
}
