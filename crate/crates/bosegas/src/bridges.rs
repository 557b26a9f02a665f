//! Boxes, Gaussian transition kernels and exact Brownian-bridge sampling.
//!
//! The diffusion generator is the full Laplacian, so a free path has
//! per-coordinate variance 2t and transition density
//!
//!   g_t(x, y) = (4 pi t)^{-d/2} exp(-|x - y|^2 / (4 t)).
//!
//! Cycle-length weights are q_k = (4 pi beta)^{-d/2} k^{-(1+d/2)} for the
//! empty boundary condition, with image sums (periodic) and grid-time
//! rejection estimates (Dirichlet) replacing the closed form on a box.
//! Bridges are discretized on k * n_s + 1 equispaced times and sampled by
//! sequential Gaussian conditioning, so the grid-time marginals are exact.

use crate::estimator::{EstimatorResult, McParams};
use crate::rng::{derive_stream, mean_stderr, task_id};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt;

/// Spatial point; coordinates beyond the active dimension stay zero.
pub type Point = [f64; 3];

pub fn dist2(a: &Point, b: &Point, dim: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Empty,
    Periodic,
    Dirichlet,
}

impl fmt::Display for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bc::Empty => write!(f, "empty"),
            Bc::Periodic => write!(f, "periodic"),
            Bc::Dirichlet => write!(f, "dirichlet"),
        }
    }
}

/// Centered cube [-L/2, L/2]^d with a boundary condition.
#[derive(Debug, Clone, Copy)]
pub struct BoxSpec {
    pub dim: usize,
    pub length: f64,
    pub bc: Bc,
}

impl BoxSpec {
    pub fn new(dim: usize, length: f64, bc: Bc) -> Self {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        assert!(length > 0.0, "box side must be positive");
        BoxSpec { dim, length, bc }
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    pub fn contains(&self, p: &Point) -> bool {
        let h = 0.5 * self.length;
        (0..self.dim).all(|i| p[i].abs() <= h)
    }

    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Point {
        let h = 0.5 * self.length;
        let mut p = [0.0; 3];
        for c in p.iter_mut().take(self.dim) {
            *c = rng.gen_range(-h..h);
        }
        p
    }

    /// Wrap a coordinate into [-L/2, L/2).
    pub fn wrap_coord(&self, u: f64) -> f64 {
        u - self.length * (u / self.length + 0.5).floor()
    }
}

/// Uniform discretization of each leg [i beta, (i+1) beta] into n_s slices.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub beta: f64,
    pub slices_per_leg: usize,
}

impl TimeGrid {
    pub fn new(beta: f64, slices_per_leg: usize) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        assert!(slices_per_leg >= 2, "need at least 2 slices per leg");
        TimeGrid {
            beta,
            slices_per_leg,
        }
    }

    pub fn step(&self) -> f64 {
        self.beta / self.slices_per_leg as f64
    }
}

/// A mark: closed path of `legs` legs pinned at `anchor`, discretized at
/// legs * n_s + 1 grid times. Under periodic boundary conditions the stored
/// positions are wrapped into the box and `winding` records the homotopy
/// class, so positions[last] equals the anchor exactly in every case.
#[derive(Debug, Clone)]
pub struct Bridge {
    pub anchor: Point,
    pub legs: usize,
    pub positions: Vec<Point>,
    pub winding: [i64; 3],
}

impl Bridge {
    /// Axis-aligned bounding box of the stored positions.
    pub fn bbox(&self, dim: usize) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        for i in dim..3 {
            lo[i] = 0.0;
            hi[i] = 0.0;
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BridgeError {
    /// Dirichlet rejection sampler gave up.
    RejectionExhausted {
        attempts: u64,
        acceptance_estimate: f64,
    },
}

impl fmt::Display for BridgeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BridgeError::RejectionExhausted {
                attempts,
                acceptance_estimate,
            } => write!(
                f,
                "Dirichlet bridge rejection exhausted after {attempts} attempts \
                 (acceptance estimate {acceptance_estimate:.3e})"
            ),
        }
    }
}

impl std::error::Error for BridgeError {}

// ---------------------------------------------------------------------------
// kernels

/// (4 pi beta)^{-d/2}: the on-diagonal free kernel mass.
pub fn heat_kernel_norm(beta: f64, d: usize) -> f64 {
    (4.0 * PI * beta).powf(-(d as f64) / 2.0)
}

/// Reference cycle weight q_k = (4 pi beta)^{-d/2} k^{-(1+d/2)}.
pub fn reference_weight(beta: f64, d: usize, k: usize) -> f64 {
    heat_kernel_norm(beta, d) * (k as f64).powf(-(1.0 + d as f64 / 2.0))
}

/// Free Gaussian kernel g_t(x, y).
pub fn gaussian_kernel(x: &Point, y: &Point, t: f64, dim: usize) -> f64 {
    assert!(t > 0.0, "kernel time must be positive");
    heat_kernel_norm(t, dim) * (-dist2(x, y, dim) / (4.0 * t)).exp()
}

/// One-coordinate image sum: sum_m exp(-(delta - m L)^2 / (4 t)), truncated
/// when a shell contributes less than 1e-16 of the running total.
fn theta_sum(delta: f64, length: f64, t: f64) -> f64 {
    let m0 = (delta / length).round() as i64;
    let term = |m: i64| {
        let u = delta - m as f64 * length;
        (-u * u / (4.0 * t)).exp()
    };
    let mut total = term(m0);
    let mut r = 1;
    loop {
        let add = term(m0 + r) + term(m0 - r);
        total += add;
        if add < 1e-16 * total && r >= 2 {
            return total;
        }
        r += 1;
    }
}

/// Periodic kernel on the torus: image sum over shifts of the free kernel.
pub fn periodic_kernel(x: &Point, y: &Point, t: f64, boxspec: &BoxSpec) -> f64 {
    assert!(t > 0.0, "kernel time must be positive");
    let mut g = heat_kernel_norm(t, boxspec.dim);
    for i in 0..boxspec.dim {
        g *= theta_sum(x[i] - y[i], boxspec.length, t);
    }
    g
}

/// Dirichlet kernel estimated by free-bridge rejection at grid times: the
/// free mass times the probability that the pinned path stays in the box.
pub fn dirichlet_kernel(
    x: &Point,
    y: &Point,
    t: f64,
    boxspec: &BoxSpec,
    steps: usize,
    mc: &McParams,
) -> EstimatorResult {
    assert!(t > 0.0, "kernel time must be positive");
    let free = gaussian_kernel(x, y, t, boxspec.dim);
    let values: Vec<f64> = (0..mc.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(mc.seed, task_id(0, i));
            let path = sample_free_path(x, y, t, steps, boxspec.dim, &mut rng);
            if stays_inside(&path, boxspec) {
                free
            } else {
                0.0
            }
        })
        .collect();
    let (mean, stderr) = mean_stderr(&values);
    EstimatorResult::estimated(mean, stderr, mc.samples, mc.seed)
}

/// Minimum-image distance on the torus; coordinates are reduced first, so
/// checking the 3^d neighbor shifts is equivalent to the global minimum.
pub fn torus_distance(x: &Point, y: &Point, boxspec: &BoxSpec) -> f64 {
    let mut s = 0.0;
    for i in 0..boxspec.dim {
        let d = boxspec.wrap_coord(x[i] - y[i]);
        s += d * d;
    }
    s.sqrt()
}

// ---------------------------------------------------------------------------
// sampling

pub fn stays_inside(path: &[Point], boxspec: &BoxSpec) -> bool {
    path.iter().all(|p| boxspec.contains(p))
}

/// Pinned Gaussian path from `from` to `to` over [0, total_time], sampled by
/// sequential conditioning. Var(f(t_{j+1}) | f(t_j)) = 2 dt (T - t_{j+1}) /
/// (T - t_j) per coordinate; the final point is set to `to` exactly.
pub fn sample_free_path(
    from: &Point,
    to: &Point,
    total_time: f64,
    steps: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Point> {
    debug_assert!(steps >= 1 && total_time > 0.0);
    let dt = total_time / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(*from);
    let mut cur = *from;
    for j in 0..steps - 1 {
        let remaining = total_time - j as f64 * dt;
        let frac = dt / remaining;
        let sd = (2.0 * dt * (remaining - dt) / remaining).sqrt();
        let mut next = [0.0; 3];
        for i in 0..dim {
            let mean = cur[i] + frac * (to[i] - cur[i]);
            let z: f64 = rng.sample(StandardNormal);
            next[i] = mean + sd * z;
        }
        path.push(next);
        cur = next;
    }
    path.push(*to);
    path
}

/// Draw one image index m with probability proportional to
/// exp(-(delta - m L)^2 / (4 t)); the enumeration stops once the missed
/// mass is below 1e-14 of the total.
fn sample_image_offset(delta: f64, length: f64, t: f64, rng: &mut ChaCha8Rng) -> i64 {
    let m0 = (delta / length).round() as i64;
    let weight = |m: i64| {
        let u = delta - m as f64 * length;
        (-u * u / (4.0 * t)).exp()
    };
    let mut entries = vec![(m0, weight(m0))];
    let mut total = entries[0].1;
    let mut r = 1;
    loop {
        let (wa, wb) = (weight(m0 + r), weight(m0 - r));
        entries.push((m0 + r, wa));
        entries.push((m0 - r, wb));
        total += wa + wb;
        if wa + wb < 1e-14 * total && r >= 2 {
            break;
        }
        r += 1;
    }
    let mut u = rng.gen_range(0.0..total);
    for (m, w) in &entries {
        if u < *w {
            return *m;
        }
        u -= w;
    }
    entries[0].0
}

/// Sample a closed mark of `k` legs anchored at `x`. Periodic marks first
/// draw a winding class, then bridge to the wound image and wrap; Dirichlet
/// marks are free bridges accepted only when all grid positions stay inside.
pub fn sample_bridge(
    x: &Point,
    k: usize,
    grid: &TimeGrid,
    boxspec: &BoxSpec,
    rejection_cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Bridge, BridgeError> {
    assert!(k >= 1);
    let total_time = k as f64 * grid.beta;
    let steps = k * grid.slices_per_leg;
    match boxspec.bc {
        Bc::Empty => Ok(Bridge {
            anchor: *x,
            legs: k,
            positions: sample_free_path(x, x, total_time, steps, boxspec.dim, rng),
            winding: [0; 3],
        }),
        Bc::Periodic => {
            let mut winding = [0i64; 3];
            let mut target = *x;
            for i in 0..boxspec.dim {
                let m = sample_image_offset(0.0, boxspec.length, total_time, rng);
                winding[i] = m;
                target[i] = x[i] + m as f64 * boxspec.length;
            }
            let mut positions = sample_free_path(x, &target, total_time, steps, boxspec.dim, rng);
            for p in positions.iter_mut() {
                for i in 0..boxspec.dim {
                    p[i] = boxspec.wrap_coord(p[i]);
                }
            }
            Ok(Bridge {
                anchor: *x,
                legs: k,
                positions,
                winding,
            })
        }
        Bc::Dirichlet => {
            for attempt in 1..=rejection_cap {
                let positions = sample_free_path(x, x, total_time, steps, boxspec.dim, rng);
                if stays_inside(&positions, boxspec) {
                    return Ok(Bridge {
                        anchor: *x,
                        legs: k,
                        positions,
                        winding: [0; 3],
                    });
                }
                if attempt == rejection_cap {
                    break;
                }
            }
            Err(BridgeError::RejectionExhausted {
                attempts: rejection_cap,
                acceptance_estimate: 0.0,
            })
        }
    }
}

/// One-leg path from x to y under a boundary condition, for the permutation
/// estimator. Periodic paths pick the image of y per coordinate first.
/// Dirichlet callers sample the free path and weight by the stay indicator.
pub fn sample_leg_path(
    x: &Point,
    y: &Point,
    grid: &TimeGrid,
    boxspec: &BoxSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<Point> {
    let steps = grid.slices_per_leg;
    match boxspec.bc {
        Bc::Periodic => {
            let mut target = *y;
            for i in 0..boxspec.dim {
                let m = sample_image_offset(y[i] - x[i], boxspec.length, grid.beta, rng);
                target[i] = y[i] - m as f64 * boxspec.length;
            }
            let mut path = sample_free_path(x, &target, grid.beta, steps, boxspec.dim, rng);
            for p in path.iter_mut() {
                for i in 0..boxspec.dim {
                    p[i] = boxspec.wrap_coord(p[i]);
                }
            }
            path
        }
        _ => sample_free_path(x, y, grid.beta, steps, boxspec.dim, rng),
    }
}

// ---------------------------------------------------------------------------
// cycle-length weights

/// Weights q_1..q_{k_max} for a box and boundary condition, with standard
/// errors for the Monte Carlo (Dirichlet) case.
#[derive(Debug, Clone)]
pub struct LengthWeights {
    pub beta: f64,
    pub dim: usize,
    pub bc: Bc,
    pub box_length: f64,
    pub q: Vec<f64>,
    pub q_err: Vec<f64>,
}

impl LengthWeights {
    pub fn k_max(&self) -> usize {
        self.q.len()
    }

    pub fn q_bar(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn q_bar_err(&self) -> f64 {
        self.q_err.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn exact(&self) -> bool {
        self.bc != Bc::Dirichlet
    }
}

/// q_k for k = 1..k_max. Empty: closed form. Periodic: closed-form image
/// sums (independent of the anchor). Dirichlet: q_k^empty times the
/// Monte Carlo stay-inside probability of a length-k mark with a uniform
/// anchor, checked at grid times.
pub fn length_weights(
    beta: f64,
    boxspec: &BoxSpec,
    k_max: usize,
    grid: &TimeGrid,
    mc: &McParams,
) -> LengthWeights {
    assert!(k_max >= 1);
    let d = boxspec.dim;
    let mut q = Vec::with_capacity(k_max);
    let mut q_err = vec![0.0; k_max];
    match boxspec.bc {
        Bc::Empty => {
            for k in 1..=k_max {
                q.push(reference_weight(beta, d, k));
            }
        }
        Bc::Periodic => {
            let origin = [0.0; 3];
            for k in 1..=k_max {
                let t = k as f64 * beta;
                q.push(periodic_kernel(&origin, &origin, t, boxspec) / k as f64);
            }
        }
        Bc::Dirichlet => {
            for k in 1..=k_max {
                let free = reference_weight(beta, d, k);
                let total_time = k as f64 * beta;
                let steps = k * grid.slices_per_leg;
                let values: Vec<f64> = (0..mc.samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = derive_stream(mc.seed, task_id(k as u64, i));
                        let x = boxspec.sample_point(&mut rng);
                        let path = sample_free_path(&x, &x, total_time, steps, d, &mut rng);
                        if stays_inside(&path, boxspec) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let (acc, acc_err) = mean_stderr(&values);
                q.push(free * acc);
                q_err[k - 1] = free * acc_err;
            }
        }
    }
    LengthWeights {
        beta,
        dim: d,
        bc: boxspec.bc,
        box_length: boxspec.length,
        q,
        q_err,
    }
}
