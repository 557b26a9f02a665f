//! Shift-averaged pairings of the periodized configuration.
//!
//! Periodizing a configuration on the centered box of side L replicates
//! every particle at anchor + L z (z integer), translating its mark along.
//! Averaging a local observable over all shifts of the periodization is the
//! stationary empirical field; out of the two observables used here,
//!
//!   * the mark-length count over the unit box pairs to exactly
//!     N^(l)(omega) / |L|  (an identity checked to 1e-12), and
//!   * the interaction functional Phi pairs to an upper bound on the
//!     Hamiltonian, with a truncated variant (range R, cap M, length K,
//!     occupancy S) giving a lower bound up to a boundary term.
//!
//! No shift integral is ever evaluated by quadrature: the integrands are
//! piecewise constant on an arrangement of axis-aligned boxes, so the
//! pairings reduce to exact finite sums of overlap volumes in d <= 2. In
//! d = 3 the occupancy indicator is handled by a subcell refinement whose
//! error is one-sided (the reported pairing can only be too large, which
//! keeps the lower-bound verdict conservative).

use crate::bridges::{Bridge, Point, TimeGrid};
use crate::poisson_field::{hamiltonian, interaction_paths, MarkedConfiguration, Metric};
use crate::potentials::PairPotential;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldError {
    BoxTooSmall { length: f64, needed: f64 },
    PotentialNotCompact,
    RangeTooLarge { range: f64, max: f64 },
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::BoxTooSmall { length, needed } => {
                write!(f, "box side {length} below required {needed}")
            }
            FieldError::PotentialNotCompact => {
                write!(f, "pairing needs a potential of compact range")
            }
            FieldError::RangeTooLarge { range, max } => {
                write!(f, "interaction range {range} exceeds L/2 - 1 = {max}")
            }
        }
    }
}

impl std::error::Error for FieldError {}

/// Truncation parameters: interaction window side R, potential cap M,
/// length filter K and local occupancy cap S.
#[derive(Debug, Clone, Copy)]
pub struct TruncationParams {
    pub range: f64,
    pub cap: f64,
    pub max_len: usize,
    pub occupancy: f64,
}

impl TruncationParams {
    pub fn new(range: f64, cap: f64, max_len: usize, occupancy: f64) -> Self {
        assert!(range > 1.0, "interaction window side must exceed 1");
        assert!(cap > 0.0 && occupancy >= 1.0 && max_len >= 1);
        TruncationParams {
            range,
            cap,
            max_len,
            occupancy,
        }
    }
}

/// One periodic image: particle `index` shifted by `offset` = L * shift.
#[derive(Debug, Clone)]
pub struct Image<'a> {
    pub index: usize,
    pub shift: [i64; 3],
    pub offset: Point,
    pub bridge: &'a Bridge,
}

impl Image<'_> {
    pub fn anchor(&self) -> Point {
        let mut a = self.bridge.anchor;
        for i in 0..3 {
            a[i] += self.offset[i];
        }
        a
    }
}

/// Lazy view of the L-periodic continuation of a configuration.
pub struct PeriodizedField<'a> {
    conf: &'a MarkedConfiguration,
}

/// The periodic continuation of the restriction of `conf` to its box.
pub fn periodize(conf: &MarkedConfiguration) -> PeriodizedField<'_> {
    PeriodizedField { conf }
}

impl<'a> PeriodizedField<'a> {
    /// All images whose anchor lies in the box [lo, hi] (per coordinate).
    pub fn images_in(&self, lo: &Point, hi: &Point) -> Vec<Image<'a>> {
        let l = self.conf.boxspec.length;
        let dim = self.conf.boxspec.dim;
        let mut out = Vec::new();
        for (index, bridge) in self.conf.particles.iter().enumerate() {
            let mut ranges = [(0i64, 0i64); 3];
            let mut empty = false;
            for (i, range) in ranges.iter_mut().enumerate().take(dim) {
                let a = ((lo[i] - bridge.anchor[i]) / l).ceil() as i64;
                let b = ((hi[i] - bridge.anchor[i]) / l).floor() as i64;
                if a > b {
                    empty = true;
                    break;
                }
                *range = (a, b);
            }
            if empty {
                continue;
            }
            let (z0, z1, z2) = (ranges[0], ranges[1], ranges[2]);
            for za in z0.0..=z0.1 {
                for zb in z1.0..=z1.1 {
                    for zc in z2.0..=z2.1 {
                        let shift = [za, zb, zc];
                        let mut offset = [0.0; 3];
                        for i in 0..dim {
                            offset[i] = shift[i] as f64 * l;
                        }
                        out.push(Image {
                            index,
                            shift,
                            offset,
                            bridge,
                        });
                        if dim < 3 {
                            break;
                        }
                    }
                    if dim < 2 {
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Overlap |[-h, h] ∩ [c - w/2, c + w/2]| per coordinate.
fn overlap_len(c: f64, w: f64, h: f64) -> f64 {
    ((c + 0.5 * w).min(h) - (c - 0.5 * w).max(-h)).max(0.0)
}

/// Volume of the intersection of the centered box of side 2h with the box
/// of side w centered at `c`.
fn overlap_volume(c: &Point, w: f64, h: f64, dim: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..dim {
        v *= overlap_len(c[i], w, h);
        if v == 0.0 {
            return 0.0;
        }
    }
    v
}

/// Pairing of the empirical field with the unit-box mark-length count,
/// computed both as an exact overlap-volume sum over the periodization and
/// as N^(l)(omega)/|L|. A mismatch beyond 1e-12 is a hard failure: it
/// falsifies the implementation, not the identity.
pub fn field_pair_length(conf: &MarkedConfiguration) -> f64 {
    let l = conf.boxspec.length;
    assert!(l > 1.0, "identity needs |box| > 1");
    let dim = conf.boxspec.dim;
    let half = 0.5 * l;
    let reach = 0.5 * (l + 1.0);
    let lo = [-reach; 3];
    let hi = [reach; 3];
    let mut overlap_sum = 0.0;
    for image in periodize(conf).images_in(&lo, &hi) {
        overlap_sum +=
            image.bridge.legs as f64 * overlap_volume(&image.anchor(), 1.0, half, dim);
    }
    let direct = crate::poisson_field::total_mark_length(conf, l) as f64;
    assert!(
        (overlap_sum - direct).abs() <= 1e-12 * direct.max(1.0),
        "shift-average identity violated: {overlap_sum} vs {direct}"
    );
    overlap_sum / conf.boxspec.volume()
}

/// Pairing of the empirical field with the interaction functional Phi:
/// sum over periodized pairs of T times the unit-box overlap volume of the
/// first anchor, divided by |L|. Requires a compact-range potential with
/// range <= L/2 - 1 so the image sum is finite.
pub fn field_pair_phi(
    conf: &MarkedConfiguration,
    pot: &PairPotential,
    grid: &TimeGrid,
) -> Result<f64, FieldError> {
    let l = conf.boxspec.length;
    if l <= 1.0 {
        return Err(FieldError::BoxTooSmall {
            length: l,
            needed: 1.0,
        });
    }
    let range = pot.compact_range().ok_or(FieldError::PotentialNotCompact)?;
    let max_range = 0.5 * l - 1.0;
    if range > max_range {
        return Err(FieldError::RangeTooLarge {
            range,
            max: max_range,
        });
    }
    let dim = conf.boxspec.dim;
    let half = 0.5 * l;
    let reach = 0.5 * (l + 1.0);
    let field = periodize(conf);
    let x_images = field.images_in(&[-reach; 3], &[reach; 3]);
    let bboxes: Vec<(Point, Point)> = conf
        .particles
        .iter()
        .map(|b| b.bbox(dim))
        .collect();
    let mut total = 0.0;
    for xi in &x_images {
        let w_x = overlap_volume(&xi.anchor(), 1.0, half, dim);
        if w_x == 0.0 {
            continue;
        }
        let (xlo, xhi) = bboxes[xi.index];
        for (yidx, ybridge) in conf.particles.iter().enumerate() {
            let (ylo, yhi) = bboxes[yidx];
            // image shifts whose translated path can reach the x path
            let mut zr = [(0i64, 0i64); 3];
            let mut empty = false;
            for (i, slot) in zr.iter_mut().enumerate().take(dim) {
                let lo = ((xlo[i] + xi.offset[i] - range - yhi[i]) / l).ceil() as i64;
                let hi = ((xhi[i] + xi.offset[i] + range - ylo[i]) / l).floor() as i64;
                if lo > hi {
                    empty = true;
                    break;
                }
                *slot = (lo, hi);
            }
            if empty {
                continue;
            }
            for za in zr[0].0..=zr[0].1 {
                for zb in zr[1].0..=zr[1].1 {
                    for zc in zr[2].0..=zr[2].1 {
                        let shift = [za, zb, zc];
                        let mut off_y = [0.0; 3];
                        for i in 0..dim {
                            off_y[i] = shift[i] as f64 * l;
                        }
                        let same = xi.index == yidx && shift == xi.shift;
                        let t = interaction_paths(
                            &xi.bridge.positions,
                            xi.bridge.legs,
                            &xi.offset,
                            &ybridge.positions,
                            ybridge.legs,
                            &off_y,
                            same,
                            pot,
                            grid,
                            Metric::Euclidean,
                            dim,
                        );
                        total += w_x * t;
                        if dim < 3 {
                            break;
                        }
                    }
                    if dim < 2 {
                        break;
                    }
                }
                if dim < 1 {
                    break;
                }
            }
        }
    }
    Ok(total / conf.boxspec.volume())
}

/// The truncated local functional on a window of the (infinite) field:
/// pairs of anchors in the unit box and the side-R box, lengths filtered at
/// K, potential capped at M.
pub fn phi_truncated(
    window: &MarkedConfiguration,
    params: &TruncationParams,
    pot: &PairPotential,
    grid: &TimeGrid,
) -> f64 {
    let dim = window.boxspec.dim;
    let capped = pot.truncated(params.cap);
    let in_box = |p: &Point, side: f64| (0..dim).all(|i| p[i].abs() <= 0.5 * side);
    let mut total = 0.0;
    for (i, a) in window.particles.iter().enumerate() {
        if a.legs > params.max_len || !in_box(&a.anchor, 1.0) {
            continue;
        }
        for (j, b) in window.particles.iter().enumerate() {
            if b.legs > params.max_len || !in_box(&b.anchor, params.range) {
                continue;
            }
            total += interaction_paths(
                &a.positions,
                a.legs,
                &[0.0; 3],
                &b.positions,
                b.legs,
                &[0.0; 3],
                i == j,
                &capped,
                grid,
                Metric::Euclidean,
                dim,
            );
        }
    }
    total
}

/// Covering number of the proof: boxes of diameter (R-1)/2 (side
/// (R-1)/(2 sqrt d)) covering the centered box of side R+1.
pub fn covering_number(range: f64, dim: usize) -> usize {
    let side = (range - 1.0) / (2.0 * (dim as f64).sqrt());
    let per_axis = ((range + 1.0) / side).ceil() as usize;
    per_axis.pow(dim as u32)
}

/// Verdict of the Hamiltonian lower bound
/// H >= |L| <R, Phi^{R,M,K} 1{N_R <= S}> - C N_boundary,
/// with C = 2^d beta M K^2 r S and r the covering number above.
#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub hamiltonian: f64,
    /// |L| times the indicator-weighted pairing (exact in d <= 2,
    /// one-sided overestimate in d = 3).
    pub pairing: f64,
    pub boundary_particles: usize,
    pub covering_number: usize,
    pub constant: f64,
    pub rhs: f64,
    pub holds: bool,
    pub exact: bool,
}

struct PairDomain {
    lo: Point,
    hi: Point,
    value: f64,
}

/// Evaluate both sides of the lower bound on one configuration.
pub fn check_hamiltonian_lower_bound(
    conf: &MarkedConfiguration,
    params: &TruncationParams,
    pot: &PairPotential,
    grid: &TimeGrid,
) -> Result<LowerBoundReport, FieldError> {
    let l = conf.boxspec.length;
    let r = params.range;
    if l < r + 2.0 {
        return Err(FieldError::BoxTooSmall {
            length: l,
            needed: r + 2.0,
        });
    }
    let dim = conf.boxspec.dim;
    let half = 0.5 * l;
    let capped = pot.truncated(params.cap);
    let field = periodize(conf);

    // images that can anchor the unit-box factor
    let reach_x = 0.5 * (l + 1.0);
    let x_images: Vec<Image> = field
        .images_in(&[-reach_x; 3], &[reach_x; 3])
        .into_iter()
        .filter(|im| im.bridge.legs <= params.max_len)
        .collect();
    // images that can anchor the side-R factor
    let reach_y = 0.5 * (l + r) + 0.5;
    let y_images: Vec<Image> = field
        .images_in(&[-reach_y; 3], &[reach_y; 3])
        .into_iter()
        .filter(|im| im.bridge.legs <= params.max_len)
        .collect();
    // boxes whose indicator counts toward the local occupancy (any length)
    let reach_w = 0.5 * (l + r);
    let w_boxes: Vec<Point> = field
        .images_in(&[-reach_w; 3], &[reach_w; 3])
        .iter()
        .map(|im| im.anchor())
        .collect();

    // domains where a pair contributes: z in (x'+U) ∩ (y'+Lambda_R) ∩ box
    let mut pairs: Vec<PairDomain> = Vec::new();
    for xi in &x_images {
        let xa = xi.anchor();
        for yi in &y_images {
            let ya = yi.anchor();
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            let mut empty = false;
            for i in 0..dim {
                lo[i] = (xa[i] - 0.5).max(ya[i] - 0.5 * r).max(-half);
                hi[i] = (xa[i] + 0.5).min(ya[i] + 0.5 * r).min(half);
                if lo[i] >= hi[i] {
                    empty = true;
                    break;
                }
            }
            if empty {
                continue;
            }
            let same = xi.index == yi.index && xi.shift == yi.shift;
            let value = interaction_paths(
                &xi.bridge.positions,
                xi.bridge.legs,
                &xi.offset,
                &yi.bridge.positions,
                yi.bridge.legs,
                &yi.offset,
                same,
                &capped,
                grid,
                Metric::Euclidean,
                dim,
            );
            if value != 0.0 {
                pairs.push(PairDomain { lo, hi, value });
            }
        }
    }

    let occupancy_at = |z: &Point| -> usize {
        w_boxes
            .iter()
            .filter(|w| (0..dim).all(|i| (z[i] - w[i]).abs() <= 0.5 * r))
            .count()
    };

    let pairing = match dim {
        1 => {
            let mut cuts = vec![-half, half];
            for p in &pairs {
                cuts.push(p.lo[0]);
                cuts.push(p.hi[0]);
            }
            for w in &w_boxes {
                cuts.push(w[0] - 0.5 * r);
                cuts.push(w[0] + 0.5 * r);
            }
            cuts.retain(|c| (-half..=half).contains(c));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut total = 0.0;
            for seg in cuts.windows(2) {
                let mid = [0.5 * (seg[0] + seg[1]), 0.0, 0.0];
                if (occupancy_at(&mid) as f64) <= params.occupancy {
                    let phi: f64 = pairs
                        .iter()
                        .filter(|p| p.lo[0] < mid[0] && mid[0] < p.hi[0])
                        .map(|p| p.value)
                        .sum();
                    total += (seg[1] - seg[0]) * phi;
                }
            }
            total
        }
        2 => {
            let mut cuts = [vec![-half, half], vec![-half, half]];
            for p in &pairs {
                for i in 0..2 {
                    cuts[i].push(p.lo[i]);
                    cuts[i].push(p.hi[i]);
                }
            }
            for w in &w_boxes {
                for i in 0..2 {
                    cuts[i].push(w[i] - 0.5 * r);
                    cuts[i].push(w[i] + 0.5 * r);
                }
            }
            for c in cuts.iter_mut() {
                c.retain(|v| (-half..=half).contains(v));
                c.sort_by(f64::total_cmp);
                c.dedup();
            }
            let mut total = 0.0;
            for sx in cuts[0].windows(2) {
                for sy in cuts[1].windows(2) {
                    let mid = [0.5 * (sx[0] + sx[1]), 0.5 * (sy[0] + sy[1]), 0.0];
                    if (occupancy_at(&mid) as f64) <= params.occupancy {
                        let phi: f64 = pairs
                            .iter()
                            .filter(|p| {
                                (0..2).all(|i| p.lo[i] < mid[i] && mid[i] < p.hi[i])
                            })
                            .map(|p| p.value)
                            .sum();
                        total += (sx[1] - sx[0]) * (sy[1] - sy[0]) * phi;
                    }
                }
            }
            total
        }
        _ => {
            // d = 3: refine each pair domain into subcells and count only
            // occupancy boxes that contain a subcell entirely. That lower
            // bound on the occupancy makes 1{N <= S} an overestimate, so
            // the pairing errs on the large side only.
            const SUBDIV: usize = 4;
            let mut total = 0.0;
            for p in &pairs {
                let mut steps = [0.0; 3];
                for i in 0..3 {
                    steps[i] = (p.hi[i] - p.lo[i]) / SUBDIV as f64;
                }
                for ix in 0..SUBDIV {
                    for iy in 0..SUBDIV {
                        for iz in 0..SUBDIV {
                            let cell_lo = [
                                p.lo[0] + ix as f64 * steps[0],
                                p.lo[1] + iy as f64 * steps[1],
                                p.lo[2] + iz as f64 * steps[2],
                            ];
                            let cell_hi = [
                                cell_lo[0] + steps[0],
                                cell_lo[1] + steps[1],
                                cell_lo[2] + steps[2],
                            ];
                            let n_lower = w_boxes
                                .iter()
                                .filter(|w| {
                                    (0..3).all(|i| {
                                        w[i] - 0.5 * r <= cell_lo[i]
                                            && cell_hi[i] <= w[i] + 0.5 * r
                                    })
                                })
                                .count();
                            if (n_lower as f64) <= params.occupancy {
                                total += steps[0] * steps[1] * steps[2] * p.value;
                            }
                        }
                    }
                }
            }
            total
        }
    };

    let h = hamiltonian(conf, pot, grid);
    let boundary_particles = conf.anchors_outside(l - r - 2.0);
    let covering = covering_number(r, dim);
    let constant = 2f64.powi(dim as i32)
        * grid.beta
        * params.cap
        * (params.max_len * params.max_len) as f64
        * covering as f64
        * params.occupancy;
    let rhs = pairing - constant * boundary_particles as f64;
    let tol = 1e-9 * (1.0 + h.abs() + pairing.abs());
    Ok(LowerBoundReport {
        hamiltonian: h,
        pairing,
        boundary_particles,
        covering_number: covering,
        constant,
        rhs,
        holds: h + tol >= rhs,
        exact: dim <= 2,
    })
}
