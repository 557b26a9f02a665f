//! Radial pair potentials v: [0,∞) -> [0,∞].
//!
//! A potential knows how to evaluate itself (hard cores return +∞), integrate
//! itself over R^d (alpha = ∫ v(|x|) dx), cap itself pointwise at a level M,
//! and audit the decay/integrability assumptions that decide which of the
//! free-energy bounds apply to it. Attractive potentials are rejected at
//! construction; the whole machinery assumes v >= 0.

use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialError {
    /// v < 0 somewhere; only repulsive interactions are supported.
    Attractive(&'static str),
    BadParameter(&'static str),
    /// Tabulated grid not strictly increasing or otherwise unusable.
    BadGrid(&'static str),
}

impl fmt::Display for PotentialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialError::Attractive(m) => write!(f, "attractive potential rejected: {m}"),
            PotentialError::BadParameter(m) => write!(f, "bad potential parameter: {m}"),
            PotentialError::BadGrid(m) => write!(f, "bad tabulated grid: {m}"),
        }
    }
}

impl std::error::Error for PotentialError {}

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    CompactStep {
        height: f64,
        radius: f64,
    },
    InversePower {
        amplitude: f64,
        exponent: f64,
        hard_core: f64,
    },
    /// Piecewise-linear in r between knots; constant `values[0]` below the
    /// first knot, zero beyond the last.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
    /// Pointwise minimum with `cap`; `inner` is never itself `Capped`.
    Capped {
        inner: Box<Kind>,
        cap: f64,
    },
}

/// A nonnegative radial interaction.
#[derive(Debug, Clone)]
pub struct PairPotential {
    kind: Kind,
}

/// Which of the two free-energy bounds a potential supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// Tempered, integrable, repulsive at the origin: both bounds apply.
    Full,
    /// Only the upper bound is backed by the assumptions.
    UpperOnly,
}

/// Outcome of the assumption audit for a given dimension.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionReport {
    /// v(t) <= A t^{-h} beyond some R0 with h > d.
    pub tempered: bool,
    pub alpha: f64,
    pub alpha_finite: bool,
    /// liminf of v at the origin is strictly positive.
    pub repulsive_at_origin: bool,
    pub mode: BoundMode,
}

impl PairPotential {
    pub fn zero() -> Self {
        PairPotential { kind: Kind::Zero }
    }

    /// v(r) = c exp(-r^2 / w^2).
    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self, PotentialError> {
        if amplitude < 0.0 {
            return Err(PotentialError::Attractive("gaussian amplitude < 0"));
        }
        if !(width > 0.0) {
            return Err(PotentialError::BadParameter("gaussian width must be > 0"));
        }
        Ok(PairPotential {
            kind: Kind::Gaussian { amplitude, width },
        })
    }

    /// v(r) = c on [0, r0), zero beyond.
    pub fn compact_step(height: f64, radius: f64) -> Result<Self, PotentialError> {
        if height < 0.0 {
            return Err(PotentialError::Attractive("step height < 0"));
        }
        if !(radius > 0.0) {
            return Err(PotentialError::BadParameter("step radius must be > 0"));
        }
        Ok(PairPotential {
            kind: Kind::CompactStep { height, radius },
        })
    }

    /// v(r) = +∞ on [0, r_hc), A r^{-h} beyond.
    pub fn inverse_power(
        amplitude: f64,
        exponent: f64,
        hard_core: f64,
    ) -> Result<Self, PotentialError> {
        if amplitude < 0.0 {
            return Err(PotentialError::Attractive("inverse-power amplitude < 0"));
        }
        if !(exponent > 0.0) {
            return Err(PotentialError::BadParameter("exponent must be > 0"));
        }
        if hard_core < 0.0 {
            return Err(PotentialError::BadParameter("hard core radius < 0"));
        }
        Ok(PairPotential {
            kind: Kind::InversePower {
                amplitude,
                exponent,
                hard_core,
            },
        })
    }

    /// Piecewise-linear table of (r, v(r)).
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self, PotentialError> {
        if points.is_empty() {
            return Err(PotentialError::BadGrid("empty table"));
        }
        let mut radii = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for &(r, v) in points {
            if r < 0.0 {
                return Err(PotentialError::BadGrid("negative radius"));
            }
            if let Some(&last) = radii.last() {
                if r <= last {
                    return Err(PotentialError::BadGrid("radii must be strictly increasing"));
                }
            }
            if v < 0.0 {
                return Err(PotentialError::Attractive("tabulated value < 0"));
            }
            if !v.is_finite() {
                return Err(PotentialError::BadGrid("tabulated value not finite"));
            }
            radii.push(r);
            values.push(v);
        }
        Ok(PairPotential {
            kind: Kind::Tabulated { radii, values },
        })
    }

    /// Pointwise minimum v ∧ cap. Removes any hard core; idempotent.
    pub fn truncated(&self, cap: f64) -> Self {
        assert!(cap > 0.0, "truncation level must be positive");
        let kind = match &self.kind {
            Kind::Capped { inner, cap: old } => Kind::Capped {
                inner: inner.clone(),
                cap: old.min(cap),
            },
            other => Kind::Capped {
                inner: Box::new(other.clone()),
                cap,
            },
        };
        PairPotential { kind }
    }

    /// v(r); +∞ inside a hard core. Total on r >= 0.
    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        eval_kind(&self.kind, r)
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Zero => true,
            Kind::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Kind::CompactStep { height, .. } => *height == 0.0,
            Kind::InversePower {
                amplitude,
                hard_core,
                ..
            } => *amplitude == 0.0 && *hard_core == 0.0,
            Kind::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0),
            Kind::Capped { inner, .. } => {
                PairPotential {
                    kind: (**inner).clone(),
                }
            }
            .is_zero(),
        }
    }

    pub fn hard_core_radius(&self) -> f64 {
        match &self.kind {
            Kind::InversePower { hard_core, .. } => *hard_core,
            _ => 0.0,
        }
    }

    /// Radius beyond which v vanishes identically, when one exists.
    pub fn compact_range(&self) -> Option<f64> {
        match &self.kind {
            Kind::Zero => Some(0.0),
            Kind::CompactStep { radius, .. } => Some(*radius),
            Kind::Tabulated { radii, .. } => Some(*radii.last().unwrap()),
            Kind::Capped { inner, .. } => PairPotential {
                kind: (**inner).clone(),
            }
            .compact_range(),
            _ => None,
        }
    }

    /// Length scale over which v varies; used to size importance proposals.
    pub fn scale_hint(&self) -> f64 {
        match &self.kind {
            Kind::Zero => 1.0,
            Kind::Gaussian { width, .. } => 2.0 * width,
            Kind::CompactStep { radius, .. } => *radius,
            Kind::InversePower { hard_core, .. } => hard_core.max(1.0),
            Kind::Tabulated { radii, .. } => radii.last().unwrap().max(1.0),
            Kind::Capped { inner, .. } => PairPotential {
                kind: (**inner).clone(),
            }
            .scale_hint(),
        }
    }

    /// ∫_{R^d} v(|x|) dx; +∞ when divergent (flagged, not an error).
    pub fn alpha(&self, d: usize) -> f64 {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        if self.hard_core_radius() > 0.0 {
            // infinite on a set of positive measure
            return f64::INFINITY;
        }
        alpha_kind(&self.kind, d)
    }

    /// Audit of temperedness, integrability and origin repulsion.
    pub fn check_assumptions(&self, d: usize) -> AssumptionReport {
        let tempered = tempered_kind(&self.kind, d as f64);
        let alpha = self.alpha(d);
        let alpha_finite = alpha.is_finite();
        let repulsive_at_origin = origin_liminf(&self.kind) > 0.0;
        let mode = if tempered && alpha_finite && repulsive_at_origin {
            BoundMode::Full
        } else {
            BoundMode::UpperOnly
        };
        AssumptionReport {
            tempered,
            alpha,
            alpha_finite,
            repulsive_at_origin,
            mode,
        }
    }
}

fn eval_kind(kind: &Kind, r: f64) -> f64 {
    match kind {
        Kind::Zero => 0.0,
        Kind::Gaussian { amplitude, width } => {
            let u = r / width;
            amplitude * (-u * u).exp()
        }
        Kind::CompactStep { height, radius } => {
            if r < *radius {
                *height
            } else {
                0.0
            }
        }
        Kind::InversePower {
            amplitude,
            exponent,
            hard_core,
        } => {
            if r < *hard_core {
                f64::INFINITY
            } else if *amplitude == 0.0 {
                0.0
            } else if r == 0.0 {
                f64::INFINITY
            } else {
                amplitude * r.powf(-exponent)
            }
        }
        Kind::Tabulated { radii, values } => {
            if r <= radii[0] {
                values[0]
            } else if r >= *radii.last().unwrap() {
                if r == *radii.last().unwrap() {
                    *values.last().unwrap()
                } else {
                    0.0
                }
            } else {
                let idx = radii.partition_point(|&x| x < r);
                let (r0, r1) = (radii[idx - 1], radii[idx]);
                let (v0, v1) = (values[idx - 1], values[idx]);
                v0 + (v1 - v0) * (r - r0) / (r1 - r0)
            }
        }
        Kind::Capped { inner, cap } => eval_kind(inner, r).min(*cap),
    }
}

fn origin_liminf(kind: &Kind) -> f64 {
    match kind {
        Kind::Zero => 0.0,
        Kind::Gaussian { amplitude, .. } => *amplitude,
        Kind::CompactStep { height, .. } => *height,
        Kind::InversePower {
            amplitude,
            hard_core,
            ..
        } => {
            if *amplitude > 0.0 || *hard_core > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
        Kind::Tabulated { values, .. } => values[0],
        Kind::Capped { inner, cap } => origin_liminf(inner).min(*cap),
    }
}

fn tempered_kind(kind: &Kind, d: f64) -> bool {
    match kind {
        Kind::Zero => true,
        Kind::Gaussian { .. } => true,
        Kind::CompactStep { .. } => true,
        Kind::InversePower {
            amplitude,
            exponent,
            ..
        } => *amplitude == 0.0 || *exponent > d,
        // zero beyond the last knot, so any h > d works
        Kind::Tabulated { .. } => true,
        Kind::Capped { inner, .. } => tempered_kind(inner, d),
    }
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

const QUAD_TOL: f64 = 1e-12;

fn alpha_kind(kind: &Kind, d: usize) -> f64 {
    let s = sphere_area(d);
    let dd = d as f64;
    match kind {
        Kind::Zero => 0.0,
        Kind::Gaussian { amplitude, width } => {
            if *amplitude == 0.0 {
                return 0.0;
            }
            let f = |r: f64| s * r.powi(d as i32 - 1) * eval_kind(kind, r);
            integrate(&f, 0.0, 9.0 * width)
        }
        Kind::CompactStep { height, radius } => {
            if *height == 0.0 {
                return 0.0;
            }
            let f = |r: f64| s * r.powi(d as i32 - 1) * height;
            integrate(&f, 0.0, *radius)
        }
        Kind::InversePower { amplitude, .. } => {
            // r^{d-1-h} diverges at the origin for h >= d and at infinity
            // for h <= d, so the integral is finite only for v == 0
            if *amplitude == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Kind::Tabulated { radii, values } => {
            // constant head below the first knot, trapezoid on the knots
            let mut total = s * values[0] * radii[0].powi(d as i32) / dd;
            for i in 1..radii.len() {
                let g0 = s * radii[i - 1].powi(d as i32 - 1) * values[i - 1];
                let g1 = s * radii[i].powi(d as i32 - 1) * values[i];
                total += 0.5 * (g0 + g1) * (radii[i] - radii[i - 1]);
            }
            total
        }
        Kind::Capped { inner, cap } => alpha_capped(inner, *cap, d),
    }
}

fn alpha_capped(inner: &Kind, cap: f64, d: usize) -> f64 {
    let s = sphere_area(d);
    let dd = d as f64;
    let capped = Kind::Capped {
        inner: Box::new(inner.clone()),
        cap,
    };
    let f = |r: f64| s * r.powi(d as i32 - 1) * eval_kind(&capped, r);
    match inner {
        Kind::Zero => 0.0,
        Kind::Gaussian { amplitude, width } => {
            if *amplitude == 0.0 {
                return 0.0;
            }
            if cap >= *amplitude {
                return integrate(&f, 0.0, 9.0 * width);
            }
            // plateau at `cap` up to the crossing radius, gaussian tail after
            let cross = width * (amplitude / cap).ln().sqrt();
            integrate(&f, 0.0, cross) + integrate(&f, cross, cross + 9.0 * width)
        }
        Kind::CompactStep { height, radius } => {
            if *height == 0.0 {
                0.0
            } else {
                integrate(&f, 0.0, *radius)
            }
        }
        Kind::InversePower {
            amplitude,
            exponent,
            hard_core,
        } => {
            if *amplitude == 0.0 {
                if *hard_core > 0.0 {
                    return s * cap * hard_core.powi(d as i32) / dd;
                }
                return 0.0;
            }
            if *exponent <= dd {
                return f64::INFINITY;
            }
            let cross = hard_core.max((amplitude / cap).powf(1.0 / exponent));
            let plateau = s * cap * cross.powi(d as i32) / dd;
            let far = cross * 1e4;
            // analytic remainder of ∫_far^∞ s A r^{d-1-h} dr keeps the tail exact
            let tail = s * amplitude * far.powf(dd - exponent) / (exponent - dd);
            plateau + integrate(&f, cross, far) + tail
        }
        Kind::Tabulated { radii, values } => {
            let head = values[0].min(cap);
            let mut total = s * head * radii[0].powi(d as i32) / dd;
            // refine each knot interval; capping introduces kinks inside them
            for i in 1..radii.len() {
                total += integrate(&f, radii[i - 1], radii[i]);
            }
            total
        }
        Kind::Capped { .. } => unreachable!("capped potentials are normalized"),
    }
}

/// Adaptive Simpson quadrature with absolute tolerance scaled to the
/// first-pass estimate (abs+rel 1e-12).
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let coarse = simpson_recursive(f, a, b, 1.0, 24);
    let tol = QUAD_TOL * coarse.abs().max(1.0);
    simpson_recursive(f, a, b, tol, 52)
}

fn simpson_recursive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const PI_3_2: f64 = 5.5683279968317078; // pi^{3/2}
    const PI_OVER_3: f64 = 1.0471975511965977;

    #[test]
    fn eval_basics() {
        assert_eq!(PairPotential::zero().eval(1.7), 0.0);
        let g = PairPotential::gaussian(1.0, 1.0).unwrap();
        assert_eq!(g.eval(0.0), 1.0);
        let s = PairPotential::compact_step(2.0, 0.5).unwrap();
        assert_eq!(s.eval(0.49), 2.0);
        assert_eq!(s.eval(0.51), 0.0);
    }

    #[test]
    fn hard_core_evaluates_to_infinity() {
        let p = PairPotential::inverse_power(1.0, 6.0, 0.3).unwrap();
        assert!(p.eval(0.2).is_infinite());
        assert!((p.eval(0.5) - 0.5f64.powf(-6.0)).abs() < 1e-15);
        assert_eq!((-p.eval(0.1)).exp(), 0.0);
    }

    #[test]
    fn attractive_rejected() {
        assert!(PairPotential::gaussian(-1.0, 1.0).is_err());
        assert!(PairPotential::compact_step(-0.1, 1.0).is_err());
        assert!(PairPotential::tabulated(&[(0.0, 1.0), (1.0, -0.5)]).is_err());
    }

    #[test]
    fn alpha_closed_forms() {
        assert_eq!(PairPotential::zero().alpha(3), 0.0);
        let g = PairPotential::gaussian(1.0, 1.0).unwrap();
        assert!((g.alpha(3) - PI_3_2).abs() < 1e-10 * PI_3_2);
        let s = PairPotential::compact_step(2.0, 0.5).unwrap();
        assert!((s.alpha(3) - PI_OVER_3).abs() < 1e-10 * PI_OVER_3);
        // d = 1: 2 * c * r0 ; d = 2: pi * c * r0^2
        assert!((s.alpha(1) - 2.0).abs() < 1e-10 * 2.0);
        assert!((s.alpha(2) - 2.0 * PI * 0.25).abs() < 1e-10);
    }

    #[test]
    fn alpha_divergences_flagged() {
        let p = PairPotential::inverse_power(1.0, 1.0, 0.0).unwrap();
        assert!(p.alpha(3).is_infinite());
        let hc = PairPotential::inverse_power(1.0, 6.0, 0.2).unwrap();
        assert!(hc.alpha(3).is_infinite());
    }

    #[test]
    fn truncation_evaluates_pointwise_minimum() {
        let s = PairPotential::compact_step(2.0, 0.5).unwrap();
        assert_eq!(s.truncated(1.0).eval(0.3), 1.0);
        assert!(PairPotential::zero().truncated(5.0).is_zero());
        let ip = PairPotential::inverse_power(1.0, 6.0, 0.0).unwrap();
        assert_eq!(ip.truncated(10.0).eval(0.5), 10.0);
        // removes hard cores and is idempotent
        let hc = PairPotential::inverse_power(1.0, 6.0, 0.3).unwrap();
        let t = hc.truncated(4.0);
        assert_eq!(t.eval(0.1), 4.0);
        assert_eq!(t.hard_core_radius(), 0.0);
        let tt = t.truncated(4.0);
        assert_eq!(tt.eval(0.1), 4.0);
    }

    #[test]
    fn truncation_min_property_random() {
        let mut rng = crate::rng::derive_stream(11, 0);
        let pots = [
            PairPotential::gaussian(1.7, 0.8).unwrap(),
            PairPotential::compact_step(3.0, 1.2).unwrap(),
            PairPotential::inverse_power(0.6, 5.0, 0.25).unwrap(),
            PairPotential::tabulated(&[(0.1, 2.0), (0.5, 1.0), (1.5, 0.2)]).unwrap(),
        ];
        for _ in 0..1000 {
            let p = &pots[rng.gen_range(0..pots.len())];
            let cap = rng.gen_range(0.01..5.0);
            let r = rng.gen_range(0.0..3.0);
            let t = p.truncated(cap).eval(r);
            let expect = p.eval(r).min(cap);
            assert!(
                (t - expect).abs() <= 1e-15 * expect.max(1.0),
                "min property failed at r={r}"
            );
        }
    }

    #[test]
    fn truncation_never_increases_alpha() {
        let pots = [
            PairPotential::gaussian(1.7, 0.8).unwrap(),
            PairPotential::compact_step(3.0, 1.2).unwrap(),
            PairPotential::inverse_power(0.6, 5.0, 0.25).unwrap(),
            PairPotential::tabulated(&[(0.1, 2.0), (0.5, 1.0), (1.5, 0.2)]).unwrap(),
        ];
        for p in &pots {
            for cap in [0.05, 0.5, 2.0, 50.0] {
                for d in 1..=3 {
                    let a = p.alpha(d);
                    let at = p.truncated(cap).alpha(d);
                    assert!(at <= a * (1.0 + 1e-12) || a.is_infinite());
                    assert!(at.is_finite() || p.check_assumptions(d).tempered == false);
                }
            }
        }
    }

    #[test]
    fn capped_inverse_power_alpha_matches_analytic() {
        // v = r^{-6} capped at 10, d = 3: plateau + exact power tail
        let p = PairPotential::inverse_power(1.0, 6.0, 0.0)
            .unwrap()
            .truncated(10.0);
        let cross = 10.0f64.powf(-1.0 / 6.0);
        let analytic = 4.0 * PI * (10.0 * cross.powi(3) / 3.0 + cross.powf(-3.0) / 3.0);
        assert!((p.alpha(3) - analytic).abs() < 1e-9 * analytic);
    }

    #[test]
    fn assumption_audit_modes() {
        let g = PairPotential::gaussian(1.0, 1.0).unwrap();
        let rep = g.check_assumptions(3);
        assert!(rep.tempered && rep.alpha_finite && rep.repulsive_at_origin);
        assert_eq!(rep.mode, BoundMode::Full);

        let z = PairPotential::zero().check_assumptions(3);
        assert!(!z.repulsive_at_origin);
        assert_eq!(z.mode, BoundMode::UpperOnly);

        let ip = PairPotential::inverse_power(1.0, 1.0, 0.0)
            .unwrap()
            .check_assumptions(3);
        assert!(!ip.tempered);
        assert!(!ip.alpha_finite);
        assert_eq!(ip.mode, BoundMode::UpperOnly);
    }

    #[test]
    fn tabulated_extrapolation_rule() {
        let t = PairPotential::tabulated(&[(0.5, 2.0), (1.0, 1.0), (2.0, 0.5)]).unwrap();
        assert_eq!(t.eval(0.1), 2.0); // constant below first knot
        assert_eq!(t.eval(3.0), 0.0); // zero beyond last knot
        assert!((t.eval(0.75) - 1.5).abs() < 1e-15); // linear in between
    }
}
