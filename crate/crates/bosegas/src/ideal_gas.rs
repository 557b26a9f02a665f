//! Noninteracting Bose gas: closed-form free energy, its condensation
//! transition, and the constrained entropy minimization that must reproduce
//! it.
//!
//! The free energy per unit volume at inverse temperature beta and density
//! rho is, with C = (4 pi beta)^{-d/2},
//!
//!   f = -(1/beta) [ C Li_{d/2+1}(e^{-alpha}) + rho alpha ]   (subcritical)
//!   f = -(1/beta) C zeta(d/2 + 1)                            (condensed)
//!
//! where alpha >= 0 solves rho = C Li_{d/2}(e^{-alpha}) and the condensed
//! branch applies for rho >= rho_c = C zeta(d/2) (finite only in d = 3).
//! The same value must come out of minimizing
//!
//!   J(lambda) = sum_k q_k + rho sum_k lambda_k log(lambda_k / q_k)
//!               + rho log(rho) sum_k lambda_k - rho sum_k lambda_k
//!
//! over lambda >= 0 with sum_k k lambda_k <= 1, where q_k = C k^{-1-d/2} are
//! the reference cycle weights. The divergence is read unnormalized with
//! 0 log 0 = 0; lambda and q are not probability vectors.

use crate::bridges::{heat_kernel_norm, reference_weight};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum IdealGasError {
    /// zeta(s) requested for s <= 1.
    ZetaDomain(f64),
    /// polylog argument outside [0, 1], or z = 1 with s <= 1.
    PolylogDomain { s: f64, z: f64 },
    /// polylog order not among the half-integer/integer orders supported.
    PolylogOrder(f64),
    /// Root solve requested in the condensed phase.
    Condensed { rho: f64, rho_c: f64 },
}

impl fmt::Display for IdealGasError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdealGasError::ZetaDomain(s) => write!(f, "zeta({s}) diverges (need s > 1)"),
            IdealGasError::PolylogDomain { s, z } => {
                write!(f, "polylog({s}, {z}) outside supported domain")
            }
            IdealGasError::PolylogOrder(s) => write!(
                f,
                "polylog order {s} unsupported (need s in {{1/2, 1, 3/2, 2, 5/2}})"
            ),
            IdealGasError::Condensed { rho, rho_c } => {
                write!(f, "density {rho} at or above critical density {rho_c}")
            }
        }
    }
}

impl std::error::Error for IdealGasError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Subcritical,
    Condensed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Subcritical => write!(f, "subcritical"),
            Phase::Condensed => write!(f, "condensed"),
        }
    }
}

/// Free energy of the ideal gas together with phase diagnostics.
#[derive(Debug, Clone)]
pub struct IdealGasSolution {
    pub free_energy: f64,
    pub phase: Phase,
    /// Chemical-potential-like root; 0 in the condensed phase.
    pub alpha: f64,
    /// Critical density; +infinity in d <= 2 (no transition).
    pub rho_c: f64,
    /// Mass fraction lost from finite cycle lengths (0 when subcritical).
    pub condensate_fraction: f64,
    /// Minimizing weights, when produced by the variational route.
    pub lambda_star: Option<Vec<f64>>,
    /// Analytic bound on the series-truncation error of the reported value.
    pub truncation_bound: f64,
}

// ---------------------------------------------------------------------------
// special functions

/// Riemann zeta for s > 1; absolute error below 1e-12.
pub fn zeta(s: f64) -> Result<f64, IdealGasError> {
    if s <= 1.0 {
        return Err(IdealGasError::ZetaDomain(s));
    }
    Ok(zeta_em(s))
}

/// Euler-Maclaurin evaluation, valid for any s != 1 down to s > -12.
fn zeta_em(s: f64) -> f64 {
    const A: f64 = 64.0;
    let mut sum = 0.0;
    for k in (1..64).rev() {
        sum += (k as f64).powf(-s);
    }
    let am = A.powf(-s);
    sum += A.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * am;
    sum += s * am / (A * 12.0);
    sum -= s * (s + 1.0) * (s + 2.0) * am / (A.powi(3) * 720.0);
    sum += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * am / (A.powi(5) * 30240.0);
    sum -= (0..7).map(|i| s + i as f64).product::<f64>() * am / (A.powi(7) * 1_209_600.0);
    sum
}

/// Gamma at positive integers and half-integers.
fn gamma_positive(x: f64) -> f64 {
    let two_x = (2.0 * x).round() as i64;
    debug_assert!((2.0 * x - two_x as f64).abs() < 1e-12 && two_x > 0);
    if two_x % 2 == 0 {
        // integer n: (n-1)!
        let n = two_x / 2;
        (1..n).map(|k| k as f64).product()
    } else {
        // m + 1/2: (2m-1)!! / 2^m * sqrt(pi)
        let m = (two_x - 1) / 2;
        let mut v = PI.sqrt();
        for k in 1..=m {
            v *= (2 * k - 1) as f64 / 2.0;
        }
        v
    }
}

/// Zeta continued to negative arguments through the reflection formula.
fn zeta_extended(s: f64) -> f64 {
    debug_assert!(s != 1.0);
    if s >= 0.0 {
        zeta_em(s)
    } else {
        let g = gamma_positive(1.0 - s);
        2f64.powf(s) * PI.powf(s - 1.0) * (PI * s / 2.0).sin() * g * zeta_em(1.0 - s)
    }
}

const DIRECT_SUM_ALPHA: f64 = 0.25;

/// Polylogarithm Li_s(z) for z in [0, 1] and s in {1/2, 1, 3/2, 2, 5/2}.
/// z = 1 requires s > 1 (then Li_s(1) = zeta(s)). Absolute error <= 1e-12.
pub fn polylog(s: f64, z: f64) -> Result<f64, IdealGasError> {
    if !(0.0..=1.0).contains(&z) || !z.is_finite() {
        return Err(IdealGasError::PolylogDomain { s, z });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == 1.0 {
        return zeta(s).map_err(|_| IdealGasError::PolylogDomain { s, z });
    }
    if s == 1.0 {
        return Ok(-(-z).ln_1p());
    }
    if ![0.5, 1.5, 2.0, 2.5].contains(&s) {
        return Err(IdealGasError::PolylogOrder(s));
    }
    let alpha = -z.ln();
    if alpha >= DIRECT_SUM_ALPHA {
        Ok(polylog_direct(s, z))
    } else if s == 2.0 {
        // dilogarithm reflection: Li_2(z) = zeta(2) - ln z ln(1-z) - Li_2(1-z)
        let w = 1.0 - z;
        Ok(zeta_em(2.0) - z.ln() * w.ln() - polylog_direct(2.0, w))
    } else {
        Ok(polylog_singular(s, alpha))
    }
}

/// Direct summation with a geometric tail bound.
fn polylog_direct(s: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 1..200_000u64 {
        zk *= z;
        let term = zk / (k as f64).powf(s);
        sum += term;
        if term / (1.0 - z) < 1e-16 * sum.max(1e-300) {
            break;
        }
    }
    sum
}

/// Expansion around z = 1 for half-integer orders (alpha = -ln z < 2 pi):
/// Li_s(e^-alpha) = Gamma(1-s) alpha^{s-1} + sum_n zeta(s-n) (-alpha)^n / n!.
fn polylog_singular(s: f64, alpha: f64) -> f64 {
    let gamma_1ms = match s {
        x if x == 0.5 => PI.sqrt(),
        x if x == 1.5 => -2.0 * PI.sqrt(),
        _ => 4.0 * PI.sqrt() / 3.0, // s = 2.5
    };
    let mut sum = gamma_1ms * alpha.powf(s - 1.0);
    let mut apow = 1.0; // (-alpha)^n / n!
    for n in 0..=40u32 {
        let term = zeta_extended(s - n as f64) * apow;
        sum += term;
        if n >= 3 && term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        apow *= -alpha / (n as f64 + 1.0);
    }
    sum
}

// ---------------------------------------------------------------------------
// closed-form ideal gas

/// rho_c(beta, d) = zeta(d/2) (4 pi beta)^{-d/2}; +infinity in d <= 2.
pub fn critical_density(beta: f64, d: usize) -> f64 {
    assert!(beta > 0.0 && (1..=3).contains(&d));
    if d < 3 {
        f64::INFINITY
    } else {
        zeta_em(1.5) * heat_kernel_norm(beta, 3)
    }
}

/// Root of rho = (4 pi beta)^{-d/2} Li_{d/2}(e^{-alpha}); residual < 1e-10.
pub fn solve_alpha(beta: f64, rho: f64, d: usize) -> Result<f64, IdealGasError> {
    assert!(beta > 0.0 && rho > 0.0 && (1..=3).contains(&d));
    let rho_c = critical_density(beta, d);
    if rho >= rho_c {
        return Err(IdealGasError::Condensed { rho, rho_c });
    }
    let s = d as f64 / 2.0;
    let target = rho / heat_kernel_norm(beta, d);
    let li = |a: f64| polylog(s, (-a).exp()).expect("interior point");
    let mut hi = 1.0;
    while li(hi) > target {
        hi *= 2.0;
        assert!(hi < 1e6, "alpha bracket failed");
    }
    let mut lo = 0.0;
    let mut mid = 0.5 * hi;
    for _ in 0..500 {
        mid = 0.5 * (lo + hi);
        let v = li(mid);
        if (v - target).abs() < 1e-10 {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Closed-form free energy with the phase split at rho_c.
pub fn free_energy_ideal(beta: f64, rho: f64, d: usize) -> IdealGasSolution {
    assert!(beta > 0.0 && rho > 0.0 && (1..=3).contains(&d));
    let norm = heat_kernel_norm(beta, d);
    let rho_c = critical_density(beta, d);
    let s = d as f64 / 2.0;
    if rho >= rho_c {
        IdealGasSolution {
            free_energy: -norm * zeta_em(1.0 + s) / beta,
            phase: Phase::Condensed,
            alpha: 0.0,
            rho_c,
            condensate_fraction: 1.0 - rho_c / rho,
            lambda_star: None,
            truncation_bound: 0.0,
        }
    } else {
        let alpha = solve_alpha(beta, rho, d).expect("subcritical");
        let li = polylog(1.0 + s, (-alpha).exp()).expect("z in (0,1)");
        IdealGasSolution {
            free_energy: -(norm * li + rho * alpha) / beta,
            phase: Phase::Subcritical,
            alpha,
            rho_c,
            condensate_fraction: 0.0,
            lambda_star: None,
            truncation_bound: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// variational route

/// Minimize J over lambda >= 0 with sum_k k lambda_k <= 1, truncated at
/// `k_trunc` terms. The Lagrangian stationarity gives lambda_k proportional
/// to q_k e^{-alpha k} / rho with multiplier alpha >= 0 (zero when the
/// constraint is slack), so the minimization is a one-dimensional root find.
pub fn minimize_j(beta: f64, rho: f64, d: usize, k_trunc: usize) -> IdealGasSolution {
    assert!(beta > 0.0 && rho > 0.0 && (1..=3).contains(&d) && k_trunc >= 1);
    let norm = heat_kernel_norm(beta, d);
    let dd = d as f64;
    let q: Vec<f64> = (1..=k_trunc)
        .map(|k| reference_weight(beta, d, k))
        .collect();
    let mass_at = |alpha: f64| -> f64 {
        q.iter()
            .enumerate()
            .map(|(i, qk)| {
                let k = (i + 1) as f64;
                k * qk * (-alpha * k).exp()
            })
            .sum::<f64>()
    };

    let mass0 = mass_at(0.0);
    let (alpha, slack) = if mass0 <= rho {
        (0.0, true)
    } else {
        // bisect the strictly decreasing constraint sum onto rho
        let mut lo = 0.0;
        let mut hi = 1.0;
        while mass_at(hi) > rho {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_at(mid) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    };

    let lambda: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(i, qk)| qk * (-alpha * (i + 1) as f64).exp() / rho)
        .collect();

    let qbar_full = norm * zeta_em(1.0 + dd / 2.0);
    // J evaluated from its definition at the minimizer
    let mut j = qbar_full;
    let log_rho = rho.ln();
    let mut lambda_sum = 0.0;
    let mut lambda_mass = 0.0;
    for (i, (&lk, &qk)) in lambda.iter().zip(q.iter()).enumerate() {
        if lk > 0.0 {
            j += rho * lk * (lk / qk).ln();
            lambda_sum += lk;
            lambda_mass += (i + 1) as f64 * lk;
        }
    }
    j += rho * log_rho * lambda_sum - rho * lambda_sum;
    let free_energy = -qbar_full / beta + j / beta;

    let rho_c = critical_density(beta, d);
    let phase = if rho >= rho_c {
        Phase::Condensed
    } else {
        Phase::Subcritical
    };

    // Condensate fraction 1 - sum_k k lambda_k. In the slack case the
    // minimizer is lambda_k = q_k / rho for every k, so the mass beyond the
    // truncation is an exact zeta tail (d = 3); the extension also adds
    // exactly zero to J.
    let (condensate_fraction, truncation_bound) = if slack {
        if d == 3 {
            let partial: f64 = (1..=k_trunc).map(|k| (k as f64).powf(-1.5)).sum();
            let tail_mass = norm * (zeta_em(1.5) - partial) / rho;
            ((1.0 - lambda_mass - tail_mass).max(0.0), 0.0)
        } else {
            // d <= 2: the untruncated constraint sum diverges, so slackness
            // is purely a truncation artifact; there is no condensate
            (0.0, f64::INFINITY)
        }
    } else {
        // bound the neglected sum_{k>K} k q_k e^{-alpha k}
        let kf = k_trunc as f64;
        let geo =
            norm * kf.powf(1.0 - dd / 2.0) * (-alpha * kf).exp() / (-(-alpha).exp_m1()).max(1e-300);
        let bound = if d == 3 {
            let partial: f64 = (1..=k_trunc).map(|k| (k as f64).powf(-1.5)).sum();
            geo.min(norm * (zeta_em(1.5) - partial))
        } else {
            geo
        };
        (0.0, (1.0 + alpha) * bound)
    };

    IdealGasSolution {
        free_energy,
        phase,
        alpha,
        rho_c,
        condensate_fraction,
        lambda_star: Some(lambda),
        truncation_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // frozen against 30-digit mpmath evaluations
    const ZETA_52: f64 = 1.3414872572509172;
    const ZETA_32: f64 = 2.6123753486854883;
    const ZETA_12: f64 = -1.4603545088095868;
    const ZETA_M12: f64 = -0.20788622497735457;
    const ZETA_M32: f64 = -0.025485201889833036;
    const NORM_3D: f64 = 0.02244839026564582; // (4 pi)^{-3/2}
    const QBAR_3D: f64 = 0.030114229487159399;
    const RHO_C: f64 = 0.058643621347644422;
    const ALPHA_003: f64 = 0.19171920251527067;
    const F_003: f64 = -0.028479120034860265;
    const F_00586: f64 = -0.030114229482788781;

    #[test]
    fn zeta_values() {
        assert!((zeta(2.5).unwrap() - ZETA_52).abs() < 1e-12);
        assert!((zeta(1.5).unwrap() - ZETA_32).abs() < 1e-12);
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((zeta(2.0).unwrap() - pi2_6).abs() < 1e-12);
        assert!(zeta(1.0).is_err());
        assert!(zeta(0.5).is_err());
    }

    #[test]
    fn zeta_continuation_values() {
        assert!((zeta_em(0.5) - ZETA_12).abs() < 1e-12);
        assert!((zeta_extended(-0.5) - ZETA_M12).abs() < 1e-12);
        assert!((zeta_extended(-1.5) - ZETA_M32).abs() < 1e-12);
    }

    #[test]
    fn gamma_half_integers() {
        let sp = PI.sqrt();
        assert!((gamma_positive(0.5) - sp).abs() < 1e-15);
        assert!((gamma_positive(1.5) - 0.5 * sp).abs() < 1e-15);
        assert!((gamma_positive(2.5) - 0.75 * sp).abs() < 1e-15);
        assert!((gamma_positive(4.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn polylog_values() {
        let cases = [
            (0.5, 0.3, 0.38477744513420901),
            (1.5, 0.5, 0.62483702081991385),
            (2.5, 0.9, 1.1390030252021568),
            (0.5, 0.9, 4.0219504274733607),
            (2.0, 0.7, 0.88937762428603874),
            (2.0, 0.999, 1.6370226052761177),
            (1.5, 0.999999, 2.6088319004525849),
            (2.5, 0.999999, 1.3414846472368057),
        ];
        for (s, z, want) in cases {
            let got = polylog(s, z).unwrap();
            assert!((got - want).abs() < 1e-12, "Li_{s}({z}): {got} vs {want}");
        }
        assert_eq!(polylog(1.5, 0.0).unwrap(), 0.0);
        assert!((polylog(1.5, 1.0).unwrap() - ZETA_32).abs() < 1e-12);
        // s = 1 is -ln(1-z)
        assert!((polylog(1.0, 0.9).unwrap() - -(0.1f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn polylog_domain_checks() {
        assert!(polylog(0.5, 1.0).is_err()); // divergent
        assert!(polylog(1.5, 1.2).is_err());
        assert!(polylog(0.7, 0.5).is_err()); // unsupported order
    }

    #[test]
    fn polylog_increasing_in_z() {
        let mut prev = 0.0;
        for i in 1..100 {
            let z = i as f64 / 100.0;
            let v = polylog(1.5, z).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn critical_density_values() {
        assert!((critical_density(1.0, 3) - RHO_C).abs() < 1e-14);
        assert!(critical_density(1.0, 2).is_infinite());
        assert!(critical_density(1.0, 1).is_infinite());
        // scales as beta^{-3/2}
        let ratio = critical_density(4.0, 3) / critical_density(1.0, 3);
        assert!((ratio - 0.125).abs() < 1e-14);
    }

    #[test]
    fn alpha_root_and_bracket() {
        let a = solve_alpha(1.0, 0.03, 3).unwrap();
        assert!((a - ALPHA_003).abs() < 1e-7);
        let resid = polylog(1.5, (-a).exp()).unwrap() - 0.03 / NORM_3D;
        assert!(resid.abs() < 1e-10);
        // keeping only the k = 1 term would need a larger alpha
        let alpha_one_term = -(0.03f64 / NORM_3D).ln();
        assert!(a < alpha_one_term);
        // near-critical root collapses to zero
        let a_near = solve_alpha(1.0, RHO_C - 1e-6, 3).unwrap();
        assert!(a_near < 1e-3);
        assert!(solve_alpha(1.0, 0.12, 3).is_err());
    }

    #[test]
    fn free_energy_condensed_branch() {
        for rho in [RHO_C, 0.08, 0.12, 5.0] {
            let sol = free_energy_ideal(1.0, rho, 3);
            assert_eq!(sol.phase, Phase::Condensed);
            assert!((sol.free_energy + QBAR_3D).abs() < 1e-13);
            assert_eq!(sol.alpha, 0.0);
        }
        let frac = free_energy_ideal(1.0, 0.12, 3).condensate_fraction;
        assert!((frac - 0.51130315543629648).abs() < 1e-12);
    }

    #[test]
    fn free_energy_subcritical_values() {
        let sol = free_energy_ideal(1.0, 0.03, 3);
        assert_eq!(sol.phase, Phase::Subcritical);
        assert!((sol.free_energy - F_003).abs() < 1e-10);
        let sol = free_energy_ideal(1.0, 0.0586, 3);
        assert!((sol.free_energy - F_00586).abs() < 1e-10);
    }

    #[test]
    fn free_energy_continuity_and_limits() {
        let below = free_energy_ideal(1.0, RHO_C - 1e-6, 3).free_energy;
        let at = free_energy_ideal(1.0, RHO_C, 3).free_energy;
        assert!((below - at).abs() < 1e-6);
        // vacuum limit
        let tiny = free_energy_ideal(1.0, 1e-12, 3).free_energy;
        assert!(tiny < 0.0 && tiny > -1e-9);
        // nonincreasing in rho, constant above rho_c
        let mut prev = f64::INFINITY;
        for i in 1..=40 {
            let rho = 0.004 * i as f64;
            let f = free_energy_ideal(1.0, rho, 3).free_energy;
            assert!(f <= prev + 1e-14);
            prev = f;
        }
    }

    #[test]
    fn minimize_j_matches_closed_form() {
        for rho in [0.03, 0.0586, 0.12] {
            let var = minimize_j(1.0, rho, 3, 2000);
            let exact = free_energy_ideal(1.0, rho, 3);
            assert!(
                (var.free_energy - exact.free_energy).abs() < 1e-5,
                "rho={rho}: {} vs {}",
                var.free_energy,
                exact.free_energy
            );
        }
    }

    #[test]
    fn minimize_j_condensed_reports_mass_loss() {
        let sol = minimize_j(1.0, 0.12, 3, 2000);
        assert_eq!(sol.phase, Phase::Condensed);
        assert!((sol.condensate_fraction - (1.0 - RHO_C / 0.12)).abs() < 1e-9);
        let lam = sol.lambda_star.unwrap();
        let mass: f64 = lam.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
        assert!(mass < 1.0);
    }

    #[test]
    fn minimize_j_stationarity_spot_check() {
        let sol = minimize_j(1.0, 0.03, 3, 400);
        let lam = sol.lambda_star.as_ref().unwrap();
        let q1 = reference_weight(1.0, 3, 1);
        assert!((lam[0] - q1 * (-sol.alpha).exp() / 0.03).abs() < 1e-12);
        assert!((sol.alpha - ALPHA_003).abs() < 1e-6);
    }

    #[test]
    fn minimize_j_flags_low_dimension_truncation() {
        // d = 2 with rho beyond the truncated mass: no condensate, flagged
        let sol = minimize_j(1.0, 10.0, 2, 50);
        assert_eq!(sol.phase, Phase::Subcritical);
        assert_eq!(sol.condensate_fraction, 0.0);
        assert!(sol.truncation_bound.is_infinite());
    }
}
