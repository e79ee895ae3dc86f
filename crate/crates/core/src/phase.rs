//! Criticality conditions, critical coupling and critical temperature, and
//! phase-diagram grids.
//!
//! The criticality sum is the slope of the self-consistency right-hand side at
//! x = 0 for a bias-balanced ensemble: above 1 the origin is a local maximum of
//! the free energy and the system is superradiant.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::meanfield::{self, sech2};
use crate::model::{Ensemble, ThermalSpec};
use crate::specialfn::{bias_suppression, f2, gaussian_expect, QuadratureRule};
use crate::sum;

/// |LHS − 1| within this band is labelled critical.
pub const CRITICAL_BAND: f64 = 1e-9;
/// Balance-function magnitude, relative to Σgᵢ, accepted as balanced.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Normal,
    Superradiant,
    Critical,
}

impl Classification {
    pub fn from_lhs(lhs: f64) -> Self {
        if (lhs - 1.0).abs() <= CRITICAL_BAND {
            Classification::Critical
        } else if lhs > 1.0 {
            Classification::Superradiant
        } else {
            Classification::Normal
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Normal => "normal",
            Classification::Superradiant => "superradiant",
            Classification::Critical => "critical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    /// Σᵢ 4gᵢ²/(ωΔᵢ)
    pub lambda: f64,
    /// (ḡ/g₀)² with g₀ = √(ωΔ̄/(4N))
    pub g_over_g0_sq: f64,
    pub sigma_over_delta: f64,
    pub kt_over_delta: f64,
    /// Criticality sum at the given temperature.
    pub criticality: f64,
    pub classification: Classification,
    pub order_parameter: f64,
    /// Global bias shift applied before classification.
    pub bias_shift: f64,
    /// The criticality sum and the stationary-point structure agree.
    pub consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalitySummary {
    pub lhs_t0: f64,
    pub lhs_finite_t: f64,
    pub is_superradiant: bool,
    /// x = 0 is stationary to within [`BALANCE_TOLERANCE`].
    pub balanced: bool,
}

/// Σᵢ 4gᵢ²/(ωΔᵢ), the zero-bias coupling sum.
pub fn coupling_sum(e: &Ensemble) -> f64 {
    sum::sum(
        e.qubits()
            .iter()
            .map(|q| 4.0 * q.g() * q.g() / (e.omega() * q.delta())),
    )
}

/// Σᵢ 4gᵢ²/(ωΔᵢ)·[1 + (εᵢ/Δᵢ)²]^{-3/2}
pub fn criticality_lhs_t0(e: &Ensemble) -> f64 {
    sum::sum(e.qubits().iter().map(|q| {
        4.0 * q.g() * q.g() / (e.omega() * q.delta()) * bias_suppression(q.bias_ratio())
    }))
}

/// Finite-temperature criticality sum; equals [`criticality_lhs_t0`] at kT = 0.
pub fn criticality_lhs_finite_t(e: &Ensemble, t: &ThermalSpec) -> f64 {
    if t.is_ground() {
        return criticality_lhs_t0(e);
    }
    let kt = t.kt();
    sum::sum(e.qubits().iter().map(|q| {
        let g2 = q.g() * q.g();
        let r = q.bias_ratio();
        let r2 = r * r;
        let y = q.delta().hypot(q.epsilon()) / (2.0 * kt);
        4.0 * g2 / (e.omega() * q.delta()) * bias_suppression(r) * y.tanh()
            + 2.0 * g2 / (e.omega() * kt) * r2 / (1.0 + r2) * sech2(y)
    }))
}

pub fn is_balanced(e: &Ensemble, t: &ThermalSpec) -> bool {
    meanfield::balance_function(e, t, 0.0).abs() <= BALANCE_TOLERANCE * e.total_coupling()
}

pub fn criticality_summary(e: &Ensemble, t: &ThermalSpec) -> CriticalitySummary {
    let lhs_t0 = criticality_lhs_t0(e);
    let lhs_finite_t = criticality_lhs_finite_t(e, t);
    CriticalitySummary {
        lhs_t0,
        lhs_finite_t,
        is_superradiant: Classification::from_lhs(lhs_finite_t) == Classification::Superradiant,
        balanced: is_balanced(e, t),
    }
}

/// Per-qubit term of the uniform-(g, Δ) thermal criticality sum, with
/// α = Δ/(2k_BT) and r = ε/Δ:
/// [1+r²]^{-3/2}·tanh(α√(1+r²)) + α·r²/(1+r²)·sech²(α√(1+r²)).
pub fn per_qubit_thermal_factor(alpha: f64, eps_over_delta: f64) -> f64 {
    let r2 = eps_over_delta * eps_over_delta;
    let c = (1.0 + r2).sqrt();
    if alpha.is_infinite() {
        return bias_suppression(eps_over_delta);
    }
    let y = alpha * c;
    bias_suppression(eps_over_delta) * y.tanh() + alpha * r2 / (1.0 + r2) * sech2(y)
}

/// S(α, σ/Δ): the thermal factor averaged over Gaussian biases.
pub fn thermal_sum(alpha: f64, sigma_over_delta: f64, rule: &QuadratureRule) -> f64 {
    if alpha.is_infinite() {
        return f2(sigma_over_delta);
    }
    gaussian_expect(
        |r| per_qubit_thermal_factor(alpha, r),
        sigma_over_delta,
        0.0,
        rule,
    )
}

/// S on the grid `alphas` × `sigmas_over_delta`; row i holds alphas[i].
pub fn fig2a_grid(alphas: &[f64], sigmas_over_delta: &[f64], rule: &QuadratureRule) -> Result<Vec<Vec<f64>>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0)) {
        return Err(invalid(format!("alpha must be > 0, got {a}")));
    }
    if let Some(s) = sigmas_over_delta.iter().find(|s| !(**s >= 0.0)) {
        return Err(invalid(format!("sigma/delta must be >= 0, got {s}")));
    }
    Ok(alphas
        .par_iter()
        .map(|&a| {
            sigmas_over_delta
                .iter()
                .map(|&s| thermal_sum(a, s, rule))
                .collect()
        })
        .collect())
}

const ALPHA_SCAN_MAX: f64 = 40.0;
const ALPHA_SCAN_STEPS: usize = 64;

/// k_BT_c/Δ solving (g/g₀)²·S(α_c, σ/Δ) = 1 with α_c = Δ/(2k_BT_c).
///
/// `None` means normal at every temperature ((g/g₀)²·f₂(σ/Δ) < 1). The scan
/// starts at high temperature and moves down, so the largest root is taken.
pub fn critical_temperature(
    g_over_g0_sq: f64,
    sigma_over_delta: f64,
    rule: &QuadratureRule,
) -> Option<f64> {
    if !(g_over_g0_sq > 0.0) {
        return None;
    }
    if g_over_g0_sq * f2(sigma_over_delta) < 1.0 {
        return None;
    }
    let target = 1.0 / g_over_g0_sq;
    let excess = |alpha: f64| thermal_sum(alpha, sigma_over_delta, rule) - target;

    // S(α) ≤ α, so below α = target the system is always normal.
    let alpha_min = 0.5 * target;
    let ratio = (ALPHA_SCAN_MAX / alpha_min).powf(1.0 / ALPHA_SCAN_STEPS as f64);
    let mut lo = alpha_min;
    let mut f_lo = excess(lo);
    for k in 1..=ALPHA_SCAN_STEPS {
        let hi = if k == ALPHA_SCAN_STEPS {
            ALPHA_SCAN_MAX
        } else {
            alpha_min * ratio.powi(k as i32)
        };
        let f_hi = excess(hi);
        if f_lo < 0.0 && f_hi > 0.0 {
            let alpha_c = bisect_increasing(&excess, lo, hi);
            return Some(1.0 / (2.0 * alpha_c));
        }
        lo = hi;
        f_lo = f_hi;
    }
    // Marginal couplings only reach the threshold as T → 0.
    Some(0.0)
}

fn bisect_increasing(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// T_c surface over (g/g₀)² × σ/Δ; row i holds g2s[i].
pub fn critical_temperature_grid(
    g2s: &[f64],
    sigmas_over_delta: &[f64],
    rule: &QuadratureRule,
) -> Vec<Vec<Option<f64>>> {
    g2s.par_iter()
        .map(|&g2| {
            sigmas_over_delta
                .iter()
                .map(|&s| critical_temperature(g2, s, rule))
                .collect()
        })
        .collect()
}

/// Critical (g/g₀)² at the given σ/Δ and k_BT/Δ: 1/S(Δ/2k_BT, σ/Δ).
pub fn critical_coupling_sq(sigma_over_delta: f64, kt_over_delta: f64, rule: &QuadratureRule) -> f64 {
    let alpha = if kt_over_delta == 0.0 {
        f64::INFINITY
    } else {
        0.5 / kt_over_delta
    };
    1.0 / thermal_sum(alpha, sigma_over_delta, rule)
}

/// Global multiplier s* on every gᵢ that puts the ensemble at criticality.
pub fn critical_coupling_scale(e: &Ensemble, t: &ThermalSpec) -> Result<f64> {
    let lhs = criticality_lhs_finite_t(e, t);
    if !(lhs > 0.0) {
        return Err(invalid("criticality sum vanishes; no coupling scale reaches the transition"));
    }
    Ok(1.0 / lhs.sqrt())
}

/// Phase of an ensemble at temperature `t`, balancing the bias first when
/// x = 0 is not already stationary.
pub fn classify(e: &Ensemble, t: &ThermalSpec) -> Result<PhasePoint> {
    let (bias_shift, balanced) = if is_balanced(e, t) || e.total_coupling() == 0.0 {
        (0.0, e.clone())
    } else {
        meanfield::balance_bias_at(e, t)?
    };
    let criticality = criticality_lhs_finite_t(&balanced, t);
    let classification = Classification::from_lhs(criticality);
    let solution = meanfield::solve(&balanced, t)?;
    let order_parameter = solution.x0;
    let consistent = match classification {
        Classification::Superradiant => order_parameter > 0.0,
        Classification::Normal => order_parameter == 0.0,
        Classification::Critical => true,
    };

    let n = e.len() as f64;
    let mean_delta = e.mean_delta();
    let mean_g = e.mean_g();
    let lambda = coupling_sum(e);
    let g_over_g0_sq = if e.has_uniform_gap_and_coupling() {
        // identical terms: use the same expression so the two agree bit-exactly
        lambda
    } else {
        4.0 * mean_g * mean_g * n / (e.omega() * mean_delta)
    };
    Ok(PhasePoint {
        lambda,
        g_over_g0_sq,
        sigma_over_delta: e.epsilon_spread() / mean_delta,
        kt_over_delta: t.kt() / mean_delta,
        criticality,
        classification,
        order_parameter,
        bias_shift,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_ensemble, QubitParams};
    use crate::specialfn::default_rule;

    fn lam(n: usize, lambda: f64) -> Ensemble {
        let g = (lambda / (4.0 * n as f64)).sqrt();
        uniform_ensemble(n, 1.0, 1.0, 0.0, g).unwrap()
    }

    #[test]
    fn zero_bias_reduces_to_coupling_sum() {
        let e = lam(100, 0.64);
        assert_eq!(criticality_lhs_t0(&e), coupling_sum(&e));
    }

    #[test]
    fn unit_bias_halves_by_root_eight() {
        let e = uniform_ensemble(10, 1.0, 1.0, 1.0, 0.1).unwrap();
        let want = coupling_sum(&e) * 2f64.powf(-1.5);
        assert!((criticality_lhs_t0(&e) - want).abs() < 1e-15);
        // Balanced pairs ε = ±Δ: x = 0 loses local stability at λ = 2√2, but
        // the displaced minimum already wins at λ ≈ 2.2723 (first order).
        let pair = |lambda: f64| {
            let g = (lambda / (4.0 * 20.0)).sqrt();
            Ensemble::new(
                1.0,
                (0..20)
                    .map(|i| QubitParams::new(1.0, if i % 2 == 0 { 1.0 } else { -1.0 }, g).unwrap())
                    .collect(),
            )
            .unwrap()
        };
        let t0 = ThermalSpec::ground();
        let lc = 2.0 * 2f64.sqrt();
        for (lambda, stable) in [(lc * (1.0 - 1e-5), true), (lc * (1.0 + 1e-5), false)] {
            let e = pair(lambda);
            assert!((criticality_lhs_t0(&e) < 1.0) == stable);
            let s = meanfield::solve(&e, &t0).unwrap();
            let origin = s.central_point();
            assert_eq!(origin.x, 0.0);
            let want = if stable { meanfield::Stability::Minimum } else { meanfield::Stability::Maximum };
            assert_eq!(origin.stability, want);
        }
        assert_eq!(meanfield::solve(&pair(2.27), &t0).unwrap().x0, 0.0);
        let jumped = meanfield::solve(&pair(2.275), &t0).unwrap();
        assert!(jumped.x0 > 0.5, "{}", jumped.x0);
        assert_eq!(jumped.stationary_points.len(), 5);
    }

    #[test]
    fn uniform_thermal_reduction() {
        let e = lam(50, 3.0);
        for kt in [0.05, 0.3, 1.0, 4.0] {
            let t = ThermalSpec::new(kt).unwrap();
            let want = coupling_sum(&e) * (0.5 / kt).tanh();
            assert!((criticality_lhs_finite_t(&e, &t) - want).abs() < 1e-12);
        }
        let biased = uniform_ensemble(10, 1.0, 1.0, 0.7, 0.1).unwrap();
        let cold = ThermalSpec::new(1e-8).unwrap();
        assert!((criticality_lhs_finite_t(&biased, &cold) - criticality_lhs_t0(&biased)).abs() < 1e-12);
    }

    #[test]
    fn finite_t_sum_is_slope_at_origin() {
        let q = |eps: f64, g: f64, d: f64| QubitParams::new(d, eps, g).unwrap();
        let e = Ensemble::new(1.2, vec![q(0.4, 0.1, 1.0), q(-0.9, 0.2, 0.8), q(0.1, 0.05, 1.3)]).unwrap();
        let t = ThermalSpec::new(0.35).unwrap();
        let h = 1e-6;
        let fd = (meanfield::self_consistent_rhs(&e, &t, h) - meanfield::self_consistent_rhs(&e, &t, -h)) / (2.0 * h);
        assert!((fd - criticality_lhs_finite_t(&e, &t)).abs() < 1e-6);
    }

    #[test]
    fn thermal_factor_limits() {
        for a in [0.1, 1.0, 3.0] {
            assert_eq!(per_qubit_thermal_factor(a, 0.0), a.tanh());
        }
        for r in [0.0, 0.5, 3.0] {
            assert!((per_qubit_thermal_factor(200.0, r) - bias_suppression(r)).abs() < 1e-15);
            assert!(per_qubit_thermal_factor(1e-9, r) < 1e-8);
        }
    }

    #[test]
    fn fig2a_limits() {
        let rule = default_rule();
        let grid = fig2a_grid(&[0.5, 10.0, 50.0], &[0.0, 0.7, 2.0], &rule).unwrap();
        assert_eq!(grid[0][0], 0.5f64.tanh());
        assert!((grid[1][0] - 1.0).abs() < 1e-8);
        for (j, s) in [0.0, 0.7, 2.0].iter().enumerate() {
            assert!((grid[2][j] - f2(*s)).abs() < 1e-6, "sigma {s}");
        }
        assert!(fig2a_grid(&[0.0], &[0.1], &rule).is_err());
    }

    #[test]
    fn critical_temperature_examples() {
        let rule = default_rule();
        let tc = critical_temperature(2.0, 0.0, &rule).unwrap();
        let want = 1.0 / (2.0 * 0.5f64.atanh());
        assert!((tc - want).abs() < 1e-9, "{tc} vs {want}");
        assert!((want - 0.910239).abs() < 1e-6);
        assert_eq!(critical_temperature(1.0, 0.0, &rule), Some(0.0));
        for s in [0.0, 0.5, 2.0] {
            assert_eq!(critical_temperature(0.5, s, &rule), None);
        }
    }

    #[test]
    fn critical_scale_examples() {
        let t0 = ThermalSpec::ground();
        let e = lam(10, 0.25);
        assert!((critical_coupling_scale(&e, &t0).unwrap() - 2.0).abs() < 1e-12);

        let biased = uniform_ensemble(10, 1.0, 1.0, 1.0, (1.0f64 / 40.0).sqrt()).unwrap();
        let s = critical_coupling_scale(&biased, &t0).unwrap();
        assert!((s - 2f64.powf(0.75)).abs() < 1e-12);

        let w = 2.0 * std::f64::consts::PI * 5.0;
        let fixture = uniform_ensemble(4300, w, w, 0.0, 2.0 * std::f64::consts::PI * 0.015).unwrap();
        let s = critical_coupling_scale(&fixture, &t0).unwrap();
        assert!((s - 1.0 / coupling_sum(&fixture).sqrt()).abs() < 1e-12);
        assert!((2.4..2.7).contains(&s), "{s}");
        assert!(s < 3.0);

        let dead = uniform_ensemble(3, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(critical_coupling_scale(&dead, &t0).is_err());
    }

    #[test]
    fn classify_examples() {
        let t0 = ThermalSpec::ground();
        let p = classify(&lam(100, 0.64), &t0).unwrap();
        assert_eq!(p.classification, Classification::Normal);
        assert_eq!(p.order_parameter, 0.0);
        assert_eq!(p.g_over_g0_sq, p.lambda);

        let e = uniform_ensemble(100, 1.0, 1.0, 0.0, 0.1).unwrap();
        let p = classify(&e, &t0).unwrap();
        assert_eq!(p.classification, Classification::Superradiant);
        assert!((p.order_parameter - 15f64.sqrt() / 0.4).abs() < 1e-9);
        assert!(p.consistent);

        let kt = 0.5 / 0.25f64.atanh();
        let p = classify(&e, &ThermalSpec::new(kt).unwrap()).unwrap();
        assert_eq!(p.classification, Classification::Critical);
    }

    #[test]
    fn classify_balances_offset_bias() {
        let e = uniform_ensemble(40, 1.0, 1.0, 0.8, 0.1).unwrap();
        let p = classify(&e, &ThermalSpec::ground()).unwrap();
        assert_eq!(p.bias_shift, -0.8);
        assert_eq!(p.classification, Classification::Superradiant);
        assert!(p.consistent);
    }
}
