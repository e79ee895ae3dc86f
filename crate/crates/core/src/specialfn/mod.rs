//! Confluent hypergeometric U(½, 0, z), the bias-disorder suppression factors
//! built from it, and Gaussian-expectation quadrature.

mod quadrature;

use std::f64::consts::{PI, SQRT_2};

pub use quadrature::{
    default_rule, gaussian_expect, gaussian_expect_adaptive, gaussian_expect_with, hermite_rule,
    integrate_adaptive, Integral, QuadratureRule, DEFAULT_HERMITE_ORDER, REFINEMENT_TOLERANCE,
};

use crate::error::{Error, Result};

/// U(½, 0, z) for z > 0.
///
/// Uses U(½,0,z) = (2/√π) ∫₀^∞ e^{-z s²} (1+s²)^{-3/2} ds (after t = s²),
/// mapped onto [0, 1) with s = u/(1−u). The initial partition places
/// breakpoints at s ~ 1/√z so the Gaussian part is resolved for large z.
pub fn hyp_u_half(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("U(1/2, 0, z) needs finite z > 0, got {z}")));
    }
    let integrand = |u: f64| {
        let w = 1.0 - u;
        let s = u / w;
        let denom = (w * w + u * u).powf(1.5);
        (-z * s * s).exp() * w / denom
    };
    let mut breaks = vec![0.0];
    let width = 1.0 / z.sqrt();
    for c in [0.125, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = c * width;
        let u = s / (1.0 + s);
        if u > 1e-300 && u < 0.9 && u > *breaks.last().unwrap() {
            breaks.push(u);
        }
    }
    for u in [0.25, 0.5, 0.75, 1.0] {
        if u > *breaks.last().unwrap() {
            breaks.push(u);
        }
    }
    let integral = integrate_adaptive(integrand, &breaks, 0.0, 1e-14, 2000);
    Ok(2.0 / PI.sqrt() * integral.value)
}

/// f₁(r) = U(½, 0, 1/(2r²)) with r = σ/Δ; f₁(0) = 0.
pub fn f1(r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    hyp_u_half(1.0 / (2.0 * r * r)).expect("z > 0 for r > 0")
}

/// f₂(r) = U(½, 0, 1/(2r²)) / (√2 r), the Gaussian average of
/// (1 + (ε/Δ)²)^{-3/2} over ε ~ N(0, (rΔ)²); f₂(0) = 1.
pub fn f2(r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    hyp_u_half(1.0 / (2.0 * r * r)).expect("z > 0 for r > 0") / (SQRT_2 * r)
}

/// Per-qubit zero-temperature suppression factor (1 + (ε/Δ)²)^{-3/2}.
pub fn bias_suppression(eps_over_delta: f64) -> f64 {
    (1.0 + eps_over_delta * eps_over_delta).powf(-1.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: tanh–sinh quadrature of the raw integral
    /// Γ(a)⁻¹ ∫₀^∞ e^{-zt} t^{a-1} (1+t)^{b-a-1} dt via t = e^{(π/2) sinh τ}.
    fn u_oracle(a: f64, b: f64, z: f64, gamma_a: f64) -> f64 {
        let h = 1.0 / 64.0;
        let mut total = 0.0;
        let mut k = -(6.0 / h) as i64;
        while (k as f64) * h <= 6.0 {
            let tau = k as f64 * h;
            let t = (0.5 * PI * tau.sinh()).exp();
            let jac = 0.5 * PI * tau.cosh() * t;
            let v = (-z * t).exp() * t.powf(a - 1.0) * (1.0 + t).powf(b - a - 1.0) * jac;
            if v.is_finite() {
                total += v;
            }
            k += 1;
        }
        total * h / gamma_a
    }

    #[test]
    fn matches_independent_integral_at_one() {
        let got = hyp_u_half(1.0).unwrap();
        let want = u_oracle(0.5, 0.0, 1.0, PI.sqrt());
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn limits() {
        let big = 1e8;
        let asym = hyp_u_half(big).unwrap() * big.sqrt();
        assert!((asym - 1.0).abs() < 1e-4, "{asym}");
        // three-term asymptotic series U ~ z^{-1/2}(1 - 3/(4z) + 45/(32 z²))
        let z: f64 = 1e4;
        let series = z.powf(-0.5) * (1.0 - 0.75 / z + 45.0 / 32.0 / (z * z));
        assert!((hyp_u_half(z).unwrap() - series).abs() < 1e-10 * series);

        let tiny = hyp_u_half(1e-8).unwrap();
        assert!((tiny - 2.0 / PI.sqrt()).abs() < 1e-6, "{tiny}");
        assert!((f2(1e6) * SQRT_2 * 1e6 - 2.0 / PI.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(hyp_u_half(0.0), Err(Error::Domain(_))));
        assert!(hyp_u_half(-1.0).is_err());
        assert!(hyp_u_half(f64::NAN).is_err());
    }

    #[test]
    fn kummer_transformation_consistency() {
        // U(½,0,z) = z·U(3/2, 2, z)
        let mut z = 3.7e-4;
        for _ in 0..20 {
            let lhs = hyp_u_half(z).unwrap();
            let rhs = z * u_oracle(1.5, 2.0, z, PI.sqrt() / 2.0);
            assert!((lhs - rhs).abs() < 1e-9 * lhs, "z={z}: {lhs} vs {rhs}");
            z *= 2.9;
        }
    }

    #[test]
    fn special_values() {
        assert_eq!(f1(0.0), 0.0);
        assert_eq!(f2(0.0), 1.0);
        assert_eq!(f1(1.0), hyp_u_half(0.5).unwrap());
        let r = 10.0;
        let asym = (2.0 / PI).sqrt() / r;
        assert!((f2(r) - asym).abs() < 0.05 * asym);
    }

    #[test]
    fn f2_equals_gaussian_average() {
        let rule = default_rule();
        for r in [0.1, 1.0, 10.0] {
            let q = gaussian_expect(bias_suppression, r, 0.0, &rule);
            assert!((q - f2(r)).abs() < 1e-8, "r={r}: {q} vs {}", f2(r));
        }
    }

    #[test]
    fn monotone_on_grid() {
        let mut prev1 = f1(0.0);
        let mut prev2 = f2(0.0);
        for k in 1..=1000 {
            let r = 100.0 * k as f64 / 1000.0;
            let (a, b) = (f1(r), f2(r));
            assert!(a > prev1, "f1 not increasing at {r}");
            assert!(b < prev2, "f2 not decreasing at {r}");
            assert!(b > 0.0 && b <= 1.0);
            prev1 = a;
            prev2 = b;
        }
    }
}
