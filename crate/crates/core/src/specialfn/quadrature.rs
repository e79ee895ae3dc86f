//! Gauss–Hermite rules for Gaussian expectations and an adaptive
//! Gauss–Kronrod integrator for finite intervals.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::sum::Compensated;

pub const DEFAULT_HERMITE_ORDER: usize = 200;

/// Relative disagreement between successive Gauss–Hermite orders above which
/// a Gaussian expectation falls back to adaptive quadrature.
pub const REFINEMENT_TOLERANCE: f64 = 1e-9;

/// Nodes and weights for ∫ e^{-t²} f(t) dt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Golub–Welsch construction from the Hermite Jacobi matrix, symmetrized
    /// so that odd moments cancel exactly.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("quadrature order must be >= 1"));
        }
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for i in 0..order - 1 {
            let b = ((i + 1) as f64 / 2.0).sqrt();
            jacobi[(i, i + 1)] = b;
            jacobi[(i + 1, i)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        for i in 0..order {
            let j = order - 1 - i;
            nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
            weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Ok(Self {
            nodes,
            weights,
            order,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Σ wᵢ f(tᵢ)
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = Compensated::default();
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            if w != 0.0 {
                acc.add(w * f(t));
            }
        }
        acc.value()
    }
}

/// Shared, lazily built rule of the given order.
pub fn hermite_rule(order: usize) -> Result<Arc<QuadratureRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&order) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(QuadratureRule::gauss_hermite(order)?);
    cache.lock().unwrap().insert(order, rule.clone());
    Ok(rule)
}

pub fn default_rule() -> Arc<QuadratureRule> {
    hermite_rule(DEFAULT_HERMITE_ORDER).expect("default order is valid")
}

/// E[f(X)] for X ~ Normal(mean, sigma²) using exactly the supplied rule.
pub fn gaussian_expect_with(f: impl Fn(f64) -> f64, sigma: f64, mean: f64, rule: &QuadratureRule) -> f64 {
    if sigma == 0.0 {
        return f(mean);
    }
    let scale = std::f64::consts::SQRT_2 * sigma;
    rule.integrate(|t| f(mean + scale * t)) / PI.sqrt()
}

/// E[f(X)] for X ~ Normal(mean, sigma²).
///
/// Evaluates `rule` and the rule of twice its order; when the two disagree by
/// more than [`REFINEMENT_TOLERANCE`] (relative) the expectation is recomputed
/// by adaptive Gauss–Kronrod quadrature over the Gaussian variable, which
/// resolves integrands much narrower than the Gaussian.
pub fn gaussian_expect(f: impl Fn(f64) -> f64, sigma: f64, mean: f64, rule: &QuadratureRule) -> f64 {
    if sigma == 0.0 {
        return f(mean);
    }
    let coarse = gaussian_expect_with(&f, sigma, mean, rule);
    let fine_rule = hermite_rule(2 * rule.order()).expect("order >= 1");
    let fine = gaussian_expect_with(&f, sigma, mean, &fine_rule);
    if (fine - coarse).abs() <= REFINEMENT_TOLERANCE * fine.abs().max(f64::MIN_POSITIVE) {
        return fine;
    }
    gaussian_expect_adaptive(f, sigma, mean)
}

/// Gaussian tail beyond |t| = 9 carries e^{-81} of the mass.
const GAUSSIAN_CUTOFF: f64 = 9.0;

pub fn gaussian_expect_adaptive(f: impl Fn(f64) -> f64, sigma: f64, mean: f64) -> f64 {
    if sigma == 0.0 {
        return f(mean);
    }
    let scale = std::f64::consts::SQRT_2 * sigma;
    let g = |t: f64| (-t * t).exp() * f(mean + scale * t);
    let pieces = 18;
    let breaks: Vec<f64> = (0..=pieces)
        .map(|k| -GAUSSIAN_CUTOFF + 2.0 * GAUSSIAN_CUTOFF * k as f64 / pieces as f64)
        .collect();
    let result = integrate_adaptive(g, &breaks, 1e-16, 1e-13, 4000);
    result.value / PI.sqrt()
}

// 21-point Kronrod extension of the 10-point Gauss–Legendre rule.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525975419,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Kronrod estimate and |Kronrod − Gauss| on [a, b].
fn gk21(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive GK21 quadrature over the partition given by `breaks`
/// (sorted). Bisects the worst interval until the summed error estimate falls
/// below max(abs_tol, rel_tol·|I|) or `max_intervals` is reached.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Integral {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = gk21(&f, w[0], w[1]);
        value += v;
        err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    while err > abs_tol.max(rel_tol * value.abs()) && heap.len() < max_intervals {
        let worst = heap.pop().expect("non-empty partition");
        if worst.error == 0.0 {
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at float resolution; freeze it
            err -= worst.error;
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            continue;
        }
        value -= worst.value;
        err -= worst.error;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (v, e) = gk21(&f, a, b);
            value += v;
            err += e;
            heap.push(Piece { a, b, value: v, error: e });
        }
    }
    let mut total = Compensated::default();
    let mut error = 0.0;
    for p in heap.iter() {
        total.add(p.value);
        error += p.error;
    }
    Integral {
        value: total.value(),
        error,
        intervals: heap.len(),
    }
}
