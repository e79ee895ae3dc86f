//! Mean-field ground state reduced to the single cavity coordinate x.
//!
//! Minimizing the classical Hamiltonian over every spin direction (and p = 0)
//! leaves the free-energy potential
//!
//! ```text
//! F(x) = ωx² − Σᵢ k_BT·ln(2 cosh(Ωᵢ(x)/2k_BT)),   Ωᵢ(x) = √(Δᵢ² + (εᵢ + 4gᵢx)²)
//! ```
//!
//! whose T → 0 limit is F₀(x) = ωx² − ½ΣᵢΩᵢ(x). Stationary points of F are the
//! solutions of the self-consistency equation, since dF/dx = 2ω·residual(x).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{Ensemble, QubitParams, ThermalSpec};
use crate::sum::{self, Compensated};

/// Relative padding of the root bracket beyond Σgᵢ/ω.
pub const BRACKET_PADDING: f64 = 1.05;
pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const MAX_GRID_POINTS: usize = 1 << 20;
/// |F''| ≤ CURVATURE_THRESHOLD·2ω is reported as marginal.
pub const CURVATURE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Minimum,
    Maximum,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub x: f64,
    pub energy: f64,
    pub curvature: f64,
    pub stability: Stability,
    pub residual: f64,
}

/// Mean-field configuration at a given cavity displacement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalState {
    pub x: f64,
    pub p: f64,
    pub thetas: Vec<f64>,
    pub theta_primes: Vec<f64>,
    pub omegas: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfConsistentSolution {
    pub stationary_points: Vec<StationaryPoint>,
    pub ground: ClassicalState,
    /// |x| of the ground state when the potential is bistable, else 0.
    pub x0: f64,
    pub bracket: f64,
    pub grid_points: usize,
}

impl SelfConsistentSolution {
    pub fn minima(&self) -> impl Iterator<Item = &StationaryPoint> {
        self.stationary_points
            .iter()
            .filter(|p| p.stability == Stability::Minimum)
    }

    /// The stationary point closest to x = 0.
    pub fn central_point(&self) -> &StationaryPoint {
        self.stationary_points
            .iter()
            .min_by(|a, b| a.x.abs().total_cmp(&b.x.abs()))
            .expect("at least one stationary point")
    }
}

#[inline]
fn dressed_bias(q: &QubitParams, x: f64) -> f64 {
    q.epsilon() + 4.0 * q.g() * x
}

#[inline]
fn splitting(q: &QubitParams, x: f64) -> f64 {
    q.delta().hypot(dressed_bias(q, x))
}

/// sech²(y) without overflow.
#[inline]
pub(crate) fn sech2(y: f64) -> f64 {
    let e = (-2.0 * y.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// k_BT·ln(2cosh(Ω/2k_BT)), equal to Ω/2 at zero temperature.
#[inline]
fn qubit_free_energy(splitting: f64, t: &ThermalSpec) -> f64 {
    if t.is_ground() {
        0.5 * splitting
    } else {
        0.5 * splitting + t.kt() * (-splitting / t.kt()).exp().ln_1p()
    }
}

/// F(x).
pub fn effective_potential(e: &Ensemble, t: &ThermalSpec, x: f64) -> f64 {
    let mut acc = Compensated::default();
    acc.add(e.omega() * x * x);
    for q in e.qubits() {
        acc.add(-qubit_free_energy(splitting(q, x), t));
    }
    acc.value()
}

/// Right-hand side of the self-consistency equation,
/// Σᵢ (gᵢ/ω)·(εᵢ+4gᵢx)/Ωᵢ·tanh(Ωᵢ/2k_BT).
pub fn self_consistent_rhs(e: &Ensemble, t: &ThermalSpec, x: f64) -> f64 {
    let total = sum::sum(e.qubits().iter().map(|q| {
        let u = dressed_bias(q, x);
        let omega_i = q.delta().hypot(u);
        q.g() * (u / omega_i) * t.polarization(omega_i)
    }));
    total / e.omega()
}

/// x − RHS(x); zero exactly at stationary points of F.
pub fn residual(e: &Ensemble, t: &ThermalSpec, x: f64) -> f64 {
    x - self_consistent_rhs(e, t, x)
}

/// d/dx RHS(x), evaluated analytically.
pub fn rhs_slope(e: &Ensemble, t: &ThermalSpec, x: f64) -> f64 {
    let total = sum::sum(e.qubits().iter().map(|q| {
        let g = q.g();
        let d = q.delta();
        let u = dressed_bias(q, x);
        let omega_i = d.hypot(u);
        let tilt = 4.0 * g * g * d * d / omega_i.powi(3);
        if t.is_ground() {
            tilt
        } else {
            let y = omega_i / (2.0 * t.kt());
            let ratio = u / omega_i;
            tilt * y.tanh() + 2.0 * g * g * ratio * ratio * sech2(y) / t.kt()
        }
    }));
    total / e.omega()
}

/// F''(x) = 2ω(1 − RHS'(x)).
pub fn potential_curvature(e: &Ensemble, t: &ThermalSpec, x: f64) -> f64 {
    2.0 * e.omega() * (1.0 - rhs_slope(e, t, x))
}

/// Mean-field configuration at displacement x.
pub fn classical_state(e: &Ensemble, t: &ThermalSpec, x: f64) -> ClassicalState {
    let n = e.len();
    let mut thetas = Vec::with_capacity(n);
    let mut theta_primes = Vec::with_capacity(n);
    let mut omegas = Vec::with_capacity(n);
    for q in e.qubits() {
        let u = dressed_bias(q, x);
        let theta = (u / q.delta()).atan();
        thetas.push(theta);
        theta_primes.push(std::f64::consts::FRAC_PI_2 - theta.abs());
        omegas.push(q.delta().hypot(u));
    }
    ClassicalState {
        x,
        p: 0.0,
        thetas,
        theta_primes,
        omegas,
        energy: effective_potential(e, t, x),
    }
}

/// (⟨σx⟩, ⟨σz⟩) per qubit: (cos θᵢ, −sin θᵢ)·tanh(Ωᵢ/2k_BT).
pub fn qubit_expectations(s: &ClassicalState, t: &ThermalSpec) -> Vec<(f64, f64)> {
    s.thetas
        .iter()
        .zip(&s.omegas)
        .map(|(theta, &omega_i)| {
            let pol = t.polarization(omega_i);
            (theta.cos() * pol, -theta.sin() * pol)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub grid_points: usize,
    pub max_grid_points: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            max_grid_points: MAX_GRID_POINTS,
        }
    }
}

pub fn solve(e: &Ensemble, t: &ThermalSpec) -> Result<SelfConsistentSolution> {
    solve_with(e, t, SolveOptions::default())
}

pub fn solve_with(e: &Ensemble, t: &ThermalSpec, opts: SolveOptions) -> Result<SelfConsistentSolution> {
    if opts.grid_points < 2 {
        return Err(invalid("grid_points must be >= 2"));
    }
    let bracket = BRACKET_PADDING * e.total_coupling() / e.omega();
    if bracket == 0.0 {
        // decoupled cavity: residual(x) = x
        let point = stationary_point(e, t, 0.0);
        return Ok(SelfConsistentSolution {
            stationary_points: vec![point],
            ground: classical_state(e, t, 0.0),
            x0: 0.0,
            bracket,
            grid_points: 0,
        });
    }

    let mut n = opts.grid_points + opts.grid_points % 2;
    let roots = loop {
        let roots = scan_roots(e, t, bracket, n);
        let cell = 2.0 * bracket / n as f64;
        if n * 2 <= opts.max_grid_points.max(n) && needs_refinement(&roots, cell) {
            n *= 2;
            continue;
        }
        break roots;
    };
    if roots.is_empty() {
        return Err(Error::Numerical(
            "no stationary point found inside the bracket".into(),
        ));
    }

    let stationary_points: Vec<StationaryPoint> =
        roots.iter().map(|&x| stationary_point(e, t, x)).collect();
    let ground_point = select_ground(&stationary_points);
    let minima = stationary_points
        .iter()
        .filter(|p| p.stability == Stability::Minimum)
        .count();
    let x0 = if minima >= 2 { ground_point.x.abs() } else { 0.0 };
    Ok(SelfConsistentSolution {
        ground: classical_state(e, t, ground_point.x),
        stationary_points,
        x0,
        bracket,
        grid_points: n,
    })
}

fn stationary_point(e: &Ensemble, t: &ThermalSpec, x: f64) -> StationaryPoint {
    let curvature = potential_curvature(e, t, x);
    let scale = 2.0 * e.omega();
    let stability = if curvature.abs() <= CURVATURE_THRESHOLD * scale {
        Stability::Marginal
    } else if curvature > 0.0 {
        Stability::Minimum
    } else {
        Stability::Maximum
    };
    StationaryPoint {
        x,
        energy: effective_potential(e, t, x),
        curvature,
        stability,
        residual: residual(e, t, x),
    }
}

/// Lowest F among the minima (all points if none is a strict minimum);
/// near-ties resolve to the non-negative representative.
fn select_ground(points: &[StationaryPoint]) -> StationaryPoint {
    let minima: Vec<StationaryPoint> = points
        .iter()
        .copied()
        .filter(|p| p.stability == Stability::Minimum)
        .collect();
    let candidates = if minima.is_empty() { points } else { &minima[..] };
    let mut best = candidates[0];
    for &p in &candidates[1..] {
        let tie = 1e-12 * best.energy.abs().max(1.0);
        if p.energy < best.energy - tie {
            best = p;
        } else if (p.energy - best.energy).abs() <= tie && best.x < 0.0 && p.x >= 0.0 {
            best = p;
        }
    }
    best
}

fn sign(v: f64, zero_band: f64) -> i8 {
    if v.abs() <= zero_band {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// All roots of the residual on [-bracket, bracket] from an n-cell grid.
fn scan_roots(e: &Ensemble, t: &ThermalSpec, bracket: f64, n: usize) -> Vec<f64> {
    let half = n / 2;
    let xs: Vec<f64> = (0..=n)
        .map(|k| {
            if k == half {
                0.0
            } else {
                bracket * (k as f64 - half as f64) / half as f64
            }
        })
        .collect();
    let rs: Vec<f64> = xs.par_iter().map(|&x| residual(e, t, x)).collect();

    // Grid values this small are accepted as roots outright.
    let zero_band = 1e-13 * bracket.max(1.0);
    let x_tol = 1e-12 * bracket;
    let signs: Vec<i8> = rs.iter().map(|&r| sign(r, zero_band)).collect();
    let f = |x: f64| residual(e, t, x);

    let mut roots = Vec::new();
    for k in 0..=n {
        if signs[k] == 0 {
            roots.push(xs[k]);
            // A root sitting on a grid node can hide a neighbour inside the
            // adjacent cell: the residual leaves the node with the sign of its
            // slope, so an opposite-signed neighbour means another crossing.
            let slope = 1.0 - rhs_slope(e, t, xs[k]);
            let leave = sign(slope, CURVATURE_THRESHOLD);
            if leave == 0 {
                continue;
            }
            if k < n && signs[k + 1] == -leave {
                if let Some(r) = probe_cell(&f, xs[k], xs[k + 1], leave, x_tol) {
                    roots.push(r);
                }
            }
            if k > 0 && signs[k - 1] == leave {
                if let Some(r) = probe_cell(&f, xs[k], xs[k - 1], -leave, x_tol) {
                    roots.push(r);
                }
            }
        } else if k < n && signs[k] * signs[k + 1] == -1 {
            roots.push(bisect(&f, xs[k], xs[k + 1], rs[k], x_tol));
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= x_tol);
    roots
}

/// Looks for a crossing between `node` (a root) and `far` by stepping in from
/// the node until the residual shows the sign `near_sign`.
fn probe_cell(f: &impl Fn(f64) -> f64, node: f64, far: f64, near_sign: i8, x_tol: f64) -> Option<f64> {
    let mut step = far - node;
    for _ in 0..80 {
        step *= 0.5;
        let x = node + step;
        if x == node {
            break;
        }
        let r = f(x);
        let s = if r > 0.0 {
            1
        } else if r < 0.0 {
            -1
        } else {
            0
        };
        if s == near_sign {
            return Some(bisect(f, x, far, r, x_tol));
        }
    }
    None
}

/// Bisection on [a, b] with f(a) = fa and f(b) of opposite sign.
fn bisect(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, x_tol: f64) -> f64 {
    let (mut lo, mut hi) = if fa < 0.0 { (a, b) } else { (b, a) };
    loop {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_tol || mid == lo || mid == hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Roots too close together, or a root pattern that cannot come from a
/// continuous residual going from negative (x = −B) to positive (x = +B).
fn needs_refinement(roots: &[f64], cell: f64) -> bool {
    roots.windows(2).any(|w| w[1] - w[0] < 4.0 * cell) || roots.len() % 2 == 0
}

/// Σᵢ gᵢ·u/√(Δᵢ² + u²)·tanh(√(Δᵢ²+u²)/2k_BT) with u = εᵢ + shift: −ω times
/// the residual at x = 0 once all biases are shifted.
pub fn balance_function(e: &Ensemble, t: &ThermalSpec, shift: f64) -> f64 {
    sum::sum(e.qubits().iter().map(|q| {
        let u = q.epsilon() + shift;
        let omega_i = q.delta().hypot(u);
        q.g() * (u / omega_i) * t.polarization(omega_i)
    }))
}

/// Global bias shift δ making x = 0 a zero-temperature stationary point.
pub fn balance_bias(e: &Ensemble) -> Result<(f64, Ensemble)> {
    balance_bias_at(e, &ThermalSpec::ground())
}

/// Global bias shift δ making x = 0 a stationary point at temperature `t`.
///
/// The balance function is strictly increasing in δ, negative at
/// δ = −max εᵢ and positive at δ = −min εᵢ, so bisection on that bracket
/// always converges.
pub fn balance_bias_at(e: &Ensemble, t: &ThermalSpec) -> Result<(f64, Ensemble)> {
    if e.qubits().iter().all(|q| q.g() == 0.0) {
        return Err(invalid("bias balancing needs at least one g > 0"));
    }
    let (min_eps, max_eps) = e
        .qubits()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q.epsilon()), hi.max(q.epsilon()))
        });
    let mut lo = -max_eps;
    let mut hi = -min_eps;
    let f_lo = balance_function(e, t, lo);
    let f_hi = balance_function(e, t, hi);
    let mut best = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    if lo < hi && best.1 != 0.0 {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = balance_function(e, t, mid);
            if fm.abs() < best.1.abs() {
                best = (mid, fm);
            }
            if fm == 0.0 {
                break;
            }
            if fm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let delta = best.0;
    Ok((delta, e.shift_bias(delta)?))
}
