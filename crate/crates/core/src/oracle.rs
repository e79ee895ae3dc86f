//! Exact diagonalization of the full qubit–cavity Hamiltonian
//!
//! ```text
//! H = Σᵢ[−(Δᵢ/2)σxⁱ + (εᵢ/2)σzⁱ] + ω(a†a + ½) + Σᵢ gᵢσzⁱ(a + a†)
//! ```
//!
//! in a truncated Fock space, and the product-state branches of the mean-field
//! solution built in the same basis.
//!
//! Basis index is `q·(M+1) + n` for qubit configuration `q` and photon number
//! `n`. Bit i of `q` clear means σzⁱ = +1, which is the state written |L⟩;
//! a set bit is σzⁱ = −1, written |R⟩.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::meanfield;
use crate::model::{uniform_ensemble, Ensemble, ThermalSpec};

pub const MAX_QUBITS: usize = 8;
pub const MAX_DIMENSION: usize = 1 << 16;
/// Largest truncated norm accepted for a displaced vacuum.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;
/// Extra Fock levels used by the cutoff-stability check.
pub const CONVERGENCE_EXTRA_LEVELS: usize = 10;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    ensemble: Ensemble,
    fock_cutoff: usize,
}

impl HamiltonianSpec {
    pub fn new(ensemble: Ensemble, fock_cutoff: usize) -> Result<Self> {
        let n = ensemble.len();
        if n > MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "exact diagonalization supports at most {MAX_QUBITS} qubits, got {n}"
            )));
        }
        let dim = (1usize << n).checked_mul(fock_cutoff.saturating_add(1));
        match dim {
            Some(d) if d <= MAX_DIMENSION => Ok(Self { ensemble, fock_cutoff }),
            _ => Err(Error::ResourceLimit(format!(
                "dimension 2^{n}·({fock_cutoff}+1) exceeds {MAX_DIMENSION}"
            ))),
        }
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn qubit_states(&self) -> usize {
        1 << self.ensemble.len()
    }

    pub fn fock_levels(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dimension(&self) -> usize {
        self.qubit_states() * self.fock_levels()
    }

    fn with_cutoff(&self, fock_cutoff: usize) -> Result<Self> {
        Self::new(self.ensemble.clone(), fock_cutoff)
    }
}

#[inline]
fn spin(q: usize, i: usize) -> f64 {
    if q >> i & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense H; `eta` adds η·Σσzⁱ.
fn assemble(spec: &HamiltonianSpec, eta: f64) -> DMatrix<f64> {
    let e = spec.ensemble();
    let levels = spec.fock_levels();
    let dim = spec.dimension();
    let omega = e.omega();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for q in 0..spec.qubit_states() {
        let mut bias = 0.0;
        let mut coupling = 0.0;
        for (i, p) in e.qubits().iter().enumerate() {
            let s = spin(q, i);
            bias += (0.5 * p.epsilon() + eta) * s;
            coupling += p.g() * s;
        }
        for n in 0..levels {
            let a = q * levels + n;
            h[(a, a)] = bias + omega * (n as f64 + 0.5);
            if n + 1 < levels {
                let v = coupling * ((n + 1) as f64).sqrt();
                h[(a, a + 1)] = v;
                h[(a + 1, a)] = v;
            }
            for (i, p) in e.qubits().iter().enumerate() {
                let b = (q ^ (1 << i)) * levels + n;
                h[(a, b)] = -0.5 * p.delta();
            }
        }
    }
    h
}

pub fn build_hamiltonian(spec: &HamiltonianSpec) -> DMatrix<f64> {
    assemble(spec, 0.0)
}

/// Image of basis state `a` under P̂ = (Πᵢσxⁱ)·exp(iπa†a), with its sign.
#[inline]
fn parity_image(spec: &HamiltonianSpec, a: usize) -> (usize, f64) {
    let levels = spec.fock_levels();
    let (q, n) = (a / levels, a % levels);
    let flipped = q ^ (spec.qubit_states() - 1);
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    (flipped * levels + n, sign)
}

/// ‖[H, P̂]‖_F / ‖H‖_F.
pub fn parity_commutator_norm(spec: &HamiltonianSpec, h: &DMatrix<f64>) -> f64 {
    let dim = spec.dimension();
    let images: Vec<(usize, f64)> = (0..dim).map(|a| parity_image(spec, a)).collect();
    // P̂ is an orthogonal involution, so ‖HP − PH‖ = ‖H − PHP‖.
    let mut diff = 0.0;
    for a in 0..dim {
        let (pa, sa) = images[a];
        for b in 0..dim {
            let (pb, sb) = images[b];
            let d = h[(a, b)] - sa * sb * h[(pa, pb)];
            diff += d * d;
        }
    }
    diff.sqrt() / h.norm()
}

pub fn parity_expectation(spec: &HamiltonianSpec, v: &DVector<f64>) -> f64 {
    (0..spec.dimension())
        .map(|a| {
            let (pa, s) = parity_image(spec, a);
            v[a] * s * v[pa]
        })
        .sum()
}

/// (a + a†)v
fn apply_quadrature(spec: &HamiltonianSpec, v: &DVector<f64>) -> DVector<f64> {
    let levels = spec.fock_levels();
    let mut w = DVector::zeros(v.len());
    for q in 0..spec.qubit_states() {
        let base = q * levels;
        for n in 0..levels {
            let mut acc = 0.0;
            if n > 0 {
                acc += (n as f64).sqrt() * v[base + n - 1];
            }
            if n + 1 < levels {
                acc += ((n + 1) as f64).sqrt() * v[base + n + 1];
            }
            w[base + n] = acc;
        }
    }
    w
}

/// (⟨x̂⟩, ⟨x̂²⟩) with x̂ = (a + a†)/2.
pub fn quadrature_moments(spec: &HamiltonianSpec, v: &DVector<f64>) -> (f64, f64) {
    let w = apply_quadrature(spec, v);
    (0.5 * v.dot(&w), 0.25 * w.dot(&w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdOptions {
    /// η in the added term η·Σσzⁱ.
    pub symmetry_breaking: f64,
    pub check_convergence: bool,
}

impl Default for EdOptions {
    fn default() -> Self {
        Self {
            symmetry_breaking: 0.0,
            check_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdResult {
    pub energies: Vec<f64>,
    pub gap: f64,
    pub x_mean: f64,
    pub x_sq_mean: f64,
    pub parity: f64,
    pub converged: bool,
    pub fock_cutoff: usize,
    /// Eigenvectors matching `energies`.
    #[serde(skip)]
    pub states: Vec<DVector<f64>>,
}

impl EdResult {
    pub fn ground_state(&self) -> &DVector<f64> {
        &self.states[0]
    }
}

fn lowest(h: DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let states = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (energies, states)
}

fn energies_agree(a: &[f64], b: &[f64], scale: f64) -> bool {
    a.iter()
        .zip(b)
        .take(2)
        .all(|(x, y)| (x - y).abs() <= CONVERGENCE_TOLERANCE * x.abs().max(scale))
}

pub fn lowest_eigenpairs(spec: &HamiltonianSpec, k: usize) -> Result<EdResult> {
    lowest_eigenpairs_with(spec, k, EdOptions::default())
}

/// Lowest `k` eigenpairs by a dense symmetric eigensolve.
///
/// `converged` compares E₀ and E₁ with a rerun at M + 10 levels, relative to
/// max(|E|, ω). When that larger basis exceeds the dimension guard the flag is
/// false.
pub fn lowest_eigenpairs_with(spec: &HamiltonianSpec, k: usize, opts: EdOptions) -> Result<EdResult> {
    let dim = spec.dimension();
    if k < 2 || k > dim {
        return Err(invalid(format!("k must be in 2..={dim}, got {k}")));
    }
    if !opts.symmetry_breaking.is_finite() {
        return Err(invalid("symmetry-breaking field must be finite"));
    }
    let (energies, states) = lowest(assemble(spec, opts.symmetry_breaking), k);
    let converged = if opts.check_convergence {
        match spec.with_cutoff(spec.fock_cutoff + CONVERGENCE_EXTRA_LEVELS) {
            Ok(bigger) => {
                let (check, _) = lowest(assemble(&bigger, opts.symmetry_breaking), 2);
                energies_agree(&energies, &check, spec.ensemble().omega())
            }
            Err(_) => false,
        }
    } else {
        false
    };
    let (x_mean, x_sq_mean) = quadrature_moments(spec, &states[0]);
    let parity = parity_expectation(spec, &states[0]);
    Ok(EdResult {
        gap: (energies[1] - energies[0]).max(0.0),
        energies,
        x_mean,
        x_sq_mean,
        parity,
        converged,
        fock_cutoff: spec.fock_cutoff,
        states,
    })
}

/// Fock amplitudes of the coherent state with real amplitude β (so ⟨x̂⟩ = β),
/// truncated to levels 0..=cutoff and renormalized.
pub fn displaced_vacuum(beta: f64, cutoff: usize) -> Result<Vec<f64>> {
    if !beta.is_finite() {
        return Err(invalid("displacement must be finite"));
    }
    let mut amps = Vec::with_capacity(cutoff + 1);
    if beta == 0.0 {
        amps.push(1.0);
        amps.resize(cutoff + 1, 0.0);
        return Ok(amps);
    }
    // log-space recurrence: ln|cₙ| = −β²/2 + n·ln|β| − ½ln n!
    let ln_beta = beta.abs().ln();
    let mut ln_c = -0.5 * beta * beta;
    for n in 0..=cutoff {
        if n > 0 {
            ln_c += ln_beta - 0.5 * (n as f64).ln();
        }
        let sign = if beta < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
        amps.push(sign * ln_c.exp());
    }
    let kept: f64 = amps.iter().map(|c| c * c).sum();
    let lost = 1.0 - kept;
    if lost > TRUNCATION_TOLERANCE {
        return Err(Error::Truncation(format!(
            "displacement {beta} loses norm {lost:.3e} at cutoff {cutoff}"
        )));
    }
    let norm = kept.sqrt();
    amps.iter_mut().for_each(|c| *c /= norm);
    Ok(amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
    Symmetric,
    Antisymmetric,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Left, Branch::Right, Branch::Symmetric, Branch::Antisymmetric];

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Left => "left",
            Branch::Right => "right",
            Branch::Symmetric => "symmetric",
            Branch::Antisymmetric => "antisymmetric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzState {
    pub branch: Branch,
    /// θ′ᵢ = π/2 − |θᵢ| on the left branch.
    pub theta_primes: Vec<f64>,
    /// Displacement of the left branch; the right branch sits at the other minimum.
    pub x_left: f64,
    pub x_right: f64,
    pub vector: DVector<f64>,
}

/// Product state with every qubit in the ground state of its local field at
/// displacement x, times the displaced vacuum at x.
///
/// The local ground state has ⟨σx⟩ = cos θ, ⟨σz⟩ = −sin θ, i.e.
/// cos(χ/2)|L⟩ + sin(χ/2)|R⟩ with χ = π/2 + θ. On the left branch of a
/// balanced ensemble χ reduces to θ′.
pub fn product_branch(spec: &HamiltonianSpec, x: f64) -> Result<DVector<f64>> {
    let e = spec.ensemble();
    let t = ThermalSpec::ground();
    let state = meanfield::classical_state(e, &t, x);
    let halves: Vec<(f64, f64)> = state
        .thetas
        .iter()
        .map(|theta| {
            let chi = std::f64::consts::FRAC_PI_2 + theta;
            ((0.5 * chi).cos(), (0.5 * chi).sin())
        })
        .collect();
    let fock = displaced_vacuum(x, spec.fock_cutoff)?;
    let levels = spec.fock_levels();
    let mut v = DVector::zeros(spec.dimension());
    for q in 0..spec.qubit_states() {
        let amp: f64 = halves
            .iter()
            .enumerate()
            .map(|(i, (l, r))| if q >> i & 1 == 0 { *l } else { *r })
            .product();
        for (n, c) in fock.iter().enumerate() {
            v[q * levels + n] = amp * c;
        }
    }
    let norm = v.norm();
    Ok(v / norm)
}

/// Branch states built from the zero-temperature mean-field solution: left and
/// right sit at the outermost minima of F₀, symmetric and antisymmetric are
/// their renormalized sum and difference.
pub fn build_ansatz(spec: &HamiltonianSpec, branch: Branch) -> Result<AnsatzState> {
    let solution = meanfield::solve(spec.ensemble(), &ThermalSpec::ground())?;
    let minima: Vec<f64> = solution.minima().map(|p| p.x).collect();
    let (x_left, x_right) = match (minima.first(), minima.last()) {
        (Some(&l), Some(&r)) => (l, r),
        _ => {
            let x = solution.ground.x;
            (x, x)
        }
    };
    let state = meanfield::classical_state(spec.ensemble(), &ThermalSpec::ground(), x_left);
    let left = product_branch(spec, x_left)?;
    let vector = match branch {
        Branch::Left => left,
        Branch::Right => product_branch(spec, x_right)?,
        Branch::Symmetric | Branch::Antisymmetric => {
            let right = product_branch(spec, x_right)?;
            let combo = if branch == Branch::Symmetric {
                &left + &right
            } else {
                &left - &right
            };
            let norm = combo.norm();
            if norm < 1e-8 {
                return Err(Error::Numerical(format!(
                    "{} branch vanishes: left and right branches coincide",
                    branch.as_str()
                )));
            }
            combo / norm
        }
    };
    Ok(AnsatzState {
        branch,
        theta_primes: state.theta_primes,
        x_left,
        x_right,
        vector,
    })
}

/// ⟨ψ|H|ψ⟩.
pub fn ansatz_energy(h: &DMatrix<f64>, state: &AnsatzState) -> f64 {
    state.vector.dot(&(h * &state.vector))
}

/// |⟨ψ|φ⟩|².
pub fn overlap(state: &AnsatzState, v: &DVector<f64>) -> f64 {
    let o = state.vector.dot(v);
    o * o
}

/// Ground-state gap at fixed λ = 4g²N/(ωΔ) for each N, with g = √(λωΔ/(4N)).
pub fn gap_vs_n(
    lambda: f64,
    n_list: &[usize],
    omega: f64,
    delta: f64,
    fock_cutoff: usize,
) -> Result<Vec<(usize, f64)>> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    n_list
        .par_iter()
        .map(|&n| {
            if n == 0 {
                return Err(invalid("N must be >= 1"));
            }
            let g = (lambda * omega * delta / (4.0 * n as f64)).sqrt();
            let spec = HamiltonianSpec::new(uniform_ensemble(n, omega, delta, 0.0, g)?, fock_cutoff)?;
            let opts = EdOptions {
                check_convergence: false,
                ..EdOptions::default()
            };
            Ok((n, lowest_eigenpairs_with(&spec, 2, opts)?.gap))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QubitParams;

    fn uniform_spec(n: usize, lambda: f64, cutoff: usize) -> HamiltonianSpec {
        let g = (lambda / (4.0 * n as f64)).sqrt();
        HamiltonianSpec::new(uniform_ensemble(n, 1.0, 1.0, 0.0, g).unwrap(), cutoff).unwrap()
    }

    #[test]
    fn resource_guard() {
        let e = uniform_ensemble(9, 1.0, 1.0, 0.0, 0.1).unwrap();
        assert!(matches!(HamiltonianSpec::new(e, 1), Err(Error::ResourceLimit(_))));
        let e = uniform_ensemble(8, 1.0, 1.0, 0.0, 0.1).unwrap();
        assert!(HamiltonianSpec::new(e.clone(), 255).is_ok());
        assert!(HamiltonianSpec::new(e, 256).is_err());
    }

    #[test]
    fn single_decoupled_qubit() {
        let spec = HamiltonianSpec::new(uniform_ensemble(1, 1.0, 1.0, 0.0, 0.0).unwrap(), 0).unwrap();
        let r = lowest_eigenpairs(&spec, 2).unwrap();
        assert_eq!(r.energies, vec![0.0, 1.0]);
    }

    #[test]
    fn symmetric_and_explicit() {
        let e = Ensemble::new(
            0.9,
            vec![QubitParams::new(1.1, 0.3, 0.2).unwrap(), QubitParams::new(0.7, -0.2, 0.4).unwrap()],
        )
        .unwrap();
        let spec = HamiltonianSpec::new(e, 3).unwrap();
        let h = build_hamiltonian(&spec);
        assert_eq!(h, h.transpose());
        // |q=0 (both up), n=0⟩ diagonal: (0.3 − 0.2)/2 + 0.45
        assert!((h[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((h[(0, 1)] - 0.6).abs() < 1e-15);
        assert_eq!(h[(0, 4)], -0.55);
        assert_eq!(h[(0, 8)], -0.35);
        // biased ensembles break parity
        assert!(parity_commutator_norm(&spec, &h) > 1e-3);
    }

    #[test]
    fn parity_conserved_without_bias() {
        let spec = uniform_spec(3, 2.0, 12);
        let h = build_hamiltonian(&spec);
        assert!(parity_commutator_norm(&spec, &h) <= 1e-10);
        let r = lowest_eigenpairs(&spec, 2).unwrap();
        assert!(r.x_mean.abs() <= 1e-8);
        assert!((r.parity.abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn decoupled_gap() {
        for (d, w) in [(1.0, 1.0), (0.6, 1.0), (1.0, 0.4)] {
            let e = uniform_ensemble(2, w, d, 0.0, 0.0).unwrap();
            let r = lowest_eigenpairs(&HamiltonianSpec::new(e, 6).unwrap(), 3).unwrap();
            assert!((r.gap - f64::min(d, w)).abs() < 1e-12);
            assert!((r.energies[0] - (0.5 * w - d)).abs() < 1e-12);
        }
    }

    #[test]
    fn displaced_vacuum_moments() {
        let levels = 60;
        for beta in [-2.5, 0.0, 0.7, 3.0] {
            let c = displaced_vacuum(beta, levels - 1).unwrap();
            let norm: f64 = c.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            let x: f64 = (0..levels - 1).map(|n| c[n] * c[n + 1] * ((n + 1) as f64).sqrt()).sum();
            assert!((x - beta).abs() < 1e-9, "{beta}: {x}");
        }
        assert!(matches!(displaced_vacuum(5.0, 10), Err(Error::Truncation(_))));
        assert!(displaced_vacuum(40.0, 4000).is_ok());
    }

    #[test]
    fn normal_phase_ansatz_is_sigma_x_vacuum() {
        let spec = uniform_spec(3, 0.5, 10);
        let a = build_ansatz(&spec, Branch::Left).unwrap();
        assert!(a.theta_primes.iter().all(|t| (t - std::f64::consts::FRAC_PI_2).abs() < 1e-15));
        // Πᵢ|σx = +1⟩ ⊗ |0⟩: the σx term −Δ/2 σx makes σx = +1 the ground state
        let amp = (1.0 / 8f64).sqrt();
        for q in 0..8 {
            assert!((a.vector[q * 11] - amp).abs() < 1e-15);
        }
        assert!(matches!(build_ansatz(&spec, Branch::Antisymmetric), Err(Error::Numerical(_))));
    }

    #[test]
    fn left_branch_prefers_negative_displacement() {
        let spec = uniform_spec(4, 4.0, 30);
        let h = build_hamiltonian(&spec);
        let left = build_ansatz(&spec, Branch::Left).unwrap();
        assert!(left.x_left < 0.0);
        // Left-branch spins (mostly |L⟩, σz = +1) placed at ±x₀
        let at = |x: f64| {
            let e = spec.ensemble();
            let halves: Vec<(f64, f64)> = left
                .theta_primes
                .iter()
                .map(|t| ((0.5 * t).cos(), (0.5 * t).sin()))
                .collect();
            let fock = displaced_vacuum(x, spec.fock_cutoff()).unwrap();
            let mut v = DVector::zeros(spec.dimension());
            for q in 0..spec.qubit_states() {
                let amp: f64 = (0..e.len()).map(|i| if q >> i & 1 == 0 { halves[i].0 } else { halves[i].1 }).product();
                for (n, c) in fock.iter().enumerate() {
                    v[q * spec.fock_levels() + n] = amp * c;
                }
            }
            v.dot(&(&h * &v))
        };
        assert!(at(left.x_left) < at(-left.x_left));
        assert!((ansatz_energy(&h, &left) - at(left.x_left)).abs() < 1e-12);
    }

    #[test]
    fn variational_and_superposition() {
        let spec = uniform_spec(4, 4.0, 30);
        let h = build_hamiltonian(&spec);
        let ed = lowest_eigenpairs(&spec, 2).unwrap();
        assert!(ed.converged);
        let mut overlaps = Vec::new();
        for b in Branch::ALL {
            let a = build_ansatz(&spec, b).unwrap();
            assert!((a.vector.norm() - 1.0).abs() < 1e-12);
            assert!(ansatz_energy(&h, &a) >= ed.energies[0]);
            overlaps.push(overlap(&a, ed.ground_state()));
        }
        assert!(overlaps[2] > overlaps[0]);
        // the antisymmetric branch has the opposite parity of the ground state
        let anti = build_ansatz(&spec, Branch::Antisymmetric).unwrap();
        assert!(overlap(&anti, &ed.states[1]) > overlap(&anti, ed.ground_state()));
    }

    #[test]
    fn symmetry_breaking_selects_branch() {
        let spec = uniform_spec(4, 4.0, 30);
        let opts = |eta| EdOptions { symmetry_breaking: eta, check_convergence: false };
        let up = lowest_eigenpairs_with(&spec, 2, opts(0.05)).unwrap();
        let down = lowest_eigenpairs_with(&spec, 2, opts(-0.05)).unwrap();
        assert!(up.x_mean > 0.5);
        assert!((up.x_mean + down.x_mean).abs() < 1e-9);
    }

    #[test]
    fn gap_closes_with_n() {
        let gaps = gap_vs_n(3.0, &[2, 3, 4, 5], 1.0, 1.0, 30).unwrap();
        assert!(gaps.windows(2).all(|w| w[1].1 < w[0].1), "{gaps:?}");
        let normal = gap_vs_n(0.5, &[2, 3, 4, 5], 1.0, 1.0, 20).unwrap();
        assert!(normal.iter().all(|(_, g)| *g > 0.5 * (1.0 - 0.5) && *g < 2.0));
    }
}
