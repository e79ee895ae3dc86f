use dicke::meanfield;
use dicke::model::{uniform_ensemble, Ensemble, QubitParams, ThermalSpec};
use dicke::oracle::{self, Branch, EdOptions, HamiltonianSpec};

fn uniform(n: usize, lambda: f64, cutoff: usize) -> HamiltonianSpec {
    let g = (lambda / (4.0 * n as f64)).sqrt();
    HamiltonianSpec::new(uniform_ensemble(n, 1.0, 1.0, 0.0, g).unwrap(), cutoff).unwrap()
}

#[test]
fn cutoff_ladder_is_variational() {
    let e = uniform_ensemble(3, 1.0, 1.0, 0.0, (2.0f64 / 12.0).sqrt()).unwrap();
    let mut prev = f64::INFINITY;
    for m in [10, 20, 30, 40] {
        let r = oracle::lowest_eigenpairs(&HamiltonianSpec::new(e.clone(), m).unwrap(), 2).unwrap();
        assert!(r.energies[0] <= prev + 1e-12);
        assert!(r.energies.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.parity.abs() <= 1.0 + 1e-10);
        prev = r.energies[0];
    }
}

#[test]
fn small_cutoff_reports_unconverged() {
    let r = oracle::lowest_eigenpairs(&uniform(3, 4.0, 3), 2).unwrap();
    assert!(!r.converged);
    let r = oracle::lowest_eigenpairs(&uniform(3, 4.0, 40), 2).unwrap();
    assert!(r.converged);
}

#[test]
fn quadrature_fluctuations_track_mean_field() {
    for lambda in [0.1, 0.3, 0.5] {
        let r = oracle::lowest_eigenpairs(&uniform(4, lambda, 30), 2).unwrap();
        assert!(r.x_sq_mean > 0.125 && r.x_sq_mean < 0.5, "lambda {lambda}: {}", r.x_sq_mean);
    }
    for lambda in [3.0, 4.0] {
        let spec = uniform(5, lambda, 30);
        let opts = EdOptions {
            symmetry_breaking: 0.0,
            check_convergence: false,
        };
        let r = oracle::lowest_eigenpairs_with(&spec, 2, opts).unwrap();
        let x0 = meanfield::solve(spec.ensemble(), &ThermalSpec::ground()).unwrap().x0;
        assert!(r.x_mean.abs() <= 1e-8);
        assert!(r.x_sq_mean.sqrt() > 0.5 * x0);
        assert!(r.x_sq_mean > x0 * x0 * 0.5, "lambda {lambda}: {} vs {}", r.x_sq_mean, x0 * x0);
    }
}

#[test]
fn paired_bias_keeps_zero_displacement() {
    // ε = ±e on otherwise identical pairs: parity times pair exchange is a symmetry
    let q = |eps: f64| QubitParams::new(1.0, eps, 0.4).unwrap();
    let e = Ensemble::new(1.0, vec![q(0.3), q(-0.3), q(0.8), q(-0.8)]).unwrap();
    let (shift, _) = meanfield::balance_bias(&e).unwrap();
    assert_eq!(shift, 0.0);
    let r = oracle::lowest_eigenpairs(&HamiltonianSpec::new(e, 30).unwrap(), 2).unwrap();
    assert!(r.x_mean.abs() <= 1e-8, "{}", r.x_mean);
}

#[test]
fn symmetry_breaking_field_selects_mean_field_sign() {
    let spec = uniform(4, 4.0, 30);
    let x0 = meanfield::solve(spec.ensemble(), &ThermalSpec::ground()).unwrap().x0;
    let r = oracle::lowest_eigenpairs_with(
        &spec,
        2,
        EdOptions {
            symmetry_breaking: 0.1,
            check_convergence: true,
        },
    )
    .unwrap();
    assert!(r.x_mean > 0.5 * x0, "{} vs {x0}", r.x_mean);
    // the splitting is tiny compared with the field, so it barely matters
    let weak = oracle::lowest_eigenpairs_with(
        &spec,
        2,
        EdOptions {
            symmetry_breaking: 1e-6,
            check_convergence: false,
        },
    )
    .unwrap();
    assert!(weak.x_mean > 0.0);
}

#[test]
fn ansatz_bounds_with_disorder() {
    let q = |d: f64, eps: f64, g: f64| QubitParams::new(d, eps, g).unwrap();
    let e = Ensemble::new(1.1, vec![q(1.0, 0.2, 0.5), q(0.8, -0.1, 0.45), q(1.2, 0.05, 0.6)]).unwrap();
    let (_, e) = meanfield::balance_bias(&e).unwrap();
    let spec = HamiltonianSpec::new(e, 40).unwrap();
    let h = oracle::build_hamiltonian(&spec);
    let ed = oracle::lowest_eigenpairs(&spec, 2).unwrap();
    for b in Branch::ALL {
        if let Ok(a) = oracle::build_ansatz(&spec, b) {
            assert!((a.vector.norm() - 1.0).abs() < 1e-12);
            assert!(oracle::ansatz_energy(&h, &a) >= ed.energies[0]);
        }
    }
}

#[test]
fn gap_in_normal_phase_stays_open() {
    let gaps = oracle::gap_vs_n(0.5, &[2, 3, 4, 5], 1.0, 1.0, 20).unwrap();
    let scale = 1.0 - 0.5;
    for (_, g) in &gaps {
        assert!(*g > 0.5 * scale && *g < 2.0, "{gaps:?}");
    }
    let closing = oracle::gap_vs_n(3.0, &[2, 3, 4, 5], 1.0, 1.0, 30).unwrap();
    let logs: Vec<f64> = closing.iter().map(|(_, g)| g.ln()).collect();
    // log-gap roughly linear in N: second differences small against first differences
    for w in logs.windows(3) {
        let first = w[1] - w[0];
        let second = w[2] - 2.0 * w[1] + w[0];
        assert!(first < 0.0);
        assert!(second.abs() < 0.5 * first.abs(), "{logs:?}");
    }
}
