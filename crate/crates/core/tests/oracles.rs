//! Values derived by hand or from independent constructions, checked
//! against the library.

use std::sync::Arc;

use cascade_core::dynamics::{
    build_effective_liouvillian, build_hamiltonian, build_liouvillian, initial_state, measure,
    stationary_limit, steady_state, SteadyOptions,
};
use cascade_core::entanglement::{
    analytic_negativity_n2, covariance_matrix, ppt_report, stationary_n2,
};
use cascade_core::subradiance::{
    analytic_p1_n2, hyp2f1_terminating, kinetic_energy, p_from_epsilon, subradiant_state,
};
use cascade_core::{
    CascadeParams, DarkPair, DensityMatrix, FockBasis, Occupation, ThermalReference,
};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol:e})");
}

#[test]
fn coupling_matrix_element_magnitude() {
    // <2,0,0,0| a S+ |1,1,0,1>: a gives 1, c0† c1 gives sqrt(2) sqrt(1).
    let basis = FockBasis::cascade(2, 4).unwrap();
    let h = build_hamiltonian(&basis, &CascadeParams::new(1.0, 0.4, 1.0).unwrap()).unwrap();
    let i = basis.index_of(&Occupation::new(2, 0, 0, 0)).unwrap();
    let j = basis.index_of(&Occupation::new(1, 1, 0, 1)).unwrap();
    close(h[(i, j)].norm(), 2f64.sqrt(), 1e-14);
    close(h[(i, j)].re, 0.0, 1e-14);
}

#[test]
fn bad_cavity_formula_values() {
    // 2 (3/4)^2 / (9/4 + 2 (3/4)^2) = (9/8) / (27/8).
    close(analytic_p1_n2(0.5), 1.0 / 3.0, 1e-15);
    close(analytic_p1_n2(1.0), 0.0, 1e-15);
    close(analytic_p1_n2(0.0), 1.0, 1e-15);
}

#[test]
fn effective_equation_reproduces_bad_cavity_formula() {
    let atomic = Arc::new(FockBasis::atomic(2).unwrap());
    for eps in [0.3, 0.5, 2.0] {
        let params = CascadeParams::new(1.0, eps, 10.0).unwrap();
        let l = build_effective_liouvillian(atomic.clone(), &params).unwrap();
        let rho0 = DensityMatrix::fock(atomic.clone(), Occupation::atomic(2, 0, 0)).unwrap();
        let lim = stationary_limit(&l, &rho0).unwrap();
        let obs = measure(&lim.state, &DarkPair::new(2, eps).unwrap()).unwrap();
        close(obs.p1, analytic_p1_n2(eps), 1e-10);
    }
}

#[test]
fn full_dynamics_approaches_formula_as_kappa_grows() {
    // The deviation from the bad-cavity formula falls like (g/kappa)^2.
    let eps = 0.5;
    let dev = |kappa: f64| {
        let basis = Arc::new(FockBasis::cascade(2, 4).unwrap());
        let params = CascadeParams::new(1.0, eps, kappa).unwrap();
        let l = build_liouvillian(basis.clone(), &params).unwrap();
        let rho0 = initial_state(basis).unwrap();
        let s = steady_state(&l, &rho0, &SteadyOptions::for_generator(&l, 1e4)).unwrap();
        let p1 = measure(&s.state, &DarkPair::new(2, eps).unwrap())
            .unwrap()
            .p1;
        p1 - analytic_p1_n2(eps)
    };
    let (d10, d20) = (dev(10.0), dev(20.0));
    let ratio = d10 / d20;
    assert!(
        (3.5..4.5).contains(&ratio),
        "ratio {ratio}, deviations {d10:e} {d20:e}"
    );
}

#[test]
fn negative_eigenvalue_closed_form_value() {
    // -(sqrt2/2)(1/2)(9/16) / ((9/16)(9/4)) = -sqrt2/9.
    let cf = analytic_negativity_n2(0.5).unwrap();
    close(cf.closed_form, -2f64.sqrt() / 9.0, 1e-15);
    let numeric = ppt_report(&stationary_n2(0.5).unwrap())
        .unwrap()
        .min_eigenvalue;
    close(numeric, cf.closed_form, 1e-12);
}

#[test]
fn terminating_series_by_hand() {
    // F(-2, 1/2; 3/2; 2) = 1 - 2(1/2)(2)/(3/2) + (1/2)(3/2)(4)/((3/2)(5/2)) = 7/15.
    close(
        hyp2f1_terminating(2, 0.5, 1.5, 2.0).unwrap(),
        7.0 / 15.0,
        1e-14,
    );
    close(
        hyp2f1_terminating(0, 0.5, 1.5, 2.0).unwrap(),
        1.0,
        0.0 + 1e-300,
    );
}

#[test]
fn kinetic_energy_of_two_atom_state() {
    // Weights 2/3 on |1,0,1> (energy 4) and 1/3 on |0,2,0> (energy 2).
    let s = subradiant_state(2, 1, 1.0).unwrap();
    close(kinetic_energy(&s.basis, &s.amplitudes), 10.0 / 3.0, 1e-14);
}

#[test]
fn large_n_relation_is_continuous() {
    let e = 1.0 / 3f64.sqrt();
    close(p_from_epsilon(40.0, e).unwrap(), 10.0, 1e-12);
    close(p_from_epsilon(40.0, e + 1e-9).unwrap(), 10.0, 1e-6);
    close(p_from_epsilon(40.0, 0.0).unwrap(), 20.0, 1e-12);
    close(p_from_epsilon(40.0, 1.0).unwrap(), 0.0, 1e-12);
}

#[test]
fn thermal_and_fock_variances() {
    close(
        ThermalReference::new([1.0, 1.0, 1.0]).unwrap().purity(),
        1.0 / 27.0,
        1e-15,
    );
    let atomic = Arc::new(FockBasis::atomic(1).unwrap());
    let rho = DensityMatrix::fock(atomic, Occupation::atomic(1, 0, 0)).unwrap();
    let cm = covariance_matrix(&rho).unwrap();
    close(cm.sigma[0][0], 1.5, 1e-14);
    close(cm.sigma[1][1], 1.5, 1e-14);
    close(cm.sigma[2][2], 0.5, 1e-14);
}

#[test]
fn two_and_three_atom_sectors_do_not_mix() {
    // Integration from |N,0,0,0> and the zero-mode projection agree, and
    // the projection finds exactly two reachable stationary states.
    for (atoms, eps, kappa) in [(2, 0.4, 1.0), (3, 0.6, 0.8)] {
        let basis = Arc::new(FockBasis::cascade(atoms, 2 * atoms).unwrap());
        let l = build_liouvillian(basis.clone(), &CascadeParams::new(1.0, eps, kappa).unwrap())
            .unwrap();
        let rho0 = initial_state(basis).unwrap();
        let lim = stationary_limit(&l, &rho0).unwrap();
        assert_eq!(lim.null_dimension, 2);
        let s = steady_state(&l, &rho0, &SteadyOptions::for_generator(&l, 1e4)).unwrap();
        let diff = (lim.state.matrix() - s.state.matrix()).norm();
        assert!(diff < 1e-8, "N = {atoms}: {diff:e}");
    }
}

#[test]
fn eight_atom_transposes_have_finite_spectra() {
    let s = subradiant_state(8, 2, 0.3).unwrap();
    let rho = DensityMatrix::pure(s.basis.clone(), &s.vector()).unwrap();
    let r = ppt_report(&rho).unwrap();
    assert!(r.eigenvalues.iter().flatten().all(|v| v.is_finite()));
    let sum: f64 = r.eigenvalues[2].iter().sum();
    close(sum, 1.0, 1e-12);
}
