//! Cross-checks between independent computations, grouped into the
//! acceptance criteria. Each check records what was measured against which
//! tolerance so a failure can be read without rerunning anything.

use std::sync::Arc;
use std::time::Instant;

use cascade_core::dynamics::{
    build_liouvillian, evolve, initial_state, steady_state, EvolveOptions, Observer, SteadyOptions,
};
use cascade_core::entanglement::{
    analytic_negativity_n2, covariance_matrix, cv_ppt_test, nong_direct, nong_measure,
    nong_stationary, nong_subradiant_closed_form, nong_subradiant_direct, overlaps_closed_form,
    overlaps_direct, ppt_report, reference_gaussian, stationary_n2, NEGATIVITY_TOL,
};
use cascade_core::fock::partial_trace;
use cascade_core::subradiance::{
    analytic_p1_n2, delta_p, epsilon_pair, p_from_epsilon, qubit_pair, subradiant_state,
    subradiant_state_n3, EPSILON_MAX,
};
use cascade_core::{
    CascadeParams, DarkPair, DensityMatrix, FockBasis, Mode, SubradiantState, ThermalReference,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{GridSpec, DEFAULT_GRID_POINTS};
use crate::experiments::{
    nong_large_n_point, stationary_point, StationaryPoint, NONG_EPSILON_FLOOR,
};

/// Bad-cavity `P_1` agreement.
pub const TOL_P1_BAD_CAVITY: f64 = 1e-3;
/// Wall-clock budget per bad-cavity point, seconds.
pub const RUNTIME_BUDGET: f64 = 60.0;
/// Numeric vs closed-form negative PT eigenvalue.
pub const TOL_NEGATIVITY: f64 = 1e-8;
/// A negativity below this counts as entanglement in the N = 3 state.
pub const NEGATIVITY_THRESHOLD: f64 = -1e-6;
/// Agreement of the three partial-transpose minima.
pub const TOL_SLOT_AGREEMENT: f64 = 1e-10;
/// `S⁻|sr> = 0`, `L(rho) = 0` and the overlap of equivalent dark states.
pub const TOL_DARK: f64 = 1e-12;
/// Closed-form nonGaussianity and overlaps vs direct evaluation.
pub const TOL_NONG: f64 = 1e-10;
/// Neglected thermal population when τ is built as a finite matrix.
pub const TOL_THERMAL_TAIL: f64 = 1e-10;
/// "Vanishes" for the stationary `P_1`.
pub const TOL_VANISH: f64 = 1e-3;
/// Large-epsilon two-atom `P_1` bound.
pub const P1_LARGE_EPSILON: f64 = 0.9;
/// `eps0 eps1 = 1` and orthonormality of the qubit pair.
pub const TOL_PAIR: f64 = 1e-12;
/// Round trip `p -> (eps0, eps1) -> p`.
pub const TOL_ROUND_TRIP: f64 = 1e-10;
/// Trace drift allowed over the longest trajectory.
pub const TOL_TRACE_DRIFT: f64 = 1e-6;

/// Simulated-time limit for the bad-cavity integrations, which must converge
/// without the projection fallback.
const BAD_CAVITY_HORIZON: f64 = 2.0e4;
/// Simulated-time limit before a sweep point falls back to the projection.
const HORIZON: f64 = crate::config::DEFAULT_HORIZON;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// `NaN` for checks that only report a value.
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `measured < tolerance`.
    fn below(
        name: impl Into<String>,
        measured: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            passed: measured < tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    /// Passes when `measured > tolerance`.
    fn above(
        name: impl Into<String>,
        measured: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            passed: measured > tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    fn holds(
        name: impl Into<String>,
        passed: bool,
        measured: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            passed,
            measured,
            tolerance: f64::NAN,
            detail: detail.into(),
        }
    }

    fn report(name: impl Into<String>, measured: f64, detail: impl Into<String>) -> Self {
        Self::holds(name, true, measured, detail)
    }

    fn error(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Check {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: err.to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// Single-line summary, e.g. `PASS 4 dark states: 3/3 checks`.
    pub fn summary(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{status} criterion {}: {} ({ok}/{} checks)",
            self.id,
            self.title,
            self.checks.len()
        );
        for c in self.checks.iter().filter(|c| !c.passed) {
            line.push_str(&format!(
                "; failed {} (measured {:e}, tolerance {:e}: {})",
                c.name, c.measured, c.tolerance, c.detail
            ));
        }
        line
    }
}

pub fn suite() -> Vec<Criterion> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ]
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Two-atom stationary `P_1` in the bad-cavity regime from integration alone.
pub fn criterion_1() -> Criterion {
    let kappa = 10.0;
    let eps = [0.1, 0.3, 0.5, 0.7, 0.9, 1.2, 2.0];
    let checks = eps
        .par_iter()
        .flat_map_iter(|&e| {
            let start = Instant::now();
            let result = (|| {
                let params = CascadeParams::new(1.0, e, kappa)?;
                let basis = Arc::new(FockBasis::cascade(2, 4)?);
                let l = build_liouvillian(basis.clone(), &params)?;
                let rho0 = initial_state(basis.clone())?;
                let s = steady_state(
                    &l,
                    &rho0,
                    &SteadyOptions::for_generator(&l, BAD_CAVITY_HORIZON),
                )?;
                Observer::new(basis, &DarkPair::new(2, e)?)
                    .map(|o| (o.measure(s.state.matrix()), s.residual))
            })();
            let seconds = start.elapsed().as_secs_f64();
            let name = format!("P1 at eps = {e}");
            match result {
                Ok((obs, residual)) => {
                    let analytic = analytic_p1_n2(e);
                    vec![
                        Check::below(
                            name,
                            (obs.p1 - analytic).abs(),
                            TOL_P1_BAD_CAVITY,
                            format!(
                                "numeric {:.6}, formula {analytic:.6}, residual {residual:.1e}",
                                obs.p1
                            ),
                        ),
                        Check::below(
                            format!("runtime at eps = {e}"),
                            seconds,
                            RUNTIME_BUDGET,
                            "seconds",
                        ),
                    ]
                }
                Err(err) => vec![Check::error(name, err)],
            }
        })
        .collect();
    Criterion {
        id: 1,
        title: "bad-cavity stationary P1 (N = 2, kappa = 10 g)".into(),
        checks,
    }
}

fn default_grid() -> Vec<f64> {
    GridSpec::Range {
        start: 0.0,
        stop: EPSILON_MAX,
        points: DEFAULT_GRID_POINTS,
    }
    .values()
    .expect("valid default grid")
}

/// Numeric negative PT eigenvalue of the two-atom state against the closed form.
pub fn criterion_2() -> Criterion {
    let grid = default_grid();
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&e| -> cascade_core::Result<_> {
            let report = ppt_report(&stationary_n2(e)?)?;
            Ok((e, report.min_eigenvalue, analytic_negativity_n2(e)?))
        })
        .collect();
    let mut checks = Vec::new();
    match rows.into_iter().collect::<cascade_core::Result<Vec<_>>>() {
        Ok(rows) => {
            let (worst_e, worst) = rows
                .iter()
                .map(|(e, num, cf)| (*e, (num - cf.closed_form).abs()))
                .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            checks.push(Check::below(
                format!("max |numeric - closed form| over {} points", rows.len()),
                worst,
                TOL_NEGATIVITY,
                format!("largest at eps = {worst_e:.6}"),
            ));
            let (worst_e, lines) = rows
                .iter()
                .map(|(e, _, cf)| (*e, cf.discrepancy))
                .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            checks.push(Check::report(
                "max difference between the two written forms",
                lines,
                format!("largest at eps = {worst_e:.6}; the moment form is not an identity for the closed form"),
            ));
        }
        Err(err) => checks.push(Check::error("grid evaluation", err)),
    }
    match (
        stationary_n2(1.0).and_then(|r| ppt_report(&r)),
        analytic_negativity_n2(1.0),
    ) {
        (Ok(r), Ok(cf)) => {
            checks.push(Check::below(
                "negativity at eps = 1 (numeric)",
                r.min_eigenvalue.min(0.0).abs(),
                TOL_NEGATIVITY,
                "min PT eigenvalue",
            ));
            checks.push(Check::below(
                "negativity at eps = 1 (closed form)",
                cf.closed_form.abs(),
                TOL_NEGATIVITY,
                "",
            ));
        }
        (Err(e), _) | (_, Err(e)) => checks.push(Check::error("eps = 1", e)),
    }
    Criterion {
        id: 2,
        title: "two-atom negativity closed form".into(),
        checks,
    }
}

fn n3_point(e: f64) -> cascade_core::Result<StationaryPoint> {
    stationary_point(3, 0.8, 1.0, e, 6, HORIZON)
}

/// Every bipartition of the three-atom stationary state is entangled, equally.
pub fn criterion_3() -> Criterion {
    let checks = [0.3, 0.5, 0.8]
        .par_iter()
        .flat_map_iter(|&e| match n3_point(e).and_then(|p| ppt_report(&p.atomic)) {
            Ok(r) => {
                let m = r.min_per_slot;
                let spread = max_abs([m[0] - m[1], m[1] - m[2], m[0] - m[2]]);
                vec![
                    Check::holds(
                        format!("all slots negative at eps = {e}"),
                        m.iter().all(|v| *v < NEGATIVITY_THRESHOLD),
                        m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        format!("minima {m:?}, threshold {NEGATIVITY_THRESHOLD:e}"),
                    ),
                    Check::below(
                        format!("slot agreement at eps = {e}"),
                        spread,
                        TOL_SLOT_AGREEMENT,
                        "",
                    ),
                ]
            }
            Err(err) => vec![Check::error(format!("eps = {e}"), err)],
        })
        .collect();
    Criterion {
        id: 3,
        title: "full inseparability (N = 3, kappa = 0.8 g)".into(),
        checks,
    }
}

fn dark_state_generator_residual(
    atoms: usize,
    state: &SubradiantState,
    e: f64,
) -> cascade_core::Result<f64> {
    let params = CascadeParams::new(1.0, e, 1.0)?;
    let basis = Arc::new(FockBasis::cascade(atoms, 2 * atoms)?);
    let l = build_liouvillian(basis.clone(), &params)?;
    let v = basis.embed(&state.basis, &state.vector(), 0)?;
    let rho = DensityMatrix::pure(basis, &v)?;
    Ok(l.residual(rho.matrix()))
}

/// Dark states are annihilated by `S⁻`, stationary under `L`, and agree
/// between the general and the two-atom construction.
pub fn criterion_4() -> Criterion {
    let eps = [0.2, 0.5, 1.5];
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut errors = Vec::new();
    for atoms in (2..=10).step_by(2) {
        for p in 0..=atoms / 2 {
            for &e in &eps {
                match subradiant_state(atoms, p, e) {
                    Ok(s) => {
                        worst = worst.max(s.lowering_residual());
                        count += 1;
                    }
                    Err(err) => errors.push(format!("N = {atoms}, p = {p}, eps = {e}: {err}")),
                }
            }
        }
    }
    checks.push(Check::below(
        format!("max ||S- |sr>|| over {count} states"),
        worst,
        TOL_DARK,
        errors.join("; "),
    ));
    if !errors.is_empty() {
        checks.push(Check::error("state construction", errors.join("; ")));
    }

    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for atoms in [2, 3] {
        for &e in &eps {
            let pair = DarkPair::new(atoms, e);
            let states = match pair {
                Ok(p) => vec![p.ground, p.excited],
                Err(err) => {
                    errors.push(err.to_string());
                    continue;
                }
            };
            for s in &states {
                match dark_state_generator_residual(atoms, s, e) {
                    Ok(r) => worst = worst.max(r),
                    Err(err) => errors.push(err.to_string()),
                }
            }
        }
    }
    checks.push(Check::below(
        "max ||L(|sr><sr| x |0><0|)|| for N = 2, 3",
        worst,
        TOL_DARK,
        errors.join("; "),
    ));

    let mut worst: f64 = 0.0;
    for &e in &eps {
        match (subradiant_state(2, 1, e), DarkPair::new(2, e)) {
            (Ok(a), Ok(b)) => worst = worst.max(1.0 - a.overlap(&b.excited).abs()),
            (Err(err), _) | (_, Err(err)) => {
                checks.push(Check::error(format!("N = 2 at eps = {e}"), err))
            }
        }
    }
    checks.push(Check::below(
        "1 - |<sr_1|general construction>| for N = 2",
        worst,
        TOL_DARK,
        "",
    ));
    Criterion {
        id: 4,
        title: "dark-state suite".into(),
        checks,
    }
}

/// The covariance-matrix PPT test misses entanglement that the Fock-space
/// test detects.
pub fn criterion_5() -> Criterion {
    let mut checks = Vec::new();
    for (atoms, p) in [(2usize, 1usize), (3, 1), (8, 2)] {
        for e in [0.3, 0.5, 1.5] {
            let state = if atoms == 3 {
                subradiant_state_n3(e)
            } else {
                subradiant_state(atoms, p, e)
            };
            let result = state.and_then(|s| {
                let rho = DensityMatrix::pure(s.basis.clone(), &s.vector())?;
                let cv = cv_ppt_test(&covariance_matrix(&rho)?)?;
                let dv = ppt_report(&rho)?;
                Ok((cv, dv))
            });
            let name = format!("N = {atoms}, p = {p}, eps = {e}");
            match result {
                Ok((cv, dv)) => {
                    let cv_min = cv
                        .min_eigenvalues
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min);
                    checks.push(Check::holds(
                        format!("{name}: CV conditions satisfied"),
                        cv.satisfied.iter().all(|s| *s),
                        cv_min,
                        format!("smallest eigenvalue of the transposed uncertainty matrices: {cv_min:e}"),
                    ));
                    checks.push(Check::holds(
                        format!("{name}: Fock-space negativity"),
                        dv.min_eigenvalue < -NEGATIVITY_TOL,
                        dv.min_eigenvalue,
                        format!("per slot {:?}", dv.min_per_slot),
                    ));
                }
                Err(err) => checks.push(Check::error(name, err)),
            }
        }
    }
    Criterion {
        id: 5,
        title: "covariance-matrix PPT misses the entanglement".into(),
        checks,
    }
}

/// `Tr[rho τ]` with τ cut off at the smallest photon numbers whose neglected
/// population is below the tail tolerance; also returns that population.
fn truncated_overlap(rho: &DensityMatrix, tau: &ThermalReference) -> (f64, f64) {
    let cut = tau.cutoffs(TOL_THERMAL_TAIL);
    let kept: f64 = (0..3)
        .map(|j| 1.0 - tau.y[j].powi(cut[j] as i32 + 1))
        .product();
    let overlap = rho
        .basis()
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| (0..3).all(|j| s.0[j] <= cut[j]))
        .map(|(i, s)| rho.matrix()[(i, i)].re * tau.weight(s))
        .sum();
    (overlap, 1.0 - kept)
}

/// Closed-form nonGaussianity against direct Hilbert-Schmidt evaluation.
pub fn criterion_6() -> Criterion {
    let eps = [0.3, 0.5, 1.5];
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for atoms in [2usize, 4] {
        for p in 0..=atoms / 2 {
            for &e in &eps {
                let pair = nong_subradiant_closed_form(atoms, p, e).and_then(|cf| {
                    Ok((
                        cf,
                        nong_subradiant_direct(&subradiant_state(atoms, p, e)?)?.delta,
                    ))
                });
                match pair {
                    Ok((cf, direct)) => worst = worst.max((cf - direct).abs()),
                    Err(err) => checks.push(Check::error(
                        format!("pure N = {atoms}, p = {p}, eps = {e}"),
                        err,
                    )),
                }
            }
        }
    }
    checks.push(Check::below(
        "pure states, N = 2, 4: |closed form - direct|",
        worst,
        TOL_NONG,
        "",
    ));

    let mut worst_delta: f64 = 0.0;
    let mut worst_overlap: f64 = 0.0;
    let mut worst_tail: f64 = 0.0;
    for atoms in [2usize, 3] {
        for &e in &eps {
            let p1 = if atoms == 2 { analytic_p1_n2(e) } else { 0.4 };
            let result = (|| -> cascade_core::Result<_> {
                let pair = DarkPair::new(atoms, e)?;
                let rho = pair.mixture(p1)?;
                let closed = nong_stationary(atoms, e, p1)?;
                let direct = nong_direct(&rho)?;
                let tau = reference_gaussian(&rho)?;
                let cf = overlaps_closed_form(atoms, e, &tau)?;
                let exact = overlaps_direct(&pair, &tau)?;
                let ground = DensityMatrix::pure(pair.ground.basis.clone(), &pair.ground.vector())?;
                let excited =
                    DensityMatrix::pure(pair.excited.basis.clone(), &pair.excited.vector())?;
                let (tg, tail) = truncated_overlap(&ground, &tau);
                let (te, _) = truncated_overlap(&excited, &tau);
                let overlap_dev = max_abs([
                    cf.ground - tg,
                    cf.excited - te,
                    cf.ground - exact.ground,
                    cf.excited - exact.excited,
                ]);
                Ok(((closed.delta - direct.delta).abs(), overlap_dev, tail))
            })();
            match result {
                Ok((d, o, t)) => {
                    worst_delta = worst_delta.max(d);
                    worst_overlap = worst_overlap.max(o);
                    worst_tail = worst_tail.max(t);
                }
                Err(err) => checks.push(Check::error(
                    format!("stationary N = {atoms}, eps = {e}"),
                    err,
                )),
            }
        }
    }
    checks.push(Check::below(
        "stationary states, N = 2, 3: |closed form - direct|",
        worst_delta,
        TOL_NONG,
        "",
    ));
    checks.push(Check::below(
        "overlaps: closed form vs Tr[rho tau]",
        worst_overlap,
        TOL_NONG,
        "",
    ));
    checks.push(Check::below(
        "thermal truncation tail",
        worst_tail,
        TOL_THERMAL_TAIL,
        "",
    ));

    let thermal = (|| -> cascade_core::Result<(f64, f64)> {
        let tau = ThermalReference::new([0.05, 0.1, 0.02])?;
        let t = tau.truncated_state(tau.cutoffs(TOL_THERMAL_TAIL))?;
        let renormalized =
            DensityMatrix::from_matrix(t.basis().clone(), t.matrix().unscale(t.trace()))?;
        let exact = nong_measure(&renormalized, &tau)?;
        Ok((exact.delta.abs(), nong_direct(&renormalized)?.delta.abs()))
    })();
    match thermal {
        Ok((against_tau, against_own)) => {
            checks.push(Check::below(
                "thermal input against its τ",
                against_tau,
                TOL_NONG,
                "truncated to the tail tolerance",
            ));
            checks.push(Check::below(
                "thermal input against its own reference",
                against_own,
                TOL_NONG,
                "",
            ));
        }
        Err(err) => checks.push(Check::error("thermal input", err)),
    }

    let grid: Vec<f64> = default_grid()
        .into_iter()
        .filter(|e| *e >= NONG_EPSILON_FLOOR)
        .collect();
    let points: cascade_core::Result<Vec<_>> = grid
        .par_iter()
        .map(|&e| nong_large_n_point(50, e))
        .collect();
    match points {
        Ok(points) => {
            let (e_min, min) = points
                .iter()
                .map(|p| (p.epsilon, p.delta))
                .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            checks.push(Check::above(
                format!("N = 50 sweep min delta over {} points", points.len()),
                min,
                0.0,
                format!("at eps = {e_min:.6}"),
            ));
        }
        Err(err) => checks.push(Check::error("N = 50 sweep", err)),
    }
    Criterion {
        id: 6,
        title: "nonGaussianity oracles".into(),
        checks,
    }
}

/// Indices of strict interior local minima.
fn interior_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

fn two_atom_p1(e: f64) -> cascade_core::Result<f64> {
    Ok(stationary_point(2, 10.0, 1.0, e, 4, HORIZON)?
        .observables
        .p1)
}

/// Figure shapes.
pub fn criterion_7() -> Criterion {
    let mut checks = Vec::new();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let n3: cascade_core::Result<Vec<_>> = grid.par_iter().map(|&e| n3_point(e)).collect();
    match n3 {
        Ok(points) => {
            let p1: Vec<f64> = points.iter().map(|p| p.observables.p1).collect();
            let (i_max, _) = p1
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |a, (i, v)| if *v > a.1 { (i, *v) } else { a },
                );
            let e_max = grid[i_max];
            checks.push(Check::holds(
                "N = 3: P1 maximum is interior and in [0.4, 0.6]",
                i_max > 0 && i_max + 1 < grid.len() && (0.4..=0.6).contains(&e_max),
                e_max,
                format!("max P1 = {:.6}", p1[i_max]),
            ));
            checks.push(Check::below("N = 3: P1(0)", p1[0].abs(), TOL_VANISH, ""));
            checks.push(Check::below(
                "N = 3: P1(1)",
                p1[grid.len() - 1].abs(),
                TOL_VANISH,
                "",
            ));
            let neg: cascade_core::Result<Vec<f64>> = points
                .iter()
                .map(|p| ppt_report(&p.atomic).map(|r| r.min_eigenvalue))
                .collect();
            match neg {
                Ok(neg) => {
                    let minima = interior_minima(&neg);
                    checks.push(Check::holds(
                        "N = 3: one interior minimum of the negativity on (0, 1)",
                        minima.len() == 1,
                        minima.len() as f64,
                        format!(
                            "at eps = {:?}",
                            minima.iter().map(|&i| grid[i]).collect::<Vec<_>>()
                        ),
                    ));
                }
                Err(err) => checks.push(Check::error("N = 3 negativity", err)),
            }
        }
        Err(err) => checks.push(Check::error("N = 3 sweep", err)),
    }

    let two: Vec<_> = [0.0, 1.0, 3.0]
        .par_iter()
        .map(|&e| two_atom_p1(e))
        .collect();
    match two.into_iter().collect::<cascade_core::Result<Vec<_>>>() {
        Ok(v) => {
            checks.push(Check::below(
                "N = 2: |1 - P1(0)|",
                (1.0 - v[0]).abs(),
                TOL_VANISH,
                "kappa = 10 g",
            ));
            checks.push(Check::below(
                "N = 2: P1(1)",
                v[1].abs(),
                TOL_VANISH,
                "kappa = 10 g",
            ));
            checks.push(Check::above(
                "N = 2: P1(3)",
                v[2],
                P1_LARGE_EPSILON,
                format!(
                    "kappa = 10 g; bad-cavity formula gives {:.6}",
                    analytic_p1_n2(3.0)
                ),
            ));
        }
        Err(err) => checks.push(Check::error("N = 2 points", err)),
    }

    let neg2: cascade_core::Result<Vec<f64>> = grid
        .par_iter()
        .map(|&e| ppt_report(&stationary_n2(e)?).map(|r| r.min_eigenvalue))
        .collect();
    match neg2 {
        Ok(neg) => {
            let minima = interior_minima(&neg);
            checks.push(Check::holds(
                "N = 2: one interior minimum of the negativity on (0, 1)",
                minima.len() == 1,
                minima.len() as f64,
                format!(
                    "at eps = {:?}",
                    minima.iter().map(|&i| grid[i]).collect::<Vec<_>>()
                ),
            ));
        }
        Err(err) => checks.push(Check::error("N = 2 negativity", err)),
    }
    Criterion {
        id: 7,
        title: "figure shapes".into(),
        checks,
    }
}

/// The two dark states sharing an index and their qubit superpositions.
pub fn criterion_8() -> Criterion {
    let atoms = 50usize;
    let mut checks = Vec::new();
    for p in [5usize, 10] {
        let result = (|| -> cascade_core::Result<_> {
            let (e0, e1) = epsilon_pair(atoms as f64, p as f64)?;
            let trip = max_abs([
                p_from_epsilon(atoms as f64, e0)? - p as f64,
                p_from_epsilon(atoms as f64, e1)? - p as f64,
            ]);
            let pair = qubit_pair(atoms, p)?;
            let ortho = max_abs([
                pair.phi_plus.norm_squared() - 1.0,
                pair.phi_minus.norm_squared() - 1.0,
                pair.phi_plus.dot(&pair.phi_minus),
            ]);
            Ok(((e0 * e1 - 1.0).abs(), trip, ortho, delta_p(&pair)?))
        })();
        match result {
            Ok((product, trip, ortho, report)) => {
                checks.push(Check::below(
                    format!("p = {p}: |eps0 eps1 - 1|"),
                    product,
                    TOL_PAIR,
                    "",
                ));
                checks.push(Check::below(
                    format!("p = {p}: p round trip"),
                    trip,
                    TOL_ROUND_TRIP,
                    "",
                ));
                checks.push(Check::below(
                    format!("p = {p}: phi orthonormality"),
                    ortho,
                    TOL_PAIR,
                    "",
                ));
                checks.push(Check::report(
                    format!("p = {p}: splitting"),
                    report.delta_direct,
                    format!(
                        "direct {:.9}, closed-form expression {:.9}, difference {:.3e}",
                        report.delta_direct, report.delta_printed, report.discrepancy
                    ),
                ));
            }
            Err(err) => checks.push(Check::error(format!("p = {p}"), err)),
        }
    }
    Criterion {
        id: 8,
        title: "p-degeneracy (N = 50)".into(),
        checks,
    }
}

/// Trace drift and positivity over the longest preset trajectory.
pub fn integrator_health() -> Criterion {
    let result = (|| -> cascade_core::Result<_> {
        let params = CascadeParams::new(1.0, 0.5, 0.3)?;
        let basis = Arc::new(FockBasis::cascade(3, 6)?);
        let l = build_liouvillian(basis.clone(), &params)?;
        let rho0 = initial_state(basis.clone())?;
        let observer = Observer::new(basis, &DarkPair::new(3, 0.5)?)?;
        let opts = EvolveOptions {
            t_end: 200.0,
            dt: params.default_dt(),
            sample_interval: 1.0,
        };
        let traj = evolve(&l, &rho0, &opts, &observer)?;
        let reduced = partial_trace(&traj.final_state, &Mode::ATOMIC)?;
        Ok((
            traj.max_trace_drift,
            traj.min_eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            reduced.trace(),
        ))
    })();
    let checks = match result {
        Ok((drift, min_eig, trace)) => vec![
            Check::below("trace drift, N = 3, t = 200/g", drift, TOL_TRACE_DRIFT, ""),
            Check::above(
                "smallest eigenvalue along the trajectory",
                min_eig,
                -TOL_TRACE_DRIFT,
                "",
            ),
            Check::below(
                "trace of the reduced final state",
                (trace - 1.0).abs(),
                TOL_TRACE_DRIFT,
                "",
            ),
        ],
        Err(err) => vec![Check::error("N = 3 trajectory", err)],
    };
    Criterion {
        id: 0,
        title: "integrator health".into(),
        checks,
    }
}
