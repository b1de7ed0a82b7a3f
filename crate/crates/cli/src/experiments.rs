//! The experiments behind each subcommand. Every function returns the files
//! to write plus diagnostics for `run.json`; nothing here touches the disk.

use std::sync::Arc;

use cascade_core::dynamics::{
    build_liouvillian, evolve, fmt_sig, initial_state, stationary_limit, steady_state,
    top_layer_population, EvolveOptions, Observer, SteadyOptions, TRUNCATION_LIMIT,
};
use cascade_core::entanglement::{
    analytic_negativity_n2, nong_direct, nong_stationary, nong_subradiant_closed_form, ppt_report,
};
use cascade_core::fock::partial_trace;
use cascade_core::subradiance::{analytic_p1_n2, delta_p, p_from_epsilon, qubit_pair};
use cascade_core::{CascadeParams, DarkPair, DensityMatrix, Error, FockBasis, Mode, Observables};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Case, Experiment, Plan};
use crate::validation;
use crate::CliError;

/// The closed-form nonGaussianity is not trusted below this epsilon.
pub const NONG_EPSILON_FLOOR: f64 = 1e-3;

/// One output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Everything an experiment produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub diagnostics: Value,
    /// Checks that did not hold; a non-empty list means exit status 1.
    pub failures: Vec<String>,
}

pub fn run(plan: &Plan) -> Result<Outcome, CliError> {
    match plan.experiment {
        Experiment::Evolve => run_evolve(plan),
        Experiment::SteadySweep => run_steady_sweep(plan),
        Experiment::NegativitySweep => run_negativity_sweep(plan),
        Experiment::NongSweep => run_nong_sweep(plan),
        Experiment::QubitPair => run_qubit_pair(plan),
        Experiment::Validate => run_validate(plan),
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Starting from `|N,0,0,0>`, the conserved `2 n0 + n1 + n` caps the photon
/// number at `2N`, so only smaller cutoffs truncate anything.
fn truncated(plan: &Plan, case: &Case) -> bool {
    case.n_max(plan) < 2 * case.atoms
}

fn file_name(plan: &Plan, case: &Case, ext: &str) -> String {
    format!("{}_N{}.{ext}", plan.experiment.name(), case.atoms)
}

pub fn run_evolve(plan: &Plan) -> Result<Outcome, CliError> {
    let results: Vec<_> = plan
        .cases
        .par_iter()
        .map(|case| -> Result<_, CliError> {
            let epsilon = case.epsilon.expect("validated");
            let params = CascadeParams::new(plan.g, epsilon, case.kappa()?)?;
            let basis = Arc::new(FockBasis::cascade(case.atoms, case.n_max(plan))?);
            let l = build_liouvillian(basis.clone(), &params)?;
            let rho0 = initial_state(basis.clone())?;
            let observer = Observer::new(basis, &DarkPair::new(case.atoms, epsilon)?)?;
            let opts = EvolveOptions {
                t_end: plan.t_end,
                dt: plan.dt.unwrap_or_else(|| params.default_dt()),
                sample_interval: plan.sample_interval,
            };
            let traj = evolve(&l, &rho0, &opts, &observer)?;
            Ok((case, opts, traj))
        })
        .collect::<Result<_, _>>()?;

    let mut artifacts = Vec::new();
    let mut diag = Vec::new();
    let mut failures = Vec::new();
    for (case, opts, traj) in results {
        let top = top_layer_population(&traj.final_state);
        if truncated(plan, case) && top > TRUNCATION_LIMIT {
            failures.push(format!(
                "N = {}: population {top:e} in the top photon layer exceeds {TRUNCATION_LIMIT:e}; raise n_max",
                case.atoms
            ));
        }
        let last = traj
            .observables
            .last()
            .copied()
            .expect("at least one sample");
        let min_eigenvalue = traj
            .min_eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        diag.push(json!({
            "N": case.atoms,
            "kappa": case.kappa,
            "epsilon": case.epsilon,
            "dt": opts.dt,
            "samples": traj.times.len(),
            "max_trace_drift": traj.max_trace_drift,
            "min_eigenvalue": min_eigenvalue,
            "top_layer_population": top,
            "truncation_exact": !truncated(plan, case),
            "final": last,
        }));
        artifacts.push(Artifact {
            name: file_name(plan, case, "csv"),
            contents: traj.to_csv(),
        });
    }
    Ok(Outcome {
        artifacts,
        diagnostics: json!({ "runs": diag }),
        failures,
    })
}

/// How a stationary state was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Integration,
    /// Zero-mode projection, used when integration runs past the horizon.
    Projection,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Integration => "integration",
            Method::Projection => "projection",
        }
    }
}

/// Stationary state reached from `|N,0,0,0>`.
#[derive(Clone, Debug)]
pub struct StationaryPoint {
    pub epsilon: f64,
    pub observables: Observables,
    /// Photon-traced state on the atomic basis.
    pub atomic: DensityMatrix,
    pub residual: f64,
    pub method: Method,
    pub top_layer: f64,
    pub note: Option<String>,
}

/// Integrates to stationarity, falling back to the zero-mode projection if
/// the residual is still above tolerance at `horizon`.
pub fn stationary_point(
    atoms: usize,
    kappa: f64,
    g: f64,
    epsilon: f64,
    n_max: usize,
    horizon: f64,
) -> cascade_core::Result<StationaryPoint> {
    let params = CascadeParams::new(g, epsilon, kappa)?;
    let basis = Arc::new(FockBasis::cascade(atoms, n_max)?);
    let l = build_liouvillian(basis.clone(), &params)?;
    let rho0 = initial_state(basis.clone())?;
    let (state, residual, method, note) = match steady_state(
        &l,
        &rho0,
        &SteadyOptions::for_generator(&l, horizon),
    ) {
        Ok(s) => (s.state, s.residual, Method::Integration, None),
        Err(Error::NotConverged { horizon, residual }) => {
            let lim = stationary_limit(&l, &rho0)?;
            let note = format!(
                "integration residual {residual:.3e} at t = {horizon}; used zero-mode projection (gap {:.3e})",
                lim.gap
            );
            (lim.state, lim.residual, Method::Projection, Some(note))
        }
        Err(e) => return Err(e),
    };
    let observables =
        Observer::new(basis, &DarkPair::new(atoms, epsilon)?)?.measure(state.matrix());
    let atomic = partial_trace(&state, &Mode::ATOMIC)?;
    Ok(StationaryPoint {
        epsilon,
        observables,
        atomic,
        residual,
        method,
        top_layer: top_layer_population(&state),
        note,
    })
}

fn stationary_for(plan: &Plan, case: &Case, epsilon: f64) -> cascade_core::Result<StationaryPoint> {
    let kappa = case.kappa.unwrap_or(f64::NAN);
    stationary_point(
        case.atoms,
        kappa,
        plan.g,
        epsilon,
        case.n_max(plan),
        plan.horizon,
    )
}

fn point_record(case: &Case, p: &StationaryPoint) -> Value {
    json!({
        "N": case.atoms,
        "epsilon": p.epsilon,
        "method": p.method.name(),
        "residual": p.residual,
        "top_layer_population": p.top_layer,
        "note": p.note,
    })
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn run_steady_sweep(plan: &Plan) -> Result<Outcome, CliError> {
    let mut artifacts = Vec::new();
    let mut diag = Vec::new();
    let mut failures = Vec::new();
    for case in &plan.cases {
        let points: Vec<_> = plan
            .grid
            .par_iter()
            .map(|&e| (e, stationary_for(plan, case, e)))
            .collect();
        let mut rows = Vec::new();
        let mut records = Vec::new();
        let mut worst_residual: f64 = 0.0;
        let mut worst_top: f64 = 0.0;
        for (e, point) in &points {
            let analytic = if case.atoms == 2 {
                fmt_sig(analytic_p1_n2(*e))
            } else {
                String::new()
            };
            match point {
                Ok(p) => {
                    worst_residual = worst_residual.max(p.residual);
                    worst_top = worst_top.max(p.top_layer);
                    let o = &p.observables;
                    let error = p.note.clone().unwrap_or_default().replace(',', ";");
                    rows.push(vec![
                        fmt_sig(*e),
                        fmt_sig(o.p1),
                        fmt_sig(o.p0),
                        fmt_sig(o.nph),
                        analytic,
                        fmt_sig(p.residual),
                        p.method.name().into(),
                        error,
                    ]);
                    records.push(point_record(case, p));
                }
                Err(err) => {
                    let nan = fmt_sig(f64::NAN);
                    let msg = err.to_string().replace(',', ";");
                    rows.push(vec![
                        fmt_sig(*e),
                        nan.clone(),
                        nan.clone(),
                        nan.clone(),
                        analytic,
                        nan,
                        "failed".into(),
                        msg.clone(),
                    ]);
                    records.push(json!({ "N": case.atoms, "epsilon": e, "error": msg }));
                    failures.push(format!("N = {}, epsilon = {e}: {err}", case.atoms));
                }
            }
        }
        if truncated(plan, case) && worst_top > TRUNCATION_LIMIT {
            failures.push(format!(
                "N = {}: top photon layer population {worst_top:e} exceeds {TRUNCATION_LIMIT:e}",
                case.atoms
            ));
        }
        artifacts.push(Artifact {
            name: file_name(plan, case, "csv"),
            contents: csv("epsilon,P1,P0,Nph,P1_analytic,residual,method,error", rows),
        });
        diag.push(json!({
            "N": case.atoms,
            "kappa": case.kappa,
            "max_residual": worst_residual,
            "max_top_layer_population": worst_top,
            "truncation_exact": !truncated(plan, case),
            "points": records,
        }));
    }
    Ok(Outcome {
        artifacts,
        diagnostics: json!({ "sweeps": diag }),
        failures,
    })
}

/// One row of the entanglement sweeps.
#[derive(Clone, Debug, Serialize)]
pub struct EntanglementRow {
    pub epsilon: f64,
    pub p1: f64,
    pub min_per_slot: [f64; 3],
    pub analytic: Option<f64>,
    pub delta: f64,
    /// Closed-form stationary δ for comparison with `delta`.
    pub delta_closed_form: f64,
    pub method: Option<Method>,
    pub residual: f64,
    pub note: Option<String>,
}

fn entanglement_row(
    plan: &Plan,
    case: &Case,
    epsilon: f64,
) -> cascade_core::Result<EntanglementRow> {
    let (state, p1, method, residual, note) = if plan.uses_dynamics(case) {
        let p = stationary_for(plan, case, epsilon)?;
        (
            p.atomic,
            p.observables.p1,
            Some(p.method),
            p.residual,
            p.note,
        )
    } else {
        let p1 = analytic_p1_n2(epsilon);
        (
            DarkPair::new(case.atoms, epsilon)?.mixture(p1)?,
            p1,
            None,
            0.0,
            None,
        )
    };
    let report = ppt_report(&state)?;
    let analytic = if case.atoms == 2 && !plan.uses_dynamics(case) {
        Some(analytic_negativity_n2(epsilon)?.closed_form)
    } else {
        None
    };
    let delta = nong_direct(&state)?.delta;
    let delta_closed_form = nong_stationary(case.atoms, epsilon, p1.clamp(0.0, 1.0))?.delta;
    Ok(EntanglementRow {
        epsilon,
        p1,
        min_per_slot: report.min_per_slot,
        analytic,
        delta,
        delta_closed_form,
        method,
        residual,
        note,
    })
}

pub const ENTANGLEMENT_HEADER: &str =
    "epsilon,P1,A_min_slot0,A_min_slot1,A_min_slot2,A_analytic,delta";

fn entanglement_sweep(plan: &Plan) -> Result<Outcome, CliError> {
    let mut artifacts = Vec::new();
    let mut diag = Vec::new();
    let mut failures = Vec::new();
    for case in &plan.cases {
        if plan.experiment == Experiment::NongSweep && case.atoms >= 4 {
            let (artifact, d) = nong_large_n(plan, case)?;
            artifacts.push(artifact);
            diag.push(d);
            continue;
        }
        let rows: Vec<_> = plan
            .grid
            .par_iter()
            .map(|&e| (e, entanglement_row(plan, case, e)))
            .collect();
        let mut lines = Vec::new();
        let mut records = Vec::new();
        let mut dev_a: f64 = 0.0;
        let mut dev_delta: f64 = 0.0;
        for (e, row) in &rows {
            match row {
                Ok(r) => {
                    if let Some(a) = r.analytic {
                        let numeric = r.min_per_slot.iter().copied().fold(f64::INFINITY, f64::min);
                        dev_a = dev_a.max((numeric - a).abs());
                    }
                    dev_delta = dev_delta.max((r.delta - r.delta_closed_form).abs());
                    lines.push(vec![
                        fmt_sig(r.epsilon),
                        fmt_sig(r.p1),
                        fmt_sig(r.min_per_slot[0]),
                        fmt_sig(r.min_per_slot[1]),
                        fmt_sig(r.min_per_slot[2]),
                        r.analytic.map(fmt_sig).unwrap_or_default(),
                        fmt_sig(r.delta),
                    ]);
                    records.push(json!({
                        "epsilon": r.epsilon,
                        "method": r.method.map(Method::name).unwrap_or("analytic"),
                        "residual": r.residual,
                        "delta_closed_form": r.delta_closed_form,
                        "note": r.note,
                    }));
                }
                Err(err) => {
                    let nan = fmt_sig(f64::NAN);
                    lines.push(vec![
                        fmt_sig(*e),
                        nan.clone(),
                        nan.clone(),
                        nan.clone(),
                        nan.clone(),
                        String::new(),
                        nan,
                    ]);
                    records.push(json!({ "epsilon": e, "error": err.to_string() }));
                    failures.push(format!("N = {}, epsilon = {e}: {err}", case.atoms));
                }
            }
        }
        artifacts.push(Artifact {
            name: file_name(plan, case, "csv"),
            contents: csv(ENTANGLEMENT_HEADER, lines),
        });
        diag.push(json!({
            "N": case.atoms,
            "kappa": case.kappa,
            "p1_from_dynamics": plan.uses_dynamics(case),
            "max_deviation_from_analytic_negativity": (case.atoms == 2 && !plan.uses_dynamics(case)).then_some(dev_a),
            "max_deviation_delta_closed_form": dev_delta,
            "points": records,
        }));
    }
    Ok(Outcome {
        artifacts,
        diagnostics: json!({ "sweeps": diag }),
        failures,
    })
}

pub fn run_negativity_sweep(plan: &Plan) -> Result<Outcome, CliError> {
    entanglement_sweep(plan)
}

pub fn run_nong_sweep(plan: &Plan) -> Result<Outcome, CliError> {
    entanglement_sweep(plan)
}

/// δ of `|sr>_p` for large even `N`, with `p` the rounded large-N index.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LargeNPoint {
    pub epsilon: f64,
    pub p_real: f64,
    pub p: usize,
    pub delta: f64,
}

impl LargeNPoint {
    pub fn rounding_gap(&self) -> f64 {
        self.p as f64 - self.p_real
    }
}

pub fn nong_large_n_point(atoms: usize, epsilon: f64) -> cascade_core::Result<LargeNPoint> {
    let p_real = p_from_epsilon(atoms as f64, epsilon)?;
    let p = (p_real.round().max(0.0) as usize).min(atoms / 2);
    let delta = nong_subradiant_closed_form(atoms, p, epsilon)?;
    Ok(LargeNPoint {
        epsilon,
        p_real,
        p,
        delta,
    })
}

fn nong_large_n(plan: &Plan, case: &Case) -> Result<(Artifact, Value), CliError> {
    let (kept, excluded): (Vec<f64>, Vec<f64>) =
        plan.grid.iter().partition(|e| **e >= NONG_EPSILON_FLOOR);
    let points = kept
        .par_iter()
        .map(|&e| nong_large_n_point(case.atoms, e))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = points.iter().map(|p| {
        vec![
            fmt_sig(p.epsilon),
            fmt_sig(p.p_real),
            p.p.to_string(),
            fmt_sig(p.rounding_gap()),
            fmt_sig(p.delta),
        ]
    });
    let artifact = Artifact {
        name: file_name(plan, case, "csv"),
        contents: csv("epsilon,p_real,p,rounding_gap,delta", rows),
    };
    let min_delta = points.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min);
    let d = json!({
        "N": case.atoms,
        "method": "closed_form",
        "min_delta": min_delta,
        "max_rounding_gap": max_abs(points.iter().map(LargeNPoint::rounding_gap)),
        "excluded_epsilon": excluded,
        "note": (!excluded.is_empty()).then(|| format!("epsilon below {NONG_EPSILON_FLOOR} excluded: the closed form needs epsilon > 0")),
    });
    Ok((artifact, d))
}

pub fn run_qubit_pair(plan: &Plan) -> Result<Outcome, CliError> {
    let mut artifacts = Vec::new();
    let mut diag = Vec::new();
    for case in &plan.cases {
        let mut rows = Vec::new();
        let mut reports = Vec::new();
        for &p in &plan.p {
            let pair = qubit_pair(case.atoms, p)?;
            let report = delta_p(&pair)?;
            let norm_plus = pair.phi_plus.norm_squared() - 1.0;
            let norm_minus = pair.phi_minus.norm_squared() - 1.0;
            let cross = pair.phi_plus.dot(&pair.phi_minus);
            let round_trip = [pair.eps0, pair.eps1]
                .map(|e| p_from_epsilon(case.atoms as f64, e).map(|v| v - p as f64))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(vec![
                p.to_string(),
                fmt_sig(report.eps0),
                fmt_sig(report.eps1),
                fmt_sig(report.alpha),
                fmt_sig(report.energy_plus),
                fmt_sig(report.energy_minus),
                fmt_sig(report.delta_direct),
                fmt_sig(report.delta_printed),
                fmt_sig(report.discrepancy),
            ]);
            reports.push(json!({
                "report": report,
                "eps_product_minus_one": pair.eps0 * pair.eps1 - 1.0,
                "p_round_trip_error": max_abs(round_trip),
                "orthonormality_error": max_abs([norm_plus, norm_minus, cross]),
            }));
        }
        artifacts.push(Artifact {
            name: file_name(plan, case, "csv"),
            contents: csv(
                "p,eps0,eps1,alpha,E_plus,E_minus,delta_direct,delta_printed,discrepancy",
                rows,
            ),
        });
        diag.push(json!({ "N": case.atoms, "pairs": reports }));
    }
    Ok(Outcome {
        artifacts,
        diagnostics: json!({ "qubit_pairs": diag }),
        failures: Vec::new(),
    })
}

pub fn run_validate(_plan: &Plan) -> Result<Outcome, CliError> {
    let criteria = validation::suite();
    let health = validation::integrator_health();
    let failures = criteria
        .iter()
        .chain(std::iter::once(&health))
        .flat_map(|c| {
            c.checks
                .iter()
                .filter(|k| !k.passed)
                .map(move |k| format!("{}: {}", c.title, k.name))
        })
        .collect();
    let report = json!({ "criteria": criteria, "integrator_health": health });
    let contents = serde_json::to_string_pretty(&report).map_err(CliError::Json)? + "\n";
    Ok(Outcome {
        artifacts: vec![Artifact {
            name: "validation.json".into(),
            contents,
        }],
        diagnostics: json!({
            "criteria_passed": criteria.iter().filter(|c| c.passed()).count(),
            "criteria_total": criteria.len(),
        }),
        failures,
    })
}
