use std::path::Path;
use std::process::{Command, Output};

use cascade_cli::config::{Experiment, GridSpec, P1Source, Plan, RunConfig, DEFAULT_GRID_POINTS};
use cascade_cli::experiments;
use cascade_core::subradiance::EPSILON_MAX;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade-sub"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn flags(experiment: Experiment) -> RunConfig {
    RunConfig {
        experiment: Some(experiment),
        ..Default::default()
    }
}

#[test]
fn default_grid_has_both_endpoints() {
    let g = GridSpec::default_range().values().unwrap();
    assert_eq!(g.len(), DEFAULT_GRID_POINTS);
    assert_eq!(g[0], 0.0);
    assert_eq!(*g.last().unwrap(), EPSILON_MAX);
}

#[test]
fn flags_override_file_and_preset() {
    let file = RunConfig::from_json(r#"{"preset": "fig3", "horizon": 50.0, "g": 2.0}"#).unwrap();
    let top = RunConfig {
        horizon: Some(70.0),
        ..flags(Experiment::SteadySweep)
    };
    let plan = Plan::resolve(&file, &top).unwrap();
    assert_eq!(plan.horizon, 70.0);
    assert_eq!(plan.g, 2.0);
    assert_eq!(plan.cases.len(), 2);
    assert_eq!(plan.cases[1].kappa, Some(0.8));

    let top = RunConfig {
        kappa: Some(5.0),
        ..flags(Experiment::SteadySweep)
    };
    let plan = Plan::resolve(&file, &top).unwrap();
    assert!(plan.cases.iter().all(|c| c.kappa == Some(5.0)));
}

#[test]
fn presets_encode_figure_parameters() {
    let plan = Plan::resolve(
        &RunConfig::default(),
        &RunConfig {
            preset: Some(cascade_cli::config::Preset::Fig1),
            ..flags(Experiment::Evolve)
        },
    )
    .unwrap();
    let params: Vec<_> = plan
        .cases
        .iter()
        .map(|c| (c.atoms, c.kappa, c.epsilon))
        .collect();
    assert_eq!(
        params,
        vec![(2, Some(0.2), Some(0.3)), (3, Some(0.3), Some(0.5))]
    );
    let fig4 = Plan::resolve(
        &RunConfig::from_json(r#"{"preset": "fig4"}"#).unwrap(),
        &flags(Experiment::NongSweep),
    )
    .unwrap();
    assert_eq!(
        fig4.cases.iter().map(|c| c.atoms).collect::<Vec<_>>(),
        vec![50, 2, 3]
    );
    assert_eq!(fig4.p1_source, P1Source::Auto);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(RunConfig::from_json(r#"{"N": 2, "unknown": 1}"#).is_err());
    for text in [
        r#"{"N": 2, "kappa": 1.0, "grid": [0.5, 3.0]}"#,
        r#"{"N": 4, "kappa": 1.0}"#,
        r#"{"N": 2, "kappa": 1.0, "grid": {"start": 1.0, "stop": 0.5, "points": 3}}"#,
        r#"{"N": 2, "kappa": 1.0, "horizon": -1.0}"#,
        r#"{"N": 3}"#,
    ] {
        let file = RunConfig::from_json(text).unwrap();
        assert!(
            Plan::resolve(&file, &flags(Experiment::SteadySweep)).is_err(),
            "accepted {text}"
        );
    }
    let evolve =
        RunConfig::from_json(r#"{"N": 2, "kappa": 1.0, "epsilon": 0.3, "dt": 0.0}"#).unwrap();
    assert!(Plan::resolve(&evolve, &flags(Experiment::Evolve)).is_err());
    let pair = RunConfig::from_json(r#"{"N": 20, "p": [6]}"#).unwrap();
    assert!(Plan::resolve(&pair, &flags(Experiment::QubitPair)).is_err());
}

#[test]
fn truncated_photon_space_is_reported() {
    let file =
        RunConfig::from_json(r#"{"N": 2, "kappa": 0.2, "epsilon": 0.3, "t_end": 2.0, "n_max": 1}"#)
            .unwrap();
    let plan = Plan::resolve(&file, &flags(Experiment::Evolve)).unwrap();
    let outcome = experiments::run(&plan).unwrap();
    assert_eq!(outcome.failures.len(), 1, "{:?}", outcome.failures);
    assert!(outcome.failures[0].contains("n_max"));
}

#[test]
fn config_errors_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"N": 2, "bogus": true}"#);
    assert_eq!(
        run(&["steady_sweep", "--config", &cfg]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["steady_sweep", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), r#"{"N": 2, "kappa": 1.0, "grid": [3.0]}"#);
    assert_eq!(
        run(&["negativity_sweep", "--config", &cfg]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["no_such_experiment"]).status.code(), Some(2));
}

#[test]
fn evolve_writes_trajectory_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        r#"{"N": 2, "kappa": 0.2, "epsilon": 0.3, "t_end": 5.0, "sample_interval": 1.0}"#,
    );
    let o = run(&[
        "evolve",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--plot",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("evolve_N2.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,N0,N1,N2,Nph,P0,P1,purity"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(text.lines().count(), 7);
    assert!(out.join("evolve_N2.gp").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["config"]["cases"][0]["N"], 2);
    assert!(meta["versions"]["cascade-core"].is_string());
    assert!(
        meta["diagnostics"]["runs"][0]["max_trace_drift"]
            .as_f64()
            .unwrap()
            < 1e-10
    );
}

#[test]
fn sweeps_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"N": 2, "grid": {"start": 0.0, "stop": 2.4, "points": 13}}"#,
    );
    let mut outputs = Vec::new();
    for workers in ["1", "3", "1"] {
        let out = dir.path().join(format!("w{workers}-{}", outputs.len()));
        let o = run(&[
            "negativity_sweep",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("negativity_sweep_N2.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().next(), Some(experiments::ENTANGLEMENT_HEADER));
    assert_eq!(text.lines().count(), 14);
}

#[test]
fn two_atom_negativity_sweep_matches_closed_form() {
    let file = RunConfig::from_json(r#"{"N": 2}"#).unwrap();
    let plan = Plan::resolve(&file, &flags(Experiment::NegativitySweep)).unwrap();
    let outcome = experiments::run(&plan).unwrap();
    assert!(outcome.failures.is_empty());
    let dev = outcome.diagnostics["sweeps"][0]["max_deviation_from_analytic_negativity"]
        .as_f64()
        .unwrap();
    assert!(dev < 1e-8, "{dev:e}");
    let rows: Vec<Vec<String>> = outcome.artifacts[0]
        .contents
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), DEFAULT_GRID_POINTS);
    // eps = 0: the stationary state is the product |0,2,0>.
    let a0: f64 = rows[0][5].parse().unwrap();
    assert_eq!(a0, 0.0);
}

#[test]
fn nong_sweep_for_fifty_atoms() {
    let file =
        RunConfig::from_json(r#"{"N": 50, "grid": {"start": 0.0, "stop": 2.0, "points": 11}}"#)
            .unwrap();
    let plan = Plan::resolve(&file, &flags(Experiment::NongSweep)).unwrap();
    let outcome = experiments::run(&plan).unwrap();
    let csv = &outcome.artifacts[0].contents;
    assert_eq!(
        csv.lines().next(),
        Some("epsilon,p_real,p,rounding_gap,delta")
    );
    // eps = 0 is excluded and noted.
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(outcome.diagnostics["sweeps"][0]["excluded_epsilon"][0], 0.0);
    for line in csv.lines().skip(1) {
        let delta: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(delta > 0.0);
    }
}

#[test]
fn small_stationary_sweep_flags_method() {
    let file = RunConfig::from_json(r#"{"N": 2, "kappa": 10.0, "grid": [0.5, 1.0]}"#).unwrap();
    let plan = Plan::resolve(&file, &flags(Experiment::SteadySweep)).unwrap();
    let outcome = experiments::run(&plan).unwrap();
    let csv = &outcome.artifacts[0].contents;
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "epsilon,P1,P0,Nph,P1_analytic,residual,method,error"
    );
    let first: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(first[6], "integration");
    let p1: f64 = first[1].parse().unwrap();
    assert!((p1 - 1.0 / 3.0).abs() < 5e-3);
    let p1_at_one: f64 = rows[2].split(',').nth(1).unwrap().parse().unwrap();
    assert!(p1_at_one.abs() < 1e-3);
}

#[test]
fn qubit_pair_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = run(&[
        "qubit_pair",
        "-N",
        "50",
        "--p",
        "5,10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("qubit_pair_N50.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    for pair in meta["diagnostics"]["qubit_pairs"][0]["pairs"]
        .as_array()
        .unwrap()
    {
        assert!(pair["eps_product_minus_one"].as_f64().unwrap().abs() < 1e-12);
        assert!(pair["orthonormality_error"].as_f64().unwrap() < 1e-12);
    }
}
