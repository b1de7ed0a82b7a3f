//! Run configuration: JSON file, presets and command-line overrides.
//!
//! Precedence, lowest first: built-in defaults, the preset named by
//! `preset`, the config file, command-line flags. A top-level `kappa` or
//! `epsilon` set in the file or on the command line applies to every case,
//! replacing per-case values; setting `N` replaces the case list.

use std::path::PathBuf;

use cascade_core::subradiance::EPSILON_MAX;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Simulated time (in units of 1/g) spent integrating towards a steady state
/// before switching to the zero-mode projection.
pub const DEFAULT_HORIZON: f64 = 1.0e4;

/// Points in the default epsilon grid.
pub const DEFAULT_GRID_POINTS: usize = 121;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Evolve,
    SteadySweep,
    NegativitySweep,
    NongSweep,
    QubitPair,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::SteadySweep => "steady_sweep",
            Experiment::NegativitySweep => "negativity_sweep",
            Experiment::NongSweep => "nong_sweep",
            Experiment::QubitPair => "qubit_pair",
            Experiment::Validate => "validate",
        }
    }

    /// Sweeps whose states only exist for `0 <= eps <= 1 + sqrt 2`.
    fn needs_bounded_grid(self) -> bool {
        matches!(
            self,
            Experiment::SteadySweep | Experiment::NegativitySweep | Experiment::NongSweep
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

/// Where the stationary `P_1` of a two- or three-atom sweep comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum P1Source {
    /// Bad-cavity formula for `N = 2`, full dynamics for `N = 3`.
    #[default]
    Auto,
    Analytic,
    Dynamics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomList {
    One(usize),
    Many(Vec<usize>),
}

impl AtomList {
    fn to_vec(&self) -> Vec<usize> {
        match self {
            AtomList::One(n) => vec![*n],
            AtomList::Many(v) => v.clone(),
        }
    }
}

/// An epsilon grid: evenly spaced with both endpoints, or explicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range {
        start: f64,
        stop: f64,
        points: usize,
    },
    Values(Vec<f64>),
}

impl GridSpec {
    pub fn default_range() -> Self {
        GridSpec::Range {
            start: 0.0,
            stop: EPSILON_MAX,
            points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            GridSpec::Values(v) if v.is_empty() => {
                Err(CliError::Config("empty epsilon grid".into()))
            }
            GridSpec::Values(v) => Ok(v.clone()),
            GridSpec::Range {
                start,
                stop,
                points,
            } => {
                if *points == 0 || !(start <= stop) || !start.is_finite() || !stop.is_finite() {
                    return Err(CliError::Config(format!(
                        "bad grid: start {start}, stop {stop}, points {points}"
                    )));
                }
                if *points == 1 {
                    return Ok(vec![*start]);
                }
                let step = (stop - start) / (*points - 1) as f64;
                Ok((0..*points)
                    .map(|i| {
                        if i + 1 == *points {
                            *stop
                        } else {
                            start + step * i as f64
                        }
                    })
                    .collect())
            }
        }
    }
}

/// One system in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    #[serde(rename = "N")]
    pub atoms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// The JSON configuration file. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<AtomList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<CaseSpec>>,
    /// Single coupling ratio, used by `evolve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Coupling ratios for sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Photon cutoff; defaults to `2N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Integration step for `evolve`; defaults to `0.005 / max(g, kappa, g eps)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    /// Longest simulated time spent looking for a steady state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Subradiance indices for `qubit_pair`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1_source: Option<P1Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Also write a gnuplot script next to each CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `top` replace those in `self`. Setting `N` in `top`
    /// drops any case list inherited from `self`.
    pub fn overlay(mut self, top: &RunConfig) -> RunConfig {
        if top.atoms.is_some() && top.cases.is_none() {
            self.cases = None;
        }
        overlay_fields!(
            self,
            top,
            experiment,
            preset,
            atoms,
            cases,
            epsilon,
            grid,
            kappa,
            g,
            n_max,
            dt,
            t_end,
            sample_interval,
            horizon,
            p,
            p1_source,
            out,
            workers,
            plot
        );
        self
    }

    /// Parameter choices behind each figure.
    pub fn preset(preset: Preset) -> RunConfig {
        let case = |atoms, kappa: Option<f64>, epsilon: Option<f64>| CaseSpec {
            atoms,
            kappa,
            epsilon,
        };
        match preset {
            Preset::Fig1 | Preset::Fig2 => RunConfig {
                experiment: Some(Experiment::Evolve),
                cases: Some(vec![
                    case(2, Some(0.2), Some(0.3)),
                    case(3, Some(0.3), Some(0.5)),
                ]),
                t_end: Some(200.0),
                sample_interval: Some(0.1),
                ..Default::default()
            },
            Preset::Fig3 => RunConfig {
                experiment: Some(Experiment::SteadySweep),
                cases: Some(vec![case(2, Some(10.0), None), case(3, Some(0.8), None)]),
                grid: Some(GridSpec::default_range()),
                ..Default::default()
            },
            Preset::Fig4 => RunConfig {
                experiment: Some(Experiment::NongSweep),
                cases: Some(vec![
                    case(50, None, None),
                    case(2, Some(10.0), None),
                    case(3, Some(0.8), None),
                ]),
                grid: Some(GridSpec::default_range()),
                ..Default::default()
            },
        }
    }
}

/// One resolved system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Case {
    #[serde(rename = "N")]
    pub atoms: usize,
    pub kappa: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Case {
    pub fn n_max(&self, plan: &Plan) -> usize {
        plan.n_max.unwrap_or(2 * self.atoms)
    }

    pub fn kappa(&self) -> Result<f64, CliError> {
        self.kappa.ok_or_else(|| {
            CliError::Config(format!(
                "N = {}: kappa is required for this experiment",
                self.atoms
            ))
        })
    }
}

/// A fully resolved and validated run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub experiment: Experiment,
    pub preset: Option<Preset>,
    pub cases: Vec<Case>,
    pub grid: Vec<f64>,
    pub g: f64,
    pub n_max: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub sample_interval: f64,
    pub horizon: f64,
    pub p: Vec<usize>,
    pub p1_source: P1Source,
    pub out: PathBuf,
    pub workers: usize,
    pub plot: bool,
}

impl Plan {
    /// Merges defaults, preset, file and flags and validates the result.
    pub fn resolve(file: &RunConfig, flags: &RunConfig) -> Result<Plan, CliError> {
        let user = file.clone().overlay(flags);
        let merged = match user.preset {
            Some(p) => RunConfig::preset(p).overlay(&user),
            None => user,
        };
        let experiment = merged
            .experiment
            .ok_or_else(|| CliError::Config("no experiment given".into()))?;

        let mut cases: Vec<Case> = match (&merged.cases, &merged.atoms) {
            (Some(cs), _) => cs
                .iter()
                .map(|c| Case {
                    atoms: c.atoms,
                    kappa: c.kappa,
                    epsilon: c.epsilon,
                })
                .collect(),
            (None, Some(a)) => a
                .to_vec()
                .into_iter()
                .map(|atoms| Case {
                    atoms,
                    kappa: None,
                    epsilon: None,
                })
                .collect(),
            (None, None) => Vec::new(),
        };
        for c in &mut cases {
            if merged.kappa.is_some() {
                c.kappa = merged.kappa;
            }
            if merged.epsilon.is_some() {
                c.epsilon = merged.epsilon;
            }
        }
        if cases.is_empty() && experiment == Experiment::QubitPair {
            cases.push(Case {
                atoms: 50,
                kappa: None,
                epsilon: None,
            });
        }

        let grid = merged
            .grid
            .clone()
            .unwrap_or_else(GridSpec::default_range)
            .values()?;
        let workers = merged
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let plan = Plan {
            experiment,
            preset: merged.preset,
            cases,
            grid,
            g: merged.g.unwrap_or(1.0),
            n_max: merged.n_max,
            dt: merged.dt,
            t_end: merged.t_end.unwrap_or(100.0),
            sample_interval: merged.sample_interval.unwrap_or(0.1),
            horizon: merged.horizon.unwrap_or(DEFAULT_HORIZON),
            p: merged.p.clone().unwrap_or_else(|| vec![5, 10]),
            p1_source: merged.p1_source.unwrap_or_default(),
            out: merged.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            workers,
            plot: merged.plot.unwrap_or(false),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} = {v} must be > 0")))
            }
        };
        positive("g", self.g)?;
        positive("t_end", self.t_end)?;
        positive("sample_interval", self.sample_interval)?;
        positive("horizon", self.horizon)?;
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if self.n_max == Some(0) {
            return fail("n_max must be >= 1".into());
        }
        if let Some(bad) = self.grid.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return fail(format!("grid value {bad} must be a finite number >= 0"));
        }
        if self.experiment.needs_bounded_grid() {
            if let Some(bad) = self.grid.iter().find(|e| **e > EPSILON_MAX) {
                return fail(format!("grid value {bad} outside [0, 1 + sqrt 2]"));
            }
        }
        for c in &self.cases {
            if let Some(k) = c.kappa {
                if !(k >= 0.0) || !k.is_finite() {
                    return fail(format!("N = {}: kappa = {k} must be >= 0", c.atoms));
                }
            }
            if let Some(e) = c.epsilon {
                if !(e >= 0.0) || !e.is_finite() {
                    return fail(format!("N = {}: epsilon = {e} must be >= 0", c.atoms));
                }
            }
        }
        if self.experiment != Experiment::Validate && self.cases.is_empty() {
            return fail("no systems given: set N or cases".into());
        }
        match self.experiment {
            Experiment::Evolve => {
                for c in &self.cases {
                    if c.atoms == 0 {
                        return fail("N must be >= 1".into());
                    }
                    c.kappa()?;
                    if c.epsilon.is_none() {
                        return fail(format!("N = {}: evolve needs epsilon", c.atoms));
                    }
                }
            }
            Experiment::SteadySweep | Experiment::NegativitySweep => {
                for c in &self.cases {
                    if c.atoms != 2 && c.atoms != 3 {
                        return fail(format!(
                            "{} supports N = 2, 3 (got {})",
                            self.experiment.name(),
                            c.atoms
                        ));
                    }
                    if self.experiment == Experiment::SteadySweep || self.uses_dynamics(c) {
                        positive("kappa", c.kappa()?)?;
                    }
                }
            }
            Experiment::NongSweep => {
                for c in &self.cases {
                    let closed_form = c.atoms >= 4 && c.atoms % 2 == 0;
                    if !(c.atoms == 2 || c.atoms == 3 || closed_form) {
                        return fail(format!(
                            "nong_sweep supports N = 2, 3 or even N >= 4 (got {})",
                            c.atoms
                        ));
                    }
                    if !closed_form && self.uses_dynamics(c) {
                        positive("kappa", c.kappa()?)?;
                    }
                }
            }
            Experiment::QubitPair => {
                for c in &self.cases {
                    if c.atoms < 4 || c.atoms % 2 == 1 {
                        return fail(format!("qubit_pair needs even N >= 4 (got {})", c.atoms));
                    }
                    if let Some(p) = self.p.iter().find(|p| **p == 0 || 4 * **p > c.atoms) {
                        return fail(format!("p = {p} outside 1..=N/4 for N = {}", c.atoms));
                    }
                }
                if self.p.is_empty() {
                    return fail("qubit_pair needs at least one p".into());
                }
            }
            Experiment::Validate => {}
        }
        Ok(())
    }

    /// Whether the stationary `P_1` of a small-N case comes from integration.
    pub fn uses_dynamics(&self, case: &Case) -> bool {
        match self.p1_source {
            P1Source::Analytic => false,
            P1Source::Dynamics => true,
            P1Source::Auto => case.atoms != 2,
        }
    }
}
