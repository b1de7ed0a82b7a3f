use std::path::PathBuf;
use std::process::ExitCode;

use cascade_cli::config::{AtomList, Experiment, GridSpec, P1Source, Plan, Preset, RunConfig};
use cascade_cli::{experiments, output, CliError};
use clap::Parser;

/// Runs the cascade subradiance experiments and writes CSV plus run.json.
#[derive(Debug, Parser)]
#[command(name = "cascade-sub", version)]
struct Args {
    experiment: Experiment,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of sweep points computed in parallel.
    #[arg(long)]
    workers: Option<usize>,
    /// Figure preset; the config file and flags override it.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Atom numbers, comma separated.
    #[arg(long = "atoms", short = 'N', value_delimiter = ',')]
    atoms: Option<Vec<usize>>,
    /// Ratio of the two transition amplitudes.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Cavity decay rate.
    #[arg(long)]
    kappa: Option<f64>,
    /// Atom-cavity coupling.
    #[arg(long)]
    g: Option<f64>,
    /// Photon cutoff, default 2N (exact).
    #[arg(long)]
    n_max: Option<usize>,
    /// RK4 step for evolve.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time for evolve.
    #[arg(long)]
    t_end: Option<f64>,
    /// Time between recorded samples.
    #[arg(long)]
    sample_interval: Option<f64>,
    /// Longest simulated time spent looking for a steady state.
    #[arg(long)]
    horizon: Option<f64>,
    /// Evenly spaced epsilon grid `start:stop:points`.
    #[arg(long)]
    grid: Option<String>,
    /// Subradiance indices for qubit_pair, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    p1_source: Option<P1Source>,
    /// Also write a gnuplot script next to each CSV.
    #[arg(long)]
    plot: bool,
}

fn parse_grid(text: &str) -> Result<GridSpec, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Config(format!("grid '{text}' is not start:stop:points"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(GridSpec::Range {
        start: parts[0].parse().map_err(|_| bad())?,
        stop: parts[1].parse().map_err(|_| bad())?,
        points: parts[2].parse().map_err(|_| bad())?,
    })
}

impl Args {
    fn overrides(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig {
            experiment: Some(self.experiment),
            preset: self.preset,
            atoms: self.atoms.clone().map(AtomList::Many),
            cases: None,
            epsilon: self.epsilon,
            grid: self.grid.as_deref().map(parse_grid).transpose()?,
            kappa: self.kappa,
            g: self.g,
            n_max: self.n_max,
            dt: self.dt,
            t_end: self.t_end,
            sample_interval: self.sample_interval,
            horizon: self.horizon,
            p: self.p.clone(),
            p1_source: self.p1_source,
            out: self.out.clone(),
            workers: self.workers,
            plot: self.plot.then_some(true),
        })
    }
}

fn run(args: &Args) -> Result<Vec<String>, CliError> {
    let file = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let plan = Plan::resolve(&file, &args.overrides()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", plan.workers)))?;
    let outcome = pool.install(|| experiments::run(&plan))?;
    output::write_outcome(&plan, &outcome)?;
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
