//! Writing experiment outputs and the `run.json` record.

use std::path::Path;

use serde_json::json;

use crate::config::Plan;
use crate::experiments::{Artifact, Outcome};
use crate::CliError;

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// A gnuplot script plotting every column of a CSV against the first.
pub fn plot_script(artifact: &Artifact) -> Option<String> {
    let header = artifact.contents.lines().next()?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 {
        return None;
    }
    let series: Vec<String> = columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, name)| !matches!(**name, "method" | "error"))
        .map(|(i, name)| {
            format!(
                "'{}' using 1:{} with lines title '{}'",
                artifact.name,
                i + 1,
                name
            )
        })
        .collect();
    Some(format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel '{}'\nplot {}\npause -1\n",
        columns[0],
        series.join(", \\\n     ")
    ))
}

/// Writes all artifacts, optional plot scripts and `run.json` into the
/// output directory, creating it if needed. Returns the written file names.
pub fn write_outcome(plan: &Plan, outcome: &Outcome) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(&plan.out).map_err(|source| CliError::Io {
        path: plan.out.clone(),
        source,
    })?;
    let mut names = Vec::new();
    for a in &outcome.artifacts {
        write(&plan.out, &a.name, &a.contents)?;
        names.push(a.name.clone());
        if plan.plot && a.name.ends_with(".csv") {
            if let Some(script) = plot_script(a) {
                let name = a.name.replace(".csv", ".gp");
                write(&plan.out, &name, &script)?;
                names.push(name);
            }
        }
    }
    let record = json!({
        "tool": "cascade-sub",
        "versions": {
            "cascade-cli": env!("CARGO_PKG_VERSION"),
            "cascade-core": cascade_core::VERSION,
        },
        "config": plan,
        "outputs": names,
        "status": if outcome.failures.is_empty() { "ok" } else { "failed" },
        "failures": outcome.failures,
        "diagnostics": outcome.diagnostics,
    });
    let text = serde_json::to_string_pretty(&record).map_err(CliError::Json)? + "\n";
    write(&plan.out, "run.json", &text)?;
    names.push("run.json".into());
    Ok(names)
}
