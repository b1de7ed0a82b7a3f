//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails; nothing here is relaxed to make a line pass.

use std::process::ExitCode;
use std::time::Instant;

use cascade_cli::validation;

fn main() -> ExitCode {
    let criteria: [fn() -> validation::Criterion; 8] = [
        validation::criterion_1,
        validation::criterion_2,
        validation::criterion_3,
        validation::criterion_4,
        validation::criterion_5,
        validation::criterion_6,
        validation::criterion_7,
        validation::criterion_8,
    ];
    let mut failed = 0;
    for run in criteria {
        let start = Instant::now();
        let c = run();
        println!("{}  [{:.1} s]", c.summary(), start.elapsed().as_secs_f64());
        for check in &c.checks {
            println!(
                "    {} {}: measured {:.6e}, tolerance {:.1e} {}",
                if check.passed { "ok  " } else { "FAIL" },
                check.name,
                check.measured,
                check.tolerance,
                check.detail
            );
        }
        if !c.passed() {
            failed += 1;
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
