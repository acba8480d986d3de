//! One PASS/FAIL line per acceptance criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! Positional arguments filter by check id substring, e.g.
//! `cargo test -p vertexlab --test acceptance -- fredholm lln`.

use std::process::ExitCode;

use vertexlab::harness::{run_check, ExperimentSpec, CHECKS, DEFAULT_SEED};

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, info) in CHECKS.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| info.id.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let report = run_check(&ExperimentSpec::new(info.id), DEFAULT_SEED).expect("check id resolves");
        println!("criterion {:>2} {}", i + 1, report.summary_line());
        if let Some(e) = &report.error {
            println!("             error: {e}");
        }
        if !report.pass {
            failed.push(info.id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
