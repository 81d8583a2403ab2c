//! Runs every acceptance criterion in sequence, prints one PASS/FAIL line
//! each, and exits non-zero if any criterion fails. Positional arguments
//! filter criteria by name or number.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use lru_validation::CRITERIA;

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        let id = format!("criterion {:>2}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || id.ends_with(f.as_str()))
        {
            continue;
        }
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(outcome) => outcome,
            Err(_) => (false, "panicked".into()),
        };
        if !ok {
            failed += 1;
        }
        println!("{id} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
