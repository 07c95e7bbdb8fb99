//! Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
//! any fails. Numeric arguments restrict the run to those criteria.

use std::process::ExitCode;

use lattice_dispersion::acceptance::{run_criterion, AcceptanceContext, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if picked.is_empty() { CRITERIA.collect() } else { picked };
    let ctx = AcceptanceContext::default();
    let mut failed = 0;
    for id in ids {
        match run_criterion(&ctx, id) {
            Ok(outcome) => {
                println!("{outcome}");
                failed += usize::from(!outcome.passed);
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL error: {e}");
                failed += 1;
            }
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
