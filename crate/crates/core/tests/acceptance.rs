//! One line per acceptance criterion.
//!
//! The target reports rather than gates, so a failing criterion does not stop
//! `cargo test` from running the remaining test targets. Set
//! `ACCEPTANCE_STRICT=1` to exit nonzero on any failure; `klshampoo claims`
//! always does.

use std::process::ExitCode;

use klshampoo::harness::{run_claim, SeedGrid, TolProfile, CLAIM_NAMES};

fn main() -> ExitCode {
    let grid = SeedGrid::default();
    let mut failed = 0;
    for id in 1..=CLAIM_NAMES.len() {
        match run_claim(id, TolProfile::Default, &grid) {
            Ok(r) => {
                if !r.pass {
                    failed += 1;
                }
                println!("{}", r.summary_line());
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {id:>2} {:<26} error: {e}", CLAIM_NAMES[id - 1]);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        CLAIM_NAMES.len() - failed,
        CLAIM_NAMES.len()
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
