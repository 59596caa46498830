//! Runs the full verification suite and prints the report.
//!
//! cargo run --release --example claims_suite [-- strict]

use klshampoo::harness::{run_claims, TolProfile};

fn main() -> klshampoo::Result<()> {
    let profile: TolProfile = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "default".to_string())
        .parse()?;
    let report = run_claims(profile)?;
    print!("{}", report.to_text());
    if !report.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
