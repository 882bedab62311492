//! Runs the committed benchmark suite — the same ten criteria the
//! `synth-bench` command and the acceptance tests check — and prints
//! one verdict line per criterion. The multi-seed criteria train real
//! models, so expect about a minute of runtime.
//!
//!     cargo run --example synth_benchmarks

use phonadapt::bench::{run_all, DEFAULT_BASE_SEED};
use phonadapt::error::Result;

fn main() -> Result<()> {
    let results = run_all(DEFAULT_BASE_SEED)?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "\n{} of {} criteria passed{}",
        results.len() - failed,
        results.len(),
        if failed == 0 { "" } else { " — investigate before trusting results" }
    );
    Ok(())
}
