//! Monte Carlo sweep over n: mean span per n and the fitted growth exponent.
//! Pass an output directory to get JSONL records, the summary CSV and TSVs.
//!
//!     cargo run --release --example scaling_sweep -- 20 out/sweep

use std::path::PathBuf;

use dispersion::harness::{fit_scaling, run_experiment, write_outputs, ExperimentPlan};

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().map(|s| s.parse().expect("trials")).unwrap_or(10);
    let out: Option<PathBuf> = args.next().map(PathBuf::from);

    let plan = ExperimentPlan::new(vec![32, 64, 128, 256], trials, 2024);
    let result = run_experiment(&plan)?;
    print!("{}", result.summary.to_csv());

    let means: Vec<(u64, f64)> = result.summary.rows().iter().map(|r| (r.n, r.mean_span)).collect();
    let s = fit_scaling(&means)?;
    println!();
    for (n, per_n, per_nlogn) in &s.points {
        println!("n = {n:>4}: span/n = {per_n:.4}, span/(n ln n) = {per_nlogn:.4}");
    }
    println!("alpha = {:.4}, max/min of span/n = {:.4}", s.alpha, s.flatness);

    if let Some(dir) = out {
        for path in write_outputs(&dir, &result)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
