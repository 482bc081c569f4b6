//! Closest-particle drift toward the origin and the largest gaps, from
//! stats-instrumented runs.
//!
//!     cargo run --release --example drift_and_gaps -- 400 8

use dispersion::harness::{drift_check, gap_tail_check_trials, run_experiment, ExperimentPlan};
use dispersion::Instrumentation;

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(400);
    let trials: u64 = args.next().map(|s| s.parse().expect("trials")).unwrap_or(8);

    let mut plan = ExperimentPlan::new(vec![n], trials, 11);
    plan.instrumentation = Instrumentation::Stats;
    let result = run_experiment(&plan)?;

    let d = drift_check(&result.trials)?;
    println!(
        "steps with d != 0 and a closest stack of >= 2: {}, of which d decreased: {:.4} (exact {:.4})",
        d.qualifying_steps, d.decrease_frequency, d.expected_frequency
    );
    println!(
        "steps with a lone closest particle: {}, d changed on {}",
        d.singleton_steps, d.singleton_changes
    );
    for (n, max_d, bound) in &d.max_d {
        println!("  n = {n}: max d = {max_d} (10 ln n = {bound:.1})");
    }

    let gaps = gap_tail_check_trials(&result.trials);
    for (n, g, bound) in &gaps.per_trial {
        println!("  n = {n}: largest gap {g} ((ln n)^2 = {bound:.1})");
    }
    println!("all gaps below (ln n)^2: {}", gaps.ok());
    Ok(())
}
