//! Drives the dominating gap bounds `ĝ` alongside a line run and prints what
//! the coupling saw: domination checks, the `δ̂` case table and the pooled
//! tail of `ĝ - 3`.
//!
//!     cargo run --release --example coupling_audit -- 300 7

use dispersion::ordered::{estimate_rho, CouplingTracker};
use dispersion::{Configuration, LineSite, StepRng};

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(300);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);

    let mut config = Configuration::<LineSite>::point_mass(n)?;
    let mut tracker = CouplingTracker::new(&config);
    let mut t = 0;
    while !config.is_settled() {
        let draw = config.sample_moves(&mut StepRng::new(seed, t));
        let mut next = config.clone();
        next.apply_moves(&draw)?;
        tracker.advance(&draw, &next)?;
        config = next;
        t += 1;
    }

    println!("n = {n}, T = {t}, L = {}", tracker.state().classes());
    println!("steps with some g_j > g_hat_j: {}", tracker.violations);
    println!("gap moves larger than 2:       {}", tracker.gap_jumps);
    println!("largest gap seen:              {}", tracker.max_gap);
    println!();
    println!("{:<12} {:>9} {:>8} {:>10} {:>10} {:>6}", "case", "samples", "mean", "P(+)", "exact", "z");
    for r in tracker.stats.reports() {
        println!(
            "{:<12} {:>9} {:>8.4} {:>10.5} {:>10.5} {:>6.2}",
            r.case.name(),
            r.samples,
            r.mean,
            r.positive_frequency,
            r.expected_positive_frequency,
            r.positive_z
        );
    }

    let hist = tracker.state().tail_histogram();
    let total: u64 = hist.iter().sum();
    println!();
    println!("k  Pr(g_hat - 3 >= k)");
    let mut beyond = total;
    for (k, &h) in hist.iter().enumerate() {
        println!("{k:<2} {:.3e}", beyond as f64 / total as f64);
        beyond -= h;
    }
    match estimate_rho(hist) {
        Ok(fit) => println!("rho_hat = {:.4} (R^2 {:.4})", fit.rho, fit.r_squared),
        Err(e) => println!("no tail fit: {e}"),
    }
    Ok(())
}
