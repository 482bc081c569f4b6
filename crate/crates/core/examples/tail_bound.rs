//! Checks the concentration inequality for sums of geometric-tailed
//! variables against the exact law of the sum.
//!
//!     cargo run --release --example tail_bound -- 1.0 0.5

use dispersion::concentration::{certify, choose_params, TailSpec};

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let c: f64 = args.next().map(|s| s.parse().expect("C")).unwrap_or(1.0);
    let rho: f64 = args.next().map(|s| s.parse().expect("rho")).unwrap_or(0.5);

    // Survival exactly min(1, C rho^k): the heaviest law the hypothesis allows.
    let spec = TailSpec::extremal(c, rho)?;
    println!("C = {c}, rho = {rho}, mu = {:.4}, support 0..={}", spec.mu(), spec.support_max());
    let p = choose_params(c, rho, 1.0)?;
    println!("eta = {}, B = {:.3e}", p.eta, p.b);
    println!();
    println!("{:>4} {:>5} {:>7} {:>12} {:>12} {:>12}", "m", "eps", "thresh", "exact", "chernoff", "bound");
    for m in [10u64, 30, 50, 200] {
        for eps in [0.25, 0.5, 1.0] {
            let cert = certify(&spec, m, eps)?;
            println!(
                "{m:>4} {eps:>5} {:>7} {:>12.4e} {:>12.4e} {:>12.6} {}",
                cert.threshold,
                cert.exact_tail,
                cert.chernoff,
                cert.bound,
                if cert.holds() { "" } else { "  <- fails" }
            );
        }
    }
    Ok(())
}
