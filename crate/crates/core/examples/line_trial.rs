//! A single run on the line from a point mass, stepped by hand and then
//! through `run_trial`.
//!
//!     cargo run --release --example line_trial -- 200 42

use dispersion::{run_trial, Configuration, LineSite, StepRng, Topology, TrialSpec};

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(42);

    // The first few steps, showing the occupied sites.
    let mut config = Configuration::<LineSite>::point_mass(n)?;
    for t in 0..4 {
        let sites: Vec<String> = config.occupancy().iter().map(|(x, k)| format!("{x}:{k}")).collect();
        println!("t={t:<2} {}", sites.join(" "));
        config.step(&mut StepRng::new(seed, t))?;
    }

    let outcome = run_trial(&TrialSpec::new(n, Topology::Line, seed))?;
    let r = &outcome.record;
    println!();
    println!("settled after T = {} steps", r.stopping_time);
    println!("occupied interval [{}, {}], span {} = {:.3} n", r.min_pos, r.max_pos, r.span, r.span as f64 / n as f64);
    println!("density (n - 1) / span = {:.3}", r.density().unwrap_or(f64::NAN));
    println!("largest distance of the closest particle from 0: {}", r.max_d.unwrap_or(0));
    println!("{}", serde_json::to_string(r).expect("record serializes"));
    Ok(())
}
