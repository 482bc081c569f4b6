//! Dispersion on the square grid: where the particles settle and how round
//! the settled cloud is. Optionally writes the occupied sites as `x y` lines.
//!
//!     cargo run --release --example grid_shape -- 2000 3 cloud.txt

use dispersion::shape2d::{shape_metrics, write_snapshot, DIRECTIONS};
use dispersion::trial::FinalConfiguration;
use dispersion::{run_trial, Topology, TrialSpec};

fn main() -> dispersion::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(3);
    let snapshot = args.next();

    let outcome = run_trial(&TrialSpec::new(n, Topology::Grid2D, seed))?;
    let FinalConfiguration::Grid(config) = &outcome.diagnostics.final_configuration else {
        unreachable!("grid trial");
    };
    let m = shape_metrics(config)?;
    println!("n = {n}, T = {}", outcome.record.stopping_time);
    println!("r_max = {:.3}, r_inf = {}", m.r_max, m.r_inf);
    println!("n / (pi r_max^2) = {:.4}", m.raw_disk_density);
    for (dir, r) in DIRECTIONS.iter().zip(m.extents) {
        println!("  {dir:<2} {r:.2}");
    }
    println!("anisotropy = {:.4}", m.anisotropy);

    if let Some(path) = snapshot {
        write_snapshot(path.as_ref(), config, &format!("n={n} seed={seed}"))?;
        println!("wrote {path}");
    }
    Ok(())
}
