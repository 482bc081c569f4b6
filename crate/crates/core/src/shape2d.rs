//! Extent, density and isotropy of settled grid configurations.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{Configuration, GridSite};

/// Compass rays, counter-clockwise from `+x`.
pub const DIRECTIONS: [&str; 8] = ["E", "NE", "N", "NW", "W", "SW", "S", "SE"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeMetrics {
    pub occupied_count: u64,
    /// Largest Euclidean norm of an occupied site.
    pub r_max: f64,
    /// Largest Chebyshev norm of an occupied site.
    pub r_inf: u64,
    /// `n / (π r_max²)` clamped to `(0, 1]`; 1 for a lone particle.
    pub disk_density: f64,
    /// Unclamped `n / (π r_max²)`.
    pub raw_disk_density: f64,
    /// Farthest occupied norm within ±22.5° of each ray in [`DIRECTIONS`].
    pub extents: [f64; 8],
    /// `max / min` of `extents`.
    pub anisotropy: f64,
}

fn sector(site: GridSite) -> usize {
    let angle = (site.y as f64).atan2(site.x as f64);
    ((angle / FRAC_PI_4).round() as i64).rem_euclid(8) as usize
}

pub fn shape_metrics(config: &Configuration<GridSite>) -> Result<ShapeMetrics> {
    if !config.is_settled() {
        return Err(Error::invalid("shape metrics need a settled configuration"));
    }
    let mut r_max = 0.0f64;
    let mut r_inf = 0u64;
    let mut extents = [0.0f64; 8];
    for &site in config.occupancy().keys() {
        let r = site.euclidean();
        r_max = r_max.max(r);
        r_inf = r_inf.max(site.chebyshev());
        if site != GridSite::new(0, 0) {
            let s = sector(site);
            extents[s] = extents[s].max(r);
        }
    }
    let n = config.n();
    let raw_disk_density = if r_max > 0.0 { n as f64 / (PI * r_max * r_max) } else { 1.0 };
    let lo = extents.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = extents.iter().copied().fold(0.0, f64::max);
    let anisotropy = if hi == 0.0 {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    };
    Ok(ShapeMetrics {
        occupied_count: config.occupied_sites() as u64,
        r_max,
        r_inf,
        disk_density: raw_disk_density.min(1.0),
        raw_disk_density,
        extents,
        anisotropy,
    })
}

/// One `x y` line per occupied site in lexicographic order, after a single
/// `#` header line.
pub fn snapshot_text(config: &Configuration<GridSite>, header: &str) -> String {
    let mut out = String::with_capacity(16 * config.occupied_sites() + header.len() + 4);
    let _ = writeln!(out, "# {header}");
    for site in config.occupancy().keys() {
        let _ = writeln!(out, "{} {}", site.x, site.y);
    }
    out
}

pub fn write_snapshot(path: &Path, config: &Configuration<GridSite>, header: &str) -> Result<()> {
    std::fs::write(path, snapshot_text(config, header)).map_err(|e| Error::io(path, e))
}
