//! Particle configurations on the line and the grid, and the synchronous
//! dispersion step.
//!
//! A configuration is a sparse map from site to a positive particle count.
//! One step visits every site holding two or more particles, in ascending
//! site order, and sends each of its particles to a uniformly random
//! neighbour. Departures are computed from the counts at time `t` only;
//! arrivals are summed afterwards. Sites holding a single particle keep it.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{binomial_half, StepRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Line,
    #[serde(rename = "grid2")]
    Grid2D,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Line => f.write_str("line"),
            Topology::Grid2D => f.write_str("grid2"),
        }
    }
}

/// A lattice site together with the law of a stack leaving it.
pub trait Site: Copy + Ord + fmt::Debug + Send + Sync + 'static {
    /// How the particles of one unstable stack are distributed over the
    /// neighbouring sites.
    type Split: Copy + fmt::Debug + PartialEq + Send + Sync;

    const TOPOLOGY: Topology;

    fn origin() -> Self;

    fn sample_split<R: RngCore + ?Sized>(count: u64, rng: &mut R) -> Self::Split;

    fn split_is_valid(count: u64, split: &Self::Split) -> bool;

    /// Calls `f(target, particles)` for every neighbour receiving particles
    /// when a stack of `count` leaves `self` according to `split`.
    fn scatter(self, count: u64, split: &Self::Split, f: impl FnMut(Self, u64));
}

/// A site of the two-way infinite path.
pub type LineSite = i64;

impl Site for LineSite {
    /// Number of particles moving right (`i -> i + 1`).
    type Split = u64;

    const TOPOLOGY: Topology = Topology::Line;

    fn origin() -> Self {
        0
    }

    fn sample_split<R: RngCore + ?Sized>(count: u64, rng: &mut R) -> u64 {
        binomial_half(count, rng)
    }

    fn split_is_valid(count: u64, right: &u64) -> bool {
        *right <= count
    }

    fn scatter(self, count: u64, right: &u64, mut f: impl FnMut(Self, u64)) {
        let left = count - right;
        if left > 0 {
            f(self - 1, left);
        }
        if *right > 0 {
            f(self + 1, *right);
        }
    }
}

/// A site of the square lattice. Orders lexicographically by `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridSite {
    pub x: i64,
    pub y: i64,
}

impl GridSite {
    pub const fn new(x: i64, y: i64) -> Self {
        GridSite { x, y }
    }

    pub fn chebyshev(self) -> u64 {
        self.x.unsigned_abs().max(self.y.unsigned_abs())
    }

    pub fn euclidean(self) -> f64 {
        (self.x as f64).hypot(self.y as f64)
    }
}

impl Site for GridSite {
    /// Counts moving `+x, -x, +y, -y`.
    type Split = [u64; 4];

    const TOPOLOGY: Topology = Topology::Grid2D;

    fn origin() -> Self {
        GridSite::new(0, 0)
    }

    /// Multinomial(count; 1/4, 1/4, 1/4, 1/4) by three fair-coin binomials:
    /// first the horizontal movers, then the sign within each axis.
    fn sample_split<R: RngCore + ?Sized>(count: u64, rng: &mut R) -> [u64; 4] {
        let horizontal = binomial_half(count, rng);
        let vertical = count - horizontal;
        let east = binomial_half(horizontal, rng);
        let north = binomial_half(vertical, rng);
        [east, horizontal - east, north, vertical - north]
    }

    fn split_is_valid(count: u64, split: &[u64; 4]) -> bool {
        split.iter().sum::<u64>() == count
    }

    fn scatter(self, _count: u64, split: &[u64; 4], mut f: impl FnMut(Self, u64)) {
        let GridSite { x, y } = self;
        let targets = [
            GridSite::new(x + 1, y),
            GridSite::new(x - 1, y),
            GridSite::new(x, y + 1),
            GridSite::new(x, y - 1),
        ];
        for (target, &k) in targets.into_iter().zip(split) {
            if k > 0 {
                f(target, k);
            }
        }
    }
}

/// The randomness realized at one unstable site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteDraw<S: Site> {
    pub site: S,
    pub count: u64,
    pub split: S::Split,
}

impl SiteDraw<LineSite> {
    /// Particles moving right.
    pub fn right(&self) -> u64 {
        self.split
    }

    pub fn left(&self) -> u64 {
        self.count - self.split
    }
}

impl<S: Site> SiteDraw<S> {
    /// Calls `f(target, particles)` for each neighbour receiving particles.
    pub fn targets(&self, f: impl FnMut(S, u64)) {
        self.site.scatter(self.count, &self.split, f)
    }

    /// True when every particle of the stack moves in the same direction.
    pub fn is_monolithic(&self) -> bool {
        let mut directions = 0;
        self.targets(|_, _| directions += 1);
        directions == 1
    }
}

/// All randomness consumed by one synchronous step.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveDraw<S: Site> {
    pub step: u64,
    /// Trial seed keying the stream.
    pub seed: u64,
    /// One entry per site with count >= 2, in ascending site order.
    pub entries: Vec<SiteDraw<S>>,
}

impl<S: Site> MoveDraw<S> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, site: S) -> Option<&SiteDraw<S>> {
        self.entries
            .binary_search_by(|d| d.site.cmp(&site))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// True when some stack of at least `min_size` particles moves as a block.
    pub fn has_monolithic_stack(&self, min_size: f64) -> bool {
        self.entries
            .iter()
            .any(|d| d.count as f64 >= min_size && d.is_monolithic())
    }
}

/// Occupancy of the lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration<S: Site> {
    occupancy: BTreeMap<S, u64>,
    n: u64,
    /// Sites with count >= 2, ascending.
    unstable: Vec<S>,
}

impl<S: Site> Configuration<S> {
    /// `n` particles at the origin.
    pub fn point_mass(n: u64) -> Result<Self> {
        Self::from_counts([(S::origin(), n)])
    }

    /// Builds a configuration from `(site, count)` pairs. Zero counts are
    /// rejected, repeated sites accumulate.
    pub fn from_counts(counts: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        let mut occupancy = BTreeMap::new();
        let mut n = 0u64;
        for (site, count) in counts {
            if count == 0 {
                return Err(Error::invalid(format!("zero count at {site:?}")));
            }
            *occupancy.entry(site).or_insert(0) += count;
            n += count;
        }
        if n == 0 {
            return Err(Error::invalid("configuration needs at least one particle"));
        }
        let unstable = occupancy
            .iter()
            .filter(|&(_, &c)| c >= 2)
            .map(|(&s, _)| s)
            .collect();
        Ok(Configuration { occupancy, n, unstable })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn topology(&self) -> Topology {
        S::TOPOLOGY
    }

    pub fn occupancy(&self) -> &BTreeMap<S, u64> {
        &self.occupancy
    }

    pub fn count(&self, site: S) -> u64 {
        self.occupancy.get(&site).copied().unwrap_or(0)
    }

    pub fn occupied_sites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn unstable_sites(&self) -> &[S] {
        &self.unstable
    }

    pub fn is_settled(&self) -> bool {
        self.unstable.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.occupancy.values().sum()
    }

    /// Draws the split of every unstable stack, visiting sites in ascending
    /// order so the result depends only on the configuration and the stream.
    pub fn sample_moves(&self, rng: &mut StepRng) -> MoveDraw<S> {
        let entries = self
            .unstable
            .iter()
            .map(|&site| {
                let count = self.occupancy[&site];
                SiteDraw {
                    site,
                    count,
                    split: S::sample_split(count, rng),
                }
            })
            .collect();
        MoveDraw {
            step: rng.step(),
            seed: rng.seed(),
            entries,
        }
    }

    /// Applies a draw produced by [`sample_moves`](Self::sample_moves) on this
    /// configuration. The configuration is left untouched on error.
    pub fn apply_moves(&mut self, draw: &MoveDraw<S>) -> Result<()> {
        if draw.entries.len() != self.unstable.len() {
            return Err(Error::inconsistent(format!(
                "draw covers {} sites, configuration has {} unstable sites",
                draw.entries.len(),
                self.unstable.len()
            )));
        }
        for (d, &site) in draw.entries.iter().zip(&self.unstable) {
            if d.site != site {
                return Err(Error::inconsistent(format!(
                    "draw at {:?} but unstable site {:?}",
                    d.site, site
                )));
            }
            let count = self.occupancy[&site];
            if d.count != count {
                return Err(Error::inconsistent(format!(
                    "draw at {site:?} was for {} particles, site holds {count}",
                    d.count
                )));
            }
            if !S::split_is_valid(d.count, &d.split) {
                return Err(Error::inconsistent(format!("malformed split at {site:?}: {d:?}")));
            }
        }

        for d in &draw.entries {
            self.occupancy.remove(&d.site);
        }
        let mut arrivals: Vec<S> = Vec::with_capacity(2 * draw.entries.len());
        for d in &draw.entries {
            d.targets(|target, k| {
                *self.occupancy.entry(target).or_insert(0) += k;
                arrivals.push(target);
            });
        }
        arrivals.sort_unstable();
        arrivals.dedup();
        arrivals.retain(|s| self.occupancy[s] >= 2);
        self.unstable = arrivals;
        Ok(())
    }

    /// One synchronous step. Returns the draw so instrumentation can reuse
    /// the realized randomness.
    pub fn step(&mut self, rng: &mut StepRng) -> Result<MoveDraw<S>> {
        let draw = self.sample_moves(rng);
        self.apply_moves(&draw)?;
        Ok(draw)
    }
}

impl Configuration<LineSite> {
    pub fn min_pos(&self) -> i64 {
        *self.occupancy.keys().next().expect("non-empty")
    }

    pub fn max_pos(&self) -> i64 {
        *self.occupancy.keys().next_back().expect("non-empty")
    }

    /// Largest minus smallest occupied coordinate.
    pub fn span(&self) -> u64 {
        self.max_pos().abs_diff(self.min_pos())
    }

    /// Distance from the origin to the nearest occupied site.
    pub fn closest_distance(&self) -> u64 {
        self.closest_stack().0
    }

    /// `(d, size)`: distance from the origin to the nearest occupied site and
    /// the largest stack at that distance (both sides are considered).
    pub fn closest_stack(&self) -> (u64, u64) {
        let left = self.occupancy.range(..=0).next_back();
        let right = self.occupancy.range(0..).next();
        match (left, right) {
            (Some((&l, &cl)), Some((&r, &cr))) => {
                let (dl, dr) = (l.unsigned_abs(), r.unsigned_abs());
                match dl.cmp(&dr) {
                    std::cmp::Ordering::Less => (dl, cl),
                    std::cmp::Ordering::Greater => (dr, cr),
                    std::cmp::Ordering::Equal => (dl, cl.max(cr)),
                }
            }
            (Some((&l, &c)), None) => (l.unsigned_abs(), c),
            (None, Some((&r, &c))) => (r.unsigned_abs(), c),
            (None, None) => unreachable!("configuration is never empty"),
        }
    }

    /// Neighbouring occupied sites strictly left and right of `site`.
    pub fn neighbours(&self, site: i64) -> (Option<i64>, Option<i64>) {
        let left = self.occupancy.range(..site).next_back().map(|(&s, _)| s);
        let right = self.occupancy.range(site + 1..).next().map(|(&s, _)| s);
        (left, right)
    }
}
