//! Simulation and instrumentation of the synchronous dispersion process.
//!
//! `n` particles start on one vertex of the infinite line (or the square
//! grid). At every step each particle sharing its vertex with another one
//! jumps to a uniformly random neighbour; the process stops once every
//! vertex holds at most one particle.
//!
//! Besides the simulator the crate carries the machinery used to study the
//! line process: the ordered (relabelled) view with its gap sequence, a
//! pathwise dominating coupling of the gaps driven by the same binomials,
//! an exact certification of the geometric-tail concentration inequality,
//! a seeded Monte Carlo harness and exploratory 2D shape metrics.

pub mod cli;
pub mod concentration;
pub mod error;
pub mod harness;
pub mod ordered;
pub mod process;
pub mod rng;
pub mod shape2d;
pub mod stats;
pub mod trial;

pub use error::{Error, Result};
pub use process::{Configuration, GridSite, LineSite, MoveDraw, Site, SiteDraw, Topology};
pub use rng::StepRng;
pub use trial::{run_trial, Instrumentation, TrialOutcome, TrialRecord, TrialSpec};
