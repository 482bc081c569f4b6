//! Running one trial from a point mass to its stopping time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordered::{class_count, CouplingTracker, DeltaHatStats};
use crate::process::{Configuration, GridSite, LineSite, MoveDraw, Topology};
use crate::rng::StepRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrumentation {
    /// Stopping time and final extent only.
    None,
    /// Adds running gap maxima and the closest-particle drift counts.
    Stats,
    /// Adds the ordered view and the dominating coupling (line only).
    Coupling,
}

impl std::str::FromStr for Instrumentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Instrumentation::None),
            "stats" => Ok(Instrumentation::Stats),
            "coupling" => Ok(Instrumentation::Coupling),
            other => Err(Error::invalid(format!("unknown instrumentation level {other:?}"))),
        }
    }
}

/// `max(10^6, 50 n^2)`.
pub fn default_max_steps(n: u64) -> u64 {
    50u64.saturating_mul(n.saturating_mul(n)).max(1_000_000)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n: u64,
    pub topology: Topology,
    pub seed: u64,
    /// Defaults to [`default_max_steps`].
    pub max_steps: Option<u64>,
    pub instrumentation: Instrumentation,
    /// Keep a per-step trace of span, closest distance and largest gap.
    pub trace: bool,
}

impl TrialSpec {
    pub fn new(n: u64, topology: Topology, seed: u64) -> Self {
        TrialSpec {
            n,
            topology,
            seed,
            max_steps: None,
            instrumentation: Instrumentation::None,
            trace: false,
        }
    }

    pub fn instrument(mut self, level: Instrumentation) -> Self {
        self.instrumentation = level;
        self
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps.unwrap_or_else(|| default_max_steps(self.n))
    }
}

/// Outcome of one trial.
///
/// On the grid `min_pos` and `max_pos` are the smallest and largest
/// Chebyshev norms of occupied sites and `span` is their difference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n: u64,
    pub topology: Topology,
    #[serde(rename = "T")]
    pub stopping_time: u64,
    pub min_pos: i64,
    pub max_pos: i64,
    pub span: u64,
    /// Largest distance from the origin to the nearest particle over the run.
    pub max_d: Option<u64>,
    /// Largest gap between consecutive particles over the run.
    pub max_gap: Option<u64>,
    pub e_events: u64,
    pub domination_violations: u64,
    pub capped: bool,
    /// Particle count at the end equals `n`.
    pub conserved: bool,
}

impl TrialRecord {
    /// `(n - 1) / span` for settled line trials.
    pub fn density(&self) -> Option<f64> {
        (self.topology == Topology::Line && !self.capped && self.span > 0)
            .then(|| (self.n - 1) as f64 / self.span as f64)
    }
}

/// Counts for the closest-particle drift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftCounts {
    /// Steps with `d_t != 0` and a closest stack of two or more.
    pub qualifying_steps: u64,
    pub decreases: u64,
    /// Σ (1 - 2^-Λ_t) over qualifying steps.
    pub expected_decreases: f64,
    /// Steps with `d_t != 0` where every closest stack is a singleton.
    pub singleton_steps: u64,
    pub singleton_changes: u64,
}

impl DriftCounts {
    pub fn merge(&mut self, other: &DriftCounts) {
        self.qualifying_steps += other.qualifying_steps;
        self.decreases += other.decreases;
        self.expected_decreases += other.expected_decreases;
        self.singleton_steps += other.singleton_steps;
        self.singleton_changes += other.singleton_changes;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub span: u64,
    pub d: u64,
    pub max_gap: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FinalConfiguration {
    Line(Configuration<LineSite>),
    Grid(Configuration<GridSite>),
}

/// Everything a trial measured beyond its record.
#[derive(Clone, Debug)]
pub struct TrialDiagnostics {
    pub drift: DriftCounts,
    pub delta_hat: Option<DeltaHatStats>,
    /// Pooled histogram of `ĝ - 3` (coupling level).
    pub tail_histogram: Vec<u64>,
    /// Largest residue-class mean `Z_i / |A_i|` (coupling level).
    pub max_class_mean: Option<f64>,
    /// Gaps that moved by more than 2 in one step (coupling level).
    pub gap_jumps: u64,
    pub trace: Vec<TraceRow>,
    pub final_configuration: FinalConfiguration,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub diagnostics: TrialDiagnostics,
}

pub fn run_trial(spec: &TrialSpec) -> Result<TrialOutcome> {
    if spec.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if spec.max_steps() == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    match spec.topology {
        Topology::Line => run_line(spec),
        Topology::Grid2D => {
            if spec.instrumentation == Instrumentation::Coupling {
                return Err(Error::invalid("the gap coupling is defined on the line only"));
            }
            run_grid(spec)
        }
    }
}

/// Largest gap between consecutive occupied sites created by `draw`.
fn new_gaps_max(config: &Configuration<LineSite>, draw: &MoveDraw<LineSite>) -> u64 {
    let mut best = 0;
    let mut touched: Vec<i64> = draw.entries.iter().flat_map(|d| [d.site - 1, d.site, d.site + 1]).collect();
    touched.dedup();
    for c in touched {
        let (left, right) = config.neighbours(c);
        if config.count(c) > 0 {
            if let Some(l) = left {
                best = best.max(c.abs_diff(l));
            }
            if let Some(r) = right {
                best = best.max(r.abs_diff(c));
            }
        } else if let (Some(l), Some(r)) = (left, right) {
            best = best.max(r.abs_diff(l));
        }
    }
    best
}

fn scan_max_gap(config: &Configuration<LineSite>) -> u64 {
    let sites: Vec<i64> = config.occupancy().keys().copied().collect();
    sites.windows(2).map(|w| w[1].abs_diff(w[0])).max().unwrap_or(0)
}

fn run_line(spec: &TrialSpec) -> Result<TrialOutcome> {
    let n = spec.n;
    let max_steps = spec.max_steps();
    let level = spec.instrumentation;
    let classes = class_count(n);
    let mut config = Configuration::<LineSite>::point_mass(n)?;
    let mut coupling = (level == Instrumentation::Coupling).then(|| CouplingTracker::new(&config));
    let mut drift = DriftCounts::default();
    let mut trace = Vec::new();
    let mut max_gap = 0u64;
    let mut e_events = 0u64;
    let mut closest = config.closest_stack();
    let mut max_d = closest.0;
    let mut t = 0u64;

    if spec.trace {
        trace.push(TraceRow { t, span: config.span(), d: closest.0, max_gap: scan_max_gap(&config) });
    }
    while !config.is_settled() && t < max_steps {
        let mut rng = StepRng::new(spec.seed, t);
        let draw = config.sample_moves(&mut rng);
        if draw.has_monolithic_stack(classes as f64 / 2.0) {
            e_events += 1;
        }
        config.apply_moves(&draw)?;
        t += 1;

        let (d_prev, stack_prev) = closest;
        closest = config.closest_stack();
        max_d = max_d.max(closest.0);
        if level >= Instrumentation::Stats {
            max_gap = max_gap.max(new_gaps_max(&config, &draw));
            if d_prev != 0 {
                if stack_prev >= 2 {
                    drift.qualifying_steps += 1;
                    drift.expected_decreases += 1.0 - 0.5f64.powi(stack_prev.min(1024) as i32);
                    if closest.0 < d_prev {
                        drift.decreases += 1;
                    }
                } else {
                    drift.singleton_steps += 1;
                    if closest.0 != d_prev {
                        drift.singleton_changes += 1;
                    }
                }
            }
        }
        if let Some(tracker) = coupling.as_mut() {
            tracker.advance(&draw, &config)?;
        }
        if spec.trace {
            trace.push(TraceRow { t, span: config.span(), d: closest.0, max_gap: scan_max_gap(&config) });
        }
    }

    let (delta_hat, tail_histogram, max_class_mean, gap_jumps, violations) = match coupling {
        Some(tracker) => {
            max_gap = max_gap.max(tracker.max_gap);
            (
                Some(tracker.stats.clone()),
                tracker.state().tail_histogram().to_vec(),
                Some(tracker.state().max_class_mean()),
                tracker.gap_jumps,
                tracker.violations,
            )
        }
        None => (None, Vec::new(), None, 0, 0),
    };

    let record = TrialRecord {
        seed: spec.seed,
        n,
        topology: Topology::Line,
        stopping_time: t,
        min_pos: config.min_pos(),
        max_pos: config.max_pos(),
        span: config.span(),
        max_d: Some(max_d),
        max_gap: (level >= Instrumentation::Stats).then_some(max_gap),
        e_events,
        domination_violations: violations,
        capped: !config.is_settled(),
        conserved: config.total() == n,
    };
    Ok(TrialOutcome {
        record,
        diagnostics: TrialDiagnostics {
            drift,
            delta_hat,
            tail_histogram,
            max_class_mean,
            gap_jumps,
            trace,
            final_configuration: FinalConfiguration::Line(config),
        },
    })
}

fn closest_chebyshev(config: &Configuration<GridSite>) -> u64 {
    config.occupancy().keys().map(|s| s.chebyshev()).min().unwrap_or(0)
}

fn run_grid(spec: &TrialSpec) -> Result<TrialOutcome> {
    let n = spec.n;
    let max_steps = spec.max_steps();
    let stats = spec.instrumentation >= Instrumentation::Stats;
    let classes = class_count(n);
    let mut config = Configuration::<GridSite>::point_mass(n)?;
    let mut e_events = 0u64;
    let mut max_d = 0u64;
    let mut t = 0u64;
    while !config.is_settled() && t < max_steps {
        let mut rng = StepRng::new(spec.seed, t);
        let draw = config.step(&mut rng)?;
        if draw.has_monolithic_stack(classes as f64 / 2.0) {
            e_events += 1;
        }
        t += 1;
        if stats {
            max_d = max_d.max(closest_chebyshev(&config));
        }
    }
    let norms = config.occupancy().keys().map(|s| s.chebyshev());
    let (min_r, max_r) = norms.fold((u64::MAX, 0), |(lo, hi), r| (lo.min(r), hi.max(r)));
    let record = TrialRecord {
        seed: spec.seed,
        n,
        topology: Topology::Grid2D,
        stopping_time: t,
        min_pos: min_r as i64,
        max_pos: max_r as i64,
        span: max_r - min_r,
        max_d: stats.then_some(max_d),
        max_gap: None,
        e_events,
        domination_violations: 0,
        capped: !config.is_settled(),
        conserved: config.total() == n,
    };
    Ok(TrialOutcome {
        record,
        diagnostics: TrialDiagnostics {
            drift: DriftCounts::default(),
            delta_hat: None,
            tail_histogram: Vec::new(),
            max_class_mean: None,
            gap_jumps: 0,
            trace: Vec::new(),
            final_configuration: FinalConfiguration::Grid(config),
        },
    })
}
