//! The ordered view of a line configuration and the dominating gap coupling.
//!
//! Particles are relabelled after every step so that label order matches
//! position order; the gap sequence `g_j = X_{j+1} - X_j` is then well
//! defined. [`CouplingState`] carries upper bounds `ĝ_j >= 3` driven by the
//! same binomials that moved the configuration:
//!
//! ```text
//! ĝ_{j,0}   = 3
//! ĝ_{j,t+1} = max(3, ĝ_{j,t} + δ̂_{j,t})   if g_{j,t} >= 2
//!           = 3                            otherwise
//! ```
//!
//! and `g_{j,t} <= ĝ_{j,t}` must hold at every step. Indices are 0-based
//! throughout: gap `j` sits between particles `j` and `j + 1`.

use crate::error::{Error, Result};
use crate::process::{Configuration, LineSite, MoveDraw};

/// Sorted particle positions with the derived gap and stack data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedView {
    positions: Vec<i64>,
    gaps: Vec<u64>,
    stack_index: Vec<usize>,
    /// `(site, size)` of every non-empty stack, left to right.
    stacks: Vec<(i64, u64)>,
    active: Vec<usize>,
}

impl OrderedView {
    pub fn new(config: &Configuration<LineSite>) -> Self {
        let n = config.n() as usize;
        let mut positions = Vec::with_capacity(n);
        let mut stack_index = Vec::with_capacity(n);
        let mut stacks = Vec::with_capacity(config.occupied_sites());
        for (rank, (&site, &count)) in config.occupancy().iter().enumerate() {
            stacks.push((site, count));
            for _ in 0..count {
                positions.push(site);
                stack_index.push(rank);
            }
        }
        let gaps: Vec<u64> = positions.windows(2).map(|w| w[1].abs_diff(w[0])).collect();
        let active = gaps
            .iter()
            .enumerate()
            .filter(|&(_, &g)| g >= 2)
            .map(|(j, _)| j)
            .collect();
        OrderedView {
            positions,
            gaps,
            stack_index,
            stacks,
            active,
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// `X_j`, non-decreasing.
    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// `g_j = X_{j+1} - X_j`, length `n - 1`.
    pub fn gaps(&self) -> &[u64] {
        &self.gaps
    }

    /// `s_j`: size of the stack holding particle `j`.
    pub fn stack_size(&self, j: usize) -> u64 {
        self.stacks[self.stack_index[j]].1
    }

    pub fn stack_sizes(&self) -> Vec<u64> {
        (0..self.n()).map(|j| self.stack_size(j)).collect()
    }

    /// `P(j)`: 0-based left-to-right rank of particle `j`'s stack.
    pub fn stack_index(&self) -> &[usize] {
        &self.stack_index
    }

    pub fn stacks(&self) -> &[(i64, u64)] {
        &self.stacks
    }

    /// Number of non-empty stacks.
    pub fn stack_count(&self) -> usize {
        self.stacks.len()
    }

    /// Gap indices with `g_j >= 2`, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.gaps.get(j).is_some_and(|&g| g >= 2)
    }

    /// Particles alone on their site. Kept for completeness; nothing in the
    /// coupling consumes it.
    pub fn singletons(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.stack_size(j) == 1).collect()
    }

    pub fn max_gap(&self) -> u64 {
        self.gaps.iter().copied().max().unwrap_or(0)
    }

    /// Right-mover count drawn for every stack, aligned with [`stacks`].
    /// `None` for singleton stacks.
    ///
    /// [`stacks`]: Self::stacks
    pub fn align_draw(&self, draw: &MoveDraw<LineSite>) -> Result<Vec<Option<u64>>> {
        let mut aligned = vec![None; self.stacks.len()];
        let mut entries = draw.entries.iter().peekable();
        for (slot, &(site, size)) in aligned.iter_mut().zip(&self.stacks) {
            if size < 2 {
                continue;
            }
            match entries.next() {
                Some(d) if d.site == site && d.count == size => *slot = Some(d.right()),
                other => {
                    return Err(Error::inconsistent(format!(
                        "stack of {size} at {site} has no matching draw (found {other:?})"
                    )))
                }
            }
        }
        if let Some(extra) = entries.next() {
            return Err(Error::inconsistent(format!("draw at {} matches no stack", extra.site)));
        }
        Ok(aligned)
    }
}

/// Which row group of the `δ̂` table applies to an active gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeltaCase {
    /// Both neighbouring stacks hold at least two particles.
    BothStacks,
    /// Left stack unstable, right particle alone.
    LeftStack,
    /// Left particle alone, right stack unstable.
    RightStack,
}

impl DeltaCase {
    pub const ALL: [DeltaCase; 3] = [DeltaCase::BothStacks, DeltaCase::LeftStack, DeltaCase::RightStack];

    pub fn classify(left_size: u64, right_size: u64) -> Option<Self> {
        match (left_size >= 2, right_size >= 2) {
            (true, true) => Some(DeltaCase::BothStacks),
            (true, false) => Some(DeltaCase::LeftStack),
            (false, true) => Some(DeltaCase::RightStack),
            (false, false) => None,
        }
    }

    /// Exact probability of the positive branch given the stack sizes.
    pub fn positive_probability(self, left_size: u64, right_size: u64) -> f64 {
        let exponent = match self {
            DeltaCase::BothStacks => left_size + right_size,
            DeltaCase::LeftStack => left_size,
            DeltaCase::RightStack => right_size,
        };
        0.5f64.powi(exponent as i32)
    }

    /// Upper bound on the positive branch annotated in the table.
    pub fn positive_bound(self) -> f64 {
        match self {
            DeltaCase::BothStacks => 1.0 / 16.0,
            DeltaCase::LeftStack | DeltaCase::RightStack => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeltaCase::BothStacks => "both_stacks",
            DeltaCase::LeftStack => "left_stack",
            DeltaCase::RightStack => "right_stack",
        }
    }
}

/// The `δ̂` table. `left_right` and `right_right` are the right-mover
/// counts of the stacks holding particles `j` and `j + 1` (`None` for
/// singletons).
pub fn delta_hat_value(
    active: bool,
    left_size: u64,
    right_size: u64,
    left_right: Option<u64>,
    right_right: Option<u64>,
) -> Result<i8> {
    if !active {
        return Ok(0);
    }
    let need = |size: u64, b: Option<u64>| -> Result<u64> {
        b.ok_or_else(|| Error::inconsistent(format!("no draw for a stack of {size}")))
    };
    Ok(match DeltaCase::classify(left_size, right_size) {
        None => 0,
        Some(DeltaCase::BothStacks) => {
            let bl = need(left_size, left_right)?;
            let br = need(right_size, right_right)?;
            if bl == 0 && br == right_size {
                2
            } else if bl > 0 && br < right_size {
                -2
            } else {
                0
            }
        }
        Some(DeltaCase::LeftStack) => {
            if need(left_size, left_right)? == 0 {
                1
            } else {
                -1
            }
        }
        Some(DeltaCase::RightStack) => {
            if need(right_size, right_right)? == right_size {
                1
            } else {
                -1
            }
        }
    })
}

/// `δ̂_j` for gap `j` of `view` under `draw`.
pub fn delta_hat(view: &OrderedView, draw: &MoveDraw<LineSite>, j: usize) -> Result<i8> {
    if j + 1 >= view.n() {
        return Err(Error::invalid(format!("gap index {j} out of range for n = {}", view.n())));
    }
    let (left_site, left_size) = view.stacks[view.stack_index[j]];
    let (right_site, right_size) = view.stacks[view.stack_index[j + 1]];
    let lookup = |site: i64, size: u64| -> Result<Option<u64>> {
        if size < 2 {
            return Ok(None);
        }
        match draw.get(site) {
            Some(d) if d.count == size => Ok(Some(d.right())),
            _ => Err(Error::inconsistent(format!("missing draw for stack of {size} at {site}"))),
        }
    };
    delta_hat_value(
        view.is_active(j),
        left_size,
        right_size,
        lookup(left_site, left_size)?,
        lookup(right_site, right_size)?,
    )
}

/// `L = ceil((ln n)^2)`, at least 1.
pub fn class_count(n: u64) -> usize {
    let ln = (n as f64).ln();
    ((ln * ln).ceil() as usize).max(1)
}

/// True when some stack of at least `l / 2` particles moves as one block.
pub fn detect_e_event(draw: &MoveDraw<LineSite>, l: usize) -> bool {
    draw.has_monolithic_stack(l as f64 / 2.0)
}

/// `Z_i = Σ_{j ≡ i (mod L)} ĝ_j` with gaps labelled `1..n-1`.
pub fn residue_class_sums(g_hat: &[u64], l: usize) -> Vec<u64> {
    let mut sums = vec![0u64; l];
    for (j, &g) in g_hat.iter().enumerate() {
        sums[(j + 1) % l] += g;
    }
    sums
}

/// Dominating gap bounds plus pooled diagnostics.
#[derive(Clone, Debug)]
pub struct CouplingState {
    g_hat: Vec<u64>,
    classes: usize,
    class_sizes: Vec<u64>,
    /// `tail_histogram[k]` counts pooled values of `ĝ - 3 = k`.
    tail_histogram: Vec<u64>,
    /// Largest `Z_i / |A_i|` seen so far.
    max_class_mean: f64,
    steps: u64,
}

pub const BARRIER: u64 = 3;

impl CouplingState {
    pub fn new(n: u64) -> Self {
        let gaps = n.saturating_sub(1) as usize;
        let classes = class_count(n);
        let mut class_sizes = vec![0u64; classes];
        for j in 0..gaps {
            class_sizes[(j + 1) % classes] += 1;
        }
        let mut state = CouplingState {
            g_hat: vec![BARRIER; gaps],
            classes,
            class_sizes,
            tail_histogram: Vec::new(),
            max_class_mean: 0.0,
            steps: 0,
        };
        state.record();
        state
    }

    pub fn g_hat(&self) -> &[u64] {
        &self.g_hat
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn tail_histogram(&self) -> &[u64] {
        &self.tail_histogram
    }

    pub fn max_class_mean(&self) -> f64 {
        self.max_class_mean
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn residue_sums(&self) -> Vec<u64> {
        residue_class_sums(&self.g_hat, self.classes)
    }

    /// Advances `ĝ` from time `t` to `t + 1`. `view` and `draw` belong to
    /// time `t`. Every computed `δ̂` is also handed to `sink`.
    pub fn update(
        &mut self,
        view: &OrderedView,
        draw: &MoveDraw<LineSite>,
        mut sink: impl FnMut(usize, DeltaCase, u64, u64, i8),
    ) -> Result<()> {
        if view.gaps.len() != self.g_hat.len() {
            return Err(Error::inconsistent("view and coupling disagree on n"));
        }
        let aligned = view.align_draw(draw)?;
        let mut next = vec![BARRIER; self.g_hat.len()];
        for &j in &view.active {
            let li = view.stack_index[j];
            let ri = view.stack_index[j + 1];
            let (ls, rs) = (view.stacks[li].1, view.stacks[ri].1);
            let d = delta_hat_value(true, ls, rs, aligned[li], aligned[ri])?;
            if let Some(case) = DeltaCase::classify(ls, rs) {
                sink(j, case, ls, rs, d);
            }
            next[j] = (self.g_hat[j] as i64 + i64::from(d)).max(BARRIER as i64) as u64;
        }
        self.g_hat = next;
        self.steps += 1;
        self.record();
        Ok(())
    }

    fn record(&mut self) {
        for &g in &self.g_hat {
            let k = (g - BARRIER) as usize;
            if k >= self.tail_histogram.len() {
                self.tail_histogram.resize(k + 1, 0);
            }
            self.tail_histogram[k] += 1;
        }
        for (z, &size) in self.residue_sums().iter().zip(&self.class_sizes) {
            if size > 0 {
                self.max_class_mean = self.max_class_mean.max(*z as f64 / size as f64);
            }
        }
    }

    /// Overwrites the bounds. Only useful for exercising the detectors.
    pub fn force_g_hat(&mut self, g_hat: Vec<u64>) {
        self.g_hat = g_hat;
    }
}

/// Number of gaps with `g_j > ĝ_j`.
pub fn check_domination(view: &OrderedView, state: &CouplingState) -> usize {
    view.gaps
        .iter()
        .zip(&state.g_hat)
        .filter(|(g, h)| g > h)
        .count()
}

/// Number of gaps that moved by more than 2 between two consecutive views.
pub fn gap_jumps(before: &OrderedView, after: &OrderedView) -> usize {
    before
        .gaps
        .iter()
        .zip(&after.gaps)
        .filter(|(a, b)| a.abs_diff(**b) > 2)
        .count()
}

/// Per-case running sums for one row group of the `δ̂` table.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CaseAccumulator {
    pub samples: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub positives: u64,
    /// Σ of the exact positive-branch probabilities of the sampled gaps.
    pub expected_positives: f64,
    /// Σ p (1 - p) over the sampled gaps.
    pub positive_variance: f64,
    pub max_positive_probability: f64,
    pub max_abs: u8,
}

impl CaseAccumulator {
    fn push(&mut self, d: i8, p: f64) {
        self.samples += 1;
        self.sum += f64::from(d);
        self.sum_sq += f64::from(d) * f64::from(d);
        if d > 0 {
            self.positives += 1;
        }
        self.expected_positives += p;
        self.positive_variance += p * (1.0 - p);
        self.max_positive_probability = self.max_positive_probability.max(p);
        self.max_abs = self.max_abs.max(d.unsigned_abs());
    }

    fn merge(&mut self, other: &CaseAccumulator) {
        self.samples += other.samples;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.positives += other.positives;
        self.expected_positives += other.expected_positives;
        self.positive_variance += other.positive_variance;
        self.max_positive_probability = self.max_positive_probability.max(other.max_positive_probability);
        self.max_abs = self.max_abs.max(other.max_abs);
    }
}

/// Empirical law of `δ̂` split by table case.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeltaHatStats {
    cases: [CaseAccumulator; 3],
    /// Largest `|δ̂|` over every sample, inactive gaps included.
    pub max_abs: u8,
    /// `(count, Σx, Σy, Σx², Σy², Σxy)` for pairs of active gaps `lag` apart.
    lag_pairs: [f64; 6],
}

fn case_slot(case: DeltaCase) -> usize {
    match case {
        DeltaCase::BothStacks => 0,
        DeltaCase::LeftStack => 1,
        DeltaCase::RightStack => 2,
    }
}

/// Summary of one table case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub case: DeltaCase,
    pub samples: u64,
    pub mean: f64,
    pub stderr: f64,
    pub positive_frequency: f64,
    pub expected_positive_frequency: f64,
    /// `(positives - expected) / sd` under independent Bernoulli draws.
    pub positive_z: f64,
    pub positive_bound: f64,
    pub max_positive_probability: f64,
}

impl CaseReport {
    pub fn mean_within_drift_bound(&self) -> bool {
        self.mean <= -0.5 + 3.0 * self.stderr
    }

    pub fn frequency_matches(&self) -> bool {
        self.positive_z.abs() <= 3.0
    }

    pub fn respects_annotation(&self) -> bool {
        let se = (self.positive_bound * (1.0 - self.positive_bound) / self.samples.max(1) as f64).sqrt();
        self.max_positive_probability <= self.positive_bound
            && self.positive_frequency <= self.positive_bound + 3.0 * se
    }
}

impl DeltaHatStats {
    pub fn push(&mut self, case: DeltaCase, left_size: u64, right_size: u64, d: i8) {
        let p = case.positive_probability(left_size, right_size);
        self.cases[case_slot(case)].push(d, p);
        self.max_abs = self.max_abs.max(d.unsigned_abs());
    }

    pub fn push_lag_pair(&mut self, x: i8, y: i8) {
        let (x, y) = (f64::from(x), f64::from(y));
        let a = &mut self.lag_pairs;
        a[0] += 1.0;
        a[1] += x;
        a[2] += y;
        a[3] += x * x;
        a[4] += y * y;
        a[5] += x * y;
    }

    pub fn accumulator(&self, case: DeltaCase) -> &CaseAccumulator {
        &self.cases[case_slot(case)]
    }

    pub fn merge(&mut self, other: &DeltaHatStats) {
        for (a, b) in self.cases.iter_mut().zip(&other.cases) {
            a.merge(b);
        }
        self.max_abs = self.max_abs.max(other.max_abs);
        for (a, b) in self.lag_pairs.iter_mut().zip(&other.lag_pairs) {
            *a += b;
        }
    }

    pub fn report(&self, case: DeltaCase) -> CaseReport {
        let acc = self.accumulator(case);
        let n = acc.samples.max(1) as f64;
        let mean = acc.sum / n;
        let var = if acc.samples > 1 {
            ((acc.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let sd = acc.positive_variance.sqrt();
        let positive_z = if sd > 0.0 {
            (acc.positives as f64 - acc.expected_positives) / sd
        } else {
            0.0
        };
        CaseReport {
            case,
            samples: acc.samples,
            mean,
            stderr: (var / n).sqrt(),
            positive_frequency: acc.positives as f64 / n,
            expected_positive_frequency: acc.expected_positives / n,
            positive_z,
            positive_bound: case.positive_bound(),
            max_positive_probability: acc.max_positive_probability,
        }
    }

    pub fn reports(&self) -> Vec<CaseReport> {
        DeltaCase::ALL.iter().map(|&c| self.report(c)).collect()
    }

    /// Pearson correlation of `δ̂` over pairs of active gaps a fixed lag apart.
    pub fn lag_correlation(&self) -> Option<f64> {
        let [n, sx, sy, sxx, syy, sxy] = self.lag_pairs;
        if n < 2.0 {
            return None;
        }
        let cov = sxy / n - (sx / n) * (sy / n);
        let vx = sxx / n - (sx / n).powi(2);
        let vy = syy / n - (sy / n).powi(2);
        if vx <= 0.0 || vy <= 0.0 {
            return None;
        }
        Some(cov / (vx * vy).sqrt())
    }
}

/// Least-squares fit of the log survival of a pooled tail histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoFit {
    pub rho: f64,
    pub r_squared: f64,
    /// Values of `k` entering the fit.
    pub k_range: (usize, usize),
}

/// Minimum number of pooled samples at or beyond `k` for `k` to be fitted.
pub const MIN_TAIL_SAMPLES: u64 = 30;

/// Fits `log Pr(ĝ - 3 >= k)` against `k` over every `k` with at least
/// [`MIN_TAIL_SAMPLES`] samples at or beyond `k`; returns `exp(slope)`.
pub fn estimate_rho(tail_histogram: &[u64]) -> Result<RhoFit> {
    let total: u64 = tail_histogram.iter().sum();
    if total == 0 {
        return Err(Error::NoData("empty tail histogram".into()));
    }
    let mut points = Vec::new();
    let mut beyond = total;
    for (k, &h) in tail_histogram.iter().enumerate() {
        if beyond >= MIN_TAIL_SAMPLES {
            points.push((k as f64, (beyond as f64 / total as f64).ln()));
        }
        beyond -= h;
    }
    if points.len() < 2 {
        return Err(Error::NoData(format!("{} usable survival points", points.len())));
    }
    let fit = crate::stats::linear_fit(&points).ok_or_else(|| Error::NoData("degenerate fit".into()))?;
    Ok(RhoFit {
        rho: fit.slope.exp(),
        r_squared: fit.r_squared,
        k_range: (points[0].0 as usize, points[points.len() - 1].0 as usize),
    })
}

/// Per-trial coupling driver: keeps the time-`t` view and advances the
/// bounds with each realized draw.
#[derive(Clone, Debug)]
pub struct CouplingTracker {
    view: OrderedView,
    state: CouplingState,
    pub stats: DeltaHatStats,
    pub violations: u64,
    pub gap_jumps: u64,
    pub max_gap: u64,
    lag: usize,
}

impl CouplingTracker {
    pub fn new(config: &Configuration<LineSite>) -> Self {
        let view = OrderedView::new(config);
        let state = CouplingState::new(config.n());
        let violations = check_domination(&view, &state) as u64;
        let max_gap = view.max_gap();
        let lag = 3 * state.classes();
        CouplingTracker {
            view,
            state,
            stats: DeltaHatStats::default(),
            violations,
            gap_jumps: 0,
            max_gap,
            lag,
        }
    }

    pub fn view(&self) -> &OrderedView {
        &self.view
    }

    pub fn state(&self) -> &CouplingState {
        &self.state
    }

    /// `draw` was applied to the configuration behind the current view and
    /// produced `next`.
    pub fn advance(&mut self, draw: &MoveDraw<LineSite>, next: &Configuration<LineSite>) -> Result<()> {
        let mut deltas = Vec::with_capacity(self.view.active.len());
        let stats = &mut self.stats;
        self.state.update(&self.view, draw, |j, case, ls, rs, d| {
            stats.push(case, ls, rs, d);
            deltas.push((j, d));
        })?;
        // Pairs of active gaps exactly `lag` apart.
        let mut k = 0;
        for &(j, d) in &deltas {
            while k < deltas.len() && deltas[k].0 < j + self.lag {
                k += 1;
            }
            if k < deltas.len() && deltas[k].0 == j + self.lag {
                self.stats.push_lag_pair(d, deltas[k].1);
            }
        }
        let next_view = OrderedView::new(next);
        self.violations += check_domination(&next_view, &self.state) as u64;
        self.gap_jumps += gap_jumps(&self.view, &next_view) as u64;
        self.max_gap = self.max_gap.max(next_view.max_gap());
        self.view = next_view;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::SiteDraw;

    fn line(counts: &[(i64, u64)]) -> Configuration<LineSite> {
        Configuration::from_counts(counts.iter().copied()).unwrap()
    }

    fn draw(entries: &[(i64, u64, u64)]) -> MoveDraw<LineSite> {
        MoveDraw {
            step: 0,
            seed: 0,
            entries: entries
                .iter()
                .map(|&(site, count, split)| SiteDraw { site, count, split })
                .collect(),
        }
    }

    #[test]
    fn view_of_single_stack() {
        let v = OrderedView::new(&line(&[(0, 3)]));
        assert_eq!(v.positions(), &[0, 0, 0]);
        assert_eq!(v.gaps(), &[0, 0]);
        assert_eq!(v.stack_sizes(), vec![3, 3, 3]);
        assert_eq!(v.stack_count(), 1);
        assert!(v.active().is_empty());
    }

    #[test]
    fn view_unfolds_multiplicity() {
        let v = OrderedView::new(&line(&[(-1, 2), (3, 1)]));
        assert_eq!(v.positions(), &[-1, -1, 3]);
        assert_eq!(v.gaps(), &[0, 4]);
        assert_eq!(v.stack_sizes(), vec![2, 2, 1]);
        assert_eq!(v.active(), &[1]);
        assert_eq!(v.stack_index(), &[0, 0, 1]);
        assert_eq!(v.stack_count(), 2);
        assert_eq!(v.singletons(), vec![2]);
    }

    #[test]
    fn unit_gap_is_inactive() {
        let v = OrderedView::new(&line(&[(0, 1), (1, 1)]));
        assert_eq!(v.gaps(), &[1]);
        assert!(v.active().is_empty());
    }

    #[test]
    fn table_rows() {
        // s_j = s_{j+1} = 2, gap 2.
        let v = OrderedView::new(&line(&[(0, 2), (2, 2)]));
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 0), (2, 2, 2)]), 1).unwrap(), 2);
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 0), (2, 2, 1)]), 1).unwrap(), 0);
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 1), (2, 2, 1)]), 1).unwrap(), -2);
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 2), (2, 2, 2)]), 1).unwrap(), 0);
        // Gaps inside a stack are inactive.
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 0), (2, 2, 2)]), 0).unwrap(), 0);

        // s_j = 2, s_{j+1} = 1, gap 3.
        let v = OrderedView::new(&line(&[(0, 2), (3, 1)]));
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 1)]), 1).unwrap(), -1);
        assert_eq!(delta_hat(&v, &draw(&[(0, 2, 0)]), 1).unwrap(), 1);

        // s_j = 1, s_{j+1} = 2.
        let v = OrderedView::new(&line(&[(0, 1), (4, 2)]));
        assert_eq!(delta_hat(&v, &draw(&[(4, 2, 2)]), 0).unwrap(), 1);
        assert_eq!(delta_hat(&v, &draw(&[(4, 2, 0)]), 0).unwrap(), -1);

        // Gap 1: never active whatever the draw.
        let v = OrderedView::new(&line(&[(0, 2), (1, 2)]));
        for bl in 0..=2 {
            for br in 0..=2 {
                assert_eq!(delta_hat(&v, &draw(&[(0, 2, bl), (1, 2, br)]), 1).unwrap(), 0);
            }
        }

        // Two singletons.
        let v = OrderedView::new(&line(&[(0, 1), (5, 1)]));
        assert_eq!(delta_hat(&v, &draw(&[]), 0).unwrap(), 0);
    }

    #[test]
    fn table_is_total_and_bounded() {
        for ls in 1..=3u64 {
            for rs in 1..=3u64 {
                let lb: Vec<Option<u64>> = if ls >= 2 { (0..=ls).map(Some).collect() } else { vec![None] };
                let rb: Vec<Option<u64>> = if rs >= 2 { (0..=rs).map(Some).collect() } else { vec![None] };
                for &l in &lb {
                    for &r in &rb {
                        for active in [false, true] {
                            let d = delta_hat_value(active, ls, rs, l, r).unwrap();
                            assert!((-2..=2).contains(&d));
                            if !active {
                                assert_eq!(d, 0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn missing_draw_is_an_error() {
        let v = OrderedView::new(&line(&[(0, 2), (3, 1)]));
        assert!(matches!(delta_hat(&v, &draw(&[]), 1), Err(Error::Inconsistent(_))));
        assert!(delta_hat_value(true, 2, 2, None, Some(1)).is_err());
        assert!(delta_hat(&v, &draw(&[(0, 2, 1)]), 2).is_err());
    }

    #[test]
    fn coupling_update_rules() {
        // gap 0 -> j=0 inactive; j=1 active with s_j=2, s_{j+1}=2.
        let c = line(&[(0, 2), (3, 2)]);
        let v = OrderedView::new(&c);
        let mut st = CouplingState::new(4);

        st.force_g_hat(vec![10, 3, 3]);
        st.update(&v, &draw(&[(0, 2, 1), (3, 2, 0)]), |_, _, _, _, _| {}).unwrap();
        // inactive gaps reset to 3, active -2 hits the barrier
        assert_eq!(st.g_hat(), &[3, 3, 3]);

        st.force_g_hat(vec![3, 5, 3]);
        st.update(&v, &draw(&[(0, 2, 0), (3, 2, 2)]), |_, _, _, _, _| {}).unwrap();
        assert_eq!(st.g_hat(), &[3, 7, 3]);
    }

    #[test]
    fn domination_detector() {
        let v = OrderedView::new(&line(&[(0, 3)]));
        let mut st = CouplingState::new(3);
        assert_eq!(check_domination(&v, &st), 0);
        let v = OrderedView::new(&line(&[(0, 1), (2, 1), (9, 1)]));
        st.force_g_hat(vec![0, 0]);
        assert_eq!(check_domination(&v, &st), 2);
    }

    #[test]
    fn e_event() {
        let big = draw(&[(0, 10, 0)]);
        assert!(detect_e_event(&big, 16));
        assert!(!detect_e_event(&draw(&[(0, 10, 3)]), 16));
        assert!(!detect_e_event(&draw(&[(0, 4, 4)]), 16));
    }

    #[test]
    fn residue_sums_partition() {
        let g = vec![3u64; 100];
        let z = residue_class_sums(&g, 10);
        assert!(z.iter().all(|&s| s == 30));
        let g: Vec<u64> = (0..37).map(|i| 3 + i % 5).collect();
        let z = residue_class_sums(&g, 6);
        assert_eq!(z.iter().sum::<u64>(), g.iter().sum::<u64>());
    }

    #[test]
    fn class_count_uses_natural_log() {
        assert_eq!(class_count(1), 1);
        assert_eq!(class_count(200), 29);
        assert_eq!(class_count(1000), 48);
    }

    #[test]
    fn rho_from_exact_geometric() {
        // Survival 2^-k with 2^20 samples.
        let total = 1u64 << 20;
        let hist: Vec<u64> = (0..=20).map(|k| if k < 20 { total >> (k + 1) } else { 1 }).collect();
        let fit = estimate_rho(&hist).unwrap();
        assert!((fit.rho - 0.5).abs() < 1e-9, "{fit:?}");
        assert!(fit.r_squared > 0.999_999);
    }

    #[test]
    fn rho_needs_tail_mass() {
        assert!(matches!(estimate_rho(&[1000]), Err(Error::NoData(_))));
        assert!(estimate_rho(&[]).is_err());
    }

    #[test]
    fn exact_case_means() {
        // s_j = 2, s_{j+1} = 1: (+1)(1/4) + (-1)(3/4) = -1/2
        let p = DeltaCase::LeftStack.positive_probability(2, 1);
        assert_eq!(p, 0.25);
        assert_eq!(p - (1.0 - p), -0.5);
        // s_j = s_{j+1} = 2: 2/16 - 2 * 9/16 = -1
        let p = DeltaCase::BothStacks.positive_probability(2, 2);
        assert_eq!(p, 1.0 / 16.0);
        assert_eq!(2.0 * p - 2.0 * (0.75 * 0.75), -1.0);
    }
}
