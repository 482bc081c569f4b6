//! Seeded Monte Carlo experiments over batches of trials.
//!
//! Trials are independent and run in parallel; every result is keyed by
//! `(n, trial_index)` and sorted before aggregation or serialization, so
//! output does not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordered::{estimate_rho, CaseReport, DeltaHatStats, RhoFit};
use crate::process::{GridSite, Topology};
use crate::rng::mix64;
use crate::shape2d::{shape_metrics, ShapeMetrics};
use crate::stats::{linear_fit, mean, quantile_sorted, std_dev};
use crate::trial::{run_trial, DriftCounts, FinalConfiguration, Instrumentation, TrialRecord, TrialSpec};
use crate::Configuration;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub n_values: Vec<u64>,
    pub trials_per_n: u64,
    pub base_seed: u64,
    pub topology: Topology,
    pub instrumentation: Instrumentation,
    pub max_steps: Option<u64>,
}

impl ExperimentPlan {
    pub fn new(n_values: Vec<u64>, trials_per_n: u64, base_seed: u64) -> Self {
        ExperimentPlan {
            n_values,
            trials_per_n,
            base_seed,
            topology: Topology::Line,
            instrumentation: Instrumentation::None,
            max_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::invalid("plan has no n values"));
        }
        if self.trials_per_n == 0 || self.trials_per_n > u64::from(u32::MAX) {
            return Err(Error::invalid("trials per n must lie in 1..2^32"));
        }
        for &n in &self.n_values {
            if n == 0 || n > u64::from(u32::MAX) {
                return Err(Error::invalid(format!("n = {n} out of range")));
            }
        }
        if self.max_steps == Some(0) {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if self.topology == Topology::Grid2D && self.instrumentation == Instrumentation::Coupling {
            return Err(Error::invalid("coupling instrumentation needs the line"));
        }
        Ok(())
    }

    /// `base_seed ^ mix64(n << 32 | trial_index)`. Injective in
    /// `(n, trial_index)` for a fixed base seed.
    pub fn trial_seed(&self, n: u64, trial_index: u64) -> u64 {
        self.base_seed ^ mix64((n << 32) | trial_index)
    }

    pub fn trial_spec(&self, n: u64, trial_index: u64) -> TrialSpec {
        TrialSpec {
            n,
            topology: self.topology,
            seed: self.trial_seed(n, trial_index),
            max_steps: self.max_steps,
            instrumentation: self.instrumentation,
            trace: false,
        }
    }

    /// Short stable identifier derived from the plan contents.
    pub fn plan_id(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        let h = json
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
        format!("{:016x}", mix64(h))
    }
}

/// A trial record with the diagnostics the summaries need.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial_index: u64,
    pub record: TrialRecord,
    pub drift: DriftCounts,
    pub delta_hat: Option<DeltaHatStats>,
    pub tail_histogram: Vec<u64>,
    pub max_class_mean: Option<f64>,
    pub gap_jumps: u64,
    pub shape: Option<ShapeMetrics>,
    /// Final grid configuration, kept for snapshots.
    pub grid_final: Option<Configuration<GridSite>>,
}

impl TrialResult {
    pub fn key(&self) -> (u64, u64) {
        (self.record.n, self.trial_index)
    }
}

pub fn run_single(plan: &ExperimentPlan, n: u64, trial_index: u64) -> Result<TrialResult> {
    let out = run_trial(&plan.trial_spec(n, trial_index))?;
    let d = out.diagnostics;
    let (shape, grid_final) = match d.final_configuration {
        FinalConfiguration::Grid(c) => {
            let shape = if c.is_settled() { Some(shape_metrics(&c)?) } else { None };
            (shape, Some(c))
        }
        FinalConfiguration::Line(_) => (None, None),
    };
    Ok(TrialResult {
        trial_index,
        record: out.record,
        drift: d.drift,
        delta_hat: d.delta_hat,
        tail_histogram: d.tail_histogram,
        max_class_mean: d.max_class_mean,
        gap_jumps: d.gap_jumps,
        shape,
        grid_final,
    })
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    /// Sorted by `(n, trial_index)`.
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
}

/// Runs every trial of `plan` on the current rayon pool.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let keys: Vec<(u64, u64)> = plan
        .n_values
        .iter()
        .flat_map(|&n| (0..plan.trials_per_n).map(move |i| (n, i)))
        .collect();
    let mut trials = keys
        .par_iter()
        .map(|&(n, i)| run_single(plan, n, i))
        .collect::<Result<Vec<_>>>()?;
    trials.sort_by_key(TrialResult::key);
    let summary = Summary::from_results(plan.topology, &trials);
    Ok(ExperimentResult {
        plan: plan.clone(),
        trials,
        summary,
    })
}

/// Pooled raw material for one value of `n`. Merging concatenates; all
/// statistics are computed from sorted samples so merge order is irrelevant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NAccumulator {
    pub trials: u64,
    pub capped: u64,
    pub spans: Vec<f64>,
    pub stopping_times: Vec<f64>,
    pub max_ds: Vec<f64>,
    pub densities: Vec<f64>,
    pub max_gaps: Vec<u64>,
    pub e_events: u64,
    pub violations: u64,
    pub gap_jumps: u64,
    pub nonconserved: u64,
    pub tail_histogram: Vec<u64>,
    pub delta_hat: DeltaHatStats,
    pub drift: DriftCounts,
    pub max_class_mean: f64,
    pub shapes: Vec<[f64; 4]>,
}

impl NAccumulator {
    fn push(&mut self, r: &TrialResult) {
        let rec = &r.record;
        self.trials += 1;
        self.e_events += rec.e_events;
        self.violations += rec.domination_violations;
        self.gap_jumps += r.gap_jumps;
        if !rec.conserved {
            self.nonconserved += 1;
        }
        if rec.capped {
            self.capped += 1;
            return;
        }
        self.spans.push(rec.span as f64);
        self.stopping_times.push(rec.stopping_time as f64);
        if let Some(d) = rec.max_d {
            self.max_ds.push(d as f64);
        }
        if let Some(g) = rec.max_gap {
            self.max_gaps.push(g);
        }
        if let Some(d) = rec.density() {
            self.densities.push(d);
        }
        add_histogram(&mut self.tail_histogram, &r.tail_histogram);
        if let Some(s) = &r.delta_hat {
            self.delta_hat.merge(s);
        }
        self.drift.merge(&r.drift);
        if let Some(m) = r.max_class_mean {
            self.max_class_mean = self.max_class_mean.max(m);
        }
        if let Some(s) = &r.shape {
            self.shapes.push([s.r_max, s.r_inf as f64, s.disk_density, s.anisotropy]);
        }
    }

    pub fn merge(&mut self, other: &NAccumulator) {
        self.trials += other.trials;
        self.capped += other.capped;
        self.spans.extend_from_slice(&other.spans);
        self.stopping_times.extend_from_slice(&other.stopping_times);
        self.max_ds.extend_from_slice(&other.max_ds);
        self.densities.extend_from_slice(&other.densities);
        self.max_gaps.extend_from_slice(&other.max_gaps);
        self.e_events += other.e_events;
        self.violations += other.violations;
        self.gap_jumps += other.gap_jumps;
        self.nonconserved += other.nonconserved;
        add_histogram(&mut self.tail_histogram, &other.tail_histogram);
        self.delta_hat.merge(&other.delta_hat);
        self.drift.merge(&other.drift);
        self.max_class_mean = self.max_class_mean.max(other.max_class_mean);
        self.shapes.extend_from_slice(&other.shapes);
    }

    pub fn settled(&self) -> u64 {
        self.trials - self.capped
    }

    pub fn rho_fit(&self) -> Option<RhoFit> {
        estimate_rho(&self.tail_histogram).ok()
    }

    pub fn delta_reports(&self) -> Vec<CaseReport> {
        self.delta_hat.reports()
    }
}

fn add_histogram(into: &mut Vec<u64>, from: &[u64]) {
    if from.len() > into.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: u64,
    pub trials: u64,
    pub mean_span: f64,
    pub sd_span: f64,
    pub q05_span: f64,
    pub q50_span: f64,
    pub q95_span: f64,
    pub mean_t: f64,
    pub sd_t: f64,
    pub mean_max_d: f64,
    pub mean_density: f64,
    pub rho_hat: Option<f64>,
    pub e_events: u64,
    pub violations: u64,
    pub capped: u64,
    /// Grid only: means of `r_max`, `r_inf`, disk density and anisotropy.
    pub shape: Option<[f64; 4]>,
}

impl SummaryRow {
    pub fn mean_span_over_n(&self) -> f64 {
        self.mean_span / self.n as f64
    }
}

pub const SUMMARY_HEADER: &str =
    "n,trials,mean_span,sd_span,q05_span,q50_span,q95_span,mean_T,sd_T,mean_max_d,mean_density,rho_hat,e_events,violations,capped";

pub const SHAPE_COLUMNS: &str = "mean_r_max,mean_r_inf,mean_disk_density,mean_anisotropy";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub topology: Option<Topology>,
    pub per_n: BTreeMap<u64, NAccumulator>,
}

impl Summary {
    pub fn from_results(topology: Topology, results: &[TrialResult]) -> Self {
        let mut per_n: BTreeMap<u64, NAccumulator> = BTreeMap::new();
        for r in results {
            per_n.entry(r.record.n).or_default().push(r);
        }
        Summary {
            topology: Some(topology),
            per_n,
        }
    }

    pub fn merge(&self, other: &Summary) -> Summary {
        let mut out = self.clone();
        if out.topology.is_none() {
            out.topology = other.topology;
        }
        for (n, acc) in &other.per_n {
            out.per_n.entry(*n).or_default().merge(acc);
        }
        out
    }

    pub fn rows(&self) -> Vec<SummaryRow> {
        self.per_n
            .iter()
            .map(|(&n, acc)| {
                let spans = sorted(&acc.spans);
                let ts = sorted(&acc.stopping_times);
                let shape = (!acc.shapes.is_empty()).then(|| {
                    let mut cols = [0.0; 4];
                    for (i, c) in cols.iter_mut().enumerate() {
                        *c = mean(&sorted(&acc.shapes.iter().map(|s| s[i]).collect::<Vec<_>>()));
                    }
                    cols
                });
                SummaryRow {
                    n,
                    trials: acc.trials,
                    mean_span: mean(&spans),
                    sd_span: std_dev(&spans),
                    q05_span: quantile_sorted(&spans, 0.05),
                    q50_span: quantile_sorted(&spans, 0.5),
                    q95_span: quantile_sorted(&spans, 0.95),
                    mean_t: mean(&ts),
                    sd_t: std_dev(&ts),
                    mean_max_d: mean(&sorted(&acc.max_ds)),
                    mean_density: mean(&sorted(&acc.densities)),
                    rho_hat: acc.rho_fit().map(|f| f.rho),
                    e_events: acc.e_events,
                    violations: acc.violations,
                    capped: acc.capped,
                    shape,
                }
            })
            .collect()
    }

    /// CSV body: header line plus one line per `n`.
    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let with_shape = self.topology == Some(Topology::Grid2D);
        let mut out = String::from(SUMMARY_HEADER);
        if with_shape {
            out.push(',');
            out.push_str(SHAPE_COLUMNS);
        }
        out.push('\n');
        for r in rows {
            let rho = r.rho_hat.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.trials,
                fmt_f(r.mean_span),
                fmt_f(r.sd_span),
                fmt_f(r.q05_span),
                fmt_f(r.q50_span),
                fmt_f(r.q95_span),
                fmt_f(r.mean_t),
                fmt_f(r.sd_t),
                fmt_f(r.mean_max_d),
                fmt_f(r.mean_density),
                rho,
                r.e_events,
                r.violations,
                r.capped
            );
            if with_shape {
                let s = r.shape.unwrap_or([f64::NAN; 4]);
                let _ = write!(out, ",{},{},{},{}", fmt_f(s[0]), fmt_f(s[1]), fmt_f(s[2]), fmt_f(s[3]));
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.6}")
    }
}

/// Linear versus `n log n` growth of the mean span.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    /// `(n, mean span / n, mean span / (n ln n))`.
    pub points: Vec<(u64, f64, f64)>,
    /// `max / min` of mean span / n.
    pub flatness: f64,
    /// Mean span / (n ln n) strictly decreasing in `n`.
    pub log_ratio_decreasing: bool,
    /// Slope of log mean span against log n.
    pub alpha: f64,
    pub alpha_r_squared: f64,
}

/// Smallest accepted `n_max / n_min` for a scaling fit.
pub const MIN_SCALING_RANGE: f64 = 8.0;

/// `means` holds `(n, mean span)` pairs.
pub fn fit_scaling(means: &[(u64, f64)]) -> Result<ScalingReport> {
    let mut pts: Vec<(u64, f64)> = means.to_vec();
    pts.sort_by_key(|p| p.0);
    pts.dedup_by_key(|p| p.0);
    if pts.len() < 3 {
        return Err(Error::invalid("scaling fit needs at least 3 distinct n"));
    }
    let (lo, hi) = (pts[0].0 as f64, pts[pts.len() - 1].0 as f64);
    if hi / lo < MIN_SCALING_RANGE {
        return Err(Error::invalid(format!("n range {lo}..{hi} is too narrow for a scaling fit")));
    }
    if pts.iter().any(|p| p.0 < 2 || p.1.is_nan() || p.1 <= 0.0) {
        return Err(Error::invalid("scaling fit needs n >= 2 and positive spans"));
    }
    let points: Vec<(u64, f64, f64)> = pts
        .iter()
        .map(|&(n, s)| {
            let n_f = n as f64;
            (n, s / n_f, s / (n_f * n_f.ln()))
        })
        .collect();
    let ratios: Vec<f64> = points.iter().map(|p| p.1).collect();
    let flatness = ratios.iter().copied().fold(f64::MIN, f64::max) / ratios.iter().copied().fold(f64::MAX, f64::min);
    let log_ratio_decreasing = points.windows(2).all(|w| w[1].2 < w[0].2);
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(n, s)| ((n as f64).ln(), s.ln())).collect();
    let fit = linear_fit(&logs).ok_or_else(|| Error::invalid("degenerate scaling fit"))?;
    Ok(ScalingReport {
        points,
        flatness,
        log_ratio_decreasing,
        alpha: fit.slope,
        alpha_r_squared: fit.r_squared,
    })
}

/// Closest-particle drift toward the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub qualifying_steps: u64,
    pub decrease_frequency: f64,
    pub stderr: f64,
    /// Mean of the exact per-step decrease probabilities `1 - 2^-Λ`.
    pub expected_frequency: f64,
    pub singleton_steps: u64,
    pub singleton_changes: u64,
    /// `(n, max_t d_t, 10 ln n)` per trial.
    pub max_d: Vec<(u64, u64, f64)>,
}

impl DriftReport {
    pub fn frequency_ok(&self) -> bool {
        self.decrease_frequency >= 0.75 - 3.0 * self.stderr
    }

    pub fn max_d_ok(&self) -> bool {
        self.max_d.iter().all(|&(_, d, bound)| d as f64 <= bound)
    }
}

pub fn drift_check(trials: &[TrialResult]) -> Result<DriftReport> {
    let mut drift = DriftCounts::default();
    let mut max_d = Vec::new();
    for t in trials {
        drift.merge(&t.drift);
        if let Some(d) = t.record.max_d {
            max_d.push((t.record.n, d, 10.0 * (t.record.n as f64).ln()));
        }
    }
    if drift.qualifying_steps == 0 {
        return Err(Error::NoData("no steps with d != 0 and a closest stack of two or more".into()));
    }
    let q = drift.qualifying_steps as f64;
    let f = drift.decreases as f64 / q;
    Ok(DriftReport {
        qualifying_steps: drift.qualifying_steps,
        decrease_frequency: f,
        stderr: (f * (1.0 - f) / q).sqrt(),
        expected_frequency: drift.expected_decreases / q,
        singleton_steps: drift.singleton_steps,
        singleton_changes: drift.singleton_changes,
        max_d,
    })
}

/// Largest observed gap per trial against `(ln n)²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    /// `(n, max gap, (ln n)²)`.
    pub per_trial: Vec<(u64, u64, f64)>,
    /// Entries of `per_trial` with `n >= 100` whose gap reached the bound.
    pub flagged: Vec<(u64, u64, f64)>,
}

impl GapReport {
    pub fn ok(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Takes `(n, max gap)` pairs.
pub fn gap_tail_check(max_gaps: &[(u64, u64)]) -> GapReport {
    let per_trial: Vec<(u64, u64, f64)> = max_gaps
        .iter()
        .map(|&(n, g)| (n, g, (n as f64).ln().powi(2)))
        .collect();
    let flagged = per_trial
        .iter()
        .copied()
        .filter(|&(n, g, bound)| n >= 100 && g as f64 >= bound)
        .collect();
    GapReport { per_trial, flagged }
}

pub fn gap_tail_check_trials(trials: &[TrialResult]) -> GapReport {
    let pairs: Vec<(u64, u64)> = trials
        .iter()
        .filter_map(|t| t.record.max_gap.map(|g| (t.record.n, g)))
        .collect();
    gap_tail_check(&pairs)
}

/// A JSONL line: the trial record plus the plan identifier.
#[derive(Serialize)]
struct JsonlRecord<'a> {
    #[serde(flatten)]
    record: &'a TrialRecord,
    plan_id: &'a str,
}

/// First line of every output file.
pub fn config_header(value: &impl Serialize) -> String {
    format!("# config: {}", serde_json::to_string(value).expect("config serializes"))
}

pub fn timestamp_header() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# timestamp: {secs}")
}

pub fn jsonl_text(result: &ExperimentResult, timestamp: &str) -> Result<String> {
    let plan_id = result.plan.plan_id();
    let mut out = format!("{}\n{timestamp}\n", config_header(&result.plan));
    for t in &result.trials {
        out.push_str(&serde_json::to_string(&JsonlRecord {
            record: &t.record,
            plan_id: &plan_id,
        })?);
        out.push('\n');
    }
    Ok(out)
}

pub fn summary_csv_text(result: &ExperimentResult, timestamp: &str) -> String {
    format!("{}\n{timestamp}\n{}", config_header(&result.plan), result.summary.to_csv())
}

/// Gnuplot-ready `n <tab> mean span / n`.
pub fn scaling_tsv_text(result: &ExperimentResult) -> String {
    let mut out = format!("{}\n# n\tmean_span_over_n\n", config_header(&result.plan));
    for r in result.summary.rows() {
        let _ = writeln!(out, "{}\t{:.6}", r.n, r.mean_span_over_n());
    }
    out
}

/// Gnuplot-ready pooled survival `Pr(ĝ - 3 >= k)` per `n`, blank-line separated.
pub fn survival_tsv_text(result: &ExperimentResult) -> String {
    let mut out = format!("{}\n# n\tk\tsurvival\n", config_header(&result.plan));
    for (n, acc) in &result.summary.per_n {
        let total: u64 = acc.tail_histogram.iter().sum();
        if total == 0 {
            continue;
        }
        let mut beyond = total;
        for (k, &h) in acc.tail_histogram.iter().enumerate() {
            let _ = writeln!(out, "{n}\t{k}\t{:.9e}", beyond as f64 / total as f64);
            beyond -= h;
        }
        out.push('\n');
    }
    out
}

/// Writes `trials.jsonl`, `summary.csv`, `scaling.tsv` and
/// `ghat_survival.tsv` into `dir`. On failure a `MANIFEST.partial` listing
/// the files already written is left behind.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ts = timestamp_header();
    let files: Vec<(&str, String)> = vec![
        ("trials.jsonl", jsonl_text(result, &ts)?),
        ("summary.csv", summary_csv_text(result, &ts)),
        ("scaling.tsv", scaling_tsv_text(result)),
        ("ghat_survival.tsv", survival_tsv_text(result)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, text) {
            let manifest: String = written.iter().map(|p: &PathBuf| format!("{}\n", p.display())).collect();
            let _ = fs::write(dir.join("MANIFEST.partial"), manifest);
            return Err(Error::io(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}
