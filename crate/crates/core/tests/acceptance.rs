//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Takes several minutes on one core.

use std::process::ExitCode;
use std::time::Instant;

use dispersion::concentration::{certify, TailSpec};
use dispersion::harness::{
    drift_check, fit_scaling, gap_tail_check_trials, run_experiment, ExperimentPlan, ExperimentResult, NAccumulator,
    TrialResult,
};
use dispersion::ordered::{estimate_rho, DeltaHatStats};
use dispersion::process::{Configuration, LineSite};
use dispersion::rng::StepRng;
use dispersion::stats::chi_square;
use dispersion::Instrumentation;

const BASE_SEED: u64 = 1;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} [{id:>2}] {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn plan(n_values: Vec<u64>, trials: u64, level: Instrumentation) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(n_values, trials, BASE_SEED);
    p.instrumentation = level;
    p
}

fn run(p: &ExperimentPlan) -> ExperimentResult {
    let start = Instant::now();
    let r = run_experiment(p).expect("experiment runs");
    eprintln!(
        "  ran n={:?} x {} ({:?}) in {:.1}s",
        p.n_values,
        p.trials_per_n,
        p.instrumentation,
        start.elapsed().as_secs_f64()
    );
    r
}

fn acc(result: &ExperimentResult, n: u64) -> &NAccumulator {
    &result.summary.per_n[&n]
}

fn e_events(trials: &[TrialResult]) -> u64 {
    trials.iter().map(|t| t.record.e_events).sum()
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let total = Instant::now();

    // 1. Span of the settled line configuration at n = 1000.
    let big = run(&plan(vec![1000], 20, Instrumentation::None));
    let a = acc(&big, 1000);
    let row = &big.summary.rows()[0];
    let ratio = row.mean_span_over_n();
    report.line(
        1,
        "span n=1000 x20",
        (1.0..=1.2).contains(&ratio) && (0.82..=1.0).contains(&row.mean_density) && a.capped == 0,
        format!(
            "mean span/n {ratio:.4} in [1.0, 1.2], mean density {:.4} in [0.82, 1.0], capped {}",
            row.mean_density, a.capped
        ),
    );

    // 2. Linear scaling over n in {125, 250, 500, 1000}.
    let small = run(&plan(vec![125, 250, 500], 20, Instrumentation::None));
    let mut means: Vec<(u64, f64)> = small.summary.rows().iter().map(|r| (r.n, r.mean_span)).collect();
    means.push((1000, row.mean_span));
    match fit_scaling(&means) {
        Ok(s) => report.line(
            2,
            "scaling n=125..1000 x20",
            s.flatness <= 1.15 && s.log_ratio_decreasing && (0.9..=1.1).contains(&s.alpha),
            format!(
                "flatness {:.4} <= 1.15, span/(n ln n) decreasing {}, alpha {:.4} in [0.9, 1.1] (R^2 {:.4})",
                s.flatness, s.log_ratio_decreasing, s.alpha, s.alpha_r_squared
            ),
        ),
        Err(e) => report.line(2, "scaling n=125..1000 x20", false, e.to_string()),
    }

    // 3. Domination and 2-Lipschitz gaps under the coupling.
    let coupled = run(&plan(vec![200], 10, Instrumentation::Coupling));
    let c = acc(&coupled, 200);
    report.line(
        3,
        "coupling n=200 x10 seeds",
        c.violations == 0 && c.gap_jumps == 0 && c.trials == 10,
        format!(
            "domination violations {}, gap jumps > 2 {}, E events {}",
            c.violations,
            c.gap_jumps,
            e_events(&coupled.trials)
        ),
    );

    // 4. Exactness of the δ̂ law, pooled over all coupled runs.
    let coupled_500 = run(&plan(vec![500], 5, Instrumentation::Coupling));
    let mut pooled = DeltaHatStats::default();
    pooled.merge(&c.delta_hat);
    pooled.merge(&acc(&coupled_500, 500).delta_hat);
    let reports = pooled.reports();
    let enough = reports.iter().all(|r| r.samples >= 1000);
    let cases_ok = reports
        .iter()
        .all(|r| r.mean_within_drift_bound() && r.frequency_matches() && r.respects_annotation());
    let detail = reports
        .iter()
        .map(|r| {
            format!(
                "{} n={} mean {:.3} (se {:.3}) z {:.2}",
                r.case.name(),
                r.samples,
                r.mean,
                r.stderr,
                r.positive_z
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report.line(
        4,
        "delta_hat law",
        pooled.max_abs <= 2 && enough && cases_ok,
        format!("max |delta_hat| {}; {detail}", pooled.max_abs),
    );

    // 5. Geometric tail of ĝ at n = 500, plus the synthetic sanity fit.
    let synthetic: Vec<u64> = (0..=50).map(|k| 1u64 << (50 - k)).collect();
    let sanity = estimate_rho(&synthetic).map(|f| f.rho).unwrap_or(f64::NAN);
    match acc(&coupled_500, 500).rho_fit() {
        Some(fit) => report.line(
            5,
            "g_hat tail n=500 x5",
            fit.rho <= 0.95 && fit.r_squared >= 0.98 && (sanity - 0.5).abs() <= 0.02,
            format!(
                "rho_hat {:.4} <= 0.95, R^2 {:.4} >= 0.98 over k {}..={}; geometric(1/2) fit {sanity:.4}",
                fit.rho, fit.r_squared, fit.k_range.0, fit.k_range.1
            ),
        ),
        None => report.line(5, "g_hat tail n=500 x5", false, "no usable survival points".into()),
    }

    // 6. Concentration lemma against exact convolution.
    let start = Instant::now();
    let spec = TailSpec::extremal(1.0, 0.5).expect("valid law");
    let mut certified = 0;
    let mut worst = 0.0f64;
    for m in [10u64, 30, 50] {
        for eps in [0.25, 0.5, 1.0] {
            let cert = certify(&spec, m, eps).expect("certificate");
            if cert.holds() {
                certified += 1;
            }
            worst = worst.max(cert.exact_tail / cert.bound);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.line(
        6,
        "lemma certificates C=1 rho=1/2",
        certified == 9 && secs < 1.0,
        format!("{certified}/9 hold, largest tail/bound {worst:.3e}, {secs:.3}s < 1s"),
    );

    // 7. One-step law and stopping time for two particles.
    let pair = Configuration::<LineSite>::from_counts([(0, 2)]).expect("pair");
    let mut hist = [0u64; 3];
    for step in 0..100_000u64 {
        let draw = pair.sample_moves(&mut StepRng::new(BASE_SEED, step));
        hist[draw.entries[0].right() as usize] += 1;
    }
    let (chi2, p) = chi_square(&hist, &[0.25, 0.5, 0.25]);
    let twos = run(&plan(vec![2], 100_000, Instrumentation::None));
    let mean_t = twos.summary.rows()[0].mean_t;
    report.line(
        7,
        "n=2 exactness",
        p > 0.001 && (1.98..=2.02).contains(&mean_t),
        format!("chi2 {chi2:.3} p {p:.4} > 0.001 over 1e5; mean T {mean_t:.4} in [1.98, 2.02] over 1e5"),
    );

    // 8 and 9 share instrumented runs.
    let stats_runs: Vec<ExperimentResult> = [(100u64, 20u64), (500, 5), (1000, 3)]
        .into_iter()
        .map(|(n, t)| run(&plan(vec![n], t, Instrumentation::Stats)))
        .collect();
    let drift_trials: Vec<TrialResult> = stats_runs
        .iter()
        .flat_map(|r| r.trials.iter())
        .filter(|t| t.record.n == 100 || t.record.n == 1000)
        .cloned()
        .collect();
    match drift_check(&drift_trials) {
        Ok(d) => {
            let worst = d.max_d.iter().map(|&(n, m, _)| (m, n)).max().unwrap_or((0, 0));
            report.line(
                8,
                "closest-particle drift n in {100, 1000}",
                d.frequency_ok() && d.max_d_ok() && !d.max_d.is_empty(),
                format!(
                    "decrease frequency {:.4} >= 0.75 - 3*{:.4} over {} steps (exact {:.4}); largest max_d {} at n={} within 10 ln n",
                    d.decrease_frequency, d.stderr, d.qualifying_steps, d.expected_frequency, worst.0, worst.1
                ),
            )
        }
        Err(e) => report.line(8, "closest-particle drift n in {100, 1000}", false, e.to_string()),
    }

    let gap_trials: Vec<TrialResult> = stats_runs.iter().flat_map(|r| r.trials.iter().cloned()).collect();
    let gaps = gap_tail_check_trials(&gap_trials);
    let max_per_n: Vec<String> = [100u64, 500, 1000]
        .iter()
        .map(|&n| {
            let g = gaps.per_trial.iter().filter(|p| p.0 == n).map(|p| p.1).max().unwrap_or(0);
            format!("n={n} max gap {g} < {:.1}", (n as f64).ln().powi(2))
        })
        .collect();
    report.line(
        9,
        "gap bound",
        gaps.ok() && gaps.per_trial.len() == 28,
        format!("{}; flagged {}", max_per_n.join(", "), gaps.flagged.len()),
    );

    // 10. Grid shape through the command line.
    let dir = tempfile::tempdir().expect("tempdir");
    let out_dir = dir.path().to_str().expect("utf-8 path").to_string();
    let start = Instant::now();
    let mut sink = Vec::new();
    let code = dispersion::cli::run(
        ["dispersion", "shape2d", "--n", "10000", "--trials", "5", "--seed", "1", "--out", &out_dir],
        &mut sink,
    );
    eprintln!("  ran shape2d n=10000 x 5 in {:.1}s", start.elapsed().as_secs_f64());
    let snapshots = (0..5)
        .filter(|i| dir.path().join(format!("snapshot_n10000_trial{i}.txt")).exists())
        .count();
    let metrics: Vec<serde_json::Value> = std::fs::read_to_string(dir.path().join("shape_metrics.jsonl"))
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    let shape_ok = metrics.len() == 5
        && metrics.iter().all(|m| {
            m["disk_density"].as_f64().is_some_and(|d| d > 0.0) && m["anisotropy"].as_f64().is_some_and(|a| a >= 1.0)
        });
    let summary = metrics
        .iter()
        .map(|m| format!("{:.3}/{:.3}", m["disk_density"].as_f64().unwrap_or(f64::NAN), m["anisotropy"].as_f64().unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(" ");
    report.line(
        10,
        "shape2d n=10000 x5",
        code == 0 && snapshots == 5 && shape_ok,
        format!("exit {code}, {snapshots}/5 snapshots, disk_density/anisotropy {summary}"),
    );

    println!(
        "acceptance: {} of 10 criteria passed in {:.0}s",
        10 - report.failures,
        total.elapsed().as_secs_f64()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
