//! Command-line front end: `run`, `mc`, `couple`, `lemma` and `shape2d`.
//!
//! Exit status is 0 on success, 2 when an invariant is violated and 1 on
//! usage or I/O errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::concentration::{certify, Certificate, TailSpec};
use crate::error::{Error, Result};
use crate::harness::{
    config_header, drift_check, fit_scaling, gap_tail_check_trials, run_experiment, timestamp_header,
    write_outputs, ExperimentPlan, ExperimentResult,
};
use crate::process::Topology;
use crate::shape2d::write_snapshot;
use crate::trial::{run_trial, Instrumentation, TrialSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dispersion", version, about = "Synchronous dispersion process experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single trial, optionally with a per-step trace.
    Run(RunArgs),
    /// Run a Monte Carlo experiment over one or more n.
    Mc(McArgs),
    /// Run coupling-instrumented line trials and check domination.
    Couple(McArgs),
    /// Certify the geometric-tail concentration bound against exact convolution.
    Lemma(LemmaArgs),
    /// Run grid trials and report shape metrics.
    Shape2d(McArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum GraphArg {
    Line,
    Grid2,
}

impl From<GraphArg> for Topology {
    fn from(g: GraphArg) -> Self {
        match g {
            GraphArg::Line => Topology::Line,
            GraphArg::Grid2 => Topology::Grid2D,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum InstrumentArg {
    None,
    Stats,
    Coupling,
}

impl From<InstrumentArg> for Instrumentation {
    fn from(i: InstrumentArg) -> Self {
        match i {
            InstrumentArg::None => Instrumentation::None,
            InstrumentArg::Stats => Instrumentation::Stats,
            InstrumentArg::Coupling => Instrumentation::Coupling,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, value_enum, default_value = "line")]
    pub graph: GraphArg,
    #[arg(long, value_enum, default_value = "stats")]
    pub instrument: InstrumentArg,
    /// Per-step TSV of span, closest distance and largest gap (line only).
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct McArgs {
    #[arg(long)]
    pub n: Option<u64>,
    /// Comma-separated list of n.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<u64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, value_enum)]
    pub graph: Option<GraphArg>,
    #[arg(long, value_enum)]
    pub instrument: Option<InstrumentArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct LemmaArgs {
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Number of summands; comma-separated for several.
    #[arg(long, value_delimiter = ',', default_value = "30")]
    pub m: Vec<u64>,
    /// Relative deviation; comma-separated for several.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub eps: Vec<f64>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run(args) => cmd_run(args, out),
        Command::Mc(args) => cmd_mc(args, out),
        Command::Couple(args) => cmd_couple(args, out),
        Command::Lemma(args) => cmd_lemma(args, out),
        Command::Shape2d(args) => cmd_shape2d(args, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let topology = Topology::from(args.graph);
    if args.trace && topology != Topology::Line {
        return Err(Error::invalid("--trace is available on the line only"));
    }
    let spec = TrialSpec {
        n: args.n,
        topology,
        seed: args.seed,
        max_steps: args.max_steps,
        instrumentation: args.instrument.into(),
        trace: args.trace,
    };
    let header = config_header(&spec);
    let outcome = run_trial(&spec)?;
    let rec = &outcome.record;
    let record_json = serde_json::to_string(rec)?;

    let mut text = format!("{header}\n{record_json}\n");
    let _ = writeln!(
        text,
        "T = {}  span = {}  span/n = {:.4}  capped = {}",
        rec.stopping_time,
        rec.span,
        rec.span as f64 / rec.n as f64,
        rec.capped
    );
    if args.trace {
        let mut tsv = format!("{header}\nt\tspan\td\tmax_gap\n");
        for row in &outcome.diagnostics.trace {
            let _ = writeln!(tsv, "{}\t{}\t{}\t{}", row.t, row.span, row.d, row.max_gap);
        }
        match &args.out {
            Some(dir) => write_file(&dir.join("trace.tsv"), &tsv)?,
            None => text.push_str(&tsv),
        }
    }
    if let Some(dir) = &args.out {
        write_file(&dir.join("trial.jsonl"), &format!("{header}\n{record_json}\n"))?;
    }
    emit(out, &text)?;
    Ok(if rec.domination_violations > 0 || !rec.conserved {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    })
}

fn plan_from(args: &McArgs, default_n: u64, default_trials: u64, topology: Topology, level: Instrumentation) -> ExperimentPlan {
    let n_values = match (&args.n_list, args.n) {
        (Some(list), _) => list.clone(),
        (None, Some(n)) => vec![n],
        (None, None) => vec![default_n],
    };
    ExperimentPlan {
        n_values,
        trials_per_n: args.trials.unwrap_or(default_trials),
        base_seed: args.seed,
        topology,
        instrumentation: level,
        max_steps: args.max_steps,
    }
}

fn execute(plan: &ExperimentPlan, jobs: Option<usize>) -> Result<ExperimentResult> {
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment(plan))
        }
        None => run_experiment(plan),
    }
}

fn summary_table(result: &ExperimentResult) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>7} {:>6} {:>10} {:>8} {:>8} {:>12} {:>8} {:>8} {:>6} {:>6}",
        "n", "trials", "mean_span", "span/n", "density", "mean_T", "max_d", "rho_hat", "viol", "capped"
    );
    for r in result.summary.rows() {
        let _ = writeln!(
            text,
            "{:>7} {:>6} {:>10.2} {:>8.4} {:>8.4} {:>12.1} {:>8.2} {:>8} {:>6} {:>6}",
            r.n,
            r.trials,
            r.mean_span,
            r.mean_span_over_n(),
            r.mean_density,
            r.mean_t,
            r.mean_max_d,
            r.rho_hat.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
            r.violations,
            r.capped
        );
    }
    text
}

fn scaling_text(result: &ExperimentResult) -> String {
    let means: Vec<(u64, f64)> = result.summary.rows().iter().map(|r| (r.n, r.mean_span)).collect();
    match fit_scaling(&means) {
        Ok(s) => format!(
            "scaling: alpha = {:.4} (R^2 {:.4}), flatness of span/n = {:.4}, span/(n ln n) decreasing = {}\n",
            s.alpha, s.alpha_r_squared, s.flatness, s.log_ratio_decreasing
        ),
        Err(_) => String::new(),
    }
}

fn finish_outputs(args: &McArgs, result: &ExperimentResult, text: &mut String) -> Result<()> {
    if let Some(dir) = &args.out {
        let written = write_outputs(dir, result)?;
        for p in written {
            let _ = writeln!(text, "wrote {}", p.display());
        }
    }
    Ok(())
}

fn invariant_status(result: &ExperimentResult) -> i32 {
    let bad = result
        .trials
        .iter()
        .any(|t| t.record.domination_violations > 0 || !t.record.conserved || t.gap_jumps > 0);
    if bad {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

fn cmd_mc(args: &McArgs, out: &mut dyn Write) -> Result<i32> {
    let topology = args.graph.map(Topology::from).unwrap_or(Topology::Line);
    let level = args.instrument.map(Instrumentation::from).unwrap_or(Instrumentation::None);
    let plan = plan_from(args, 1000, 20, topology, level);
    let result = execute(&plan, args.jobs)?;
    let mut text = format!("{}\n", config_header(&plan));
    text.push_str(&summary_table(&result));
    text.push_str(&scaling_text(&result));
    finish_outputs(args, &result, &mut text)?;
    emit(out, &text)?;
    Ok(invariant_status(&result))
}

fn cmd_couple(args: &McArgs, out: &mut dyn Write) -> Result<i32> {
    if args.graph.is_some_and(|g| g != GraphArg::Line) {
        return Err(Error::invalid("couple runs on the line only"));
    }
    if args.instrument.is_some_and(|i| i != InstrumentArg::Coupling) {
        return Err(Error::invalid("couple always uses coupling instrumentation"));
    }
    let plan = plan_from(args, 200, 1, Topology::Line, Instrumentation::Coupling);
    let result = execute(&plan, args.jobs)?;
    let mut text = format!("{}\n", config_header(&plan));
    text.push_str(&summary_table(&result));

    let violations: u64 = result.trials.iter().map(|t| t.record.domination_violations).sum();
    let jumps: u64 = result.trials.iter().map(|t| t.gap_jumps).sum();
    let e_events: u64 = result.trials.iter().map(|t| t.record.e_events).sum();
    let _ = writeln!(text, "violations: {violations}");
    let _ = writeln!(text, "gap jumps > 2: {jumps}");
    let _ = writeln!(text, "E events: {e_events}");

    for (n, acc) in &result.summary.per_n {
        let _ = writeln!(text, "n = {n}:");
        let _ = writeln!(
            text,
            "  {:<12} {:>9} {:>9} {:>9} {:>10} {:>10} {:>7}",
            "case", "samples", "mean", "stderr", "pos_freq", "exact", "z"
        );
        for r in acc.delta_reports() {
            let _ = writeln!(
                text,
                "  {:<12} {:>9} {:>9.4} {:>9.4} {:>10.5} {:>10.5} {:>7.2}",
                r.case.name(),
                r.samples,
                r.mean,
                r.stderr,
                r.positive_frequency,
                r.expected_positive_frequency,
                r.positive_z
            );
        }
        let _ = writeln!(text, "  max |delta_hat| = {}", acc.delta_hat.max_abs);
        if let Some(fit) = acc.rho_fit() {
            let bound = 3.0 + 2.0 / (1.0 - fit.rho);
            let _ = writeln!(
                text,
                "  rho_hat = {:.4} (R^2 {:.4}, k in {}..={}); max class mean {:.3} vs 3 + 2/(1 - rho_hat) = {:.3}",
                fit.rho, fit.r_squared, fit.k_range.0, fit.k_range.1, acc.max_class_mean, bound
            );
        }
        if let Some(c) = acc.delta_hat.lag_correlation() {
            let _ = writeln!(text, "  delta_hat correlation at lag 3L: {c:.4}");
        }
    }
    if let Ok(d) = drift_check(&result.trials) {
        let _ = writeln!(
            text,
            "drift: decrease frequency {:.4} +- {:.4} over {} steps (exact mean {:.4}); max_d within 10 ln n: {}",
            d.decrease_frequency,
            d.stderr,
            d.qualifying_steps,
            d.expected_frequency,
            d.max_d_ok()
        );
    }
    let gaps = gap_tail_check_trials(&result.trials);
    let _ = writeln!(text, "gaps below (ln n)^2: {}", gaps.ok());
    finish_outputs(args, &result, &mut text)?;
    emit(out, &text)?;
    Ok(if violations > 0 || jumps > 0 { EXIT_VIOLATION } else { invariant_status(&result) })
}

#[derive(Serialize)]
struct LemmaReport<'a> {
    c: f64,
    rho: f64,
    mu: f64,
    support_max: usize,
    certificates: &'a [Certificate],
}

fn cmd_lemma(args: &LemmaArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = TailSpec::extremal(args.c, args.rho)?;
    let mut certs = Vec::new();
    for &m in &args.m {
        for &eps in &args.eps {
            certs.push(certify(&spec, m, eps)?);
        }
    }
    let report = LemmaReport {
        c: args.c,
        rho: args.rho,
        mu: spec.mu(),
        support_max: spec.support_max(),
        certificates: &certs,
    };
    let header = config_header(args);
    let json = serde_json::to_string_pretty(&report)?;
    let text = if args.json {
        format!("{json}\n")
    } else {
        let mut t = format!(
            "{header}\nC = {}  rho = {}  mu = {}  support 0..={}\n",
            args.c,
            args.rho,
            spec.mu(),
            spec.support_max()
        );
        let _ = writeln!(
            t,
            "{:>5} {:>6} {:>10} {:>10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>6}",
            "m", "eps", "eta", "lambda", "thresh", "exact_tail", "bound", "chernoff", "slack_E2", "slack_mgf", "ok"
        );
        for c in &certs {
            let _ = writeln!(
                t,
                "{:>5} {:>6.3} {:>10.6} {:>10.3e} {:>8} {:>12.4e} {:>12.6} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
                c.m,
                c.params.eps,
                c.params.eta,
                c.params.lambda,
                c.threshold,
                c.exact_tail,
                c.bound,
                c.chernoff,
                c.slack.second_moment_slack(),
                c.slack.mgf_slack(),
                c.holds()
            );
        }
        t
    };
    if let Some(dir) = &args.out {
        write_file(&dir.join("lemma.json"), &format!("{header}\n{json}\n"))?;
    }
    emit(out, &text)?;
    Ok(if certs.iter().all(Certificate::holds) { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_shape2d(args: &McArgs, out: &mut dyn Write) -> Result<i32> {
    if args.graph.is_some_and(|g| g != GraphArg::Grid2) {
        return Err(Error::invalid("shape2d runs on the grid only"));
    }
    let level = args.instrument.map(Instrumentation::from).unwrap_or(Instrumentation::None);
    let plan = plan_from(args, 10_000, 5, Topology::Grid2D, level);
    let result = execute(&plan, args.jobs)?;
    let mut text = format!("{}\n", config_header(&plan));
    let _ = writeln!(
        text,
        "{:>7} {:>6} {:>8} {:>9} {:>6} {:>13} {:>11}",
        "n", "trial", "T", "r_max", "r_inf", "disk_density", "anisotropy"
    );
    let mut metrics_jsonl = format!("{}\n{}\n", config_header(&plan), timestamp_header());
    for t in &result.trials {
        if let Some(m) = &t.shape {
            let _ = writeln!(
                text,
                "{:>7} {:>6} {:>8} {:>9.3} {:>6} {:>13.4} {:>11.4}",
                t.record.n, t.trial_index, t.record.stopping_time, m.r_max, m.r_inf, m.disk_density, m.anisotropy
            );
            #[derive(Serialize)]
            struct Line<'a> {
                n: u64,
                trial_index: u64,
                seed: u64,
                #[serde(flatten)]
                metrics: &'a crate::shape2d::ShapeMetrics,
            }
            metrics_jsonl.push_str(&serde_json::to_string(&Line {
                n: t.record.n,
                trial_index: t.trial_index,
                seed: t.record.seed,
                metrics: m,
            })?);
            metrics_jsonl.push('\n');
        } else {
            let _ = writeln!(text, "{:>7} {:>6} capped after {} steps", t.record.n, t.trial_index, t.record.stopping_time);
        }
    }
    text.push_str(&summary_table(&result));
    if let Some(dir) = &args.out {
        finish_outputs(args, &result, &mut text)?;
        write_file(&dir.join("shape_metrics.jsonl"), &metrics_jsonl)?;
        for t in &result.trials {
            if let Some(c) = &t.grid_final {
                let path = dir.join(format!("snapshot_n{}_trial{}.txt", t.record.n, t.trial_index));
                let header = format!(
                    "{} n={} trial_index={} seed={} T={}",
                    config_header(&plan).trim_start_matches("# "),
                    t.record.n,
                    t.trial_index,
                    t.record.seed,
                    t.record.stopping_time
                );
                write_snapshot(&path, c, &header)?;
                let _ = writeln!(text, "wrote {}", path.display());
            }
        }
    }
    emit(out, &text)?;
    Ok(invariant_status(&result))
}
