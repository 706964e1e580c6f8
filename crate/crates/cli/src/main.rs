//! `blendforge`: count, optimize, compare and analyze blend plans from the
//! command line.
//!
//! Exit codes: 0 success, 1 infeasible result, 2 invalid input, 3 I/O error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blendforge_core::analytics::{analyze, AnalyticsOptions, AnalyticsReport, Deadline};
use blendforge_core::io::{load_plan, load_scenario, save_plan, to_document};
use blendforge_core::optimizer::{compare_strategies, optimize, Strategy, StrategyKind};
use blendforge_core::space::{count_blend_space, scientific, SpaceSummary};
use blendforge_core::{evaluate_plan, BlendPlan, EvaluationReport, Scenario};
use clap::{Args, Parser, Subcommand};

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "blendforge", version, about = "Coal blend planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the exact number of lot assignments a scenario allows.
    Count {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Search for a plan and write it out.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "anneal")]
        strategy: String,
        #[command(flatten)]
        search: SearchArgs,
        /// Plan document to write.
        #[arg(long)]
        out: PathBuf,
        /// Result document (plan, report, trace); defaults to the plan path
        /// with a `.result` extension.
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Run several strategies on one scenario and rank them.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', default_value = "greedy-profit-first,avg-value,max-tonnes")]
        strategies: Vec<String>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Evaluate a plan and print its analytics.
    Analyze {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Strategy used for the re-optimizations behind marginal values.
        #[arg(long, default_value = "anneal")]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Evaluation budget for each of those re-optimizations.
        #[arg(long, default_value_t = 2000)]
        marginal_budget: u64,
        /// Analytics document to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Required by the stochastic strategies.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation budget.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    restarts: Option<u32>,
}

impl SearchArgs {
    fn strategy(&self, name: &str) -> Result<Strategy, Failure> {
        let kind: StrategyKind = name.parse().map_err(|e| Failure::Invalid(format!("{e}")))?;
        let mut s = Strategy::new(kind);
        s.seed = self.seed;
        if let Some(b) = self.budget {
            s.budget_evaluations = b;
        }
        if let Some(r) = self.restarts {
            s.restarts = r;
        }
        s.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
        Ok(s)
    }
}

enum Failure {
    Infeasible,
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Infeasible => 1,
            Failure::Invalid(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn scenario(path: &Path) -> Result<Scenario, Failure> {
    let bytes = read(path)?;
    load_scenario(&bytes).map_err(|e| {
        let mut msg = format!("{}: invalid scenario", path.display());
        for issue in e.issues() {
            let _ = write!(msg, "\n  {issue}");
        }
        Failure::Invalid(msg)
    })
}

fn plan(path: &Path) -> Result<BlendPlan, Failure> {
    let bytes = read(path)?;
    load_plan(&bytes).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn report_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:<14} {:>12} {:>12} {:>7} {:>14}", "period", "product", "feed t", "sold t", "spec", "revenue");
    for b in &report.blends {
        let _ = writeln!(
            out,
            "{:<6} {:<14} {:>12.1} {:>12.1} {:>7} {:>14.2}",
            b.period,
            b.product,
            b.feed_tonnes,
            b.tonnes,
            if b.in_spec { "in" } else { "off" },
            b.gross_revenue + b.adjustment_revenue
        );
    }
    let _ = writeln!(out, "npv {:.2}  revenue {:.2}  sold {:.1} t", report.npv, report.total_revenue, report.kpis.total_sold_tonnes);
    if report.violations.is_empty() {
        out.push_str("no violations\n");
    } else {
        out.push_str("violations:\n");
        for v in &report.violations {
            let _ = writeln!(out, "  {:?} period {} {}: {}", v.code, v.period, v.subject, v.magnitude);
        }
    }
    out
}

fn analytics_table(a: &AnalyticsReport) -> String {
    let mut out = String::from("contributions:\n");
    for b in &a.contributions {
        for c in &b.contributions {
            let attrs: Vec<String> = c.attributes.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
            let _ = writeln!(out, "  {} p{} {:<10} share {:.4}  {}", b.product, b.period, c.rom, c.share, attrs.join("  "));
        }
    }
    out.push_str("slack:\n");
    for s in &a.slacks {
        let _ = writeln!(out, "  {:?} p{} {:<16} limit {:.1} used {:.1} slack {:.1}", s.code, s.period, s.subject, s.limit, s.usage, s.slack);
    }
    out.push_str("marginal value per tonne:\n");
    for m in &a.marginals {
        let _ = writeln!(out, "  {:<10} {:.4}", m.rom, m.value_per_tonne);
    }
    out.push_str("degradation deadlines:\n");
    for d in &a.deadlines {
        for p in &d.products {
            let when = match p.deadline {
                Deadline::Always => "always in spec".to_string(),
                Deadline::Never => "never in spec".to_string(),
                Deadline::LastSafe(t) => format!("last safe period {t}"),
            };
            let _ = writeln!(out, "  {:<10} in {}: {when}", d.rom, p.product);
        }
    }
    out
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Count { scenario: path } => {
            let s = scenario(&path)?;
            let n = count_blend_space(&SpaceSummary::of_scenario(&s));
            say!("{n} (~{})", scientific(&n));
            Ok(())
        }
        Command::Optimize { scenario: path, strategy, search, out, result } => {
            let s = scenario(&path)?;
            let strategy = search.strategy(&strategy)?;
            let r = optimize(&s, &strategy, None).map_err(|e| Failure::Invalid(e.to_string()))?;
            write(&out, &save_plan(&r.plan))?;
            write(&result.unwrap_or_else(|| out.with_extension("result")), &to_document(&r))?;
            say!(
                "{} objective {:.2}  feasible {}  evaluations {}",
                strategy.name, r.objective, yes_no(r.feasible), r.evaluations
            );
            say!("{}", report_table(&r.report).trim_end());
            if r.feasible {
                Ok(())
            } else {
                Err(Failure::Infeasible)
            }
        }
        Command::Compare { scenario: path, strategies, search } => {
            let s = scenario(&path)?;
            let strategies = strategies.iter().map(|n| search.strategy(n)).collect::<Result<Vec<_>, _>>()?;
            let rows = compare_strategies(&s, &strategies).map_err(|e| Failure::Invalid(e.to_string()))?;
            say!("{:<4} {:<20} {:>16} {:>8}", "rank", "strategy", "objective", "feasible");
            for (i, row) in rows.iter().enumerate() {
                say!("{:<4} {:<20} {:>16.2} {:>8}", i + 1, row.strategy, row.objective, yes_no(row.feasible));
            }
            Ok(())
        }
        Command::Analyze { scenario: path, plan: plan_path, strategy, seed, marginal_budget, out } => {
            let s = scenario(&path)?;
            let p = plan(&plan_path)?;
            let strategy = SearchArgs { seed: Some(seed), budget: None, restarts: None }.strategy(&strategy)?;
            let report = evaluate_plan(&s, &p).map_err(|e| Failure::Invalid(e.to_string()))?;
            let options = AnalyticsOptions { marginal_budget, ..AnalyticsOptions::default() };
            let analytics = analyze(&s, &p, &strategy, &options).map_err(|e| Failure::Invalid(e.to_string()))?;
            say!("{}", report_table(&report).trim_end());
            say!("{}", analytics_table(&analytics).trim_end());
            if let Some(out) = out {
                write(&out, &to_document(&analytics))?;
            }
            if report.is_feasible() {
                Ok(())
            } else {
                Err(Failure::Infeasible)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Infeasible => eprintln!("blendforge: result is infeasible"),
                Failure::Invalid(m) | Failure::Io(m) => eprintln!("blendforge: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
