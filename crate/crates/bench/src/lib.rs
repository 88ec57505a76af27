//! Command-line driver for the `qnpe` solver: run a method on a problem and
//! write its trace, verify the run's certificates, or compare methods.

pub mod error;
pub mod output;
pub mod spec;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use qnpe::baselines::{bfgs, gradient_descent};
use qnpe::verify::{verify_trace, CertificateReport, CheckStatus, VerifyOptions};
use qnpe::{Method, Objective, SolverConfig, SolverReport, Vector};

pub use error::{BenchError, Result};
use output::{comparison_table, fmt_f64, summary_kv, trace_csv};
use spec::{ProblemSpec, RunSpec};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QNPE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "qnpe-bench", version, about = "Run, verify and compare the qnpe solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write the trace and summary.
    Run(RunArgs),
    /// Solve and check every certificate, optionally over many solver seeds.
    Verify(VerifyArgs),
    /// Run several methods on the same problem and tabulate their progress.
    Compare(CompareArgs),
}

/// Solver configuration overrides. Values use the key-value config syntax.
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// Key-value config file applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha1: Option<String>,
    #[arg(long)]
    pub alpha2: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub sigma0: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    /// `identity` (l1 * I) or `identity:<factor>`.
    #[arg(long)]
    pub b0: Option<String>,
    /// `lanczos` or `exact`.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub max_iters: Option<String>,
    #[arg(long)]
    pub grad_tol: Option<String>,
    #[arg(long)]
    pub dist_tol: Option<String>,
    #[arg(long)]
    pub max_backtracks_slack: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<SolverConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                SolverConfig::from_kv_str(&text)?
            }
            None => SolverConfig::default(),
        };
        let overrides = [
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("beta", &self.beta),
            ("sigma0", &self.sigma0),
            ("rho", &self.rho),
            ("delta", &self.delta),
            ("p", &self.p),
            ("b0", &self.b0),
            ("oracle_mode", &self.oracle),
            ("seed", &self.seed),
            ("max_iters", &self.max_iters),
            ("grad_tol", &self.grad_tol),
            ("dist_tol", &self.dist_tol),
            ("max_backtracks_slack", &self.max_backtracks_slack),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    /// Output directory (default: $QNPE_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// File stem for the outputs.
    #[arg(long)]
    pub name: Option<String>,
}

impl OutputArgs {
    fn dir(&self) -> Result<PathBuf> {
        let dir = match &self.out_dir {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        std::fs::create_dir_all(&dir).map_err(|source| BenchError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(dir)
    }

    fn path(&self, default_stem: &str, suffix: &str) -> Result<PathBuf> {
        let stem = self.name.as_deref().unwrap_or(default_stem);
        Ok(self.dir()?.join(format!("{stem}.{suffix}")))
    }
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Problem spec, e.g. `quadratic:d=50,mu=1,l1=1000,seed=7`.
    #[arg(long)]
    pub problem: String,
    /// `qnpe`, `gd` or `bfgs`.
    #[arg(long, default_value = "qnpe")]
    pub method: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of solver seeds, starting at the configured seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Fraction of seeds whose certificates must all pass.
    #[arg(long, default_value_t = 1.0)]
    pub min_pass_rate: f64,
    /// Include the windowed superlinear trend test.
    #[arg(long)]
    pub trend: bool,
}

#[derive(Debug, Args, Clone)]
pub struct CompareArgs {
    /// `method@problem`; give at least two.
    #[arg(long = "run")]
    pub runs: Vec<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Run `method` from the origin.
pub fn run_method(method: Method, obj: &dyn Objective, cfg: &SolverConfig) -> Result<SolverReport> {
    let x0 = Vector::zeros(obj.dim());
    Ok(match method {
        Method::Qnpe => qnpe::solver::solve(obj, cfg, &x0)?,
        Method::GradientDescent => gradient_descent(obj, cfg, &x0)?,
        Method::Bfgs => bfgs(obj, cfg, &x0)?,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn cmd_run(args: &RunArgs) -> Result<i32> {
    let problem = ProblemSpec::parse(&args.problem)?;
    let method: Method = args.method.parse()?;
    let cfg = args.config.resolve()?;
    let obj = problem.build()?;
    let start = Instant::now();
    let report = run_method(method, obj.as_ref(), &cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let trace_path = args.output.path("run", "trace.csv")?;
    let summary_path = args.output.path("run", "summary.txt")?;
    write_file(&trace_path, &trace_csv(&report))?;
    write_file(&summary_path, &summary_kv(&problem.to_string(), &report, None, wall))?;
    println!(
        "{} on {}: termination={} iterations={} grad_evals={} trace={}",
        method.as_str(),
        problem,
        report.termination.as_str(),
        report.iterations(),
        report.total_grad_evals(),
        trace_path.display()
    );
    Ok(0)
}

fn describe_checks(certs: &CertificateReport) -> String {
    let mut out = String::new();
    for c in &certs.checks {
        let _ = write!(out, " {}={}", c.name, c.status.as_str());
        if c.status == CheckStatus::Fail {
            let _ = write!(out, "@k{}", c.first_failure.unwrap_or(0));
        }
    }
    out
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    if args.seeds == 0 {
        return Err(BenchError::Usage("--seeds must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&args.min_pass_rate) {
        return Err(BenchError::Usage("--min-pass-rate must lie in [0, 1]".into()));
    }
    let problem = ProblemSpec::parse(&args.run.problem)?;
    let method: Method = args.run.method.parse()?;
    let base = args.run.config.resolve()?;
    let obj = problem.build()?;
    let opts = VerifyOptions {
        trend: args.trend,
        ..VerifyOptions::default()
    };

    let results: Vec<(u64, Result<(SolverReport, CertificateReport)>)> = (0..args.seeds)
        .into_par_iter()
        .map(|i| {
            let seed = base.seed.wrapping_add(i);
            let cfg = SolverConfig { seed, ..base.clone() };
            let out = run_method(method, obj.as_ref(), &cfg)
                .and_then(|rep| Ok((verify_trace(&rep, obj.as_ref(), &opts)?, rep)))
                .map(|(c, r)| (r, c));
            (seed, out)
        })
        .collect();

    let mut lines = String::new();
    let mut passes = 0u64;
    let mut first: Option<(SolverReport, CertificateReport)> = None;
    for (seed, res) in results {
        let (report, certs) = res?;
        let ok = certs.all_passed();
        passes += u64::from(ok);
        let _ = writeln!(lines, "seed={seed} all_passed={ok}{}", describe_checks(&certs));
        if first.is_none() {
            first = Some((report, certs));
        }
    }
    let (report, certs) = first.expect("at least one seed");
    let rate = passes as f64 / args.seeds as f64;

    print!("{lines}");
    if method != Method::Qnpe {
        println!("certificates are not applicable to {}", method.as_str());
    }
    println!("pass_rate={} ({passes}/{})", fmt_f64(rate), args.seeds);

    write_file(&args.run.output.path("verify", "trace.csv")?, &trace_csv(&report))?;
    let mut summary = summary_kv(&problem.to_string(), &report, Some(&certs), 0.0);
    let _ = writeln!(summary, "seeds = {}", args.seeds);
    let _ = writeln!(summary, "pass_rate = {}", fmt_f64(rate));
    write_file(&args.run.output.path("verify", "summary.txt")?, &summary)?;
    write_file(&args.run.output.path("verify", "certificates.txt")?, &lines)?;

    Ok(if method != Method::Qnpe || rate >= args.min_pass_rate { 0 } else { 1 })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    let runs: Vec<RunSpec> = args.runs.iter().map(|s| RunSpec::parse(s)).collect::<Result<_>>()?;
    if runs.len() < 2 {
        return Err(BenchError::ProblemMismatch(format!("got {} run(s)", runs.len())));
    }
    let problem = &runs[0].problem;
    if let Some(other) = runs.iter().find(|r| &r.problem != problem) {
        return Err(BenchError::ProblemMismatch(format!("{} vs {}", problem, other.problem)));
    }
    let cfg = args.config.resolve()?;
    let obj = problem.build()?;
    let use_dist = obj.minimizer().is_some();

    let mut labels = Vec::new();
    let mut columns = Vec::new();
    let mut totals = String::from("run method termination iterations grad_evals ls_steps mv_linsolve mv_extevec final\n");
    for (i, r) in runs.iter().enumerate() {
        let report = run_method(r.method, obj.as_ref(), &cfg)?;
        let column: Vec<f64> = if use_dist {
            report.dist_sq_sequence().unwrap_or_default()
        } else {
            let mut g: Vec<f64> = report.records.iter().map(|x| x.grad_norm).collect();
            g.push(report.terminal.grad_norm);
            g
        };
        let final_value = column.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            totals,
            "{i} {} {} {} {} {} {} {} {}",
            r.method.as_str(),
            report.termination.as_str(),
            report.iterations(),
            report.total_grad_evals(),
            report.total_ls_steps(),
            report.total_matvecs_linsolve(),
            report.total_matvecs_extevec(),
            fmt_f64(final_value)
        );
        let metric = if use_dist { "dist_sq" } else { "grad_norm" };
        labels.push(format!("{}_{}_{i}", r.method.as_str(), metric));
        columns.push(column);
    }
    write_file(&args.output.path("compare", "dat")?, &comparison_table(&labels, &columns))?;
    write_file(&args.output.path("compare", "totals.txt")?, &totals)?;
    print!("{totals}");
    Ok(0)
}

/// Parse arguments, dispatch, and map errors to an exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: category={} message={}", e.category(), e);
            e.exit_code()
        }
    }
}
