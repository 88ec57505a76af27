//! Trace CSV, summary and comparison writers.

use std::fmt::Write as _;

use qnpe::verify::CertificateReport;
use qnpe::SolverReport;

pub const TRACE_HEADER: &str = "k,eta,backtracked,ls_steps,grad_evals,mv_linsolve,mv_extevec,loss,dist_sq,grad_norm";

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// One row per iteration, then a final row for the last iterate carrying the
/// gradient evaluation of the termination test, so that column sums equal the
/// run totals.
pub fn trace_csv(report: &SolverReport) -> String {
    let mut out = String::with_capacity(64 * (report.records.len() + 2));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.eta),
            u8::from(r.backtracked),
            r.ls_steps,
            r.grad_evals,
            r.matvecs_linsolve,
            r.matvecs_extevec,
            fmt_opt(r.loss_value),
            fmt_opt(r.dist_sq),
            fmt_f64(r.grad_norm),
        );
    }
    let t = &report.terminal;
    let _ = writeln!(
        out,
        "{},NA,NA,0,{},0,0,NA,{},{}",
        t.k,
        t.grad_evals,
        fmt_opt(t.dist_sq),
        fmt_f64(t.grad_norm)
    );
    out
}

/// Flat `key = value` summary of a run.
pub fn summary_kv(problem: &str, report: &SolverReport, certs: Option<&CertificateReport>, wall_seconds: f64) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("problem", problem.to_string());
    kv("method", report.method.as_str().to_string());
    kv("termination", report.termination.as_str().to_string());
    kv("iterations", report.iterations().to_string());
    kv("learner_rounds", report.rounds.len().to_string());
    kv("total_grad_evals", report.total_grad_evals().to_string());
    kv("total_ls_steps", report.total_ls_steps().to_string());
    kv("total_mv_linsolve", report.total_matvecs_linsolve().to_string());
    kv("total_mv_extevec", report.total_matvecs_extevec().to_string());
    kv("final_grad_norm", fmt_f64(report.terminal.grad_norm));
    kv("final_dist_sq", fmt_opt(report.terminal.dist_sq));
    kv("inv_eta_sq_sum", fmt_f64(report.derived.inv_eta_sq_sum));
    kv("n_tr", fmt_opt(report.derived.n_tr));
    kv("n_eps_bound", fmt_opt(report.derived.n_eps_bound));
    kv("oracle_mode", report.config.oracle_mode.as_str().to_string());
    kv("seed", report.config.seed.to_string());
    if let Some(c) = certs {
        for check in &c.checks {
            kv(&format!("cert_{}", check.name), check.status.as_str().to_string());
        }
        kv("cert_all_passed", c.all_passed().to_string());
    }
    kv("wall_time_s", format!("{wall_seconds:.6}"));
    out
}

/// Gnuplot-friendly table: `k` followed by one column per run, `NA` past the end of a run.
pub fn comparison_table(labels: &[String], columns: &[Vec<f64>]) -> String {
    let mut out = String::from("# k");
    for l in labels {
        out.push(' ');
        out.push_str(l);
    }
    out.push('\n');
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..rows {
        let _ = write!(out, "{k}");
        for c in columns {
            out.push(' ');
            match c.get(k) {
                Some(v) => out.push_str(&fmt_f64(*v)),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}
