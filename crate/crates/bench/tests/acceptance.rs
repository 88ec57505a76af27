//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ...: PASS|FAIL` line that is visible even when output is captured.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use qnpe::eig::{ext_evec_exact, ext_evec_lanczos, ext_evec_lanczos_with_iters};
use qnpe::learner::{loss, loss_gradient, LossSample};
use qnpe::linsolve::conjugate_residual;
use qnpe::problems::{make_logistic, make_quadratic};
use qnpe::solver::solve;
use qnpe::verify::{contraction_ratios, verify_trace, CertificateReport, CheckStatus, VerifyOptions};
use qnpe::{InitialHessian, Matrix, Objective, OracleMode, SolverConfig, SolverReport, Termination, Vector};

fn announce(n: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n:>2} [{title}]: {verdict} ({detail})");
}

struct Run {
    label: String,
    obj: Box<dyn Objective + Send>,
    report: SolverReport,
    certs: CertificateReport,
}

fn exact_config() -> SolverConfig {
    SolverConfig {
        oracle_mode: OracleMode::Exact,
        ..SolverConfig::default()
    }
}

/// Ten quadratics (d = 50, condition 10 and 1e3) and three logistic
/// instances (n = 200, d = 20), solved from the origin in exact oracle mode.
fn exact_runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut specs: Vec<(String, u64, Option<f64>)> = Vec::new();
        for seed in 0..5u64 {
            specs.push((format!("quadratic kappa=1e1 seed={seed}"), seed, Some(10.0)));
            specs.push((format!("quadratic kappa=1e3 seed={seed}"), seed, Some(1e3)));
        }
        for seed in 0..3u64 {
            specs.push((format!("logistic seed={seed}"), seed, None));
        }
        specs
            .into_par_iter()
            .map(|(label, seed, kappa)| {
                let obj: Box<dyn Objective + Send> = match kappa {
                    Some(k) => Box::new(make_quadratic(50, 1.0, k, seed).unwrap()),
                    None => Box::new(make_logistic(200, 20, 0.01, seed).unwrap()),
                };
                let x0 = Vector::zeros(obj.dim());
                let report = solve(obj.as_ref(), &exact_config(), &x0).unwrap();
                let certs = verify_trace(&report, obj.as_ref(), &VerifyOptions::default()).unwrap();
                Run { label, obj, report, certs }
            })
            .collect()
    })
}

fn check_over_runs(runs: &[Run], name: &str) -> (bool, String) {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for run in runs {
        let c = run.certs.get(name).unwrap();
        worst = worst.min(c.worst_margin);
        if c.status != CheckStatus::Pass {
            failures.push(format!("{} at k={:?}", run.label, c.first_failure));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} traces, worst margin {worst:.3e}", runs.len())
    } else {
        format!("failed on {}", failures.join(", "))
    };
    (failures.is_empty(), detail)
}

#[test]
fn criterion_01_contraction() {
    let runs = exact_runs();
    let converged = runs.iter().all(|r| r.report.termination == Termination::GradTol);
    let (ok, detail) = check_over_runs(runs, "contraction");
    announce(1, "per-step contraction", ok && converged, &detail);
    assert!(ok && converged);
}

#[test]
fn criterion_02_linear_rate() {
    let runs = exact_runs();
    // With the default parameters the certified rate is (1 + mu / (4 l1))^{-1}.
    let mut ok = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for run in runs {
        let curv = run.obj.curvature();
        let rate = 1.0 / (1.0 + curv.mu / (4.0 * curv.l1));
        let dists = run.report.dist_sq_sequence().unwrap();
        for (_, ratio) in contraction_ratios(&dists) {
            worst_excess = worst_excess.max(ratio - rate);
            ok &= ratio <= rate + 1e-12;
        }
        ok &= run.certs.get("linear_rate").unwrap().passed();
    }
    announce(2, "linear rate", ok, &format!("max ratio minus rate {worst_excess:.3e}"));
    assert!(ok);
}

#[test]
fn criterion_03_step_floor() {
    let runs = exact_runs();
    let mut ok = true;
    let mut steps = 0usize;
    for run in runs {
        let cfg = &run.report.config;
        let floor = cfg.alpha2 * cfg.beta / run.obj.curvature().l1;
        for r in &run.report.records {
            ok &= r.eta >= floor;
            steps += 1;
        }
    }
    announce(3, "step floor", ok, &format!("{steps} recorded steps"));
    assert!(ok);
}

#[test]
fn criterion_04_superlinear() {
    let (d, mu, l1) = (30, 1.0, 100.0);
    let q = make_quadratic(d, mu, l1, 4).unwrap();
    let cfg = SolverConfig {
        b0: InitialHessian::ScaledIdentity(Some(l1)),
        dist_tol: Some(1e-16),
        grad_tol: 0.0,
        ..exact_config()
    };
    let report = solve(&q, &cfg, &Vector::zeros(d)).unwrap();
    let opts = VerifyOptions {
        trend: true,
        ..VerifyOptions::default()
    };
    let certs = verify_trace(&report, &q, &opts).unwrap();
    let envelope = certs.get("superlinear_envelope").unwrap().passed();
    let trend = certs.get("superlinear_trend").unwrap().passed();
    let reached = report.termination == Termination::DistTol;

    let ratios: Vec<f64> = contraction_ratios(&report.dist_sq_sequence().unwrap())
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let quarter = (ratios.len() / 4).max(1);
    let gm = |s: &[f64]| (s.iter().map(|v| v.ln()).sum::<f64>() / s.len() as f64).exp();
    let first = gm(&ratios[..quarter]);
    let last = gm(&ratios[ratios.len() - quarter..]);
    let ok = envelope && trend && reached;
    announce(
        4,
        "superlinear envelope and trend",
        ok,
        &format!(
            "{} iterations to {}, envelope {}, first-quarter ratio {first:.4}, last-quarter ratio {last:.4}, n_tr {:.0}",
            report.iterations(),
            report.termination.as_str(),
            if envelope { "holds" } else { "violated" },
            report.derived.n_tr.unwrap_or(f64::NAN)
        ),
    );
    assert!(reached && envelope, "envelope part failed");
    assert!(trend, "trend part failed: last-quarter ratio {last} vs first-quarter {first}");
}

#[test]
fn criterion_05_small_loss_regret() {
    let runs = exact_runs();
    let rounds: usize = runs.iter().map(|r| r.report.rounds.len()).sum();
    let (ok, detail) = check_over_runs(runs, "small_loss_regret");
    announce(5, "small-loss regret", ok && rounds > 0, &format!("{rounds} learner rounds, {detail}"));
    assert!(ok && rounds > 0);
}

#[test]
fn criterion_06_step_size_sum() {
    let runs = exact_runs();
    let (mut ok, mut detail) = check_over_runs(runs, "step_size_sum");
    // Also on randomized-oracle traces.
    for seed in 0..3u64 {
        let q = make_quadratic(30, 1.0, 100.0, 10 + seed).unwrap();
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let report = solve(&q, &cfg, &Vector::zeros(30)).unwrap();
        let certs = verify_trace(&report, &q, &VerifyOptions::default()).unwrap();
        ok &= certs.get("step_size_sum").unwrap().passed();
    }
    detail.push_str(", plus 3 lanczos-mode traces");
    announce(6, "inverse squared step sum", ok, &detail);
    assert!(ok);
}

#[test]
fn criterion_07_oracle_budgets() {
    let mut ok = true;
    let mut slack = (f64::INFINITY, f64::INFINITY);
    let mut traces = 0;
    for run in exact_runs() {
        let l1 = run.obj.curvature().l1;
        let rep = &run.report;
        assert_eq!(rep.config.sigma0(), 1.0 / (4.0 * l1));
        let n = rep.iterations() as f64;
        let log_grad = (4.0 * rep.config.sigma0() * l1).ln() / (1.0 / rep.config.beta).ln();
        let log_ls = (rep.config.sigma0() * l1 / rep.config.alpha2).ln() / (1.0 / rep.config.beta).ln();
        // The gradient at the returned point only feeds the stopping test.
        let grad_evals = (rep.total_grad_evals() - rep.terminal.grad_evals) as f64;
        let g = 3.0 * n + log_grad - grad_evals;
        let l = 2.0 * n + log_ls - rep.total_ls_steps() as f64;
        slack = (slack.0.min(g), slack.1.min(l));
        ok &= g >= 0.0 && l >= 0.0;
        ok &= run.certs.get("grad_budget").unwrap().passed() && run.certs.get("ls_budget").unwrap().passed();
        traces += 1;
    }
    announce(
        7,
        "oracle budgets",
        ok,
        &format!("{traces} traces, min gradient slack {}, min line-search slack {}", slack.0, slack.1),
    );
    assert!(ok);
}

#[test]
fn criterion_08_conjugate_residual() {
    let alpha = 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    let mut max_iters = 0;
    for seed in 0..100u64 {
        let kappa = 10f64.powf(4.0 * (seed as f64 + 1.0) / 100.0);
        let q = make_quadratic(100, 1.0, kappa, 1000 + seed).unwrap();
        let b = Vector::from_fn(100, |_, _| StandardNormal.sample(&mut rng));
        let res = conjugate_residual(&q.a, &b, alpha, 100_000).unwrap();
        let bound = 2.0 * kappa.sqrt() * (2.0 * kappa / alpha).ln() + 1.0;
        ok &= (&q.a * &res.s - &b).norm() <= alpha * res.s.norm();
        ok &= (res.iterations as f64) <= bound;
        ok &= res.step_norm_history.windows(2).all(|w| w[1] > w[0]);
        ok &= res.residual_history.windows(2).all(|w| w[1] <= w[0]);
        max_iters = max_iters.max(res.iterations);
    }
    announce(8, "conjugate residual contract", ok, &format!("100 systems, max {max_iters} iterations"));
    assert!(ok);
}

fn random_symmetric(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    (&g + g.transpose()) * 0.5
}

fn op_norm(w: &Matrix) -> f64 {
    w.clone().symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn criterion_09_lanczos_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut worst_rel = 0.0f64;
    for seed in 0..50u64 {
        let w = random_symmetric(40, &mut rng);
        let exact = ext_evec_exact(&w).unwrap();
        let full = ext_evec_lanczos_with_iters(&w, 40, &mut ChaCha8Rng::seed_from_u64(seed));
        worst_rel = worst_rel.max((full.gamma - exact.gamma).abs() / exact.gamma);
    }
    let part_a = worst_rel <= 1e-8;

    let (delta, q) = (0.25, 0.05);
    let basis = random_symmetric(40, &mut rng).symmetric_eigen().eigenvectors;
    let spread = Uniform::new(-2.0, 2.0).unwrap();
    let mut spectrum: Vec<f64> = (0..40).map(|_| spread.sample(&mut rng)).collect();
    spectrum[0] = 3.0;
    let w = &basis * Matrix::from_diagonal(&Vector::from_vec(spectrum)) * basis.transpose();
    let truth = op_norm(&w);
    let violations = (0..400u64)
        .filter(|&s| {
            let out = ext_evec_lanczos(&w, delta, q, &mut ChaCha8Rng::seed_from_u64(s));
            truth > (1.0 + delta) * out.gamma.max(1.0)
        })
        .count();
    let part_b = violations as f64 / 400.0 <= q + 0.03;

    let mut part_c = true;
    for _ in 0..10 {
        let w = random_symmetric(12, &mut rng) * 2.0;
        let out = ext_evec_exact(&w).unwrap();
        let s = out.separator_matrix(12);
        part_c &= (s.dot(&w) - out.gamma).abs() <= 1e-10 * out.gamma;
        for _ in 0..100 {
            let e = random_symmetric(12, &mut rng).symmetric_eigen();
            let clipped = e.eigenvalues.map(|v| v.clamp(-1.0, 1.0));
            let b_hat = &e.eigenvectors * Matrix::from_diagonal(&clipped) * e.eigenvectors.transpose();
            part_c &= s.dot(&(&w - b_hat)) >= out.gamma - 1.0 - 1e-12;
        }
    }
    let ok = part_a && part_b && part_c;
    announce(
        9,
        "lanczos separation oracle",
        ok,
        &format!("(a) worst relative gap {worst_rel:.2e}, (b) {violations}/400 violations, (c) separator identities {}", if part_c { "hold" } else { "violated" }),
    );
    assert!(ok);
}

#[test]
fn criterion_10_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_rel = 0.0f64;
    let mut nuclear_ok = true;
    for i in 0..100 {
        let d = 1 + i % 8;
        let b = random_symmetric(d, &mut rng);
        let s = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let y = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let sample = LossSample::new(s, y).unwrap();
        let grad = loss_gradient(&b, &sample).unwrap();
        for r in 0..d {
            for c in 0..=r {
                let mut e = Matrix::zeros(d, d);
                e[(r, c)] = 1.0;
                e[(c, r)] = 1.0;
                let h = 1e-4;
                let fd = (loss(&(&b + &e * h), &sample).unwrap() - loss(&(&b - &e * h), &sample).unwrap()) / (2.0 * h);
                let analytic = grad.dot(&e);
                worst_rel = worst_rel.max((fd - analytic).abs() / analytic.abs().max(1.0));
            }
        }
        let nuclear: f64 = grad.clone().symmetric_eigenvalues().iter().map(|v| v.abs()).sum();
        nuclear_ok &= nuclear <= (2.0 * loss(&b, &sample).unwrap()).sqrt() * (1.0 + 1e-12);
    }
    let ok = worst_rel <= 1e-6 && nuclear_ok;
    announce(10, "loss gradient", ok, &format!("worst relative difference {worst_rel:.2e}, nuclear-norm bound {}", if nuclear_ok { "holds" } else { "violated" }));
    assert!(ok);
}

#[test]
fn criterion_11_learner_feasibility() {
    let mut ok = true;
    let mut rounds = 0;
    let mut widest = (f64::INFINITY, f64::NEG_INFINITY);
    for run in exact_runs() {
        let curv = run.obj.curvature();
        let radius = (run.obj.dim() as f64).sqrt();
        for r in &run.report.rounds {
            let ev = r.b.clone().symmetric_eigenvalues();
            let (lo, hi) = (ev.min() / curv.mu, ev.max() / curv.l1);
            widest = (widest.0.min(lo), widest.1.max(hi));
            ok &= ev.min() >= curv.mu / 2.0 - 1e-10 && ev.max() <= curv.l1 + curv.mu / 2.0 + 1e-10;
            ok &= r.w_frobenius <= radius + 1e-12;
            rounds += 1;
        }
    }
    announce(
        11,
        "learner feasibility",
        ok,
        &format!("{rounds} rounds, min eig / mu {:.4}, max eig / l1 {:.4}", widest.0, widest.1),
    );
    assert!(ok);
}

#[test]
fn criterion_12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let problems = [
        ("qnpe", "quadratic:d=20,mu=1,l1=100,seed=3"),
        ("qnpe", "logistic:n=100,d=10,lambda=0.01,seed=2"),
        ("gd", "quadratic:d=20,mu=1,l1=100,seed=3"),
        ("bfgs", "logistic:n=100,d=10,lambda=0.01,seed=2"),
    ];
    let mut ok = true;
    for (i, (method, problem)) in problems.iter().enumerate() {
        let mut traces = Vec::new();
        for rep in 0..2 {
            let name = format!("det{i}_{rep}");
            let out = Command::new(env!("CARGO_BIN_EXE_qnpe-bench"))
                .args(["run", "--method", method, "--problem", problem, "--seed", "5", "--name", &name])
                .arg("--out-dir")
                .arg(dir.path())
                .output()
                .unwrap();
            ok &= out.status.success();
            traces.push(std::fs::read(dir.path().join(format!("{name}.trace.csv"))).unwrap());
        }
        ok &= traces[0] == traces[1];
    }
    announce(12, "determinism", ok, &format!("{} CLI runs compared byte for byte", problems.len()));
    assert!(ok);
}
