//! The main loop: line search, extragradient correction, step-size
//! propagation and learner rounds on backtracked iterations.

use crate::error::{Error, Result};
use crate::learner::{HessianLearner, LossSample};
use crate::line_search::backtrack;
use crate::types::{
    validate_config, Curvature, Derived, IterationRecord, LearnerRound, Matrix, Method, Objective, SolverConfig,
    SolverReport, TerminalState, Termination, Vector,
};

/// `x+ = (x - eta g_hat) / (1 + 2 eta mu) + (2 eta mu / (1 + 2 eta mu)) x_hat`.
pub fn extragradient_step(x: &Vector, x_hat: &Vector, g_hat: &Vector, eta: f64, mu: f64) -> Vector {
    let t = 2.0 * eta * mu;
    let denom = 1.0 + t;
    let mut out = x - g_hat * eta;
    out /= denom;
    out.axpy(t / denom, x_hat, 1.0);
    out
}

fn dist_sq<O: Objective + ?Sized>(obj: &O, x: &Vector) -> Option<f64> {
    obj.minimizer().map(|xs| (x - xs).norm_squared())
}

fn check_finite(v: &Vector, k: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate { k })
    }
}

/// Iteration threshold after which the superlinear envelope beats the linear one.
pub fn transition_threshold(curv: &Curvature, b0_err_sq: f64, l2: f64, dist0_sq: f64) -> f64 {
    let Curvature { mu, l1, .. } = *curv;
    4.0 / 3.0 + 48.0 / (l1 * l1) * b0_err_sq + (36.0 / (l1 * l1) + 64.0 / (3.0 * mu * l1)) * l2 * l2 * dist0_sq
}

/// Upper bound on the iterations needed to reach `||x - x*||^2 <= eps`.
pub fn iteration_bound(curv: &Curvature, n_tr: f64, dist0_sq: f64, eps: f64) -> f64 {
    let Curvature { mu, l1, .. } = *curv;
    let log_ratio = (dist0_sq / eps).ln();
    if log_ratio <= 0.0 {
        return 0.0;
    }
    let linear = 1.0 / (1.0 + mu / (4.0 * l1)).ln();
    let inner = (mu * mu / (16.0 * l1 * l1 * n_tr) * log_ratio).cbrt();
    let superlinear = 1.0 / (1.0 + inner).ln();
    linear.min(superlinear) * log_ratio
}

/// Run the method from `x0`.
pub fn solve<O: Objective + ?Sized>(obj: &O, cfg: &SolverConfig, x0: &Vector) -> Result<SolverReport> {
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let curv = obj.curvature();
    let cfg = validate_config(cfg, d, &curv)?;
    let b0 = cfg.b0.materialize(d, &curv);
    let mut learner = HessianLearner::new(
        b0.clone(),
        curv.mu,
        curv.l1,
        cfg.rho,
        cfg.delta(),
        cfg.p,
        cfg.oracle_mode,
        cfg.seed,
    );

    let mut x = x0.clone();
    let mut sigma = cfg.sigma0();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut rounds: Vec<LearnerRound> = Vec::new();
    let mut k = 0usize;

    let (termination, terminal) = loop {
        let g = obj.grad(&x);
        check_finite(&g, k)?;
        let grad_norm = g.norm();
        let dsq = dist_sq(obj, &x);
        let stop = if grad_norm <= cfg.grad_tol {
            Some(Termination::GradTol)
        } else if matches!((cfg.dist_tol, dsq), (Some(t), Some(v)) if v <= t) {
            Some(Termination::DistTol)
        } else if k >= cfg.max_iters {
            Some(Termination::MaxIters)
        } else {
            None
        };
        if let Some(reason) = stop {
            break (
                reason,
                TerminalState {
                    k,
                    grad_norm,
                    dist_sq: dsq,
                    grad_evals: 1,
                },
            );
        }

        let (b, mv_ext) = learner.predict()?;
        let b: Matrix = b.clone();
        let ls = backtrack(&x, &g, &b, sigma, &cfg, obj)?;
        let x_next = extragradient_step(&x, &ls.x_hat, &ls.grad_x_hat, ls.eta, curv.mu);
        check_finite(&x_next, k + 1)?;

        let mut loss_value = None;
        if let Some(rej) = &ls.rejected {
            let sample = LossSample::new(&rej.x_tilde - &x, &rej.grad_x_tilde - &g)?;
            let t = learner.round();
            let out = learner.update_round(&sample)?;
            loss_value = Some(out.loss);
            rounds.push(LearnerRound {
                t,
                k,
                b: b.clone(),
                s: sample.s,
                y: sample.y,
                loss: out.loss,
                w_frobenius: out.w_frobenius,
            });
        }

        records.push(IterationRecord {
            k,
            eta: ls.eta,
            sigma,
            backtracked: ls.backtracked(),
            ls_steps: ls.ls_steps,
            grad_evals: 1 + ls.ls_steps,
            matvecs_linsolve: ls.matvecs,
            matvecs_extevec: mv_ext,
            loss_value,
            dist_sq: dsq,
            grad_norm,
            step_sq: (&ls.x_hat - &x).norm_squared(),
        });

        sigma = ls.eta / cfg.beta;
        k += 1;
        if x_next == x || !sigma.is_finite() {
            let (grad_norm, evals) = if x_next == x {
                (grad_norm, 0)
            } else {
                (obj.grad(&x_next).norm(), 1)
            };
            x = x_next;
            break (
                Termination::Stalled,
                TerminalState {
                    k,
                    grad_norm,
                    dist_sq: dist_sq(obj, &x),
                    grad_evals: evals,
                },
            );
        }
        x = x_next;
    };

    let derived = derive(obj, &curv, &b0, x0, &records, &terminal);
    Ok(SolverReport {
        method: Method::Qnpe,
        records,
        rounds,
        x0: x0.clone(),
        final_x: x,
        termination,
        terminal,
        config: cfg,
        b0,
        derived,
    })
}

fn derive<O: Objective + ?Sized>(
    obj: &O,
    curv: &Curvature,
    b0: &Matrix,
    x0: &Vector,
    records: &[IterationRecord],
    terminal: &TerminalState,
) -> Derived {
    let inv_eta_sq_sum = records.iter().map(|r| 1.0 / (r.eta * r.eta)).sum();
    let n_tr = match (obj.minimizer(), curv.l2) {
        (Some(xs), Some(l2)) => obj.hessian(xs).map(|h| {
            let b0_err = (b0 - h).norm_squared();
            transition_threshold(curv, b0_err, l2, (x0 - xs).norm_squared())
        }),
        _ => None,
    };
    let n_eps_bound = match (n_tr, obj.minimizer(), terminal.dist_sq) {
        (Some(n_tr), Some(xs), Some(eps)) if eps > 0.0 => Some(iteration_bound(curv, n_tr, (x0 - xs).norm_squared(), eps)),
        _ => None,
    };
    Derived {
        inv_eta_sq_sum,
        n_tr,
        n_eps_bound,
    }
}
