//! Post-hoc certificates for a finished run.
//!
//! Each check recomputes a guarantee of the method from the trace and the
//! objective's ground truth, and reports the worst margin (positive means
//! the inequality held with room to spare) together with the iteration where
//! it was attained.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::learner::{loss, LossSample};
use crate::types::{Matrix, Method, Objective, SolverReport, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Smallest `bound - observed` over the trace (normalized as documented per check).
    pub worst_margin: f64,
    /// Iteration (or learner round) attaining the worst margin.
    pub worst_k: Option<usize>,
    /// First failing iteration, if any.
    pub first_failure: Option<usize>,
}

impl CheckOutcome {
    fn not_applicable(name: &'static str) -> Self {
        Self {
            name,
            status: CheckStatus::NotApplicable,
            worst_margin: f64::NAN,
            worst_k: None,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub checks: Vec<CheckOutcome>,
}

impl CertificateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Relative slack on the per-step contraction inequality.
    pub contraction_rel_slack: f64,
    /// Absolute slack on the per-step linear-rate ratio.
    pub linear_abs_slack: f64,
    /// Relative slack on the superlinear envelope.
    pub envelope_rel_slack: f64,
    /// Random competitors drawn from `mu I <= H <= l1 I` for the regret check,
    /// in addition to the Hessian at the minimizer.
    pub random_competitors: usize,
    pub competitor_seed: u64,
    /// Also evaluate the windowed superlinear trend test.
    pub trend: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            contraction_rel_slack: 1e-10,
            linear_abs_slack: 1e-12,
            envelope_rel_slack: 1e-10,
            random_competitors: 10,
            competitor_seed: 0,
            trend: false,
        }
    }
}

pub const CHECK_NAMES: [&str; 11] = [
    "contraction",
    "linear_rate",
    "step_floor",
    "step_size_sum",
    "small_loss_regret",
    "grad_budget",
    "ls_budget",
    "ls_identity",
    "displacement_sum",
    "superlinear_envelope",
    "superlinear_trend",
];

struct Tracker {
    name: &'static str,
    worst: f64,
    worst_k: Option<usize>,
    first_failure: Option<usize>,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: f64::INFINITY,
            worst_k: None,
            first_failure: None,
        }
    }

    fn add(&mut self, k: usize, margin: f64) {
        // NaN margins count as failures.
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if m < self.worst || self.worst_k.is_none() {
            self.worst = m;
            self.worst_k = Some(k);
        }
        if m < 0.0 && self.first_failure.is_none() {
            self.first_failure = Some(k);
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name,
            status: if self.first_failure.is_some() { CheckStatus::Fail } else { CheckStatus::Pass },
            worst_margin: self.worst,
            worst_k: self.worst_k,
            first_failure: self.first_failure,
        }
    }
}

/// `log_{1/beta}(x)`.
fn log_inv_beta(x: f64, beta: f64) -> f64 {
    x.ln() / (1.0 / beta).ln()
}

/// Ratios `||x_{k+1} - x*||^2 / ||x_k - x*||^2` over the trace, skipping zero denominators.
pub fn contraction_ratios(dists: &[f64]) -> Vec<(usize, f64)> {
    dists
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] > 0.0)
        .map(|(k, w)| (k, w[1] / w[0]))
        .collect()
}

fn geometric_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    (values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / n).exp()
}

/// Windowed trend test: the geometric-mean contraction ratio over the last
/// quarter of iterations is below 0.2 and below half the first-quarter ratio.
/// Margin is `min(0.2, 0.5 * first) - last`.
pub fn superlinear_trend(dists: &[f64]) -> CheckOutcome {
    let ratios: Vec<f64> = contraction_ratios(dists).into_iter().map(|(_, r)| r).collect();
    let mut t = Tracker::new("superlinear_trend");
    if ratios.len() < 4 {
        t.add(0, f64::NEG_INFINITY);
        return t.finish();
    }
    let q = ratios.len() / 4;
    let first = geometric_mean(&ratios[..q]);
    let last = geometric_mean(&ratios[ratios.len() - q..]);
    t.add(ratios.len() - q, 0.2f64.min(0.5 * first) - last);
    t.finish()
}

/// Random symmetric matrix with spectrum uniform in `[mu, l1]`.
pub fn random_competitor<R: Rng + ?Sized>(d: usize, mu: f64, l1: f64, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = QR::new(g).q();
    let lam = Vector::from_fn(d, |_, _| mu + (l1 - mu) * rng.random::<f64>());
    let h = &q * Matrix::from_diagonal(&lam) * q.transpose();
    (&h + h.transpose()) * 0.5
}

/// Evaluate every certificate on `report`.
///
/// Requires the minimizer. Checks needing the Hessian at the minimizer or the
/// Hessian Lipschitz constant are reported as not applicable when those are absent,
/// and all checks are not applicable for baseline methods.
pub fn verify_trace<O: Objective + ?Sized>(report: &SolverReport, obj: &O, opts: &VerifyOptions) -> Result<CertificateReport> {
    if report.method != Method::Qnpe {
        return Ok(CertificateReport {
            checks: CHECK_NAMES.iter().map(|n| CheckOutcome::not_applicable(n)).collect(),
        });
    }
    let x_star = obj.minimizer().ok_or(Error::MissingGroundTruth {
        check: "contraction",
        what: "minimizer",
    })?;
    let curv = obj.curvature();
    let (mu, l1) = (curv.mu, curv.l1);
    let cfg = &report.config;
    let (alpha1, alpha2, beta) = (cfg.alpha1, cfg.alpha2, cfg.beta);
    let sigma0 = cfg.sigma0();
    let n = report.records.len();

    let dists = report.dist_sq_sequence().ok_or(Error::MissingGroundTruth {
        check: "contraction",
        what: "per-iteration distances in the trace",
    })?;
    let d0 = dists[0];
    let mut checks = Vec::new();

    // Per-step contraction, margin normalized by ||x_k - x*||^2.
    let mut t = Tracker::new("contraction");
    for (k, r) in report.records.iter().enumerate() {
        let (dk, dk1) = (dists[k], dists[k + 1]);
        if dk == 0.0 {
            t.add(k, if dk1 == 0.0 { 0.0 } else { f64::NEG_INFINITY });
            continue;
        }
        let bound = dk / (1.0 + 2.0 * r.eta * mu) * (1.0 + opts.contraction_rel_slack);
        t.add(k, (bound - dk1) / dk);
    }
    checks.push(t.finish());

    // Linear rate with the step floor plugged into the contraction factor.
    let rate = 1.0 / (1.0 + 2.0 * alpha2 * beta * mu / l1);
    let mut t = Tracker::new("linear_rate");
    for (k, ratio) in contraction_ratios(&dists) {
        t.add(k, rate + opts.linear_abs_slack - ratio);
    }
    checks.push(t.finish());

    let floor = alpha2 * beta / l1;
    let mut t = Tracker::new("step_floor");
    for r in &report.records {
        t.add(r.k, (r.eta - floor) / floor);
    }
    checks.push(t.finish());

    // Sum of inverse squared steps; margin relative to the bound.
    let one_minus = 1.0 - beta * beta;
    let secant_err: f64 = report.rounds.iter().map(|r| 2.0 * r.loss).sum();
    let rhs = 1.0 / (one_minus * sigma0 * sigma0) + secant_err / (one_minus * alpha2 * alpha2 * beta * beta);
    let lhs: f64 = report.records.iter().map(|r| 1.0 / (r.eta * r.eta)).sum();
    let mut t = Tracker::new("step_size_sum");
    t.add(n.saturating_sub(1), (rhs - lhs) / rhs);
    checks.push(t.finish());

    // Small-loss regret against the Hessian at the minimizer and random competitors.
    match obj.hessian(x_star) {
        Some(h_star) => {
            let samples: Vec<LossSample> = report
                .rounds
                .iter()
                .map(|r| LossSample::new(r.s.clone(), r.y.clone()))
                .collect::<Result<_>>()?;
            let learner_loss: f64 = report.rounds.iter().map(|r| r.loss).sum();
            let mut rng = ChaCha8Rng::seed_from_u64(opts.competitor_seed);
            let d = obj.dim();
            let mut competitors = vec![h_star];
            for _ in 0..opts.random_competitors {
                competitors.push(random_competitor(d, mu, l1, &mut rng));
            }
            let mut t = Tracker::new("small_loss_regret");
            for (i, h) in competitors.iter().enumerate() {
                let mut comp_loss = 0.0;
                for s in &samples {
                    comp_loss += loss(h, s)?;
                }
                let bound = 18.0 * (&report.b0 - h).norm_squared() + 2.0 * comp_loss;
                t.add(i, bound - learner_loss);
            }
            checks.push(t.finish());
        }
        None => checks.push(CheckOutcome::not_applicable("small_loss_regret")),
    }

    // Oracle budgets; the gradient at the final iterate is not part of the bound.
    let log_term = log_inv_beta(sigma0 * l1 / alpha2, beta);
    let nf = n as f64;
    let grad_evals: usize = report.records.iter().map(|r| r.grad_evals).sum();
    let mut t = Tracker::new("grad_budget");
    t.add(n, 3.0 * nf + log_term - grad_evals as f64);
    checks.push(t.finish());

    let ls_steps = report.total_ls_steps() as f64;
    let mut t = Tracker::new("ls_budget");
    t.add(n, 2.0 * nf + log_term - ls_steps);
    checks.push(t.finish());

    // Exact step count implied by sigma_{k+1} = eta_k / beta.
    let mut t = Tracker::new("ls_identity");
    if let Some(last) = report.records.last() {
        let expected = 2.0 * nf - 1.0 + log_inv_beta(sigma0 / last.eta, beta);
        t.add(n - 1, 1e-9 * expected.abs().max(1.0) - (ls_steps - expected).abs());
    }
    checks.push(t.finish());

    let disp: f64 = report.records.iter().map(|r| r.step_sq).sum();
    let mut t = Tracker::new("displacement_sum");
    let bound = d0 / (1.0 - alpha1 - alpha2);
    t.add(n, if bound > 0.0 { (bound - disp) / bound } else { -disp });
    checks.push(t.finish());

    match (curv.l2, obj.hessian(x_star)) {
        (Some(l2), Some(h_star)) => {
            let denom = l1 * l1 + 36.0 * (&report.b0 - h_star).norm_squared() + (27.0 + 16.0 * l1 / mu) * l2 * l2 * d0;
            let mut t = Tracker::new("superlinear_envelope");
            if d0 > 0.0 {
                for (k, dk) in dists.iter().enumerate() {
                    let kf = k as f64;
                    let env = (1.0 + 3f64.sqrt() / 8.0 * mu * (kf / denom).sqrt()).powf(-kf);
                    t.add(k, env * (1.0 + opts.envelope_rel_slack) - dk / d0);
                }
            }
            checks.push(t.finish());
        }
        _ => checks.push(CheckOutcome::not_applicable("superlinear_envelope")),
    }

    if opts.trend {
        checks.push(superlinear_trend(&dists));
    } else {
        checks.push(CheckOutcome::not_applicable("superlinear_trend"));
    }

    Ok(CertificateReport { checks })
}
