//! Online learning of the Hessian approximation.
//!
//! Each backtracked iteration supplies a secant pair `(s, y)` and the loss
//! `l(B) = ||y - B s||^2 / (2 ||s||^2)`. The learner works in the transformed
//! space `B_hat = 2/(l1-mu) (B - (l1+mu)/2 I)`, where the competitor set
//! `mu I <= B <= l1 I` becomes the unit operator-norm ball. It runs projected
//! online gradient descent on the Frobenius ball of radius `sqrt(d)` with
//! surrogate gradients, and plays actions obtained from the separation oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eig::{ext_evec_exact, ext_evec_lanczos, Certificate, SepOutcome};
use crate::error::{Error, Result};
use crate::types::{Matrix, OracleMode, Vector};

/// Displacement `s = x_tilde - x` and gradient difference `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    pub s: Vector,
    pub y: Vector,
}

impl LossSample {
    pub fn new(s: Vector, y: Vector) -> Result<Self> {
        if s.norm() == 0.0 {
            return Err(Error::ZeroDisplacement);
        }
        Ok(Self { s, y })
    }
}

/// `2/(l1-mu) (B - (l1+mu)/2 I)`.
pub fn to_hat(b: &Matrix, mu: f64, l1: f64) -> Result<Matrix> {
    if !(l1 > mu) {
        return Err(Error::DegenerateCurvature { mu, l1 });
    }
    let n = b.nrows();
    Ok((b - Matrix::identity(n, n) * (0.5 * (l1 + mu))) * (2.0 / (l1 - mu)))
}

/// Inverse of [`to_hat`]: `(l1-mu)/2 W + (l1+mu)/2 I`.
pub fn from_hat(w: &Matrix, mu: f64, l1: f64) -> Matrix {
    let n = w.nrows();
    w * (0.5 * (l1 - mu)) + Matrix::identity(n, n) * (0.5 * (l1 + mu))
}

fn residual(b: &Matrix, sample: &LossSample) -> Result<(Vector, f64)> {
    let s_sq = sample.s.norm_squared();
    if s_sq == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    Ok((&sample.y - b * &sample.s, s_sq))
}

/// `||y - B s||^2 / (2 ||s||^2)`.
pub fn loss(b: &Matrix, sample: &LossSample) -> Result<f64> {
    let (r, s_sq) = residual(b, sample)?;
    Ok(r.norm_squared() / (2.0 * s_sq))
}

/// `-(s r^T + r s^T) / (2 ||s||^2)` with `r = y - B s`.
pub fn loss_gradient(b: &Matrix, sample: &LossSample) -> Result<Matrix> {
    let (r, s_sq) = residual(b, sample)?;
    let sr = &sample.s * r.transpose();
    Ok((&sr + sr.transpose()) * (-0.5 / s_sq))
}

/// Euclidean projection onto the Frobenius ball of the given radius.
pub fn project_frobenius_ball(w: &Matrix, radius: f64) -> Matrix {
    let n = w.norm();
    if n <= radius {
        w.clone()
    } else {
        w * (radius / n)
    }
}

/// Per-round failure probability `p / (2.5 (t+1) ln^2(t+1))` for `t >= 1`.
pub fn confidence(p: f64, t: usize) -> f64 {
    assert!(t >= 1, "round 0 does not query the oracle");
    let tp1 = (t + 1) as f64;
    let l = tp1.ln();
    p / (2.5 * tp1 * l * l)
}

/// What the learner played in the current round.
#[derive(Debug, Clone)]
struct Prediction {
    b: Matrix,
    b_hat: Matrix,
    sep: Option<SepOutcome>,
}

/// Result of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub loss: f64,
    pub w_frobenius: f64,
    pub case_two: bool,
}

pub struct HessianLearner {
    mu: f64,
    l1: f64,
    rho: f64,
    delta: f64,
    p: f64,
    mode: OracleMode,
    rng: ChaCha8Rng,
    b0: Matrix,
    w: Matrix,
    t: usize,
    prediction: Option<Prediction>,
    cumulative_loss: f64,
    matvecs: usize,
    /// `l1 == mu`: the competitor set is the single point `mu I`.
    frozen: bool,
}

impl HessianLearner {
    /// Start at `B_0`, which must satisfy `mu I <= B_0 <= l1 I`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(b0: Matrix, mu: f64, l1: f64, rho: f64, delta: f64, p: f64, mode: OracleMode, seed: u64) -> Self {
        let frozen = !(l1 > mu);
        let w = if frozen {
            Matrix::zeros(b0.nrows(), b0.ncols())
        } else {
            to_hat(&b0, mu, l1).expect("l1 > mu")
        };
        Self {
            mu,
            l1,
            rho,
            delta,
            p,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            b0,
            w,
            t: 0,
            prediction: None,
            cumulative_loss: 0.0,
            matvecs: 0,
            frozen,
        }
    }

    pub fn dim(&self) -> usize {
        self.b0.nrows()
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.cumulative_loss
    }

    pub fn total_matvecs(&self) -> usize {
        self.matvecs
    }

    /// Hessian approximation for the current round and the oracle matrix-vector
    /// products spent producing it (zero when already cached).
    pub fn predict(&mut self) -> Result<(&Matrix, usize)> {
        let mut spent = 0;
        if self.prediction.is_none() {
            let pred = if self.t == 0 || self.frozen {
                Prediction {
                    b: self.b0.clone(),
                    b_hat: self.w.clone(),
                    sep: None,
                }
            } else {
                let sep = match self.mode {
                    OracleMode::Exact => ext_evec_exact(&self.w)?,
                    OracleMode::Lanczos => {
                        let q = confidence(self.p, self.t);
                        ext_evec_lanczos(&self.w, self.delta, q, &mut self.rng)
                    }
                };
                spent = sep.matvecs;
                let b_hat = match sep.cert {
                    Certificate::Inside => self.w.clone(),
                    Certificate::Separator { .. } => &self.w / sep.gamma,
                };
                Prediction {
                    b: from_hat(&b_hat, self.mu, self.l1),
                    b_hat,
                    sep: Some(sep),
                }
            };
            self.prediction = Some(pred);
        }
        self.matvecs += spent;
        Ok((&self.prediction.as_ref().unwrap().b, spent))
    }

    /// Feed the loss of the current round and advance to the next one.
    pub fn update_round(&mut self, sample: &LossSample) -> Result<RoundOutcome> {
        let pred = self.prediction.take().ok_or(Error::StateMismatch { round: self.t })?;
        let l = match loss(&pred.b, sample) {
            Ok(l) => l,
            Err(e) => {
                self.prediction = Some(pred);
                return Err(e);
            }
        };
        let mut case_two = false;
        if !self.frozen {
            let mut g = loss_gradient(&pred.b, sample)? * (2.0 / (self.l1 - self.mu));
            if let Some(sep) = &pred.sep {
                if let Certificate::Separator { sign, u } = &sep.cert {
                    case_two = true;
                    let hinge = (-g.dot(&pred.b_hat)).max(0.0);
                    if hinge > 0.0 {
                        g += u * u.transpose() * (sign * hinge);
                    }
                }
            }
            let radius = (self.dim() as f64).sqrt();
            self.w = project_frobenius_ball(&(&self.w - g * self.rho), radius);
        }
        self.cumulative_loss += l;
        self.t += 1;
        Ok(RoundOutcome {
            loss: l,
            w_frobenius: self.w.norm(),
            case_two,
        })
    }

    /// Surrogate gradient the next update would use, for diagnostics:
    /// `(G_t, G_tilde_t, B_hat_t)`. Requires a pending prediction.
    pub fn surrogate(&self, sample: &LossSample) -> Result<(Matrix, Matrix, Matrix)> {
        let pred = self.prediction.as_ref().ok_or(Error::StateMismatch { round: self.t })?;
        if self.frozen {
            return Err(Error::DegenerateCurvature { mu: self.mu, l1: self.l1 });
        }
        let g = loss_gradient(&pred.b, sample)? * (2.0 / (self.l1 - self.mu));
        let mut gt = g.clone();
        if let Some(SepOutcome {
            cert: Certificate::Separator { sign, u },
            ..
        }) = &pred.sep
        {
            let hinge = (-g.dot(&pred.b_hat)).max(0.0);
            gt += u * u.transpose() * (sign * hinge);
        }
        Ok((g, gt, pred.b_hat.clone()))
    }
}
