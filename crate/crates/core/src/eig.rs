//! Approximate separation oracle for the unit operator-norm ball.
//!
//! Given a symmetric `W`, the oracle returns `gamma ~ ||W||_op`. When
//! `gamma > 1` it also returns a rank-one separator `S = sign * u u^T` with
//! `<S, W - B> >= gamma - 1` for every `||B||_op <= 1`.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{Matrix, Vector};

/// Certificate part of an oracle answer.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `gamma <= 1`: `W` is (approximately) inside the ball.
    Inside,
    /// `gamma > 1`: the separator `sign * u u^T` with unit `u`.
    Separator { sign: f64, u: Vector },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepOutcome {
    pub gamma: f64,
    pub cert: Certificate,
    pub matvecs: usize,
}

impl SepOutcome {
    fn classify(lambda_max: f64, u_max: Vector, lambda_min: f64, u_min: Vector, matvecs: usize) -> Self {
        let gamma = lambda_max.max(-lambda_min);
        let cert = if gamma <= 1.0 {
            Certificate::Inside
        } else if lambda_max >= -lambda_min {
            Certificate::Separator { sign: 1.0, u: u_max }
        } else {
            Certificate::Separator { sign: -1.0, u: u_min }
        };
        SepOutcome { gamma, cert, matvecs }
    }

    /// The separator as a dense matrix (zero in the inside case).
    pub fn separator_matrix(&self, dim: usize) -> Matrix {
        match &self.cert {
            Certificate::Inside => Matrix::zeros(dim, dim),
            Certificate::Separator { sign, u } => u * u.transpose() * *sign,
        }
    }

    /// `<S, M>` for a symmetric `M`, without forming `S`.
    pub fn separator_inner(&self, m: &Matrix) -> f64 {
        match &self.cert {
            Certificate::Inside => 0.0,
            Certificate::Separator { sign, u } => sign * u.dot(&(m * u)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosBudget {
    pub n_iters: usize,
    pub epsilon: f64,
}

/// Iterations of randomized Lanczos sufficient for the relative accuracy
/// `epsilon = delta / (2 (1 + delta))` with failure probability `q`.
pub fn lanczos_budget(dim: usize, delta: f64, q: f64) -> LanczosBudget {
    let epsilon = delta / (2.0 * (1.0 + delta));
    let raw = 0.25 / epsilon.sqrt() * (11.0 * dim as f64 / (q * q)).ln() + 0.5;
    let n = if raw.is_finite() { raw.ceil().max(1.0) as usize } else { dim };
    LanczosBudget {
        n_iters: n.min(dim),
        epsilon,
    }
}

/// Randomized Lanczos with full reorthogonalization and a uniformly random
/// unit start vector. Runs `lanczos_budget(d, delta, q).n_iters` steps, or
/// fewer if the Krylov space becomes invariant.
pub fn ext_evec_lanczos<R: Rng + ?Sized>(w: &Matrix, delta: f64, q: f64, rng: &mut R) -> SepOutcome {
    let budget = lanczos_budget(w.nrows(), delta, q);
    ext_evec_lanczos_with_iters(w, budget.n_iters, rng)
}

/// Lanczos ExtEvec with an explicit iteration count.
pub fn ext_evec_lanczos_with_iters<R: Rng + ?Sized>(w: &Matrix, n_iters: usize, rng: &mut R) -> SepOutcome {
    let d = w.nrows();
    let n_iters = n_iters.clamp(1, d.max(1));
    let mut start = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = start.norm();
    if norm == 0.0 {
        start[0] = 1.0;
    } else {
        start /= norm;
    }

    let mut basis: Vec<Vector> = Vec::with_capacity(n_iters);
    let mut alphas: Vec<f64> = Vec::with_capacity(n_iters);
    let mut betas: Vec<f64> = Vec::with_capacity(n_iters);
    let mut v = start;
    let mut scale = 0.0f64;
    let mut matvecs = 0;

    for k in 0..n_iters {
        let mut next = w * &v;
        matvecs += 1;
        if k > 0 {
            next.axpy(-betas[k - 1], &basis[k - 1], 1.0);
        }
        let a = next.dot(&v);
        next.axpy(-a, &v, 1.0);
        basis.push(v);
        alphas.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&next);
                next.axpy(-c, q, 1.0);
            }
        }
        let b = next.norm();
        scale = scale.max(a.abs()).max(b);
        if k + 1 == n_iters || b <= 1e-12 * scale || scale == 0.0 {
            break;
        }
        betas.push(b);
        v = next / b;
    }

    let m = alphas.len();
    let off = &betas[..m - 1];
    let (lam_max, z_max) = tridiagonal_extreme(&alphas, off, Extreme::Largest);
    let (lam_min, z_min) = tridiagonal_extreme(&alphas, off, Extreme::Smallest);
    let ritz = |z: &Vector| {
        let mut u = Vector::zeros(d);
        for (zk, vk) in z.iter().zip(&basis) {
            u.axpy(*zk, vk, 1.0);
        }
        let n = u.norm();
        if n > 0.0 {
            u / n
        } else {
            u
        }
    };
    SepOutcome::classify(lam_max, ritz(&z_max), lam_min, ritz(&z_min), matvecs)
}

/// Deterministic reference: full symmetric eigendecomposition, so
/// `gamma = ||W||_op` exactly and the separator uses a true eigenvector.
pub fn ext_evec_exact(w: &Matrix) -> Result<SepOutcome> {
    let d = w.nrows();
    if d == 0 {
        return Ok(SepOutcome {
            gamma: 0.0,
            cert: Certificate::Inside,
            matvecs: 0,
        });
    }
    let eig = SymmetricEigen::try_new(w.clone(), f64::EPSILON, 0).ok_or(Error::EigFailure)?;
    let (imax, lmax) = eig.eigenvalues.argmax();
    let (imin, lmin) = eig.eigenvalues.argmin();
    let u_max = eig.eigenvectors.column(imax).normalize();
    let u_min = eig.eigenvectors.column(imin).normalize();
    Ok(SepOutcome::classify(lmax, u_max, lmin, u_min, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Largest,
    Smallest,
}

/// Number of eigenvalues of the symmetric tridiagonal `(diag, off)` strictly
/// below `x` (Sturm sequence count).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = if i == 0 { diag[0] - x } else { diag[i] - x - b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Extreme eigenpair of a symmetric tridiagonal matrix by Sturm bisection and
/// inverse iteration.
pub fn tridiagonal_extreme(diag: &[f64], off: &[f64], which: Extreme) -> (f64, Vector) {
    let n = diag.len();
    assert!(n >= 1 && off.len() + 1 == n);
    if n == 1 {
        return (diag[0], Vector::from_element(1, 1.0));
    }

    // Gershgorin interval.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = (if i > 0 { off[i - 1].abs() } else { 0.0 }) + (if i + 1 < n { off[i].abs() } else { 0.0 });
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= 2.0 * f64::EPSILON * norm;
    hi += 2.0 * f64::EPSILON * norm;

    // Largest: smallest x with count(x) = n. Smallest: smallest x with count(x) >= 1.
    let target = match which {
        Extreme::Largest => n,
        Extreme::Smallest => 1,
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * norm {
            break;
        }
        if sturm_count(diag, off, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    (lambda, inverse_iteration(diag, off, lambda, norm))
}

/// Eigenvector for the (converged) eigenvalue `lambda` by inverse iteration
/// with a tridiagonal LU factorization with partial pivoting.
fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64, norm: f64) -> Vector {
    let n = diag.len();
    let tiny = f64::EPSILON * norm;
    let lu = TridiagLu::factor(diag, off, lambda, tiny);
    let mut z = Vector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.754_877_666_246_692_7).fract());
    z /= z.norm();
    for _ in 0..3 {
        let mut next = lu.solve(&z);
        let nn = next.norm();
        if !nn.is_finite() || nn == 0.0 {
            break;
        }
        next /= nn;
        z = next;
    }
    z
}

struct TridiagLu {
    // Row i of U has entries u0[i] (diagonal), u1[i], u2[i] (second superdiagonal from pivoting).
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut u0: Vec<f64> = diag.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = off.to_vec();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut swapped = vec![false; n];
        let mut sub: Vec<f64> = off.to_vec();
        for i in 0..n.saturating_sub(1) {
            if sub[i].abs() > u0[i].abs() {
                // Swap rows i and i+1.
                swapped[i] = true;
                let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
                u0[i] = sub[i];
                u1[i] = u0[i + 1];
                u2[i] = u1[i + 1];
                let m = a0 / u0[i];
                l[i] = m;
                u0[i + 1] = a1 - m * u1[i];
                u1[i + 1] = a2 - m * u2[i];
            } else {
                if u0[i] == 0.0 {
                    u0[i] = tiny;
                }
                let m = sub[i] / u0[i];
                l[i] = m;
                u0[i + 1] -= m * u1[i];
                u1[i + 1] -= m * u2[i];
            }
            sub[i] = 0.0;
        }
        if u0[n - 1] == 0.0 {
            u0[n - 1] = tiny;
        }
        for v in u0.iter_mut() {
            if v.abs() < tiny {
                *v = if *v < 0.0 { -tiny } else { tiny };
            }
        }
        TridiagLu { u0, u1, u2, l, swapped }
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        let n = self.u0.len();
        let mut y = rhs.clone();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap_rows(i, i + 1);
            }
            let yi = y[i];
            y[i + 1] -= self.l[i] * yi;
        }
        let mut x = Vector::zeros(n);
        for i in (0..n).rev() {
            let mut acc = y[i];
            if i + 1 < n {
                acc -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * x[i + 2];
            }
            x[i] = acc / self.u0[i];
        }
        x
    }
}
