//! Preconditioned conjugate gradients with a Lanczos estimate of the
//! extreme eigenvalues of the preconditioned operator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interface::SchurOperator;
use crate::linalg::{axpy, dot, norm2, CsrMatrix};
use crate::precond::PreconditionerHandle;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

pub trait Preconditioner: Sync {
    fn apply_inverse(&self, r: &[f64]) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.mul_vec(x)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }
}

impl LinearOperator for SchurOperator {
    fn dim(&self) -> usize {
        SchurOperator::dim(self)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        SchurOperator::apply(self, x)
    }
}

impl Preconditioner for PreconditionerHandle {
    fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        PreconditionerHandle::apply_inverse(self, r)
    }
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PcgOptions {
    /// Relative tolerance on the unpreconditioned residual.
    pub tol: f64,
    pub maxit: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self { tol: 1e-9, maxit: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct PcgReport {
    pub iterations: usize,
    /// `‖r_k‖ / ‖b‖` for k = 0..=iterations.
    pub residuals: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub converged: bool,
    /// `‖b − A x‖ / ‖b‖` recomputed at exit.
    pub true_residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Set when too few steps were taken to estimate κ (reported as 1).
    pub kappa_degenerate: bool,
}

pub fn pcg(
    op: &dyn LinearOperator,
    pc: &dyn Preconditioner,
    b: &[f64],
    opts: PcgOptions,
) -> Result<(Vec<f64>, PcgReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if b.len() != op.dim() {
        return Err(Error::invalid(format!("rhs has length {}, operator {}", b.len(), op.dim())));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Breakdown("non-finite right-hand side".into()));
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    let mut report = PcgReport {
        iterations: 0,
        residuals: vec![1.0],
        alphas: Vec::new(),
        betas: Vec::new(),
        converged: false,
        true_residual: 1.0,
        lambda_min: 1.0,
        lambda_max: 1.0,
        kappa: 1.0,
        kappa_degenerate: true,
    };
    if bnorm == 0.0 {
        report.residuals[0] = 0.0;
        report.true_residual = 0.0;
        report.converged = true;
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = pc.apply_inverse(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..opts.maxit {
        let q = op.apply(&p);
        let pq = dot(&p, &q);
        if !pq.is_finite() || !rz.is_finite() {
            return Err(Error::Breakdown(format!("non-finite value at iteration {}", report.iterations)));
        }
        if pq <= 0.0 || rz <= 0.0 {
            return Err(Error::Breakdown(format!(
                "operator or preconditioner not positive definite at iteration {}",
                report.iterations
            )));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        report.alphas.push(alpha);
        report.iterations += 1;
        let rel = norm2(&r) / bnorm;
        report.residuals.push(rel);
        if rel <= opts.tol {
            report.converged = true;
            break;
        }
        z = pc.apply_inverse(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        report.betas.push(beta);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let ax = op.apply(&x);
    let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    report.true_residual = norm2(&res) / bnorm;
    if !report.converged {
        log::warn!("PCG stopped after {} iterations at relative residual {:.3e}", report.iterations, report.residuals.last().unwrap());
    }
    if let Some((lo, hi)) = lanczos_extremes(&report.alphas, &report.betas) {
        if report.alphas.len() >= 2 {
            report.lambda_min = lo;
            report.lambda_max = hi;
            report.kappa = (hi / lo).max(1.0);
            report.kappa_degenerate = false;
        }
    }
    Ok((x, report))
}

/// Lanczos tridiagonal matrix from the CG coefficients: diagonal and
/// off-diagonal entries.
pub fn lanczos_matrix(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = alphas.len();
    let mut d = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut v = 1.0 / alphas[j];
        if j > 0 {
            v += betas[j - 1] / alphas[j - 1];
        }
        d.push(v);
        if j + 1 < k {
            e.push(betas[j].sqrt() / alphas[j]);
        }
    }
    (d, e)
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] } else { 0.0 };
        q = d[i] - x - if i > 0 { off / q } else { 0.0 };
        if q == 0.0 {
            q = f64::EPSILON * (d[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `index`-th smallest eigenvalue by bisection.
fn bisect(d: &[f64], e: &[f64], index: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d.len() {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i < e.len() { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Extreme eigenvalues of the Lanczos matrix, or `None` when empty.
pub fn lanczos_extremes(alphas: &[f64], betas: &[f64]) -> Option<(f64, f64)> {
    if alphas.is_empty() {
        return None;
    }
    let (d, e) = lanczos_matrix(alphas, betas);
    Some((bisect(&d, &e, 0), bisect(&d, &e, d.len() - 1)))
}

/// κ estimate from the first `steps` CG coefficients.
pub fn lanczos_kappa(alphas: &[f64], betas: &[f64], steps: usize) -> f64 {
    let k = steps.min(alphas.len());
    match lanczos_extremes(&alphas[..k], &betas[..k.saturating_sub(1).min(betas.len())]) {
        Some((lo, hi)) if k >= 2 => (hi / lo).max(1.0),
        _ => 1.0,
    }
}
