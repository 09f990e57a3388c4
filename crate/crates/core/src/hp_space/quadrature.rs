use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// `[0, 1]`
    Segment,
    /// `(0,0), (1,0), (0,1)`
    Triangle,
    /// `[0, 1]^2`
    Quad,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: DomainKind,
    /// Segment rules use the first coordinate only.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

const MAX_EXACTNESS: usize = 80;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// A rule on `kind` integrating polynomials of total degree `exactness`
/// exactly. Triangles use a collapsed (Duffy) tensor Gauss rule.
pub fn quadrature(kind: DomainKind, exactness: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_EXACTNESS).contains(&exactness) {
        return Err(Error::invalid(format!(
            "quadrature exactness {exactness} outside 1..={MAX_EXACTNESS}"
        )));
    }
    let n = (exactness + 2) / 2;
    let (x, w) = gauss_legendre(n);
    let (points, weights) = match kind {
        DomainKind::Segment => (x.iter().map(|&t| [t, 0.0]).collect(), w),
        DomainKind::Quad => {
            let mut p = Vec::with_capacity(n * n);
            let mut ww = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    p.push([x[i], x[j]]);
                    ww.push(w[i] * w[j]);
                }
            }
            (p, ww)
        }
        DomainKind::Triangle => {
            // x = u, y = v (1 - u); the Jacobian (1 - u) adds one degree in u
            let nu = (exactness + 3) / 2;
            let (xu, wu) = gauss_legendre(nu);
            let mut p = Vec::with_capacity(nu * n);
            let mut ww = Vec::with_capacity(nu * n);
            for i in 0..nu {
                for j in 0..n {
                    p.push([xu[i], x[j] * (1.0 - xu[i])]);
                    ww.push(wu[i] * w[j] * (1.0 - xu[i]));
                }
            }
            (p, ww)
        }
    };
    Ok(QuadratureRule {
        kind,
        points,
        weights,
        exactness,
    })
}
