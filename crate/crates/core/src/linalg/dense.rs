use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense Cholesky factor stored row-major (lower triangle).
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("Cholesky of a non-square matrix"));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = a[(i, j)];
            }
        }
        for i in 0..n {
            for j in 0..i {
                let (head, tail) = l.split_at_mut(i * n);
                let lj = &head[j * n..j * n + j];
                let li = &mut tail[..n];
                let s = li[j] - super::dot(&li[..j], lj);
                li[j] = s / head[j * n + j];
            }
            let row = &l[i * n..i * n + i];
            let d = l[i * n + i] - super::dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Indefinite {
                    what: "dense matrix".into(),
                    row: i,
                    pivot: d,
                });
            }
            l[i * n + i] = d.sqrt();
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        x.copy_from_slice(b);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            x[i] = (x[i] - super::dot(row, &x[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let xi = x[i] / self.l[i * n + i];
            x[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (xk, lk) in x[..i].iter_mut().zip(row) {
                *xk -= lk * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    /// Solve for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        let mut x = vec![0.0; self.n];
        for c in 0..b.ncols() {
            let col: Vec<f64> = b.column(c).iter().copied().collect();
            self.solve_into(&col, &mut x);
            out.column_mut(c).copy_from_slice(&x);
        }
        out
    }

    /// `L^{-1} b` (forward substitution only).
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            x[i] = (x[i] - super::dot(row, &x[..i])) / self.l[i * n + i];
        }
        x
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.column_mut(k).copy_from(&eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `f(A)` for symmetric `A` through its eigendecomposition; eigenvalues
/// below `1e-14 * max|λ|` are floored to that value first.
pub fn sym_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-14 * top;
    let fvals = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v.max(floor))));
    &vecs * DMatrix::from_diagonal(&fvals) * vecs.transpose()
}

pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, f64::sqrt)
}

pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_function(a, |v| 1.0 / v.sqrt())
}

/// Eigenvalues of the pencil `(a, b)` with `b` SPD, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = DenseCholesky::factor(b)?;
    let n = a.nrows();
    // C = L^{-1} A L^{-T}
    let mut half = DMatrix::zeros(n, n);
    for c in 0..n {
        let col: Vec<f64> = a.column(c).iter().copied().collect();
        half.column_mut(c).copy_from_slice(&chol.forward(&col));
    }
    let half_t = half.transpose();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = half_t.column(j).iter().copied().collect();
        c.column_mut(j).copy_from_slice(&chol.forward(&col));
    }
    let (vals, _) = sym_eigen_sorted(&c);
    Ok(vals.iter().copied().collect())
}

/// Ratio of extreme generalized eigenvalues of `(a, b)`.
pub fn generalized_condition(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let v = generalized_eigenvalues(a, b)?;
    Ok(v[v.len() - 1] / v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64).sin());
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn cholesky_solves() {
        let a = spd(12);
        let chol = DenseCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let x = chol.solve(&b);
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = spd(8);
        let s = sym_sqrt(&a);
        assert_relative_eq!(&s * &s, a, epsilon = 1e-10, max_relative = 1e-12);
    }

    #[test]
    fn generalized_with_identity_is_standard() {
        let a = spd(6);
        let g = generalized_eigenvalues(&a, &DMatrix::identity(6, 6)).unwrap();
        let (s, _) = sym_eigen_sorted(&a);
        for (x, y) in g.iter().zip(s.iter()) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }
}
