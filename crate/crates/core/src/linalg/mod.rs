//! Linear-algebra plumbing: compressed sparse rows, an envelope Cholesky
//! with reverse Cuthill–McKee ordering, and small dense helpers on top of
//! nalgebra.

pub mod dense;
pub mod skyline;
pub mod sparse;

pub use dense::DenseCholesky;
pub use skyline::SkylineCholesky;
pub use sparse::{CsrMatrix, TripletBuilder};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
