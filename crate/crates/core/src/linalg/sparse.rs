use std::ops::Range;

use nalgebra::DMatrix;

/// Coordinate-format accumulator; duplicates are summed on [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: TripletBuilder) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries
            .sort_unstable_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut t = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.abs() > drop_tol {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `y += A^T x`
    pub fn transpose_matvec_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
    }

    /// Contiguous sub-block `A[rows, cols]`, re-indexed from zero.
    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> CsrMatrix {
        let mut t = TripletBuilder::new(rows.len(), cols.len());
        for i in rows.clone() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    t.push(i - rows.start, j - cols.start, v);
                }
            }
        }
        t.build()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(j, i, v);
            }
        }
        t.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|` over the stored pattern and its transpose.
    pub fn symmetry_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        super::dot(x, &ax)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.data.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// Sparse product `self · other` with a dense row accumulator.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch in matmul");
        let rows = crate::par::map_range(self.nrows, |i| {
            let mut cols: Vec<usize> = Vec::new();
            let mut acc: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    *acc.entry(j).or_insert_with(|| {
                        cols.push(j);
                        0.0
                    }) += a * b;
                }
            }
            cols.sort_unstable();
            cols.into_iter().map(|j| (j, acc[&j])).collect::<Vec<_>>()
        });
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in rows {
            for (j, v) in r {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn add(&self, other: &CsrMatrix, scale: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::new(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            t.push(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            t.push(i, j, scale * v);
        }
        t.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_dense() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, -1.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 0.0, 2.0, 4.0, 0.0]);
        let c = CsrMatrix::from_dense(&a, 0.0).matmul(&CsrMatrix::from_dense(&b, 0.0));
        assert!((c.to_dense() - &a * &b).abs().max() < 1e-15);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 1, 1.0);
        t.push(0, 1, 2.5);
        t.push(1, 0, -1.0);
        let a = t.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn transpose_matvec_matches_dense() {
        let mut t = TripletBuilder::new(3, 2);
        t.push(0, 0, 1.0);
        t.push(2, 1, 4.0);
        t.push(1, 0, -2.0);
        let a = t.build();
        let mut y = vec![0.0; 2];
        a.transpose_matvec_add(&[1.0, 2.0, 3.0], &mut y);
        let d = a.to_dense().transpose() * nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(y, d.as_slice());
    }

    #[test]
    fn submatrix_reindexes() {
        let a = CsrMatrix::from_dense(
            &DMatrix::from_row_slice(3, 3, &[1., 2., 3., 4., 5., 6., 7., 8., 9.]),
            0.0,
        );
        let s = a.submatrix(1..3, 0..2);
        assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[4., 5., 7., 8.]));
    }
}
