//! Envelope (skyline) Cholesky factorization of sparse SPD matrices.
//!
//! Rows are reordered with reverse Cuthill–McKee before factorization; the
//! factor keeps, for every row, the dense stretch from its first nonzero up
//! to the diagonal. Fill stays inside that envelope.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `a`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            next.dedup();
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Start node of maximal eccentricity within the component (George–Liu).
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(root, adj);
        let depth = *levels.iter().flatten().max().unwrap_or(&0);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        let candidate = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(depth))
            .min_by_key(|(i, _)| (degree[*i], *i))
            .map(|(i, _)| i)
            .unwrap_or(root);
        if candidate == root {
            break;
        }
        root = candidate;
    }
    root
}

fn bfs_levels(root: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(lv + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_permutation(a, perm)
    }

    pub fn factor_with_permutation(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::invalid("skyline factorization needs a square matrix"));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (oj, _) in a.row(old) {
                let j = inv[oj];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for old in 0..n {
            let i = inv[old];
            for (oj, v) in a.row(old) {
                let j = inv[oj];
                if j <= i {
                    values[offset[i] + j - first[i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = offset[j];
                let mut s = values[row_i + j - fi];
                for k in k0..j {
                    s -= values[row_i + k - fi] * values[row_j + k - fj];
                }
                let djj = values[row_j + j - fj];
                values[row_i + j - fi] = s / djj;
            }
            let mut d = values[row_i + i - fi];
            for k in fi..i {
                let l = values[row_i + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Indefinite {
                    what: "sparse matrix".into(),
                    row: perm[i],
                    pivot: d,
                });
            }
            values[row_i + i - fi] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let n = m * m;
        let mut t = TripletBuilder::new(n, n);
        for j in 0..m {
            for i in 0..m {
                let k = j * m + i;
                t.push(k, k, 4.0);
                if i > 0 {
                    t.push(k, k - 1, -1.0);
                }
                if i + 1 < m {
                    t.push(k, k + 1, -1.0);
                }
                if j > 0 {
                    t.push(k, k - m, -1.0);
                }
                if j + 1 < m {
                    t.push(k, k + m, -1.0);
                }
            }
        }
        t.build()
    }

    #[test]
    fn solves_laplacian() {
        let a = laplacian_2d(9);
        let chol = SkylineCholesky::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..81).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = chol.solve(&b);
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_2d(6);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort();
        assert_eq!(p, (0..36).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_indefinite() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        assert!(matches!(
            SkylineCholesky::factor(&t.build()),
            Err(Error::Indefinite { .. })
        ));
    }
}
