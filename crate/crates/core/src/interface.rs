//! Static condensation of the interior dofs and the change of interface
//! basis that splits off the piecewise linear vertex interpolant.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::hp_space::DofMap;
use crate::linalg::{CsrMatrix, DenseCholesky, TripletBuilder};
use crate::par;

/// Interior block of one subdomain together with its coupling to the
/// interface, compressed to the interface columns it actually touches.
#[derive(Debug, Clone)]
struct LocalInterior {
    range: Range<usize>,
    chol: Option<DenseCholesky>,
    cols: Vec<usize>,
    coupling: DMatrix<f64>,
}

impl LocalInterior {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => Vec::new(),
        }
    }

    /// `B_ℓᵀ A_ℓℓ⁻¹ B_ℓ` on the compressed columns.
    fn correction(&self) -> DMatrix<f64> {
        let Some(chol) = &self.chol else {
            return DMatrix::zeros(self.cols.len(), self.cols.len());
        };
        let n = self.range.len();
        let mut x = DMatrix::zeros(n, self.cols.len());
        for c in 0..self.cols.len() {
            let col: Vec<f64> = self.coupling.column(c).iter().copied().collect();
            x.set_column(c, &nalgebra::DVector::from_vec(chol.forward(&col)));
        }
        x.transpose() * x
    }
}

/// The Schur complement `S = A_ΓΓ − A_IΓᵀ A_II⁻¹ A_IΓ`, applied implicitly
/// through subdomain-local dense factorizations.
#[derive(Debug, Clone)]
pub struct SchurOperator {
    n_interior: usize,
    a_gg: CsrMatrix,
    a_ig: CsrMatrix,
    locals: Vec<LocalInterior>,
}

pub fn eliminate_interior(sys: &BlockSystem) -> Result<(SchurOperator, Vec<f64>)> {
    let op = SchurOperator::new(sys)?;
    let g = op.condense_rhs(sys.f_i(), sys.f_g());
    Ok((op, g))
}

impl SchurOperator {
    pub fn new(sys: &BlockSystem) -> Result<Self> {
        let a_ii = sys.a_ii();
        let a_ig = sys.a_ig();
        let locals = par::try_map_range(sys.interior_ranges.len(), |sd| {
            let range = sys.interior_ranges[sd].clone();
            let n = range.len();
            let mut block = DMatrix::zeros(n, n);
            let mut cols: Vec<usize> = Vec::new();
            for (li, i) in range.clone().enumerate() {
                for (j, v) in a_ii.row(i) {
                    if !range.contains(&j) {
                        return Err(Error::consistency(format!(
                            "interior dof {i} couples to interior dof {j} of another subdomain"
                        )));
                    }
                    block[(li, j - range.start)] = v;
                }
                cols.extend(a_ig.row(i).map(|(j, _)| j));
            }
            cols.sort_unstable();
            cols.dedup();
            let mut coupling = DMatrix::zeros(n, cols.len());
            for (li, i) in range.clone().enumerate() {
                for (j, v) in a_ig.row(i) {
                    let c = cols.binary_search(&j).expect("column collected above");
                    coupling[(li, c)] = v;
                }
            }
            let chol = if n > 0 {
                Some(DenseCholesky::factor(&block).map_err(|e| e.with_context(format!("A_II of subdomain {sd}")))?)
            } else {
                None
            };
            Ok(LocalInterior { range, chol, cols, coupling })
        })?;
        Ok(Self {
            n_interior: sys.n_interior,
            a_gg: sys.a_gg(),
            a_ig,
            locals,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_gg.nrows()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    /// `y = S x` without forming `S`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.a_gg.mul_vec(x);
        let parts = par::map(&self.locals, |loc| {
            if loc.chol.is_none() {
                return Vec::new();
            }
            let xc: Vec<f64> = loc.cols.iter().map(|&c| x[c]).collect();
            let bx = &loc.coupling * nalgebra::DVector::from_vec(xc);
            let z = loc.solve(bx.as_slice());
            let w = loc.coupling.transpose() * nalgebra::DVector::from_vec(z);
            loc.cols.iter().copied().zip(w.iter().copied()).collect::<Vec<_>>()
        });
        for part in parts {
            for (c, v) in part {
                y[c] -= v;
            }
        }
        y
    }

    /// Exact sparse `S`, summing the local dense corrections.
    pub fn assemble(&self) -> CsrMatrix {
        let n = self.dim();
        let parts = par::map(&self.locals, |loc| {
            let w = loc.correction();
            let mut t = TripletBuilder::new(n, n);
            for (a, &ca) in loc.cols.iter().enumerate() {
                for (b, &cb) in loc.cols.iter().enumerate() {
                    t.push(ca, cb, -w[(a, b)]);
                }
            }
            t
        });
        let mut t = TripletBuilder::new(n, n);
        for (i, j, v) in self.a_gg.triplets() {
            t.push(i, j, v);
        }
        for p in parts {
            t.extend(p);
        }
        let s = t.build();
        symmetrize_sparse(&s)
    }

    /// `A_II⁻¹ r`, blockwise.
    pub fn solve_interior(&self, r: &[f64]) -> Vec<f64> {
        let parts = par::map(&self.locals, |loc| loc.solve(&r[loc.range.clone()]));
        let mut x = vec![0.0; self.n_interior];
        for (loc, part) in self.locals.iter().zip(parts) {
            x[loc.range.clone()].copy_from_slice(&part);
        }
        x
    }

    /// `g = F_Γ − A_IΓᵀ A_II⁻¹ F_I`.
    pub fn condense_rhs(&self, f_i: &[f64], f_g: &[f64]) -> Vec<f64> {
        let z = self.solve_interior(f_i);
        let mut g = f_g.to_vec();
        let mut corr = vec![0.0; g.len()];
        self.a_ig.transpose_matvec_add(&z, &mut corr);
        for (gi, c) in g.iter_mut().zip(corr) {
            *gi -= c;
        }
        g
    }

    /// Full dof vector `[A_II⁻¹(F_I − A_IΓ u_Γ); u_Γ]`.
    pub fn recover(&self, u_g: &[f64], f_i: &[f64]) -> Vec<f64> {
        let mut r = f_i.to_vec();
        let au = self.a_ig.mul_vec(u_g);
        for (ri, a) in r.iter_mut().zip(au) {
            *ri -= a;
        }
        let mut u = self.solve_interior(&r);
        u.extend_from_slice(u_g);
        u
    }

    /// Discrete harmonic extension of interface data, as a full dof vector.
    pub fn harmonic_lifting(&self, eta: &[f64]) -> Vec<f64> {
        self.recover(eta, &vec![0.0; self.n_interior])
    }
}

fn symmetrize_sparse(s: &CsrMatrix) -> CsrMatrix {
    s.add(&s.transpose(), 1.0).scaled(0.5)
}

/// `R̃ = [[I, 0], [Lᵀ, I]]` on (edge, vertex) ordering, where `L(i, v)` is
/// the value at edge dof `i` of the linear interpolant along its subdomain
/// side that equals 1 at vertex dof `v`. Original coefficients are
/// `u = R̃ᵀ ũ`.
#[derive(Debug, Clone)]
pub struct BasisTransform {
    n_edge: usize,
    n_vertex: usize,
    l: CsrMatrix,
    lt: CsrMatrix,
}

pub fn build_transform(dofmap: &DofMap) -> BasisTransform {
    let ne = dofmap.n_edge;
    let nv = dofmap.n_vertex;
    let first_v = dofmap.n_interior + ne;
    let mut t = TripletBuilder::new(ne, nv);
    for sides in &dofmap.side_traces {
        for tr in sides {
            let k = tr.dofs.len();
            let v0 = tr.dofs[0] - first_v;
            let v1 = tr.dofs[k - 1] - first_v;
            for m in 1..k - 1 {
                let s = tr.positions[m] / tr.length;
                let e = tr.dofs[m] - dofmap.n_interior;
                t.push(e, v0, 1.0 - s);
                t.push(e, v1, s);
            }
        }
    }
    let l = t.build();
    let lt = l.transpose();
    BasisTransform { n_edge: ne, n_vertex: nv, l, lt }
}

impl BasisTransform {
    pub fn dim(&self) -> usize {
        self.n_edge + self.n_vertex
    }

    pub fn n_edge(&self) -> usize {
        self.n_edge
    }

    /// Interpolation coefficients `L` (edge rows, vertex columns).
    pub fn interpolation(&self) -> &CsrMatrix {
        &self.l
    }

    /// `R̃` as a sparse matrix.
    pub fn matrix(&self) -> CsrMatrix {
        let ne = self.n_edge;
        let mut t = TripletBuilder::new(self.dim(), self.dim());
        for i in 0..self.dim() {
            t.push(i, i, 1.0);
        }
        for (v, e, c) in self.lt.triplets() {
            t.push(ne + v, e, c);
        }
        t.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix().to_dense()
    }

    /// `R̃ x`
    pub fn apply_r(&self, x: &[f64]) -> Vec<f64> {
        let (xe, xv) = x.split_at(self.n_edge);
        let mut y = x.to_vec();
        let add = self.lt.mul_vec(xe);
        for (yi, a) in y[self.n_edge..].iter_mut().zip(add) {
            *yi += a;
        }
        debug_assert_eq!(xv.len(), self.n_vertex);
        y
    }

    /// `R̃ᵀ x`
    pub fn apply_rt(&self, x: &[f64]) -> Vec<f64> {
        let xv = &x[self.n_edge..];
        let mut y = x.to_vec();
        let add = self.l.mul_vec(xv);
        for (yi, a) in y[..self.n_edge].iter_mut().zip(add) {
            *yi += a;
        }
        y
    }

    /// `R̃⁻¹ x`
    pub fn apply_r_inv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let sub = self.lt.mul_vec(&x[..self.n_edge]);
        for (yi, a) in y[self.n_edge..].iter_mut().zip(sub) {
            *yi -= a;
        }
        y
    }

    /// `R̃⁻ᵀ x`
    pub fn apply_rt_inv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let sub = self.l.mul_vec(&x[self.n_edge..]);
        for (yi, a) in y[..self.n_edge].iter_mut().zip(sub) {
            *yi -= a;
        }
        y
    }

    /// `R̃ M R̃ᵀ` for a sparse symmetric `M` on the interface.
    pub fn congruence(&self, m: &CsrMatrix) -> CsrMatrix {
        let r = self.matrix();
        let out = r.matmul(m).matmul(&r.transpose());
        symmetrize_sparse(&out)
    }
}

/// `S̃ = R̃ S R̃ᵀ` and `g̃ = R̃ g`.
pub fn transform_schur(s: &CsrMatrix, g: &[f64], t: &BasisTransform) -> (CsrMatrix, Vec<f64>) {
    (t.congruence(s), t.apply_r(g))
}
