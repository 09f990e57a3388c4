//! Interface preconditioners acting on the transformed (edge, vertex) basis:
//! the edge/vertex block preconditioner `P` plus penalty, and the two
//! Schur-block variants `P⋆` and `P_D`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::MacroEdge;
use crate::hp_space::{gauss_legendre, lagrange_1d, DofMap, SideTrace, TraceSpan};
use crate::interface::BasisTransform;
use crate::linalg::dense::{sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::linalg::{norm2, CsrMatrix, SkylineCholesky, TripletBuilder};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    None,
    P,
    PStar,
    PD,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::None => "none",
            Variant::P => "P",
            Variant::PStar => "Pstar",
            Variant::PD => "PD",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Variant::None),
            "p" => Ok(Variant::P),
            "pstar" | "p*" => Ok(Variant::PStar),
            "pd" => Ok(Variant::PD),
            _ => Err(Error::invalid(format!("unknown preconditioner `{s}` (none, P, Pstar, PD)"))),
        }
    }
}

/// 1D mass and stiffness on the interior nodes of one subdomain side, and
/// the discrete `H^{1/2}_00` block built from them.
#[derive(Debug, Clone)]
pub struct EdgeBlock {
    pub macro_edge: usize,
    pub subdomain: usize,
    pub plus: bool,
    /// Interface indices (edge dofs counted from zero).
    pub dofs: Vec<usize>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub k_hat: DMatrix<f64>,
}

/// Mass and stiffness of the continuous piecewise polynomial space on a
/// side, restricted to functions vanishing at both ends.
pub fn edge_matrices(positions: &[f64], cells: &[TraceSpan]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = positions.len();
    let m = n.saturating_sub(2);
    let mut mass = DMatrix::zeros(m, m);
    let mut stiff = DMatrix::zeros(m, m);
    for c in cells {
        let len = c.s1 - c.s0;
        let (pts, wts) = gauss_legendre(c.degree + 1);
        for (t, w) in pts.iter().zip(&wts) {
            let (v, d) = lagrange_1d(c.degree, *t);
            for a in 0..=c.degree {
                let ia = c.first + a;
                if ia == 0 || ia == n - 1 {
                    continue;
                }
                for b in 0..=c.degree {
                    let ib = c.first + b;
                    if ib == 0 || ib == n - 1 {
                        continue;
                    }
                    mass[(ia - 1, ib - 1)] += w * len * v[a] * v[b];
                    stiff[(ia - 1, ib - 1)] += w * d[a] * d[b] / len;
                }
            }
        }
    }
    (mass, stiff)
}

/// Row sums of the full-side mass matrix (`∫ φ_i`), interior nodes only.
pub fn lumped_mass(positions: &[f64], cells: &[TraceSpan]) -> Vec<f64> {
    let m = positions.len().saturating_sub(2);
    let mut w = vec![0.0; m];
    for c in cells {
        let (pts, wts) = gauss_legendre(c.degree + 1);
        for (t, wq) in pts.iter().zip(&wts) {
            let (v, _) = lagrange_1d(c.degree, *t);
            for (a, va) in v.iter().enumerate() {
                let i = c.first + a;
                if (1..=m).contains(&i) {
                    w[i - 1] += wq * (c.s1 - c.s0) * va;
                }
            }
        }
    }
    w
}

/// 1D mass matrix used inside `K̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMass {
    Consistent,
    /// Nodal quadrature (row-sum lumping).
    Lumped,
}

impl FromStr for EdgeMass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(EdgeMass::Consistent),
            "lumped" => Ok(EdgeMass::Lumped),
            _ => Err(Error::invalid(format!("unknown edge mass `{s}` (consistent, lumped)"))),
        }
    }
}

impl fmt::Display for EdgeMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeMass::Consistent => "consistent",
            EdgeMass::Lumped => "lumped",
        })
    }
}

/// `K̂ = M^{1/2} (M^{-1/2} R M^{-1/2})^{1/2} M^{1/2}`.
pub fn k_hat(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> DMatrix<f64> {
    if mass.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mh = sym_sqrt(mass);
    let mih = sym_inv_sqrt(mass);
    let inner = symmetrize(&(&mih * stiffness * &mih));
    symmetrize(&(&mh * sym_sqrt(&inner) * &mh))
}

pub fn edge_block(trace: &SideTrace, edge: &MacroEdge, n_interior: usize, mass: EdgeMass) -> EdgeBlock {
    let (mut m, stiffness) = edge_matrices(&trace.positions, &trace.cells);
    if mass == EdgeMass::Lumped {
        m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lumped_mass(&trace.positions, &trace.cells)));
    }
    let k = k_hat(&m, &stiffness);
    EdgeBlock {
        macro_edge: trace.macro_edge,
        subdomain: trace.subdomain,
        plus: edge.plus.subdomain == trace.subdomain,
        dofs: trace.edge_dofs().iter().map(|d| d - n_interior).collect(),
        mass: m,
        stiffness,
        k_hat: k,
    }
}

/// One block per subdomain side, built in parallel.
pub fn edge_blocks(dofmap: &DofMap, edges: &[MacroEdge], mass: EdgeMass) -> Vec<EdgeBlock> {
    let traces: Vec<&SideTrace> = dofmap.side_traces.iter().flatten().collect();
    par::map(&traces, |tr| edge_block(tr, &edges[tr.macro_edge], dofmap.n_interior, mass))
}

/// Stiffness of the bilinear element on a square, corners counterclockwise.
pub fn vertex_block() -> [[f64; 4]; 4] {
    let s = 1.0 / 6.0;
    [
        [4.0 * s, -s, -2.0 * s, -s],
        [-s, 4.0 * s, -s, -2.0 * s],
        [-2.0 * s, -s, 4.0 * s, -s],
        [-s, -2.0 * s, -s, 4.0 * s],
    ]
}

/// `P_VV` on the interface indices of the vertex dofs.
pub fn vertex_matrix(dofmap: &DofMap) -> CsrMatrix {
    let n = dofmap.n_trace();
    let ni = dofmap.n_interior;
    let b = vertex_block();
    let mut t = TripletBuilder::new(n, n);
    for corners in &dofmap.vertex_dofs {
        for a in 0..4 {
            for c in 0..4 {
                t.push(corners[a] - ni, corners[c] - ni, b[a][c]);
            }
        }
    }
    t.build()
}

/// An assembled preconditioner together with its factorization.
#[derive(Debug, Clone)]
pub struct PreconditionerHandle {
    pub variant: Variant,
    matrix: Option<CsrMatrix>,
    factor: Option<SkylineCholesky>,
    dim: usize,
}

impl PreconditionerHandle {
    pub fn identity(dim: usize) -> Self {
        Self { variant: Variant::None, matrix: None, factor: None, dim }
    }

    fn factorized(variant: Variant, matrix: CsrMatrix) -> Result<Self> {
        let factor = SkylineCholesky::factor(&matrix)
            .map_err(|e| e.with_context(format!("preconditioner {variant}")))?;
        Ok(Self { variant, dim: matrix.nrows(), matrix: Some(matrix), factor: Some(factor) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.matrix.as_ref()
    }

    /// `P⁻¹ b`: direct solve plus one step of iterative refinement.
    pub fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        let (Some(m), Some(f)) = (&self.matrix, &self.factor) else {
            return b.to_vec();
        };
        let mut x = f.solve(b);
        let ax = m.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if norm2(&r) > 0.0 {
            let dx = f.solve(&r);
            x.iter_mut().zip(dx).for_each(|(x, d)| *x += d);
        }
        x
    }
}

/// Options for assembling `P`.
#[derive(Debug, Clone, Copy)]
pub struct POptions {
    /// Multiplier on every edge block, relative to `P_VV` and `Q̃`.
    pub edge_weight: f64,
    /// Use `K̂^{1/2}` as edge block instead of `K̂`.
    pub literal_sqrt: bool,
}

impl Default for POptions {
    fn default() -> Self {
        Self { edge_weight: 1.0, literal_sqrt: false }
    }
}

/// `P = blockdiag(K̂ per side, P_VV) + R̃ Q R̃ᵀ`.
pub fn assemble_p(
    blocks: &[EdgeBlock],
    p_vv: &CsrMatrix,
    q: &CsrMatrix,
    t: &BasisTransform,
    opts: POptions,
) -> Result<PreconditionerHandle> {
    let n = t.dim();
    if p_vv.nrows() != n || q.nrows() != n {
        return Err(Error::consistency("preconditioner components live on different interface spaces"));
    }
    if !(opts.edge_weight > 0.0) {
        return Err(Error::invalid(format!("edge weight must be positive, got {}", opts.edge_weight)));
    }
    let mut trip = TripletBuilder::new(n, n);
    for b in blocks {
        let k = if opts.literal_sqrt { sym_sqrt(&b.k_hat) } else { b.k_hat.clone() } * opts.edge_weight;
        for (a, &da) in b.dofs.iter().enumerate() {
            for (c, &dc) in b.dofs.iter().enumerate() {
                trip.push(da, dc, k[(a, c)]);
            }
        }
    }
    for (i, j, v) in p_vv.triplets() {
        trip.push(i, j, v);
    }
    for (i, j, v) in t.congruence(q).triplets() {
        trip.push(i, j, v);
    }
    PreconditionerHandle::factorized(Variant::P, trip.build())
}

/// Masked copy of `S̃`: edge-edge couplings only within a macro edge, and
/// edge-vertex couplings optionally dropped.
pub fn masked_schur(s_tilde: &CsrMatrix, dofmap: &DofMap, keep_ev: bool) -> CsrMatrix {
    let ne = dofmap.n_edge;
    let ni = dofmap.n_interior;
    let edge_of = |i: usize| dofmap.macro_edge_of(ni + i);
    let mut t = TripletBuilder::new(s_tilde.nrows(), s_tilde.ncols());
    for (i, j, v) in s_tilde.triplets() {
        let keep = match (i < ne, j < ne) {
            (true, true) => edge_of(i) == edge_of(j),
            (false, false) => true,
            _ => keep_ev,
        };
        if keep {
            t.push(i, j, v);
        }
    }
    t.build()
}

pub fn assemble_pstar(s_tilde: &CsrMatrix, dofmap: &DofMap) -> Result<PreconditionerHandle> {
    PreconditionerHandle::factorized(Variant::PStar, masked_schur(s_tilde, dofmap, true))
}

pub fn assemble_pd(s_tilde: &CsrMatrix, dofmap: &DofMap) -> Result<PreconditionerHandle> {
    PreconditionerHandle::factorized(Variant::PD, masked_schur(s_tilde, dofmap, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_penalty_q, assemble_system, DEFAULT_ALPHA};
    use crate::geometry::{build_partition, structured_tri_mesh, MeshSet};
    use crate::hp_space::build_dofmap;
    use crate::interface::{build_transform, eliminate_interior, transform_schur};
    use crate::linalg::dense::{generalized_eigenvalues, sym_eigen_sorted};
    use proptest::prelude::*;

    fn uniform_cells(cells: usize, degree: usize, len: f64) -> (Vec<f64>, Vec<TraceSpan>) {
        let h = len / cells as f64;
        let positions = (0..=cells * degree).map(|i| i as f64 * h / degree as f64).collect();
        let spans = (0..cells)
            .map(|c| TraceSpan { first: c * degree, degree, s0: c as f64 * h, s1: (c + 1) as f64 * h })
            .collect();
        (positions, spans)
    }

    #[test]
    fn single_node_block_closed_form() {
        let h = 0.3;
        let (pos, cells) = uniform_cells(2, 1, 2.0 * h);
        let (m, r) = edge_matrices(&pos, &cells);
        assert!((m[(0, 0)] - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((r[(0, 0)] - 2.0 / h).abs() < 1e-13);
        let k = k_hat(&m, &r);
        assert!((k[(0, 0)] - 2.0 / 3f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn lumped_mass_is_nodal_quadrature() {
        let (pos, cells) = uniform_cells(4, 1, 1.0);
        assert!(lumped_mass(&pos, &cells).iter().all(|w| (w - 0.25).abs() < 1e-15));
        // quadratic: Simpson weights on each cell
        let (pos, cells) = uniform_cells(2, 2, 1.0);
        let w = lumped_mass(&pos, &cells);
        let expect = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_generalized_spectrum_matches_closed_form() {
        // -u'' with linear elements on (0,1): λ_k = 6/h² (1 - cos θ)/(2 + cos θ)
        let cells = 12;
        let h = 1.0 / cells as f64;
        let (pos, spans) = uniform_cells(cells, 1, 1.0);
        let (m, r) = edge_matrices(&pos, &spans);
        let ev = generalized_eigenvalues(&r, &m).unwrap();
        for (k, l) in ev.iter().enumerate() {
            let th = (k + 1) as f64 * std::f64::consts::PI / cells as f64;
            let exact = 6.0 / (h * h) * (1.0 - th.cos()) / (2.0 + th.cos());
            assert!((l - exact).abs() < 1e-10 * exact);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn k_hat_squares_to_stiffness(cells in 1usize..=16, degree in 1usize..=4, len in 0.05f64..2.0) {
            let (pos, spans) = uniform_cells(cells, degree, len);
            prop_assume!(pos.len() > 2 && pos.len() - 2 <= 31);
            let (m, r) = edge_matrices(&pos, &spans);
            let k = k_hat(&m, &r);
            let back = &k * m.clone().try_inverse().unwrap() * &k;
            prop_assert!((back - &r).abs().max() <= 1e-10 * r.abs().max());
        }
    }

    #[test]
    fn vertex_block_properties() {
        let b = vertex_block();
        for row in b {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        assert!((b[0][0] - 2.0 / 3.0).abs() < 1e-15);
    }

    struct Setup {
        dofmap: DofMap,
        meshset: MeshSet,
        s_tilde: CsrMatrix,
        t: BasisTransform,
    }

    fn setup(level: usize, r: usize, p: usize) -> Setup {
        let part = build_partition(level).unwrap();
        let meshset = structured_tri_mesh(&part, r, p).unwrap();
        let dofmap = build_dofmap(&meshset).unwrap();
        let sys = assemble_system(&meshset, &dofmap, DEFAULT_ALPHA, &|_| 1.0).unwrap();
        let (op, g) = eliminate_interior(&sys).unwrap();
        let t = build_transform(&dofmap);
        let (s_tilde, _) = transform_schur(&op.assemble(), &g, &t);
        Setup { dofmap, meshset, s_tilde, t }
    }

    fn build_p(s: &Setup) -> PreconditionerHandle {
        let blocks = edge_blocks(&s.dofmap, &s.meshset.partition.macro_edges, EdgeMass::Consistent);
        let q = assemble_penalty_q(&s.meshset, &s.dofmap, DEFAULT_ALPHA).unwrap();
        assemble_p(&blocks, &vertex_matrix(&s.dofmap), &q, &s.t, POptions::default()).unwrap()
    }

    #[test]
    fn p_is_spd_and_inverse_is_accurate() {
        let s = setup(1, 2, 1);
        let p = build_p(&s);
        let pm = p.matrix().unwrap();
        assert!(pm.symmetry_defect() <= 1e-12 * pm.max_abs());
        let (vals, _) = sym_eigen_sorted(&pm.to_dense());
        assert!(vals[0] > 0.0);
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let b: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = p.apply_inverse(&b);
            let r: Vec<f64> = pm.mul_vec(&x).iter().zip(&b).map(|(a, b)| a - b).collect();
            assert!(norm2(&r) <= 1e-12 * norm2(&b));
            assert_eq!(x, p.apply_inverse(&b));
        }
        let none = PreconditionerHandle::identity(5);
        assert_eq!(none.apply_inverse(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn single_edge_block_inverse() {
        let s = setup(1, 3, 1);
        let blocks = edge_blocks(&s.dofmap, &s.meshset.partition.macro_edges, EdgeMass::Consistent);
        let n = s.t.dim();
        let zero = CsrMatrix::zeros(n, n);
        // identity on the vertices keeps the matrix invertible without coupling
        let mut id_v = TripletBuilder::new(n, n);
        for i in s.dofmap.n_edge..n {
            id_v.push(i, i, 1.0);
        }
        let p = assemble_p(&blocks, &id_v.build(), &zero, &s.t, POptions::default()).unwrap();
        let b = &blocks[3];
        let mut rhs = vec![0.0; n];
        let local: Vec<f64> = (0..b.dofs.len()).map(|i| 1.0 + i as f64).collect();
        for (&d, v) in b.dofs.iter().zip(&local) {
            rhs[d] = *v;
        }
        let x = p.apply_inverse(&rhs);
        let expect = b.k_hat.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(local));
        for (i, &d) in b.dofs.iter().enumerate() {
            assert!((x[d] - expect[i]).abs() < 1e-12);
        }
        let others: f64 = (0..n).filter(|i| !b.dofs.contains(i)).map(|i| x[i].abs()).sum();
        assert!(others < 1e-14);
    }

    #[test]
    fn masking_of_schur_blocks() {
        let s = setup(1, 2, 2);
        let ps = assemble_pstar(&s.s_tilde, &s.dofmap).unwrap();
        let pd = assemble_pd(&s.s_tilde, &s.dofmap).unwrap();
        let ne = s.dofmap.n_edge;
        let ni = s.dofmap.n_interior;
        for (i, j, _) in ps.matrix().unwrap().triplets() {
            if i < ne && j < ne {
                assert_eq!(s.dofmap.macro_edge_of(ni + i), s.dofmap.macro_edge_of(ni + j));
            }
        }
        for (i, j, _) in pd.matrix().unwrap().triplets() {
            assert_eq!(i < ne, j < ne);
        }
        // vertex-supported vector stays vertex-supported under P_D
        let mut v = vec![0.0; s.t.dim()];
        v[ne] = 1.0;
        let y = pd.matrix().unwrap().mul_vec(&v);
        assert!(y[..ne].iter().all(|&x| x == 0.0));
    }
}
