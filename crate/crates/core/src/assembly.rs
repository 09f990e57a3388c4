//! Assembly of the symmetric interior-penalty (Nitsche) form
//!
//! ```text
//! A(u, v) = Σ_ℓ ∫ ∇u·∇v − Σ_e ∫ {∇u}·[v] − Σ_e ∫ [u]·{∇v} + α Σ_e ∫ p² h⁻¹ [u]·[v]
//! ```
//!
//! over every skeleton segment `e` (interior and boundary). Jumps are
//! `[v] = v⁺n⁺ + v⁻n⁻`, averages the arithmetic mean; on boundary segments
//! `[v] = v n` and `{∇v} = ∇v`. Dirichlet data enter weakly only.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{ElementMap, MeshSet, Point, SegmentKind, SkeletonSegment, TraceRef};
use crate::hp_space::{quadrature, DofMap, DomainKind, ReferenceElement};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::par;

/// Penalty used throughout the experiments.
pub const DEFAULT_ALPHA: f64 = 10.0;

pub type Load<'a> = &'a (dyn Fn(Point) -> f64 + Sync);

/// The assembled system in dof-map order, with block accessors for the
/// interior / edge / vertex partition.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_interior: usize,
    pub n_edge: usize,
    pub n_vertex: usize,
    pub interior_ranges: Vec<Range<usize>>,
    pub alpha: f64,
}

impl BlockSystem {
    pub fn n_dofs(&self) -> usize {
        self.n_interior + self.n_edge + self.n_vertex
    }

    pub fn n_trace(&self) -> usize {
        self.n_edge + self.n_vertex
    }

    fn interior(&self) -> Range<usize> {
        0..self.n_interior
    }

    fn edge(&self) -> Range<usize> {
        self.n_interior..self.n_interior + self.n_edge
    }

    fn vertex(&self) -> Range<usize> {
        self.n_interior + self.n_edge..self.n_dofs()
    }

    fn trace(&self) -> Range<usize> {
        self.n_interior..self.n_dofs()
    }

    pub fn a_ii(&self) -> CsrMatrix {
        self.matrix.submatrix(self.interior(), self.interior())
    }
    pub fn a_ie(&self) -> CsrMatrix {
        self.matrix.submatrix(self.interior(), self.edge())
    }
    pub fn a_iv(&self) -> CsrMatrix {
        self.matrix.submatrix(self.interior(), self.vertex())
    }
    pub fn a_ee(&self) -> CsrMatrix {
        self.matrix.submatrix(self.edge(), self.edge())
    }
    pub fn a_ev(&self) -> CsrMatrix {
        self.matrix.submatrix(self.edge(), self.vertex())
    }
    pub fn a_vv(&self) -> CsrMatrix {
        self.matrix.submatrix(self.vertex(), self.vertex())
    }
    /// `[A_IE A_IV]`
    pub fn a_ig(&self) -> CsrMatrix {
        self.matrix.submatrix(self.interior(), self.trace())
    }
    /// `[A_EE A_EV; A_EVᵀ A_VV]`
    pub fn a_gg(&self) -> CsrMatrix {
        self.matrix.submatrix(self.trace(), self.trace())
    }

    pub fn f_i(&self) -> &[f64] {
        &self.rhs[self.interior()]
    }
    pub fn f_e(&self) -> &[f64] {
        &self.rhs[self.edge()]
    }
    pub fn f_v(&self) -> &[f64] {
        &self.rhs[self.vertex()]
    }
    pub fn f_g(&self) -> &[f64] {
        &self.rhs[self.trace()]
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("penalty parameter must be positive, got {alpha}")));
    }
    if alpha < 4.0 {
        log::warn!("penalty parameter {alpha} is small; the form may be indefinite");
    }
    Ok(())
}

pub fn assemble_system(meshset: &MeshSet, dofmap: &DofMap, alpha: f64, load: Load) -> Result<BlockSystem> {
    let matrix = assemble_matrix(meshset, dofmap, alpha)?;
    let rhs = assemble_rhs(meshset, dofmap, load)?;
    Ok(BlockSystem {
        matrix,
        rhs,
        n_interior: dofmap.n_interior,
        n_edge: dofmap.n_edge,
        n_vertex: dofmap.n_vertex,
        interior_ranges: dofmap.interior_ranges.clone(),
        alpha,
    })
}

/// Physical gradients from reference gradients through `J^{-T}`.
fn physical_grads(map: &ElementMap, xi: Point, ref_grads: &[[f64; 2]]) -> (Vec<[f64; 2]>, f64) {
    let j = map.jacobian(xi);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let g = ref_grads
        .iter()
        .map(|g| {
            [
                (j[1][1] * g[0] - j[1][0] * g[1]) / det,
                (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
            ]
        })
        .collect();
    (g, det)
}

fn volume_terms(meshset: &MeshSet, dofmap: &DofMap) -> TripletBuilder {
    let n = dofmap.n_dofs();
    let parts = par::map_range(meshset.meshes.len(), |sd| {
        let mesh = &meshset.meshes[sd];
        let mut t = TripletBuilder::new(n, n);
        for (e, el) in mesh.elements.iter().enumerate() {
            let refel = dofmap.reference(el.kind, el.degree);
            let map = mesh.element_map(e);
            let dofs = &dofmap.element_dofs[sd][e];
            let nd = dofs.len();
            let mut local = vec![0.0; nd * nd];
            for (q, (xi, w)) in refel.quad.iter().enumerate() {
                let (g, det) = physical_grads(&map, xi, &refel.grads[q]);
                let wq = w * det.abs();
                for i in 0..nd {
                    for k in 0..nd {
                        local[i * nd + k] += wq * (g[i][0] * g[k][0] + g[i][1] * g[k][1]);
                    }
                }
            }
            for i in 0..nd {
                for k in 0..nd {
                    t.push(dofs[i], dofs[k], local[i * nd + k]);
                }
            }
        }
        t
    });
    let mut t = TripletBuilder::new(n, n);
    for p in parts {
        t.extend(p);
    }
    t
}

/// Trace data of one side of a segment at one point.
struct SideEval<'a> {
    dofs: &'a [usize],
    values: Vec<f64>,
    normal_derivs: Vec<f64>,
}

fn eval_side<'a>(
    meshset: &MeshSet,
    dofmap: &'a DofMap,
    tr: TraceRef,
    x: Point,
    normal: Point,
) -> SideEval<'a> {
    let mesh = &meshset.meshes[tr.subdomain];
    let el = &mesh.elements[tr.element];
    let refel: &ReferenceElement = dofmap.reference(el.kind, el.degree);
    let map = mesh.element_map(tr.element);
    let xi = map.inverse(x);
    let (values, ref_grads) = refel.eval(xi);
    let (g, _) = physical_grads(&map, xi, &ref_grads);
    SideEval {
        dofs: &dofmap.element_dofs[tr.subdomain][tr.element],
        values,
        normal_derivs: g.iter().map(|g| g[0] * normal[0] + g[1] * normal[1]).collect(),
    }
}

/// Which terms of the skeleton integrand to assemble.
#[derive(Clone, Copy)]
enum SkeletonTerms {
    Full,
    PenaltyOnly,
}

fn segment_terms(
    meshset: &MeshSet,
    dofmap: &DofMap,
    seg: &SkeletonSegment,
    alpha: f64,
    terms: SkeletonTerms,
    t: &mut TripletBuilder,
) -> Result<()> {
    let rule = quadrature(DomainKind::Segment, 2 * seg.p + 1)?;
    let len = seg.length();
    let pen = alpha * (seg.p * seg.p) as f64 / seg.h;
    let avg_weight = match seg.kind {
        SegmentKind::Interior => 0.5,
        SegmentKind::Boundary => 1.0,
    };
    let mut dofs: Vec<usize> = Vec::new();
    let mut local: Vec<f64> = Vec::new();
    for (pt, w) in rule.iter() {
        let x = [
            seg.a[0] + pt[0] * (seg.b[0] - seg.a[0]),
            seg.a[1] + pt[0] * (seg.b[1] - seg.a[1]),
        ];
        let plus = eval_side(meshset, dofmap, seg.plus, x, seg.normal);
        let minus = seg.minus.map(|m| eval_side(meshset, dofmap, m, x, seg.normal));
        if dofs.is_empty() {
            dofs.extend_from_slice(plus.dofs);
            if let Some(m) = &minus {
                dofs.extend_from_slice(m.dofs);
            }
            local = vec![0.0; dofs.len() * dofs.len()];
        }
        // jump and average coefficients along n⁺
        let mut jump: Vec<f64> = plus.values.clone();
        let mut avg: Vec<f64> = plus.normal_derivs.iter().map(|d| avg_weight * d).collect();
        if let Some(m) = &minus {
            jump.extend(m.values.iter().map(|v| -v));
            avg.extend(m.normal_derivs.iter().map(|d| avg_weight * d));
        }
        // interior basis functions vanish on Γ; drop their rounding noise
        for (j, d) in jump.iter_mut().zip(&dofs) {
            if *d < dofmap.n_interior {
                *j = 0.0;
            }
        }
        let nd = dofs.len();
        let wq = w * len;
        for i in 0..nd {
            for k in 0..nd {
                let mut v = pen * jump[i] * jump[k];
                if let SkeletonTerms::Full = terms {
                    v -= avg[k] * jump[i] + jump[k] * avg[i];
                }
                local[i * nd + k] += wq * v;
            }
        }
    }
    let nd = dofs.len();
    for i in 0..nd {
        for k in 0..nd {
            if local[i * nd + k] != 0.0 {
                t.push(dofs[i], dofs[k], local[i * nd + k]);
            }
        }
    }
    Ok(())
}

fn skeleton_terms(
    meshset: &MeshSet,
    dofmap: &DofMap,
    alpha: f64,
    terms: SkeletonTerms,
) -> Result<TripletBuilder> {
    let n = dofmap.n_dofs();
    let chunk = 256;
    let n_chunks = meshset.segments.len().div_ceil(chunk);
    let parts = par::try_map_range(n_chunks, |c| {
        let mut t = TripletBuilder::new(n, n);
        let end = ((c + 1) * chunk).min(meshset.segments.len());
        for seg in &meshset.segments[c * chunk..end] {
            segment_terms(meshset, dofmap, seg, alpha, terms, &mut t)?;
        }
        Ok::<_, Error>(t)
    })?;
    let mut t = TripletBuilder::new(n, n);
    for p in parts {
        t.extend(p);
    }
    Ok(t)
}

/// The full Nitsche stiffness matrix in dof-map order.
pub fn assemble_matrix(meshset: &MeshSet, dofmap: &DofMap, alpha: f64) -> Result<CsrMatrix> {
    check_alpha(alpha)?;
    let mut t = volume_terms(meshset, dofmap);
    t.extend(skeleton_terms(meshset, dofmap, alpha, SkeletonTerms::Full)?);
    Ok(t.build())
}

/// `Q(i, j) = α Σ_e ∫_e p² h⁻¹ [φ_i]·[φ_j]` on the skeleton dofs, indexed
/// from zero at the first edge dof.
pub fn assemble_penalty_q(meshset: &MeshSet, dofmap: &DofMap, alpha: f64) -> Result<CsrMatrix> {
    check_alpha(alpha)?;
    let full = skeleton_terms(meshset, dofmap, alpha, SkeletonTerms::PenaltyOnly)?.build();
    let ni = dofmap.n_interior;
    Ok(full.submatrix(ni..dofmap.n_dofs(), ni..dofmap.n_dofs()))
}

/// `F_i = ∫ f φ_i` in dof-map order.
pub fn assemble_rhs(meshset: &MeshSet, dofmap: &DofMap, load: Load) -> Result<Vec<f64>> {
    let n = dofmap.n_dofs();
    let parts = par::map_range(meshset.meshes.len(), |sd| {
        let mesh = &meshset.meshes[sd];
        let mut contrib: Vec<(usize, f64)> = Vec::new();
        for (e, el) in mesh.elements.iter().enumerate() {
            let refel = dofmap.reference(el.kind, el.degree);
            let map = mesh.element_map(e);
            let dofs = &dofmap.element_dofs[sd][e];
            let mut local = vec![0.0; dofs.len()];
            for (q, (xi, w)) in refel.quad.iter().enumerate() {
                let j = map.jacobian(xi);
                let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
                let f = load(map.map(xi));
                for (l, v) in local.iter_mut().zip(&refel.values[q]) {
                    *l += w * det * f * v;
                }
            }
            contrib.extend(dofs.iter().copied().zip(local));
        }
        contrib
    });
    let mut rhs = vec![0.0; n];
    for part in parts {
        for (i, v) in part {
            rhs[i] += v;
        }
    }
    Ok(rhs)
}

/// Broken H¹ seminorm of `u_h - u` with `u_h` given by its dof vector.
pub fn broken_h1_error(
    meshset: &MeshSet,
    dofmap: &DofMap,
    uh: &[f64],
    exact_grad: &(dyn Fn(Point) -> [f64; 2] + Sync),
) -> Result<f64> {
    let parts = par::try_map_range(meshset.meshes.len(), |sd| {
        let mesh = &meshset.meshes[sd];
        let mut acc = 0.0;
        for (e, el) in mesh.elements.iter().enumerate() {
            let refel = dofmap.reference(el.kind, el.degree);
            let dom = match el.kind {
                crate::geometry::ElementKind::Triangle => DomainKind::Triangle,
                crate::geometry::ElementKind::Quad => DomainKind::Quad,
            };
            let rule = quadrature(dom, 2 * el.degree + 8)?;
            let map = mesh.element_map(e);
            let dofs = &dofmap.element_dofs[sd][e];
            for (xi, w) in rule.iter() {
                let (_, rg) = refel.eval(xi);
                let (g, det) = physical_grads(&map, xi, &rg);
                let mut gh = [0.0; 2];
                for (k, &d) in dofs.iter().enumerate() {
                    gh[0] += uh[d] * g[k][0];
                    gh[1] += uh[d] * g[k][1];
                }
                let ge = exact_grad(map.map(xi));
                acc += w * det.abs() * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            }
        }
        Ok::<_, Error>(acc)
    })?;
    Ok(parts.iter().sum::<f64>().sqrt())
}
