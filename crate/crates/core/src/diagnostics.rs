//! Fractional-norm instruments: Slobodeckij seminorms on segments and on
//! subdomain boundaries, discrete `H^{1/2}_00` norms, and the empirical
//! studies built from them (norm equivalence, logarithmic growth, and the
//! coarse-interpolant counterexample).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_penalty_q, assemble_system, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::geometry::{build_partition, structured_tri_mesh, MeshSet, Point};
use crate::hp_space::{build_dofmap, gauss_legendre, lagrange_1d, DofMap, SideTrace, TraceSpan};
use crate::interface::{build_transform, eliminate_interior};
use crate::linalg::dense::DenseCholesky;
use crate::linalg::CsrMatrix;
use crate::par;
use crate::precond::{edge_block, EdgeBlock, EdgeMass};

/// Gauss points per direction for every cell pair.
pub const PAIR_ORDER: usize = 8;

/// A continuous piecewise polynomial trace mesh on a segment `[0, length]`
/// or on a closed curve of that length. Cell nodes index into a shared
/// node vector; on a closed curve index `n_nodes` wraps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCurve {
    pub cells: Vec<TraceSpan>,
    pub n_nodes: usize,
    pub length: f64,
    pub closed: bool,
}

impl TraceCurve {
    pub fn segment(cells: Vec<TraceSpan>) -> Self {
        let s0 = cells.first().map_or(0.0, |c| c.s0);
        let cells: Vec<TraceSpan> = cells
            .into_iter()
            .map(|c| TraceSpan { s0: c.s0 - s0, s1: c.s1 - s0, ..c })
            .collect();
        let n_nodes = cells.last().map_or(0, |c| c.first + c.degree + 1);
        let length = cells.last().map_or(0.0, |c| c.s1);
        Self { cells, n_nodes, length, closed: false }
    }

    /// `cells` equal cells of degree `degree` on `[0, length]`.
    pub fn uniform(cells: usize, degree: usize, length: f64) -> Self {
        let h = length / cells as f64;
        let spans = (0..cells)
            .map(|c| TraceSpan { first: c * degree, degree, s0: c as f64 * h, s1: (c + 1) as f64 * h })
            .collect();
        Self::segment(spans)
    }

    pub fn from_side(trace: &SideTrace) -> Self {
        Self::segment(trace.cells.clone())
    }

    /// Boundary of subdomain `sd` unrolled by arc length, together with the
    /// trace index (global dof minus `n_interior`) of every node.
    pub fn boundary(dofmap: &DofMap, sd: usize) -> Result<(Self, Vec<usize>)> {
        let sides = &dofmap.side_traces[sd];
        let mut cells = Vec::new();
        let mut nodes = Vec::new();
        let mut offset = 0.0;
        for (k, tr) in sides.iter().enumerate() {
            let next = &sides[(k + 1) % 4];
            if tr.dofs.last() != next.dofs.first() {
                return Err(Error::consistency(format!(
                    "sides {k} and {} of subdomain {sd} do not share a corner",
                    (k + 1) % 4
                )));
            }
            let base = nodes.len();
            let s_start = tr.positions[0];
            for c in &tr.cells {
                cells.push(TraceSpan {
                    first: base + c.first,
                    degree: c.degree,
                    s0: offset + c.s0 - s_start,
                    s1: offset + c.s1 - s_start,
                });
            }
            nodes.extend(tr.dofs[..tr.dofs.len() - 1].iter().map(|d| d - dofmap.n_interior));
            offset += tr.positions[tr.positions.len() - 1] - s_start;
        }
        let n_nodes = nodes.len();
        Ok((Self { cells, n_nodes, length: offset, closed: true }, nodes))
    }

    #[inline]
    fn node(&self, i: usize) -> usize {
        if self.closed {
            i % self.n_nodes
        } else {
            i
        }
    }

    /// Value of the trace with nodal values `values` at arc length `s`.
    pub fn eval(&self, values: &[f64], s: f64) -> f64 {
        let c = self
            .cells
            .iter()
            .find(|c| s <= c.s1)
            .unwrap_or_else(|| self.cells.last().expect("nonempty curve"));
        let (phi, _) = lagrange_1d(c.degree, (s - c.s0) / (c.s1 - c.s0));
        phi.iter().enumerate().map(|(a, p)| p * values[self.node(c.first + a)]).sum()
    }

    /// Nodal interpolant of `f(s)`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_nodes];
        for c in &self.cells {
            for a in 0..=c.degree {
                v[self.node(c.first + a)] = f(c.s0 + (c.s1 - c.s0) * a as f64 / c.degree as f64);
            }
        }
        v
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        if self.closed {
            d.min(self.length - d)
        } else {
            d
        }
    }

    /// `Some(true)` if cell `i` ends where `j` starts, `Some(false)` for the
    /// reverse, `None` if they do not touch.
    fn touching(&self, i: usize, j: usize) -> Option<bool> {
        let (a, b) = (&self.cells[i], &self.cells[j]);
        let tol = 1e-12 * self.length.max(1.0);
        let meets = |end: f64, start: f64| {
            (end - start).abs() < tol || (self.closed && (end - self.length - start).abs() < tol)
        };
        if meets(a.s1, b.s0) {
            Some(true)
        } else if meets(b.s1, a.s0) {
            Some(false)
        } else {
            None
        }
    }
}

fn local_basis(c: &TraceSpan, t: f64) -> Vec<f64> {
    lagrange_1d(c.degree, t).0
}

/// Accumulates `weight · w wᵀ` for the local vector `w`.
fn rank_one(local: &mut DMatrix<f64>, w: &[f64], weight: f64) {
    for a in 0..w.len() {
        let wa = weight * w[a];
        for b in 0..w.len() {
            local[(a, b)] += wa * w[b];
        }
    }
}

fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let (p, w) = gauss_legendre(n);
    p.into_iter().zip(w).collect()
}

/// Contribution of `C × C` to the double integral.
fn identical_pair(c: &TraceSpan, g: &[(f64, f64)]) -> DMatrix<f64> {
    let m = c.degree + 1;
    let mut local = DMatrix::zeros(m, m);
    let h = c.s1 - c.s0;
    // x = y + z over the half z > 0, doubled by symmetry
    for &(tz, wz) in g {
        let z = h * tz;
        for &(ty, wy) in g {
            let y = (h - z) * ty;
            let px = local_basis(c, (y + z) / h);
            let py = local_basis(c, y / h);
            let w: Vec<f64> = px.iter().zip(&py).map(|(a, b)| (a - b) / z).collect();
            rank_one(&mut local, &w, 2.0 * h * wz * (h - z) * wy);
        }
    }
    local
}

/// Contribution of `A × B` where `A` ends where `B` starts, via the Duffy
/// split of the rectangle at the shared corner.
fn touching_pair(a: &TraceSpan, b: &TraceSpan, g: &[(f64, f64)]) -> DMatrix<f64> {
    let (ma, mb) = (a.degree + 1, b.degree + 1);
    let mut local = DMatrix::zeros(ma + mb, ma + mb);
    let (ha, hb) = (a.s1 - a.s0, b.s1 - b.s0);
    let mut w = vec![0.0; ma + mb];
    for &(s, ws) in g {
        for &(t, wt) in g {
            for (u, v) in [(ha * s, hb * s * t), (ha * s * t, hb * s)] {
                let pa = local_basis(a, 1.0 - u / ha);
                let pb = local_basis(b, v / hb);
                let d = u + v;
                w[..ma].copy_from_slice(&pa);
                for (k, p) in pb.iter().enumerate() {
                    w[ma + k] = -p;
                }
                for x in w.iter_mut() {
                    *x /= d;
                }
                rank_one(&mut local, &w, ha * hb * s * ws * wt);
            }
        }
    }
    local
}

/// Contribution of two separated cells, composite if the periodic distance
/// has a kink inside the pair.
fn far_pair(curve: &TraceCurve, a: &TraceSpan, b: &TraceSpan, g: &[(f64, f64)]) -> DMatrix<f64> {
    let (ma, mb) = (a.degree + 1, b.degree + 1);
    let mut local = DMatrix::zeros(ma + mb, ma + mb);
    let dmin = (a.s0 - b.s1).max(b.s0 - a.s1).max(0.0);
    let dmax = (a.s1 - b.s0).max(b.s1 - a.s0);
    let half = 0.5 * curve.length;
    let sub = if curve.closed && dmin < half && half < dmax { 4 } else { 1 };
    let (ha, hb) = (a.s1 - a.s0, b.s1 - b.s0);
    let mut w = vec![0.0; ma + mb];
    for ia in 0..sub {
        for ib in 0..sub {
            for &(tx, wx) in g {
                let ta = (ia as f64 + tx) / sub as f64;
                let x = a.s0 + ha * ta;
                let pa = local_basis(a, ta);
                for &(ty, wy) in g {
                    let tb = (ib as f64 + ty) / sub as f64;
                    let y = b.s0 + hb * tb;
                    let pb = local_basis(b, tb);
                    let d = curve.distance(x, y);
                    w[..ma].copy_from_slice(&pa);
                    for (k, p) in pb.iter().enumerate() {
                        w[ma + k] = -p;
                    }
                    let jac = ha * hb / (sub * sub) as f64;
                    rank_one(&mut local, &w, jac * wx * wy / (d * d));
                }
            }
        }
    }
    local
}

/// Gram matrix `G` of the Slobodeckij seminorm on the curve's nodal basis:
/// `|η|²_{H^{1/2}} = ηᵀ G η` with
/// `|η|² = ∫∫ (η(x) − η(y))² / d(x, y)² dx dy`.
pub fn slobodeckij_matrix(curve: &TraceCurve) -> DMatrix<f64> {
    let n = curve.cells.len();
    let max_deg = curve.cells.iter().map(|c| c.degree).max().unwrap_or(1);
    let g = gauss01(PAIR_ORDER.max(max_deg + 1));
    let parts = par::map_range(n, |i| {
        let ci = &curve.cells[i];
        let idx_i: Vec<usize> = (0..=ci.degree).map(|a| curve.node(ci.first + a)).collect();
        let mut out: Vec<(Vec<usize>, DMatrix<f64>)> = vec![(idx_i.clone(), identical_pair(ci, &g))];
        for j in i + 1..n {
            let cj = &curve.cells[j];
            let idx_j: Vec<usize> = (0..=cj.degree).map(|a| curve.node(cj.first + a)).collect();
            let (idx, local) = match curve.touching(i, j) {
                Some(true) => ([idx_i.clone(), idx_j].concat(), touching_pair(ci, cj, &g)),
                Some(false) => ([idx_j, idx_i.clone()].concat(), touching_pair(cj, ci, &g)),
                None => ([idx_i.clone(), idx_j].concat(), far_pair(curve, ci, cj, &g)),
            };
            // the pair (j, i) contributes the same form
            out.push((idx, local * 2.0));
        }
        out
    });
    let mut gram = DMatrix::zeros(curve.n_nodes, curve.n_nodes);
    for (idx, local) in parts.into_iter().flatten() {
        for (a, &ga) in idx.iter().enumerate() {
            for (b, &gb) in idx.iter().enumerate() {
                gram[(ga, gb)] += local[(a, b)];
            }
        }
    }
    (&gram + gram.transpose()) * 0.5
}

fn quadratic(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        let mut row = 0.0;
        for j in 0..v.len() {
            row += g[(i, j)] * v[j];
        }
        s += v[i] * row;
    }
    s
}

/// `|η|_{H^{1/2}}` of the trace with nodal values `values`.
pub fn slobodeckij_seminorm(curve: &TraceCurve, values: &[f64]) -> f64 {
    assert_eq!(values.len(), curve.n_nodes, "one value per curve node");
    quadratic(&slobodeckij_matrix(curve), values).max(0.0).sqrt()
}

/// `(ηᵀ K̂ η)^{1/2}` for the side values `values` (endpoints included),
/// which must vanish at both endpoints.
pub fn h1200_norm(values: &[f64], block: &EdgeBlock) -> Result<f64> {
    let m = block.dofs.len();
    if values.len() != m + 2 {
        return Err(Error::invalid(format!("expected {} side values, got {}", m + 2, values.len())));
    }
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let (a, b) = (values[0], values[m + 1]);
    if a.abs() > 1e-12 * scale || b.abs() > 1e-12 * scale {
        return Err(Error::invalid(format!("trace does not vanish at the endpoints ({a:e}, {b:e})")));
    }
    Ok(quadratic(&block.k_hat, &values[1..=m]).max(0.0).sqrt())
}

/// `‖η‖²_{Φ_h,*} = Σ_ℓ |η|²_{H^{1/2}(∂Ω_ℓ)} + q(η, η)` on trace vectors,
/// with the boundary seminorms on the unrolled subdomain boundaries.
pub struct PhiNorm {
    boundaries: Vec<(Vec<usize>, DMatrix<f64>)>,
    q: CsrMatrix,
}

impl PhiNorm {
    pub fn new(meshset: &MeshSet, dofmap: &DofMap, alpha: f64) -> Result<Self> {
        let q = assemble_penalty_q(meshset, dofmap, alpha)?;
        let curves = (0..dofmap.side_traces.len())
            .map(|sd| TraceCurve::boundary(dofmap, sd))
            .collect::<Result<Vec<_>>>()?;
        let boundaries = par::map(&curves, |(curve, nodes)| (nodes.clone(), slobodeckij_matrix(curve)));
        Ok(Self { boundaries, q })
    }

    /// `Σ_ℓ |η|²_{H^{1/2}(∂Ω_ℓ)}`
    pub fn boundary_part(&self, eta: &[f64]) -> f64 {
        self.boundaries
            .iter()
            .map(|(nodes, g)| {
                let local: Vec<f64> = nodes.iter().map(|&i| eta[i]).collect();
                quadratic(g, &local)
            })
            .sum()
    }

    /// `q(η, η)`
    pub fn jump_part(&self, eta: &[f64]) -> f64 {
        self.q.quadratic_form(eta)
    }

    pub fn norm_sq(&self, eta: &[f64]) -> f64 {
        self.boundary_part(eta) + self.jump_part(eta)
    }
}

/// Random trace of kind `k % 4`: nodal noise, a smooth continuous field
/// vanishing on `∂Ω`, subdomainwise constants, or smooth plus noise.
fn sample_trace(dofmap: &DofMap, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ni = dofmap.n_interior;
    let n = dofmap.n_trace();
    let coords: Vec<Point> = (0..n).map(|i| dofmap.records[ni + i].coord).collect();
    let smooth = |rng: &mut ChaCha8Rng| {
        let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        coords
            .iter()
            .map(|p| {
                let mut v = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        let (fa, fb) = ((a + 1) as f64, (b + 1) as f64);
                        v += c[3 * a + b] * (fa * std::f64::consts::PI * p[0]).sin() * (fb * std::f64::consts::PI * p[1]).sin();
                    }
                }
                v
            })
            .collect::<Vec<f64>>()
    };
    match k % 4 {
        0 => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        1 => smooth(rng),
        2 => {
            let c: Vec<f64> = (0..dofmap.side_traces.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..n).map(|i| c[dofmap.records[ni + i].subdomain]).collect()
        }
        _ => {
            let mut v = smooth(rng);
            let amp = rng.gen_range(0.01..0.5);
            v.iter_mut().for_each(|x| *x += amp * rng.gen_range(-1.0..1.0));
            v
        }
    }
}

/// Extremes of `ηᵀSη / ‖η‖²_{Φ_h,*}` over `samples` random traces.
pub fn norm_equivalence_ratio(
    meshset: &MeshSet,
    dofmap: &DofMap,
    schur: &CsrMatrix,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    let norm = PhiNorm::new(meshset, dofmap, alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traces: Vec<Vec<f64>> = (0..samples).map(|k| sample_trace(dofmap, k, &mut rng)).collect();
    let ratios = par::map(&traces, |eta| schur.quadratic_form(eta) / norm.norm_sq(eta));
    Ok(ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r))))
}

/// `(η(b) − η(a))² / |η|²_{H^{1/2}(E)}` for a given trace on an open segment.
pub fn endpoint_ratio(curve: &TraceCurve, values: &[f64]) -> f64 {
    let d = values[curve.n_nodes - 1] - values[0];
    d * d / slobodeckij_seminorm(curve, values).powi(2)
}

/// Largest endpoint ratio over all traces on the segment: `e_bᵀ G₀⁻¹ e_b`
/// with `G₀` the Gram matrix after pinning `η(a) = 0`.
pub fn worst_endpoint_ratio(curve: &TraceCurve) -> Result<f64> {
    let g = slobodeckij_matrix(curve);
    let n = curve.n_nodes;
    let reduced = g.view((1, 1), (n - 1, n - 1)).into_owned();
    let chol = DenseCholesky::factor(&reduced).map_err(|e| e.with_context("pinned Slobodeckij matrix"))?;
    let mut e = vec![0.0; n - 1];
    e[n - 2] = 1.0;
    Ok(chol.solve(&e)[n - 2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogFactorRow {
    pub refine: usize,
    pub cells: usize,
    /// `H p² / h`
    pub scale: f64,
    pub ratio: f64,
    /// `1 + ln(H p² / h)`
    pub log_factor: f64,
}

impl LogFactorRow {
    pub fn constant(&self) -> f64 {
        self.ratio / self.log_factor
    }
}

/// Worst-case endpoint ratio on a macro edge of length `H = 2^{-level}`
/// meshed with `2^{r - level}` cells of degree `degree`, for each `r`.
pub fn log_factor_study(level: usize, refine: &[usize], degree: usize) -> Result<Vec<LogFactorRow>> {
    let big_h = 0.5f64.powi(level as i32);
    refine
        .iter()
        .map(|&r| {
            if r < level {
                return Err(Error::invalid(format!("refinement {r} is coarser than level {level}")));
            }
            let cells = 1usize << (r - level);
            let curve = TraceCurve::uniform(cells, degree, big_h);
            let scale = cells as f64 * (degree * degree) as f64;
            Ok(LogFactorRow { refine: r, cells, scale, ratio: worst_endpoint_ratio(&curve)?, log_factor: 1.0 + scale.ln() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRow {
    pub refine: usize,
    pub n_elements: usize,
    /// Nominal `H / h = 2^{r - level}`.
    pub h_ratio: f64,
    pub q_spike: f64,
    pub q_coarse: f64,
}

impl CounterexampleRow {
    pub fn ratio(&self) -> f64 {
        self.q_coarse / self.q_spike
    }
}

/// Spike trace: 1 at the corner of one subdomain nearest the centre of the
/// domain, zero at every other node. Compares its jump energy with that of
/// its coarse (vertex) interpolant.
pub fn counterexample_study(level: usize, refine: &[usize], degree: usize, alpha: f64) -> Result<Vec<CounterexampleRow>> {
    let part = build_partition(level)?;
    refine
        .iter()
        .map(|&r| {
            let meshset = structured_tri_mesh(&part, r, degree)?;
            let dofmap = build_dofmap(&meshset)?;
            let q = assemble_penalty_q(&meshset, &dofmap, alpha)?;
            let ni = dofmap.n_interior;
            let dist = |d: usize| {
                let p = dofmap.records[d].coord;
                (p[0] - 0.5).hypot(p[1] - 0.5)
            };
            let vertex = dofmap
                .vertex_dofs
                .iter()
                .flatten()
                .copied()
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .ok_or_else(|| Error::consistency("partition without vertex dofs"))?;
            let mut spike = vec![0.0; dofmap.n_trace()];
            spike[vertex - ni] = 1.0;
            let t = build_transform(&dofmap);
            let coarse = t.apply_rt(&spike);
            Ok(CounterexampleRow {
                refine: r,
                n_elements: meshset.n_elements(),
                h_ratio: (1usize << (r - level)) as f64,
                q_spike: q.quadratic_form(&spike),
                q_coarse: q.quadratic_form(&coarse),
            })
        })
        .collect()
}

fn sweep(level: usize, steps: usize) -> Vec<usize> {
    (level + 1..=level + steps).collect()
}

/// Slobodeckij seminorm and discrete `H^{1/2}_00` norm of `sin(π s / H)` on
/// one subdomain side under refinement.
pub fn report_slobodeckij(level: usize, steps: usize, degree: usize) -> Result<String> {
    let part = build_partition(level)?;
    let mut out = String::from("r,cells,slobodeckij,h1200_consistent,h1200_lumped,ratio_consistent,ratio_lumped\n");
    for r in sweep(level, steps) {
        let meshset = structured_tri_mesh(&part, r, degree)?;
        let dofmap = build_dofmap(&meshset)?;
        let trace = &dofmap.side_traces[0][0];
        let edge = &meshset.partition.macro_edges[trace.macro_edge];
        let curve = TraceCurve::from_side(trace);
        let eta = curve.interpolate(|s| (std::f64::consts::PI * s / curve.length).sin());
        let slob = slobodeckij_seminorm(&curve, &eta);
        let cons = h1200_norm(&eta, &edge_block(trace, edge, dofmap.n_interior, EdgeMass::Consistent))?;
        let lump = h1200_norm(&eta, &edge_block(trace, edge, dofmap.n_interior, EdgeMass::Lumped))?;
        writeln!(
            out,
            "{r},{},{slob:.6},{cons:.6},{lump:.6},{:.4},{:.4}",
            curve.cells.len(),
            cons / slob,
            lump / slob
        )
        .expect("write to string");
    }
    Ok(out)
}

/// Interval of `s(η, η) / ‖η‖²_{Φ_h,*}` under refinement at fixed level.
pub fn report_norm_equivalence(level: usize, steps: usize, degree: usize, samples: usize, seed: u64) -> Result<String> {
    let part = build_partition(level)?;
    let mut out = String::from("r,n,min,max,spread,growth\n");
    let mut prev: Option<(f64, f64)> = None;
    for r in sweep(level, steps) {
        let meshset = structured_tri_mesh(&part, r, degree)?;
        let dofmap = build_dofmap(&meshset)?;
        let sys = assemble_system(&meshset, &dofmap, DEFAULT_ALPHA, &|_| 1.0)?;
        let (op, _) = eliminate_interior(&sys)?;
        let (lo, hi) = norm_equivalence_ratio(&meshset, &dofmap, &op.assemble(), DEFAULT_ALPHA, samples, seed)?;
        let growth = prev.map_or(String::new(), |p| format!("{:.4}", interval_growth(p, (lo, hi))));
        writeln!(out, "{r},{},{lo:.6},{hi:.6},{:.4},{growth}", meshset.n_elements(), hi / lo).expect("write to string");
        prev = Some((lo, hi));
    }
    Ok(out)
}

/// Factor by which `[lo1, hi1]` extends beyond `[lo0, hi0]` (1 if contained).
pub fn interval_growth(before: (f64, f64), after: (f64, f64)) -> f64 {
    (after.1 / before.1).max(before.0 / after.0).max(1.0)
}

pub fn report_counterexample(level: usize, steps: usize, degree: usize) -> Result<String> {
    let rows = counterexample_study(level, &sweep(level, steps), degree, DEFAULT_ALPHA)?;
    let mut out = String::from("r,n,H/h,q_spike,q_coarse,ratio,step_factor\n");
    for (k, row) in rows.iter().enumerate() {
        let step = if k == 0 { String::new() } else { format!("{:.4}", row.ratio() / rows[k - 1].ratio()) };
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.4},{step}",
            row.refine,
            row.n_elements,
            row.h_ratio,
            row.q_spike,
            row.q_coarse,
            row.ratio()
        )
        .expect("write to string");
    }
    Ok(out)
}

pub fn report_log_factor(level: usize, steps: usize, degree: usize) -> Result<String> {
    let rows = log_factor_study(level, &sweep(level, steps), degree)?;
    let mut out = String::from("r,cells,Hp2/h,ratio,1+ln(Hp2/h),constant\n");
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.4}",
            row.refine,
            row.cells,
            row.scale,
            row.ratio,
            row.log_factor,
            row.constant()
        )
        .expect("write to string");
    }
    Ok(out)
}
