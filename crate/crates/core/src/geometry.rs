//! Subdomain partitions of the unit square, per-subdomain fine meshes and
//! the skeleton segment overlay.
//!
//! Subdomains are the `4^level` squares of side `2^-level`, numbered
//! row-major from the lower-left corner. Each square has four sides
//! numbered counterclockwise (bottom, right, top, left); side `k` runs from
//! corner `k` to corner `k + 1`. Macro edges are parametrized left to right
//! or bottom to top, so sides 2 and 3 run against their macro edge.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Relative tolerance for point-on-side tests.
const ON_SIDE_TOL: f64 = 1e-10;
/// Relative tolerance for merging overlay breakpoints.
const OVERLAY_TOL: f64 = 1e-12;

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SideRef {
    pub subdomain: usize,
    /// 0 bottom, 1 right, 2 top, 3 left
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub id: usize,
    pub origin: Point,
    pub size: f64,
}

impl Subdomain {
    /// Corners counterclockwise from the lower-left one.
    pub fn corners(&self) -> [Point; 4] {
        let [x, y] = self.origin;
        let h = self.size;
        [[x, y], [x + h, y], [x + h, y + h], [x, y + h]]
    }

    pub fn contains(&self, p: Point) -> bool {
        let tol = ON_SIDE_TOL * self.size;
        let [x, y] = self.origin;
        p[0] >= x - tol && p[0] <= x + self.size + tol && p[1] >= y - tol && p[1] <= y + self.size + tol
    }

    pub fn corner_of(&self, p: Point) -> Option<usize> {
        let tol = ON_SIDE_TOL * self.size;
        self.corners().iter().position(|c| dist(*c, p) <= tol)
    }

    /// Side containing `p` (corners belong to two sides; the lower index wins
    /// except that corner 0 maps to side 0).
    pub fn side_of(&self, p: Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let tol = ON_SIDE_TOL * self.size;
        let [x, y] = self.origin;
        let h = self.size;
        if (p[1] - y).abs() <= tol {
            Some(0)
        } else if (p[0] - (x + h)).abs() <= tol {
            Some(1)
        } else if (p[1] - (y + h)).abs() <= tol {
            Some(2)
        } else if (p[0] - x).abs() <= tol {
            Some(3)
        } else {
            None
        }
    }

    /// Whether `p` lies on side `side` (endpoints included).
    pub fn on_side(&self, side: usize, p: Point) -> bool {
        if !self.contains(p) {
            return false;
        }
        let tol = ON_SIDE_TOL * self.size;
        let [x, y] = self.origin;
        let h = self.size;
        match side {
            0 => (p[1] - y).abs() <= tol,
            1 => (p[0] - (x + h)).abs() <= tol,
            2 => (p[1] - (y + h)).abs() <= tol,
            3 => (p[0] - x).abs() <= tol,
            _ => false,
        }
    }

    /// Counterclockwise arc-length position of `p` along `side`.
    pub fn side_param(&self, side: usize, p: Point) -> f64 {
        let c = self.corners()[side];
        dist(c, p).clamp(0.0, self.size)
    }

    pub fn side_point(&self, side: usize, s: f64) -> Point {
        let c = self.corners();
        lerp(c[side], c[(side + 1) % 4], s / self.size)
    }

    pub fn outward_normal(side: usize) -> Point {
        match side {
            0 => [0.0, -1.0],
            1 => [1.0, 0.0],
            2 => [0.0, 1.0],
            _ => [-1.0, 0.0],
        }
    }

    /// Sides 2 and 3 run against the macro-edge parametrization.
    pub fn side_reversed(side: usize) -> bool {
        side >= 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroEdge {
    pub id: usize,
    pub a: Point,
    pub b: Point,
    pub plus: SideRef,
    /// `None` on the boundary of the unit square.
    pub minus: Option<SideRef>,
}

impl MacroEdge {
    pub fn length(&self) -> f64 {
        dist(self.a, self.b)
    }

    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }

    pub fn sides(&self) -> impl Iterator<Item = SideRef> + '_ {
        std::iter::once(self.plus).chain(self.minus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionVertex {
    pub coord: Point,
    pub subdomains: Vec<usize>,
}

/// Decomposition of the unit square into `4^level` equal squares.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainPartition {
    pub level: usize,
    pub subdomains: Vec<Subdomain>,
    pub macro_edges: Vec<MacroEdge>,
    pub vertices: Vec<PartitionVertex>,
    side_edge: Vec<[usize; 4]>,
}

pub fn build_partition(level: usize) -> Result<SubdomainPartition> {
    if level < 1 {
        return Err(Error::invalid(format!("partition level must be >= 1, got {level}")));
    }
    if level > 12 {
        return Err(Error::invalid(format!("partition level {level} is too large")));
    }
    let m = 1usize << level;
    let h = 1.0 / m as f64;
    let subdomains: Vec<Subdomain> = (0..m * m)
        .map(|id| Subdomain {
            id,
            origin: [(id % m) as f64 * h, (id / m) as f64 * h],
            size: h,
        })
        .collect();

    let mut macro_edges = Vec::new();
    let mut side_edge = vec![[usize::MAX; 4]; m * m];
    for id in 0..m * m {
        let (i, j) = (id % m, id / m);
        let corners = subdomains[id].corners();
        for side in 0..4 {
            if side_edge[id][side] != usize::MAX {
                continue;
            }
            let neighbor = match side {
                0 => (j > 0).then(|| id - m),
                1 => (i + 1 < m).then(|| id + 1),
                2 => (j + 1 < m).then(|| id + m),
                _ => (i > 0).then(|| id - 1),
            };
            let (a, b) = if Subdomain::side_reversed(side) {
                (corners[(side + 1) % 4], corners[side])
            } else {
                (corners[side], corners[(side + 1) % 4])
            };
            let eid = macro_edges.len();
            let minus = neighbor.map(|n| SideRef {
                subdomain: n,
                side: (side + 2) % 4,
            });
            side_edge[id][side] = eid;
            if let Some(s) = minus {
                side_edge[s.subdomain][s.side] = eid;
            }
            macro_edges.push(MacroEdge {
                id: eid,
                a,
                b,
                plus: SideRef { subdomain: id, side },
                minus,
            });
        }
    }

    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            let mut sds = Vec::new();
            for (dj, di) in [(1, 1), (1, 0), (0, 0), (0, 1)] {
                if j >= dj && i >= di && j - dj < m && i - di < m {
                    sds.push((j - dj) * m + (i - di));
                }
            }
            sds.sort_unstable();
            vertices.push(PartitionVertex {
                coord: [i as f64 * h, j as f64 * h],
                subdomains: sds,
            });
        }
    }

    Ok(SubdomainPartition {
        level,
        subdomains,
        macro_edges,
        vertices,
        side_edge,
    })
}

impl SubdomainPartition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    /// Subdomain side length `H = 2^-level`.
    pub fn subdomain_size(&self) -> f64 {
        1.0 / (1usize << self.level) as f64
    }

    pub fn macro_edge_of(&self, side: SideRef) -> usize {
        self.side_edge[side.subdomain][side.side]
    }

    pub fn interior_edge_count(&self) -> usize {
        self.macro_edges.iter().filter(|e| !e.is_boundary()).count()
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.macro_edges.iter().filter(|e| e.is_boundary()).count()
    }

    /// Total skeleton length `|Σ|`.
    pub fn skeleton_length(&self) -> f64 {
        self.macro_edges.iter().map(MacroEdge::length).sum()
    }

    /// Position of `side_s` (counterclockwise along the subdomain side)
    /// in the macro-edge parametrization.
    pub fn to_edge_param(&self, side: SideRef, side_s: f64) -> f64 {
        if Subdomain::side_reversed(side.side) {
            self.subdomains[side.subdomain].size - side_s
        } else {
            side_s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Triangle,
    Quad,
}

impl ElementKind {
    pub fn n_vertices(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Quad => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    /// Local node indices, counterclockwise.
    pub vertices: Vec<usize>,
    pub degree: usize,
    /// Mesh size `h_K`: the longest edge.
    pub diameter: f64,
}

/// Affine (triangle) or bilinear (quad) map from the reference element.
///
/// Reference triangle: `(0,0), (1,0), (0,1)`. Reference quad: `[0,1]^2`.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub kind: ElementKind,
    v: [Point; 4],
}

impl ElementMap {
    pub fn new(kind: ElementKind, vertices: &[Point]) -> Self {
        let mut v = [[0.0; 2]; 4];
        v[..vertices.len()].copy_from_slice(vertices);
        Self { kind, v }
    }

    pub fn map(&self, xi: Point) -> Point {
        let v = &self.v;
        match self.kind {
            ElementKind::Triangle => [
                v[0][0] + xi[0] * (v[1][0] - v[0][0]) + xi[1] * (v[2][0] - v[0][0]),
                v[0][1] + xi[0] * (v[1][1] - v[0][1]) + xi[1] * (v[2][1] - v[0][1]),
            ],
            ElementKind::Quad => {
                let (s, t) = (xi[0], xi[1]);
                let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                let mut p = [0.0; 2];
                for k in 0..4 {
                    p[0] += w[k] * v[k][0];
                    p[1] += w[k] * v[k][1];
                }
                p
            }
        }
    }

    /// `J[i][j] = d x_i / d xi_j`
    pub fn jacobian(&self, xi: Point) -> [[f64; 2]; 2] {
        let v = &self.v;
        match self.kind {
            ElementKind::Triangle => [
                [v[1][0] - v[0][0], v[2][0] - v[0][0]],
                [v[1][1] - v[0][1], v[2][1] - v[0][1]],
            ],
            ElementKind::Quad => {
                let (s, t) = (xi[0], xi[1]);
                let ds = [-(1.0 - t), 1.0 - t, t, -t];
                let dt = [-(1.0 - s), -s, s, 1.0 - s];
                let mut j = [[0.0; 2]; 2];
                for k in 0..4 {
                    for i in 0..2 {
                        j[i][0] += ds[k] * v[k][i];
                        j[i][1] += dt[k] * v[k][i];
                    }
                }
                j
            }
        }
    }

    /// Reference coordinates of a physical point (Newton for quads).
    pub fn inverse(&self, x: Point) -> Point {
        let mut xi = match self.kind {
            ElementKind::Triangle => [1.0 / 3.0, 1.0 / 3.0],
            ElementKind::Quad => [0.5, 0.5],
        };
        let iters = if self.kind == ElementKind::Triangle { 1 } else { 30 };
        for _ in 0..iters {
            let p = self.map(xi);
            let r = [x[0] - p[0], x[1] - p[1]];
            let j = self.jacobian(xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let d0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let d1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            xi[0] += d0;
            xi[1] += d1;
            if d0.abs() + d1.abs() < 1e-15 {
                break;
            }
        }
        xi
    }
}

/// Reference coordinates of local edge `edge` at parameter `t` in `[0,1]`,
/// running from vertex `edge` to vertex `edge + 1`.
pub fn reference_edge_point(kind: ElementKind, edge: usize, t: f64) -> Point {
    match (kind, edge) {
        (ElementKind::Triangle, 0) => [t, 0.0],
        (ElementKind::Triangle, 1) => [1.0 - t, t],
        (ElementKind::Triangle, _) => [0.0, 1.0 - t],
        (ElementKind::Quad, 0) => [t, 0.0],
        (ElementKind::Quad, 1) => [1.0, t],
        (ElementKind::Quad, 2) => [1.0 - t, 1.0],
        (ElementKind::Quad, _) => [0.0, 1.0 - t],
    }
}

/// Fine mesh of one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMesh {
    pub subdomain: usize,
    pub nodes: Vec<Point>,
    pub elements: Vec<Element>,
}

impl LocalMesh {
    pub fn element_points(&self, e: usize) -> Vec<Point> {
        self.elements[e].vertices.iter().map(|&v| self.nodes[v]).collect()
    }

    pub fn element_map(&self, e: usize) -> ElementMap {
        ElementMap::new(self.elements[e].kind, &self.element_points(e))
    }
}

/// One element edge lying on a subdomain side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceCell {
    pub element: usize,
    pub local_edge: usize,
    /// Counterclockwise side parameter of the cell ends, `s0 < s1`.
    pub s0: f64,
    pub s1: f64,
    pub degree: usize,
    pub diameter: f64,
}

impl TraceCell {
    pub fn length(&self) -> f64 {
        self.s1 - self.s0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRef {
    pub subdomain: usize,
    pub element: usize,
    pub local_edge: usize,
}

/// A piece of the skeleton on which both adjacent traces are polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSegment {
    pub macro_edge: usize,
    pub a: Point,
    pub b: Point,
    pub kind: SegmentKind,
    pub plus: TraceRef,
    pub minus: Option<TraceRef>,
    /// Unit normal pointing out of the plus subdomain.
    pub normal: Point,
    /// Shorter of the two element edges carrying the segment.
    pub h: f64,
    pub p: usize,
}

impl SkeletonSegment {
    pub fn length(&self) -> f64 {
        dist(self.a, self.b)
    }
}

/// Mesh acceptance thresholds.
#[derive(Debug, Clone, Copy)]
pub struct MeshOptions {
    /// Bound on diameter / inradius.
    pub max_shape_ratio: f64,
    /// Bound on the diameter ratio of elements facing each other across Γ.
    pub max_h_ratio: f64,
    /// Bound on the degree difference across Γ.
    pub max_degree_jump: usize,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            max_shape_ratio: 10.0,
            max_h_ratio: 4.0,
            max_degree_jump: 1,
        }
    }
}

/// Per-subdomain meshes together with their skeleton overlay.
#[derive(Debug, Clone)]
pub struct MeshSet {
    pub partition: SubdomainPartition,
    pub meshes: Vec<LocalMesh>,
    /// `side_cells[subdomain][side]`, sorted by `s0`, tiling the side.
    pub side_cells: Vec<[Vec<TraceCell>; 4]>,
    pub segments: Vec<SkeletonSegment>,
}

impl MeshSet {
    pub fn new(partition: SubdomainPartition, meshes: Vec<LocalMesh>, opts: MeshOptions) -> Result<Self> {
        if meshes.len() != partition.n_subdomains() {
            return Err(Error::geometry(format!(
                "{} local meshes for {} subdomains",
                meshes.len(),
                partition.n_subdomains()
            )));
        }
        let mut side_cells = Vec::with_capacity(meshes.len());
        for (sd, mesh) in meshes.iter().enumerate() {
            if mesh.subdomain != sd {
                return Err(Error::geometry(format!("mesh {sd} is tagged subdomain {}", mesh.subdomain)));
            }
            validate_elements(&partition.subdomains[sd], mesh, &opts)?;
            side_cells.push(collect_side_cells(&partition.subdomains[sd], mesh)?);
        }
        let mut set = Self {
            partition,
            meshes,
            side_cells,
            segments: Vec::new(),
        };
        set.segments = skeleton_segments(&set)?;
        set.check_local_variation(&opts)?;
        Ok(set)
    }

    pub fn n_elements(&self) -> usize {
        self.meshes.iter().map(|m| m.elements.len()).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.meshes
            .iter()
            .flat_map(|m| m.elements.iter().map(|e| e.degree))
            .max()
            .unwrap_or(1)
    }

    fn check_local_variation(&self, opts: &MeshOptions) -> Result<()> {
        for seg in &self.segments {
            let Some(minus) = seg.minus else { continue };
            let kp = &self.meshes[seg.plus.subdomain].elements[seg.plus.element];
            let km = &self.meshes[minus.subdomain].elements[minus.element];
            let ratio = kp.diameter.max(km.diameter) / kp.diameter.min(km.diameter);
            if ratio > opts.max_h_ratio {
                return Err(Error::geometry(format!(
                    "element size ratio {ratio:.3} across macro edge {} exceeds {}",
                    seg.macro_edge, opts.max_h_ratio
                )));
            }
            if kp.degree.abs_diff(km.degree) > opts.max_degree_jump {
                return Err(Error::geometry(format!(
                    "degree jump {}/{} across macro edge {} exceeds {}",
                    kp.degree, km.degree, seg.macro_edge, opts.max_degree_jump
                )));
            }
        }
        Ok(())
    }
}

fn validate_elements(sd: &Subdomain, mesh: &LocalMesh, opts: &MeshOptions) -> Result<()> {
    for (e, el) in mesh.elements.iter().enumerate() {
        if el.vertices.len() != el.kind.n_vertices() {
            return Err(Error::geometry(format!(
                "subdomain {} element {e}: {} vertices for a {:?}",
                sd.id,
                el.vertices.len(),
                el.kind
            )));
        }
        if el.degree < 1 {
            return Err(Error::geometry(format!("subdomain {} element {e}: degree 0", sd.id)));
        }
        if let Some(&v) = el.vertices.iter().find(|&&v| v >= mesh.nodes.len()) {
            return Err(Error::geometry(format!(
                "subdomain {} element {e}: node index {v} out of range",
                sd.id
            )));
        }
        let pts = mesh.element_points(e);
        if let Some(p) = pts.iter().find(|p| !sd.contains(**p)) {
            return Err(Error::geometry(format!(
                "subdomain {} element {e}: vertex ({}, {}) lies outside the subdomain (element crosses a macro edge)",
                sd.id, p[0], p[1]
            )));
        }
        let n = pts.len();
        let area2: f64 = (0..n)
            .map(|k| {
                let (a, b) = (pts[k], pts[(k + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        let perimeter: f64 = (0..n).map(|k| dist(pts[k], pts[(k + 1) % n])).sum();
        let inradius = area2 / perimeter;
        if !(area2 > 0.0) {
            return Err(Error::geometry(format!(
                "subdomain {} element {e}: degenerate or clockwise element (signed area {:.3e})",
                sd.id,
                area2 / 2.0
            )));
        }
        let ratio = el.diameter / inradius;
        if ratio > opts.max_shape_ratio {
            return Err(Error::geometry(format!(
                "subdomain {} element {e}: shape ratio {ratio:.2} exceeds {}",
                sd.id, opts.max_shape_ratio
            )));
        }
    }
    Ok(())
}

fn collect_side_cells(sd: &Subdomain, mesh: &LocalMesh) -> Result<[Vec<TraceCell>; 4]> {
    let mut cells: [Vec<TraceCell>; 4] = Default::default();
    for (e, el) in mesh.elements.iter().enumerate() {
        let n = el.vertices.len();
        for k in 0..n {
            let p = mesh.nodes[el.vertices[k]];
            let q = mesh.nodes[el.vertices[(k + 1) % n]];
            for side in 0..4 {
                if sd.on_side(side, p) && sd.on_side(side, q) {
                    let (s0, s1) = (sd.side_param(side, p), sd.side_param(side, q));
                    if (s1 - s0).abs() <= ON_SIDE_TOL * sd.size {
                        continue;
                    }
                    cells[side].push(TraceCell {
                        element: e,
                        local_edge: k,
                        s0: s0.min(s1),
                        s1: s0.max(s1),
                        degree: el.degree,
                        diameter: el.diameter,
                    });
                }
            }
        }
    }
    let tol = ON_SIDE_TOL * sd.size;
    for (side, list) in cells.iter_mut().enumerate() {
        list.sort_by(|a, b| a.s0.total_cmp(&b.s0));
        let mut at = 0.0;
        for c in list.iter() {
            if (c.s0 - at).abs() > tol {
                return Err(Error::geometry(format!(
                    "subdomain {} side {side}: element edges leave a gap or overlap at s = {at:.6}",
                    sd.id
                )));
            }
            at = c.s1;
        }
        if (at - sd.size).abs() > tol {
            return Err(Error::geometry(format!(
                "subdomain {} side {side}: element edges cover only up to s = {at:.6}",
                sd.id
            )));
        }
    }
    Ok(cells)
}

/// Interval overlay of the two side traces on every macro edge.
pub fn skeleton_segments(meshset: &MeshSet) -> Result<Vec<SkeletonSegment>> {
    let part = &meshset.partition;
    let mut out = Vec::new();
    for edge in &part.macro_edges {
        let len = edge.length();
        let tol = OVERLAY_TOL * len;
        // cells in macro-edge parametrization
        let side_cells = |side: SideRef| -> Vec<(f64, f64, TraceCell)> {
            let mut v: Vec<_> = meshset.side_cells[side.subdomain][side.side]
                .iter()
                .map(|c| {
                    let a = part.to_edge_param(side, c.s0);
                    let b = part.to_edge_param(side, c.s1);
                    (a.min(b), a.max(b), *c)
                })
                .collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            v
        };
        let plus_cells = side_cells(edge.plus);
        let plus_normal = Subdomain::outward_normal(edge.plus.side);
        let point = |s: f64| lerp(edge.a, edge.b, s / len);
        let tref = |side: SideRef, c: &TraceCell| TraceRef {
            subdomain: side.subdomain,
            element: c.element,
            local_edge: c.local_edge,
        };

        let Some(minus) = edge.minus else {
            for (a, b, c) in &plus_cells {
                out.push(SkeletonSegment {
                    macro_edge: edge.id,
                    a: point(*a),
                    b: point(*b),
                    kind: SegmentKind::Boundary,
                    plus: tref(edge.plus, c),
                    minus: None,
                    normal: plus_normal,
                    h: c.length(),
                    p: c.degree,
                });
            }
            continue;
        };
        let minus_cells = side_cells(minus);

        let mut breaks: Vec<f64> = plus_cells
            .iter()
            .chain(&minus_cells)
            .flat_map(|(a, b, _)| [*a, *b])
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|x, y| (*x - *y).abs() <= tol);

        let find = |cells: &[(f64, f64, TraceCell)], s: f64| {
            cells.iter().find(|(a, b, _)| *a - tol <= s && s <= *b + tol).map(|x| x.2)
        };
        let mut covered = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= tol {
                continue;
            }
            let mid = 0.5 * (a + b);
            let (Some(cp), Some(cm)) = (find(&plus_cells, mid), find(&minus_cells, mid)) else {
                return Err(Error::consistency(format!(
                    "macro edge {}: no trace cell over [{a:.6}, {b:.6}]",
                    edge.id
                )));
            };
            covered += b - a;
            out.push(SkeletonSegment {
                macro_edge: edge.id,
                a: point(a),
                b: point(b),
                kind: SegmentKind::Interior,
                plus: tref(edge.plus, &cp),
                minus: Some(tref(minus, &cm)),
                normal: plus_normal,
                h: cp.length().min(cm.length()),
                p: cp.degree.max(cm.degree),
            });
        }
        if (covered - len).abs() > tol.max(1e-12 * len) * breaks.len() as f64 {
            return Err(Error::consistency(format!(
                "macro edge {}: overlay covers {covered} of {len}",
                edge.id
            )));
        }
    }
    Ok(out)
}

/// Uniform triangulation: each subdomain holds `2^(r-level)` squares per
/// side, each cut along its lower-left to upper-right diagonal.
pub fn structured_tri_mesh(partition: &SubdomainPartition, r: usize, degree: usize) -> Result<MeshSet> {
    if r < partition.level {
        return Err(Error::invalid(format!(
            "refinement r = {r} is below the partition level {}",
            partition.level
        )));
    }
    if degree < 1 {
        return Err(Error::invalid("polynomial degree must be >= 1"));
    }
    if r > 14 {
        return Err(Error::invalid(format!("refinement r = {r} is too large")));
    }
    let k = 1usize << (r - partition.level);
    let cell = 1.0 / (1usize << r) as f64;
    let diam = cell * std::f64::consts::SQRT_2;
    let meshes = partition
        .subdomains
        .iter()
        .map(|sd| {
            let mut nodes = Vec::with_capacity((k + 1) * (k + 1));
            for j in 0..=k {
                for i in 0..=k {
                    nodes.push([sd.origin[0] + i as f64 * cell, sd.origin[1] + j as f64 * cell]);
                }
            }
            let id = |i: usize, j: usize| j * (k + 1) + i;
            let mut elements = Vec::with_capacity(2 * k * k);
            for j in 0..k {
                for i in 0..k {
                    let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    for verts in [vec![v00, v10, v11], vec![v00, v11, v01]] {
                        elements.push(Element {
                            kind: ElementKind::Triangle,
                            vertices: verts,
                            degree,
                            diameter: diam,
                        });
                    }
                }
            }
            LocalMesh {
                subdomain: sd.id,
                nodes,
                elements,
            }
        })
        .collect();
    MeshSet::new(partition.clone(), meshes, MeshOptions::default())
}

/// One tensor-product element of degree `degree` per subdomain.
pub fn cartesian_quad_mesh(partition: &SubdomainPartition, degree: usize) -> Result<MeshSet> {
    if degree < 1 {
        return Err(Error::invalid("polynomial degree must be >= 1"));
    }
    let meshes = partition
        .subdomains
        .iter()
        .map(|sd| LocalMesh {
            subdomain: sd.id,
            nodes: sd.corners().to_vec(),
            elements: vec![Element {
                kind: ElementKind::Quad,
                vertices: vec![0, 1, 2, 3],
                degree,
                diameter: sd.size,
            }],
        })
        .collect();
    MeshSet::new(partition.clone(), meshes, MeshOptions::default())
}

/// Build an element from vertex coordinates; `h_K` is its longest edge.
pub fn make_element(kind: ElementKind, vertices: Vec<usize>, nodes: &[Point], degree: usize) -> Element {
    let pts: Vec<Point> = vertices.iter().filter_map(|&v| nodes.get(v).copied()).collect();
    let mut diameter: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        diameter = diameter.max(dist(*a, pts[(i + 1) % pts.len()]));
    }
    Element {
        kind,
        vertices,
        degree,
        diameter,
    }
}

/// Read a mesh in the plain-text subdomain format.
///
/// ```text
/// subdomains <N>
/// subdomain <id> nodes <nn> elements <ne>
/// x y            (nn lines)
/// i j k [l]      (ne lines, zero-based, counterclockwise)
/// degree <p>     (optional, applies to the block)
/// ```
pub fn load_mesh(path: &Path, partition: &SubdomainPartition) -> Result<MeshSet> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_mesh(&text, path, partition)
}

pub fn parse_mesh(text: &str, path: &Path, partition: &SubdomainPartition) -> Result<MeshSet> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let n_sub: usize = match toks.as_slice() {
        ["subdomains", n] => n.parse().map_err(|_| perr(ln, format!("bad subdomain count '{n}'")))?,
        _ => return Err(perr(ln, "expected 'subdomains <N>'".into())),
    };
    if n_sub != partition.n_subdomains() {
        return Err(perr(
            ln,
            format!("file has {n_sub} subdomains, partition has {}", partition.n_subdomains()),
        ));
    }

    let mut meshes: Vec<Option<LocalMesh>> = vec![None; n_sub];
    for _ in 0..n_sub {
        let (ln, head) = lines
            .next()
            .ok_or_else(|| perr(0, "unexpected end of file, expected a subdomain block".into()))?;
        let toks: Vec<&str> = head.split_whitespace().collect();
        let (id, nn, ne) = match toks.as_slice() {
            ["subdomain", id, "nodes", nn, "elements", ne] => {
                let p = |s: &str| s.parse::<usize>().map_err(|_| perr(ln, format!("bad integer '{s}'")));
                (p(id)?, p(nn)?, p(ne)?)
            }
            _ => return Err(perr(ln, "expected 'subdomain <id> nodes <nn> elements <ne>'".into())),
        };
        if id >= n_sub || meshes[id].is_some() {
            return Err(perr(ln, format!("invalid or repeated subdomain id {id}")));
        }
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in node list".into()))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| perr(ln, format!("bad coordinate '{t}'"))))
                .collect::<Result<_>>()?;
            if v.len() != 2 || !v.iter().all(|x| x.is_finite()) {
                return Err(perr(ln, "expected 'x y'".into()));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut raw = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of file in element list".into()))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| perr(ln, format!("bad node index '{t}'"))))
                .collect::<Result<_>>()?;
            let kind = match v.len() {
                3 => ElementKind::Triangle,
                4 => ElementKind::Quad,
                _ => return Err(perr(ln, format!("element with {} nodes", v.len()))),
            };
            if let Some(bad) = v.iter().find(|&&i| i >= nn) {
                return Err(perr(ln, format!("node index {bad} out of range (nodes = {nn})")));
            }
            raw.push((kind, v));
        }
        let mut degree = 1;
        if let Some((ln, l)) = lines.peek().copied() {
            if l.starts_with("degree") {
                lines.next();
                let toks: Vec<&str> = l.split_whitespace().collect();
                degree = match toks.as_slice() {
                    ["degree", p] => p.parse().map_err(|_| perr(ln, format!("bad degree '{p}'")))?,
                    _ => return Err(perr(ln, "expected 'degree <p>'".into())),
                };
                if degree < 1 {
                    return Err(perr(ln, "degree must be >= 1".into()));
                }
            }
        }
        let elements = raw
            .into_iter()
            .map(|(kind, v)| make_element(kind, v, &nodes, degree))
            .collect();
        meshes[id] = Some(LocalMesh {
            subdomain: id,
            nodes,
            elements,
        });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing content after the last subdomain block".into()));
    }
    let meshes = meshes.into_iter().map(Option::unwrap).collect();
    MeshSet::new(partition.clone(), meshes, MeshOptions::default())
}

/// Serialize a mesh set in the format read by [`load_mesh`]. Every
/// subdomain block must use a single degree.
pub fn format_mesh(meshset: &MeshSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "subdomains {}", meshset.meshes.len());
    for m in &meshset.meshes {
        let _ = writeln!(s, "subdomain {} nodes {} elements {}", m.subdomain, m.nodes.len(), m.elements.len());
        for p in &m.nodes {
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
        for e in &m.elements {
            let idx: Vec<String> = e.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", idx.join(" "));
        }
        if let Some(e) = m.elements.first() {
            let _ = writeln!(s, "degree {}", e.degree);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        let p = build_partition(1).unwrap();
        assert_eq!(p.n_subdomains(), 4);
        assert_eq!(p.subdomain_size(), 0.5);
        assert_eq!(p.interior_edge_count(), 4);
        assert_eq!(p.boundary_edge_count(), 8);
        for level in 1..=4 {
            let p = build_partition(level).unwrap();
            let m = 1usize << level;
            assert_eq!(p.n_subdomains(), m * m);
            assert_eq!(p.interior_edge_count(), 2 * (m - 1) * m);
            assert_eq!(p.boundary_edge_count(), 4 * m);
            let area: f64 = p.subdomains.iter().map(|s| s.size * s.size).sum();
            assert!((area - 1.0).abs() < 1e-14);
            assert_eq!(p.vertices.len(), (m + 1) * (m + 1));
        }
        let p2 = build_partition(2).unwrap();
        assert_eq!(p2.n_subdomains(), 16);
        assert_eq!(p2.subdomain_size(), 0.25);
    }

    #[test]
    fn level_zero_rejected() {
        assert!(matches!(build_partition(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn macro_edges_are_full_sides() {
        let p = build_partition(2).unwrap();
        for e in &p.macro_edges {
            for side in e.sides() {
                let sd = &p.subdomains[side.subdomain];
                assert!(sd.on_side(side.side, e.a) && sd.on_side(side.side, e.b));
                assert!((e.length() - sd.size).abs() < 1e-15);
                assert_eq!(p.macro_edge_of(side), e.id);
            }
        }
    }

    #[test]
    fn structured_counts() {
        let p = build_partition(2).unwrap();
        let m = structured_tri_mesh(&p, 3, 1).unwrap();
        assert_eq!(m.n_elements(), 128);
        assert!(m.meshes.iter().all(|l| l.elements.len() == 8));
        let p1 = build_partition(1).unwrap();
        let m1 = structured_tri_mesh(&p1, 1, 1).unwrap();
        assert_eq!(m1.n_elements(), 8);
        assert!(matches!(structured_tri_mesh(&p, 1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn structured_diameter_and_legs() {
        let p = build_partition(2).unwrap();
        let m = structured_tri_mesh(&p, 3, 1).unwrap();
        let el = &m.meshes[0].elements[0];
        let pts = m.meshes[0].element_points(0);
        assert!((dist(pts[0], pts[1]) - 0.125).abs() < 1e-15);
        assert!((el.diameter - 2f64.sqrt() / 8.0).abs() < 1e-15);
        // the penalty scale is the length of the element edge on the skeleton
        for s in &m.segments {
            assert!((s.h - 0.125).abs() < 1e-15);
            assert_eq!(s.p, 1);
        }
    }

    #[test]
    fn skeleton_covers_sigma() {
        for (level, r) in [(1, 1), (1, 3), (2, 4)] {
            let p = build_partition(level).unwrap();
            let m = structured_tri_mesh(&p, r, 2).unwrap();
            let total: f64 = m.segments.iter().map(SkeletonSegment::length).sum();
            let sigma = p.skeleton_length();
            assert!((total - sigma).abs() <= 1e-12 * sigma);
        }
        let p = build_partition(1).unwrap();
        let m = cartesian_quad_mesh(&p, 3).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.segments.len(), 12);
    }

    #[test]
    fn matching_traces_give_common_partition() {
        // level 1, r = 2: two cells per subdomain side
        let p = build_partition(1).unwrap();
        let m = structured_tri_mesh(&p, 2, 1).unwrap();
        for e in &p.macro_edges {
            let n = m.segments.iter().filter(|s| s.macro_edge == e.id).count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn refinement_is_nested() {
        let p = build_partition(1).unwrap();
        let coarse = structured_tri_mesh(&p, 2, 1).unwrap();
        let fine = structured_tri_mesh(&p, 3, 1).unwrap();
        assert_eq!(fine.n_elements(), 4 * coarse.n_elements());
        for (c, f) in coarse.meshes.iter().zip(&fine.meshes) {
            for q in &c.nodes {
                assert!(f.nodes.iter().any(|x| dist(*x, *q) < 1e-14));
            }
        }
    }

    #[test]
    fn nonmatching_overlay() {
        // Side A: {[0,1/2],[1/2,1]}, side B: {[0,1/3],[1/3,1]} on the vertical
        // interface x = 1/2 of a level-1 partition (scaled by H = 1/2).
        let p = build_partition(1).unwrap();
        let base = structured_tri_mesh(&p, 2, 1).unwrap();
        let mut meshes = base.meshes.clone();
        // subdomain 1 = [1/2,1] x [0,1/2]: three-node left side at y = 0, 1/6, 1/2
        let h = 0.5;
        let nodes = vec![
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.5, h / 3.0],
            [0.75, 0.25],
        ];
        let els = [
            vec![0, 1, 5],
            vec![1, 2, 5],
            vec![2, 3, 5],
            vec![3, 4, 5],
            vec![4, 0, 5],
        ];
        meshes[1] = LocalMesh {
            subdomain: 1,
            elements: els
                .into_iter()
                .map(|v| make_element(ElementKind::Triangle, v, &nodes, 1))
                .collect(),
            nodes,
        };
        let m = MeshSet::new(p.clone(), meshes, MeshOptions::default()).unwrap();
        let edge = p
            .macro_edges
            .iter()
            .find(|e| e.plus.subdomain == 0 && e.minus.map(|s| s.subdomain) == Some(1))
            .unwrap();
        let mut segs: Vec<(f64, f64)> = m
            .segments
            .iter()
            .filter(|s| s.macro_edge == edge.id)
            .map(|s| (s.a[1] / h, s.b[1] / h))
            .collect();
        segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let want = [(0.0, 1.0 / 3.0), (1.0 / 3.0, 0.5), (0.5, 1.0)];
        assert_eq!(segs.len(), 3);
        for (g, w) in segs.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-14 && (g.1 - w.1).abs() < 1e-14, "{segs:?}");
        }
    }

    #[test]
    fn boundary_edge_with_four_cells() {
        let p = build_partition(1).unwrap();
        let m = structured_tri_mesh(&p, 3, 1).unwrap();
        let e = p.macro_edges.iter().find(|e| e.is_boundary()).unwrap();
        let segs: Vec<_> = m.segments.iter().filter(|s| s.macro_edge == e.id).collect();
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|s| s.kind == SegmentKind::Boundary));
    }

    #[test]
    fn inverse_map_roundtrip() {
        let map = ElementMap::new(ElementKind::Quad, &[[0.0, 0.0], [1.0, 0.1], [1.2, 1.0], [0.1, 0.9]]);
        let xi = [0.3, 0.7];
        let back = map.inverse(map.map(xi));
        assert!((back[0] - xi[0]).abs() < 1e-13 && (back[1] - xi[1]).abs() < 1e-13);
    }
}
