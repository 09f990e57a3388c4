use std::collections::HashMap;
use std::ops::Range;

use super::reference::{reference_basis, ReferenceElement};
use crate::error::{Error, Result};
use crate::geometry::{ElementKind, MeshSet, Point, Subdomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofClass {
    Interior,
    /// On side `side` of its subdomain, away from the corners.
    Edge { macro_edge: usize, side: usize },
    /// At corner `corner` of its subdomain.
    Vertex { corner: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofRecord {
    pub subdomain: usize,
    pub coord: Point,
    pub class: DofClass,
}

/// Nodes of one subdomain side in counterclockwise order, endpoints
/// (vertex dofs) included, with the 1D cells of the trace mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SideTrace {
    pub subdomain: usize,
    pub side: usize,
    pub macro_edge: usize,
    pub length: f64,
    pub positions: Vec<f64>,
    pub dofs: Vec<usize>,
    pub cells: Vec<TraceSpan>,
}

/// A 1D trace cell: nodes `first..=first + degree` of the side trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSpan {
    pub first: usize,
    pub degree: usize,
    pub s0: f64,
    pub s1: f64,
}

impl SideTrace {
    /// Global dofs strictly inside the side.
    pub fn edge_dofs(&self) -> &[usize] {
        &self.dofs[1..self.dofs.len() - 1]
    }
}

/// Global numbering: interior dofs subdomain by subdomain, then edge dofs
/// macro edge by macro edge (plus side, then minus side), then the four
/// corner dofs of every subdomain.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub records: Vec<DofRecord>,
    pub n_interior: usize,
    pub n_edge: usize,
    pub n_vertex: usize,
    /// `element_dofs[subdomain][element]`, in reference-node order.
    pub element_dofs: Vec<Vec<Vec<usize>>>,
    pub interior_ranges: Vec<Range<usize>>,
    /// Edge-dof range of every macro edge (both sides).
    pub edge_ranges: Vec<Range<usize>>,
    pub vertex_dofs: Vec<[usize; 4]>,
    /// `side_traces[subdomain][side]`
    pub side_traces: Vec<[SideTrace; 4]>,
    /// Maps subdomain-local node enumeration (subdomains concatenated) to
    /// global dof indices.
    pub permutation: Vec<usize>,
    /// Reference elements keyed by (kind, degree).
    pub references: Vec<ReferenceElement>,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.records.len()
    }

    /// Number of skeleton dofs `n_E + n_V`.
    pub fn n_trace(&self) -> usize {
        self.n_edge + self.n_vertex
    }

    pub fn reference(&self, kind: ElementKind, degree: usize) -> &ReferenceElement {
        self.references
            .iter()
            .find(|r| r.kind == kind && r.degree == degree)
            .expect("reference element registered at dofmap construction")
    }

    /// Macro edge owning an edge dof (global index).
    pub fn macro_edge_of(&self, dof: usize) -> Option<usize> {
        match self.records[dof].class {
            DofClass::Edge { macro_edge, .. } => Some(macro_edge),
            _ => None,
        }
    }
}

struct NodeIndex {
    tol: f64,
    bucket: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl NodeIndex {
    fn new(scale: f64) -> Self {
        Self {
            tol: 1e-10 * scale,
            bucket: 1e-7 * scale,
            map: HashMap::new(),
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p[0] / self.bucket).floor() as i64, (p[1] / self.bucket).floor() as i64)
    }

    fn find(&self, p: Point, coords: &[Point]) -> Option<usize> {
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.map.get(&(kx + dx, ky + dy)) {
                    for &i in list {
                        let q = coords[i];
                        if (p[0] - q[0]).abs() <= self.tol && (p[1] - q[1]).abs() <= self.tol {
                            return Some(i);
                        }
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, p: Point, coords: &mut Vec<Point>) -> usize {
        if let Some(i) = self.find(p, coords) {
            return i;
        }
        let i = coords.len();
        coords.push(p);
        self.map.entry(self.key(p)).or_default().push(i);
        i
    }
}

fn classify(sd: &Subdomain, p: Point, partition_edge: impl Fn(usize) -> usize) -> DofClass {
    if let Some(c) = sd.corner_of(p) {
        DofClass::Vertex { corner: c }
    } else if let Some(side) = sd.side_of(p) {
        DofClass::Edge {
            macro_edge: partition_edge(side),
            side,
        }
    } else {
        DofClass::Interior
    }
}

pub fn build_dofmap(meshset: &MeshSet) -> Result<DofMap> {
    let part = &meshset.partition;
    let n_sub = part.n_subdomains();

    let mut references: Vec<ReferenceElement> = Vec::new();
    for mesh in &meshset.meshes {
        for el in &mesh.elements {
            if !references.iter().any(|r| r.kind == el.kind && r.degree == el.degree) {
                references.push(reference_basis(el.kind, el.degree)?);
            }
        }
    }
    let reference = |kind, degree| {
        references
            .iter()
            .find(|r: &&ReferenceElement| r.kind == kind && r.degree == degree)
            .unwrap()
    };

    // subdomain-local node identification
    let mut local_coords: Vec<Vec<Point>> = Vec::with_capacity(n_sub);
    let mut local_elements: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n_sub);
    let mut indices: Vec<NodeIndex> = Vec::with_capacity(n_sub);
    let mut classes: Vec<Vec<DofClass>> = Vec::with_capacity(n_sub);
    for (sd_id, mesh) in meshset.meshes.iter().enumerate() {
        let sd = &part.subdomains[sd_id];
        let mut index = NodeIndex::new(sd.size);
        let mut coords = Vec::new();
        let mut elems = Vec::with_capacity(mesh.elements.len());
        for (e, el) in mesh.elements.iter().enumerate() {
            let map = mesh.element_map(e);
            let refel = reference(el.kind, el.degree);
            elems.push(
                refel
                    .nodes
                    .iter()
                    .map(|&xi| index.insert(map.map(xi), &mut coords))
                    .collect::<Vec<_>>(),
            );
        }
        let cls: Vec<DofClass> = coords
            .iter()
            .map(|&p| {
                classify(sd, p, |side| {
                    part.macro_edge_of(crate::geometry::SideRef { subdomain: sd_id, side })
                })
            })
            .collect();
        for corner in 0..4 {
            if !cls.contains(&DofClass::Vertex { corner }) {
                return Err(Error::consistency(format!(
                    "subdomain {sd_id}: no node at corner {corner}"
                )));
            }
        }
        local_coords.push(coords);
        local_elements.push(elems);
        indices.push(index);
        classes.push(cls);
    }

    let offsets: Vec<usize> = std::iter::once(0)
        .chain(local_coords.iter().scan(0, |acc, c| {
            *acc += c.len();
            Some(*acc)
        }))
        .collect();
    let total = offsets[n_sub];
    let mut permutation = vec![usize::MAX; total];
    let mut records = Vec::with_capacity(total);
    let mut push = |sd: usize, local: usize, records: &mut Vec<DofRecord>, cls: DofClass| {
        permutation[offsets[sd] + local] = records.len();
        records.push(DofRecord {
            subdomain: sd,
            coord: local_coords[sd][local],
            class: cls,
        });
    };

    let mut interior_ranges = Vec::with_capacity(n_sub);
    for sd in 0..n_sub {
        let start = records.len();
        for (local, cls) in classes[sd].iter().enumerate() {
            if *cls == DofClass::Interior {
                push(sd, local, &mut records, *cls);
            }
        }
        interior_ranges.push(start..records.len());
    }
    let n_interior = records.len();

    let mut edge_ranges = Vec::with_capacity(part.macro_edges.len());
    for edge in &part.macro_edges {
        let start = records.len();
        for side in edge.sides() {
            let sd = side.subdomain;
            let subdomain = &part.subdomains[sd];
            let mut nodes: Vec<(f64, usize)> = classes[sd]
                .iter()
                .enumerate()
                .filter(|(_, c)| matches!(c, DofClass::Edge { side: s, .. } if *s == side.side))
                .map(|(local, _)| {
                    let s = subdomain.side_param(side.side, local_coords[sd][local]);
                    (part.to_edge_param(side, s), local)
                })
                .collect();
            nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, local) in nodes {
                push(sd, local, &mut records, classes[sd][local]);
            }
        }
        edge_ranges.push(start..records.len());
    }
    let n_edge = records.len() - n_interior;

    let mut vertex_dofs = Vec::with_capacity(n_sub);
    for sd in 0..n_sub {
        let mut corners = [0usize; 4];
        for (corner, slot) in corners.iter_mut().enumerate() {
            let local = classes[sd]
                .iter()
                .position(|c| *c == DofClass::Vertex { corner })
                .unwrap();
            *slot = records.len();
            push(sd, local, &mut records, classes[sd][local]);
        }
        vertex_dofs.push(corners);
    }
    let n_vertex = records.len() - n_interior - n_edge;
    if records.len() != total || permutation.contains(&usize::MAX) {
        return Err(Error::consistency("dof numbering is not a bijection"));
    }

    let element_dofs: Vec<Vec<Vec<usize>>> = local_elements
        .iter()
        .enumerate()
        .map(|(sd, elems)| {
            elems
                .iter()
                .map(|nodes| nodes.iter().map(|&l| permutation[offsets[sd] + l]).collect())
                .collect()
        })
        .collect();

    let mut side_traces = Vec::with_capacity(n_sub);
    for sd in 0..n_sub {
        let subdomain = &part.subdomains[sd];
        let mut traces: Vec<SideTrace> = Vec::with_capacity(4);
        for side in 0..4 {
            let cells = &meshset.side_cells[sd][side];
            let mut positions: Vec<f64> = Vec::new();
            let mut spans = Vec::with_capacity(cells.len());
            for c in cells {
                let first = positions.len().saturating_sub(1);
                if positions.is_empty() {
                    positions.push(c.s0);
                }
                for i in 1..=c.degree {
                    positions.push(c.s0 + (c.s1 - c.s0) * i as f64 / c.degree as f64);
                }
                spans.push(TraceSpan {
                    first,
                    degree: c.degree,
                    s0: c.s0,
                    s1: c.s1,
                });
            }
            let dofs = positions
                .iter()
                .map(|&s| {
                    let p = subdomain.side_point(side, s);
                    indices[sd]
                        .find(p, &local_coords[sd])
                        .map(|l| permutation[offsets[sd] + l])
                        .ok_or_else(|| {
                            Error::consistency(format!(
                                "subdomain {sd} side {side}: no node at trace position s = {s}"
                            ))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            traces.push(SideTrace {
                subdomain: sd,
                side,
                macro_edge: part.macro_edge_of(crate::geometry::SideRef { subdomain: sd, side }),
                length: subdomain.size,
                positions,
                dofs,
                cells: spans,
            });
        }
        side_traces.push(traces.try_into().unwrap());
    }

    Ok(DofMap {
        records,
        n_interior,
        n_edge,
        n_vertex,
        element_dofs,
        interior_ranges,
        edge_ranges,
        vertex_dofs,
        side_traces,
        permutation,
        references,
    })
}
