use super::quadrature::{quadrature, DomainKind, QuadratureRule};
use crate::error::{Error, Result};
use crate::geometry::ElementKind;

/// Nodal Lagrange element on equispaced nodes with basis tables at the
/// points of its default quadrature (exactness `2p + 1`).
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub kind: ElementKind,
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
    pub quad: QuadratureRule,
    /// `values[q][i]`: basis `i` at quadrature point `q`.
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

pub fn reference_basis(kind: ElementKind, p: usize) -> Result<ReferenceElement> {
    if p < 1 {
        return Err(Error::invalid("polynomial degree must be >= 1"));
    }
    if p > 12 {
        return Err(Error::invalid(format!("polynomial degree {p} exceeds 12")));
    }
    let pf = p as f64;
    let nodes: Vec<[f64; 2]> = match kind {
        ElementKind::Triangle => (0..=p)
            .flat_map(|j| (0..=p - j).map(move |i| [i as f64 / pf, j as f64 / pf]))
            .collect(),
        ElementKind::Quad => (0..=p)
            .flat_map(|j| (0..=p).map(move |i| [i as f64 / pf, j as f64 / pf]))
            .collect(),
    };
    let dom = match kind {
        ElementKind::Triangle => DomainKind::Triangle,
        ElementKind::Quad => DomainKind::Quad,
    };
    let quad = quadrature(dom, 2 * p + 1)?;
    let mut el = ReferenceElement {
        kind,
        degree: p,
        nodes,
        quad,
        values: Vec::new(),
        grads: Vec::new(),
    };
    let (values, grads) = el.quad.points.iter().map(|&xi| el.eval(xi)).unzip();
    el.values = values;
    el.grads = grads;
    Ok(el)
}

/// Equispaced 1D Lagrange basis of degree `p` on `[0, 1]` and its derivative.
pub fn lagrange_1d(p: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=p).map(|i| i as f64 / p as f64).collect();
    let mut v = vec![1.0; p + 1];
    let mut d = vec![0.0; p + 1];
    for i in 0..=p {
        for m in 0..=p {
            if m == i {
                continue;
            }
            let denom = nodes[i] - nodes[m];
            let mut term = 1.0 / denom;
            for k in 0..=p {
                if k != i && k != m {
                    term *= (t - nodes[k]) / (nodes[i] - nodes[k]);
                }
            }
            d[i] += term;
            v[i] *= (t - nodes[m]) / denom;
        }
    }
    (v, d)
}

/// Silvester factor `prod_{q<m} (p λ - q) / (q + 1)` and its λ-derivative.
fn silvester(p: usize, m: usize, lambda: f64) -> (f64, f64) {
    let pf = p as f64;
    let mut val = 1.0;
    let mut der = 0.0;
    for q in 0..m {
        let f = (pf * lambda - q as f64) / (q + 1) as f64;
        let df = pf / (q + 1) as f64;
        der = der * f + val * df;
        val *= f;
    }
    (val, der)
}

impl ReferenceElement {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Basis values and reference gradients at `xi`.
    pub fn eval(&self, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let p = self.degree;
        match self.kind {
            ElementKind::Quad => {
                let (vx, dx) = lagrange_1d(p, xi[0]);
                let (vy, dy) = lagrange_1d(p, xi[1]);
                let mut v = Vec::with_capacity(self.dim());
                let mut g = Vec::with_capacity(self.dim());
                for j in 0..=p {
                    for i in 0..=p {
                        v.push(vx[i] * vy[j]);
                        g.push([dx[i] * vy[j], vx[i] * dy[j]]);
                    }
                }
                (v, g)
            }
            ElementKind::Triangle => {
                let l1 = 1.0 - xi[0] - xi[1];
                let (l2, l3) = (xi[0], xi[1]);
                let mut v = Vec::with_capacity(self.dim());
                let mut g = Vec::with_capacity(self.dim());
                for j in 0..=p {
                    for i in 0..=p - j {
                        let k = p - i - j;
                        let (a, da) = silvester(p, k, l1);
                        let (b, db) = silvester(p, i, l2);
                        let (c, dc) = silvester(p, j, l3);
                        v.push(a * b * c);
                        // dλ1/dx = dλ1/dy = -1
                        g.push([-da * b * c + a * db * c, -da * b * c + a * b * dc]);
                    }
                }
                (v, g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        assert_eq!(reference_basis(ElementKind::Triangle, 1).unwrap().dim(), 3);
        assert_eq!(reference_basis(ElementKind::Quad, 2).unwrap().dim(), 9);
        for p in 1..=6 {
            assert_eq!(reference_basis(ElementKind::Triangle, p).unwrap().dim(), (p + 1) * (p + 2) / 2);
            assert_eq!(reference_basis(ElementKind::Quad, p).unwrap().dim(), (p + 1) * (p + 1));
        }
        assert!(reference_basis(ElementKind::Quad, 0).is_err());
    }

    #[test]
    fn linear_triangle_gradients_constant() {
        let el = reference_basis(ElementKind::Triangle, 1).unwrap();
        for g in &el.grads {
            assert_eq!(g[0], [-1.0, -1.0]);
            assert_eq!(g[1], [1.0, 0.0]);
            assert_eq!(g[2], [0.0, 1.0]);
        }
    }

    #[test]
    fn nodal_property() {
        for kind in [ElementKind::Triangle, ElementKind::Quad] {
            for p in 1..=6 {
                let el = reference_basis(kind, p).unwrap();
                for (j, &node) in el.nodes.iter().enumerate() {
                    let (v, _) = el.eval(node);
                    for (i, vi) in v.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((vi - want).abs() < 1e-12, "{kind:?} p={p} i={i} j={j}");
                    }
                }
            }
        }
    }

    #[test]
    fn barycenter_partition_of_unity() {
        let el = reference_basis(ElementKind::Triangle, 4).unwrap();
        let (v, _) = el.eval([1.0 / 3.0, 1.0 / 3.0]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let el = reference_basis(ElementKind::Triangle, 3).unwrap();
        let x = [0.21, 0.37];
        let h = 1e-6;
        let (_, g) = el.eval(x);
        let (vp, _) = el.eval([x[0] + h, x[1]]);
        let (vm, _) = el.eval([x[0] - h, x[1]]);
        for i in 0..el.dim() {
            let fd = (vp[i] - vm[i]) / (2.0 * h);
            assert!((fd - g[i][0]).abs() < 1e-7);
        }
    }
}
