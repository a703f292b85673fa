//! Lagrange reference elements, Gauss quadrature and mapped element values.
//!
//! The geometry map is always the bilinear map through an element's corner
//! nodes; straight-sided Quad9 elements map identically.

use crate::error::{Error, Result};
use crate::mesh::{ElemKind, Mesh};

pub const MAX_QUADRATURE_ORDER: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn degree(self) -> usize {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }

    pub fn from_name(name: &str) -> Option<Order> {
        match name.to_ascii_uppercase().as_str() {
            "FIRST" | "1" => Some(Order::First),
            "SECOND" | "2" => Some(Order::Second),
            _ => None,
        }
    }

    /// Shape functions per quad.
    pub fn n_quad_shapes(self) -> usize {
        match self {
            Order::First => 4,
            Order::Second => 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    /// Reference coordinates; the second entry is 0 for 1D rules.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(z) and P_{n-1}(z).
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Tensor-product Gauss rule exact for polynomials of degree `exact_order`
/// in each coordinate.
pub fn gauss_rule(dim: usize, exact_order: usize) -> Result<QuadratureRule> {
    if exact_order > MAX_QUADRATURE_ORDER {
        return Err(Error::config(
            "Quadrature/order",
            format!("order {exact_order} exceeds the supported maximum {MAX_QUADRATURE_ORDER}"),
        ));
    }
    if !(1..=2).contains(&dim) {
        return Err(Error::Usage(format!("quadrature dimension {dim} not supported")));
    }
    Ok(tensor_rule(dim, exact_order / 2 + 1))
}

pub(crate) fn tensor_rule(dim: usize, n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut rule = QuadratureRule { dim, points: Vec::new(), weights: Vec::new() };
    if dim == 1 {
        for i in 0..n {
            rule.points.push([x[i], 0.0]);
            rule.weights.push(w[i]);
        }
    } else {
        for j in 0..n {
            for i in 0..n {
                rule.points.push([x[i], x[j]]);
                rule.weights.push(w[i] * w[j]);
            }
        }
    }
    rule
}

/// 1D Lagrange basis on nodes `-1, +1` (linear) or `-1, +1, 0` (quadratic).
fn lagrange_1d(order: Order, i: usize, s: f64) -> (f64, f64) {
    match (order, i) {
        (Order::First, 0) => (0.5 * (1.0 - s), -0.5),
        (Order::First, _) => (0.5 * (1.0 + s), 0.5),
        (Order::Second, 0) => (0.5 * s * (s - 1.0), s - 0.5),
        (Order::Second, 1) => (0.5 * s * (s + 1.0), s + 0.5),
        (Order::Second, _) => (1.0 - s * s, -2.0 * s),
    }
}

/// Reference coordinates of quad node `i` (Quad9 numbering covers Quad4).
pub fn quad_node_ref(i: usize) -> [f64; 2] {
    const NODES: [[f64; 2]; 9] =
        [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]];
    NODES[i]
}

/// Index into the 1D basis of the node at reference coordinate `c`.
fn axis_index(c: f64) -> usize {
    if c < -0.5 {
        0
    } else if c > 0.5 {
        1
    } else {
        2
    }
}

/// Value and reference gradient of shape function `i` of the given order
/// on an element of kind `kind`.
pub fn shape_eval(kind: ElemKind, order: Order, i: usize, xi: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let n = match (kind, order) {
        (ElemKind::Edge2, Order::First) | (ElemKind::Edge3, Order::First) => 2,
        (ElemKind::Edge3, Order::Second) => 3,
        (ElemKind::Quad4, Order::First) | (ElemKind::Quad9, Order::First) => 4,
        (ElemKind::Quad9, Order::Second) => 9,
        _ => return Err(Error::Usage(format!("{kind:?} does not support {order:?} order shapes"))),
    };
    if i >= n {
        return Err(Error::Usage(format!("shape index {i} out of range for {kind:?}/{order:?} ({n} functions)")));
    }
    Ok(shape_unchecked(kind.is_quad(), order, i, xi))
}

#[inline]
pub(crate) fn shape_unchecked(quad: bool, order: Order, i: usize, xi: [f64; 2]) -> (f64, [f64; 2]) {
    if !quad {
        let (v, d) = lagrange_1d(order, i, xi[0]);
        return (v, [d, 0.0]);
    }
    let node = quad_node_ref(i);
    let (vx, dx) = lagrange_1d(order, axis_index(node[0]), xi[0]);
    let (vy, dy) = lagrange_1d(order, axis_index(node[1]), xi[1]);
    (vx * vy, [dx * vy, vx * dy])
}

/// Bilinear corner geometry of one element.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub corners: [[f64; 2]; 4],
}

impl Geometry {
    pub fn of(mesh: &Mesh, elem: usize) -> Geometry {
        let c = mesh.element(elem).corners();
        Geometry { corners: c.map(|n| mesh.point(n)) }
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for k in 0..4 {
            let (v, _) = shape_unchecked(true, Order::First, k, xi);
            x[0] += v * self.corners[k][0];
            x[1] += v * self.corners[k][1];
        }
        x
    }

    /// Jacobian `J[a][b] = dx_a / dxi_b`.
    pub fn jacobian(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        for k in 0..4 {
            let (_, g) = shape_unchecked(true, Order::First, k, xi);
            for a in 0..2 {
                for b in 0..2 {
                    j[a][b] += self.corners[k][a] * g[b];
                }
            }
        }
        j
    }

    /// Reference coordinates of physical point `x`, if it lies in the element (with tolerance).
    pub fn inverse_map(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        let mut xi = [0.0, 0.0];
        for _ in 0..50 {
            let f = self.map(xi);
            let r = [x[0] - f[0], x[1] - f[1]];
            let j = self.jacobian(xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                return None;
            }
            let d = [(j[1][1] * r[0] - j[0][1] * r[1]) / det, (-j[1][0] * r[0] + j[0][0] * r[1]) / det];
            xi = [xi[0] + d[0], xi[1] + d[1]];
            if d[0].abs() + d[1].abs() < 1e-14 {
                break;
            }
        }
        let tol = 1e-10;
        (xi[0].abs() <= 1.0 + tol && xi[1].abs() <= 1.0 + tol).then_some(xi)
    }
}

/// Reference point on local side `s` at edge parameter `t` in `[-1, 1]`.
pub fn side_point(s: usize, t: f64) -> [f64; 2] {
    match s {
        0 => [t, -1.0],
        1 => [1.0, t],
        2 => [-t, 1.0],
        _ => [-1.0, -t],
    }
}

/// d(xi)/dt along side `s`.
fn side_tangent(s: usize) -> [f64; 2] {
    match s {
        0 => [1.0, 0.0],
        1 => [0.0, 1.0],
        2 => [-1.0, 0.0],
        _ => [0.0, -1.0],
    }
}

/// Shape values, mapped gradients and weights at the points of one rule.
#[derive(Debug, Clone, Default)]
pub struct FeValues {
    pub phi: Vec<Vec<f64>>,
    pub dphi: Vec<Vec<[f64; 2]>>,
    pub jxw: Vec<f64>,
    pub xyz: Vec<[f64; 2]>,
    /// Outward unit normals; empty for interior values.
    pub normals: Vec<[f64; 2]>,
    /// Reference coordinates of each point.
    pub ref_points: Vec<[f64; 2]>,
}

impl FeValues {
    pub fn n_dofs(&self) -> usize {
        self.phi.len()
    }

    pub fn n_qp(&self) -> usize {
        self.jxw.len()
    }

    /// Values at explicit reference points with explicit weights (area measure).
    pub fn at_points(
        mesh: &Mesh,
        elem: usize,
        order: Order,
        points: &[[f64; 2]],
        weights: &[f64],
    ) -> Result<FeValues> {
        let e = mesh.element(elem);
        if order == Order::Second && e.kind != ElemKind::Quad9 {
            return Err(Error::Usage(format!("SECOND order values need a Quad9 element, element {elem} is {:?}", e.kind)));
        }
        let geo = Geometry::of(mesh, elem);
        let n = order.n_quad_shapes();
        let mut fe = FeValues {
            phi: vec![Vec::with_capacity(points.len()); n],
            dphi: vec![Vec::with_capacity(points.len()); n],
            ..Default::default()
        };
        for (q, &xi) in points.iter().enumerate() {
            let j = geo.jacobian(xi);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det > 0.0) {
                return Err(Error::Geometry { element: elem, det });
            }
            // J^{-T} applied to reference gradients.
            let inv = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
            for i in 0..n {
                let (v, g) = shape_unchecked(true, order, i, xi);
                fe.phi[i].push(v);
                fe.dphi[i].push([inv[0][0] * g[0] + inv[0][1] * g[1], inv[1][0] * g[0] + inv[1][1] * g[1]]);
            }
            fe.jxw.push(det * weights[q]);
            fe.xyz.push(geo.map(xi));
            fe.ref_points.push(xi);
        }
        Ok(fe)
    }

    pub fn reinit_interior(mesh: &Mesh, elem: usize, order: Order, rule: &QuadratureRule) -> Result<FeValues> {
        FeValues::at_points(mesh, elem, order, &rule.points, &rule.weights)
    }

    /// Values on local side `side` using a 1D rule along the side.
    pub fn reinit_side(mesh: &Mesh, elem: usize, side: usize, order: Order, rule: &QuadratureRule) -> Result<FeValues> {
        let points: Vec<[f64; 2]> = rule.points.iter().map(|p| side_point(side, p[0])).collect();
        let mut fe = FeValues::at_points(mesh, elem, order, &points, &rule.weights)?;
        let geo = Geometry::of(mesh, elem);
        let dt = side_tangent(side);
        for (q, &xi) in points.iter().enumerate() {
            let j = geo.jacobian(xi);
            let t = [j[0][0] * dt[0] + j[0][1] * dt[1], j[1][0] * dt[0] + j[1][1] * dt[1]];
            let len = t[0].hypot(t[1]);
            fe.jxw[q] = len * rule.weights[q];
            fe.normals.push([t[1] / len, -t[0] / len]);
        }
        Ok(fe)
    }

    /// `sum_i coeffs[i] * phi[i][q]`.
    pub fn value(&self, coeffs: &[f64], q: usize) -> f64 {
        coeffs.iter().zip(&self.phi).map(|(c, p)| c * p[q]).sum()
    }

    pub fn gradient(&self, coeffs: &[f64], q: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (c, d) in coeffs.iter().zip(&self.dphi) {
            g[0] += c * d[q][0];
            g[1] += c * d[q][1];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(kind: ElemKind, scale: f64) -> Mesh {
        Mesh::generate_structured_quad(1, 1, 0.0, scale, 0.0, scale, kind).unwrap()
    }

    #[test]
    fn low_order_rules() {
        let r = gauss_rule(1, 1).unwrap();
        assert_eq!(r.points, vec![[0.0, 0.0]]);
        assert_eq!(r.weights, vec![2.0]);
        let r = gauss_rule(1, 3).unwrap();
        assert!((r.points[0][0] + 0.5773502691896257).abs() < 1e-15);
        assert!((r.points[1][0] - 0.5773502691896257).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
        let r = gauss_rule(2, 3).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.weights.iter().all(|w| (w - 1.0).abs() < 1e-15));
        assert!(gauss_rule(2, 10).is_err());
    }

    #[test]
    fn two_point_rule_matches_moment_conditions() {
        // Solve w0+w1=2, w0 x0+w1 x1=0, w0 x0^2+w1 x1^2=2/3, w0 x0^3+w1 x1^3=0 with symmetry.
        let x = (1.0f64 / 3.0).sqrt();
        let (p, w) = gauss_legendre(2);
        assert!((p[1] - x).abs() < 1e-15 && (w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rules_integrate_monomials() {
        for order in 0..=MAX_QUADRATURE_ORDER {
            let r = gauss_rule(2, order).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 4.0).abs() < 1e-14);
            for a in 0..=order {
                for b in 0..=(order - a) {
                    let exact = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                    let approx: f64 =
                        r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    assert!((approx - exact(a) * exact(b)).abs() < 1e-12, "order {order} x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn delta_property_and_center_values() {
        for (kind, order, n) in [(ElemKind::Quad4, Order::First, 4), (ElemKind::Quad9, Order::Second, 9)] {
            for i in 0..n {
                for j in 0..n {
                    let (v, _) = shape_eval(kind, order, i, quad_node_ref(j)).unwrap();
                    assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
                }
            }
        }
        assert_eq!(shape_eval(ElemKind::Quad4, Order::First, 0, [0.0, 0.0]).unwrap().0, 0.25);
        let vals: Vec<f64> = (0..3).map(|i| shape_eval(ElemKind::Edge3, Order::Second, i, [-0.5, 0.0]).unwrap().0).collect();
        // Node order (-1, +1, 0).
        assert_eq!(vals, vec![0.375, -0.125, 0.75]);
        assert!(shape_eval(ElemKind::Quad4, Order::First, 4, [0.0, 0.0]).is_err());
        assert!(shape_eval(ElemKind::Quad4, Order::Second, 0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn interior_values_on_scaled_square() {
        let rule = gauss_rule(2, 3).unwrap();
        let a = FeValues::reinit_interior(&unit(ElemKind::Quad4, 1.0), 0, Order::First, &rule).unwrap();
        let b = FeValues::reinit_interior(&unit(ElemKind::Quad4, 2.0), 0, Order::First, &rule).unwrap();
        assert!((a.jxw.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for q in 0..rule.len() {
            assert!((b.jxw[q] - 4.0 * a.jxw[q]).abs() < 1e-14);
            for i in 0..4 {
                assert!((b.dphi[i][q][0] - 0.5 * a.dphi[i][q][0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn side_values_on_top() {
        let rule = gauss_rule(1, 3).unwrap();
        let m = unit(ElemKind::Quad9, 1.0);
        let fe = FeValues::reinit_side(&m, 0, 2, Order::Second, &rule).unwrap();
        assert!((fe.jxw.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for n in &fe.normals {
            assert!((n[0]).abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15);
        }
        for s in 0..4 {
            let fe = FeValues::reinit_side(&m, 0, s, Order::First, &rule).unwrap();
            let c = m.centroid(0);
            for q in 0..fe.n_qp() {
                let out = [fe.xyz[q][0] - c[0], fe.xyz[q][1] - c[1]];
                assert!(out[0] * fe.normals[q][0] + out[1] * fe.normals[q][1] > 0.0);
            }
        }
    }

    #[test]
    fn inverted_element_is_rejected() {
        let mut m = unit(ElemKind::Quad4, 1.0);
        m.elements[0].nodes.swap(1, 3);
        let rule = gauss_rule(2, 1).unwrap();
        assert!(matches!(FeValues::reinit_interior(&m, 0, Order::First, &rule), Err(Error::Geometry { element: 0, .. })));
    }

    #[test]
    fn inverse_map_recovers_reference_point() {
        let m = unit(ElemKind::Quad4, 1.0);
        let geo = Geometry::of(&m, 0);
        let xi = geo.inverse_map([0.8, 0.65]).unwrap();
        assert!((xi[0] - 0.6).abs() < 1e-14 && (xi[1] - 0.3).abs() < 1e-14);
        assert!(geo.inverse_map([1.5, 0.5]).is_none());
    }

    fn perturbed_quad() -> impl Strategy<Value = Mesh> {
        prop::array::uniform8(-0.15f64..0.15).prop_map(|d| {
            let mut m = unit(ElemKind::Quad9, 1.0);
            let corners = m.elements[0].corners();
            for (k, &n) in corners.iter().enumerate() {
                m.nodes[n].coords[0] += d[2 * k];
                m.nodes[n].coords[1] += d[2 * k + 1];
            }
            // Straight-sided: re-place mid and center nodes on the bilinear map.
            let geo = Geometry::of(&m, 0);
            for k in 4..9 {
                let n = m.elements[0].nodes[k];
                m.nodes[n].coords = geo.map(quad_node_ref(k));
            }
            m
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            for (kind, order, n) in [(ElemKind::Quad4, Order::First, 4), (ElemKind::Quad9, Order::Second, 9),
                                     (ElemKind::Edge2, Order::First, 2), (ElemKind::Edge3, Order::Second, 3)] {
                let (mut s, mut g) = (0.0, [0.0, 0.0]);
                for i in 0..n {
                    let (v, d) = shape_eval(kind, order, i, [x, y]).unwrap();
                    s += v;
                    g[0] += d[0];
                    g[1] += d[1];
                }
                prop_assert!((s - 1.0).abs() < 1e-13);
                prop_assert!(g[0].abs() < 1e-13 && g[1].abs() < 1e-13);
            }
        }

        #[test]
        fn linear_fields_have_exact_gradients(m in perturbed_quad(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let rule = gauss_rule(2, 5).unwrap();
            for order in [Order::First, Order::Second] {
                let fe = FeValues::reinit_interior(&m, 0, order, &rule).unwrap();
                let coeffs: Vec<f64> = m.elements[0].nodes[..order.n_quad_shapes()]
                    .iter().map(|&n| { let p = m.point(n); 1.0 + a * p[0] + b * p[1] }).collect();
                for q in 0..fe.n_qp() {
                    let g = fe.gradient(&coeffs, q);
                    prop_assert!((g[0] - a).abs() < 1e-12 && (g[1] - b).abs() < 1e-12);
                }
                prop_assert!((fe.jxw.iter().sum::<f64>() - m.area(0)).abs() < 1e-12);
            }
        }
    }
}
