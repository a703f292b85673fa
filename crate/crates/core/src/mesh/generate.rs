use std::collections::BTreeSet;

use super::{ElemKind, Element, Mesh, Node};
use crate::error::{Error, Result};

impl Mesh {
    /// Tensor-product mesh of `[xmin, xmax] x [ymin, ymax]`.
    ///
    /// Boundary ids: 0 bottom, 1 right, 2 top, 3 left.
    pub fn generate_structured_quad(
        nx: usize,
        ny: usize,
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
        kind: ElemKind,
    ) -> Result<Mesh> {
        if nx == 0 {
            return Err(Error::config("Mesh/Generation/n_elems_x", "must be at least 1"));
        }
        if ny == 0 {
            return Err(Error::config("Mesh/Generation/n_elems_y", "must be at least 1"));
        }
        if !(xmax > xmin) || !xmin.is_finite() || !xmax.is_finite() {
            return Err(Error::config("Mesh/Generation/x_max", format!("x_max = {xmax} must exceed x_min = {xmin}")));
        }
        if !(ymax > ymin) || !ymin.is_finite() || !ymax.is_finite() {
            return Err(Error::config("Mesh/Generation/y_max", format!("y_max = {ymax} must exceed y_min = {ymin}")));
        }
        let order = match kind {
            ElemKind::Quad4 => 1,
            ElemKind::Quad9 => 2,
            other => return Err(Error::config("Mesh/Generation/element_type", format!("{other:?} is not a quadrilateral"))),
        };
        let (gx, gy) = (order * nx + 1, order * ny + 1);
        let mut mesh = Mesh::default();
        for j in 0..gy {
            for i in 0..gx {
                let x = xmin + (xmax - xmin) * i as f64 / (gx - 1) as f64;
                let y = ymin + (ymax - ymin) * j as f64 / (gy - 1) as f64;
                mesh.nodes.push(Node { id: j * gx + i, coords: [x, y] });
            }
        }
        let g = |i: usize, j: usize| j * gx + i;
        for ey in 0..ny {
            for ex in 0..nx {
                let (i, j) = (order * ex, order * ey);
                let nodes = match kind {
                    ElemKind::Quad4 => vec![g(i, j), g(i + 1, j), g(i + 1, j + 1), g(i, j + 1)],
                    _ => vec![
                        g(i, j),
                        g(i + 2, j),
                        g(i + 2, j + 2),
                        g(i, j + 2),
                        g(i + 1, j),
                        g(i + 2, j + 1),
                        g(i + 1, j + 2),
                        g(i, j + 1),
                        g(i + 1, j + 1),
                    ],
                };
                let id = ey * nx + ex;
                mesh.elements.push(Element { id, kind, nodes, subdomain: 0, level: 0, parent: None, children: None });
                let mut mark = |side: usize, bid: i32| {
                    mesh.boundary.entry((id, side)).or_insert_with(BTreeSet::new).insert(bid);
                };
                if ey == 0 {
                    mark(0, 0);
                }
                if ex == nx - 1 {
                    mark(1, 1);
                }
                if ey == ny - 1 {
                    mark(2, 2);
                }
                if ex == 0 {
                    mark(3, 3);
                }
            }
        }
        mesh.index_quadratic_midpoints();
        Ok(mesh)
    }
}
