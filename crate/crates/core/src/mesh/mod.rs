//! Serial 2D quadrilateral meshes with a refinement tree.
//!
//! Local node ordering follows the usual Lagrange quad convention: corners
//! 0..3 counter-clockwise from reference `(-1,-1)`, mid-edge nodes 4..7 on
//! sides 0..3, and the center node 8. Side `s` runs from corner `s` to
//! corner `(s+1) % 4`.

mod generate;
mod gmsh;
mod refine;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

pub use gmsh::{read_gmsh, write_gmsh};
pub(crate) use refine::CHILD_OFFSETS;

pub type BoundaryId = i32;
pub type SubdomainId = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    Edge2,
    Edge3,
    Quad4,
    Quad9,
}

impl ElemKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElemKind::Edge2 => 2,
            ElemKind::Edge3 => 3,
            ElemKind::Quad4 => 4,
            ElemKind::Quad9 => 9,
        }
    }

    pub fn is_quad(self) -> bool {
        matches!(self, ElemKind::Quad4 | ElemKind::Quad9)
    }

    pub fn n_children(self) -> usize {
        if self.is_quad() {
            4
        } else {
            2
        }
    }

    /// The edge kind bounding a quad of this kind.
    pub fn side_kind(self) -> ElemKind {
        match self {
            ElemKind::Quad9 => ElemKind::Edge3,
            _ => ElemKind::Edge2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub coords: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: usize,
    pub kind: ElemKind,
    pub nodes: Vec<usize>,
    pub subdomain: SubdomainId,
    pub level: u32,
    pub parent: Option<usize>,
    pub children: Option<Vec<usize>>,
}

impl Element {
    pub fn is_active(&self) -> bool {
        self.children.is_none()
    }

    pub fn corners(&self) -> [usize; 4] {
        [self.nodes[0], self.nodes[1], self.nodes[2], self.nodes[3]]
    }

    /// Corner node ids `(start, end)` of side `s`.
    pub fn side_corners(&self, s: usize) -> (usize, usize) {
        (self.nodes[s], self.nodes[(s + 1) % 4])
    }

    /// Position of this element among its parent's children.
    pub fn child_index(&self, mesh: &Mesh) -> Option<usize> {
        let parent = mesh.elements[self.parent?].children.as_ref()?;
        parent.iter().position(|&c| c == self.id)
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A coarse element side whose neighbor across has been refined once more.
#[derive(Debug, Clone, PartialEq)]
pub struct HangingEdge {
    pub element: usize,
    pub side: usize,
    /// Coarse side endpoints and midpoint.
    pub start: usize,
    pub end: usize,
    pub mid: usize,
    /// Quarter points on (start, mid) and (mid, end), present on quadratic meshes.
    pub quarter: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    /// Boundary ids by `(element id, local side)`.
    pub boundary: BTreeMap<(usize, usize), BTreeSet<BoundaryId>>,
    /// Node located at the midpoint of the edge between two nodes, keyed by sorted pair.
    pub(crate) edge_midpoints: HashMap<(usize, usize), usize>,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        2
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_active(&self) -> usize {
        self.elements.iter().filter(|e| e.is_active()).count()
    }

    pub fn active_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.is_active())
    }

    pub fn active_ids(&self) -> Vec<usize> {
        self.active_elements().map(|e| e.id).collect()
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    pub fn point(&self, node: usize) -> [f64; 2] {
        self.nodes[node].coords
    }

    /// The geometric kind shared by every quad in the mesh, if uniform.
    pub fn quad_kind(&self) -> Option<ElemKind> {
        let mut kinds = self.elements.iter().map(|e| e.kind);
        let first = kinds.next()?;
        kinds.all(|k| k == first).then_some(first)
    }

    pub fn boundary_ids(&self, elem: usize, side: usize) -> Option<&BTreeSet<BoundaryId>> {
        self.boundary.get(&(elem, side))
    }

    /// All boundary ids present on active sides.
    pub fn boundary_id_set(&self) -> BTreeSet<BoundaryId> {
        self.boundary
            .iter()
            .filter(|((e, _), _)| self.elements[*e].is_active())
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect()
    }

    pub fn subdomain_set(&self) -> BTreeSet<SubdomainId> {
        self.active_elements().map(|e| e.subdomain).collect()
    }

    /// Active sides carrying `id`, ordered by `(element, side)`.
    pub fn active_boundary_sides(&self, id: BoundaryId) -> Vec<(usize, usize)> {
        self.boundary
            .iter()
            .filter(|((e, _), ids)| self.elements[*e].is_active() && ids.contains(&id))
            .map(|(k, _)| *k)
            .collect()
    }

    /// Area from the straight-sided corner polygon.
    pub fn area(&self, elem: usize) -> f64 {
        let c = self.elements[elem].corners();
        let mut a = 0.0;
        for k in 0..4 {
            let p = self.point(c[k]);
            let q = self.point(c[(k + 1) % 4]);
            a += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * a
    }

    pub fn active_area(&self) -> f64 {
        self.active_elements().map(|e| self.area(e.id)).sum()
    }

    pub fn centroid(&self, elem: usize) -> [f64; 2] {
        let c = self.elements[elem].corners();
        let mut x = [0.0; 2];
        for n in c {
            let p = self.point(n);
            x[0] += 0.25 * p[0];
            x[1] += 0.25 * p[1];
        }
        x
    }

    /// Longest corner-to-corner edge.
    pub fn h(&self, elem: usize) -> f64 {
        let e = &self.elements[elem];
        (0..4)
            .map(|s| {
                let (a, b) = e.side_corners(s);
                let (p, q) = (self.point(a), self.point(b));
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Corners of active elements.
    pub fn active_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for e in self.active_elements() {
            for n in e.corners() {
                mask[n] = true;
            }
        }
        mask
    }

    /// Nodes referenced by active elements.
    pub fn active_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for e in self.active_elements() {
            for &n in &e.nodes {
                mask[n] = true;
            }
        }
        mask
    }

    pub fn midpoint_of(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_midpoints.get(&edge_key(a, b)).copied()
    }

    /// Every coarse side of a nonconforming interface.
    pub fn hanging_edges(&self) -> Vec<HangingEdge> {
        let vertex = self.active_vertex_mask();
        let mut out = Vec::new();
        for e in self.active_elements() {
            for s in 0..4 {
                let (a, b) = e.side_corners(s);
                let Some(m) = self.midpoint_of(a, b) else { continue };
                if !vertex[m] {
                    continue;
                }
                let quarter = match (self.midpoint_of(a, m), self.midpoint_of(m, b)) {
                    (Some(q1), Some(q2)) if e.kind == ElemKind::Quad9 => Some((q1, q2)),
                    _ => None,
                };
                out.push(HangingEdge { element: e.id, side: s, start: a, end: b, mid: m, quarter });
            }
        }
        out
    }

    /// Nodes that carry no independent value because they sit inside a coarse side.
    pub fn hanging_nodes(&self) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        for h in self.hanging_edges() {
            match h.quarter {
                Some((q1, q2)) => {
                    set.insert(q1);
                    set.insert(q2);
                }
                None => {
                    set.insert(h.mid);
                }
            }
        }
        set
    }

    /// True when no coarse side borders elements more than one level finer.
    pub fn is_balanced(&self) -> bool {
        let vertex = self.active_vertex_mask();
        let hanging_at = |a: usize, b: usize| self.midpoint_of(a, b).is_some_and(|m| vertex[m]);
        self.hanging_edges().iter().all(|h| !hanging_at(h.start, h.mid) && !hanging_at(h.mid, h.end))
    }

    /// Checks the structural invariants; used by readers and tests.
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i || !n.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::Internal(format!("node {i} has bad id or coordinates")));
            }
        }
        for (i, e) in self.elements.iter().enumerate() {
            if e.id != i || e.nodes.len() != e.kind.n_nodes() {
                return Err(Error::Internal(format!("element {i} has bad id or node count")));
            }
            if e.nodes.iter().any(|&n| n >= self.nodes.len()) {
                return Err(Error::Internal(format!("element {i} references a missing node")));
            }
            if let Some(children) = &e.children {
                for &c in children {
                    let child = &self.elements[c];
                    if child.parent != Some(i) || child.level != e.level + 1 {
                        return Err(Error::Internal(format!("element {c} is an inconsistent child of {i}")));
                    }
                }
            }
            if e.is_active() && self.area(i) <= 0.0 {
                return Err(Error::Geometry { element: i, det: self.area(i) });
            }
        }
        for &(e, s) in self.boundary.keys() {
            if e >= self.elements.len() || s >= 4 {
                return Err(Error::Internal(format!("boundary side ({e}, {s}) does not exist")));
            }
        }
        Ok(())
    }

    pub(crate) fn add_node(&mut self, coords: [f64; 2]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { id, coords });
        id
    }

    /// Node at the midpoint of `(a, b)`, created on first request.
    pub(crate) fn midpoint_node(&mut self, a: usize, b: usize) -> usize {
        if let Some(m) = self.midpoint_of(a, b) {
            return m;
        }
        let (p, q) = (self.point(a), self.point(b));
        let m = self.add_node([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        self.edge_midpoints.insert(edge_key(a, b), m);
        m
    }

    /// Registers the mid-edge nodes of quadratic elements.
    pub(crate) fn index_quadratic_midpoints(&mut self) {
        for e in &self.elements {
            if e.kind == ElemKind::Quad9 {
                for s in 0..4 {
                    let (a, b) = e.side_corners(s);
                    self.edge_midpoints.entry(edge_key(a, b)).or_insert(e.nodes[4 + s]);
                }
            }
        }
    }
}
