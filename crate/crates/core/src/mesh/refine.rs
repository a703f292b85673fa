use std::collections::{BTreeSet, HashMap};

use super::{edge_key, ElemKind, Element, Mesh};
use crate::error::{Error, Result};

/// Reference-frame offset of child `k` (the parent corner it contains).
pub(crate) const CHILD_OFFSETS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

impl Mesh {
    /// Isotropic refinement of the flagged active elements, plus whatever
    /// extra elements keep face neighbors within one level of each other.
    pub fn refine(&self, flags: &BTreeSet<usize>) -> Result<Mesh> {
        for &id in flags {
            match self.elements.get(id) {
                None => return Err(Error::Usage(format!("cannot refine element {id}: no such element"))),
                Some(e) if !e.is_active() => {
                    return Err(Error::Usage(format!("cannot refine element {id}: it is not active")))
                }
                _ => {}
            }
        }
        let to_refine = self.balance_closure(flags);
        let mut mesh = self.clone();
        for id in to_refine {
            mesh.split(id);
        }
        Ok(mesh)
    }

    /// Refine every active element once.
    pub fn refine_uniformly(&self) -> Mesh {
        let all: BTreeSet<usize> = self.active_ids().into_iter().collect();
        self.refine(&all).expect("active elements are always refinable")
    }

    /// Grow `flags` until refining them cannot create a level jump of two.
    fn balance_closure(&self, flags: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut sides: HashMap<(usize, usize), usize> = HashMap::new();
        for e in self.active_elements() {
            for s in 0..4 {
                let (a, b) = e.side_corners(s);
                sides.insert(edge_key(a, b), e.id);
            }
        }
        let mut set = flags.clone();
        let mut queue: Vec<usize> = flags.iter().copied().collect();
        while let Some(id) = queue.pop() {
            let e = &self.elements[id];
            let (Some(parent), Some(k)) = (e.parent, e.child_index(self)) else { continue };
            let parent = &self.elements[parent];
            // Child k touches parent sides k and k-1.
            for s in [k, (k + 3) % 4] {
                let (a, b) = parent.side_corners(s);
                if let Some(&coarse) = sides.get(&edge_key(a, b)) {
                    if set.insert(coarse) {
                        queue.push(coarse);
                    }
                }
            }
        }
        set
    }

    fn split(&mut self, id: usize) {
        let parent = self.elements[id].clone();
        let kind = parent.kind;
        let c = parent.corners();
        let mids: [usize; 4] = match kind {
            ElemKind::Quad9 => [parent.nodes[4], parent.nodes[5], parent.nodes[6], parent.nodes[7]],
            _ => [
                self.midpoint_node(c[0], c[1]),
                self.midpoint_node(c[1], c[2]),
                self.midpoint_node(c[2], c[3]),
                self.midpoint_node(c[3], c[0]),
            ],
        };
        let center = match kind {
            ElemKind::Quad9 => parent.nodes[8],
            _ => {
                let p: Vec<[f64; 2]> = c.iter().map(|&n| self.point(n)).collect();
                self.add_node([
                    0.25 * (p[0][0] + p[1][0] + p[2][0] + p[3][0]),
                    0.25 * (p[0][1] + p[1][1] + p[2][1] + p[3][1]),
                ])
            }
        };
        let child_corners = [
            [c[0], mids[0], center, mids[3]],
            [mids[0], c[1], mids[1], center],
            [center, mids[1], c[2], mids[2]],
            [mids[3], center, mids[2], c[3]],
        ];
        let mut children = Vec::with_capacity(4);
        for (k, cc) in child_corners.iter().enumerate() {
            let mut nodes = cc.to_vec();
            if kind == ElemKind::Quad9 {
                for s in 0..4 {
                    nodes.push(self.midpoint_node(cc[s], cc[(s + 1) % 4]));
                }
                let p: Vec<[f64; 2]> = cc.iter().map(|&n| self.point(n)).collect();
                nodes.push(self.add_node([
                    0.25 * (p[0][0] + p[1][0] + p[2][0] + p[3][0]),
                    0.25 * (p[0][1] + p[1][1] + p[2][1] + p[3][1]),
                ]));
            }
            let child_id = self.elements.len();
            self.elements.push(Element {
                id: child_id,
                kind,
                nodes,
                subdomain: parent.subdomain,
                level: parent.level + 1,
                parent: Some(id),
                children: None,
            });
            for s in [k, (k + 3) % 4] {
                if let Some(ids) = self.boundary.get(&(id, s)).cloned() {
                    self.boundary.insert((child_id, s), ids);
                }
            }
            children.push(child_id);
        }
        self.elements[id].children = Some(children);
    }
}
