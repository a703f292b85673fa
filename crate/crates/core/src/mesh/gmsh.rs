//! Gmsh MSH 2.2 ASCII subset: `$MeshFormat`, `$PhysicalNames`, `$Nodes` and
//! `$Elements` with element codes 1 (line2), 8 (line3), 3 (quad4), 10 (quad9)
//! and 15 (point, ignored). The first tag of an element is its physical id:
//! a boundary id for lines, a subdomain id for quads.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{edge_key, ElemKind, Element, Mesh, Node};
use crate::error::{Error, Result};

const FILE: &str = "<msh>";

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(Error::parse(FILE, self.line + 1, "unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(FILE, self.line, msg)
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next()?;
        if l != tag {
            return Err(self.err(format!("expected '{tag}', found '{l}'")));
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize> {
        let l = self.next()?;
        l.parse().map_err(|_| self.err(format!("expected a count, found '{l}'")))
    }
}

fn nums<T: std::str::FromStr>(lines: &Lines<'_>, l: &str) -> Result<Vec<T>> {
    l.split_whitespace().map(|t| t.parse::<T>().map_err(|_| lines.err(format!("malformed number '{t}'")))).collect()
}

/// Parse MSH 2.2 ASCII text into a mesh.
pub fn read_gmsh(text: &str) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let mut version_seen = false;
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut coords: Vec<[f64; 2]> = Vec::new();
    let mut quads: Vec<(ElemKind, Vec<usize>, i32)> = Vec::new();
    let mut lines_elems: Vec<(Vec<usize>, i32, usize)> = Vec::new();

    loop {
        let header = match lines.inner.next() {
            None => break,
            Some((i, l)) => {
                lines.line = i + 1;
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                l
            }
        };
        match header {
            "$MeshFormat" => {
                let l = lines.next()?;
                let parts: Vec<&str> = l.split_whitespace().collect();
                if parts.len() < 3 || !parts[0].starts_with("2.") {
                    return Err(lines.err(format!("unsupported MSH version '{l}' (need 2.x ASCII)")));
                }
                if parts[1] != "0" {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                version_seen = true;
                lines.expect("$EndMeshFormat")?;
            }
            "$PhysicalNames" => {
                let n = lines.count()?;
                for _ in 0..n {
                    lines.next()?;
                }
                lines.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let v: Vec<&str> = l.split_whitespace().collect();
                    if v.len() < 4 {
                        return Err(lines.err("node line needs 'id x y z'"));
                    }
                    let id: usize = v[0].parse().map_err(|_| lines.err(format!("bad node id '{}'", v[0])))?;
                    let xy = nums::<f64>(&lines, &format!("{} {}", v[1], v[2]))?;
                    node_index.insert(id, coords.len());
                    coords.push([xy[0], xy[1]]);
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let v = nums::<i64>(&lines, l)?;
                    if v.len() < 3 {
                        return Err(lines.err("element line too short"));
                    }
                    let code = v[1];
                    let ntags = v[2] as usize;
                    let tag = if ntags > 0 { v[3] as i32 } else { 0 };
                    let raw_nodes = &v[3 + ntags..];
                    let (kind, expect) = match code {
                        1 => (ElemKind::Edge2, 2),
                        8 => (ElemKind::Edge3, 3),
                        3 => (ElemKind::Quad4, 4),
                        10 => (ElemKind::Quad9, 9),
                        15 => continue,
                        other => return Err(lines.err(format!("unsupported element type {other}"))),
                    };
                    if raw_nodes.len() != expect {
                        return Err(lines.err(format!("element type {code} needs {expect} nodes, found {}", raw_nodes.len())));
                    }
                    let mut ids = Vec::with_capacity(expect);
                    for &r in raw_nodes {
                        match node_index.get(&(r as usize)) {
                            Some(&i) => ids.push(i),
                            None => return Err(lines.err(format!("element references unknown node {r}"))),
                        }
                    }
                    if kind.is_quad() {
                        quads.push((kind, ids, tag));
                    } else {
                        lines_elems.push((ids, tag, lines.line));
                    }
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Unknown section: skip to its end marker.
                let end = format!("$End{}", &other[1..]);
                while lines.next()? != end {}
            }
            other => return Err(lines.err(format!("unexpected line '{other}'"))),
        }
    }
    if !version_seen {
        return Err(Error::parse(FILE, 1, "missing $MeshFormat section"));
    }
    if quads.is_empty() {
        return Err(Error::parse(FILE, lines.line, "no quadrilateral elements"));
    }
    if quads.iter().any(|(k, ..)| *k != quads[0].0) {
        return Err(Error::parse(FILE, lines.line, "mixed Quad4/Quad9 meshes are not supported"));
    }

    // Keep only nodes referenced by quads, renumbered densely in file order.
    let mut used = vec![false; coords.len()];
    for (_, ids, _) in &quads {
        for &i in ids {
            used[i] = true;
        }
    }
    let mut remap = vec![usize::MAX; coords.len()];
    let mut mesh = Mesh::default();
    for (i, c) in coords.iter().enumerate() {
        if used[i] {
            remap[i] = mesh.nodes.len();
            mesh.nodes.push(Node { id: mesh.nodes.len(), coords: *c });
        }
    }
    for (kind, ids, tag) in quads {
        let mut nodes: Vec<usize> = ids.iter().map(|&i| remap[i]).collect();
        let id = mesh.elements.len();
        mesh.elements.push(Element { id, kind, nodes: nodes.clone(), subdomain: tag, level: 0, parent: None, children: None });
        if mesh.area(id) < 0.0 {
            // Clockwise in the file: mirror the local numbering.
            nodes = match kind {
                ElemKind::Quad4 => vec![nodes[0], nodes[3], nodes[2], nodes[1]],
                _ => vec![nodes[0], nodes[3], nodes[2], nodes[1], nodes[7], nodes[6], nodes[5], nodes[4], nodes[8]],
            };
            mesh.elements[id].nodes = nodes;
        }
        if mesh.area(id) <= 0.0 {
            return Err(Error::Geometry { element: id, det: mesh.area(id) });
        }
    }
    let mut sides: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for e in &mesh.elements {
        for s in 0..4 {
            let (a, b) = e.side_corners(s);
            sides.insert(edge_key(a, b), (e.id, s));
        }
    }
    for (ids, tag, line) in lines_elems {
        let (a, b) = (remap[ids[0]], remap[ids[1]]);
        match (a != usize::MAX && b != usize::MAX).then(|| sides.get(&edge_key(a, b))).flatten() {
            Some(&key) => {
                mesh.boundary.entry(key).or_insert_with(BTreeSet::new).insert(tag);
            }
            None => return Err(Error::parse(FILE, line, "boundary line does not match any element side")),
        }
    }
    mesh.index_quadratic_midpoints();
    mesh.validate()?;
    Ok(mesh)
}

/// Write the active elements and tagged boundary sides as MSH 2.2 ASCII.
pub fn write_gmsh(mesh: &Mesh) -> String {
    let mask = mesh.active_node_mask();
    let mut file_id = vec![0usize; mesh.n_nodes()];
    let mut out = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let used: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mask[i]).collect();
    let _ = writeln!(out, "{}", used.len());
    for (k, &i) in used.iter().enumerate() {
        file_id[i] = k + 1;
        let p = mesh.point(i);
        let _ = writeln!(out, "{} {:?} {:?} 0", k + 1, p[0], p[1]);
    }
    out.push_str("$EndNodes\n$Elements\n");
    let mut records = Vec::new();
    for ((e, s), ids) in &mesh.boundary {
        let elem = mesh.element(*e);
        if !elem.is_active() {
            continue;
        }
        let (a, b) = elem.side_corners(*s);
        for id in ids {
            match elem.kind {
                ElemKind::Quad9 => records.push(format!("8 2 {id} {id} {} {} {}", file_id[a], file_id[b], file_id[elem.nodes[4 + s]])),
                _ => records.push(format!("1 2 {id} {id} {} {}", file_id[a], file_id[b])),
            }
        }
    }
    for e in mesh.active_elements() {
        let code = if e.kind == ElemKind::Quad9 { 10 } else { 3 };
        let nodes: Vec<String> = e.nodes.iter().map(|&n| file_id[n].to_string()).collect();
        records.push(format!("{code} 2 {} {} {}", e.subdomain, e.subdomain, nodes.join(" ")));
    }
    let _ = writeln!(out, "{}", records.len());
    for (k, r) in records.iter().enumerate() {
        let _ = writeln!(out, "{} {r}", k + 1);
    }
    out.push_str("$EndElements\n");
    out
}
