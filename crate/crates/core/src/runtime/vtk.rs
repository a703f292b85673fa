use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{ElemKind, Mesh};

/// Sub-quads of a Q9 element in local node numbers.
const Q9_SUBQUADS: [[usize; 4]; 4] = [[0, 4, 8, 7], [4, 1, 5, 8], [8, 5, 2, 6], [7, 8, 6, 3]];

/// Legacy ASCII VTK text for the active elements of `mesh`. Fields hold one
/// value per mesh node and are written in the given order. Quadratic quads
/// become their corner quads, or four sub-quads with `subdivide`.
pub fn vtk_string(mesh: &Mesh, fields: &[(String, Vec<f64>)], subdivide: bool) -> Result<String> {
    for (name, values) in fields {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Usage(format!("field '{name}' has {} values for {} nodes", values.len(), mesh.n_nodes())));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Usage(format!("field name '{name}' is not a valid VTK array name")));
        }
    }
    let mut cells: Vec<[usize; 4]> = Vec::new();
    for e in mesh.active_elements() {
        if subdivide && e.kind == ElemKind::Quad9 {
            cells.extend(Q9_SUBQUADS.iter().map(|q| q.map(|i| e.nodes[i])));
        } else {
            cells.push(e.corners());
        }
    }
    let mut index = vec![usize::MAX; mesh.n_nodes()];
    let mut points = Vec::new();
    for c in &cells {
        for &n in c {
            if index[n] == usize::MAX {
                index[n] = points.len();
                points.push(n);
            }
        }
    }
    // Renumber in mesh order so output does not depend on element traversal.
    points.sort_unstable();
    for (i, &n) in points.iter().enumerate() {
        index[n] = i;
    }

    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\nfemforge output\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", points.len());
    for &n in &points {
        let [x, y] = mesh.point(n);
        let _ = writeln!(s, "{x:?} {y:?} 0");
    }
    let _ = writeln!(s, "CELLS {} {}", cells.len(), 5 * cells.len());
    for c in &cells {
        let _ = writeln!(s, "4 {} {} {} {}", index[c[0]], index[c[1]], index[c[2]], index[c[3]]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in &cells {
        s.push_str("9\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", points.len());
        for (name, values) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for &n in &points {
                let _ = writeln!(s, "{:?}", values[n]);
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(mesh: &Mesh, fields: &[(String, Vec<f64>)], path: &Path, subdivide: bool) -> Result<()> {
    let text = vtk_string(mesh, fields, subdivide)?;
    std::fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
