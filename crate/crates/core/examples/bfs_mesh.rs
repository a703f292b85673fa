//! Writes a backward-facing-step mesh in Gmsh MSH 2.2 format to stdout.
//!
//! Channel of height 1 on `[0, length] x [-0.5, 0.5]` with the block
//! `[0, 1] x [-0.5, 0]` removed. Boundary ids: 1 inlet (x = 0), 2 walls,
//! 3 outlet (x = length). Usage: `bfs_mesh [elements per unit] [length]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let per_unit: usize = args.get(1).map_or(8, |s| s.parse().expect("elements per unit"));
    let length: usize = args.get(2).map_or(9, |s| s.parse().expect("length"));
    print!("{}", bfs_msh(per_unit, length));
}

fn bfs_msh(per_unit: usize, length: usize) -> String {
    let nx = per_unit * length;
    let ny = per_unit;
    let h = 1.0 / per_unit as f64;
    let inside = |i: usize, j: usize| !(i < per_unit && j < ny / 2);
    // Lattice of half-element spacing; a node exists once some element uses it.
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut quads = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !inside(i, j) {
                continue;
            }
            let (a, b) = (2 * i, 2 * j);
            let lattice = [(a, b), (a + 2, b), (a + 2, b + 2), (a, b + 2), (a + 1, b), (a + 2, b + 1), (a + 1, b + 2), (a, b + 1), (a + 1, b + 1)];
            let q: Vec<usize> = lattice
                .iter()
                .map(|p| {
                    let n = ids.len() + 1;
                    *ids.entry(*p).or_insert(n)
                })
                .collect();
            quads.push(q);
        }
    }
    // An edge is on the boundary when exactly one element uses it.
    let mut edge_use: HashMap<(usize, usize), Vec<[usize; 3]>> = HashMap::new();
    for q in &quads {
        for s in 0..4 {
            let (a, b, m) = (q[s], q[(s + 1) % 4], q[4 + s]);
            edge_use.entry((a.min(b), a.max(b))).or_default().push([a, b, m]);
        }
    }
    let coords: BTreeMap<usize, (f64, f64)> =
        ids.iter().map(|(&(x, y), &n)| (n, (x as f64 * h / 2.0, y as f64 * h / 2.0 - 0.5))).collect();
    let mut lines: Vec<(i32, [usize; 3])> = edge_use
        .values()
        .filter(|v| v.len() == 1)
        .map(|v| {
            let e = v[0];
            let (xa, xb) = (coords[&e[0]].0, coords[&e[1]].0);
            let id = if xa == 0.0 && xb == 0.0 && coords[&e[0]].1 >= 0.0 && coords[&e[1]].1 >= 0.0 {
                1
            } else if xa == length as f64 && xb == length as f64 {
                3
            } else {
                2
            };
            (id, e)
        })
        .collect();
    lines.sort();

    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    s.push_str("$PhysicalNames\n4\n1 1 \"inlet\"\n1 2 \"walls\"\n1 3 \"outlet\"\n2 1 \"fluid\"\n$EndPhysicalNames\n");
    let _ = writeln!(s, "$Nodes\n{}", coords.len());
    for (n, (x, y)) in &coords {
        let _ = writeln!(s, "{n} {x:?} {y:?} 0");
    }
    s.push_str("$EndNodes\n");
    let _ = writeln!(s, "$Elements\n{}", lines.len() + quads.len());
    let mut k = 0;
    for (id, e) in &lines {
        k += 1;
        let _ = writeln!(s, "{k} 8 2 {id} {id} {} {} {}", e[0], e[1], e[2]);
    }
    for q in &quads {
        k += 1;
        let nodes: Vec<String> = q.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{k} 10 2 1 1 {}", nodes.join(" "));
    }
    s.push_str("$EndElements\n");
    s
}
