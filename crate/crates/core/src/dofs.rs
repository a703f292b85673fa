//! Degree-of-freedom numbering and linear constraints.
//!
//! Dofs are node based and numbered variable-major: all dofs of the first
//! variable, then the second, and so on, each in ascending node order.
//! Constraints are rows `x_c = sum_m c_m x_m + g`; after closure no master is
//! itself constrained, so the constrained solution space is
//! `x = C x_free + g`.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::mesh::{ElemKind, Mesh, SubdomainId};
use crate::solvers::sparse::{CsrMatrix, TripletBuilder};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub order: Order,
    /// Restrict the variable to these subdomains; `None` means everywhere.
    pub subdomains: Option<BTreeSet<SubdomainId>>,
}

impl Variable {
    pub fn new(name: impl Into<String>, order: Order) -> Variable {
        Variable { name: name.into(), order, subdomains: None }
    }

    pub fn on_subdomains(mut self, ids: impl IntoIterator<Item = SubdomainId>) -> Variable {
        self.subdomains = Some(ids.into_iter().collect());
        self
    }

    pub fn lives_on(&self, subdomain: SubdomainId) -> bool {
        self.subdomains.as_ref().is_none_or(|s| s.contains(&subdomain))
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub variables: Vec<Variable>,
    n_dofs: usize,
    /// `node_dofs[var][node]`, `NONE` where the variable has no dof.
    node_dofs: Vec<Vec<usize>>,
    /// `elem_dofs[elem][var]`; empty for inactive elements or excluded subdomains.
    elem_dofs: Vec<Vec<Vec<usize>>>,
    dof_node: Vec<usize>,
    dof_var: Vec<usize>,
    var_start: Vec<usize>,
}

impl DofMap {
    pub fn distribute(mesh: &Mesh, variables: &[Variable]) -> Result<DofMap> {
        if variables.is_empty() {
            return Err(Error::Usage("no variables to distribute".into()));
        }
        let mut seen = BTreeSet::new();
        for v in variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::config(format!("Variables/{}", v.name), "duplicate variable name"));
            }
            if v.order == Order::Second && mesh.active_elements().any(|e| e.kind != ElemKind::Quad9) {
                return Err(Error::config(
                    format!("Variables/{}", v.name),
                    "SECOND order variables need a QUAD9 mesh",
                ));
            }
        }
        let n_nodes = mesh.n_nodes();
        let mut node_dofs = vec![vec![NONE; n_nodes]; variables.len()];
        let mut dof_node = Vec::new();
        let mut dof_var = Vec::new();
        let mut var_start = Vec::new();
        for (vi, v) in variables.iter().enumerate() {
            let n_local = v.order.n_quad_shapes();
            let mut used = vec![false; n_nodes];
            for e in mesh.active_elements().filter(|e| v.lives_on(e.subdomain)) {
                for &n in &e.nodes[..n_local] {
                    used[n] = true;
                }
            }
            var_start.push(dof_node.len());
            for n in (0..n_nodes).filter(|&n| used[n]) {
                node_dofs[vi][n] = dof_node.len();
                dof_node.push(n);
                dof_var.push(vi);
            }
        }
        let elem_dofs = mesh
            .elements
            .iter()
            .map(|e| {
                variables
                    .iter()
                    .enumerate()
                    .map(|(vi, v)| {
                        if e.is_active() && v.lives_on(e.subdomain) {
                            e.nodes[..v.order.n_quad_shapes()].iter().map(|&n| node_dofs[vi][n]).collect()
                        } else {
                            Vec::new()
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DofMap {
            variables: variables.to_vec(),
            n_dofs: dof_node.len(),
            node_dofs,
            elem_dofs,
            dof_node,
            dof_var,
            var_start,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Global dofs of `var` on `elem`, in local shape-function order.
    pub fn dof_indices(&self, elem: usize, var: usize) -> &[usize] {
        &self.elem_dofs[elem][var]
    }

    pub fn node_dof(&self, var: usize, node: usize) -> Option<usize> {
        let d = self.node_dofs[var][node];
        (d != NONE).then_some(d)
    }

    pub fn dof_node(&self, dof: usize) -> usize {
        self.dof_node[dof]
    }

    pub fn dof_variable(&self, dof: usize) -> usize {
        self.dof_var[dof]
    }

    pub fn var_range(&self, var: usize) -> std::ops::Range<usize> {
        let end = self.var_start.get(var + 1).copied().unwrap_or(self.n_dofs);
        self.var_start[var]..end
    }

    /// Dofs of `var` on local side `side` of `elem`: the two corners, then the mid node for SECOND.
    pub fn side_dofs(&self, mesh: &Mesh, elem: usize, side: usize, var: usize) -> Vec<usize> {
        let e = mesh.element(elem);
        let mut nodes = vec![e.nodes[side], e.nodes[(side + 1) % 4]];
        if self.variables[var].order == Order::Second {
            nodes.push(e.nodes[4 + side]);
        }
        nodes.into_iter().filter_map(|n| self.node_dof(var, n)).collect()
    }

    /// Nodal values of `var` as a full per-node array (zero where absent).
    pub fn nodal_field(&self, var: usize, u: &[f64], mesh: &Mesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_nodes()];
        for d in self.var_range(var) {
            out[self.dof_node[d]] = u[d];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub dof: usize,
    pub masters: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Dirichlet data on a set of boundary ids for one variable.
#[derive(Debug, Clone)]
pub struct DirichletSpec {
    pub boundary_ids: Vec<i32>,
    pub variable: String,
    pub value: SpaceTimeFn,
    /// Input path reported in configuration errors.
    pub key: String,
}

#[derive(Debug, Clone, Default)]
pub struct Constraints {
    rows: BTreeMap<usize, ConstraintRow>,
}

impl Constraints {
    pub fn new() -> Constraints {
        Constraints::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &ConstraintRow> {
        self.rows.values()
    }

    pub fn row(&self, dof: usize) -> Option<&ConstraintRow> {
        self.rows.get(&dof)
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.rows.contains_key(&dof)
    }

    /// Insert or replace a row.
    pub fn set(&mut self, row: ConstraintRow) {
        self.rows.insert(row.dof, row);
    }

    /// Rows for hanging nodes: each hanging dof interpolates its coarse side.
    pub fn hanging(mesh: &Mesh, dofs: &DofMap) -> Result<Constraints> {
        if !mesh.is_balanced() {
            return Err(Error::Internal("hanging constraints need a 2:1 balanced mesh".into()));
        }
        let mut c = Constraints::new();
        for h in mesh.hanging_edges() {
            for (vi, v) in dofs.variables.iter().enumerate() {
                let dof = |n: usize| dofs.node_dof(vi, n);
                let mut add = |slave: usize, masters: &[(usize, f64)]| -> Result<()> {
                    let Some(s) = dof(slave) else { return Ok(()) };
                    let mut list = Vec::new();
                    for &(m, w) in masters {
                        let md = dof(m).ok_or_else(|| {
                            Error::Internal(format!("hanging node {slave} of '{}' has a master without a dof", v.name))
                        })?;
                        list.push((md, w));
                    }
                    c.set(ConstraintRow { dof: s, masters: list, rhs: 0.0 });
                    Ok(())
                };
                match (v.order, h.quarter) {
                    (Order::First, _) => add(h.mid, &[(h.start, 0.5), (h.end, 0.5)])?,
                    (Order::Second, Some((q1, q2))) => {
                        add(q1, &[(h.start, 0.375), (h.mid, 0.75), (h.end, -0.125)])?;
                        add(q2, &[(h.start, -0.125), (h.mid, 0.75), (h.end, 0.375)])?;
                    }
                    (Order::Second, None) => {
                        return Err(Error::Internal("quadratic hanging edge without quarter nodes".into()))
                    }
                }
            }
        }
        c.close()?;
        Ok(c)
    }

    /// Full constraint set at time `t`: hanging rows, then Dirichlet rows in
    /// order (later specs win at shared nodes), then explicit pins.
    pub fn build(
        mesh: &Mesh,
        dofs: &DofMap,
        hanging: &Constraints,
        dirichlet: &[DirichletSpec],
        pins: &[(usize, f64)],
        t: f64,
    ) -> Result<Constraints> {
        let mut c = hanging.clone();
        let known_ids = mesh.boundary_id_set();
        for spec in dirichlet {
            let var = dofs
                .variable_index(&spec.variable)
                .ok_or_else(|| Error::config(&spec.key, format!("unknown variable '{}'", spec.variable)))?;
            for &id in &spec.boundary_ids {
                if !known_ids.contains(&id) {
                    return Err(Error::config(&spec.key, format!("boundary id {id} does not exist in the mesh")));
                }
                for (e, s) in mesh.active_boundary_sides(id) {
                    for d in dofs.side_dofs(mesh, e, s, var) {
                        let p = mesh.point(dofs.dof_node(d));
                        let g = spec.value.eval(p[0], p[1], t).map_err(|err| Error::config(&spec.key, err.to_string()))?;
                        c.set(ConstraintRow { dof: d, masters: Vec::new(), rhs: g });
                    }
                }
            }
        }
        for &(d, g) in pins {
            c.set(ConstraintRow { dof: d, masters: Vec::new(), rhs: g });
        }
        c.close()?;
        Ok(c)
    }

    /// Substitute constrained masters until every master is free.
    pub fn close(&mut self) -> Result<()> {
        let keys: Vec<usize> = self.rows.keys().copied().collect();
        let limit = self.rows.len() + 2;
        for k in keys {
            let mut row = self.rows[&k].clone();
            let mut depth = 0;
            while row.masters.iter().any(|(m, _)| self.rows.contains_key(m)) {
                depth += 1;
                if depth > limit {
                    return Err(Error::Internal(format!("constraint cycle through dof {k}")));
                }
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                let mut rhs = row.rhs;
                for &(m, w) in &row.masters {
                    match self.rows.get(&m) {
                        Some(r) if m != k => {
                            rhs += w * r.rhs;
                            for &(mm, ww) in &r.masters {
                                *acc.entry(mm).or_insert(0.0) += w * ww;
                            }
                        }
                        Some(_) => return Err(Error::Internal(format!("dof {k} constrained to itself"))),
                        None => *acc.entry(m).or_insert(0.0) += w,
                    }
                }
                row = ConstraintRow { dof: k, masters: acc.into_iter().filter(|&(_, w)| w != 0.0).collect(), rhs };
            }
            self.rows.insert(k, row);
        }
        Ok(())
    }

    /// Set constrained entries of `u` from its free entries.
    pub fn distribute(&self, u: &mut [f64]) {
        for r in self.rows.values() {
            u[r.dof] = r.rhs + r.masters.iter().map(|&(m, w)| w * u[m]).sum::<f64>();
        }
    }

    /// As `distribute` with all inhomogeneities taken as zero.
    pub fn distribute_homogeneous(&self, u: &mut [f64]) {
        for r in self.rows.values() {
            u[r.dof] = r.masters.iter().map(|&(m, w)| w * u[m]).sum::<f64>();
        }
    }

    /// Free dofs that `dof` expands to, with weights.
    pub fn expand(&self, dof: usize) -> Expansion<'_> {
        match self.rows.get(&dof) {
            Some(r) => Expansion::Masters(r.masters.iter()),
            None => Expansion::Free(Some(dof)),
        }
    }

    /// `C^T v`, with zeros in constrained rows.
    pub fn condense_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for r in self.rows.values() {
            out[r.dof] = 0.0;
        }
        for r in self.rows.values() {
            for &(m, w) in &r.masters {
                out[m] += w * v[r.dof];
            }
        }
        out
    }

    /// Residual of the constraint equations `u_c - sum c u_m - g`.
    pub fn violation(&self, u: &[f64]) -> f64 {
        self.rows
            .values()
            .map(|r| (u[r.dof] - r.rhs - r.masters.iter().map(|&(m, w)| w * u[m]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// Append the identity-like rows `x_c - sum c x_m` of the condensed system.
    pub fn add_constraint_rows(&self, builder: &mut TripletBuilder) {
        for r in self.rows.values() {
            builder.add(r.dof, r.dof, 1.0);
            for &(m, w) in &r.masters {
                builder.add(r.dof, m, -w);
            }
        }
    }

    /// Condense the linear system `A x = b`: free rows become
    /// `C^T A C x_free = C^T (b - A g)`, constrained rows become the constraint equations.
    pub fn condense(&self, a: &CsrMatrix, b: &[f64]) -> (CsrMatrix, Vec<f64>) {
        let n = a.n_rows();
        let mut g = vec![0.0; n];
        for r in self.rows.values() {
            g[r.dof] = r.rhs;
        }
        let ag = a.mul_vec(&g);
        let shifted: Vec<f64> = b.iter().zip(&ag).map(|(b, ag)| b - ag).collect();
        let mut rhs = self.condense_vector(&shifted);
        for r in self.rows.values() {
            rhs[r.dof] = r.rhs;
        }
        let mut builder = TripletBuilder::new(n);
        for i in 0..n {
            for (j, v) in a.row(i) {
                for (fi, wi) in self.expand(i) {
                    for (fj, wj) in self.expand(j) {
                        builder.add(fi, fj, wi * wj * v);
                    }
                }
            }
        }
        self.add_constraint_rows(&mut builder);
        (builder.build(), rhs)
    }
}

pub enum Expansion<'a> {
    Free(Option<usize>),
    Masters(std::slice::Iter<'a, (usize, f64)>),
}

impl Iterator for Expansion<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            Expansion::Free(d) => d.take().map(|d| (d, 1.0)),
            Expansion::Masters(it) => it.next().copied(),
        }
    }
}
