use std::collections::BTreeSet;

use super::context::{ElemContext, LocalAccum, Phase};
use super::{Discretization, Physics, State};
use crate::dofs::Constraints;
use crate::error::{Error, Result};
use crate::mesh::BoundaryId;
use crate::solvers::sparse::{CsrMatrix, TripletBuilder};

/// Relative perturbation for finite-difference Jacobians.
pub const FD_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Residual,
    Jacobian,
    Both,
}

impl Want {
    fn jacobian(self) -> bool {
        matches!(self, Want::Jacobian | Want::Both)
    }
}

/// Condensed global residual and Jacobian. Constrained rows hold the
/// constraint equations `u_c - sum c u_m - g`.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub residual: Vec<f64>,
    pub jacobian: Option<CsrMatrix>,
}

/// Evaluation of all kernels on one element.
pub struct ElementEval<'a> {
    pub ctx: ElemContext<'a>,
    pub accum: LocalAccum,
    /// Global dofs in local order.
    pub dofs: Vec<usize>,
    physics: &'a Physics,
    u_next: Vec<f64>,
    u_old: Option<Vec<f64>>,
    theta: f64,
    dt: f64,
    time: f64,
    transient: bool,
    kernels: Vec<usize>,
    sides: Vec<(usize, BTreeSet<BoundaryId>, Vec<usize>)>,
}

impl<'a> ElementEval<'a> {
    pub fn new(disc: &'a Discretization, physics: &'a Physics, state: &State<'_>, elem: usize) -> Result<ElementEval<'a>> {
        let mesh = &disc.mesh;
        let e = mesh.element(elem);
        let nv = disc.dofs.n_vars();
        let mut dofs = Vec::new();
        let mut n_local = Vec::with_capacity(nv);
        for v in 0..nv {
            let d = disc.dofs.dof_indices(elem, v);
            n_local.push(d.len());
            dofs.extend_from_slice(d);
        }
        let orders: Vec<_> = disc.dofs.variables.iter().map(|v| v.order).collect();
        let ctx = ElemContext::new(mesh, elem, &orders, n_local, disc.quad_order)?;
        let accum = LocalAccum::new(&ctx);
        let admits = |k: usize| physics.kernels[k].active_subdomains().is_none_or(|s| s.contains(&e.subdomain));
        let kernels: Vec<usize> = (0..physics.kernels.len()).filter(|&k| admits(k)).collect();
        let mut sides = Vec::new();
        for s in 0..4 {
            let Some(ids) = mesh.boundary_ids(elem, s) else { continue };
            let visiting: Vec<usize> =
                kernels.iter().copied().filter(|&k| !physics.kernels[k].side_ids().is_disjoint(ids)).collect();
            if !visiting.is_empty() {
                sides.push((s, ids.clone(), visiting));
            }
        }
        let u_next: Vec<f64> = dofs.iter().map(|&d| state.u[d]).collect();
        let transient = state.weights.transient;
        let u_old = if transient {
            let old = state.u_old.ok_or_else(|| Error::Usage("transient evaluation without u_old".into()))?;
            Some(dofs.iter().map(|&d| old[d]).collect())
        } else {
            None
        };
        Ok(ElementEval {
            ctx,
            accum,
            dofs,
            physics,
            u_next,
            u_old,
            theta: state.weights.theta,
            dt: state.weights.dt,
            time: state.time,
            transient,
            kernels,
            sides,
        })
    }

    /// Replace the local unknown.
    pub fn set_local(&mut self, u_next: &[f64]) {
        self.u_next.copy_from_slice(u_next);
    }

    pub fn local(&self) -> &[f64] {
        &self.u_next
    }

    fn analytic(&self) -> bool {
        !self.physics.fd_jacobian && self.kernels.iter().all(|&k| self.physics.kernels[k].analytic_jacobian())
    }

    /// Fill `accum` with the local residual and, if asked, the local Jacobian.
    pub fn evaluate(&mut self, jacobian: bool) -> Result<()> {
        if jacobian && !self.analytic() {
            let j = self.fd_jacobian(FD_EPS)?;
            self.run(false)?;
            self.accum.jacobian.copy_from_slice(&j);
            return Ok(());
        }
        self.run(jacobian)
    }

    /// Load the state into the context in the time-derivative phase.
    pub(crate) fn load_state(&mut self) {
        self.ctx.set_phase(Phase::TimeDerivative);
        self.ctx.set_state(&self.u_next, self.u_old.as_deref(), self.theta, self.dt, self.time);
    }

    /// Analytic evaluation regardless of kernel flags.
    pub(crate) fn run(&mut self, jacobian: bool) -> Result<()> {
        self.accum.reset();
        self.ctx.set_state(&self.u_next, self.u_old.as_deref(), self.theta, self.dt, self.time);
        let kernels = &self.physics.kernels;
        let perms = &self.physics.permissions;
        self.ctx.set_phase(Phase::TimeDerivative);
        for &k in &self.kernels {
            self.accum.permit(kernels[k].name(), &perms[k]);
            if self.transient {
                kernels[k].mass_residual(&self.ctx, &mut self.accum, jacobian)?;
            }
            kernels[k].element_time_derivative(&self.ctx, &mut self.accum, jacobian)?;
            self.accum.check()?;
        }
        for (s, ids, visiting) in &self.sides {
            self.ctx.set_side(*s, ids.clone())?;
            self.ctx.set_phase(Phase::TimeDerivative);
            for &k in visiting {
                self.accum.permit(kernels[k].name(), &perms[k]);
                kernels[k].side_time_derivative(&self.ctx, &mut self.accum, jacobian)?;
                self.accum.check()?;
            }
            self.ctx.set_phase(Phase::Constraint);
            for &k in visiting {
                self.accum.permit(kernels[k].name(), &perms[k]);
                kernels[k].side_constraint(&self.ctx, &mut self.accum, jacobian)?;
                self.accum.check()?;
            }
            self.ctx.clear_side();
        }
        self.ctx.set_phase(Phase::Constraint);
        for &k in &self.kernels {
            self.accum.permit(kernels[k].name(), &perms[k]);
            kernels[k].element_constraint(&self.ctx, &mut self.accum, jacobian)?;
            self.accum.check()?;
        }
        Ok(())
    }

    /// Forward-difference local Jacobian (row-major) with respect to the unknown.
    pub fn fd_jacobian(&mut self, eps: f64) -> Result<Vec<f64>> {
        let n = self.u_next.len();
        self.run(false)?;
        let r0 = self.accum.residual.clone();
        let base = self.u_next.clone();
        let mut j = vec![0.0; n * n];
        for c in 0..n {
            let h = eps * base[c].abs().max(1.0);
            self.u_next[c] = base[c] + h;
            self.run(false)?;
            for r in 0..n {
                j[r * n + c] = (self.accum.residual[r] - r0[r]) / h;
            }
            self.u_next[c] = base[c];
        }
        self.run(false)?;
        Ok(j)
    }
}

/// Local FD Jacobian of element `elem` at `state`.
pub fn fd_element_jacobian(
    disc: &Discretization,
    physics: &Physics,
    state: &State<'_>,
    elem: usize,
    eps: f64,
) -> Result<Vec<f64>> {
    ElementEval::new(disc, physics, state, elem)?.fd_jacobian(eps)
}

/// Visit the unconstrained local residual of every active element.
pub fn element_contributions(
    disc: &Discretization,
    physics: &Physics,
    state: &State<'_>,
    mut f: impl FnMut(usize, &[usize], &[f64]) -> Result<()>,
) -> Result<()> {
    for e in disc.mesh.active_elements() {
        let mut ev = ElementEval::new(disc, physics, state, e.id)?;
        ev.evaluate(false)?;
        f(e.id, &ev.dofs, &ev.accum.residual)?;
    }
    Ok(())
}

pub fn assemble(
    disc: &Discretization,
    physics: &Physics,
    constraints: &Constraints,
    state: &State<'_>,
    want: Want,
) -> Result<Assembly> {
    let order = disc.mesh.active_ids();
    assemble_in_order(disc, physics, constraints, state, want, &order)
}

/// Assembly visiting elements in the given order.
pub fn assemble_in_order(
    disc: &Discretization,
    physics: &Physics,
    constraints: &Constraints,
    state: &State<'_>,
    want: Want,
    elements: &[usize],
) -> Result<Assembly> {
    let n = disc.n_dofs();
    if state.u.len() != n {
        return Err(Error::Usage(format!("state has {} entries, system has {n} dofs", state.u.len())));
    }
    let mut residual = vec![0.0; n];
    let mut builder = want.jacobian().then(|| TripletBuilder::new(n));
    for &e in elements {
        let mut ev = ElementEval::new(disc, physics, state, e)?;
        ev.evaluate(want.jacobian())?;
        let nl = ev.dofs.len();
        for (i, &gi) in ev.dofs.iter().enumerate() {
            let r = ev.accum.residual[i];
            for (fi, wi) in constraints.expand(gi) {
                residual[fi] += wi * r;
            }
        }
        if let Some(b) = builder.as_mut() {
            for (i, &gi) in ev.dofs.iter().enumerate() {
                for (fi, wi) in constraints.expand(gi) {
                    for (j, &gj) in ev.dofs.iter().enumerate() {
                        let v = ev.accum.jacobian[i * nl + j];
                        for (fj, wj) in constraints.expand(gj) {
                            b.add(fi, fj, wi * wj * v);
                        }
                    }
                }
            }
        }
    }
    for r in constraints.rows() {
        residual[r.dof] = state.u[r.dof] - r.rhs - r.masters.iter().map(|&(m, w)| w * state.u[m]).sum::<f64>();
    }
    let jacobian = builder.map(|mut b| {
        constraints.add_constraint_rows(&mut b);
        b.build()
    });
    let residual = if want == Want::Jacobian { Vec::new() } else { residual };
    Ok(Assembly { residual, jacobian })
}

/// Result of comparing analytic and finite-difference element Jacobians.
#[derive(Debug, Clone)]
pub struct JacobianReport {
    /// Largest discrepancy per `(row variable, column variable)` block,
    /// relative to the largest analytic entry of the same element.
    pub max_relative: Vec<Vec<f64>>,
    /// Element, row variable and column variable of the worst entry.
    pub worst: Option<(usize, usize, usize)>,
    pub worst_value: f64,
    pub tolerance: f64,
}

impl JacobianReport {
    pub fn passed(&self) -> bool {
        self.worst_value <= self.tolerance
    }
}

impl std::fmt::Display for JacobianReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "max relative discrepancy {:e} (tolerance {:e})", self.worst_value, self.tolerance)?;
        if let Some((e, a, b)) = self.worst {
            write!(f, " at element {e}, block ({a}, {b})")?;
        }
        Ok(())
    }
}

pub fn verify_jacobian(disc: &Discretization, physics: &Physics, state: &State<'_>, tolerance: f64) -> Result<JacobianReport> {
    let nv = disc.dofs.n_vars();
    let mut report =
        JacobianReport { max_relative: vec![vec![0.0; nv]; nv], worst: None, worst_value: 0.0, tolerance };
    for e in disc.mesh.active_elements() {
        let mut ev = ElementEval::new(disc, physics, state, e.id)?;
        ev.run(true)?;
        let analytic = ev.accum.jacobian.clone();
        let fd = ev.fd_jacobian(FD_EPS)?;
        let n = ev.dofs.len();
        let scale = analytic.iter().chain(&fd).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let var_of = |i: usize| (0..nv).rev().find(|&v| ev.ctx.n_dofs(v) > 0 && ev.ctx.offset(v) <= i).unwrap();
        for i in 0..n {
            for j in 0..n {
                let rel = (analytic[i * n + j] - fd[i * n + j]).abs() / scale;
                let (a, b) = (var_of(i), var_of(j));
                if rel > report.max_relative[a][b] {
                    report.max_relative[a][b] = rel;
                }
                if rel > report.worst_value {
                    report.worst_value = rel;
                    report.worst = Some((e.id, a, b));
                }
            }
        }
    }
    Ok(report)
}
