//! Quantities of interest, discrete adjoints, dual-weighted-residual error
//! estimates with goal-oriented refinement, and adjoint parameter
//! sensitivities. Steady problems only.
//!
//! The adjoint solves `J^T p = dQ/du` with the forward Jacobian condensed by
//! the forward constraint pattern taken homogeneous. Error estimates solve
//! that problem on one uniform refinement of the mesh, linearized at the
//! prolongated coarse solution `I u_h`, and return `-p . R(I u_h)`. The
//! part of the error from the fine adjoint's own discretization error is
//! not estimated.

mod qoi;

use std::collections::BTreeSet;

pub use qoi::{BoundaryFlux, DomainIntegral, PointValue, QoiKernel};

use crate::error::{Error, Result};
use crate::fe::{quad_node_ref, shape_unchecked};
use crate::mesh::CHILD_OFFSETS;
use crate::solvers::{linear_solve_transpose, steady_solve, LinearOptions, NewtonSettings};
use crate::system::{
    assemble, element_contributions, Discretization, ElementEval, ParameterHandle, Physics, State, System, Want,
};

/// Value of `qoi` at `u` on `disc`.
pub fn evaluate_qoi(disc: &Discretization, physics: &Physics, u: &[f64], qoi: &dyn QoiKernel) -> Result<f64> {
    let mut total = 0.0;
    visit(disc, physics, u, qoi, |ev, side| {
        total += if side { qoi.side_qoi(&ev.ctx)? } else { qoi.element_qoi(&ev.ctx)? };
        Ok(())
    })?;
    Ok(total)
}

/// `dQ/du` with respect to every (unconstrained) dof.
pub fn qoi_gradient(disc: &Discretization, physics: &Physics, u: &[f64], qoi: &dyn QoiKernel) -> Result<Vec<f64>> {
    let mut g = vec![0.0; disc.n_dofs()];
    let mut local = Vec::new();
    visit(disc, physics, u, qoi, |ev, side| {
        local.clear();
        local.resize(ev.dofs.len(), 0.0);
        if side {
            qoi.side_qoi_derivative(&ev.ctx, &mut local)?;
        } else {
            qoi.element_qoi_derivative(&ev.ctx, &mut local)?;
        }
        for (&d, &v) in ev.dofs.iter().zip(&local) {
            g[d] += v;
        }
        Ok(())
    })?;
    Ok(g)
}

fn visit(
    disc: &Discretization,
    physics: &Physics,
    u: &[f64],
    qoi: &dyn QoiKernel,
    mut f: impl FnMut(&ElementEval<'_>, bool) -> Result<()>,
) -> Result<()> {
    if u.len() != disc.n_dofs() {
        return Err(Error::Usage(format!("state has {} entries, system has {} dofs", u.len(), disc.n_dofs())));
    }
    let state = State::steady(u);
    let side_ids = qoi.side_ids();
    for e in disc.mesh.active_elements() {
        let mut ev = ElementEval::new(disc, physics, &state, e.id)?;
        ev.load_state();
        if qoi.assemble_on_interior() {
            f(&ev, false)?;
        }
        if qoi.assemble_on_sides() {
            for s in 0..4 {
                let Some(ids) = disc.mesh.boundary_ids(e.id, s) else { continue };
                if ids.is_disjoint(&side_ids) {
                    continue;
                }
                ev.ctx.set_side(s, ids.clone())?;
                f(&ev, true)?;
                ev.ctx.clear_side();
            }
        }
    }
    Ok(())
}

/// Sum of element residuals with no constraints applied.
pub fn raw_residual(disc: &Discretization, physics: &Physics, state: &State<'_>) -> Result<Vec<f64>> {
    let mut r = vec![0.0; disc.n_dofs()];
    element_contributions(disc, physics, state, |_, dofs, local| {
        for (&d, &v) in dofs.iter().zip(local) {
            r[d] += v;
        }
        Ok(())
    })?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub qoi: String,
    /// Adjoint values at every dof, constrained dofs included.
    pub p: Vec<f64>,
}

/// Solve the discrete adjoint problem on `disc` linearized at `u`.
pub fn solve_adjoint_on(
    disc: &Discretization,
    physics: &Physics,
    u: &[f64],
    qoi: &dyn QoiKernel,
    linear: &LinearOptions,
) -> Result<AdjointSolution> {
    let constraints = disc.constraints(physics, 0.0)?;
    let jac = assemble(disc, physics, &constraints, &State::steady(u), Want::Jacobian)?.jacobian.expect("jacobian requested");
    let q = qoi_gradient(disc, physics, u, qoi)?;
    let rhs = constraints.condense_vector(&q);
    let mut p = linear_solve_transpose(&jac, &rhs, linear)?;
    constraints.distribute_homogeneous(&mut p);
    Ok(AdjointSolution { qoi: qoi.name().to_string(), p })
}

/// Adjoint of `sys` at the forward solution `u`.
pub fn solve_adjoint(sys: &System, u: &[f64], qoi: &mut dyn QoiKernel, linear: &LinearOptions) -> Result<AdjointSolution> {
    qoi.init(sys.physics.variables())?;
    qoi.prepare(sys.mesh())?;
    solve_adjoint_on(&sys.disc, &sys.physics, u, qoi, linear)
}

/// Value of a QoI on a system.
pub fn qoi_value(sys: &System, u: &[f64], qoi: &mut dyn QoiKernel) -> Result<f64> {
    qoi.init(sys.physics.variables())?;
    qoi.prepare(sys.mesh())?;
    evaluate_qoi(&sys.disc, &sys.physics, u, qoi)
}

/// Interpolate a coarse solution onto a uniform refinement of its mesh.
pub fn prolongate(coarse: &Discretization, fine: &Discretization, u: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fine.n_dofs()];
    for e in fine.mesh.active_elements() {
        let (Some(parent), Some(k)) = (e.parent, e.child_index(&fine.mesh)) else {
            return Err(Error::Usage(format!("fine element {} has no parent; not a uniform refinement", e.id)));
        };
        if parent >= coarse.mesh.n_elements() || !coarse.mesh.element(parent).is_active() {
            return Err(Error::Usage(format!("parent {parent} of fine element {} is not a coarse active element", e.id)));
        }
        for v in 0..fine.dofs.n_vars() {
            let fd = fine.dofs.dof_indices(e.id, v);
            let cd = coarse.dofs.dof_indices(parent, v);
            let order = fine.dofs.variables[v].order;
            for (i, &d) in fd.iter().enumerate() {
                let xc = quad_node_ref(i);
                let xp = [(xc[0] + CHILD_OFFSETS[k][0]) / 2.0, (xc[1] + CHILD_OFFSETS[k][1]) / 2.0];
                out[d] = cd.iter().enumerate().map(|(j, &c)| u[c] * shape_unchecked(true, order, j, xp).0).sum();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    /// Estimate of `Q(u) - Q(u_h)`.
    pub global: f64,
    /// Signed contribution per coarse element id (zero for inactive ids).
    pub contributions: Vec<f64>,
    /// `|contribution|` per coarse element id.
    pub indicators: Vec<f64>,
    /// Dofs of the enriched space.
    pub fine_dofs: usize,
}

/// Dual-weighted residual estimate on one uniform h-refinement.
pub fn dwr_estimate(sys: &System, u_h: &[f64], qoi: &mut dyn QoiKernel, linear: &LinearOptions) -> Result<ErrorEstimate> {
    qoi.init(sys.physics.variables())?;
    let fine = Discretization::new(sys.mesh().refine_uniformly(), sys.physics.variables(), Some(sys.disc.quad_order))?;
    let mut iu = prolongate(&sys.disc, &fine, u_h)?;
    let constraints = fine.constraints(&sys.physics, 0.0)?;
    constraints.distribute(&mut iu);
    qoi.prepare(&fine.mesh)?;
    let adjoint = solve_adjoint_on(&fine, &sys.physics, &iu, qoi, linear);
    qoi.prepare(sys.mesh())?;
    let p = adjoint?.p;
    let mut contributions = vec![0.0; sys.mesh().n_elements()];
    element_contributions(&fine, &sys.physics, &State::steady(&iu), |e, dofs, local| {
        let parent = fine.mesh.element(e).parent.expect("checked by prolongate");
        contributions[parent] -= dofs.iter().zip(local).map(|(&d, &r)| p[d] * r).sum::<f64>();
        Ok(())
    })?;
    let global = contributions.iter().sum();
    let indicators = contributions.iter().map(|c| c.abs()).collect();
    Ok(ErrorEstimate { global, contributions, indicators, fine_dofs: fine.n_dofs() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSettings {
    pub cycles: usize,
    /// Fraction of active elements flagged per cycle, largest indicators first.
    pub fraction: f64,
    /// Stop once the forward problem has at least this many dofs.
    pub dof_budget: Option<usize>,
    pub newton: NewtonSettings,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        AdaptSettings { cycles: 5, fraction: 0.3, dof_budget: None, newton: NewtonSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptRecord {
    pub cycle: usize,
    pub n_dofs: usize,
    pub qoi_value: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptResult {
    pub history: Vec<AdaptRecord>,
    /// Solution and estimate of the last cycle.
    pub solution: Vec<f64>,
    pub estimate: ErrorEstimate,
}

impl AdaptResult {
    /// `cycle,n_dofs,qoi_value,estimate`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cycle,n_dofs,qoi_value,estimate\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{:.15e},{:.15e}\n", r.cycle, r.n_dofs, r.qoi_value, r.estimate));
        }
        s
    }
}

/// Solve, estimate, mark and refine, `settings.cycles` times after the first solve.
pub fn adapt_loop(sys: &mut System, qoi: &mut dyn QoiKernel, settings: &AdaptSettings) -> Result<AdaptResult> {
    if !(settings.fraction > 0.0 && settings.fraction <= 1.0) {
        return Err(Error::config("Adaptivity/fraction", "must lie in (0, 1]"));
    }
    let mut history = Vec::new();
    let mut cycle = 0;
    loop {
        let (u, _) = steady_solve(sys, None, &settings.newton)?;
        let value = qoi_value(sys, &u, qoi)?;
        let est = dwr_estimate(sys, &u, qoi, &settings.newton.linear)?;
        log::info!("cycle {cycle}: {} dofs, Q = {value:.10e}, estimate {:.3e}", sys.n_dofs(), est.global);
        history.push(AdaptRecord { cycle, n_dofs: sys.n_dofs(), qoi_value: value, estimate: est.global });
        let over_budget = settings.dof_budget.is_some_and(|b| sys.n_dofs() >= b);
        if cycle == settings.cycles || over_budget {
            return Ok(AdaptResult { history, solution: u, estimate: est });
        }
        let mut active = sys.mesh().active_ids();
        active.sort_by(|&a, &b| est.indicators[b].total_cmp(&est.indicators[a]).then(a.cmp(&b)));
        let n_flag = ((settings.fraction * active.len() as f64).ceil() as usize).max(1);
        let flags: BTreeSet<usize> = active.into_iter().take(n_flag).collect();
        let mesh = sys.mesh().refine(&flags)?;
        sys.remesh(mesh)?;
        cycle += 1;
    }
}

/// Relative central-difference step for parameter derivatives.
pub const SENSITIVITY_STEP: f64 = 1e-6;

/// `dQ/dtheta = dQ/dtheta|_u - p . dR/dtheta|_u` for each parameter, with the
/// partial derivatives taken by central differences of assembled quantities.
pub fn qoi_sensitivity(
    sys: &mut System,
    u: &[f64],
    adjoint: &AdjointSolution,
    qoi: &mut dyn QoiKernel,
    params: &[ParameterHandle],
) -> Result<Vec<f64>> {
    qoi.init(sys.physics.variables())?;
    qoi.prepare(sys.mesh())?;
    let mut grad = Vec::with_capacity(params.len());
    for h in params {
        let theta = sys.physics.parameter(h)?;
        let step = if theta == 0.0 { SENSITIVITY_STEP } else { SENSITIVITY_STEP * theta.abs() };
        let mut eval = |value: f64| -> Result<(f64, Vec<f64>)> {
            sys.physics.set_parameter(h, value)?;
            let q = evaluate_qoi(&sys.disc, &sys.physics, u, qoi)?;
            let r = raw_residual(&sys.disc, &sys.physics, &State::steady(u))?;
            Ok((q, r))
        };
        let plus = eval(theta + step);
        let minus = eval(theta - step);
        sys.physics.set_parameter(h, theta)?;
        let ((qp, rp), (qm, rm)) = (plus?, minus?);
        let dq = (qp - qm) / (2.0 * step);
        let pdr: f64 = adjoint.p.iter().zip(rp.iter().zip(&rm)).map(|(p, (a, b))| p * (a - b)).sum::<f64>() / (2.0 * step);
        grad.push(dq - pdr);
    }
    Ok(grad)
}
