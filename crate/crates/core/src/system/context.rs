use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fe::{gauss_rule, FeValues, Order, QuadratureRule};
use crate::mesh::{BoundaryId, Mesh};

/// Which group of operators is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Mass and time-derivative terms, evaluated at `u_theta`, `t_theta`.
    TimeDerivative,
    /// Constraint terms, evaluated at `u_next`, `t_next`.
    Constraint,
}

#[derive(Debug, Clone)]
pub(crate) struct SideData {
    pub side: usize,
    pub ids: BTreeSet<BoundaryId>,
    pub fe: [Option<FeValues>; 2],
}

/// Read-only per-element workspace handed to kernels.
///
/// Coefficient accessors return the state of the current phase. Jacobian
/// contributions must be scaled by `solution_derivative` (for dependence on
/// the state) and `rate_derivative` (for dependence on `u_dot`).
#[derive(Debug, Clone)]
pub struct ElemContext<'a> {
    pub elem: usize,
    pub subdomain: i32,
    mesh: &'a Mesh,
    orders: Vec<Order>,
    offsets: Vec<usize>,
    n_local: Vec<usize>,
    interior: [Option<FeValues>; 2],
    pub(crate) side: Option<SideData>,
    side_rule: QuadratureRule,
    /// Local state of the current phase, concatenated by variable.
    pub(crate) u: Vec<f64>,
    pub(crate) u_dot: Vec<f64>,
    pub(crate) u_theta: Vec<f64>,
    pub(crate) u_next: Vec<f64>,
    pub(crate) phase: Phase,
    pub(crate) t_theta: f64,
    pub(crate) t_next: f64,
    pub(crate) theta: f64,
    pub(crate) inv_dt: f64,
    pub time: f64,
    pub solution_derivative: f64,
    pub rate_derivative: f64,
}

fn slot(order: Order) -> usize {
    match order {
        Order::First => 0,
        Order::Second => 1,
    }
}

impl<'a> ElemContext<'a> {
    /// `n_local[v]` is the number of dofs of variable `v` on this element (0 if absent).
    pub(crate) fn new(
        mesh: &'a Mesh,
        elem: usize,
        orders: &[Order],
        n_local: Vec<usize>,
        quad_order: usize,
    ) -> Result<ElemContext<'a>> {
        let rule = gauss_rule(2, quad_order)?;
        let side_rule = gauss_rule(1, quad_order)?;
        let mut interior: [Option<FeValues>; 2] = [None, None];
        for (v, &o) in orders.iter().enumerate() {
            if n_local[v] > 0 && interior[slot(o)].is_none() {
                interior[slot(o)] = Some(FeValues::reinit_interior(mesh, elem, o, &rule)?);
            }
        }
        let mut offsets = Vec::with_capacity(orders.len());
        let mut total = 0;
        for &n in &n_local {
            offsets.push(total);
            total += n;
        }
        Ok(ElemContext {
            elem,
            subdomain: mesh.element(elem).subdomain,
            mesh,
            orders: orders.to_vec(),
            offsets,
            n_local,
            interior,
            side: None,
            side_rule,
            u: vec![0.0; total],
            u_dot: vec![0.0; total],
            u_theta: vec![0.0; total],
            u_next: vec![0.0; total],
            phase: Phase::TimeDerivative,
            t_theta: 0.0,
            t_next: 0.0,
            theta: 1.0,
            inv_dt: 0.0,
            time: 0.0,
            solution_derivative: 1.0,
            rate_derivative: 0.0,
        })
    }

    /// Load the local states. `u_old` is `None` in steady mode.
    pub(crate) fn set_state(&mut self, u_next: &[f64], u_old: Option<&[f64]>, theta: f64, dt: f64, t_next: f64) {
        self.u_next.copy_from_slice(u_next);
        match u_old {
            Some(old) => {
                for i in 0..u_next.len() {
                    self.u_theta[i] = theta * u_next[i] + (1.0 - theta) * old[i];
                    self.u_dot[i] = (u_next[i] - old[i]) / dt;
                }
                self.theta = theta;
                self.inv_dt = 1.0 / dt;
                self.t_theta = t_next - (1.0 - theta) * dt;
            }
            None => {
                self.u_theta.copy_from_slice(u_next);
                self.u_dot.iter_mut().for_each(|x| *x = 0.0);
                self.theta = 1.0;
                self.inv_dt = 0.0;
                self.t_theta = t_next;
            }
        }
        self.t_next = t_next;
        self.set_phase(self.phase);
    }

    pub(crate) fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
        match phase {
            Phase::TimeDerivative => {
                self.u.copy_from_slice(&self.u_theta);
                self.time = self.t_theta;
                self.solution_derivative = self.theta;
                self.rate_derivative = self.inv_dt;
            }
            Phase::Constraint => {
                self.u.copy_from_slice(&self.u_next);
                self.time = self.t_next;
                self.solution_derivative = 1.0;
                self.rate_derivative = 0.0;
            }
        }
    }

    pub(crate) fn set_side(&mut self, side: usize, ids: BTreeSet<BoundaryId>) -> Result<()> {
        let mut fe: [Option<FeValues>; 2] = [None, None];
        for (v, &o) in self.orders.iter().enumerate() {
            if self.n_local[v] > 0 && fe[slot(o)].is_none() {
                fe[slot(o)] = Some(FeValues::reinit_side(self.mesh, self.elem, side, o, &self.side_rule)?);
            }
        }
        self.side = Some(SideData { side, ids, fe });
        Ok(())
    }

    pub(crate) fn clear_side(&mut self) {
        self.side = None;
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn n_vars(&self) -> usize {
        self.orders.len()
    }

    pub fn order(&self, var: usize) -> Order {
        self.orders[var]
    }

    /// Local dof count of `var` (0 when the variable is absent on this element).
    pub fn n_dofs(&self, var: usize) -> usize {
        self.n_local[var]
    }

    pub fn n_local(&self) -> usize {
        self.u.len()
    }

    pub fn offset(&self, var: usize) -> usize {
        self.offsets[var]
    }

    pub fn has_var(&self, var: usize) -> bool {
        self.n_local[var] > 0
    }

    pub fn coeffs(&self, var: usize) -> &[f64] {
        &self.u[self.offsets[var]..self.offsets[var] + self.n_local[var]]
    }

    pub fn rate_coeffs(&self, var: usize) -> &[f64] {
        &self.u_dot[self.offsets[var]..self.offsets[var] + self.n_local[var]]
    }

    pub fn fe(&self, var: usize) -> &FeValues {
        self.interior[slot(self.orders[var])].as_ref().expect("variable is active on this element")
    }

    /// Any interior values; geometry (points, weights) is shared by all orders.
    pub fn geometry(&self) -> &FeValues {
        self.interior.iter().flatten().next().expect("element has at least one variable")
    }

    pub fn n_qp(&self) -> usize {
        self.geometry().n_qp()
    }

    pub fn value(&self, var: usize, q: usize) -> f64 {
        self.fe(var).value(self.coeffs(var), q)
    }

    pub fn gradient(&self, var: usize, q: usize) -> [f64; 2] {
        self.fe(var).gradient(self.coeffs(var), q)
    }

    pub fn rate(&self, var: usize, q: usize) -> f64 {
        self.fe(var).value(self.rate_coeffs(var), q)
    }

    pub fn side(&self) -> Option<usize> {
        self.side.as_ref().map(|s| s.side)
    }

    pub fn side_ids(&self) -> Option<&BTreeSet<BoundaryId>> {
        self.side.as_ref().map(|s| &s.ids)
    }

    pub fn side_fe(&self, var: usize) -> &FeValues {
        self.side.as_ref().expect("side operator outside side assembly").fe[slot(self.orders[var])]
            .as_ref()
            .expect("variable is active on this element")
    }

    pub fn side_geometry(&self) -> &FeValues {
        self.side.as_ref().expect("side operator outside side assembly").fe.iter().flatten().next().unwrap()
    }

    pub fn side_value(&self, var: usize, q: usize) -> f64 {
        self.side_fe(var).value(self.coeffs(var), q)
    }

    pub fn side_gradient(&self, var: usize, q: usize) -> [f64; 2] {
        self.side_fe(var).gradient(self.coeffs(var), q)
    }
}

/// Local residual and Jacobian accumulators with per-kernel access control.
#[derive(Debug, Clone)]
pub struct LocalAccum {
    offsets: Vec<usize>,
    n: usize,
    pub(crate) residual: Vec<f64>,
    pub(crate) jacobian: Vec<f64>,
    allowed: Vec<bool>,
    kernel: String,
    violation: Option<String>,
}

impl LocalAccum {
    pub(crate) fn new(ctx: &ElemContext<'_>) -> LocalAccum {
        let n = ctx.n_local();
        LocalAccum {
            offsets: ctx.offsets.clone(),
            n,
            residual: vec![0.0; n],
            jacobian: vec![0.0; n * n],
            allowed: vec![true; ctx.n_vars()],
            kernel: String::new(),
            violation: None,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.residual.iter_mut().for_each(|x| *x = 0.0);
        self.jacobian.iter_mut().for_each(|x| *x = 0.0);
    }

    pub(crate) fn permit(&mut self, kernel: &str, vars: &[usize]) {
        self.kernel.clear();
        self.kernel.push_str(kernel);
        self.allowed.iter_mut().for_each(|a| *a = false);
        for &v in vars {
            self.allowed[v] = true;
        }
    }

    pub(crate) fn check(&mut self) -> Result<()> {
        match self.violation.take() {
            Some(msg) => Err(Error::Internal(msg)),
            None => Ok(()),
        }
    }

    fn deny(&mut self, var: usize) {
        if self.violation.is_none() {
            self.violation = Some(format!("kernel '{}' wrote to undeclared variable block {var}", self.kernel));
        }
    }

    #[inline]
    pub fn add_residual(&mut self, var: usize, i: usize, v: f64) {
        if !self.allowed[var] {
            self.deny(var);
            return;
        }
        self.residual[self.offsets[var] + i] += v;
    }

    #[inline]
    pub fn add_jacobian(&mut self, var_i: usize, i: usize, var_j: usize, j: usize, v: f64) {
        if !self.allowed[var_i] || !self.allowed[var_j] {
            self.deny(if self.allowed[var_i] { var_j } else { var_i });
            return;
        }
        let (r, c) = (self.offsets[var_i] + i, self.offsets[var_j] + j);
        self.jacobian[r * self.n + c] += v;
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// Row-major local Jacobian.
    pub fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }
}
