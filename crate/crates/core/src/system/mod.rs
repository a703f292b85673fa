//! Multiphysics systems: kernels, element assembly and Jacobian checks.
//!
//! Every kernel adds to one residual with the layout
//!
//! ```text
//! R(u) = M(u_theta, u_dot) - F(u_theta) + G(u_next) = 0
//! ```
//!
//! `mass_residual` adds `M`, `element_time_derivative` and
//! `side_time_derivative` add `-F`, and `element_constraint` and
//! `side_constraint` add `G`. In steady mode `M` is skipped, `u_dot = 0`
//! and both states are the current iterate. In transient mode
//! `u_theta = theta u_next + (1 - theta) u_n` and `u_dot = (u_next - u_n) / dt`,
//! with `M` and `F` evaluated at `t_n + theta dt` and `G` and Dirichlet data
//! at `t_{n+1}`.

mod assembly;
mod context;

use std::collections::{BTreeMap, BTreeSet};

pub use assembly::{
    assemble, assemble_in_order, element_contributions, fd_element_jacobian, verify_jacobian, Assembly, ElementEval, JacobianReport, Want,
};
pub use context::{ElemContext, LocalAccum, Phase};

use crate::dofs::{Constraints, DirichletSpec, DofMap, Variable};
use crate::error::{Error, Result};
use crate::fe::{tensor_rule, FeValues};
use crate::mesh::{BoundaryId, Mesh, SubdomainId};

/// Time discretization weights for one residual evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWeights {
    pub transient: bool,
    pub theta: f64,
    pub dt: f64,
}

impl TimeWeights {
    pub fn steady() -> TimeWeights {
        TimeWeights { transient: false, theta: 1.0, dt: 0.0 }
    }

    pub fn theta(theta: f64, dt: f64) -> TimeWeights {
        TimeWeights { transient: true, theta, dt }
    }
}

/// The global state a residual is evaluated at.
#[derive(Debug, Clone, Copy)]
pub struct State<'a> {
    /// The unknown: `u_{n+1}` in transient mode, `u` when steady.
    pub u: &'a [f64],
    /// `u_n`; ignored when steady.
    pub u_old: Option<&'a [f64]>,
    /// `t_{n+1}` (or the steady evaluation time).
    pub time: f64,
    pub weights: TimeWeights,
}

impl<'a> State<'a> {
    pub fn steady(u: &'a [f64]) -> State<'a> {
        State { u, u_old: None, time: 0.0, weights: TimeWeights::steady() }
    }

    pub fn transient(u: &'a [f64], u_old: &'a [f64], time: f64, theta: f64, dt: f64) -> State<'a> {
        State { u, u_old: Some(u_old), time, weights: TimeWeights::theta(theta, dt) }
    }
}

/// Fix the value of `variable` at the node nearest to `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPin {
    pub variable: String,
    pub point: [f64; 2],
    pub value: f64,
}

/// The element-level operators of one piece of physics. All operators
/// default to no-ops.
pub trait PhysicsKernel: Send + Sync {
    fn name(&self) -> &str;

    /// Variables this kernel introduces.
    fn variables(&self) -> Vec<Variable> {
        Vec::new()
    }

    /// Variables this kernel reads or writes but expects another kernel to introduce.
    fn coupled_variables(&self) -> Vec<String> {
        Vec::new()
    }

    /// Resolve variable names to indices in `variables`.
    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        let _ = variables;
        Ok(())
    }

    fn active_subdomains(&self) -> Option<&BTreeSet<SubdomainId>> {
        None
    }

    /// Boundary ids whose sides the side operators visit.
    fn side_ids(&self) -> BTreeSet<BoundaryId> {
        BTreeSet::new()
    }

    /// Whether the operators below fill the Jacobian; otherwise it is built by finite differences.
    fn analytic_jacobian(&self) -> bool {
        true
    }

    fn mass_residual(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let _ = (ctx, out, jacobian);
        Ok(())
    }

    fn element_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let _ = (ctx, out, jacobian);
        Ok(())
    }

    fn side_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let _ = (ctx, out, jacobian);
        Ok(())
    }

    fn element_constraint(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let _ = (ctx, out, jacobian);
        Ok(())
    }

    fn side_constraint(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let _ = (ctx, out, jacobian);
        Ok(())
    }

    fn parameters(&self) -> Vec<String> {
        Vec::new()
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        let _ = name;
        None
    }

    /// Returns false when the kernel has no such parameter.
    fn set_parameter(&mut self, name: &str, value: f64) -> bool {
        let _ = (name, value);
        false
    }

    fn dirichlet(&self) -> Vec<DirichletSpec> {
        Vec::new()
    }

    fn pins(&self) -> Vec<PointPin> {
        Vec::new()
    }
}

/// `kernel/parameter`, e.g. `Poisson/kappa`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParameterHandle {
    pub kernel: String,
    pub name: String,
}

impl ParameterHandle {
    pub fn new(kernel: impl Into<String>, name: impl Into<String>) -> ParameterHandle {
        ParameterHandle { kernel: kernel.into(), name: name.into() }
    }

    pub fn parse(path: &str) -> Result<ParameterHandle> {
        match path.trim().rsplit_once('/') {
            Some((k, n)) if !k.is_empty() && !n.is_empty() => Ok(ParameterHandle::new(k, n)),
            _ => Err(Error::config(path, "parameter handles have the form 'Kernel/parameter'")),
        }
    }
}

impl std::fmt::Display for ParameterHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.kernel, self.name)
    }
}

/// An ordered list of kernels and the variables they define.
pub struct Physics {
    kernels: Vec<Box<dyn PhysicsKernel>>,
    variables: Vec<Variable>,
    /// Variable indices each kernel may touch.
    pub(crate) permissions: Vec<Vec<usize>>,
    /// Build every element Jacobian by finite differences.
    pub fd_jacobian: bool,
}

impl std::fmt::Debug for Physics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Physics")
            .field("kernels", &self.kernels.iter().map(|k| k.name().to_string()).collect::<Vec<_>>())
            .field("variables", &self.variables)
            .finish()
    }
}

impl Physics {
    pub fn new(mut kernels: Vec<Box<dyn PhysicsKernel>>) -> Result<Physics> {
        if kernels.is_empty() {
            return Err(Error::config("Physics/enabled_physics", "no physics enabled"));
        }
        let mut variables: Vec<Variable> = Vec::new();
        for k in &kernels {
            for v in k.variables() {
                match variables.iter().find(|w| w.name == v.name) {
                    Some(w) if w.order != v.order => {
                        return Err(Error::config(
                            format!("Physics/{}", k.name()),
                            format!("variable '{}' redeclared with order {:?} (was {:?})", v.name, v.order, w.order),
                        ))
                    }
                    Some(_) => {}
                    None => variables.push(v),
                }
            }
        }
        let mut permissions = Vec::new();
        for k in kernels.iter_mut() {
            let mut idx = Vec::new();
            let names = k.variables().into_iter().map(|v| v.name).chain(k.coupled_variables());
            for name in names {
                match variables.iter().position(|v| v.name == name) {
                    Some(i) => idx.push(i),
                    None => {
                        return Err(Error::config(
                            format!("Physics/{}", k.name()),
                            format!("unknown coupled variable '{name}'"),
                        ))
                    }
                }
            }
            k.init(&variables)?;
            permissions.push(idx);
        }
        Ok(Physics { kernels, variables, permissions, fd_jacobian: false })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn kernels(&self) -> &[Box<dyn PhysicsKernel>] {
        &self.kernels
    }

    pub fn kernel(&self, name: &str) -> Option<&dyn PhysicsKernel> {
        self.kernels.iter().find(|k| k.name() == name).map(|k| k.as_ref())
    }

    pub fn kernel_mut(&mut self, name: &str) -> Option<&mut Box<dyn PhysicsKernel>> {
        self.kernels.iter_mut().find(|k| k.name() == name)
    }

    pub fn parameter(&self, h: &ParameterHandle) -> Result<f64> {
        self.kernel(&h.kernel)
            .ok_or_else(|| Error::config(h.to_string(), format!("no physics named '{}'", h.kernel)))?
            .parameter(&h.name)
            .ok_or_else(|| Error::config(h.to_string(), format!("'{}' has no parameter '{}'", h.kernel, h.name)))
    }

    pub fn set_parameter(&mut self, h: &ParameterHandle, value: f64) -> Result<()> {
        let k = self
            .kernel_mut(&h.kernel)
            .ok_or_else(|| Error::config(h.to_string(), format!("no physics named '{}'", h.kernel)))?;
        if k.set_parameter(&h.name, value) {
            Ok(())
        } else {
            Err(Error::config(h.to_string(), format!("'{}' has no parameter '{}'", h.kernel, h.name)))
        }
    }

    /// Every parameter of every kernel.
    pub fn parameter_handles(&self) -> Vec<ParameterHandle> {
        self.kernels.iter().flat_map(|k| k.parameters().into_iter().map(|p| ParameterHandle::new(k.name(), p))).collect()
    }

    pub fn max_order(&self) -> usize {
        self.variables.iter().map(|v| v.order.degree()).max().unwrap_or(1)
    }
}

/// Mesh plus dof layout; physics-independent so the same kernels can be
/// assembled on an enriched mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub hanging: Constraints,
    pub quad_order: usize,
}

impl Discretization {
    /// `quad_order` defaults to `2 * max_order + 1`.
    pub fn new(mesh: Mesh, variables: &[Variable], quad_order: Option<usize>) -> Result<Discretization> {
        let dofs = DofMap::distribute(&mesh, variables)?;
        let hanging = Constraints::hanging(&mesh, &dofs)?;
        let max = variables.iter().map(|v| v.order.degree()).max().unwrap_or(1);
        Ok(Discretization { mesh, dofs, hanging, quad_order: quad_order.unwrap_or(2 * max + 1) })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    /// Hanging, Dirichlet and pin rows at time `t`.
    pub fn constraints(&self, physics: &Physics, t: f64) -> Result<Constraints> {
        let specs: Vec<DirichletSpec> = physics.kernels.iter().flat_map(|k| k.dirichlet()).collect();
        let mut pins = Vec::new();
        for k in &physics.kernels {
            for pin in k.pins() {
                pins.push((self.pin_dof(&pin, k.name())?, pin.value));
            }
        }
        Constraints::build(&self.mesh, &self.dofs, &self.hanging, &specs, &pins, t)
    }

    fn pin_dof(&self, pin: &PointPin, kernel: &str) -> Result<usize> {
        let key = format!("Physics/{kernel}/pin_location");
        let var = self
            .dofs
            .variable_index(&pin.variable)
            .ok_or_else(|| Error::config(&key, format!("unknown variable '{}'", pin.variable)))?;
        let dist = |d: usize| {
            let p = self.mesh.point(self.dofs.dof_node(d));
            (p[0] - pin.point[0]).hypot(p[1] - pin.point[1])
        };
        self.dofs
            .var_range(var)
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
            .ok_or_else(|| Error::config(&key, format!("variable '{}' has no dofs", pin.variable)))
    }

    /// Interpolate nodal values from a function of position, per variable.
    pub fn interpolate(&self, f: impl Fn(usize, [f64; 2]) -> f64) -> Vec<f64> {
        (0..self.n_dofs()).map(|d| f(self.dofs.dof_variable(d), self.mesh.point(self.dofs.dof_node(d)))).collect()
    }
}

/// Physics bound to a discretization.
#[derive(Debug)]
pub struct System {
    pub physics: Physics,
    pub disc: Discretization,
}

impl System {
    pub fn new(physics: Physics, mesh: Mesh, quad_order: Option<usize>) -> Result<System> {
        let disc = Discretization::new(mesh, physics.variables(), quad_order)?;
        Ok(System { physics, disc })
    }

    pub fn n_dofs(&self) -> usize {
        self.disc.n_dofs()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.disc.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.disc.dofs
    }

    pub fn constraints(&self, t: f64) -> Result<Constraints> {
        self.disc.constraints(&self.physics, t)
    }

    pub fn assemble(&self, constraints: &Constraints, state: &State<'_>, want: Want) -> Result<Assembly> {
        assemble(&self.disc, &self.physics, constraints, state, want)
    }

    /// Replace the mesh, keeping the physics.
    pub fn remesh(&mut self, mesh: Mesh) -> Result<()> {
        self.disc = Discretization::new(mesh, self.physics.variables(), Some(self.disc.quad_order))?;
        Ok(())
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.disc.dofs.variable_index(name)
    }

    /// `||u_h - exact||` in L2 for one variable over the active elements.
    pub fn l2_error(&self, u: &[f64], var: usize, exact: impl Fn(f64, f64) -> f64) -> Result<f64> {
        let order = self.physics.variables()[var].order;
        let rule = tensor_rule(2, self.disc.quad_order / 2 + 2);
        let mut sum = 0.0;
        for e in self.mesh().active_elements() {
            let dofs = self.dofs().dof_indices(e.id, var);
            if dofs.is_empty() {
                continue;
            }
            let fe = FeValues::reinit_interior(self.mesh(), e.id, order, &rule)?;
            let c: Vec<f64> = dofs.iter().map(|&d| u[d]).collect();
            for q in 0..fe.n_qp() {
                let x = fe.xyz[q];
                let diff = fe.value(&c, q) - exact(x[0], x[1]);
                sum += fe.jxw[q] * diff * diff;
            }
        }
        Ok(sum.sqrt())
    }

    /// Nodal field per variable name, in declaration order.
    pub fn nodal_fields(&self, u: &[f64]) -> BTreeMap<String, Vec<f64>> {
        self.physics
            .variables()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), self.disc.dofs.nodal_field(i, u, &self.disc.mesh)))
            .collect()
    }
}
