use std::collections::{BTreeMap, BTreeSet};

use crate::dofs::Variable;
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::{tensor_rule, FeValues, Geometry};
use crate::mesh::{BoundaryId, Mesh};
use crate::system::ElemContext;

/// A scalar functional of the solution, assembled element by element.
///
/// Value and derivative operators see the same context as physics kernels;
/// derivative operators add `dQ/du_i` for the local dofs into `out`.
pub trait QoiKernel: Send + Sync {
    fn name(&self) -> &str;

    fn init(&mut self, variables: &[Variable]) -> Result<()>;

    /// Called before evaluation whenever the mesh may have changed.
    fn prepare(&mut self, mesh: &Mesh) -> Result<()> {
        let _ = mesh;
        Ok(())
    }

    fn assemble_on_interior(&self) -> bool {
        false
    }

    fn assemble_on_sides(&self) -> bool {
        false
    }

    /// Boundary ids visited when `assemble_on_sides` is set.
    fn side_ids(&self) -> BTreeSet<BoundaryId> {
        BTreeSet::new()
    }

    fn element_qoi(&self, ctx: &ElemContext<'_>) -> Result<f64> {
        let _ = ctx;
        Ok(0.0)
    }

    fn element_qoi_derivative(&self, ctx: &ElemContext<'_>, out: &mut [f64]) -> Result<()> {
        let _ = (ctx, out);
        Ok(())
    }

    fn side_qoi(&self, ctx: &ElemContext<'_>) -> Result<f64> {
        let _ = ctx;
        Ok(0.0)
    }

    fn side_qoi_derivative(&self, ctx: &ElemContext<'_>, out: &mut [f64]) -> Result<()> {
        let _ = (ctx, out);
        Ok(())
    }
}

fn find_var(variables: &[Variable], name: &str, qoi: &str) -> Result<usize> {
    variables
        .iter()
        .position(|v| v.name == name)
        .ok_or_else(|| Error::config(format!("QoI/{qoi}/variable"), format!("unknown variable '{name}'")))
}

/// `Q = int w(x) u dx`.
#[derive(Debug, Clone)]
pub struct DomainIntegral {
    pub name: String,
    pub variable: String,
    pub weight: SpaceTimeFn,
    var: usize,
}

impl DomainIntegral {
    pub fn new(variable: &str, weight: &str) -> Result<DomainIntegral> {
        Ok(DomainIntegral {
            name: "domain_integral".into(),
            variable: variable.into(),
            weight: SpaceTimeFn::parse(weight, &[])?,
            var: 0,
        })
    }
}

impl QoiKernel for DomainIntegral {
    fn name(&self) -> &str {
        &self.name
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = find_var(variables, &self.variable, &self.name)?;
        Ok(())
    }

    fn assemble_on_interior(&self) -> bool {
        true
    }

    fn element_qoi(&self, ctx: &ElemContext<'_>) -> Result<f64> {
        if !ctx.has_var(self.var) {
            return Ok(0.0);
        }
        let fe = ctx.fe(self.var);
        let mut q = 0.0;
        for k in 0..fe.n_qp() {
            let x = fe.xyz[k];
            q += fe.jxw[k] * self.weight.eval(x[0], x[1], ctx.time)? * ctx.value(self.var, k);
        }
        Ok(q)
    }

    fn element_qoi_derivative(&self, ctx: &ElemContext<'_>, out: &mut [f64]) -> Result<()> {
        if !ctx.has_var(self.var) {
            return Ok(());
        }
        let fe = ctx.fe(self.var);
        let off = ctx.offset(self.var);
        for k in 0..fe.n_qp() {
            let x = fe.xyz[k];
            let w = fe.jxw[k] * self.weight.eval(x[0], x[1], ctx.time)?;
            for i in 0..fe.n_dofs() {
                out[off + i] += w * fe.phi[i][k];
            }
        }
        Ok(())
    }
}

/// `Q = int_Gamma kappa grad u . n ds` over the given boundary ids.
#[derive(Debug, Clone)]
pub struct BoundaryFlux {
    pub name: String,
    pub variable: String,
    pub kappa: f64,
    pub ids: BTreeSet<BoundaryId>,
    var: usize,
}

impl BoundaryFlux {
    pub fn new(variable: &str, kappa: f64, ids: impl IntoIterator<Item = BoundaryId>) -> BoundaryFlux {
        BoundaryFlux { name: "boundary_flux".into(), variable: variable.into(), kappa, ids: ids.into_iter().collect(), var: 0 }
    }

    fn on_side(&self, ctx: &ElemContext<'_>) -> bool {
        ctx.has_var(self.var) && ctx.side_ids().is_some_and(|ids| !ids.is_disjoint(&self.ids))
    }
}

impl QoiKernel for BoundaryFlux {
    fn name(&self) -> &str {
        &self.name
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = find_var(variables, &self.variable, &self.name)?;
        Ok(())
    }

    fn assemble_on_sides(&self) -> bool {
        true
    }

    fn side_ids(&self) -> BTreeSet<BoundaryId> {
        self.ids.clone()
    }

    fn side_qoi(&self, ctx: &ElemContext<'_>) -> Result<f64> {
        if !self.on_side(ctx) {
            return Ok(0.0);
        }
        let fe = ctx.side_fe(self.var);
        let mut q = 0.0;
        for k in 0..fe.n_qp() {
            let g = ctx.side_gradient(self.var, k);
            let n = fe.normals[k];
            q += fe.jxw[k] * self.kappa * (g[0] * n[0] + g[1] * n[1]);
        }
        Ok(q)
    }

    fn side_qoi_derivative(&self, ctx: &ElemContext<'_>, out: &mut [f64]) -> Result<()> {
        if !self.on_side(ctx) {
            return Ok(());
        }
        let fe = ctx.side_fe(self.var);
        let off = ctx.offset(self.var);
        for k in 0..fe.n_qp() {
            let n = fe.normals[k];
            for i in 0..fe.n_dofs() {
                let d = fe.dphi[i][k];
                out[off + i] += fe.jxw[k] * self.kappa * (d[0] * n[0] + d[1] * n[1]);
            }
        }
        Ok(())
    }
}

/// Mollified point value `Q = int k_r(x - x0) u dx` with the bump
/// `k_r(s) = (1 - |s|^2 / r^2)^3 / (pi r^2 / 4)`.
///
/// The bump is integrated with 4x4 sub-cells of 5x5 Gauss points per element,
/// then its zeroth and first discrete moments are corrected so that affine
/// fields are reproduced exactly.
#[derive(Debug, Clone)]
pub struct PointValue {
    pub name: String,
    pub variable: String,
    pub point: [f64; 2],
    /// Support radius; when unset, fixed at the first `prepare` to two widths
    /// of the cell containing the point.
    pub radius: Option<f64>,
    var: usize,
    /// Element -> (reference points, weights).
    weights: BTreeMap<usize, (Vec<[f64; 2]>, Vec<f64>)>,
}

impl PointValue {
    pub fn new(variable: &str, point: [f64; 2], radius: Option<f64>) -> PointValue {
        PointValue {
            name: "point_value".into(),
            variable: variable.into(),
            point,
            radius,
            var: 0,
            weights: BTreeMap::new(),
        }
    }

    fn locate(&self, mesh: &Mesh) -> Option<usize> {
        mesh.active_elements().map(|e| e.id).find(|&e| {
            Geometry::of(mesh, e)
                .inverse_map(self.point)
                .is_some_and(|xi| xi[0].abs() <= 1.0 + 1e-10 && xi[1].abs() <= 1.0 + 1e-10)
        })
    }

    fn bump(&self, r: f64, x: [f64; 2]) -> f64 {
        let s2 = ((x[0] - self.point[0]).powi(2) + (x[1] - self.point[1]).powi(2)) / (r * r);
        if s2 >= 1.0 {
            0.0
        } else {
            (1.0 - s2).powi(3) / (std::f64::consts::PI * r * r / 4.0)
        }
    }

    fn eval_local(&self, ctx: &ElemContext<'_>) -> Result<Option<FeValues>> {
        if !ctx.has_var(self.var) {
            return Ok(None);
        }
        let Some((pts, w)) = self.weights.get(&ctx.elem) else { return Ok(None) };
        FeValues::at_points(ctx.mesh(), ctx.elem, ctx.order(self.var), pts, w).map(Some)
    }
}

impl QoiKernel for PointValue {
    fn name(&self) -> &str {
        &self.name
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = find_var(variables, &self.variable, &self.name)?;
        Ok(())
    }

    fn prepare(&mut self, mesh: &Mesh) -> Result<()> {
        let Some(home) = self.locate(mesh) else {
            return Err(Error::config(
                format!("QoI/{}/point", self.name),
                format!("point ({}, {}) lies outside the mesh", self.point[0], self.point[1]),
            ));
        };
        let r = *self.radius.get_or_insert(2.0 * mesh.h(home));
        let sub = tensor_rule(2, 5);
        let mut raw: Vec<(usize, [f64; 2], f64, [f64; 2])> = Vec::new();
        for e in mesh.active_elements() {
            let geo = Geometry::of(mesh, e.id);
            let near = geo.corners.iter().fold([f64::MAX, f64::MIN, f64::MAX, f64::MIN], |b, c| {
                [b[0].min(c[0]), b[1].max(c[0]), b[2].min(c[1]), b[3].max(c[1])]
            });
            let dx = (near[0] - self.point[0]).max(self.point[0] - near[1]).max(0.0);
            let dy = (near[2] - self.point[1]).max(self.point[1] - near[3]).max(0.0);
            if dx * dx + dy * dy >= r * r {
                continue;
            }
            for a in 0..4 {
                for b in 0..4 {
                    for (p, &w) in sub.points.iter().zip(&sub.weights) {
                        let xi = [-1.0 + 0.25 * (2 * a + 1) as f64 + 0.25 * p[0], -1.0 + 0.25 * (2 * b + 1) as f64 + 0.25 * p[1]];
                        let x = geo.map(xi);
                        let k = self.bump(r, x);
                        if k > 0.0 {
                            let j = geo.jacobian(xi);
                            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                            raw.push((e.id, xi, w * 0.0625 * det * k, [(x[0] - self.point[0]) / r, (x[1] - self.point[1]) / r]));
                        }
                    }
                }
            }
        }
        // Weights w (a + b s_x + c s_y) with unit mass and zero first moments.
        let mut m = [[0.0; 3]; 3];
        for &(_, _, w, s) in &raw {
            let f = [1.0, s[0], s[1]];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += w * f[i] * f[j];
                }
            }
        }
        let coef = solve3(m, [1.0, 0.0, 0.0]).ok_or_else(|| {
            Error::config(format!("QoI/{}/radius", self.name), "mollifier support contains no quadrature points")
        })?;
        self.weights.clear();
        for (e, xi, w, s) in raw {
            let entry = self.weights.entry(e).or_default();
            entry.0.push(xi);
            entry.1.push(w * (coef[0] + coef[1] * s[0] + coef[2] * s[1]));
        }
        Ok(())
    }

    fn assemble_on_interior(&self) -> bool {
        true
    }

    fn element_qoi(&self, ctx: &ElemContext<'_>) -> Result<f64> {
        let Some(fe) = self.eval_local(ctx)? else { return Ok(0.0) };
        let w = &self.weights[&ctx.elem].1;
        let c = ctx.coeffs(self.var);
        Ok((0..fe.n_qp()).map(|k| w[k] * fe.value(c, k)).sum())
    }

    fn element_qoi_derivative(&self, ctx: &ElemContext<'_>, out: &mut [f64]) -> Result<()> {
        let Some(fe) = self.eval_local(ctx)? else { return Ok(()) };
        let w = &self.weights[&ctx.elem].1;
        let off = ctx.offset(self.var);
        for k in 0..fe.n_qp() {
            for i in 0..fe.n_dofs() {
                out[off + i] += w[k] * fe.phi[i][k];
            }
        }
        Ok(())
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        x[c] = (b[c] - (c + 1..3).map(|k| a[c][k] * x[k]).sum::<f64>()) / a[c][c];
    }
    Some(x)
}
