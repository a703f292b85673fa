use std::collections::BTreeSet;

use super::{bc_list, var_index, Section};
use crate::dofs::{DirichletSpec, Variable};
use crate::error::Result;
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::system::{ElemContext, LocalAccum, PhysicsKernel};

/// `rho_cp u_t - div(kappa grad u) = s`, with Dirichlet and Neumann (`kappa du/dn = h`) data.
#[derive(Debug, Clone)]
pub struct Poisson {
    pub name: String,
    pub variable: String,
    pub order: Order,
    pub kappa: f64,
    pub rho_cp: f64,
    /// Source over `(x, y, t, kappa)`.
    pub source: SpaceTimeFn,
    pub subdomains: Option<BTreeSet<i32>>,
    pub dirichlet: Vec<DirichletSpec>,
    pub neumann: Vec<(i32, SpaceTimeFn)>,
    var: usize,
}

impl Poisson {
    pub fn new(variable: &str, order: Order, kappa: f64, source: &str) -> Result<Poisson> {
        Ok(Poisson {
            name: "Poisson".into(),
            variable: variable.into(),
            order,
            kappa,
            rho_cp: 1.0,
            source: SpaceTimeFn::parse(source, &["kappa"])?,
            subdomains: None,
            dirichlet: Vec::new(),
            neumann: Vec::new(),
            var: 0,
        })
    }

    /// Dirichlet data `value` on `ids`.
    pub fn with_dirichlet(mut self, ids: &[i32], value: &str) -> Result<Poisson> {
        self.dirichlet.push(DirichletSpec {
            boundary_ids: ids.to_vec(),
            variable: self.variable.clone(),
            value: SpaceTimeFn::parse(value, &[])?,
            key: format!("Physics/{}/bc_value", self.name),
        });
        Ok(self)
    }

    pub fn with_neumann(mut self, id: i32, flux: &str) -> Result<Poisson> {
        self.neumann.push((id, SpaceTimeFn::parse(flux, &[])?));
        Ok(self)
    }

    pub fn from_input(sec: &Section<'_>, name: &str) -> Result<Poisson> {
        let variable = sec.string("variable", "u");
        let mut p = Poisson::new(&variable, sec.order("order", "FIRST")?, sec.scalar("kappa", 1.0)?, "0")?;
        sec.family("FE_family")?;
        p.name = name.to_string();
        p.rho_cp = sec.scalar("rho_cp", 1.0)?;
        p.source = sec.expr("source", "0", &["kappa"])?;
        p.subdomains = sec.subdomains()?;
        for (id, kind) in bc_list(sec, &["dirichlet", "neumann"])? {
            let value = sec.expr(&format!("bc_value_{id}"), "0", &[])?;
            if kind == "dirichlet" {
                p.dirichlet.push(DirichletSpec {
                    boundary_ids: vec![id],
                    variable: variable.clone(),
                    value,
                    key: sec.key(&format!("bc_value_{id}")),
                });
            } else {
                p.neumann.push((id, value));
            }
        }
        Ok(p)
    }
}

impl PhysicsKernel for Poisson {
    fn name(&self) -> &str {
        &self.name
    }

    fn variables(&self) -> Vec<Variable> {
        let mut v = Variable::new(&self.variable, self.order);
        v.subdomains = self.subdomains.clone();
        vec![v]
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = var_index(variables, &self.variable, &self.name)?;
        Ok(())
    }

    fn active_subdomains(&self) -> Option<&BTreeSet<i32>> {
        self.subdomains.as_ref()
    }

    fn side_ids(&self) -> BTreeSet<i32> {
        self.neumann.iter().map(|(id, _)| *id).collect()
    }

    fn mass_residual(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let v = self.var;
        let fe = ctx.fe(v);
        let n = ctx.n_dofs(v);
        for q in 0..fe.n_qp() {
            let w = fe.jxw[q] * self.rho_cp;
            let udot = ctx.rate(v, q);
            for i in 0..n {
                out.add_residual(v, i, w * udot * fe.phi[i][q]);
                if jacobian {
                    for j in 0..n {
                        out.add_jacobian(v, i, v, j, w * fe.phi[j][q] * fe.phi[i][q] * ctx.rate_derivative);
                    }
                }
            }
        }
        Ok(())
    }

    fn element_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let v = self.var;
        let fe = ctx.fe(v);
        let n = ctx.n_dofs(v);
        for q in 0..fe.n_qp() {
            let w = fe.jxw[q];
            let g = ctx.gradient(v, q);
            let x = fe.xyz[q];
            let s = self.source.eval_with(x[0], x[1], ctx.time, &[self.kappa])?;
            for i in 0..n {
                let d = fe.dphi[i][q];
                out.add_residual(v, i, w * (self.kappa * (g[0] * d[0] + g[1] * d[1]) - s * fe.phi[i][q]));
                if jacobian {
                    for j in 0..n {
                        let dj = fe.dphi[j][q];
                        out.add_jacobian(v, i, v, j, w * (self.kappa * (dj[0] * d[0] + dj[1] * d[1])) * ctx.solution_derivative);
                    }
                }
            }
        }
        Ok(())
    }

    fn side_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, _jacobian: bool) -> Result<()> {
        let ids = ctx.side_ids().expect("side assembly");
        let v = self.var;
        let fe = ctx.side_fe(v);
        for (id, flux) in &self.neumann {
            if !ids.contains(id) {
                continue;
            }
            for q in 0..fe.n_qp() {
                let x = fe.xyz[q];
                let h = flux.eval(x[0], x[1], ctx.time)?;
                for i in 0..ctx.n_dofs(v) {
                    out.add_residual(v, i, -fe.jxw[q] * h * fe.phi[i][q]);
                }
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Vec<String> {
        vec!["kappa".into(), "rho_cp".into()]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "kappa" => Some(self.kappa),
            "rho_cp" => Some(self.rho_cp),
            _ => None,
        }
    }

    fn set_parameter(&mut self, name: &str, value: f64) -> bool {
        match name {
            "kappa" => self.kappa = value,
            "rho_cp" => self.rho_cp = value,
            _ => return false,
        }
        true
    }

    fn dirichlet(&self) -> Vec<DirichletSpec> {
        self.dirichlet.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::testing::{check_jacobians, random_vec, system};
    use crate::mesh::ElemKind;
    use crate::system::{State, Want};

    fn poisson(kappa: f64, source: &str) -> Box<dyn PhysicsKernel> {
        Box::new(Poisson::new("u", Order::First, kappa, source).unwrap())
    }

    #[test]
    fn one_element_stiffness_row() {
        let sys = system(vec![poisson(1.0, "0")], 1, ElemKind::Quad4);
        let c = crate::dofs::Constraints::new();
        // Stiffness row 0 of the unit-square bilinear element, applied to e_0.
        let mut u = vec![0.0; 4];
        u[0] = 1.0;
        let a = sys.assemble(&c, &State::steady(&u), Want::Both).unwrap();
        let expect = [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0];
        for k in 0..4 {
            assert!((a.residual[k] - expect[k]).abs() < 1e-14);
        }
        let x: Vec<f64> = (0..4).map(|d| sys.mesh().point(sys.dofs().dof_node(d))[0]).collect();
        let r = sys.assemble(&c, &State::steady(&x), Want::Residual).unwrap().residual;
        let k = a.jacobian.unwrap();
        let kx = k.mul_vec(&x);
        for i in 0..4 {
            assert!((r[i] - kx[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_field_has_zero_interior_residual() {
        for kind in [ElemKind::Quad4, ElemKind::Quad9] {
            let order = if kind == ElemKind::Quad4 { Order::First } else { Order::Second };
            let k: Box<dyn PhysicsKernel> = Box::new(Poisson::new("u", order, 1.0, "0").unwrap());
            let sys = system(vec![k], 3, kind);
            let u = sys.disc.interpolate(|_, p| 1.0 + 2.0 * p[0] - 0.5 * p[1]);
            let r = sys.assemble(&Default::default(), &State::steady(&u), Want::Residual).unwrap().residual;
            for d in 0..sys.n_dofs() {
                let p = sys.mesh().point(sys.dofs().dof_node(d));
                if p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0 {
                    assert!(r[d].abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn residual_scales_with_kappa() {
        let u = random_vec(16, 3);
        let r1 = system(vec![poisson(1.0, "0")], 3, ElemKind::Quad4)
            .assemble(&Default::default(), &State::steady(&u), Want::Residual)
            .unwrap()
            .residual;
        let r2 = system(vec![poisson(2.0, "0")], 3, ElemKind::Quad4)
            .assemble(&Default::default(), &State::steady(&u), Want::Residual)
            .unwrap()
            .residual;
        for i in 0..16 {
            assert!((r2[i] - 2.0 * r1[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn neumann_flux_loads_the_side() {
        let k = Poisson::new("u", Order::First, 1.0, "0").unwrap().with_neumann(1, "2").unwrap();
        let sys = system(vec![Box::new(k)], 1, ElemKind::Quad4);
        let r = sys.assemble(&Default::default(), &State::steady(&[0.0; 4]), Want::Residual).unwrap().residual;
        // Right side carries nodes 1 and 3; each gets -h * 1/2.
        for (a, b) in r.iter().zip([0.0, -1.0, 0.0, -1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobians_verify() {
        let k = Poisson::new("u", Order::Second, 1.7, "sin(x)*t").unwrap().with_neumann(0, "x").unwrap();
        check_jacobians(&system(vec![Box::new(k)], 2, ElemKind::Quad9), 1e-6, 3);
    }
}
