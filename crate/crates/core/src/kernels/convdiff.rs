use std::collections::BTreeSet;

use super::{bc_list, var_index, Section};
use crate::dofs::{DirichletSpec, Variable};
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::system::{ElemContext, LocalAccum, PhysicsKernel};

#[derive(Debug, Clone)]
pub enum Velocity {
    /// Prescribed components over `(x, y, t)`.
    Field(SpaceTimeFn, SpaceTimeFn),
    /// Names of two solution variables.
    Coupled(String, String),
}

/// `rho_cp c_t + b . grad c - div(kappa grad c) = s`.
#[derive(Debug, Clone)]
pub struct ConvectionDiffusion {
    pub name: String,
    pub variable: String,
    pub order: Order,
    pub kappa: f64,
    pub rho_cp: f64,
    pub velocity: Velocity,
    pub source: SpaceTimeFn,
    pub subdomains: Option<BTreeSet<i32>>,
    pub dirichlet: Vec<DirichletSpec>,
    var: usize,
    vel: Option<(usize, usize)>,
}

impl ConvectionDiffusion {
    pub fn new(variable: &str, order: Order, kappa: f64, velocity: Velocity, source: &str) -> Result<Self> {
        Ok(ConvectionDiffusion {
            name: "ConvectionDiffusion".into(),
            variable: variable.into(),
            order,
            kappa,
            rho_cp: 1.0,
            velocity,
            source: SpaceTimeFn::parse(source, &[])?,
            subdomains: None,
            dirichlet: Vec::new(),
            var: 0,
            vel: None,
        })
    }

    pub fn with_dirichlet(mut self, ids: &[i32], value: &str) -> Result<Self> {
        self.dirichlet.push(DirichletSpec {
            boundary_ids: ids.to_vec(),
            variable: self.variable.clone(),
            value: SpaceTimeFn::parse(value, &[])?,
            key: format!("Physics/{}/bc_value", self.name),
        });
        Ok(self)
    }

    pub fn from_input(sec: &Section<'_>, name: &str) -> Result<Self> {
        let variable = sec.string("variable", "c");
        sec.family("FE_family")?;
        let velocity = match sec.tree.get_opt_vector::<String>(&sec.key("velocity_variables"))? {
            Some(names) if names.len() == 2 => Velocity::Coupled(names[0].clone(), names[1].clone()),
            Some(_) => return Err(Error::config(sec.key("velocity_variables"), "expected two variable names")),
            None => {
                let comps: Vec<String> = sec.vector("velocity", vec!["0".into(), "0".into()])?;
                if comps.len() != 2 {
                    return Err(Error::config(sec.key("velocity"), "expected two component expressions"));
                }
                let parse = |s: &str| SpaceTimeFn::parse(s, &[]).map_err(|e| Error::config(sec.key("velocity"), e.to_string()));
                Velocity::Field(parse(&comps[0])?, parse(&comps[1])?)
            }
        };
        let mut k = ConvectionDiffusion::new(&variable, sec.order("order", "FIRST")?, sec.scalar("kappa", 1.0)?, velocity, "0")?;
        k.name = name.to_string();
        k.rho_cp = sec.scalar("rho_cp", 1.0)?;
        k.source = sec.expr("source", "0", &[])?;
        k.subdomains = sec.subdomains()?;
        for (id, _) in bc_list(sec, &["dirichlet"])? {
            k.dirichlet.push(DirichletSpec {
                boundary_ids: vec![id],
                variable: variable.clone(),
                value: sec.expr(&format!("bc_value_{id}"), "0", &[])?,
                key: sec.key(&format!("bc_value_{id}")),
            });
        }
        Ok(k)
    }
}

impl PhysicsKernel for ConvectionDiffusion {
    fn name(&self) -> &str {
        &self.name
    }

    fn variables(&self) -> Vec<Variable> {
        let mut v = Variable::new(&self.variable, self.order);
        v.subdomains = self.subdomains.clone();
        vec![v]
    }

    fn coupled_variables(&self) -> Vec<String> {
        match &self.velocity {
            Velocity::Coupled(a, b) => vec![a.clone(), b.clone()],
            Velocity::Field(..) => Vec::new(),
        }
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = var_index(variables, &self.variable, &self.name)?;
        if let Velocity::Coupled(a, b) = &self.velocity {
            self.vel = Some((var_index(variables, a, &self.name)?, var_index(variables, b, &self.name)?));
        }
        Ok(())
    }

    fn active_subdomains(&self) -> Option<&BTreeSet<i32>> {
        self.subdomains.as_ref()
    }

    fn mass_residual(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let v = self.var;
        let fe = ctx.fe(v);
        let n = ctx.n_dofs(v);
        for q in 0..fe.n_qp() {
            let w = fe.jxw[q] * self.rho_cp;
            let cdot = ctx.rate(v, q);
            for i in 0..n {
                out.add_residual(v, i, w * cdot * fe.phi[i][q]);
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
        let c = self.var;
        let fe = ctx.fe(c);
        let n = ctx.n_dofs(c);
        let sd = ctx.solution_derivative;
        for q in 0..fe.n_qp() {
            let w = fe.jxw[q];
            let x = fe.xyz[q];
            let g = ctx.gradient(c, q);
            let b = match (&self.velocity, self.vel) {
                (Velocity::Field(bx, by), _) => [bx.eval(x[0], x[1], ctx.time)?, by.eval(x[0], x[1], ctx.time)?],
                (_, Some((a, bb))) => [ctx.value(a, q), ctx.value(bb, q)],
                _ => unreachable!("coupled velocity resolved in init"),
            };
            let s = self.source.eval(x[0], x[1], ctx.time)?;
            let conv = b[0] * g[0] + b[1] * g[1];
            for i in 0..n {
                let d = fe.dphi[i][q];
                let phi = fe.phi[i][q];
                out.add_residual(c, i, w * (self.kappa * (g[0] * d[0] + g[1] * d[1]) + conv * phi - s * phi));
                if !jacobian {
                    continue;
                }
                for j in 0..n {
                    let dj = fe.dphi[j][q];
                    let val = self.kappa * (dj[0] * d[0] + dj[1] * d[1]) + (b[0] * dj[0] + b[1] * dj[1]) * phi;
                    out.add_jacobian(c, i, c, j, w * val * sd);
                }
                if let Some((a, bb)) = self.vel {
                    let fv = ctx.fe(a);
                    for j in 0..ctx.n_dofs(a) {
                        out.add_jacobian(c, i, a, j, w * fv.phi[j][q] * g[0] * phi * sd);
                    }
                    let fv = ctx.fe(bb);
                    for j in 0..ctx.n_dofs(bb) {
                        out.add_jacobian(c, i, bb, j, w * fv.phi[j][q] * g[1] * phi * sd);
                    }
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
    use crate::kernels::Poisson;
    use crate::mesh::ElemKind;
    use crate::system::{State, Want};

    fn field(bx: &str, by: &str) -> Velocity {
        Velocity::Field(SpaceTimeFn::parse(bx, &[]).unwrap(), SpaceTimeFn::parse(by, &[]).unwrap())
    }

    #[test]
    fn zero_velocity_matches_poisson_bitwise() {
        let cd = ConvectionDiffusion::new("u", Order::First, 0.7, field("0", "0"), "x*y").unwrap();
        let p = Poisson::new("u", Order::First, 0.7, "x*y").unwrap();
        let a = system(vec![Box::new(cd)], 3, ElemKind::Quad4);
        let b = system(vec![Box::new(p)], 3, ElemKind::Quad4);
        let u = random_vec(a.n_dofs(), 7);
        let ra = a.assemble(&Default::default(), &State::steady(&u), Want::Both).unwrap();
        let rb = b.assemble(&Default::default(), &State::steady(&u), Want::Both).unwrap();
        assert_eq!(ra.residual, rb.residual);
        assert_eq!(ra.jacobian.unwrap().to_dense(), rb.jacobian.unwrap().to_dense());
    }

    #[test]
    fn jacobians_verify_for_field_and_coupled_velocity() {
        let cd = ConvectionDiffusion::new("c", Order::First, 0.3, field("1+y", "-x"), "1").unwrap();
        check_jacobians(&system(vec![Box::new(cd)], 2, ElemKind::Quad4), 1e-6, 2);

        let vel_u = Poisson::new("a", Order::Second, 1.0, "0").unwrap();
        let mut vel_v = Poisson::new("b", Order::Second, 1.0, "0").unwrap();
        vel_v.name = "Poisson2".into();
        let cd = ConvectionDiffusion::new("c", Order::First, 0.3, Velocity::Coupled("a".into(), "b".into()), "0").unwrap();
        check_jacobians(&system(vec![Box::new(vel_u), Box::new(vel_v), Box::new(cd)], 2, ElemKind::Quad9), 1e-6, 2);
    }
}
