use std::collections::BTreeSet;

use super::{bc_list, var_index, Section};
use crate::dofs::{DirichletSpec, Variable};
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::system::{ElemContext, LocalAccum, PhysicsKernel, PointPin};

/// Incompressible Navier-Stokes on Taylor-Hood elements.
///
/// `-F = rho (u . grad) u . v + mu grad u : grad v - p div v - rho g . v`,
/// `G = -q div u`, `M = rho u_t . v`.
#[derive(Debug, Clone)]
pub struct IncompressibleNavierStokes {
    pub name: String,
    pub names: [String; 3],
    pub v_order: Order,
    pub p_order: Order,
    pub rho: f64,
    pub mu: f64,
    pub gravity: [f64; 2],
    /// Drop the convection term (Stokes flow).
    pub stokes: bool,
    pub subdomains: Option<BTreeSet<i32>>,
    pub dirichlet: Vec<DirichletSpec>,
    pub pin: Option<PointPin>,
    idx: [usize; 3],
}

fn profile_expr(c: &[f64]) -> String {
    format!(
        "({:?}) + ({:?})*x + ({:?})*y^2 + ({:?})*x^2 + ({:?})*y + ({:?})*x*y",
        c[0], c[1], c[2], c[3], c[4], c[5]
    )
}

impl IncompressibleNavierStokes {
    pub fn new(rho: f64, mu: f64) -> Self {
        IncompressibleNavierStokes {
            name: "IncompressibleNavierStokes".into(),
            names: ["u".into(), "v".into(), "p".into()],
            v_order: Order::Second,
            p_order: Order::First,
            rho,
            mu,
            gravity: [0.0, 0.0],
            stokes: false,
            subdomains: None,
            dirichlet: Vec::new(),
            pin: None,
            idx: [0, 1, 2],
        }
    }

    fn spec(&self, id: i32, var: usize, value: &str, key: String) -> Result<DirichletSpec> {
        Ok(DirichletSpec {
            boundary_ids: vec![id],
            variable: self.names[var].clone(),
            value: SpaceTimeFn::parse(value, &[]).map_err(|e| Error::config(&key, e.to_string()))?,
            key,
        })
    }

    pub fn no_slip(mut self, ids: &[i32]) -> Result<Self> {
        for &id in ids {
            for c in 0..2 {
                let s = self.spec(id, c, "0", format!("Physics/{}/bc_types", self.name))?;
                self.dirichlet.push(s);
            }
        }
        Ok(self)
    }

    pub fn prescribed_velocity(mut self, id: i32, u: &str, v: &str) -> Result<Self> {
        let key = format!("Physics/{}/bound_vel_{id}", self.name);
        let su = self.spec(id, 0, u, key.clone())?;
        let sv = self.spec(id, 1, v, key)?;
        self.dirichlet.push(su);
        self.dirichlet.push(sv);
        Ok(self)
    }

    pub fn pin_pressure(mut self, point: [f64; 2], value: f64) -> Self {
        self.pin = Some(PointPin { variable: self.names[2].clone(), point, value });
        self
    }

    pub fn from_input(sec: &Section<'_>, name: &str) -> Result<Self> {
        sec.family("V_FE_family")?;
        sec.family("P_FE_family")?;
        let mut k = IncompressibleNavierStokes::new(sec.scalar("rho", 1.0)?, sec.scalar("mu", 1.0)?);
        k.name = name.to_string();
        k.v_order = sec.order("V_order", "SECOND")?;
        k.p_order = sec.order("P_order", "FIRST")?;
        if k.v_order.degree() != k.p_order.degree() + 1 {
            return Err(Error::config(
                sec.key("P_order"),
                "Taylor-Hood pairing needs V_order = SECOND with P_order = FIRST",
            ));
        }
        let names: Vec<String> = sec.vector("variables", vec!["u".into(), "v".into(), "p".into()])?;
        if names.len() != 3 {
            return Err(Error::config(sec.key("variables"), "expected three names: two velocity components and pressure"));
        }
        k.names = [names[0].clone(), names[1].clone(), names[2].clone()];
        let g: Vec<f64> = sec.vector("g", vec![0.0, 0.0])?;
        if g.len() < 2 {
            return Err(Error::config(sec.key("g"), "gravity needs two components"));
        }
        k.gravity = [g[0], g[1]];
        k.stokes = sec.scalar("stokes", false)?;
        k.subdomains = sec.subdomains()?;
        for (id, kind) in bc_list(sec, &["no_slip", "prescribed_vel", "parabolic_profile"])? {
            match kind.as_str() {
                "no_slip" => k = k.no_slip(&[id])?,
                "prescribed_vel" => {
                    let key = sec.key(&format!("bound_vel_{id}"));
                    let vel: Vec<f64> = sec
                        .tree
                        .get_opt_vector(&key)?
                        .ok_or_else(|| Error::config(&key, "prescribed_vel boundary needs a velocity"))?;
                    if vel.len() < 2 {
                        return Err(Error::config(&key, "expected at least two velocity components"));
                    }
                    k = k.prescribed_velocity(id, &format!("{:?}", vel[0]), &format!("{:?}", vel[1]))?;
                }
                _ => {
                    let ckey = sec.key(&format!("parabolic_profile_coeffs_{id}"));
                    let coeffs: Vec<f64> = sec
                        .tree
                        .get_opt_vector(&ckey)?
                        .ok_or_else(|| Error::config(&ckey, "parabolic_profile boundary needs 6 coefficients"))?;
                    if coeffs.len() != 6 {
                        return Err(Error::config(&ckey, format!("expected 6 coefficients, found {}", coeffs.len())));
                    }
                    let var = sec.string(&format!("parabolic_profile_var_{id}"), &k.names[0]);
                    let fix = sec.string(&format!("parabolic_profile_fix_{id}"), &k.names[1]);
                    let pos = |n: &str, key: String| {
                        k.names[..2].iter().position(|x| x == n).ok_or_else(|| {
                            Error::config(key, format!("'{n}' is not a velocity component"))
                        })
                    };
                    let vi = pos(&var, sec.key(&format!("parabolic_profile_var_{id}")))?;
                    let fi = pos(&fix, sec.key(&format!("parabolic_profile_fix_{id}")))?;
                    let a = k.spec(id, vi, &profile_expr(&coeffs), ckey)?;
                    let b = k.spec(id, fi, "0", sec.key(&format!("parabolic_profile_fix_{id}")))?;
                    k.dirichlet.push(a);
                    k.dirichlet.push(b);
                }
            }
        }
        if sec.scalar("pin_pressure", false)? {
            let loc: Vec<f64> = sec.vector("pin_location", vec![0.0, 0.0])?;
            if loc.len() != 2 {
                return Err(Error::config(sec.key("pin_location"), "expected two coordinates"));
            }
            k = k.pin_pressure([loc[0], loc[1]], sec.scalar("pin_value", 0.0)?);
        }
        Ok(k)
    }
}

impl PhysicsKernel for IncompressibleNavierStokes {
    fn name(&self) -> &str {
        &self.name
    }

    fn variables(&self) -> Vec<Variable> {
        let mk = |n: &str, o| {
            let mut v = Variable::new(n, o);
            v.subdomains = self.subdomains.clone();
            v
        };
        vec![mk(&self.names[0], self.v_order), mk(&self.names[1], self.v_order), mk(&self.names[2], self.p_order)]
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        for c in 0..3 {
            self.idx[c] = var_index(variables, &self.names[c], &self.name)?;
        }
        Ok(())
    }

    fn active_subdomains(&self) -> Option<&BTreeSet<i32>> {
        self.subdomains.as_ref()
    }

    fn mass_residual(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let fe = ctx.fe(self.idx[0]);
        let n = fe.n_dofs();
        for q in 0..fe.n_qp() {
            let w = fe.jxw[q] * self.rho;
            for &c in &self.idx[..2] {
                let rate = ctx.rate(c, q);
                for i in 0..n {
                    out.add_residual(c, i, w * rate * fe.phi[i][q]);
                    if jacobian {
                        for j in 0..n {
                            out.add_jacobian(c, i, c, j, w * fe.phi[j][q] * fe.phi[i][q] * ctx.rate_derivative);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn element_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let [iu, iv, ip] = self.idx;
        let fv = ctx.fe(iu);
        let fp = ctx.fe(ip);
        let (nv, np) = (fv.n_dofs(), fp.n_dofs());
        let rho_c = if self.stokes { 0.0 } else { self.rho };
        let sd = ctx.solution_derivative;
        for q in 0..fv.n_qp() {
            let w = fv.jxw[q];
            let vel = [ctx.value(iu, q), ctx.value(iv, q)];
            let grad = [ctx.gradient(iu, q), ctx.gradient(iv, q)];
            let p = ctx.value(ip, q);
            for (c, &var) in [iu, iv].iter().enumerate() {
                let conv = rho_c * (vel[0] * grad[c][0] + vel[1] * grad[c][1]);
                for i in 0..nv {
                    let phi = fv.phi[i][q];
                    let d = fv.dphi[i][q];
                    let r = conv * phi + self.mu * (grad[c][0] * d[0] + grad[c][1] * d[1])
                        - p * d[c]
                        - self.rho * self.gravity[c] * phi;
                    out.add_residual(var, i, w * r);
                }
            }
            if !jacobian {
                continue;
            }
            for i in 0..nv {
                let phi = fv.phi[i][q];
                let d = fv.dphi[i][q];
                for j in 0..nv {
                    let pj = fv.phi[j][q];
                    let dj = fv.dphi[j][q];
                    let diff = self.mu * (dj[0] * d[0] + dj[1] * d[1]);
                    let adv = rho_c * (vel[0] * dj[0] + vel[1] * dj[1]) * phi;
                    // d/du_j and d/dv_j of rho (u . grad) u_c.
                    out.add_jacobian(iu, i, iu, j, w * sd * (diff + adv + rho_c * pj * grad[0][0] * phi));
                    out.add_jacobian(iu, i, iv, j, w * sd * (rho_c * pj * grad[0][1] * phi));
                    out.add_jacobian(iv, i, iu, j, w * sd * (rho_c * pj * grad[1][0] * phi));
                    out.add_jacobian(iv, i, iv, j, w * sd * (diff + adv + rho_c * pj * grad[1][1] * phi));
                }
                for k in 0..np {
                    let psi = fp.phi[k][q];
                    out.add_jacobian(iu, i, ip, k, -w * sd * psi * d[0]);
                    out.add_jacobian(iv, i, ip, k, -w * sd * psi * d[1]);
                }
            }
        }
        Ok(())
    }

    fn element_constraint(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let [iu, iv, ip] = self.idx;
        let fv = ctx.fe(iu);
        let fp = ctx.fe(ip);
        let sd = ctx.solution_derivative;
        for q in 0..fp.n_qp() {
            let w = fp.jxw[q];
            let div = ctx.gradient(iu, q)[0] + ctx.gradient(iv, q)[1];
            for k in 0..fp.n_dofs() {
                let psi = fp.phi[k][q];
                out.add_residual(ip, k, -w * psi * div);
                if jacobian {
                    for j in 0..fv.n_dofs() {
                        out.add_jacobian(ip, k, iu, j, -w * sd * psi * fv.dphi[j][q][0]);
                        out.add_jacobian(ip, k, iv, j, -w * sd * psi * fv.dphi[j][q][1]);
                    }
                }
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Vec<String> {
        vec!["rho".into(), "mu".into()]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "rho" => Some(self.rho),
            "mu" => Some(self.mu),
            _ => None,
        }
    }

    fn set_parameter(&mut self, name: &str, value: f64) -> bool {
        match name {
            "rho" => self.rho = value,
            "mu" => self.mu = value,
            _ => return false,
        }
        true
    }

    fn dirichlet(&self) -> Vec<DirichletSpec> {
        self.dirichlet.clone()
    }

    fn pins(&self) -> Vec<PointPin> {
        self.pin.iter().cloned().collect()
    }
}
