use super::{var_index, Section};
use crate::dofs::Variable;
use crate::error::{Error, Result};
use crate::system::{ElemContext, LocalAccum, PhysicsKernel};

/// Buoyancy body force `-rho beta (T - T_ref) g` on the momentum equations.
#[derive(Debug, Clone)]
pub struct BoussinesqBuoyancy {
    pub name: String,
    pub velocity: [String; 2],
    pub temperature: String,
    pub rho: f64,
    pub beta: f64,
    pub t_ref: f64,
    pub gravity: [f64; 2],
    idx: [usize; 3],
}

impl BoussinesqBuoyancy {
    pub fn new(rho: f64, beta: f64, t_ref: f64, gravity: [f64; 2]) -> Self {
        BoussinesqBuoyancy {
            name: "BoussinesqBuoyancy".into(),
            velocity: ["u".into(), "v".into()],
            temperature: "T".into(),
            rho,
            beta,
            t_ref,
            gravity,
            idx: [0; 3],
        }
    }

    pub fn from_input(sec: &Section<'_>, name: &str) -> Result<Self> {
        let g: Vec<f64> = sec.vector("g", vec![0.0, -9.81])?;
        if g.len() < 2 {
            return Err(Error::config(sec.key("g"), "gravity needs two components"));
        }
        let mut k = BoussinesqBuoyancy::new(sec.scalar("rho", 1.0)?, sec.scalar("beta", 1.0)?, sec.scalar("T_ref", 0.0)?, [g[0], g[1]]);
        k.name = name.to_string();
        let vel: Vec<String> = sec.vector("velocity_variables", vec!["u".into(), "v".into()])?;
        if vel.len() != 2 {
            return Err(Error::config(sec.key("velocity_variables"), "expected two variable names"));
        }
        k.velocity = [vel[0].clone(), vel[1].clone()];
        k.temperature = sec.string("temperature_variable", "T");
        Ok(k)
    }
}

impl PhysicsKernel for BoussinesqBuoyancy {
    fn name(&self) -> &str {
        &self.name
    }

    fn coupled_variables(&self) -> Vec<String> {
        vec![self.velocity[0].clone(), self.velocity[1].clone(), self.temperature.clone()]
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.idx = [
            var_index(variables, &self.velocity[0], &self.name)?,
            var_index(variables, &self.velocity[1], &self.name)?,
            var_index(variables, &self.temperature, &self.name)?,
        ];
        Ok(())
    }

    fn element_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, jacobian: bool) -> Result<()> {
        let [iu, iv, it] = self.idx;
        let fv = ctx.fe(iu);
        let ft = ctx.fe(it);
        for q in 0..fv.n_qp() {
            let w = fv.jxw[q];
            let dt = ctx.value(it, q) - self.t_ref;
            for (c, &var) in [iu, iv].iter().enumerate() {
                let coef = self.rho * self.beta * self.gravity[c];
                for i in 0..fv.n_dofs() {
                    out.add_residual(var, i, w * coef * dt * fv.phi[i][q]);
                    if jacobian {
                        for j in 0..ft.n_dofs() {
                            out.add_jacobian(var, i, it, j, w * coef * ft.phi[j][q] * fv.phi[i][q] * ctx.solution_derivative);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Vec<String> {
        vec!["rho".into(), "beta".into(), "T_ref".into()]
    }

    fn parameter(&self, name: &str) -> Option<f64> {
        match name {
            "rho" => Some(self.rho),
            "beta" => Some(self.beta),
            "T_ref" => Some(self.t_ref),
            _ => None,
        }
    }

    fn set_parameter(&mut self, name: &str, value: f64) -> bool {
        match name {
            "rho" => self.rho = value,
            "beta" => self.beta = value,
            "T_ref" => self.t_ref = value,
            _ => return false,
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::Order;
    use crate::kernels::testing::{check_jacobians, system};
    use crate::kernels::{ConvectionDiffusion, IncompressibleNavierStokes, Velocity};
    use crate::mesh::ElemKind;
    use crate::system::{State, Want};

    fn coupled() -> Vec<Box<dyn PhysicsKernel>> {
        let heat =
            ConvectionDiffusion::new("T", Order::First, 0.1, Velocity::Coupled("u".into(), "v".into()), "0").unwrap();
        vec![
            Box::new(IncompressibleNavierStokes::new(1.0, 0.1)),
            Box::new(heat),
            Box::new(BoussinesqBuoyancy::new(1.0, 0.5, 0.3, [0.0, -9.81])),
        ]
    }

    #[test]
    fn reference_temperature_gives_no_force() {
        let sys = system(vec![Box::new(IncompressibleNavierStokes::new(1.0, 0.1))], 2, ElemKind::Quad9);
        let mut with = coupled();
        with.remove(0);
        let mut all: Vec<Box<dyn PhysicsKernel>> = vec![Box::new(IncompressibleNavierStokes::new(1.0, 0.1))];
        all.extend(with);
        let full = system(all, 2, ElemKind::Quad9);
        let mut u = vec![0.0; full.n_dofs()];
        for d in full.dofs().var_range(3) {
            u[d] = 0.3;
        }
        let r = full.assemble(&Default::default(), &State::steady(&u), Want::Residual).unwrap().residual;
        for d in full.dofs().var_range(0).chain(full.dofs().var_range(1)) {
            assert!(r[d].abs() < 1e-15);
        }
        assert_eq!(sys.n_dofs() + 9, full.n_dofs());
    }

    #[test]
    fn jacobians_verify() {
        check_jacobians(&system(coupled(), 2, ElemKind::Quad9), 1e-5, 3);
    }
}
