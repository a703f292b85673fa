use std::collections::BTreeSet;

use super::{var_index, Section};
use crate::dofs::Variable;
use crate::error::Result;
use crate::expr::SpaceTimeFn;
use crate::system::{ElemContext, LocalAccum, PhysicsKernel};

/// Adds `int s v` to `F` for an existing variable.
#[derive(Debug, Clone)]
pub struct ParsedSource {
    pub name: String,
    pub variable: String,
    pub source: SpaceTimeFn,
    pub subdomains: Option<BTreeSet<i32>>,
    var: usize,
}

impl ParsedSource {
    pub fn new(variable: &str, source: &str) -> Result<Self> {
        Ok(ParsedSource {
            name: "ParsedSource".into(),
            variable: variable.into(),
            source: SpaceTimeFn::parse(source, &[])?,
            subdomains: None,
            var: 0,
        })
    }

    pub fn from_input(sec: &Section<'_>, name: &str) -> Result<Self> {
        let mut k = ParsedSource::new(&sec.string("variable", "u"), "0")?;
        k.name = name.to_string();
        k.source = sec.expr("source", "0", &[])?;
        k.subdomains = sec.subdomains()?;
        Ok(k)
    }
}

impl PhysicsKernel for ParsedSource {
    fn name(&self) -> &str {
        &self.name
    }

    fn coupled_variables(&self) -> Vec<String> {
        vec![self.variable.clone()]
    }

    fn init(&mut self, variables: &[Variable]) -> Result<()> {
        self.var = var_index(variables, &self.variable, &self.name)?;
        Ok(())
    }

    fn active_subdomains(&self) -> Option<&BTreeSet<i32>> {
        self.subdomains.as_ref()
    }

    fn element_time_derivative(&self, ctx: &ElemContext<'_>, out: &mut LocalAccum, _jacobian: bool) -> Result<()> {
        let v = self.var;
        if !ctx.has_var(v) {
            return Ok(());
        }
        let fe = ctx.fe(v);
        for q in 0..fe.n_qp() {
            let x = fe.xyz[q];
            let s = self.source.eval(x[0], x[1], ctx.time)?;
            for i in 0..fe.n_dofs() {
                out.add_residual(v, i, -fe.jxw[q] * s * fe.phi[i][q]);
            }
        }
        Ok(())
    }
}
