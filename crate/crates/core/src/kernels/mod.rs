//! Shipped physics: diffusion, convection-diffusion, incompressible
//! Navier-Stokes, Boussinesq buoyancy and parsed sources.

mod boussinesq;
mod convdiff;
mod navier_stokes;
mod poisson;
mod source;

use std::collections::BTreeSet;

pub use boussinesq::BoussinesqBuoyancy;
pub use convdiff::{ConvectionDiffusion, Velocity};
pub use navier_stokes::IncompressibleNavierStokes;
pub use poisson::Poisson;
pub use source::ParsedSource;

use crate::dofs::Variable;
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::input::{FromScalar, InputTree};

/// Typed lookups inside one kernel's input section.
pub struct Section<'a> {
    pub tree: &'a InputTree,
    pub path: String,
}

impl<'a> Section<'a> {
    pub fn new(tree: &'a InputTree, path: impl Into<String>) -> Section<'a> {
        Section { tree, path: path.into() }
    }

    pub fn key(&self, key: &str) -> String {
        format!("{}/{}", self.path, key)
    }

    pub fn scalar<T: FromScalar>(&self, key: &str, default: T) -> Result<T> {
        self.tree.get_scalar(&self.key(key), default)
    }

    pub fn vector<T: FromScalar>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        self.tree.get_vector(&self.key(key), default)
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.tree.get_str(&self.key(key), default)
    }

    pub fn order(&self, key: &str, default: &str) -> Result<Order> {
        let s = self.tree.get_enum(&self.key(key), &["FIRST", "SECOND"], default)?;
        Ok(Order::from_name(&s).expect("enum checked"))
    }

    pub fn expr(&self, key: &str, default: &str, params: &[&str]) -> Result<SpaceTimeFn> {
        let src = self.string(key, default);
        SpaceTimeFn::parse(&src, params).map_err(|e| Error::config(self.key(key), e.to_string()))
    }

    pub fn subdomains(&self) -> Result<Option<BTreeSet<i32>>> {
        Ok(self.tree.get_opt_vector::<i32>(&self.key("enabled_subdomains"))?.map(|v| v.into_iter().collect()))
    }

    pub fn family(&self, key: &str) -> Result<()> {
        self.tree.get_enum(&self.key(key), &["LAGRANGE"], "LAGRANGE").map(|_| ())
    }
}

pub(crate) fn var_index(variables: &[Variable], name: &str, kernel: &str) -> Result<usize> {
    variables
        .iter()
        .position(|v| v.name == name)
        .ok_or_else(|| Error::config(format!("Physics/{kernel}"), format!("unknown variable '{name}'")))
}

/// Boundary condition list `bc_ids` / `bc_types` of equal length.
pub(crate) fn bc_list(sec: &Section<'_>, allowed: &[&str]) -> Result<Vec<(i32, String)>> {
    let ids: Vec<i32> = sec.vector("bc_ids", Vec::new())?;
    let types: Vec<String> = sec.vector("bc_types", Vec::new())?;
    if ids.len() != types.len() {
        return Err(Error::config(
            sec.key("bc_types"),
            format!("{} boundary types given for {} boundary ids", types.len(), ids.len()),
        ));
    }
    for t in &types {
        if !allowed.contains(&t.as_str()) {
            return Err(Error::config(
                sec.key("bc_types"),
                format!("unknown boundary condition type '{t}' (expected one of: {})", allowed.join(", ")),
            ));
        }
    }
    Ok(ids.into_iter().zip(types).collect())
}
