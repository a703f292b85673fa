//! femforge: a small input-file-driven multiphysics finite element framework.
//!
//! Physics are written as element-level kernels that accumulate mass,
//! time-derivative and constraint contributions into a shared residual
//! `R(u) = M(u, u_dot) - F(u) + G(u)`. The same kernels drive steady solves,
//! theta-method time stepping, discrete adjoints, dual-weighted-residual
//! error estimation with adaptive refinement, and adjoint parameter
//! sensitivities. Simulations are composed from GetPot-style input files.

pub mod adjoint;
pub mod dofs;
pub mod error;
pub mod expr;
pub mod fe;
pub mod input;
pub mod kernels;
pub mod mesh;
pub mod runtime;
pub mod solvers;
pub mod system;

pub use error::{Error, Result};
