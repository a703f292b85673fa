use std::collections::BTreeMap;

use crate::adjoint::{BoundaryFlux, DomainIntegral, PointValue, QoiKernel};
use crate::error::{Error, Result};
use crate::input::InputTree;
use crate::kernels::{BoussinesqBuoyancy, ConvectionDiffusion, IncompressibleNavierStokes, ParsedSource, Poisson, Section};
use crate::solvers::{LinearMethod, LinearOptions, NewtonSettings, SolverConfig, SolverKind, TransientSettings};
use crate::system::{ParameterHandle, PhysicsKernel};

/// Builds a kernel from its input section; the second argument is the instance name.
pub type PhysicsCtor = Box<dyn Fn(&Section<'_>, &str) -> Result<Box<dyn PhysicsKernel>> + Send + Sync>;
pub type QoiCtor = Box<dyn Fn(&Section<'_>, &str) -> Result<Box<dyn QoiKernel>> + Send + Sync>;
/// Builds a solver kind from `[SolverOptions]`.
pub type SolverCtor = Box<dyn Fn(&Section<'_>) -> Result<SolverKind> + Send + Sync>;

/// Name -> constructor maps for physics, QoIs and solvers.
#[derive(Default)]
pub struct FactoryRegistry {
    physics: BTreeMap<String, PhysicsCtor>,
    qois: BTreeMap<String, QoiCtor>,
    solvers: BTreeMap<String, SolverCtor>,
}

fn insert<T>(map: &mut BTreeMap<String, T>, what: &str, name: &str, ctor: T) -> Result<()> {
    if map.contains_key(name) {
        return Err(Error::Usage(format!("{what} '{name}' is already registered")));
    }
    map.insert(name.to_string(), ctor);
    Ok(())
}

fn known<T>(map: &BTreeMap<String, T>) -> String {
    map.keys().map(String::as_str).collect::<Vec<_>>().join(", ")
}

impl FactoryRegistry {
    pub fn new() -> FactoryRegistry {
        FactoryRegistry::default()
    }

    /// Registry holding every shipped kernel, QoI and solver.
    pub fn with_defaults() -> FactoryRegistry {
        let mut r = FactoryRegistry::new();
        let ok = "built-in names are distinct";
        r.register_physics("Poisson", |s, n| Ok(Box::new(Poisson::from_input(s, n)?))).expect(ok);
        r.register_physics("ConvectionDiffusion", |s, n| Ok(Box::new(ConvectionDiffusion::from_input(s, n)?))).expect(ok);
        r.register_physics("IncompressibleNavierStokes", |s, n| Ok(Box::new(IncompressibleNavierStokes::from_input(s, n)?)))
            .expect(ok);
        r.register_physics("BoussinesqBuoyancy", |s, n| Ok(Box::new(BoussinesqBuoyancy::from_input(s, n)?))).expect(ok);
        r.register_physics("ParsedSource", |s, n| Ok(Box::new(ParsedSource::from_input(s, n)?))).expect(ok);

        r.register_qoi("point_value", |s, n| {
            let p: Vec<f64> = s.vector("point", Vec::new())?;
            if p.len() != 2 {
                return Err(Error::config(s.key("point"), "expected two coordinates"));
            }
            let radius: Option<f64> = s.tree.get(&s.key("radius"))?;
            let mut q = PointValue::new(&s.string("variable", "u"), [p[0], p[1]], radius);
            q.name = n.to_string();
            Ok(Box::new(q))
        })
        .expect(ok);
        r.register_qoi("domain_integral", |s, n| {
            let mut q = DomainIntegral::new(&s.string("variable", "u"), &s.string("weight", "1"))
                .map_err(|e| Error::config(s.key("weight"), e.to_string()))?;
            q.name = n.to_string();
            Ok(Box::new(q))
        })
        .expect(ok);
        r.register_qoi("boundary_flux", |s, n| {
            let ids: Vec<i32> = s.vector("bc_ids", Vec::new())?;
            if ids.is_empty() {
                return Err(Error::config(s.key("bc_ids"), "boundary_flux needs at least one boundary id"));
            }
            let mut q = BoundaryFlux::new(&s.string("variable", "u"), s.scalar("kappa", 1.0)?, ids);
            q.name = n.to_string();
            Ok(Box::new(q))
        })
        .expect(ok);

        r.register_solver("steady", |_| Ok(SolverKind::Steady)).expect(ok);
        r.register_solver("theta", |s| {
            let mut t = TransientSettings::new(s.scalar("theta", 1.0)?, s.scalar("dt", 0.1)?, s.scalar("n_steps", 1)?);
            t.t0 = s.scalar("t0", 0.0)?;
            Ok(SolverKind::Transient(t))
        })
        .expect(ok);
        r.register_solver("continuation", |s| {
            let key = s.key("continuation_parameter");
            let path = s.tree.raw(&key).ok_or_else(|| Error::config(&key, "continuation needs a parameter"))?;
            let parameter = ParameterHandle::parse(path)?;
            let schedule: Vec<f64> = s.vector("continuation_values", Vec::new())?;
            if schedule.is_empty() {
                return Err(Error::config(s.key("continuation_values"), "empty continuation schedule"));
            }
            Ok(SolverKind::Continuation { parameter, schedule })
        })
        .expect(ok);
        r
    }

    pub fn register_physics(
        &mut self,
        name: &str,
        ctor: impl Fn(&Section<'_>, &str) -> Result<Box<dyn PhysicsKernel>> + Send + Sync + 'static,
    ) -> Result<()> {
        insert(&mut self.physics, "physics", name, Box::new(ctor))
    }

    pub fn register_qoi(
        &mut self,
        name: &str,
        ctor: impl Fn(&Section<'_>, &str) -> Result<Box<dyn QoiKernel>> + Send + Sync + 'static,
    ) -> Result<()> {
        insert(&mut self.qois, "QoI", name, Box::new(ctor))
    }

    pub fn register_solver(
        &mut self,
        name: &str,
        ctor: impl Fn(&Section<'_>) -> Result<SolverKind> + Send + Sync + 'static,
    ) -> Result<()> {
        insert(&mut self.solvers, "solver", name, Box::new(ctor))
    }

    pub fn physics_names(&self) -> Vec<&str> {
        self.physics.keys().map(String::as_str).collect()
    }

    /// Kernels named in `Physics/enabled_physics`, in order. Each reads
    /// `Physics/<name>`; a `type` key there selects the constructor, so one
    /// kernel type can appear under several names.
    pub fn build_physics(&self, tree: &InputTree) -> Result<Vec<Box<dyn PhysicsKernel>>> {
        let key = "Physics/enabled_physics";
        let names: Vec<String> = tree.get_vector(key, Vec::new())?;
        if names.is_empty() {
            return Err(Error::config(key, "no physics enabled"));
        }
        let mut kernels = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::config(key, format!("physics '{name}' enabled twice")));
            }
            let sec = Section::new(tree, format!("Physics/{name}"));
            let kind = sec.string("type", name);
            let ctor = self.physics.get(&kind).ok_or_else(|| {
                Error::config(key, format!("unknown physics '{kind}' (known: {})", known(&self.physics)))
            })?;
            kernels.push(ctor(&sec, name)?);
        }
        Ok(kernels)
    }

    /// Either a single `[QoI]` with a `type`, or `QoI/enabled_qois` naming
    /// subsections. No `[QoI]` gives an empty list.
    pub fn build_qois(&self, tree: &InputTree) -> Result<Vec<Box<dyn QoiKernel>>> {
        let build = |path: String, name: &str, default_kind: Option<&str>| -> Result<Box<dyn QoiKernel>> {
            let sec = Section::new(tree, path);
            let kind = match default_kind {
                Some(d) => sec.string("type", d),
                None => sec.string("type", ""),
            };
            let ctor = self.qois.get(&kind).ok_or_else(|| {
                Error::config(sec.key("type"), format!("unknown QoI '{kind}' (known: {})", known(&self.qois)))
            })?;
            ctor(&sec, name)
        };
        if tree.has("QoI/type") {
            let kind = tree.get_str("QoI/type", "");
            return Ok(vec![build("QoI".into(), &kind, None)?]);
        }
        let names: Vec<String> = tree.get_vector("QoI/enabled_qois", Vec::new())?;
        names.iter().map(|n| build(format!("QoI/{n}"), n, Some(n))).collect()
    }

    /// `SolverOptions/type` plus Newton and linear settings.
    pub fn build_solver(&self, tree: &InputTree) -> Result<SolverConfig> {
        let sec = Section::new(tree, "SolverOptions");
        let kind_name = sec.string("type", "steady");
        let ctor = self.solvers.get(&kind_name).ok_or_else(|| {
            let loc = tree.entry("SolverOptions/type").map(|e| format!(" ({})", e.location)).unwrap_or_default();
            Error::config(sec.key("type"), format!("unknown solver '{kind_name}' (known: {}){loc}", known(&self.solvers)))
        })?;
        let kind = ctor(&sec)?;
        let d = NewtonSettings::default();
        let method = tree.get_enum("SolverOptions/linear_solver", &["direct", "gmres"], "direct")?;
        let mut linear = if method == "gmres" { LinearOptions::gmres() } else { LinearOptions::default() };
        linear.tolerance = sec.scalar("linear_tolerance", linear.tolerance)?;
        if let LinearMethod::Gmres { restart, max_iters } = &mut linear.method {
            *restart = sec.scalar("gmres_restart", *restart)?;
            *max_iters = sec.scalar("max_linear_iterations", *max_iters)?;
        }
        let newton = NewtonSettings {
            abs_tol: sec.scalar("absolute_tolerance", d.abs_tol)?,
            rel_tol: sec.scalar("relative_tolerance", d.rel_tol)?,
            max_iters: sec.scalar("max_newton_iterations", d.max_iters)?,
            backtrack_factor: sec.scalar("backtrack_factor", d.backtrack_factor)?,
            max_backtracks: sec.scalar("max_backtracks", d.max_backtracks)?,
            linear,
        };
        Ok(SolverConfig { kind, newton })
    }
}
