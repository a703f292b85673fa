//! Input-driven simulations: factories, the simulation driver and VTK output.

mod factory;
mod vtk;

use std::path::{Path, PathBuf};

pub use factory::{FactoryRegistry, PhysicsCtor, QoiCtor, SolverCtor};
pub use vtk::{vtk_string, write_vtk};

use crate::adjoint::{adapt_loop, dwr_estimate, qoi_value, AdaptSettings, QoiKernel};
use crate::error::{Error, Result};
use crate::expr::SpaceTimeFn;
use crate::fe::Order;
use crate::input::InputTree;
use crate::mesh::{read_gmsh, ElemKind, Mesh};
use crate::solvers::{continuation_solve, steady_solve, transient_solve, NewtonReport, SolverConfig, SolverKind};
use crate::system::{Physics, System};

/// Where to find files named by the input.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory that relative mesh paths are resolved against.
    pub base_dir: PathBuf,
    /// Mesh file replacing whatever `[Mesh]` asks for.
    pub mesh_file: Option<PathBuf>,
    pub vtk_subdivide: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub directory: PathBuf,
    pub prefix: String,
    pub vtk: bool,
    /// Transient runs write every this many steps (and the last).
    pub vtk_every: usize,
    pub subdivide: bool,
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub solution: Vec<f64>,
    pub n_dofs: usize,
    /// One report per nonlinear solve (continuation stage or time step).
    pub newton: Vec<NewtonReport>,
    pub qoi_values: Vec<(String, f64)>,
    pub artifacts: Vec<PathBuf>,
    pub unused_keys: Vec<String>,
}

/// Mesh, kernels, solver choice, QoIs and output settings bound together.
pub struct Simulation {
    pub system: System,
    pub solver: SolverConfig,
    pub qois: Vec<Box<dyn QoiKernel>>,
    pub adaptivity: Option<AdaptSettings>,
    pub output: OutputSettings,
    /// Initial value per variable; `None` means zero.
    pub initial: Vec<Option<SpaceTimeFn>>,
}

/// `[Mesh/Read]`, `[Mesh/Generation]` or the override file, then
/// `Mesh/uniform_refinements` rounds of refinement.
pub fn build_mesh(tree: &InputTree, opts: &RunOptions) -> Result<Mesh> {
    let read = |path: &Path| -> Result<Mesh> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot read mesh '{}': {e}", path.display()))))?;
        read_gmsh(&text)
    };
    let mut mesh = if let Some(file) = &opts.mesh_file {
        // Still mark the key as seen so the audit does not flag it.
        let _ = tree.raw("Mesh/Read/filename");
        read(file)?
    } else if let Some(name) = tree.raw("Mesh/Read/filename") {
        let path = opts.base_dir.join(name.trim());
        read(&path).map_err(|e| match e {
            Error::Io(io) => {
                let loc = tree.entry("Mesh/Read/filename").map(|e| e.location.to_string()).unwrap_or_default();
                Error::config("Mesh/Read/filename", format!("{io} ({loc})"))
            }
            e => e,
        })?
    } else if tree.has_section("Mesh/Generation") {
        let g = "Mesh/Generation";
        let dim: usize = tree.get_scalar(&format!("{g}/dimension"), 2)?;
        if dim != 2 {
            return Err(Error::config(format!("{g}/dimension"), format!("only 2D meshes are supported, got {dim}")));
        }
        let kind = match tree.get_enum(&format!("{g}/element_type"), &["QUAD4", "QUAD9"], "QUAD4")?.as_str() {
            "QUAD9" => ElemKind::Quad9,
            _ => ElemKind::Quad4,
        };
        let f = |k: &str, d: f64| tree.get_scalar(&format!("{g}/{k}"), d);
        let n = |k: &str| -> Result<usize> {
            tree.get(&format!("{g}/{k}"))?.ok_or_else(|| Error::config(format!("{g}/{k}"), "missing element count"))
        };
        Mesh::generate_structured_quad(
            n("n_elems_x")?,
            n("n_elems_y")?,
            f("x_min", 0.0)?,
            f("x_max", 1.0)?,
            f("y_min", 0.0)?,
            f("y_max", 1.0)?,
            kind,
        )
        .map_err(|e| Error::config(g, e.to_string()))?
    } else {
        return Err(Error::config("Mesh", "no mesh given: use [Mesh/Generation], [Mesh/Read] or --mesh"));
    };
    let rounds: usize = tree.get_scalar("Mesh/uniform_refinements", 0)?;
    for _ in 0..rounds {
        mesh = mesh.refine_uniformly();
    }
    Ok(mesh)
}

impl Simulation {
    /// Build and cross-check everything before any solve.
    pub fn from_input(tree: &InputTree, registry: &FactoryRegistry, opts: &RunOptions) -> Result<Simulation> {
        let kernels = registry.build_physics(tree)?;
        let physics = Physics::new(kernels)?;
        let mesh = build_mesh(tree, opts)?;
        validate(&physics, &mesh)?;
        let system = System::new(physics, mesh, tree.get("SolverOptions/quadrature_order")?)?;
        let solver = registry.build_solver(tree)?;
        let mut qois = registry.build_qois(tree)?;
        for q in qois.iter_mut() {
            q.init(system.physics.variables())?;
            q.prepare(system.mesh())?;
            let ids = system.mesh().boundary_id_set();
            if let Some(id) = q.side_ids().into_iter().find(|id| !ids.contains(id)) {
                return Err(Error::config(format!("QoI/{}", q.name()), format!("boundary id {id} does not exist in the mesh")));
            }
        }

        let adaptivity = if tree.has_section("Adaptivity") {
            if qois.is_empty() {
                return Err(Error::config("Adaptivity", "adaptive refinement needs a [QoI]"));
            }
            if !matches!(solver.kind, SolverKind::Steady) {
                return Err(Error::config("Adaptivity", "adaptive refinement runs with the steady solver only"));
            }
            let d = AdaptSettings::default();
            Some(AdaptSettings {
                cycles: tree.get_scalar("Adaptivity/cycles", d.cycles)?,
                fraction: tree.get_scalar("Adaptivity/fraction", d.fraction)?,
                dof_budget: tree.get("Adaptivity/dof_budget")?,
                newton: solver.newton.clone(),
            })
        } else {
            None
        };

        let output = OutputSettings {
            directory: PathBuf::from(tree.get_str("Output/directory", ".")),
            prefix: tree.get_str("Output/prefix", "solution"),
            vtk: tree.get_scalar("Output/vtk", true)?,
            vtk_every: tree.get_scalar("Output/vtk_every", 1)?,
            subdivide: opts.vtk_subdivide || tree.get_scalar("Output/vtk_subdivide", false)?,
        };
        if output.vtk_every == 0 {
            return Err(Error::config("Output/vtk_every", "must be at least 1"));
        }

        let variables = system.physics.variables();
        let mut initial = vec![None; variables.len()];
        for key in tree.keys().filter(|k| k.starts_with("InitialConditions/")).map(str::to_string).collect::<Vec<_>>() {
            let name = &key["InitialConditions/".len()..];
            let i = variables
                .iter()
                .position(|v| v.name == name)
                .ok_or_else(|| Error::config(&key, format!("unknown variable '{name}'")))?;
            let src = tree.get_str(&key, "0");
            initial[i] = Some(SpaceTimeFn::parse(&src, &[]).map_err(|e| Error::config(&key, e.to_string()))?);
        }

        Ok(Simulation { system, solver, qois, adaptivity, output, initial })
    }

    /// Initial state at `t`, with constraints applied.
    pub fn initial_state(&self, t: f64) -> Result<Vec<f64>> {
        let dofs = self.system.dofs();
        let mut u = vec![0.0; self.system.n_dofs()];
        for (d, value) in u.iter_mut().enumerate() {
            if let Some(f) = &self.initial[dofs.dof_variable(d)] {
                let p = self.system.mesh().point(dofs.dof_node(d));
                *value = f.eval(p[0], p[1], t).map_err(|e| Error::config("InitialConditions", e.to_string()))?;
            }
        }
        self.system.constraints(t)?.distribute(&mut u);
        Ok(u)
    }

    fn has_initial(&self) -> bool {
        self.initial.iter().any(Option::is_some)
    }

    fn out_path(&self, suffix: &str) -> PathBuf {
        self.output.directory.join(format!("{}{suffix}", self.output.prefix))
    }

    fn write_fields(&self, u: &[f64], suffix: &str, summary: &mut RunSummary) -> Result<()> {
        if !self.output.vtk {
            return Ok(());
        }
        let path = self.out_path(suffix);
        write_vtk(self.system.mesh(), &point_fields(&self.system, u), &path, self.output.subdivide)?;
        summary.artifacts.push(path);
        Ok(())
    }

    fn write_text(&self, suffix: &str, text: &str, summary: &mut RunSummary) -> Result<()> {
        let path = self.out_path(suffix);
        std::fs::write(&path, text)?;
        summary.artifacts.push(path);
        Ok(())
    }

    /// Run the steady, continuation, transient or adaptive pipeline.
    pub fn run(&mut self) -> Result<RunSummary> {
        std::fs::create_dir_all(&self.output.directory)?;
        let mut summary = RunSummary::default();
        if let Some(settings) = self.adaptivity.clone() {
            let result = adapt_loop(&mut self.system, self.qois[0].as_mut(), &settings)?;
            self.write_text("_adaptivity.csv", &result.to_csv(), &mut summary)?;
            let last = result.history.last().expect("at least one cycle");
            summary.qoi_values.push((self.qois[0].name().to_string(), last.qoi_value));
            self.write_fields(&result.solution, ".vtk", &mut summary)?;
            summary.n_dofs = self.system.n_dofs();
            summary.solution = result.solution;
            return Ok(summary);
        }

        let guess = if self.has_initial() { Some(self.initial_state(0.0)?) } else { None };
        let u = match self.solver.kind.clone() {
            SolverKind::Steady => {
                let (u, rep) = steady_solve(&self.system, guess.as_deref(), &self.solver.newton)?;
                summary.newton.push(rep);
                u
            }
            SolverKind::Continuation { parameter, schedule } => {
                let (u, reps) =
                    continuation_solve(&mut self.system, &parameter, &schedule, guess.as_deref(), &self.solver.newton)?;
                summary.newton.extend(reps);
                u
            }
            SolverKind::Transient(mut settings) => {
                settings.output_every = self.output.vtk_every;
                let u0 = self.initial_state(settings.t0)?;
                let traj = transient_solve(&self.system, &u0, &settings, &self.solver.newton)?;
                for (step, _, u) in &traj.states {
                    self.write_fields(u, &format!("_{step:05}.vtk"), &mut summary)?;
                }
                self.write_text("_steps.csv", &traj.to_csv(), &mut summary)?;
                let u = traj.last().to_vec();
                for q in self.qois.iter_mut() {
                    let value = qoi_value(&self.system, &u, q.as_mut())?;
                    log::info!("QoI {} = {value:.12e}", q.name());
                    summary.qoi_values.push((q.name().to_string(), value));
                }
                summary.n_dofs = self.system.n_dofs();
                summary.solution = u;
                return Ok(summary);
            }
        };

        let mut log = String::from("stage,iteration,residual_norm\n");
        for (stage, rep) in summary.newton.iter().enumerate() {
            for (it, r) in rep.norms.iter().enumerate() {
                log.push_str(&format!("{stage},{it},{r:.12e}\n"));
            }
        }
        self.write_text("_newton.csv", &log, &mut summary)?;
        self.write_fields(&u, ".vtk", &mut summary)?;
        for i in 0..self.qois.len() {
            let q = self.qois[i].as_mut();
            let value = qoi_value(&self.system, &u, q)?;
            let est = dwr_estimate(&self.system, &u, q, &self.solver.newton.linear)?;
            log::info!("QoI {} = {value:.12e}, error estimate {:.3e}", q.name(), est.global);
            let name = q.name().to_string();
            let csv = format!("cycle,n_dofs,qoi_value,estimate\n0,{},{value:.15e},{:.15e}\n", self.system.n_dofs(), est.global);
            self.write_text(&format!("_{name}.csv"), &csv, &mut summary)?;
            summary.qoi_values.push((name, value));
        }
        summary.n_dofs = self.system.n_dofs();
        summary.solution = u;
        Ok(summary)
    }
}

/// Element kinds, subdomains and boundary ids the physics refers to must exist.
fn validate(physics: &Physics, mesh: &Mesh) -> Result<()> {
    let kind = mesh.quad_kind().ok_or_else(|| Error::config("Mesh", "mesh has no quadrilateral elements"))?;
    if physics.max_order() > 1 && kind != ElemKind::Quad9 {
        return Err(Error::config("Mesh", "SECOND order variables need QUAD9 elements"));
    }
    let ids = mesh.boundary_id_set();
    let subdomains = mesh.subdomain_set();
    for k in physics.kernels() {
        let path = format!("Physics/{}", k.name());
        if let Some(s) = k.active_subdomains().and_then(|s| s.iter().find(|s| !subdomains.contains(s))) {
            return Err(Error::config(format!("{path}/enabled_subdomains"), format!("subdomain {s} does not exist in the mesh")));
        }
        if let Some(id) = k.side_ids().into_iter().find(|id| !ids.contains(id)) {
            return Err(Error::config(format!("{path}/bc_ids"), format!("boundary id {id} does not exist in the mesh")));
        }
        for spec in k.dirichlet() {
            if let Some(id) = spec.boundary_ids.iter().find(|id| !ids.contains(id)) {
                return Err(Error::config(&spec.key, format!("boundary id {id} does not exist in the mesh")));
            }
        }
    }
    Ok(())
}

/// One value per mesh node for every variable, in declaration order.
/// First-order variables on quadratic meshes are filled in at mid-edge and
/// center nodes by bilinear interpolation.
pub fn point_fields(sys: &System, u: &[f64]) -> Vec<(String, Vec<f64>)> {
    let mesh = sys.mesh();
    let mut fields = Vec::new();
    for (i, v) in sys.physics.variables().iter().enumerate() {
        let mut values = vec![0.0; mesh.n_nodes()];
        let mut has = vec![false; mesh.n_nodes()];
        for d in sys.dofs().var_range(i) {
            let n = sys.dofs().dof_node(d);
            values[n] = u[d];
            has[n] = true;
        }
        if v.order == Order::First {
            for e in mesh.active_elements().filter(|e| e.kind == ElemKind::Quad9) {
                let c = e.corners();
                if !c.iter().all(|&n| has[n]) {
                    continue;
                }
                for s in 0..4 {
                    let m = e.nodes[4 + s];
                    if !has[m] {
                        values[m] = 0.5 * (values[c[s]] + values[c[(s + 1) % 4]]);
                    }
                }
                let m = e.nodes[8];
                if !has[m] {
                    values[m] = 0.25 * (values[c[0]] + values[c[1]] + values[c[2]] + values[c[3]]);
                }
            }
        }
        fields.push((v.name.clone(), values));
    }
    fields
}

/// Build a simulation from `tree`, run it and audit unused keys.
pub fn run(tree: &InputTree, registry: &FactoryRegistry, opts: &RunOptions) -> Result<RunSummary> {
    let mut sim = Simulation::from_input(tree, registry, opts)?;
    let mut summary = sim.run()?;
    summary.unused_keys = tree.unused_keys();
    for key in &summary.unused_keys {
        let loc = tree.entry(key).map(|e| e.location.to_string()).unwrap_or_default();
        log::warn!("unused input key '{key}' ({loc})");
    }
    Ok(summary)
}
