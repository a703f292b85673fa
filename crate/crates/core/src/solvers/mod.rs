//! Newton iteration, steady and theta-method drivers, parameter continuation,
//! and the sparse linear algebra they sit on.

pub mod linear;
pub mod sparse;

pub use linear::{linear_solve, linear_solve_transpose, LinearMethod, LinearOptions, LINEAR_TOLERANCE};
pub use sparse::{dot, norm2, CsrMatrix, TripletBuilder};

use crate::dofs::Constraints;
use crate::error::{Error, Result};
use crate::system::{ParameterHandle, State, System, TimeWeights, Want};

/// `(u_theta, u_dot)` for one theta step.
pub fn theta_state(u_n: &[f64], u_next: &[f64], theta: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let u_theta = u_n.iter().zip(u_next).map(|(a, b)| theta * b + (1.0 - theta) * a).collect();
    let u_dot = u_n.iter().zip(u_next).map(|(a, b)| (b - a) / dt).collect();
    (u_theta, u_dot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Step length multiplier per backtrack.
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub linear: LinearOptions,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iters: 25,
            backtrack_factor: 0.5,
            max_backtracks: 10,
            linear: LinearOptions::default(),
        }
    }
}

impl NewtonSettings {
    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::config("SolverOptions/abs_tol", "Newton tolerances must be positive"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::config("SolverOptions/backtrack_factor", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Residual norms per Newton iteration, starting with the initial guess.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub norms: Vec<f64>,
    pub iterations: usize,
}

impl NewtonReport {
    pub fn initial_norm(&self) -> f64 {
        self.norms.first().copied().unwrap_or(0.0)
    }

    pub fn final_norm(&self) -> f64 {
        self.norms.last().copied().unwrap_or(0.0)
    }

    pub fn relative_reduction(&self) -> f64 {
        let r0 = self.initial_norm();
        if r0 == 0.0 {
            0.0
        } else {
            self.final_norm() / r0
        }
    }
}

/// A nonlinear system `R(u) = 0`.
pub trait NonlinearProblem {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>>;

    fn residual_and_jacobian(&self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)>;

    /// Make `u` admissible (e.g. impose constraints) before iterating.
    fn project(&self, u: &mut [f64]) {
        let _ = u;
    }
}

/// Damped Newton: `J d = -R`, halving the step until `|R|` decreases.
pub fn newton_solve(problem: &dyn NonlinearProblem, guess: &[f64], settings: &NewtonSettings) -> Result<(Vec<f64>, NewtonReport)> {
    settings.validate()?;
    let mut u = guess.to_vec();
    problem.project(&mut u);
    let mut report = NewtonReport::default();
    let (mut r, mut jac) = problem.residual_and_jacobian(&u)?;
    let mut norm = norm2(&r);
    report.norms.push(norm);
    let r0 = norm;
    loop {
        if norm <= settings.abs_tol || norm <= settings.rel_tol * r0 {
            log::debug!("Newton converged in {} iterations, |R| = {norm:e}", report.iterations);
            return Ok((u, report));
        }
        if report.iterations >= settings.max_iters {
            return Err(Error::NonConvergence { iterations: report.iterations, final_norm: norm, norms: report.norms });
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = linear_solve(&jac, &rhs, &settings.linear)
            .map_err(|e| Error::Solver(format!("Newton iteration {}: {e}", report.iterations + 1)))?;
        let mut lambda = 1.0;
        let mut trial = u.clone();
        for k in 0..=settings.max_backtracks {
            for i in 0..u.len() {
                trial[i] = u[i] + lambda * delta[i];
            }
            let t = norm2(&problem.residual(&trial)?);
            if t < norm || k == settings.max_backtracks {
                if t >= norm {
                    log::warn!("line search failed to reduce |R| ({norm:e} -> {t:e}); taking the short step");
                }
                break;
            }
            lambda *= settings.backtrack_factor;
        }
        u = trial;
        report.iterations += 1;
        (r, jac) = problem.residual_and_jacobian(&u)?;
        norm = norm2(&r);
        report.norms.push(norm);
        log::debug!("Newton iteration {}: |R| = {norm:e}, step {lambda}", report.iterations);
        if !norm.is_finite() {
            return Err(Error::NonConvergence { iterations: report.iterations, final_norm: norm, norms: report.norms });
        }
    }
}

/// The condensed residual of a system at fixed constraints and time weights.
pub struct SystemProblem<'a> {
    pub system: &'a System,
    pub constraints: &'a Constraints,
    pub u_old: Option<&'a [f64]>,
    pub time: f64,
    pub weights: TimeWeights,
}

impl SystemProblem<'_> {
    fn state<'u>(&'u self, u: &'u [f64]) -> State<'u> {
        State { u, u_old: self.u_old, time: self.time, weights: self.weights }
    }
}

impl NonlinearProblem for SystemProblem<'_> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.system.assemble(self.constraints, &self.state(u), Want::Residual)?.residual)
    }

    fn residual_and_jacobian(&self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)> {
        let a = self.system.assemble(self.constraints, &self.state(u), Want::Both)?;
        Ok((a.residual, a.jacobian.expect("jacobian requested")))
    }

    fn project(&self, u: &mut [f64]) {
        self.constraints.distribute(u);
    }
}

/// Newton on the steady residual; the guess defaults to zero.
pub fn steady_solve(system: &System, guess: Option<&[f64]>, settings: &NewtonSettings) -> Result<(Vec<f64>, NewtonReport)> {
    let constraints = system.constraints(0.0)?;
    let zero = vec![0.0; system.n_dofs()];
    let problem = SystemProblem { system, constraints: &constraints, u_old: None, time: 0.0, weights: TimeWeights::steady() };
    newton_solve(&problem, guess.unwrap_or(&zero), settings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientSettings {
    pub theta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub t0: f64,
    /// Keep every `output_every`-th state (the first and last are always kept).
    pub output_every: usize,
}

impl TransientSettings {
    pub fn new(theta: f64, dt: f64, n_steps: usize) -> TransientSettings {
        TransientSettings { theta, dt, n_steps, t0: 0.0, output_every: 1 }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::config("SolverOptions/theta", format!("theta = {} is outside [0, 1]", self.theta)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("SolverOptions/dt", "time step must be positive"));
        }
        if self.output_every == 0 {
            return Err(Error::config("Output/output_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// `(step, time, state)` at the output cadence.
    pub states: Vec<(usize, f64, Vec<f64>)>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        &self.states.last().expect("trajectory holds the initial state").2
    }

    /// `step,time,residual_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,time,residual_norm\n");
        for r in &self.steps {
            s.push_str(&format!("{},{:.12e},{:.12e}\n", r.step, r.time, r.residual_norm));
        }
        s
    }
}

/// Theta-method time stepping from `initial` at `settings.t0`.
pub fn transient_solve(
    system: &System,
    initial: &[f64],
    settings: &TransientSettings,
    newton: &NewtonSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    if initial.len() != system.n_dofs() {
        return Err(Error::Usage(format!("initial condition has {} entries, system has {} dofs", initial.len(), system.n_dofs())));
    }
    let mut traj = Trajectory::default();
    let mut u = initial.to_vec();
    traj.states.push((0, settings.t0, u.clone()));
    for step in 1..=settings.n_steps {
        let t_next = settings.t0 + step as f64 * settings.dt;
        let wrap = |e: Error| Error::Step { step, source: Box::new(e) };
        let constraints = system.constraints(t_next).map_err(wrap)?;
        let problem = SystemProblem {
            system,
            constraints: &constraints,
            u_old: Some(&u),
            time: t_next,
            weights: TimeWeights::theta(settings.theta, settings.dt),
        };
        let (next, report) = newton_solve(&problem, &u, newton).map_err(wrap)?;
        traj.steps.push(StepRecord { step, time: t_next, residual_norm: report.final_norm(), iterations: report.iterations });
        u = next;
        if step % settings.output_every == 0 || step == settings.n_steps {
            traj.states.push((step, t_next, u.clone()));
        }
    }
    Ok(traj)
}

/// Steady solves along a parameter schedule, each started from the previous solution.
pub fn continuation_solve(
    system: &mut System,
    parameter: &ParameterHandle,
    schedule: &[f64],
    guess: Option<&[f64]>,
    settings: &NewtonSettings,
) -> Result<(Vec<f64>, Vec<NewtonReport>)> {
    if schedule.is_empty() {
        return Err(Error::config("SolverOptions/continuation_values", "empty continuation schedule"));
    }
    let mut u = guess.map(<[f64]>::to_vec);
    let mut reports = Vec::new();
    for &value in schedule {
        system.physics.set_parameter(parameter, value)?;
        let (sol, rep) = steady_solve(system, u.as_deref(), settings)?;
        log::info!("continuation {parameter} = {value:e}: {} Newton iterations", rep.iterations);
        u = Some(sol);
        reports.push(rep);
    }
    Ok((u.expect("schedule is nonempty"), reports))
}

/// Which driver a simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverKind {
    Steady,
    Transient(TransientSettings),
    Continuation { parameter: ParameterHandle, schedule: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub newton: NewtonSettings,
}
