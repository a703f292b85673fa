use femforge::adjoint::{
    dwr_estimate, evaluate_qoi, prolongate, qoi_gradient, qoi_sensitivity, qoi_value, solve_adjoint, BoundaryFlux,
    DomainIntegral, PointValue, QoiKernel,
};
use femforge::fe::Order;
use femforge::kernels::{ConvectionDiffusion, Poisson, Velocity};
use femforge::mesh::{ElemKind, Mesh};
use femforge::solvers::{linear_solve, steady_solve, LinearOptions, NewtonSettings};
use femforge::system::{Discretization, ParameterHandle, Physics, PhysicsKernel, State, System, Want};

fn unit(n: usize, kind: ElemKind) -> Mesh {
    Mesh::generate_structured_quad(n, n, 0.0, 1.0, 0.0, 1.0, kind).unwrap()
}

fn system(kernels: Vec<Box<dyn PhysicsKernel>>, mesh: Mesh) -> System {
    System::new(Physics::new(kernels).unwrap(), mesh, None).unwrap()
}

fn poisson(order: Order, kappa: f64, source: &str, ids: &[i32], value: &str) -> Box<dyn PhysicsKernel> {
    Box::new(Poisson::new("u", order, kappa, source).unwrap().with_dirichlet(ids, value).unwrap())
}

#[test]
fn domain_integral_of_constant() {
    let sys = system(vec![poisson(Order::First, 1.0, "0", &[], "0")], unit(3, ElemKind::Quad4));
    let u = vec![3.0; sys.n_dofs()];
    let mut q = DomainIntegral::new("u", "1").unwrap();
    assert!((qoi_value(&sys, &u, &mut q).unwrap() - 3.0).abs() < 1e-13);
}

#[test]
fn point_value_reproduces_affine_fields() {
    for (n, r) in [(8, None), (5, Some(0.1)), (12, Some(0.05))] {
        let sys = system(vec![poisson(Order::First, 1.0, "0", &[], "0")], unit(n, ElemKind::Quad4));
        let u = sys.disc.interpolate(|_, p| p[0]);
        let mut q = PointValue::new("u", [0.8, 0.65], r);
        assert!((qoi_value(&sys, &u, &mut q).unwrap() - 0.8).abs() < 1e-12);
        let u = sys.disc.interpolate(|_, p| 2.0 - p[0] + 3.0 * p[1]);
        assert!((qoi_value(&sys, &u, &mut q).unwrap() - (2.0 - 0.8 + 1.95)).abs() < 1e-12);
    }
}

#[test]
fn qoi_derivatives_match_finite_differences() {
    let sys = system(vec![poisson(Order::Second, 1.0, "0", &[], "0")], unit(3, ElemKind::Quad9));
    let u: Vec<f64> = (0..sys.n_dofs()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let mut qois: Vec<Box<dyn QoiKernel>> = vec![
        Box::new(DomainIntegral::new("u", "1 + x*y").unwrap()),
        Box::new(BoundaryFlux::new("u", 1.5, [0, 1])),
        Box::new(PointValue::new("u", [0.4, 0.55], Some(0.2))),
    ];
    for q in qois.iter_mut() {
        q.init(sys.physics.variables()).unwrap();
        q.prepare(sys.mesh()).unwrap();
        let g = qoi_gradient(&sys.disc, &sys.physics, &u, q.as_ref()).unwrap();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..u.len() {
            let h = 1e-6;
            let mut up = u.clone();
            up[j] += h;
            let mut um = u.clone();
            um[j] -= h;
            let fd = (evaluate_qoi(&sys.disc, &sys.physics, &up, q.as_ref()).unwrap()
                - evaluate_qoi(&sys.disc, &sys.physics, &um, q.as_ref()).unwrap())
                / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * scale, "{} dof {j}: {fd} vs {}", q.name(), g[j]);
        }
    }
}

#[test]
fn boundary_flux_converges_at_second_order() {
    // u = sin(pi x) sin(pi y); flux through the bottom is -kappa * int pi sin(pi x) dx = -2 kappa.
    let kappa = 1.3;
    let mut errs = Vec::new();
    for n in [8, 16, 32] {
        let src = "kappa*2*pi^2*sin(pi*x)*sin(pi*y)";
        let sys = system(vec![poisson(Order::First, kappa, src, &[0, 1, 2, 3], "0")], unit(n, ElemKind::Quad4));
        let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
        let mut q = BoundaryFlux::new("u", kappa, [0]);
        errs.push((qoi_value(&sys, &u, &mut q).unwrap() + 2.0 * kappa).abs());
    }
    for k in 0..2 {
        assert!(errs[k] / errs[k + 1] > 3.0, "{errs:?}");
    }
}

#[test]
fn symmetric_adjoint_equals_forward_solve_with_qoi_load() {
    let sys = system(vec![poisson(Order::First, 1.0, "1", &[0, 1, 2, 3], "0")], unit(6, ElemKind::Quad4));
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "x").unwrap();
    let p = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap().p;
    let c = sys.constraints(0.0).unwrap();
    let jac = sys.assemble(&c, &State::steady(&u), Want::Jacobian).unwrap().jacobian.unwrap();
    let g = qoi_gradient(&sys.disc, &sys.physics, &u, &q).unwrap();
    let mut forward = linear_solve(&jac, &c.condense_vector(&g), &LinearOptions::default()).unwrap();
    c.distribute_homogeneous(&mut forward);
    for i in 0..u.len() {
        assert!((p[i] - forward[i]).abs() < 1e-12);
    }
}

#[test]
fn linear_adjoint_consistency_and_self_duality() {
    // R = A u - b. With Q = q^T u: Q(u_h) = p^T b on the free rows.
    let sys = system(vec![poisson(Order::Second, 0.7, "1 + x", &[0, 1, 2, 3], "0")], unit(4, ElemKind::Quad9));
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "sin(3*x) + y").unwrap();
    let p = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap().p;
    let zero = vec![0.0; u.len()];
    let b: Vec<f64> = femforge::adjoint::raw_residual(&sys.disc, &sys.physics, &State::steady(&zero))
        .unwrap()
        .iter()
        .map(|r| -r)
        .collect();
    let qu = qoi_value(&sys, &u, &mut q).unwrap();
    let pb: f64 = p.iter().zip(&b).map(|(p, b)| p * b).sum();
    assert!((qu - pb).abs() <= 1e-10 * qu.abs());

    // With the QoI weight equal to the load, the adjoint is the forward solution.
    let mut q = DomainIntegral::new("u", "1 + x").unwrap();
    let p = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap().p;
    for i in 0..u.len() {
        assert!((p[i] - u[i]).abs() < 1e-12);
    }
}

#[test]
fn convection_reverses_the_adjoint_boundary_layer() {
    // Strip along x, flow to the right: the forward layer sits at the outflow
    // (x = 1), the adjoint layer at the inflow (x = 0).
    let mesh = Mesh::generate_structured_quad(40, 1, 0.0, 1.0, 0.0, 0.1, ElemKind::Quad4).unwrap();
    let vel = Velocity::Field(
        femforge::expr::SpaceTimeFn::constant(1.0),
        femforge::expr::SpaceTimeFn::constant(0.0),
    );
    let k = ConvectionDiffusion::new("u", Order::First, 0.02, vel, "1").unwrap().with_dirichlet(&[1, 3], "0").unwrap();
    let sys = system(vec![Box::new(k)], mesh);
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "1").unwrap();
    let p = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap().p;
    let argmax = |v: &[f64]| {
        let i = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        sys.mesh().point(sys.dofs().dof_node(i))[0]
    };
    assert!(argmax(&u) > 0.8, "forward peak at {}", argmax(&u));
    assert!(argmax(&p) < 0.2, "adjoint peak at {}", argmax(&p));
}

#[test]
fn prolongation_is_exact_for_the_discrete_space() {
    for (kind, order) in [(ElemKind::Quad4, Order::First), (ElemKind::Quad9, Order::Second)] {
        let mut mesh = unit(3, kind);
        mesh = mesh.refine(&[4].into_iter().collect()).unwrap();
        let sys = system(vec![poisson(order, 1.0, "0", &[], "0")], mesh);
        let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] - p[1] + if order == Order::Second { p[0] * p[1] + p[1] * p[1] } else { 0.0 };
        let mut u = sys.disc.interpolate(|_, p| f(p));
        sys.disc.hanging.distribute(&mut u);
        let fine = Discretization::new(sys.mesh().refine_uniformly(), sys.physics.variables(), None).unwrap();
        let iu = prolongate(&sys.disc, &fine, &u).unwrap();
        for d in 0..fine.n_dofs() {
            let p = fine.mesh.point(fine.dofs.dof_node(d));
            assert!((iu[d] - f(p)).abs() < 1e-12, "{kind:?} dof {d}");
        }
    }
}

#[test]
fn estimate_vanishes_for_representable_solution() {
    let sys = system(vec![poisson(Order::First, 1.0, "0", &[0, 1, 2, 3], "1 + x - 2*y")], unit(6, ElemKind::Quad4));
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "x*x").unwrap();
    let est = dwr_estimate(&sys, &u, &mut q, &LinearOptions::default()).unwrap();
    assert!(est.global.abs() <= 1e-10, "{}", est.global);
}

#[test]
fn estimate_equals_fine_space_qoi_change_for_linear_problems() {
    let sys = system(vec![poisson(Order::First, 1.0, "exp(x)*y", &[0, 1, 2, 3], "0")], unit(5, ElemKind::Quad4));
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "1 + y").unwrap();
    let est = dwr_estimate(&sys, &u, &mut q, &LinearOptions::default()).unwrap();
    let fine = system(
        vec![poisson(Order::First, 1.0, "exp(x)*y", &[0, 1, 2, 3], "0")],
        sys.mesh().refine_uniformly(),
    );
    let (uf, _) = steady_solve(&fine, None, &NewtonSettings::default()).unwrap();
    let diff = qoi_value(&fine, &uf, &mut q).unwrap() - qoi_value(&sys, &u, &mut q).unwrap();
    assert!((est.global - diff).abs() <= 1e-8 * diff.abs().max(1e-12), "{} vs {diff}", est.global);
    let signed: f64 = est.contributions.iter().sum();
    assert!((signed - est.global).abs() <= 1e-12 * est.global.abs().max(1e-300));
    assert!(est.indicators.iter().all(|&i| i >= 0.0));
}

#[test]
fn strip_sensitivity_matches_closed_form() {
    for kappa in [0.5, 1.0, 2.0] {
        let mesh = Mesh::generate_structured_quad(4, 1, 0.0, 1.0, 0.0, 1.0, ElemKind::Quad9).unwrap();
        let mut sys = system(vec![poisson(Order::Second, kappa, "1", &[1, 3], "0")], mesh);
        let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
        let mut q = DomainIntegral::new("u", "1").unwrap();
        let value = qoi_value(&sys, &u, &mut q).unwrap();
        assert!((value - 1.0 / (12.0 * kappa)).abs() < 1e-12);
        let adj = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap();
        let h = ParameterHandle::parse("Poisson/kappa").unwrap();
        let g = qoi_sensitivity(&mut sys, &u, &adj, &mut q, std::slice::from_ref(&h)).unwrap();
        let exact = -1.0 / (12.0 * kappa * kappa);
        assert!((g[0] - exact).abs() <= 1e-4 * exact.abs(), "kappa {kappa}: {} vs {exact}", g[0]);
        assert_eq!(sys.physics.parameter(&h).unwrap(), kappa);
    }
}

#[test]
fn insensitive_parameter_has_zero_gradient() {
    let mut sys = system(vec![poisson(Order::First, 1.0, "1", &[0, 1, 2, 3], "0")], unit(4, ElemKind::Quad4));
    let (u, _) = steady_solve(&sys, None, &NewtonSettings::default()).unwrap();
    let mut q = DomainIntegral::new("u", "1").unwrap();
    let adj = solve_adjoint(&sys, &u, &mut q, &LinearOptions::default()).unwrap();
    let g = qoi_sensitivity(&mut sys, &u, &adj, &mut q, &[ParameterHandle::parse("Poisson/rho_cp").unwrap()]).unwrap();
    assert_eq!(g[0], 0.0);
}
