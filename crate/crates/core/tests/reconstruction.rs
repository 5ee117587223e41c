use chaplygin_core::catalog::build;
use chaplygin_core::chaplygin::{ChaplyginData, ChaplyginSystem};
use chaplygin_core::dynamics::{integrate, IntegratorConfig, ReducedField, State, Trajectory};
use chaplygin_core::expr::Expr;
use chaplygin_core::reconstruction::*;
use chaplygin_core::Error;

fn reduced(e: &chaplygin_core::catalog::CatalogEntry, s0: &State, t: f64) -> Trajectory {
    integrate(&ReducedField::new(&e.system), &s0.flat(), (0.0, t), &IntegratorConfig::rk4(1e-3)).unwrap()
}

#[test]
fn zero_connection_keeps_fiber_fixed() {
    let sys = ChaplyginSystem::new(ChaplyginData {
        name: "flat".into(),
        base: vec!["a".into(), "b".into()],
        group_dim: 1,
        structure: vec![0.0],
        gamma: vec![Expr::Num(0.0), Expr::Num(0.0)],
        g_bb: vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0), Expr::Num(2.0)],
        g_bg: vec![Expr::Num(0.0), Expr::Num(0.0)],
        g_gg: vec![Expr::Num(1.0)],
        potential: None,
    })
    .unwrap();
    let tr = integrate(&ReducedField::new(&sys), &[0.0, 0.0, 1.0, -1.0], (0.0, 1.0), &IntegratorConfig::rk4(1e-2))
        .unwrap();
    let gm = GroupModel::abelian(1);
    let lift = horizontal_lift(&sys, &gm, &tr, &[0.7], &LiftOptions::default()).unwrap();
    assert!(lift.fiber.iter().all(|f| f[0] == 0.7));
    let h = holonomy(&sys, &gm, &BaseLoop::square(&[0.0, 0.0], (0, 1), 1.0), 50).unwrap();
    assert_eq!(h.displacement, vec![0.0]);
}

#[test]
fn counter_example_lift_matches_quadrature() {
    let e = build("particle_modified", &[]).unwrap();
    let s0 = State::new(vec![0.5, -0.3], vec![1.0, 0.8]);
    let tr = reduced(&e, &s0, 1.0);
    let lift = horizontal_lift(&e.system, &e.group, &tr, &[0.25], &LiftOptions::default()).unwrap();
    // z(t) = z0 + ∫ y x ẋ ds, Simpson per interval with the Hermite midpoint
    let mut z = 0.25;
    for i in 0..tr.len() - 1 {
        let f = |k: usize| {
            let s = &tr.states[k];
            s[1] * s[0] * s[2]
        };
        let h = tr.t[i + 1] - tr.t[i];
        let (a, b) = (tr.state(i), tr.state(i + 1));
        // Hermite midpoint
        let qm: Vec<f64> = (0..2).map(|c| 0.5 * (a.q[c] + b.q[c]) + h / 8.0 * (a.v[c] - b.v[c])).collect();
        let vm: Vec<f64> = (0..2).map(|c| 1.5 * (b.q[c] - a.q[c]) / h - 0.25 * (a.v[c] + b.v[c])).collect();
        z += h / 6.0 * (f(i) + 4.0 * qm[1] * qm[0] * vm[0] + f(i + 1));
        assert!((lift.fiber[i + 1][0] - z).abs() < 1e-8);
    }
}

#[test]
fn carriage_lift_satisfies_constraints() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let s0 = State::new(vec![0.0, 0.0], vec![2.0, -1.0]);
    let tr = reduced(&e, &s0, 2.0);
    let lift = horizontal_lift(&e.system, &e.group, &tr, &[0.0, 0.0, 0.0], &LiftOptions::default()).unwrap();
    let n = e.full.dim();
    let mut worst: f64 = 0.0;
    for i in 0..lift.t.len() {
        let y = lift.full_state(&e.system, &e.group, i).unwrap();
        worst = worst.max(e.full.constraint_residual(&y[..n], &y[n..]).unwrap());
    }
    assert!(worst <= 1e-6, "{worst}");
    let chk = verify_lift(&e.system, &e.group, &lift, &tr).unwrap();
    assert_eq!(chk.projection_mismatch, 0.0);
    assert!(chk.gamma_residual <= 1e-6);
}

#[test]
fn perturbed_lift_is_detected() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let tr = reduced(&e, &e.default_initial_state(), 1.0);
    let mut lift = horizontal_lift(&e.system, &e.group, &tr, &[0.0, 0.0, 0.0], &LiftOptions::default()).unwrap();
    let mid = lift.fiber.len() / 2;
    lift.fiber[mid][0] += 1e-4;
    let chk = verify_lift(&e.system, &e.group, &lift, &tr).unwrap();
    assert!(chk.gamma_residual > 1e-6, "{}", chk.gamma_residual);
}

#[test]
fn coarse_base_grid_rejected() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let tr = integrate(
        &ReducedField::new(&e.system),
        &State::new(vec![0.0, 0.0], vec![30.0, -20.0]).flat(),
        (0.0, 5.0),
        &IntegratorConfig::rk4(0.25),
    )
    .unwrap();
    let r = horizontal_lift(&e.system, &e.group, &tr, &[0.0; 3], &LiftOptions::default());
    assert!(matches!(r, Err(Error::InterpolationTooCoarse { .. })));
}

#[test]
fn robot_square_holonomy_matches_curvature() {
    let e = build("mobile_robot", &[]).unwrap();
    let s = 0.5;
    let lp = BaseLoop::square(&[0.0, 0.0], (0, 1), s);
    let h = holonomy(&e.system, &e.group, &lp, 2000).unwrap();
    let flux = curvature_flux(&e.system, &[0.0, 0.0], (0, 1), s, s, 8).unwrap();
    let r = 0.3;
    assert!((flux[0] - r * s * (s.cos() - 1.0)).abs() < 1e-12);
    assert!((flux[1] - r * s * s.sin()).abs() < 1e-12);
    for i in 0..2 {
        assert!((h.displacement[i] - flux[i]).abs() < 1e-6, "{i}");
    }
    assert!(h.closure_residual <= 1e-10);
}

#[test]
fn holonomy_composes_over_concatenated_loops() {
    for name in ["mobile_robot", "two_wheeled_robot"] {
        let e = build(name, &[]).unwrap();
        let l1 = BaseLoop::square(&[0.1, -0.2], (0, 1), 0.6);
        // circle starting at the square's corner
        let circ = BaseLoop::circle(&[-0.3, -0.2], (0, 1), 0.4);
        assert!(circ.then(&l1).closure_residual() < 1e-15);
        let h1 = holonomy(&e.system, &e.group, &l1, 400).unwrap();
        let h2 = holonomy(&e.system, &e.group, &circ, 400).unwrap();
        let h12 = holonomy(&e.system, &e.group, &l1.then(&circ), 400).unwrap();
        let comp = e.group.compose(&h1.displacement, &h2.displacement);
        for (a, b) in comp.iter().zip(&h12.displacement) {
            assert!((a - b).abs() < 1e-8, "{name}");
        }
    }
}

#[test]
fn carriage_square_holonomy_is_nonzero_and_converged() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let lp = BaseLoop::square(&[0.0, 0.0], (0, 1), 1.0);
    let coarse = holonomy(&e.system, &e.group, &lp, 200).unwrap();
    let fine = holonomy(&e.system, &e.group, &lp, 4000).unwrap();
    for (a, b) in coarse.displacement.iter().zip(&fine.displacement) {
        assert!((a - b).abs() < 1e-8);
    }
    // Ω³ = 0 so the heading returns; the translation does not
    assert!(fine.displacement[2].abs() < 1e-12);
    assert!(fine.displacement[0].abs() + fine.displacement[1].abs() > 1e-5);
}

#[test]
fn carriage_small_loop_follows_curvature_sign() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let (r, c, s) = (0.1, 0.3, 1e-2);
    let h = holonomy(&e.system, &e.group, &BaseLoop::square(&[0.0, 0.0], (0, 1), s), 200).unwrap();
    // −Ω²_12 s² to leading order
    let lead = r * r / (2.0 * c) * s * s;
    assert!((h.displacement[1] - lead).abs() < 0.05 * lead, "{:?}", h.displacement);
}

#[test]
fn open_loop_rejected() {
    let e = build("mobile_robot", &[]).unwrap();
    let lp = BaseLoop {
        descriptor: "open".into(),
        segments: vec![Segment::Line { from: vec![0.0, 0.0], to: vec![1.0, 0.0] }],
    };
    assert!(matches!(holonomy(&e.system, &e.group, &lp, 10), Err(Error::LoopNotClosed { .. })));
}
