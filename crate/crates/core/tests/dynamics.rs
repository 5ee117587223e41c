use chaplygin_core::catalog::{build, NAMES};
use chaplygin_core::dynamics::*;
use chaplygin_core::reconstruction::{horizontal_lift, LiftOptions};

#[test]
fn reduced_matches_full_on_catalog() {
    let cfg = IntegratorConfig::rk4(1e-3);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let s0 = e.default_initial_state();
        let cmp = compare_full_reduced(&e.full, &e.system, &s0, (0.0, 1.0), &cfg).unwrap();
        println!("{name}: dev {:e} res {:e} dE {:e}", cmp.deviation, cmp.max_constraint_residual, cmp.full_energy_drift);
        assert!(cmp.deviation <= 1e-6, "{name}");
        assert!(cmp.max_constraint_residual <= 1e-9, "{name}");
    }
}

#[test]
fn lift_matches_full_oracle() {
    let cfg = IntegratorConfig::rk4(1e-3);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let s0 = e.default_initial_state();
        let cmp = compare_full_reduced(&e.full, &e.system, &s0, (0.0, 1.0), &cfg).unwrap();
        let red = integrate(&ReducedField::new(&e.system), &s0.flat(), (0.0, 1.0), &cfg).unwrap();
        let lift = horizontal_lift(&e.system, &e.group, &red, &e.group.identity(), &LiftOptions::default()).unwrap();
        let mut dev = 0.0f64;
        for i in 0..lift.t.len() {
            let y = lift.full_state(&e.system, &e.group, i).unwrap();
            for (a, b) in y.iter().zip(&cmp.full.states[i]) {
                dev = dev.max((a - b).abs());
            }
        }
        println!("{name}: lift dev {dev:e} gamma {:e}", lift.max_gamma_residual());
        assert!(dev <= 1e-5, "{name}");
        assert!(lift.max_gamma_residual() <= 1e-6, "{name}");
    }
}

#[test]
fn energy_is_conserved_on_catalog() {
    let cfg = IntegratorConfig::rk4(1e-3);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let s0 = e.default_initial_state();
        let tr = integrate(&ReducedField::new(&e.system), &s0.flat(), (0.0, 1.0), &cfg).unwrap();
        let e0 = tr.energy.as_ref().unwrap()[0];
        assert!(tr.energy_drift().unwrap() <= 1e-8 * (1.0 + e0.abs()), "{name}");
    }
}

#[test]
fn saddle_and_explicit_solves_agree() {
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let y = e.full.lift_initial(&e.system, &e.default_initial_state()).unwrap();
        let n = e.full.dim();
        let mut q = y[..n].to_vec();
        q[n - 1] += 0.4;
        let (a1, l1) = e.full.acceleration(&q, &y[n..], FullSolve::Saddle).unwrap();
        let (a2, l2) = e.full.acceleration(&q, &y[n..], FullSolve::Explicit).unwrap();
        for (x, y) in a1.iter().chain(&l1).zip(a2.iter().chain(&l2)) {
            assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()), "{name}");
        }
    }
}

#[test]
fn lagrangian_and_christoffel_forms_agree() {
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let s = e.default_initial_state();
        let a = reduced_acceleration(&e.system, &s.q, &s.v).unwrap();
        let b = reduced_acceleration_lagrangian(&e.system, &s.q, &s.v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{name}");
        }
    }
}

#[test]
fn zero_velocity_is_stationary() {
    let cfg = IntegratorConfig::rk4(1e-2);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let s0 = State::new(e.default_initial_state().q, vec![0.0; 2]);
        let cmp = compare_full_reduced(&e.full, &e.system, &s0, (0.0, 1.0), &cfg).unwrap();
        assert_eq!(cmp.deviation, 0.0);
        assert_eq!(cmp.reduced.last(), s0.flat().as_slice());
    }
}

#[test]
fn reduced_connection_geodesics_coincide() {
    let cfg = IntegratorConfig::rk4(1e-3);
    for name in ["two_wheeled_robot", "particle_modified"] {
        let e = build(name, &[]).unwrap();
        let d = geodesic_coincidence(&e.system, &e.default_initial_state(), (0.0, 1.0), &cfg).unwrap();
        assert!(d <= 1e-8, "{name}: {d}");
    }
}

#[test]
fn classical_particle_first_integral_and_adaptive_run() {
    let e = build("particle_classical", &[]).unwrap();
    let s0 = State::new(vec![0.0, 0.0], vec![1.0, 0.3]);
    let tr = integrate(&ReducedField::new(&e.system), &s0.flat(), (0.0, 10.0), &IntegratorConfig::rk4(1e-3)).unwrap();
    let worst = (0..tr.len()).map(|i| (e.first_integrals(&tr.state(i))[0].1 - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
    let ad = integrate(&ReducedField::new(&e.system), &s0.flat(), (0.0, 10.0), &IntegratorConfig::rk45(1e-10, 1e-12))
        .unwrap();
    let a = ad.state(ad.len() - 1);
    let b = tr.state(tr.len() - 1);
    assert!((a.q[1] - b.q[1]).abs() < 1e-7 && ad.meta.accepted_steps < tr.len());
}

#[test]
fn abelian_oracle_builder_matches_catalog_full_system() {
    for name in ["particle_modified", "particle_classical", "mobile_robot"] {
        let e = build(name, &[]).unwrap();
        let fs = FullSystem::from_abelian(&e.system).unwrap();
        let cmp = compare_full_reduced(&fs, &e.system, &e.default_initial_state(), (0.0, 1.0), &IntegratorConfig::rk4(1e-3))
            .unwrap();
        assert!(cmp.deviation <= 1e-9, "{name}");
    }
    let car = build("two_wheeled_robot", &[]).unwrap();
    assert!(FullSystem::from_abelian(&car.system).is_err());
}
