use chaplygin_core::catalog::build;
use chaplygin_core::dynamics::{IntegratorConfig, State};
use chaplygin_core::expr::{ParsedField, Shape};
use chaplygin_core::measure::*;

fn region(lo: f64, hi: f64, simply_connected: bool) -> Region {
    Region::new(vec![lo, lo], vec![hi, hi], 9, simply_connected).unwrap()
}

fn field(text: &str) -> ParsedField {
    ParsedField::parse(&["x", "y"], &[text], Shape::Scalar).unwrap()
}

#[test]
fn modified_particle_has_no_measure() {
    let e = build("particle_modified", &[]).unwrap();
    let b = beta_form(&e.system, &[1.0, 1.0]).unwrap();
    assert!(b[0].abs() < 1e-14);
    assert!((b[1] + 0.5).abs() < 1e-10);
    // ∂_x β_y = −2xy/(1+x²y²)² = −0.5 at (1, 1)
    assert!((closedness_at(&e.system, &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
    let rep = measure_verdict(&e.system, &region(-2.0, 2.0, true), &MeasureOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::NoInvariantMeasure);
    assert!(rep.closedness_residual > rep.threshold && rep.potential.is_none());
    let l = rectangle_loop_integral(&e.system, &[0.0, 0.0], (0, 1), 1.0, 1.0).unwrap();
    // ∮β = ∬ ∂_x β_y = ∫_0^1 β_y(1, y) dy
    let exact = -0.5 * (2.0f64).ln();
    assert!((l - exact).abs() < 1e-10, "{l}");
}

#[test]
fn h_examples() {
    let e = build("particle_modified", &[]).unwrap();
    let h = h_function(&e.system, &[1.0, 1.0], &[0.0, 1.0]).unwrap();
    assert!((h.value() + 0.5).abs() < 1e-12 && h.mismatch() < 1e-12);
    let h2 = h_function(&e.system, &[1.0, 1.0], &[0.7, -1.3]).unwrap();
    let h4 = h_function(&e.system, &[1.0, 1.0], &[1.4, -2.6]).unwrap();
    assert!((h4.value() - 2.0 * h2.value()).abs() < 1e-12);
    let r = build("mobile_robot", &[]).unwrap();
    assert_eq!(h_function(&r.system, &[0.3, 0.1], &[1.0, 2.0]).unwrap().value(), 0.0);
}

#[test]
fn classical_particle_measure() {
    let e = build("particle_classical", &[]).unwrap();
    let rep = measure_verdict(&e.system, &region(-2.0, 2.0, true), &MeasureOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::InvariantMeasure, "{}", rep.reason);
    assert!(rep.closedness_residual <= 1e-12);
    let p = rep.potential.as_ref().unwrap();
    let f1: f64 = p.eval(&e.system, &[0.4, 1.0]).unwrap();
    assert!((f1 + 0.5 * 2f64.ln()).abs() < 1e-8);
    assert!((p.k(&e.system, &[0.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-8);
    for y in [-1.5, 0.3, 1.9] {
        let rho = density(&e.system, p, &[0.1, y]).unwrap();
        assert!((rho - (1.0 + y * y).sqrt()).abs() < 1e-8);
    }
    let open = measure_verdict(&e.system, &region(-2.0, 2.0, false), &MeasureOptions::default()).unwrap();
    assert_eq!(open.verdict, Verdict::Inconclusive);
}

#[test]
fn robot_measure_is_unit_density() {
    let e = build("mobile_robot", &[]).unwrap();
    let pi = std::f64::consts::PI;
    let reg = Region::new(vec![-pi, -pi], vec![pi, pi], 5, true).unwrap();
    let rep = measure_verdict(&e.system, &reg, &MeasureOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::InvariantMeasure);
    let p = rep.potential.unwrap();
    assert_eq!(p.k(&e.system, &[1.0, 2.0]).unwrap(), 1.0);
    let rho = density(&e.system, &UnitDensity, &[0.5, 0.5]).unwrap();
    let (m, j, jw, r) = (2.0, 0.5, 0.1, 0.3);
    assert!((rho - j * (3.0 * jw + m * r * r)).abs() < 1e-12);
}

#[test]
fn transport_checks() {
    let e = build("particle_classical", &[]).unwrap();
    let k = field("1/sqrt(1+y^2)");
    let init: Vec<State> = (0..10)
        .map(|i| {
            let s = i as f64 * 0.37;
            State::new(vec![s.sin(), (1.3 * s).cos()], vec![(0.7 * s).cos(), 0.5 * s.sin() - 0.2])
        })
        .collect();
    let rep = verify_invariance(&e.system, &k, &init, (0.0, 5.0), &IntegratorConfig::rk4(1e-3)).unwrap();
    assert!(rep.max_drift <= 1e-6, "{}", rep.max_drift);
    assert!(rep.pointwise_residual < 1e-12);

    let m = build("particle_modified", &[]).unwrap();
    let s0 = [State::new(vec![1.0, 1.0], vec![1.0, 0.5])];
    let bad = verify_invariance(&m.system, &UnitDensity, &s0, (0.0, 5.0), &IntegratorConfig::rk4(1e-3)).unwrap();
    assert!(bad.max_drift > 1e-2, "{}", bad.max_drift);

    let r = build("mobile_robot", &[]).unwrap();
    let s0 = [r.default_initial_state()];
    let ok = verify_invariance(&r.system, &UnitDensity, &s0, (0.0, 1.0), &IntegratorConfig::rk4(1e-3)).unwrap();
    assert_eq!(ok.pointwise_residual, 0.0);
}

#[test]
fn stanchenko_conditions() {
    let e = build("particle_classical", &[]).unwrap();
    let samples: Vec<State> = (0..25)
        .map(|i| {
            let s = i as f64;
            State::new(vec![(0.3 * s).sin(), 1.5 * (0.7 * s).cos()], vec![(1.1 * s).cos(), (0.4 * s).sin()])
        })
        .collect();
    let good = check_stanchenko(&e.system, &field("-0.5*ln(1+y^2)"), &samples, 1e-8).unwrap();
    assert!(good.as2_holds() && good.as3_holds(), "{good:?}");
    let zero = check_stanchenko(&e.system, &field("0"), &samples, 1e-8).unwrap();
    let max_xi = samples.iter().map(|s| (s.v[0] * s.q[1]).abs()).fold(0.0, f64::max);
    assert!((zero.as2 - max_xi).abs() < 1e-12 && !zero.as2_holds());
    let r = build("mobile_robot", &[]).unwrap();
    let s = [r.default_initial_state()];
    let rf = ParsedField::parse(&["theta", "psi"], &["0"], Shape::Scalar).unwrap();
    let rr = check_stanchenko(&r.system, &rf, &s, 1e-8).unwrap();
    assert_eq!((rr.as2, rr.as3), (0.0, 0.0));
}

#[test]
fn potential_requires_closed_beta() {
    let e = build("particle_modified", &[]).unwrap();
    let err = beta_potential(&e.system, &region(-1.0, 1.0, true), &[0.0, 0.0], &MeasureOptions::default());
    assert!(matches!(err, Err(chaplygin_core::Error::NotClosed { .. })));
}

#[test]
fn carriage_density_is_exponential_of_linear_potential() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let (lo, hi) = e.default_region();
    let region = Region::new(lo, hi, 9, true).unwrap();
    let rep = measure_verdict(&e.system, &region, &MeasureOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::InvariantMeasure, "{}", rep.reason);
    assert!(rep.exactness_residual.unwrap() <= 1e-12);
    // constant beta: f = beta . q with the center at the origin
    let beta = e.reference_beta(&[0.0, 0.0]);
    for (q, f) in &rep.potential.as_ref().unwrap().grid {
        let lin = beta[0] * q[0] + beta[1] * q[1];
        assert!((f - lin).abs() < 1e-13, "{q:?}");
    }
}
