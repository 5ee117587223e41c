use chaplygin_core::catalog::{build, CatalogEntry, Kind, NAMES};
use chaplygin_core::chaplygin::{grid, ReducedConnection, SystemClass};
use chaplygin_core::geom::{levi_civita, metric_residual};
use chaplygin_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(e: &CatalogEntry, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = e.default_region();
    let q = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
    let v = (0..lo.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    (q, v)
}

fn random_params(kind: Kind, rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    kind.schema().iter().map(|p| (p.name, p.default * rng.random_range(0.5..2.0))).collect()
}

/// `∇̃ − LC` entries of the carriage, corrected closed forms (sympy).
fn carriage_k1_k2(e: &CatalogEntry) -> (f64, f64) {
    let (m0, j, jw, l, r, c) =
        (e.param("m0"), e.param("J"), e.param("J_wheel"), e.param("l"), e.param("R"), e.param("c"));
    let m = m0 + 2.0 * e.param("m1");
    let den = 4.0 * c * c * (j * r * r + 2.0 * jw * c * c) * (2.0 * jw + m * r * r);
    let k1 = r.powi(5) * l * m0 * (j - m * c * c) / den;
    let k2 = r.powi(3) * l * m0 * (j * r * r + 4.0 * jw * c * c + m * r * r * c * c) / den;
    (k1, k2)
}

#[test]
fn parameters_validated() {
    assert!(matches!(build("mobile_robot", &[("m", -1.0)]), Err(Error::ParameterOutOfRange { .. })));
    assert!(matches!(build("mobile_robot", &[("R", 0.0)]), Err(Error::ParameterOutOfRange { .. })));
    assert!(matches!(build("mobile_robot", &[("mass", 1.0)]), Err(Error::ParameterOutOfRange { .. })));
    assert!(build("no_such_system", &[]).is_err());
    let e = build("two_wheeled_robot", &[("c", 0.4)]).unwrap();
    assert_eq!(e.param("c"), 0.4);
    assert_eq!(e.param("m0"), 10.0);
}

#[test]
fn triples_are_consistent() {
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        assert_eq!(e.full.dim(), e.system.base_dim() + e.system.group_dim(), "{name}");
        assert_eq!(e.full.constraint_count(), e.system.group_dim(), "{name}");
        assert_eq!(e.full.base_dim(), e.system.base_dim());
        assert_eq!(e.group.dim(), e.system.group_dim());
        for q in grid(&e.default_region().0, &e.default_region().1, 3) {
            assert!(e.group.structure_residual(&e.system, &q).unwrap() < 1e-12, "{name}");
        }
    }
}

#[test]
fn literature_values_at_random_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in NAMES {
        let kind = Kind::from_name(name).unwrap();
        for _ in 0..5 {
            let e = build(name, &random_params(kind, &mut rng)).unwrap();
            for _ in 0..20 {
                let (q, _) = random_point(&e, &mut rng);
                let geo = e.system.geometry_at(&q).unwrap();
                let g_ref = e.reference_reduced_metric(&q);
                assert!(geo.gt.max_abs_diff(&g_ref) < 1e-12, "{name} g");
                assert!(geo.k_tilde.max_abs_diff(&e.reference_k_tilde(&q)) < 1e-12, "{name} K");
                let beta = e.reference_beta(&q);
                let lean = e.system.beta(q.as_slice()).unwrap();
                for ((a, b), c) in geo.beta.iter().zip(&beta).zip(&lean) {
                    assert!((a - b).abs() < 1e-12, "{name} beta");
                    assert!((a - c).abs() < 1e-14, "{name} lean beta");
                }
            }
        }
    }
}

#[test]
fn carriage_curvature_at_identity() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let om = e.system.curvature_coeffs(&[0.3, -0.2]).unwrap();
    let (r, c) = (0.1, 0.3);
    assert!(om[0][(0, 1)].abs() < 1e-15 && om[2][(0, 1)].abs() < 1e-15);
    assert!((om[1][(0, 1)] + r * r / (2.0 * c)).abs() < 1e-15);
    assert!((om[1][(1, 0)] - r * r / (2.0 * c)).abs() < 1e-15);
}

#[test]
fn carriage_alpha_is_display_with_opposite_sign() {
    let e = build("two_wheeled_robot", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (q, v) = random_point(&e, &mut rng);
        let a = e.system.geometry_at(&q).unwrap().alpha(&v);
        let d = e.reference_alpha_display(&q, &v);
        assert!((a[0] + d[0]).abs() < 1e-10 && (a[1] + d[1]).abs() < 1e-10);
    }
}

#[test]
fn carriage_connection_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sets = vec![Vec::new()];
    sets.extend((0..5).map(|_| random_params(Kind::TwoWheeledRobot, &mut rng)));
    for (i, p) in sets.iter().enumerate() {
        let e = build("two_wheeled_robot", p).unwrap();
        let geo = e.system.geometry_at(&[0.1, 0.2]).unwrap();
        let s = geo.tilde.sub(&geo.lc);
        let (k1, k2) = (s[(0, 0, 0)], s[(1, 0, 0)]);
        let pattern = [
            ((0, 0, 0), k1),
            ((0, 0, 1), -k2),
            ((0, 1, 0), -k1),
            ((0, 1, 1), k2),
            ((1, 0, 0), k2),
            ((1, 0, 1), -k1),
            ((1, 1, 0), -k2),
            ((1, 1, 1), k1),
        ];
        for (idx, want) in pattern {
            assert!((s[idx] - want).abs() < 1e-10 * (1.0 + want.abs()), "{idx:?}");
        }
        let (c1, c2) = carriage_k1_k2(&e);
        assert!((k1 - c1).abs() < 1e-12 && (k2 - c2).abs() < 1e-12);
        if i == 0 {
            assert!((k1 - 3.013_626_834_381_55e-4).abs() < 1e-15);
            assert!((k2 - 1.280_136_268_343_82e-2).abs() < 1e-15);
        }
    }
}

#[test]
fn robot_connections_are_levi_civita() {
    let e = build("mobile_robot", &[]).unwrap();
    let (lo, hi) = e.default_region();
    for q in grid(&lo, &hi, 10) {
        let geo = e.system.geometry_at(&q).unwrap();
        assert!(geo.k_tilde.max_abs() < 1e-12);
        for which in ReducedConnection::ALL {
            assert!(geo.symbols(which).max_abs_diff(&geo.lc) < 1e-12);
        }
    }
}

#[test]
fn classification_and_equivalent_predicates() {
    let expected = [
        ("mobile_robot", SystemClass::HamiltonianReducible),
        ("two_wheeled_robot", SystemClass::GyroscopicallyForced),
        ("particle_modified", SystemClass::GyroscopicallyForced),
        ("particle_classical", SystemClass::GyroscopicallyForced),
    ];
    let tol = 1e-10;
    for (name, class) in expected {
        let e = build(name, &[]).unwrap();
        let (lo, hi) = e.default_region();
        let rep = e.system.classify(&grid(&lo, &hi, 5), tol).unwrap();
        assert_eq!(rep.class, class, "{name}");
        let preds = [
            rep.b_symmetric_part <= tol,
            rep.h2_metric_residual <= tol,
            rep.half_metric_residual <= tol,
            rep.half_minus_lc <= tol,
        ];
        assert!(preds.iter().all(|p| *p == preds[0]), "{name}: {rep:?}");
        if rep.tilde_minus_half <= 1e-10 {
            assert!(rep.tilde_minus_lc <= 1e-9);
        }
    }
}

#[test]
fn tilde_and_first_hamel_are_metric() {
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let (lo, hi) = e.default_region();
        for q in grid(&lo, &hi, 4) {
            let geo = e.system.geometry_at(&q).unwrap();
            assert!(metric_residual(&e.system, &geo.tilde, &q).unwrap() <= 1e-10, "{name}");
            assert!(metric_residual(&e.system, &geo.h1, &q).unwrap() <= 1e-10, "{name}");
            let lc = levi_civita(&e.system, q.as_slice()).unwrap();
            assert!(lc.max_abs_diff(&geo.lc) < 1e-12);
            let sym = |w| geo.symbols(w).sub(&geo.lc).symmetrized();
            for w in ReducedConnection::ALL.iter().skip(1) {
                assert!(sym(*w).max_abs_diff(&sym(ReducedConnection::Tilde)) < 1e-12, "{name}");
            }
        }
    }
}

#[test]
fn gyroscopic_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        for _ in 0..1000 {
            let (q, v) = random_point(&e, &mut rng);
            let geo = e.system.geometry_at(&q).unwrap();
            let a = geo.alpha(&v);
            let av: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!(av.abs() < 1e-12, "{name}");
            let xi = geo.xi(&v);
            for b in 0..v.len() {
                let ivxi: f64 = (0..v.len()).map(|c| v[c] * xi[(c, b)]).sum();
                assert!((ivxi - a[b]).abs() < 1e-12, "{name}");
            }
            let ac = geo.alpha_from_curvature(&v);
            assert!(a.iter().zip(&ac).all(|(x, y)| (x - y).abs() < 1e-12), "{name}");
            assert!(geo.xi_from_contorsion(&v).max_abs_diff(&xi) < 1e-12, "{name}");
        }
    }
}

#[test]
fn xi_derivative_vanishes_iff_xi_does() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in NAMES {
        let e = build(name, &[]).unwrap();
        let (mut xi_max, mut dxi_max) = (0.0f64, 0.0f64);
        for _ in 0..50 {
            let (q, v) = random_point(&e, &mut rng);
            let geo = e.system.geometry_at(&q).unwrap();
            xi_max = xi_max.max(geo.xi(&v).as_slice().iter().fold(0.0, |m, x| m.max(x.abs())));
            dxi_max = dxi_max.max(e.system.xi_exterior_derivative(&q, &v).unwrap().max_abs());
        }
        assert_eq!(xi_max < 1e-12, dxi_max < 1e-12, "{name}");
    }
}

#[test]
fn first_integral_listed() {
    let e = build("particle_classical", &[]).unwrap();
    let fi = e.first_integrals(&e.default_initial_state());
    assert_eq!(fi.len(), 1);
    assert!((fi[0].1 - 1.0).abs() < 1e-15);
}
