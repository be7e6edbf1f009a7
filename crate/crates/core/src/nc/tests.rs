use super::*;
use crate::connection::{coriolis_form, frame_parallel_connection, impose_compatibility, lambda_connection, newton_cartan_preset, torsion_xi_connection};
use crate::geometry::{factorize_frame, frame_section, FrameSection};
use crate::moduli::{build_space, compute_twistor_lines, default_deformation, restricted_jets, Preset, TwistorSpaceSpec};
use crate::symbolic::{q, qf, Monomial};

fn c(name: &str) -> SymExpr {
    sym(registry::coordinate(name))
}

fn coords(names: &[&str]) -> Vec<Var> {
    names.iter().map(|n| registry::coordinate(n)).collect()
}

fn all_zero(t: &TensorField) -> bool {
    t.is_zero()
}

#[test]
fn zero_connection_is_flat() {
    let x = coords(&["t", "y", "z"]);
    let conn = ConnectionFamily::from_fn(&x, |_, _, _| SymExpr::zero());
    let k = curvature(&conn);
    assert!(k.riemann.is_zero() && k.ricci.is_zero() && k.torsion.is_zero());
    let g = standard_galilean(&x);
    assert!(check_trautman(&conn, &g).unwrap().is_zero());
    assert!(field_residual(&conn, &g, &SymExpr::zero(), four_pi_g()).is_zero());
}

#[test]
fn riemann_is_antisymmetric_in_last_pair() {
    let x = coords(&["t", "y", "z"]);
    let f = sym(registry::function("f", &x));
    let conn = ConnectionFamily::from_fn(&x, |a, b, cc| if a == 1 && b == cc { f.mul(&c("y")) } else if a == 2 && b == 0 && cc == 1 { f.clone() } else { SymExpr::zero() });
    let r = curvature(&conn).riemann;
    for idx in r.indices() {
        let swapped = [idx[0], idx[1], idx[3], idx[2]];
        assert_eq!(r.get(&idx), &r.get(&swapped).neg());
    }
}

#[test]
fn vacuum_harmonic_potential() {
    let x = coords(&["t", "x", "y", "z"]);
    let v = c("y").mul(&c("y")).sub(&c("z").mul(&c("z")));
    let conn = vacuum_nc_connection(&x, &v, &SymExpr::zero());
    let g = standard_galilean(&x);
    assert!(curvature(&conn).ricci.is_zero());
    assert!(field_residual(&conn, &g, &SymExpr::zero(), four_pi_g()).is_zero());
    assert!(check_trautman(&conn, &g).unwrap().is_zero());
    assert_eq!(check_newton_cartan(&g, &conn).unwrap().class, NcClass::NewtonCartan);
}

#[test]
fn vacuum_with_coriolis_potential() {
    // Laplacian V + 2 |grad Omega|^2 = 0 with Omega = x.
    let x = coords(&["t", "x", "y", "z"]);
    let r2 = c("x").mul(&c("x")).add(&c("y").mul(&c("y"))).add(&c("z").mul(&c("z")));
    let v = r2.scale(&qf(-1, 3));
    let conn = vacuum_nc_connection(&x, &v, &c("x"));
    let g = standard_galilean(&x);
    assert!(field_residual(&conn, &g, &SymExpr::zero(), four_pi_g()).is_zero());
    assert!(check_trautman(&conn, &g).unwrap().is_zero());
    // Without the compensating potential the field equations fail.
    let bare = vacuum_nc_connection(&x, &SymExpr::zero(), &c("x"));
    assert!(!field_residual(&bare, &g, &SymExpr::zero(), four_pi_g()).is_zero());
}

#[test]
fn constant_density_source() {
    let x = coords(&["t", "x", "y", "z"]);
    let rho0 = sym(registry::constant("rho0"));
    let r2 = c("x").mul(&c("x")).add(&c("y").mul(&c("y"))).add(&c("z").mul(&c("z")));
    let v = r2.mul(&sym(four_pi_g())).mul(&rho0).scale(&qf(1, 6));
    let conn = vacuum_nc_connection(&x, &v, &SymExpr::zero());
    let g = standard_galilean(&x);
    assert!(field_residual(&conn, &g, &rho0, four_pi_g()).is_zero());
    assert!(!field_residual(&conn, &g, &SymExpr::zero(), four_pi_g()).is_zero());
}

fn desk_force(exact: bool) -> (ConnectionFamily, GalileanStructure) {
    let x = coords(&["t", "x", "y"]);
    let g = standard_galilean(&x);
    let f = if exact {
        let a = OneForm { coords: x.clone(), comps: ["A_t", "A_x", "A_y"].iter().map(|n| sym(registry::function(n, &x))).collect() };
        a.exterior_derivative()
    } else {
        let mut f = TwoForm::zero(&x);
        f.set(1, 2, c("t"));
        f
    };
    (general_nc_connection(&g, &f), g)
}

#[test]
fn trautman_holds_for_exact_force() {
    let (conn, g) = desk_force(true);
    assert!(conn.is_symmetric());
    assert_eq!(check_newton_cartan(&g, &conn).unwrap().class, NcClass::NewtonCartan);
    assert!(check_trautman(&conn, &g).unwrap().is_zero());
}

#[test]
fn trautman_fails_for_non_closed_force() {
    let (conn, g) = desk_force(false);
    assert_eq!(check_newton_cartan(&g, &conn).unwrap().class, NcClass::NewtonCartan);
    assert!(!check_trautman(&conn, &g).unwrap().is_zero());
}

#[test]
fn trautman_rejects_torsion() {
    let x = coords(&["t", "y", "z"]);
    let conn = ConnectionFamily::from_fn(&x, |a, b, cc| if (a, b, cc) == (1, 0, 2) { SymExpr::one() } else { SymExpr::zero() });
    assert_eq!(check_trautman(&conn, &standard_galilean(&x)).unwrap_err(), NcError::RequiresTorsionFree);
}

#[test]
fn mismatched_clock_is_incompatible() {
    let x = coords(&["t", "y", "z"]);
    let conn = ConnectionFamily::from_fn(&x, |a, b, cc| if (a, b, cc) == (0, 0, 0) { SymExpr::one() } else { SymExpr::zero() });
    let r = check_newton_cartan(&standard_galilean(&x), &conn).unwrap();
    assert_eq!(r.class, NcClass::Incompatible);
    assert!(r.kernel_holds() && r.rank_holds());
}

struct Built {
    space: crate::moduli::TwistorSpace,
    lines: crate::moduli::TwistorLines,
    jets: crate::moduli::Jets,
    frame: FrameSection,
}

fn build(spec: TwistorSpaceSpec) -> Built {
    let space = build_space(&spec).unwrap();
    let lines = compute_twistor_lines(&space).unwrap();
    let jets = restricted_jets(&space, &lines).unwrap();
    let fac = factorize_frame(&space, &jets.f1, &HashMap::new()).unwrap();
    let frame = frame_section(&lines, &fac).unwrap();
    Built { space, lines, jets, frame }
}

fn classify(b: &Built, conn: &ConnectionFamily) -> NcReport {
    let s = newton_cartan_preset(&b.space, &b.lines, &b.frame, conn).unwrap();
    let r = impose_compatibility(conn, &s.structure, &s.assignments).unwrap();
    check_newton_cartan(&r.structure, &r.connection).unwrap()
}

#[test]
fn presets_classify_as_in_construction() {
    for degrees in [&[0, 1][..], &[0, 1, 1][..]] {
        let b = build(TwistorSpaceSpec::flat(degrees));
        let conn = lambda_connection(&b.space, &b.lines, &b.jets).unwrap().connection().unwrap();
        let r = classify(&b, &conn);
        assert_eq!(r.class, NcClass::NewtonCartan);
        assert!(r.kernel_holds() && r.rank_holds());
        assert!(r.clock_derivative.is_zero());
    }
    let b = build(TwistorSpaceSpec::deformed3d(default_deformation(Preset::Deformed3d).unwrap()));
    let conn = torsion_xi_connection(&b.space, &b.lines, &b.jets).unwrap();
    let r = classify(&b, &conn);
    assert_eq!(r.class, NcClass::TorsionalNewtonCartan);
    assert!(r.kernel_holds() && r.rank_holds());
    assert!(!r.clock_derivative.is_zero());
}

#[test]
fn bianchi_for_torsion_free_families() {
    for degrees in [&[0, 1][..], &[0, 1, 1][..]] {
        let b = build(TwistorSpaceSpec::flat(degrees));
        let conn = lambda_connection(&b.space, &b.lines, &b.jets).unwrap().connection().unwrap();
        assert!(all_zero(&curvature(&conn).bianchi_residual()));
    }
}

#[test]
fn frame_parallel_curvature_for_alpha_y() {
    let b = build(TwistorSpaceSpec::flat(&[1]));
    let conn = frame_parallel_connection(&b.frame).unwrap();
    let y = c("y");
    // The frame is (dy + lam dz) / h for a single free h; alpha = 1/h.
    assert_eq!(b.frame.free_params.len(), 1);
    let map: HashMap<_, _> = [(b.frame.free_params[0].var, y.inv().unwrap())].into_iter().collect();
    let conn = conn.substitute(&map).unwrap();
    let n = conn.dim();
    let iy = conn.index_of("y").unwrap();
    let omega: Vec<SymExpr> = (0..n).map(|i| if i == iy { y.inv().unwrap() } else { SymExpr::zero() }).collect();
    let d = |a: usize, b: usize| if a == b { SymExpr::one() } else { SymExpr::zero() };
    for a in 0..n {
        for bb in 0..n {
            for cc in 0..n {
                assert_eq!(conn.gamma(cc, a, bb), &d(cc, a).mul(&omega[bb]));
            }
        }
    }
    let k = curvature(&conn);
    for idx in k.riemann.indices() {
        let [a, bb, cc, dd] = [idx[0], idx[1], idx[2], idx[3]];
        let expected = d(a, dd)
            .mul(&omega[bb].partial(conn.coords[cc]))
            .sub(&d(a, cc).mul(&omega[bb].partial(conn.coords[dd])))
            .add(&d(a, cc).mul(&omega[dd]).mul(&omega[bb]))
            .sub(&d(a, dd).mul(&omega[cc]).mul(&omega[bb]));
        assert_eq!(k.riemann.get(&idx), &expected);
    }
    assert!(!k.riemann.is_zero());
    assert!(!k.torsion.is_zero());
}

#[test]
fn coriolis_block_is_anti_self_dual() {
    let b = build(TwistorSpaceSpec::flat(&[0, 1, 1]));
    let conn = lambda_connection(&b.space, &b.lines, &b.jets).unwrap().connection().unwrap();
    let w = coriolis_form(&conn).unwrap();
    assert!(!w.is_zero());
    let i = |n: &str| conn.index_of(n).unwrap();
    let (o, l) = (SymExpr::zero(), SymExpr::one());
    // Slice (x, y, v, u) with g_xv = 1, g_yu = -1.
    let g = [
        [o.clone(), o.clone(), l.clone(), o.clone()],
        [o.clone(), o.clone(), o.clone(), l.neg()],
        [l.clone(), o.clone(), o.clone(), o.clone()],
        [o.clone(), l.neg(), o.clone(), o.clone()],
    ];
    let star = hodge_star_4(&w, [i("x"), i("y"), i("v"), i("u")], &g).unwrap();
    assert_eq!(star, w.scale(&SymExpr::int(-1)));
}

fn display(terms: &[(i64, [u32; 5])]) -> SymExpr {
    let vars = displacement_vars();
    let p = Poly::from_terms(
        terms
            .iter()
            .map(|(k, e)| {
                let m = vars.iter().zip(e).fold(Monomial::one(), |m, (v, p)| m.mul(&Monomial::pow(*v, *p)));
                (m, q(*k))
            })
            .collect(),
    );
    SymExpr::from_poly(p)
}

// Exponents in the order (dt, du, dx, dv, dw).
const DELTA6: [(i64, [u32; 5]); 19] = [
    (-1, [3, 0, 0, 0, 3]),
    (12, [2, 1, 0, 1, 2]),
    (27, [2, 0, 0, 4, 0]),
    (-54, [2, 0, 1, 2, 1]),
    (18, [2, 0, 2, 0, 2]),
    (6, [1, 2, 0, 2, 1]),
    (-54, [1, 2, 1, 0, 2]),
    (-108, [1, 1, 1, 3, 0]),
    (180, [1, 1, 2, 1, 1]),
    (54, [1, 0, 3, 2, 0]),
    (-81, [1, 0, 4, 0, 1]),
    (27, [0, 4, 0, 0, 2]),
    (64, [0, 3, 0, 3, 0]),
    (-108, [0, 3, 1, 1, 1]),
    (-36, [0, 2, 2, 2, 0]),
    (54, [0, 2, 3, 0, 1]),
    (0, [0, 0, 0, 0, 0]),
    (0, [0, 0, 0, 0, 0]),
    (0, [0, 0, 0, 0, 0]),
];

#[test]
fn discriminants_match_displays() {
    let d = quartic_discriminants();
    assert_eq!(d.delta2, display(&[(-1, [1, 0, 0, 0, 1]), (4, [0, 1, 0, 1, 0]), (-3, [0, 0, 2, 0, 0])]));
    assert_eq!(
        d.delta4,
        display(&[(-1, [1, 0, 0, 0, 3]), (4, [0, 1, 0, 1, 2]), (12, [0, 0, 0, 4, 0]), (-24, [0, 0, 1, 2, 1]), (9, [0, 0, 2, 0, 2])])
    );
    assert_eq!(
        d.g3,
        display(&[(-1, [1, 0, 0, 2, 0]), (1, [1, 0, 1, 0, 1]), (-1, [0, 2, 0, 0, 1]), (2, [0, 1, 1, 1, 0]), (-1, [0, 0, 3, 0, 0])])
    );
    let nonzero: Vec<_> = DELTA6.iter().copied().filter(|(k, _)| *k != 0).collect();
    assert_eq!(d.delta6, display(&nonzero));
}

#[test]
fn g3_is_the_catalecticant() {
    let d = quartic_discriminants();
    let [t, u, x, v, w] = d.vars.map(sym);
    let m = [[w.clone(), v.clone(), x.clone()], [v.clone(), x.clone(), u.clone()], [x.clone(), u.clone(), t.clone()]];
    let det3 = m[0][0].mul(&m[1][1].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][1])))
        .sub(&m[0][1].mul(&m[1][0].mul(&m[2][2]).sub(&m[1][2].mul(&m[2][0]))))
        .add(&m[0][2].mul(&m[1][0].mul(&m[2][1]).sub(&m[1][1].mul(&m[2][0]))));
    assert_eq!(d.g3, det3);
}

fn det_q(mut m: Vec<Vec<Q>>) -> Q {
    let n = m.len();
    let mut det = q(1);
    for col in 0..n {
        let Some(p) = (col..n).find(|r| m[*r][col] != q(0)) else { return q(0) };
        if p != col {
            m.swap(p, col);
            det = -det;
        }
        det *= m[col][col].clone();
        for r in (col + 1)..n {
            let f = m[r][col].clone() / m[col][col].clone();
            for k in col..n {
                let s = m[col][k].clone() * f.clone();
                m[r][k] -= s;
            }
        }
    }
    det
}

/// Sylvester resultant of the quartic and its derivative at a point.
fn sylvester(point: &[Q; 5]) -> Q {
    let p = [point[0].clone(), point[1].clone() * q(4), point[2].clone() * q(6), point[3].clone() * q(4), point[4].clone()];
    let dp: Vec<Q> = (1..5).map(|i| p[i].clone() * q(i as i64)).collect();
    let mut rows = Vec::new();
    for shift in 0..3 {
        let mut r = vec![q(0); 7];
        for (i, c) in p.iter().rev().enumerate() {
            r[shift + i] = c.clone();
        }
        rows.push(r);
    }
    for shift in 0..4 {
        let mut r = vec![q(0); 7];
        for (i, c) in dp.iter().rev().enumerate() {
            r[shift + i] = c.clone();
        }
        rows.push(r);
    }
    det_q(rows)
}

#[test]
fn delta6_is_proportional_to_the_resultant() {
    let d = quartic_discriminants();
    let mut ratio: Option<Q> = None;
    for s in 0..12i64 {
        let point = [q(1 + s), q(2 - s), qf(s, 3), q(s * s - 5), q(3 + 2 * s)];
        // Res(p, p') carries one factor of the leading coefficient.
        let res = sylvester(&point) / point[4].clone();
        let d6 = d.eval(&point)[2].clone();
        assert_ne!(res, q(0));
        let r = d6 / res;
        if let Some(prev) = &ratio {
            assert_eq!(&r, prev);
        }
        ratio = Some(r);
    }
    assert_ne!(ratio.unwrap(), q(0));
}

#[test]
fn reduction_certificate_finds_one_over_27() {
    let cert = quartic_discriminants().reduction_certificate();
    assert!(cert.holds());
    assert_eq!(cert.c, qf(1, 27));
}

#[test]
fn rational_normal_curve_is_null_for_all() {
    let d = quartic_discriminants();
    for r in [q(0), q(1), q(-2), qf(3, 5)] {
        let p = rational_normal_point(&r);
        assert!(d.eval(&p).iter().take(3).all(|v| *v == q(0)));
        assert!(degenerate_conditions(&p));
    }
}

#[test]
fn degenerate_conditions_match_delta4_on_triple_roots() {
    let d = quartic_discriminants();
    let roots = [q(0), q(1), q(-1), qf(1, 2), q(3)];
    let mut seen = [false; 2];
    for k in [q(1), q(-2)] {
        for r in &roots {
            let mut samples: Vec<[Q; 5]> = roots.iter().map(|s| triple_root_displacement(&k, r, Some(s))).collect();
            samples.push(triple_root_displacement(&k, r, None));
            for p in samples {
                let [d2, d4, d6, _] = d.eval(&p);
                assert_eq!(d2, q(0));
                assert_eq!(d6, q(0));
                let vanish = d4 == q(0);
                assert_eq!(vanish, degenerate_conditions(&p), "at {p:?}");
                seen[vanish as usize] = true;
            }
        }
    }
    assert!(seen[0] && seen[1]);
}
