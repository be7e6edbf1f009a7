use super::*;
use crate::geometry::{factorize_frame, frame_section};
use crate::moduli::{build_space, coefficient_tables, compute_twistor_lines, default_deformation, fibre_sym, restricted_jets, Preset, TwistorSpaceSpec};
use crate::symbolic::{registry, sym, SymExpr};

struct Setup {
    space: TwistorSpace,
    lines: TwistorLines,
    jets: Jets,
    frame: FrameSection,
}

fn setup(spec: TwistorSpaceSpec) -> Setup {
    let space = build_space(&spec).unwrap();
    let lines = compute_twistor_lines(&space).unwrap();
    let jets = restricted_jets(&space, &lines).unwrap();
    let fac = factorize_frame(&space, &jets.f1, &HashMap::new()).unwrap();
    let frame = frame_section(&lines, &fac).unwrap();
    Setup { space, lines, jets, frame }
}

fn deformed3d() -> Setup {
    setup(TwistorSpaceSpec::deformed3d(default_deformation(Preset::Deformed3d).unwrap()))
}

fn p(c: &ConnectionFamily, name: &str) -> SymExpr {
    sym(c.param(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

fn coord(name: &str) -> SymExpr {
    sym(registry::coordinate(name))
}

fn delta(a: usize, b: usize) -> SymExpr {
    if a == b {
        SymExpr::one()
    } else {
        SymExpr::zero()
    }
}

#[test]
fn flat_lambda_matches_display() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    let g = |a: &str, b: &str, cc: &str| c.get(a, b, cc).unwrap().clone();
    assert_eq!(g("t", "t", "t"), p(&c, "Sigma"));
    assert_eq!(g("y", "t", "t"), p(&c, "phi0"));
    assert_eq!(g("z", "t", "t"), p(&c, "phi1"));
    for (k, i) in [("y", "y"), ("z", "z")] {
        assert_eq!(g(k, i, "t"), p(&c, "chi"));
        assert_eq!(g(k, "t", i), p(&c, "chi"));
    }
    assert_eq!(c.nonzero().len(), 7);
    assert!(c.torsion_free);
}

#[test]
fn flat_xi_is_unnormalized_symmetrization() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    let two = SymExpr::int(2);
    assert_eq!(c.get("t", "t", "t").unwrap(), &two.mul(&p(&c, "C_t")));
    let spatial = ["y", "z"];
    for k in spatial {
        for i in spatial {
            for j in spatial {
                let (ki, kj) = (if k == i { 1 } else { 0 }, if k == j { 1 } else { 0 });
                let expected = p(&c, &format!("B_{i}")).scale(&crate::symbolic::q(kj)).add(&p(&c, &format!("B_{j}")).scale(&crate::symbolic::q(ki)));
                assert_eq!(c.get(k, i, j).unwrap(), &expected, "Gamma^{k}_{i}{j}");
            }
        }
    }
    assert!(c.is_symmetric());
}

#[test]
fn deformed_torsion_xi_matches_tables() {
    let s = deformed3d();
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    let tables = coefficient_tables(&s.space, &s.lines).unwrap();
    let f = s.space.rows[tables.row.unwrap()].factor.clone();
    let (phi_m1, phi0, psi_m1, psi0) = (tables.phi(-1).mul(&f), tables.phi(0).mul(&f), tables.psi(-1).mul(&f), tables.psi(0).mul(&f));
    let names = ["t", "y", "z"];
    for (b, nb) in names.iter().enumerate() {
        let a0 = p(&c, &format!("A0_{nb}"));
        let a1 = p(&c, &format!("A1_{nb}"));
        let bb = p(&c, &format!("B_{nb}"));
        let cc = p(&c, &format!("C_{nb}"));
        for (a, na) in names.iter().enumerate() {
            let gy = delta(a, 0).mul(&a0).add(&delta(a, 1).mul(&bb));
            let gz = delta(a, 0).mul(&a1).add(&delta(a, 1).mul(&phi0).mul(&a1)).add(&delta(a, 2).mul(&bb.sub(&phi0.mul(&a0))));
            let gt = delta(a, 0)
                .mul(&cc.sub(&phi0.mul(&a0)).sub(&phi_m1.mul(&a1)))
                .add(&delta(a, 1).mul(
                    &phi0.mul(&bb.sub(&cc)).neg().sub(&a1.mul(&phi0).mul(&phi_m1)).add(&delta(b, 1).mul(&psi0)).add(&delta(b, 2).mul(&psi_m1)),
                ));
            assert_eq!(c.get("y", na, nb).unwrap(), &gy, "Gamma^y_{na}{nb}");
            assert_eq!(c.get("z", na, nb).unwrap(), &gz, "Gamma^z_{na}{nb}");
            assert_eq!(c.get("t", na, nb).unwrap(), &gt, "Gamma^t_{na}{nb}");
        }
    }
    assert!(!c.torsion_free);
}

#[test]
fn deformed_xi_does_not_exist() {
    let s = deformed3d();
    assert!(matches!(xi_connection(&s.space, &s.lines, &s.jets), Err(ConnectionError::ReadoffInconsistent { .. })));
}

#[test]
fn deformed_lambda_is_obstructed_by_torsion() {
    let s = deformed3d();
    let out = lambda_connection(&s.space, &s.lines, &s.jets).unwrap();
    let r = out.obstruction().unwrap();
    assert_eq!(r.tag, ObstructionTag::Torsion);
    assert!(r.dimension > 0);
    assert!(!r.representative.is_empty());
}

#[test]
fn clock_fix_makes_clock_parallel() {
    let s = deformed3d();
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    let before = covariant_clock(&c, s.frame.clock().unwrap());
    assert!(!before.is_zero());
    let fix = torsion_clock_fix(&s.space, &s.lines, &s.frame, &c).unwrap();
    let map: HashMap<_, _> = fix.into_iter().collect();
    let fixed = c.substitute(&map).unwrap();
    assert!(covariant_clock(&fixed, s.frame.clock().unwrap()).is_zero());
}

#[test]
fn presets_are_newton_cartan_compatible() {
    for s in [setup(TwistorSpaceSpec::flat(&[0, 1])), setup(TwistorSpaceSpec::flat(&[0, 1, 1]))] {
        let c = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
        let spec = newton_cartan_preset(&s.space, &s.lines, &s.frame, &c).unwrap();
        assert!(spec.structure.is_consistent());
        let r = impose_compatibility(&c, &spec.structure, &spec.assignments).unwrap();
        assert!(r.is_compatible(), "{:?}", r.nonzero_residuals());
        assert!(r.connection.is_symmetric());
    }
}

#[test]
fn deformed_preset_is_torsional() {
    let s = deformed3d();
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    let spec = newton_cartan_preset(&s.space, &s.lines, &s.frame, &c).unwrap();
    let r = impose_compatibility(&c, &spec.structure, &spec.assignments).unwrap();
    assert!(r.is_compatible(), "{:?}", r.nonzero_residuals());
    assert!(!r.connection.is_symmetric());
    let m = s.frame.param("m").unwrap();
    let at_one: HashMap<_, _> = [(m, SymExpr::one())].into_iter().collect();
    let dtheta = r.structure.clock.substitute(&at_one).unwrap().exterior_derivative();
    let (y, z) = (registry::coordinate("y"), registry::coordinate("z"));
    assert_eq!(dtheta.coefficient(z, y), SymExpr::int(2));
    assert_eq!(dtheta.coefficient(registry::coordinate("t"), y), SymExpr::zero());
}

#[test]
fn mask_violation_is_reported() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    let g = crate::geometry::galilean_structure(&s.frame).unwrap();
    let mut a = Assignments::new();
    // m(t) may not depend on y.
    let t = registry::coordinate("t");
    let mt = registry::function("m", &[t]);
    a.insert(mt, coord("y"));
    assert!(matches!(impose_compatibility(&c, &g, &a), Err(ConnectionError::MaskViolation { .. })));
}

#[test]
fn free_parameter_counts_match_h0() {
    for degrees in [&[0, 1][..], &[0, 1, 1][..]] {
        let s = setup(TwistorSpaceSpec::flat(degrees));
        let t = s.space.base_type();
        let lam = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
        assert_eq!(lam.free_params.len(), t.h0_sym2_dual());
        let xi = xi_connection(&s.space, &s.lines, &s.jets).unwrap();
        assert_eq!(xi.free_params.len(), t.h0_endomorphisms() * s.space.coords.len());
    }
}

#[test]
fn readoff_residuals_vanish() {
    let s = deformed3d();
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    assert!(c.readoff_residuals().iter().all(LaurentPoly::is_zero));
    let s = setup(TwistorSpaceSpec::flat(&[0, 1, 1]));
    let c = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    assert!(c.readoff_residuals().iter().all(LaurentPoly::is_zero));
}

#[test]
fn frame_parallel_annihilates_frame() {
    for s in [setup(TwistorSpaceSpec::flat(&[0, 1])), setup(TwistorSpaceSpec::flat(&[0, 1, 1])), deformed3d()] {
        let c = frame_parallel_connection(&s.frame).unwrap();
        assert!(frame_residuals(&s.frame, &c).iter().all(SymExpr::is_zero));
    }
}

#[test]
fn frame_parallel_torsion_for_alpha_y() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = frame_parallel_connection(&s.frame).unwrap();
    let y = coord("y");
    // alpha = 1/k.
    let map: HashMap<_, _> = [("m", SymExpr::one()), ("a0", SymExpr::zero()), ("a1", SymExpr::zero()), ("k", y.inv().unwrap())]
        .into_iter()
        .map(|(n, v)| (s.frame.param(n).unwrap(), v))
        .collect();
    let c = c.substitute(&map).unwrap();
    let t = c.torsion();
    let (iy, iz) = (c.index_of("y").unwrap(), c.index_of("z").unwrap());
    assert_eq!(t.get(&[iz, iz, iy]), &y.inv().unwrap());
    assert_eq!(t.get(&[iz, iy, iz]), &y.inv().unwrap().neg());
    let nonzero = t.indices().into_iter().filter(|i| !t.get(i).is_zero()).count();
    assert_eq!(nonzero, 2);
}

#[test]
fn gravity_from_omega_cocycle() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let lam = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    let f = LaurentPoly::monomial(-2, fibre_sym("Omega"));
    let fix = fix_gravity_from_cocycle(&s.space, &s.lines, &lam, &f, -3).unwrap();
    assert_eq!(fix.phi_up, [coord("z").neg(), coord("y")]);
    assert!(fix.divergence.is_zero());
    assert_eq!(fix.family.get("y", "t", "t").unwrap(), &coord("y"));
    assert_eq!(fix.family.get("z", "t", "t").unwrap(), &coord("z").neg());
    assert!(fix.family.param("phi0").is_none());

    let constant = LaurentPoly::monomial(-2, SymExpr::one());
    let fix = fix_gravity_from_cocycle(&s.space, &s.lines, &lam, &constant, -3).unwrap();
    assert!(fix.phi_up.iter().all(SymExpr::is_constant));
    assert!(matches!(
        fix_gravity_from_cocycle(&s.space, &s.lines, &lam, &f, -2),
        Err(ConnectionError::WeightMismatch { expected: -3, found: -2 })
    ));
}

#[test]
fn gravity_divergence_vanishes_for_quadratic_cocycle() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let lam = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    let om = fibre_sym("Omega");
    let f = LaurentPoly::from_coeffs([(-2, om.mul(&om).mul(&fibre_sym("T"))), (-1, om.mul(&om).mul(&om))]);
    let fix = fix_gravity_from_cocycle(&s.space, &s.lines, &lam, &f, -3).unwrap();
    assert!(fix.divergence.is_zero());
    assert!(!fix.phi_up[0].is_zero());
}

fn display_fields() -> Vec<ProjectedField> {
    let (y, z) = (coord("y"), coord("z"));
    let (o, l) = (SymExpr::zero(), SymExpr::one());
    let euler = |f: &SymExpr| vec![o.clone(), f.mul(&y), f.mul(&z)];
    [
        vec![l.clone(), o.clone(), o.clone()],
        vec![o.clone(), l.clone(), o.clone()],
        vec![o.clone(), o.clone(), l.clone()],
        vec![o.clone(), y.clone(), o.clone()],
        vec![o.clone(), z.clone(), o.clone()],
        vec![o.clone(), o.clone(), y.clone()],
        vec![o.clone(), o.clone(), z.clone()],
        euler(&y),
        euler(&z),
    ]
    .into_iter()
    .map(|components| ProjectedField { components })
    .collect()
}

#[test]
fn global_vectors_3d() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let g = global_vector_fields(&s.space, &s.lines, 0).unwrap();
    assert_eq!(g.dimension(), 9);
    assert_eq!(g.pushdown_rank(), 9);
    let display = display_fields();
    assert_eq!(span_rank(&display), 9);
    assert!(display.iter().all(|d| in_span(&g.pushdowns, d)));
    assert!(bracket_closes(&s.space, &s.lines, &g).unwrap());
    for d in 1..=2 {
        assert_eq!(global_vector_fields(&s.space, &s.lines, d).unwrap().dimension(), 9 * (d as usize + 1));
    }
}

#[test]
fn global_vectors_5d() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1, 1]));
    let g = global_vector_fields(&s.space, &s.lines, 0).unwrap();
    assert_eq!(g.dimension(), 16);
    assert_eq!(g.pushdown_rank(), 16);
    assert_eq!(global_vector_fields(&s.space, &s.lines, 1).unwrap().dimension(), 32);
}

#[test]
fn global_vectors_reject_deformed() {
    let s = deformed3d();
    assert!(matches!(global_vector_fields(&s.space, &s.lines, 0), Err(ConnectionError::Unsupported(_))));
}

#[test]
fn flat_torsion_xi_torsion_is_pure_parameter() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    assert!(!c.torsion().is_zero());
    let zero: HashMap<_, _> = c.free_params.iter().map(|v| (*v, SymExpr::zero())).collect();
    assert!(c.substitute(&zero).unwrap().torsion().is_zero());
}

#[test]
fn deformed_torsion_cannot_be_removed_by_constants() {
    let s = deformed3d();
    let c = torsion_xi_connection(&s.space, &s.lines, &s.jets).unwrap();
    let skew = c.get("t", "y", "z").unwrap().sub(c.get("t", "z", "y").unwrap());
    // Linear in the parameters; one row per monomial in the coordinates.
    let params = c.free_params.clone();
    let mut rows: Vec<Row> = Vec::new();
    let mut keys: HashMap<crate::symbolic::Monomial, usize> = HashMap::new();
    let base = skew.substitute(&params.iter().map(|v| (*v, SymExpr::zero())).collect()).unwrap();
    let mut push = |e: &SymExpr, col: Option<usize>, rows: &mut Vec<Row>| {
        for (m, k) in e.as_poly().unwrap().terms() {
            let r = *keys.entry(m.clone()).or_insert_with(|| {
                rows.push(Row::new(rows.len()));
                rows.len() - 1
            });
            let v = SymExpr::rational(k.clone());
            match col {
                Some(j) => rows[r].add_coeff(j, &v),
                None => rows[r].rhs = v.neg(),
            }
        }
    };
    push(&base, None, &mut rows);
    for (j, v) in params.iter().enumerate() {
        let coeff = skew.diff_symbol(*v);
        push(&coeff, Some(j), &mut rows);
    }
    let order: Vec<usize> = (0..params.len()).collect();
    assert!(!linear::solve(params.len(), rows, &order).is_consistent());
}

#[test]
fn constant_clock_is_parallel() {
    let s = setup(TwistorSpaceSpec::flat(&[0, 1]));
    let c = lambda_connection(&s.space, &s.lines, &s.jets).unwrap().connection().unwrap();
    let g = crate::geometry::galilean_structure(&s.frame).unwrap();
    let mut a = Assignments::new();
    a.insert(c.param("Sigma").unwrap(), SymExpr::zero());
    a.insert(s.frame.param("m").unwrap(), SymExpr::int(2));
    let r = impose_compatibility(&c, &g, &a).unwrap();
    assert!(r.clock_parallel());
}

#[test]
fn frame_parallel_o1_with_unit_alpha_vanishes() {
    let s = setup(TwistorSpaceSpec::flat(&[1]));
    let c = frame_parallel_connection(&s.frame).unwrap();
    let one: HashMap<_, _> = s.frame.free_params.iter().map(|p| (p.var, SymExpr::one())).collect();
    assert!(c.substitute(&one).unwrap().nonzero().is_empty());
    // A general alpha gives delta^c_a d_b ln alpha.
    let h = sym(s.frame.free_params[0].var);
    for (a, b, cc, g) in c.nonzero() {
        assert_eq!(a, b);
        assert_eq!(g, h.partial(c.coords[cc]).checked_div(&h).unwrap().neg());
    }
}
