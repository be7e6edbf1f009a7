//! Strategies and checks shared by the property suite and the acceptance
//! harness.

use std::collections::HashMap;

use kodaira::bundle::{h0, BundleType};
use kodaira::connection::{lambda_connection, xi_connection, ConnectionFamily};
use kodaira::moduli::{build_space, compute_twistor_lines, patching_identity_holds, restricted_jets, Deformation, TwistorSpaceSpec};
use kodaira::nc::curvature;
use kodaira::splitting::{birkhoff_factorize, split_matrix, BirkhoffOptions, SplitOptions};
use kodaira::symbolic::{q, registry, LMatrix, LaurentPoly, Monomial, Poly, SymExpr, Var};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

pub fn c(name: &str) -> Var {
    registry::coordinate(name)
}

fn laurent(terms: &[(i32, i64)], scale: &SymExpr) -> LaurentPoly {
    let mut p = LaurentPoly::zero();
    for (k, a) in terms {
        p.add_term(*k, &scale.scale(&q(*a)));
    }
    p
}

fn small_laurent() -> impl Strategy<Value = Vec<(i32, i64)>> {
    prop::collection::vec((-3i32..=3, -3i64..=3), 0..4)
}

/// Polynomial in `vars` with small integer coefficients.
pub fn poly_in(vars: Vec<Var>) -> impl Strategy<Value = SymExpr> {
    let n = vars.len();
    prop::collection::vec((prop::collection::vec(0u32..=2, n), -4i64..=4), 0..5).prop_map(move |terms| {
        let mut p = Poly::zero();
        for (exps, a) in terms {
            let mut m = Monomial::one();
            for (v, e) in vars.iter().zip(exps) {
                m = m.mul(&Monomial::pow(*v, e));
            }
            p = p.add(&Poly::monomial(m, q(a)));
        }
        SymExpr::from_poly(p)
    })
}

pub type SplitInput = (Vec<i32>, Vec<i32>, Vec<Vec<(i32, i64)>>);

pub fn split_input() -> impl Strategy<Value = SplitInput> {
    (prop::collection::vec(-2i32..=2, 2), prop::collection::vec(-2i32..=2, 2), prop::collection::vec(small_laurent(), 4))
}

/// `G = -Xhat L + R X` up to the reported obstruction, with `X` and `Xhat`
/// holomorphic on their charts.
pub fn check_split(input: &SplitInput) -> Check {
    let (lp, rp, entries) = input;
    let x = SymExpr::var(c("x"));
    let left = LMatrix::diagonal_powers(lp);
    let right = LMatrix::diagonal_powers(rp);
    let mut g = LMatrix::zero(2, 2);
    for (i, e) in entries.iter().enumerate() {
        g.set(i / 2, i % 2, laurent(e, &x));
    }
    let sol = split_matrix(&g, &left, &right, &SplitOptions::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let rebuilt = sol.cochain_hat.mul(&left).neg().add(&right.mul(&sol.cochain_u));
    let mut residual = g.sub(&rebuilt);
    if let Some(ob) = &sol.obstruction {
        for t in &ob.terms {
            let e = residual.get(t.row, t.col).sub(&LaurentPoly::monomial(t.power, t.residual.clone()));
            residual.set(t.row, t.col, e);
        }
    }
    prop_assert!(residual.is_zero(), "residual {}", residual);
    for e in sol.cochain_u.entries() {
        prop_assert!(e.min_power().unwrap_or(0) >= 0);
    }
    for e in sol.cochain_hat.entries() {
        prop_assert!(e.max_power().unwrap_or(0) <= 0);
    }
    Ok(())
}

pub type BirkhoffInput = (i32, i32, i32, i64);

pub fn birkhoff_input() -> impl Strategy<Value = BirkhoffInput> {
    (-2i32..=2, -2i32..=2, -3i32..=3, 1i64..=3)
}

/// `F H = Hhat diag(lam^-n)` for `F = [[lam^-a, k y lam^p], [0, lam^-b]]`.
pub fn check_birkhoff(&(a, b, p, k): &BirkhoffInput) -> Check {
    let y = SymExpr::var(c("y"));
    let mut f = LMatrix::diagonal_powers(&[-a, -b]);
    f.set(0, 1, LaurentPoly::monomial(p, y.scale(&q(k))));
    let fac = birkhoff_factorize(&f, &BirkhoffOptions::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let n: Vec<i32> = fac.column_degrees.iter().map(|d| -d).collect();
    let d = LMatrix::diagonal_powers(&n);
    prop_assert_eq!(f.mul(&fac.h), fac.h_hat.mul(&d));
    prop_assert!(!fac.det_h.is_zero());
    prop_assert!(fac.h.det().is_lambda_free());
    prop_assert_eq!(fac.splitting_type.total_degree(), a + b);
    prop_assert_eq!(fac.free_params.len(), fac.splitting_type.h0_endomorphisms());
    for e in fac.h.entries() {
        prop_assert!(e.min_power().unwrap_or(0) >= 0);
    }
    for e in fac.h_hat.entries() {
        prop_assert!(e.max_power().unwrap_or(0) <= 0);
    }
    Ok(())
}

pub fn leibniz_input() -> impl Strategy<Value = (SymExpr, SymExpr)> {
    (poly_in(vec![c("x"), c("y")]), poly_in(vec![c("x"), c("y")]))
}

/// Product and quotient rules, and commuting partials, with an opaque
/// function of `x, y` mixed in.
pub fn check_leibniz((p, r): &(SymExpr, SymExpr)) -> Check {
    let (x, y) = (c("x"), c("y"));
    let f = SymExpr::var(registry::function("f", &[x, y]));
    let p = p.add(&f);
    let lhs = p.mul(r).partial(x);
    let rhs = p.partial(x).mul(r).add(&p.mul(&r.partial(x)));
    prop_assert_eq!(lhs, rhs);
    prop_assert_eq!(p.partial(x).partial(y), p.partial(y).partial(x));
    let den = SymExpr::one().add(&SymExpr::var(x).mul(&SymExpr::var(x)));
    let quot = p.checked_div(&den).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let expect = p
        .partial(y)
        .mul(&den)
        .sub(&p.mul(&den.partial(y)))
        .checked_div(&den.mul(&den))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(quot.partial(y), expect);
    Ok(())
}

pub fn cubic_input() -> impl Strategy<Value = Vec<(u32, i32, i64)>> {
    prop::collection::vec((0u32..=3, 1i32..=2, -3i64..=3), 1..4)
}

/// `T_hat = T + sum a Omega^k lam^-j` with `k <= 3`.
pub fn check_cubic_patching(terms: &[(u32, i32, i64)]) -> Check {
    let omega = SymExpr::var(registry::fibre("Omega"));
    let mut f = LaurentPoly::zero();
    for (k, j, a) in terms {
        f.add_term(-j, &omega.powi(*k as i32).map_err(|e| TestCaseError::fail(e.to_string()))?.scale(&q(*a)));
    }
    if f.is_zero() {
        return Ok(());
    }
    let spec = TwistorSpaceSpec::custom(&[0, 1], vec![Deformation { row: "T".into(), expr: f }]);
    let space = build_space(&spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let lines = compute_twistor_lines(&space).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(patching_identity_holds(&space, &lines).map_err(|e| TestCaseError::fail(e.to_string()))?);
    Ok(())
}

pub fn symmetric_gamma_input() -> impl Strategy<Value = Vec<SymExpr>> {
    prop::collection::vec(poly_in(vec![c("t"), c("y"), c("z")]), 18)
}

/// `R^a_[bcd] = 0` for a random symmetric polynomial connection on three
/// coordinates.
pub fn check_bianchi(entries: &[SymExpr]) -> Check {
    let coords = [c("t"), c("y"), c("z")];
    let mut table = HashMap::new();
    let mut it = entries.iter();
    for a in 0..3 {
        for b in 0..3 {
            for cc in b..3 {
                table.insert((a, b, cc), it.next().cloned().unwrap_or_default());
            }
        }
    }
    let conn = ConnectionFamily::from_fn(&coords, |a, b, cc| table[&(a, b.min(cc), b.max(cc))].clone());
    prop_assert!(conn.is_symmetric());
    prop_assert!(curvature(&conn).bianchi_residual().is_zero());
    Ok(())
}

pub fn h0_input() -> impl Strategy<Value = (Vec<i32>, i64)> {
    (prop::collection::vec(0i32..=1, 1..=2), 0i64..=2)
}

/// Moduli, Xi and Lambda parameter counts against `h^0` of the relevant
/// bundles.
pub fn check_h0_counts((extra, scale): &(Vec<i32>, i64)) -> Check {
    let mut degrees = vec![0];
    degrees.extend(extra);
    let spec = if *scale != 0 && degrees == [0, 1] {
        let omega = SymExpr::var(registry::fibre("Omega"));
        let f = LaurentPoly::monomial(-1, omega.powi(2).map_err(|e| TestCaseError::fail(e.to_string()))?.scale(&q(*scale)));
        TwistorSpaceSpec::deformed3d(f)
    } else {
        TwistorSpaceSpec::flat(&degrees)
    };
    let fail = |e: String| TestCaseError::fail(e);
    let space = build_space(&spec).map_err(|e| fail(e.to_string()))?;
    let lines = compute_twistor_lines(&space).map_err(|e| fail(e.to_string()))?;
    let jets = restricted_jets(&space, &lines).map_err(|e| fail(e.to_string()))?;
    let t = BundleType::new(degrees.clone()).map_err(|e| fail(e.to_string()))?;
    let n = space.coords.len();
    prop_assert_eq!(n, degrees.iter().map(|k| h0(*k)).sum::<usize>());
    if let Ok(xi) = xi_connection(&space, &lines, &jets) {
        prop_assert_eq!(xi.free_params.len(), t.h0_endomorphisms() * n);
    }
    if let Some(lam) = lambda_connection(&space, &lines, &jets).map_err(|e| fail(e.to_string()))?.connection() {
        prop_assert_eq!(lam.free_params.len(), t.h0_sym2_dual());
    }
    Ok(())
}
