//! Exact symbolic layer: rational functions, Laurent polynomials in the
//! fibre coordinate, and differential forms on a coordinate chart.

mod expr;
mod forms;
mod gcd;
mod laurent;
pub mod linear;
mod matrix;
mod poly;
pub mod registry;

pub use expr::SymExpr;
pub use forms::{OneForm, Symmetry, TensorField, TwoForm};
pub use gcd::gcd;
pub use laurent::{Chart, LaurentPoly};
pub use matrix::{LMatrix, SMatrix};
pub use poly::{q, qf, Monomial, Poly, Q};
pub use registry::{Var, VarKind};

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("deformation is not polynomial in the fibre coordinate `{0}`")]
    NonPolynomialDeformation(String),
}

/// Substitutes Laurent polynomials for fibre coordinates in a deformation
/// whose coefficients are polynomial in those coordinates.
pub fn laurent_substitute(f: &LaurentPoly, sections: &HashMap<Var, LaurentPoly>) -> Result<LaurentPoly, SymError> {
    let mut out = LaurentPoly::zero();
    let mut powers: HashMap<(Var, u32), LaurentPoly> = HashMap::new();
    for (p, c) in f.terms() {
        for v in c.denom().vars() {
            if sections.contains_key(&v) {
                return Err(SymError::NonPolynomialDeformation(v.name()));
            }
        }
        let den_inv = SymExpr::ratio(Poly::one(), c.denom().clone())?;
        for (m, k) in c.numer().terms() {
            let mut term = LaurentPoly::monomial(p, SymExpr::rational(k.clone()).mul(&den_inv));
            let mut rest = Monomial::one();
            for (v, e) in m.powers() {
                match sections.get(v) {
                    Some(s) => {
                        let pw = powers.entry((*v, *e)).or_insert_with(|| s.pow(*e)).clone();
                        term = term.mul(&pw);
                    }
                    None => rest = rest.mul(&Monomial::pow(*v, *e)),
                }
            }
            if !rest.is_one() {
                term = term.scale(&SymExpr::from_poly(Poly::monomial(rest, Q::from_integer(1.into()))));
            }
            out = out.add(&term);
        }
    }
    Ok(out)
}

/// Shorthand for a symbol as an expression.
pub fn sym(v: Var) -> SymExpr {
    SymExpr::var(v)
}
