//! Holomorphic vector fields on flat twistor spaces `O + k O(1)` and their
//! images on the moduli space.

use std::collections::HashMap;

use super::ConnectionError;
use crate::moduli::{TwistorLines, TwistorSpace};
use crate::symbolic::linear::{self, Row};
use crate::symbolic::{laurent_substitute, LaurentPoly, Monomial, Poly, SymExpr, Var, Q};

/// A vector field on the `U` chart. Components follow the rows of the
/// space, then `d/dlam`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZVectorField {
    pub components: Vec<LaurentPoly>,
}

/// Image of a [`ZVectorField`] on the moduli space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectedField {
    pub components: Vec<SymExpr>,
}

impl ProjectedField {
    pub fn is_zero(&self) -> bool {
        self.components.iter().all(SymExpr::is_zero)
    }

    /// `[X, Y]^a = X^b d_b Y^a - Y^b d_b X^a`.
    pub fn bracket(&self, other: &ProjectedField, coords: &[Var]) -> ProjectedField {
        let n = coords.len();
        let components = (0..n)
            .map(|a| {
                let mut s = SymExpr::zero();
                for b in 0..n {
                    s = s.add(&self.components[b].mul(&other.components[a].partial(coords[b])));
                    s = s.sub(&other.components[b].mul(&self.components[a].partial(coords[b])));
                }
                s
            })
            .collect();
        ProjectedField { components }
    }
}

#[derive(Clone, Debug)]
pub struct GlobalVectors {
    pub coords: Vec<Var>,
    /// Highest power of the clock fibre coordinate allowed.
    pub tdeg: u32,
    pub basis: Vec<ZVectorField>,
    pub pushdowns: Vec<ProjectedField>,
}

impl GlobalVectors {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Rank of the pushed-down fields.
    pub fn pushdown_rank(&self) -> usize {
        span_rank(&self.pushdowns)
    }
}

/// Rank over the rationals of polynomial vector fields.
pub fn span_rank(fields: &[ProjectedField]) -> usize {
    let (rows, _) = coefficient_rows(fields, None);
    let order: Vec<usize> = (0..fields.len()).collect();
    linear::solve(fields.len(), rows, &order).rank()
}

/// Whether `target` is a rational combination of `fields`.
pub fn in_span(fields: &[ProjectedField], target: &ProjectedField) -> bool {
    let (rows, _) = coefficient_rows(fields, Some(target));
    let order: Vec<usize> = (0..fields.len()).collect();
    linear::solve(fields.len(), rows, &order).is_consistent()
}

/// One row per `(component, monomial)`; columns are the fields.
fn coefficient_rows(fields: &[ProjectedField], target: Option<&ProjectedField>) -> (Vec<Row>, usize) {
    let mut keys: HashMap<(usize, Monomial), usize> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut slot = |a: usize, m: &Monomial, rows: &mut Vec<Row>| -> usize {
        *keys.entry((a, m.clone())).or_insert_with(|| {
            rows.push(Row::new(rows.len()));
            rows.len() - 1
        })
    };
    for (j, f) in fields.iter().enumerate() {
        for (a, c) in f.components.iter().enumerate() {
            for (m, k) in polynomial(c).terms() {
                let r = slot(a, m, &mut rows);
                rows[r].add_coeff(j, &SymExpr::rational(k.clone()));
            }
        }
    }
    if let Some(t) = target {
        for (a, c) in t.components.iter().enumerate() {
            for (m, k) in polynomial(c).terms() {
                let r = slot(a, m, &mut rows);
                rows[r].rhs = SymExpr::rational(k.clone());
            }
        }
    }
    let n = rows.len();
    (rows, n)
}

fn polynomial(e: &SymExpr) -> Poly {
    e.as_poly().cloned().expect("vector field components are polynomial")
}

/// All monomials in `vars` of total degree at most `deg`.
fn monomials(vars: &[Var], deg: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier = vec![(Monomial::one(), 0usize)];
    for _ in 0..deg {
        let mut next = Vec::new();
        for (m, start) in &frontier {
            for (i, v) in vars.iter().enumerate().skip(*start) {
                let mm = m.mul(&Monomial::var(*v));
                out.push(mm.clone());
                next.push((mm, i));
            }
        }
        frontier = next;
    }
    out
}

fn lam_derivative(f: &LaurentPoly) -> LaurentPoly {
    LaurentPoly::from_coeffs(f.terms().map(|(p, c)| (p - 1, c.scale(&Q::from_integer(p.into())))))
}

/// One unknown coefficient: `T^i Omega^alpha lam^p` in component `comp`.
struct Column {
    comp: usize,
    mono: Monomial,
    power: i32,
}

/// Global holomorphic vector fields whose components are polynomial of
/// degree at most `tdeg` in the clock coordinate, at most 2 in the `O(1)`
/// coordinates and at most 3 in `lam`, with their pushdowns.
pub fn global_vector_fields(space: &TwistorSpace, lines: &TwistorLines, tdeg: u32) -> Result<GlobalVectors, ConnectionError> {
    let degrees = space.degrees();
    if space.is_deformed() || degrees.iter().filter(|d| **d == 0).count() != 1 || degrees.iter().any(|d| *d != 0 && *d != 1) {
        return Err(ConnectionError::Unsupported(format!("global vector fields need a flat O + k O(1) space, got {degrees:?}")));
    }
    let k = space.rank();
    let clock_row = degrees.iter().position(|d| *d == 0).expect("checked above");
    let t = space.rows[clock_row].fibre;
    let omegas: Vec<(usize, Var)> = (0..k).filter(|i| *i != clock_row).map(|i| (i, space.rows[i].fibre)).collect();
    let omega_vars: Vec<Var> = omegas.iter().map(|(_, v)| *v).collect();
    let lam = k;

    let mut columns = Vec::new();
    for comp in 0..=k {
        for i in 0..=tdeg {
            for m in monomials(&omega_vars, 2) {
                for power in 0..=3 {
                    columns.push(Column { comp, mono: Monomial::pow(t, i).mul(&m), power });
                }
            }
        }
    }

    // Hat components with `Omega = lam Omega_hat`; the monomial keeps the
    // unhatted symbols as labels.
    let mut keys: HashMap<(usize, i32, Monomial), usize> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut add = |comp: usize, power: i32, mono: Monomial, col: usize, c: Q, rows: &mut Vec<Row>| {
        if power <= 0 {
            return;
        }
        let r = *keys.entry((comp, power, mono)).or_insert_with(|| {
            rows.push(Row::new(rows.len()));
            rows.len() - 1
        });
        rows[r].add_coeff(col, &SymExpr::rational(c));
    };
    let one = Q::from_integer(1.into());
    for (j, col) in columns.iter().enumerate() {
        let w = omega_vars.iter().map(|v| col.mono.exponent(*v) as i32).sum::<i32>();
        if col.comp == lam {
            add(lam, col.power - 2 + w, col.mono.clone(), j, -one.clone(), &mut rows);
            for (a, v) in &omegas {
                add(*a, col.power - 1 + w, col.mono.mul(&Monomial::var(*v)), j, -one.clone(), &mut rows);
            }
        } else if col.comp == clock_row {
            add(col.comp, col.power + w, col.mono.clone(), j, one.clone(), &mut rows);
        } else {
            add(col.comp, col.power - 1 + w, col.mono.clone(), j, one.clone(), &mut rows);
        }
    }

    let ncols = columns.len();
    let order: Vec<usize> = (0..ncols).collect();
    let sol = linear::solve(ncols, rows, &order);
    let sections = lines.substitution(space);
    let mut basis = Vec::new();
    let mut pushdowns = Vec::new();
    for f in &sol.free {
        let mut coeff = vec![Q::from_integer(0.into()); ncols];
        coeff[*f] = one.clone();
        for (c, slot) in coeff.iter_mut().enumerate() {
            if sol.free.contains(&c) {
                continue;
            }
            let v = sol.value(c);
            for (g, a) in &v.terms {
                if g == f {
                    *slot = a.as_rational().expect("rational system");
                }
            }
        }
        let mut components = vec![LaurentPoly::zero(); k + 1];
        for (j, col) in columns.iter().enumerate() {
            if coeff[j] != Q::from_integer(0.into()) {
                let m = SymExpr::from_poly(Poly::monomial(col.mono.clone(), coeff[j].clone()));
                components[col.comp].add_term(col.power, &m);
            }
        }
        let field = ZVectorField { components };
        pushdowns.push(push_down(space, lines, &sections, &field)?);
        basis.push(field);
    }
    Ok(GlobalVectors { coords: space.coords.clone(), tdeg, basis, pushdowns })
}

/// Solves `sum_a X^a d_a w^mu = beta^mu| - beta^lam| d_lam w^mu` for `X`
/// independent of `lam`.
fn push_down(
    space: &TwistorSpace,
    lines: &TwistorLines,
    sections: &HashMap<Var, LaurentPoly>,
    field: &ZVectorField,
) -> Result<ProjectedField, ConnectionError> {
    let k = space.rank();
    let n = space.coords.len();
    let beta_lam = laurent_substitute(&field.components[k], sections)?;
    let mut rows = Vec::new();
    for mu in 0..k {
        let w = &lines.sections_u[mu];
        let rhs = laurent_substitute(&field.components[mu], sections)?.sub(&beta_lam.mul(&lam_derivative(w)));
        let dw: Vec<LaurentPoly> = space.coords.iter().map(|c| w.partial(*c)).collect();
        let mut powers: Vec<i32> = rhs.terms().map(|(p, _)| p).chain(dw.iter().flat_map(|d| d.terms().map(|(p, _)| p))).collect();
        powers.sort();
        powers.dedup();
        for p in powers {
            let mut r = Row::new(rows.len());
            for (a, d) in dw.iter().enumerate() {
                r.add_coeff(a, &d.coeff(p));
            }
            r.rhs = rhs.coeff(p);
            rows.push(r);
        }
    }
    let order: Vec<usize> = (0..n).collect();
    let sol = linear::solve(n, rows, &order);
    if !sol.is_consistent() || !sol.free.is_empty() {
        return Err(ConnectionError::Unsupported("vector field does not descend to the moduli space".into()));
    }
    Ok(ProjectedField { components: (0..n).map(|a| sol.value(a).constant.clone()).collect() })
}

/// Whether brackets of the pushdowns stay in the span of the pushdowns
/// built with clock degree `max(tdeg + 1, 2 tdeg)`.
pub fn bracket_closes(space: &TwistorSpace, lines: &TwistorLines, g: &GlobalVectors) -> Result<bool, ConnectionError> {
    let target = global_vector_fields(space, lines, (g.tdeg + 1).max(2 * g.tdeg))?;
    for (i, x) in g.pushdowns.iter().enumerate() {
        for y in &g.pushdowns[i + 1..] {
            let b = x.bracket(y, &g.coords);
            if !b.is_zero() && !in_span(&target.pushdowns, &b) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
