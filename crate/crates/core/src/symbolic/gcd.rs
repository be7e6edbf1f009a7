//! Multivariate polynomial gcd over the rationals.
//!
//! Recursive primitive remainder sequences, with cheap exits for constants,
//! monomials, variables that occur on only one side, and exact division.

use std::collections::BTreeSet;

use super::poly::{Monomial, Poly, Q};
use super::registry::Var;
use num_traits::One;

/// Monic gcd; `gcd(0, 0) = 0`.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    if a == b {
        return a.monic();
    }
    let ma = a.monomial_content();
    let mb = b.monomial_content();
    let mg = ma.gcd(&mb);
    if a.is_monomial() || b.is_monomial() {
        return Poly::monomial(mg, Q::one());
    }
    let a1 = strip(a, &ma);
    let b1 = strip(b, &mb);
    let g = gcd_stripped(&a1, &b1);
    if mg.is_one() {
        g
    } else {
        g.mul_monomial(&mg, &Q::one())
    }
}

fn strip(p: &Poly, m: &Monomial) -> Poly {
    if m.is_one() {
        p.clone()
    } else {
        p.exact_div(&Poly::monomial(m.clone(), Q::one())).expect("monomial content divides")
    }
}

/// gcd of two polynomials with no monomial factor.
fn gcd_stripped(a: &Poly, b: &Poly) -> Poly {
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if big.exact_div(small).is_some() {
        return small.monic();
    }
    let va = a.vars();
    let vb = b.vars();
    if let Some(v) = va.difference(&vb).next() {
        return gcd_with_coefficients(b, a, *v);
    }
    if let Some(v) = vb.difference(&va).next() {
        return gcd_with_coefficients(a, b, *v);
    }
    let common: BTreeSet<Var> = va.intersection(&vb).copied().collect();
    if common.is_empty() {
        return Poly::one();
    }
    let x = *common
        .iter()
        .min_by_key(|v| (a.degree_in(**v).max(b.degree_in(**v)), **v))
        .unwrap();
    let (ca, pa) = content_and_primitive(a, x);
    let (cb, pb) = content_and_primitive(b, x);
    let gc = gcd(&ca, &cb);
    let gp = prs(pa, pb, x);
    gc.mul(&gp).monic()
}

/// gcd(p, q) where `q` involves `v` and `p` does not.
fn gcd_with_coefficients(p: &Poly, q: &Poly, v: Var) -> Poly {
    let mut g = p.clone();
    for c in q.coefficients_in(v).iter().rev() {
        if c.is_zero() {
            continue;
        }
        g = gcd(&g, c);
        if g.is_constant() {
            return Poly::one();
        }
    }
    g.monic()
}

/// Content with respect to `x` and the matching primitive part.
fn content_and_primitive(p: &Poly, x: Var) -> (Poly, Poly) {
    let coeffs = p.coefficients_in(x);
    let mut content = Poly::zero();
    for c in coeffs.iter().rev() {
        if c.is_zero() {
            continue;
        }
        content = gcd(&content, c);
        if content.is_constant() {
            break;
        }
    }
    if content.is_constant() {
        return (Poly::one(), p.monic());
    }
    let prim = p.exact_div(&content).expect("content divides");
    (content, prim)
}

fn prs(f: Poly, g: Poly, x: Var) -> Poly {
    let (mut r0, mut r1) = if f.degree_in(x) >= g.degree_in(x) { (f, g) } else { (g, f) };
    loop {
        if r1.is_zero() {
            return content_and_primitive(&r0, x).1.monic();
        }
        if r1.degree_in(x) == 0 {
            return Poly::one();
        }
        let r = pseudo_remainder(&r0, &r1, x);
        r0 = r1;
        r1 = if r.is_zero() { r } else { content_and_primitive(&r, x).1 };
    }
}

fn pseudo_remainder(a: &Poly, b: &Poly, x: Var) -> Poly {
    let bc = b.coefficients_in(x);
    let lb = bc.last().unwrap().clone();
    let mut r = a.coefficients_in(x);
    while r.len() >= bc.len() {
        let lr = r.last().unwrap().clone();
        if lr.is_zero() {
            r.pop();
            continue;
        }
        let shift = r.len() - bc.len();
        for c in r.iter_mut() {
            *c = c.mul(&lb);
        }
        for (j, c) in bc.iter().enumerate() {
            r[j + shift] = r[j + shift].sub(&lr.mul(c));
        }
        r.pop();
        while r.last().map(|c| c.is_zero()).unwrap_or(false) {
            r.pop();
        }
    }
    Poly::from_coefficients_in(x, &r)
}

#[cfg(test)]
mod tests {
    use super::super::poly::q;
    use super::super::registry::coordinate;
    use super::*;

    #[test]
    fn recovers_planted_factor() {
        let x = Poly::var(coordinate("gcd_x"));
        let y = Poly::var(coordinate("gcd_y"));
        let z = Poly::var(coordinate("gcd_z"));
        let common = x.mul(&y).add(&z.scale(&q(2))).sub(&Poly::one());
        let a = common.mul(&x.add(&y));
        let b = common.mul(&y.sub(&z)).mul(&x);
        assert_eq!(gcd(&a, &b), common.monic());
        assert!(gcd(&x.add(&y), &x.sub(&y)).is_one());
    }

    #[test]
    fn monomial_parts() {
        let x = Poly::var(coordinate("gcd_u"));
        let y = Poly::var(coordinate("gcd_v"));
        let a = x.mul(&x).mul(&y);
        let b = x.mul(&y).mul(&y).add(&x.mul(&x).mul(&y).mul(&y));
        assert_eq!(gcd(&a, &b), x.mul(&y));
    }
}
