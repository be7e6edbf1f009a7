use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};

use super::gcd::gcd;
use super::poly::{q, Monomial, Poly, Q};
use super::registry::{self, Var, VarKind};
use super::SymError;

/// Exact rational function: coprime numerator and monic denominator.
///
/// The representation is canonical, so structural equality is mathematical
/// equality and `is_zero` is a numerator test.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SymExpr {
    num: Poly,
    den: Poly,
}

impl Default for SymExpr {
    fn default() -> Self {
        Self::zero()
    }
}

impl SymExpr {
    pub fn zero() -> Self {
        SymExpr { num: Poly::zero(), den: Poly::one() }
    }

    pub fn one() -> Self {
        SymExpr { num: Poly::one(), den: Poly::one() }
    }

    pub fn int(n: i64) -> Self {
        Self::from_poly(Poly::constant(q(n)))
    }

    pub fn rational(c: Q) -> Self {
        Self::from_poly(Poly::constant(c))
    }

    pub fn frac(n: i64, d: i64) -> Self {
        Self::rational(super::poly::qf(n, d))
    }

    pub fn var(v: Var) -> Self {
        Self::from_poly(Poly::var(v))
    }

    pub fn from_poly(p: Poly) -> Self {
        SymExpr { num: p, den: Poly::one() }
    }

    /// `num / den`, reduced.
    pub fn ratio(num: Poly, den: Poly) -> Result<Self, SymError> {
        if den.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Self::reduce(num, den))
    }

    fn reduce(num: Poly, den: Poly) -> Self {
        if num.is_zero() {
            return Self::zero();
        }
        if let Some(c) = den.as_constant() {
            return SymExpr { num: num.scale(&c.recip()), den: Poly::one() };
        }
        let g = gcd(&num, &den);
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (num.exact_div(&g).expect("gcd divides"), den.exact_div(&g).expect("gcd divides"))
        };
        Self::normalize_lc(num, den)
    }

    fn normalize_lc(num: Poly, den: Poly) -> Self {
        let lc = den.leading_coeff();
        if lc.is_one() {
            SymExpr { num, den }
        } else {
            let inv = lc.recip();
            SymExpr { num: num.scale(&inv), den: den.scale(&inv) }
        }
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub fn as_poly(&self) -> Option<&Poly> {
        if self.den.is_one() {
            Some(&self.num)
        } else {
            None
        }
    }

    pub fn as_rational(&self) -> Option<Q> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn is_constant(&self) -> bool {
        self.den.is_one() && self.num.is_constant()
    }

    /// Rough size used to rank pivots.
    pub fn weight(&self) -> usize {
        self.num.len() + self.den.len() - 1
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut v = self.num.vars();
        v.extend(self.den.vars());
        v
    }

    pub fn contains_var(&self, v: Var) -> bool {
        self.num.contains_var(v) || self.den.contains_var(v)
    }

    /// Coordinates this expression may depend on, through symbols and masks.
    pub fn coordinate_support(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for v in self.vars() {
            out.extend(registry::dependencies(v));
            if let Some((_, base)) = registry::derivative_rule(v) {
                out.extend(registry::dependencies(base));
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        SymExpr { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            if self.den.is_one() {
                return Self::from_poly(self.num.add(&other.num));
            }
            return Self::reduce(self.num.add(&other.num), self.den.clone());
        }
        if self.den.is_one() {
            return SymExpr { num: self.num.mul(&other.den).add(&other.num), den: other.den.clone() };
        }
        if other.den.is_one() {
            return SymExpr { num: other.num.mul(&self.den).add(&self.num), den: self.den.clone() };
        }
        let g = gcd(&self.den, &other.den);
        if g.is_one() {
            let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
            // Coprime denominators cannot share a factor with the new numerator.
            return Self::normalize_lc(num, self.den.mul(&other.den));
        }
        let da = self.den.exact_div(&g).unwrap();
        let db = other.den.exact_div(&g).unwrap();
        let num = self.num.mul(&db).add(&other.num.mul(&da));
        if num.is_zero() {
            return Self::zero();
        }
        let den = self.den.mul(&db);
        let h = gcd(&num, &g);
        if h.is_one() {
            Self::normalize_lc(num, den)
        } else {
            Self::normalize_lc(num.exact_div(&h).unwrap(), den.exact_div(&h).unwrap())
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        if self.den.is_one() && other.den.is_one() {
            return Self::from_poly(self.num.mul(&other.num));
        }
        if let Some(c) = self.as_rational() {
            return SymExpr { num: other.num.scale(&c), den: other.den.clone() };
        }
        if let Some(c) = other.as_rational() {
            return SymExpr { num: self.num.scale(&c), den: self.den.clone() };
        }
        let g1 = if other.den.is_one() { Poly::one() } else { gcd(&self.num, &other.den) };
        let g2 = if self.den.is_one() { Poly::one() } else { gcd(&other.num, &self.den) };
        let n1 = if g1.is_one() { self.num.clone() } else { self.num.exact_div(&g1).unwrap() };
        let d2 = if g1.is_one() { other.den.clone() } else { other.den.exact_div(&g1).unwrap() };
        let n2 = if g2.is_one() { other.num.clone() } else { other.num.exact_div(&g2).unwrap() };
        let d1 = if g2.is_one() { self.den.clone() } else { self.den.exact_div(&g2).unwrap() };
        Self::normalize_lc(n1.mul(&n2), d1.mul(&d2))
    }

    pub fn inv(&self) -> Result<Self, SymError> {
        if self.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Self::normalize_lc(self.den.clone(), self.num.clone()))
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, SymError> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn scale(&self, c: &Q) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        SymExpr { num: self.num.scale(c), den: self.den.clone() }
    }

    pub fn powi(&self, e: i32) -> Result<Self, SymError> {
        if e < 0 {
            return self.inv()?.powi(-e);
        }
        let e = e as u32;
        Ok(SymExpr { num: self.num.pow(e), den: self.den.pow(e) })
    }

    /// Partial derivative along a moduli coordinate, with the chain rule
    /// through function symbols and installed derivative rules.
    pub fn partial(&self, coord: Var) -> Self {
        let dn = poly_partial(&self.num, coord);
        if self.den.is_one() {
            return dn;
        }
        let dd = poly_partial(&self.den, coord);
        if dd.is_zero() {
            return dn.mul(&SymExpr { num: Poly::one(), den: self.den.clone() });
        }
        let den = SymExpr::from_poly(self.den.clone());
        let top = dn.mul(&den).sub(&dd.mul(&SymExpr::from_poly(self.num.clone())));
        top.mul(&SymExpr { num: Poly::one(), den: self.den.mul(&self.den) })
    }

    /// Plain derivative in one symbol, treating every other symbol as independent.
    pub fn diff_symbol(&self, v: Var) -> Self {
        let dn = Self::from_poly(self.num.diff(v));
        if self.den.is_one() {
            return dn;
        }
        let dd = self.den.diff(v);
        let top = dn.mul(&Self::from_poly(self.den.clone())).sub(&Self::from_poly(self.num.mul(&dd)));
        top.mul(&SymExpr { num: Poly::one(), den: self.den.mul(&self.den) })
    }

    /// Replaces symbols by expressions. Derivative symbols of a substituted
    /// function are replaced by the matching derivatives of its value.
    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<Self, SymError> {
        if map.is_empty() {
            return Ok(self.clone());
        }
        let mut cache: HashMap<Var, Option<SymExpr>> = HashMap::new();
        let num = subst_poly(&self.num, map, &mut cache);
        if self.den.is_one() {
            return Ok(num);
        }
        let den = subst_poly(&self.den, map, &mut cache);
        num.checked_div(&den)
    }

    pub fn substitute_var(&self, v: Var, value: &SymExpr) -> Result<Self, SymError> {
        let mut map = HashMap::new();
        map.insert(v, value.clone());
        self.substitute(&map)
    }

    /// Substitutes rationals for some symbols.
    pub fn eval(&self, lookup: &dyn Fn(Var) -> Option<Q>) -> Result<Self, SymError> {
        let num = self.num.eval_partial(lookup);
        if self.den.is_one() {
            return Ok(Self::from_poly(num));
        }
        let den = self.den.eval_partial(lookup);
        Self::ratio(num, den)
    }
}

fn var_derivative(v: Var, coord: Var) -> Option<SymExpr> {
    match v.kind() {
        VarKind::Coordinate => (v == coord).then(SymExpr::one),
        VarKind::Constant | VarKind::Fibre => None,
        VarKind::Function { .. } => {
            if let Some((coeff, base)) = registry::derivative_rule(v) {
                let db = var_derivative(base, coord)?;
                let out = coeff.mul(&db);
                return (!out.is_zero()).then_some(out);
            }
            registry::derivative_symbol(v, coord).map(SymExpr::var)
        }
    }
}

fn poly_partial(p: &Poly, coord: Var) -> SymExpr {
    let mut acc_poly = Poly::zero();
    let mut acc = SymExpr::zero();
    for v in p.vars() {
        let Some(dv) = var_derivative(v, coord) else { continue };
        let pd = p.diff(v);
        match dv.as_poly() {
            Some(dp) => acc_poly = acc_poly.add(&pd.mul(dp)),
            None => acc = acc.add(&SymExpr::from_poly(pd).mul(&dv)),
        }
    }
    acc.add(&SymExpr::from_poly(acc_poly))
}

fn subst_value(v: Var, map: &HashMap<Var, SymExpr>, cache: &mut HashMap<Var, Option<SymExpr>>) -> Option<SymExpr> {
    if let Some(hit) = cache.get(&v) {
        return hit.clone();
    }
    let out = if let Some(val) = map.get(&v) {
        Some(val.clone())
    } else if let Some((root, multi)) = registry::root_of(v) {
        if root != v && !multi.is_empty() && map.contains_key(&root) {
            let mut val = map[&root].clone();
            for c in &multi {
                val = val.partial(*c);
            }
            Some(val)
        } else {
            None
        }
    } else {
        None
    };
    cache.insert(v, out.clone());
    out
}

fn subst_poly(p: &Poly, map: &HashMap<Var, SymExpr>, cache: &mut HashMap<Var, Option<SymExpr>>) -> SymExpr {
    let mut poly_part: Vec<(Monomial, Q)> = Vec::new();
    let mut acc = SymExpr::zero();
    let mut powers: HashMap<(Var, u32), SymExpr> = HashMap::new();
    for (m, c) in p.terms() {
        let mut rest = Monomial::one();
        let mut factor: Option<SymExpr> = None;
        for (v, e) in m.powers() {
            match subst_value(*v, map, cache) {
                None => rest = rest.mul(&Monomial::pow(*v, *e)),
                Some(val) => {
                    let pw = powers
                        .entry((*v, *e))
                        .or_insert_with(|| val.powi(*e as i32).expect("nonnegative power"))
                        .clone();
                    factor = Some(match factor {
                        None => pw,
                        Some(f) => f.mul(&pw),
                    });
                }
            }
        }
        match factor {
            None => poly_part.push((rest, c.clone())),
            Some(f) => {
                let term = f.mul(&SymExpr::from_poly(Poly::monomial(rest, c.clone())));
                acc = acc.add(&term);
            }
        }
    }
    acc.add(&SymExpr::from_poly(Poly::from_terms(poly_part)))
}

impl From<i64> for SymExpr {
    fn from(n: i64) -> Self {
        SymExpr::int(n)
    }
}

impl From<Var> for SymExpr {
    fn from(v: Var) -> Self {
        SymExpr::var(v)
    }
}

impl From<Poly> for SymExpr {
    fn from(p: Poly) -> Self {
        SymExpr::from_poly(p)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $call:ident) => {
        impl $tr<&SymExpr> for &SymExpr {
            type Output = SymExpr;
            fn $m(self, rhs: &SymExpr) -> SymExpr {
                SymExpr::$call(self, rhs)
            }
        }
        impl $tr<SymExpr> for SymExpr {
            type Output = SymExpr;
            fn $m(self, rhs: SymExpr) -> SymExpr {
                SymExpr::$call(&self, &rhs)
            }
        }
        impl $tr<&SymExpr> for SymExpr {
            type Output = SymExpr;
            fn $m(self, rhs: &SymExpr) -> SymExpr {
                SymExpr::$call(&self, rhs)
            }
        }
        impl $tr<SymExpr> for &SymExpr {
            type Output = SymExpr;
            fn $m(self, rhs: SymExpr) -> SymExpr {
                SymExpr::$call(self, &rhs)
            }
        }
    };
}

binop!(Add, add, add);
binop!(Sub, sub, sub);
binop!(Mul, mul, mul);

fn div_or_panic(a: &SymExpr, b: &SymExpr) -> SymExpr {
    a.checked_div(b).expect("division of SymExpr by zero")
}

binop!(Div, div, div_or_panic_method);

impl SymExpr {
    fn div_or_panic_method(&self, rhs: &SymExpr) -> SymExpr {
        div_or_panic(self, rhs)
    }
}

impl Neg for SymExpr {
    type Output = SymExpr;
    fn neg(self) -> SymExpr {
        SymExpr::neg(&self)
    }
}

impl Neg for &SymExpr {
    type Output = SymExpr;
    fn neg(self) -> SymExpr {
        SymExpr::neg(self)
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            return write!(f, "{}", self.num);
        }
        if self.num.len() == 1 {
            write!(f, "{}", self.num)?;
        } else {
            write!(f, "({})", self.num)?;
        }
        if self.den.len() == 1 && self.den.total_degree() == 1 {
            write!(f, "/{}", self.den)
        } else {
            write!(f, "/({})", self.den)
        }
    }
}
