use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use smallvec::SmallVec;

use super::registry::Var;

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Sparse power product, sorted by variable index with positive exponents.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial {
    deg: u32,
    pows: SmallVec<[(Var, u32); 4]>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(v: Var) -> Self {
        Self::pow(v, 1)
    }

    pub fn pow(v: Var, e: u32) -> Self {
        if e == 0 {
            return Self::one();
        }
        let mut pows = SmallVec::new();
        pows.push((v, e));
        Monomial { deg: e, pows }
    }

    pub fn degree(&self) -> u32 {
        self.deg
    }

    pub fn is_one(&self) -> bool {
        self.deg == 0
    }

    pub fn powers(&self) -> &[(Var, u32)] {
        &self.pows
    }

    pub fn exponent(&self, v: Var) -> u32 {
        match self.pows.binary_search_by(|(w, _)| w.cmp(&v)) {
            Ok(i) => self.pows[i].1,
            Err(_) => 0,
        }
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut pows = SmallVec::with_capacity(self.pows.len() + other.pows.len());
        let (mut i, mut j) = (0, 0);
        while i < self.pows.len() && j < other.pows.len() {
            let (a, ea) = self.pows[i];
            let (b, eb) = other.pows[j];
            match a.cmp(&b) {
                Ordering::Less => {
                    pows.push((a, ea));
                    i += 1;
                }
                Ordering::Greater => {
                    pows.push((b, eb));
                    j += 1;
                }
                Ordering::Equal => {
                    pows.push((a, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        pows.extend_from_slice(&self.pows[i..]);
        pows.extend_from_slice(&other.pows[j..]);
        Monomial { deg: self.deg + other.deg, pows }
    }

    pub fn divides(&self, other: &Monomial) -> bool {
        self.deg <= other.deg && self.pows.iter().all(|(v, e)| other.exponent(*v) >= *e)
    }

    /// `other / self`, assuming `self.divides(other)`.
    pub fn quotient_of(&self, other: &Monomial) -> Monomial {
        let mut pows = SmallVec::new();
        for (v, e) in &other.pows {
            let d = e - self.exponent(*v);
            if d > 0 {
                pows.push((*v, d));
            }
        }
        Monomial { deg: other.deg - self.deg, pows }
    }

    pub fn gcd(&self, other: &Monomial) -> Monomial {
        let mut pows = SmallVec::new();
        let mut deg = 0;
        for (v, e) in &self.pows {
            let m = (*e).min(other.exponent(*v));
            if m > 0 {
                pows.push((*v, m));
                deg += m;
            }
        }
        Monomial { deg, pows }
    }

    pub fn without(&self, v: Var) -> (u32, Monomial) {
        let e = self.exponent(v);
        if e == 0 {
            return (0, self.clone());
        }
        let pows: SmallVec<_> = self.pows.iter().copied().filter(|(w, _)| *w != v).collect();
        (e, Monomial { deg: self.deg - e, pows })
    }
}

impl Ord for Monomial {
    /// Graded lex with lower variable indices ranking higher.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.deg.cmp(&other.deg) {
            Ordering::Equal => {}
            o => return o,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.pows.get(i), other.pows.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some((a, ea)), Some((b, eb))) => {
                    if a != b {
                        return if a < b { Ordering::Greater } else { Ordering::Less };
                    }
                    if ea != eb {
                        return ea.cmp(eb);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial over the rationals, terms sorted leading first.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Poly {
    terms: Vec<(Monomial, Q)>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(Q::one())
    }

    pub fn constant(c: Q) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Poly { terms: vec![(Monomial::one(), c)] }
    }

    pub fn var(v: Var) -> Self {
        Poly { terms: vec![(Monomial::var(v), Q::one())] }
    }

    pub fn monomial(m: Monomial, c: Q) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Poly { terms: vec![(m, c)] }
    }

    /// Builds a polynomial from unsorted terms, merging duplicates.
    pub fn from_terms(mut terms: Vec<(Monomial, Q)>) -> Self {
        terms.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out: Vec<(Monomial, Q)> = Vec::with_capacity(terms.len());
        for (m, c) in terms {
            match out.last_mut() {
                Some((lm, lc)) if *lm == m => *lc += c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|(_, c)| !c.is_zero());
        Poly { terms: out }
    }

    pub fn terms(&self) -> &[(Monomial, Q)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Q> {
        match self.terms.as_slice() {
            [] => Some(Q::zero()),
            [(m, c)] if m.is_one() => Some(c.clone()),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() || (self.terms.len() == 1 && self.terms[0].0.is_one())
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0.is_one() && self.terms[0].1.is_one()
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn leading(&self) -> Option<&(Monomial, Q)> {
        self.terms.first()
    }

    pub fn leading_coeff(&self) -> Q {
        self.terms.first().map(|t| t.1.clone()).unwrap_or_else(Q::zero)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.first().map(|t| t.0.degree()).unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for (m, _) in &self.terms {
            for (v, _) in m.powers() {
                out.insert(*v);
            }
        }
        out
    }

    pub fn contains_var(&self, v: Var) -> bool {
        self.terms.iter().any(|(m, _)| m.exponent(v) > 0)
    }

    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms.iter().map(|(m, _)| m.exponent(v)).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &Q) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect() }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &Q) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(n, k)| (n.mul(m), k * c)).collect() }
    }

    pub fn monic(&self) -> Poly {
        match self.terms.first() {
            None => Poly::zero(),
            Some((_, c)) if c.is_one() => self.clone(),
            Some((_, c)) => self.scale(&c.recip()),
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        self.merge(other, false)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.merge(other, true)
    }

    fn merge(&self, other: &Poly, negate: bool) -> Poly {
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        let a = &self.terms;
        let b = &other.terms;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Greater => {
                    out.push(a[i].clone());
                    i += 1;
                }
                Ordering::Less => {
                    let c = if negate { -b[j].1.clone() } else { b[j].1.clone() };
                    out.push((b[j].0.clone(), c));
                    j += 1;
                }
                Ordering::Equal => {
                    let c = if negate { &a[i].1 - &b[j].1 } else { &a[i].1 + &b[j].1 };
                    if !c.is_zero() {
                        out.push((a[i].0.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(a[i..].iter().cloned());
        for t in &b[j..] {
            let c = if negate { -t.1.clone() } else { t.1.clone() };
            out.push((t.0.clone(), c));
        }
        Poly { terms: out }
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = self.as_constant() {
            return other.scale(&c);
        }
        if let Some(c) = other.as_constant() {
            return self.scale(&c);
        }
        let (small, big) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        if small.len() == 1 {
            let (m, c) = &small.terms[0];
            return big.mul_monomial(m, c);
        }
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                terms.push((ma.mul(mb), ca * cb));
            }
        }
        Poly::from_terms(terms)
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Plain partial derivative with respect to one symbol.
    pub fn diff(&self, v: Var) -> Poly {
        let mut terms = Vec::new();
        for (m, c) in &self.terms {
            let (e, rest) = m.without(v);
            if e == 0 {
                continue;
            }
            let m2 = rest.mul(&Monomial::pow(v, e - 1));
            terms.push((m2, c * q(e as i64)));
        }
        Poly::from_terms(terms)
    }

    /// Exact quotient, or `None` if `d` does not divide `self`.
    pub fn exact_div(&self, d: &Poly) -> Option<Poly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&c.recip()));
        }
        if d.is_monomial() {
            let (dm, dc) = &d.terms[0];
            let inv = dc.recip();
            let mut terms = Vec::with_capacity(self.len());
            for (m, c) in &self.terms {
                if !dm.divides(m) {
                    return None;
                }
                terms.push((dm.quotient_of(m), c * &inv));
            }
            // Dividing by a monomial preserves the relative order of terms.
            return Some(Poly { terms });
        }
        let (lm, lc) = d.leading().unwrap();
        let lc_inv = lc.recip();
        let mut rem = self.clone();
        let mut quot = Vec::new();
        while let Some((rm, rc)) = rem.leading().cloned() {
            if !lm.divides(&rm) || rm.degree() < lm.degree() {
                return None;
            }
            let tm = lm.quotient_of(&rm);
            let tc = &rc * &lc_inv;
            rem = rem.sub(&d.mul_monomial(&tm, &tc));
            quot.push((tm, tc));
        }
        Some(Poly::from_terms(quot))
    }

    /// Coefficients of `self` as a polynomial in `v`, lowest degree first.
    pub fn coefficients_in(&self, v: Var) -> Vec<Poly> {
        let deg = self.degree_in(v) as usize;
        let mut buckets: Vec<Vec<(Monomial, Q)>> = vec![Vec::new(); deg + 1];
        for (m, c) in &self.terms {
            let (e, rest) = m.without(v);
            buckets[e as usize].push((rest, c.clone()));
        }
        buckets.into_iter().map(Poly::from_terms).collect()
    }

    pub fn from_coefficients_in(v: Var, coeffs: &[Poly]) -> Poly {
        let mut terms = Vec::new();
        for (e, c) in coeffs.iter().enumerate() {
            let vm = Monomial::pow(v, e as u32);
            for (m, k) in c.terms() {
                terms.push((m.mul(&vm), k.clone()));
            }
        }
        Poly::from_terms(terms)
    }

    /// Greatest monomial dividing every term.
    pub fn monomial_content(&self) -> Monomial {
        let mut it = self.terms.iter();
        let Some((first, _)) = it.next() else {
            return Monomial::one();
        };
        let mut g = first.clone();
        for (m, _) in it {
            if g.is_one() {
                break;
            }
            g = g.gcd(m);
        }
        g
    }

    /// Substitutes each symbol by a rational, leaving unmapped symbols alone.
    pub fn eval_partial(&self, lookup: &dyn Fn(Var) -> Option<Q>) -> Poly {
        let mut terms = Vec::with_capacity(self.len());
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut rest = Monomial::one();
            for (v, e) in m.powers() {
                match lookup(*v) {
                    Some(val) => coeff *= num_traits::pow(val, *e as usize),
                    None => rest = rest.mul(&Monomial::pow(*v, *e)),
                }
            }
            terms.push((rest, coeff));
        }
        Poly::from_terms(terms)
    }

    /// Denominator lcm and numerator gcd of the coefficients, as one rational.
    pub fn rational_content(&self) -> Q {
        use num_integer::Integer;
        let mut num = BigInt::zero();
        let mut den = BigInt::one();
        for (_, c) in &self.terms {
            num = num.gcd(c.numer());
            den = den.lcm(c.denom());
        }
        if num.is_zero() {
            return Q::one();
        }
        Q::new(num, den)
    }
}

fn fmt_factor(f: &mut fmt::Formatter<'_>, m: &Monomial) -> fmt::Result {
    let mut first = true;
    for (v, e) in m.powers() {
        if !first {
            f.write_str("*")?;
        }
        first = false;
        write!(f, "{}", v)?;
        if *e > 1 {
            write!(f, "^{}", e)?;
        }
    }
    Ok(())
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if m.is_one() {
                write!(f, "{}", a)?;
            } else {
                if !a.is_one() {
                    write!(f, "{}*", a)?;
                }
                fmt_factor(f, m)?;
            }
        }
        Ok(())
    }
}
