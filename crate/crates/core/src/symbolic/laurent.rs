use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::expr::SymExpr;
use super::registry::Var;
use super::SymError;

/// Which affine chart of the projective line a Laurent polynomial is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    /// Coordinate `lam`.
    U,
    /// Coordinate `lamhat = 1/lam`.
    Hat,
}

/// Finite Laurent polynomial in the chart variable, no zero entries stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaurentPoly {
    chart: Chart,
    coeffs: BTreeMap<i32, SymExpr>,
}

impl Default for LaurentPoly {
    fn default() -> Self {
        Self::zero()
    }
}

impl LaurentPoly {
    pub fn zero() -> Self {
        LaurentPoly { chart: Chart::U, coeffs: BTreeMap::new() }
    }

    pub fn constant(c: SymExpr) -> Self {
        Self::monomial(0, c)
    }

    pub fn monomial(power: i32, c: SymExpr) -> Self {
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(power, c);
        }
        LaurentPoly { chart: Chart::U, coeffs }
    }

    pub fn lambda_pow(power: i32) -> Self {
        Self::monomial(power, SymExpr::one())
    }

    pub fn from_coeffs(coeffs: impl IntoIterator<Item = (i32, SymExpr)>) -> Self {
        let mut out = Self::zero();
        for (p, c) in coeffs {
            out.add_term(p, &c);
        }
        out
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn in_chart(mut self, chart: Chart) -> Self {
        self.chart = chart;
        self
    }

    /// Rewrites in the other chart: `lam^n` becomes `lamhat^-n`.
    pub fn to_chart(&self, chart: Chart) -> Self {
        if chart == self.chart {
            return self.clone();
        }
        LaurentPoly { chart, coeffs: self.coeffs.iter().map(|(p, c)| (-p, c.clone())).collect() }
    }

    fn aligned<'a>(&self, other: &'a LaurentPoly) -> std::borrow::Cow<'a, BTreeMap<i32, SymExpr>> {
        if other.chart == self.chart {
            std::borrow::Cow::Borrowed(&other.coeffs)
        } else {
            std::borrow::Cow::Owned(other.to_chart(self.chart).coeffs)
        }
    }

    pub fn coeff(&self, power: i32) -> SymExpr {
        self.coeffs.get(&power).cloned().unwrap_or_default()
    }

    pub fn coeff_ref(&self, power: i32) -> Option<&SymExpr> {
        self.coeffs.get(&power)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &SymExpr)> {
        self.coeffs.iter().map(|(p, c)| (*p, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min_power(&self) -> Option<i32> {
        self.coeffs.keys().next().copied()
    }

    pub fn max_power(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }

    /// True when only nonnegative powers occur.
    pub fn is_polynomial(&self) -> bool {
        self.min_power().map(|p| p >= 0).unwrap_or(true)
    }

    pub fn is_lambda_free(&self) -> bool {
        self.coeffs.keys().all(|p| *p == 0)
    }

    pub fn add_term(&mut self, power: i32, c: &SymExpr) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(power).or_default();
        *entry = entry.add(c);
        if entry.is_zero() {
            self.coeffs.remove(&power);
        }
    }

    pub fn add(&self, other: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        for (p, c) in self.aligned(other).iter() {
            out.add_term(*p, c);
        }
        out
    }

    pub fn sub(&self, other: &LaurentPoly) -> LaurentPoly {
        let mut out = self.clone();
        for (p, c) in self.aligned(other).iter() {
            out.add_term(*p, &c.neg());
        }
        out
    }

    pub fn neg(&self) -> LaurentPoly {
        LaurentPoly { chart: self.chart, coeffs: self.coeffs.iter().map(|(p, c)| (*p, c.neg())).collect() }
    }

    pub fn mul(&self, other: &LaurentPoly) -> LaurentPoly {
        let mut out = LaurentPoly { chart: self.chart, coeffs: BTreeMap::new() };
        let rhs = self.aligned(other);
        for (p, a) in &self.coeffs {
            for (r, b) in rhs.iter() {
                out.add_term(p + r, &a.mul(b));
            }
        }
        out
    }

    pub fn scale(&self, c: &SymExpr) -> LaurentPoly {
        if c.is_zero() {
            return LaurentPoly { chart: self.chart, coeffs: BTreeMap::new() };
        }
        self.map_coeffs(|x| x.mul(c))
    }

    /// Multiplies by `lam^k` in the current chart variable.
    pub fn shift(&self, k: i32) -> LaurentPoly {
        LaurentPoly { chart: self.chart, coeffs: self.coeffs.iter().map(|(p, c)| (p + k, c.clone())).collect() }
    }

    pub fn pow(&self, e: u32) -> LaurentPoly {
        let mut out = Self::constant(SymExpr::one()).in_chart(self.chart);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn map_coeffs(&self, f: impl Fn(&SymExpr) -> SymExpr) -> LaurentPoly {
        let mut out = LaurentPoly { chart: self.chart, coeffs: BTreeMap::new() };
        for (p, c) in &self.coeffs {
            out.add_term(*p, &f(c));
        }
        out
    }

    pub fn try_map_coeffs(&self, f: impl Fn(&SymExpr) -> Result<SymExpr, SymError>) -> Result<LaurentPoly, SymError> {
        let mut out = LaurentPoly { chart: self.chart, coeffs: BTreeMap::new() };
        for (p, c) in &self.coeffs {
            out.add_term(*p, &f(c)?);
        }
        Ok(out)
    }

    /// Coefficientwise coordinate derivative.
    pub fn partial(&self, coord: Var) -> LaurentPoly {
        self.map_coeffs(|c| c.partial(coord))
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<LaurentPoly, SymError> {
        self.try_map_coeffs(|c| c.substitute(map))
    }

    /// Terms with power in `lo..=hi`.
    pub fn truncate(&self, lo: i32, hi: i32) -> LaurentPoly {
        LaurentPoly {
            chart: self.chart,
            coeffs: self.coeffs.range(lo..=hi).map(|(p, c)| (*p, c.clone())).collect(),
        }
    }

    pub fn nonnegative_part(&self) -> LaurentPoly {
        self.truncate(0, i32::MAX)
    }

    pub fn positive_part(&self) -> LaurentPoly {
        self.truncate(1, i32::MAX)
    }

    pub fn negative_part(&self) -> LaurentPoly {
        self.truncate(i32::MIN, -1)
    }

    /// Evaluates every coefficient at a rational point.
    pub fn eval(&self, lookup: &dyn Fn(Var) -> Option<super::Q>) -> Result<LaurentPoly, SymError> {
        self.try_map_coeffs(|c| c.eval(lookup))
    }
}

impl fmt::Display for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return f.write_str("0");
        }
        let var = match self.chart {
            Chart::U => "lam",
            Chart::Hat => "lamhat",
        };
        for (i, (p, c)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            match *p {
                0 => write!(f, "({})", c)?,
                1 => write!(f, "({})*{}", c, var)?,
                _ => write!(f, "({})*{}^{}", c, var, p)?,
            }
        }
        Ok(())
    }
}
