use std::collections::HashMap;
use std::fmt;

use super::expr::SymExpr;
use super::registry::Var;
use super::SymError;

/// `sum_a w_a dx^a` on an ordered coordinate chart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneForm {
    pub coords: Vec<Var>,
    pub comps: Vec<SymExpr>,
}

impl OneForm {
    pub fn zero(coords: &[Var]) -> Self {
        OneForm { coords: coords.to_vec(), comps: vec![SymExpr::zero(); coords.len()] }
    }

    pub fn basis(coords: &[Var], a: usize) -> Self {
        let mut w = Self::zero(coords);
        w.comps[a] = SymExpr::one();
        w
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn get(&self, v: Var) -> SymExpr {
        self.coords.iter().position(|c| *c == v).map(|i| self.comps[i].clone()).unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(SymExpr::is_zero)
    }

    pub fn add(&self, other: &OneForm) -> OneForm {
        OneForm { coords: self.coords.clone(), comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &OneForm) -> OneForm {
        OneForm { coords: self.coords.clone(), comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, c: &SymExpr) -> OneForm {
        OneForm { coords: self.coords.clone(), comps: self.comps.iter().map(|a| a * c).collect() }
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<OneForm, SymError> {
        let comps = self.comps.iter().map(|c| c.substitute(map)).collect::<Result<_, _>>()?;
        Ok(OneForm { coords: self.coords.clone(), comps })
    }

    /// `(dw)_ab = d_a w_b - d_b w_a`.
    pub fn exterior_derivative(&self) -> TwoForm {
        let n = self.dim();
        let mut out = TwoForm::zero(&self.coords);
        for a in 0..n {
            for b in (a + 1)..n {
                let v = self.comps[b].partial(self.coords[a]) - self.comps[a].partial(self.coords[b]);
                out.set(a, b, v);
            }
        }
        out
    }

    pub fn wedge(&self, other: &OneForm) -> TwoForm {
        let n = self.dim();
        let mut out = TwoForm::zero(&self.coords);
        for a in 0..n {
            for b in (a + 1)..n {
                out.set(a, b, &self.comps[a] * &other.comps[b] - &self.comps[b] * &other.comps[a]);
            }
        }
        out
    }

    pub fn contract(&self, vector: &[SymExpr]) -> SymExpr {
        self.comps.iter().zip(vector).fold(SymExpr::zero(), |acc, (a, b)| acc + a * b)
    }
}

impl fmt::Display for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut any = false;
        for (c, v) in self.comps.iter().zip(&self.coords) {
            if c.is_zero() {
                continue;
            }
            if any {
                f.write_str(" + ")?;
            }
            any = true;
            write!(f, "({})*d{}", c, v)?;
        }
        if !any {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// Antisymmetric two-form `sum_{a<b} w_ab dx^a ^ dx^b`, stored densely.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoForm {
    pub coords: Vec<Var>,
    comps: Vec<SymExpr>,
}

impl TwoForm {
    pub fn zero(coords: &[Var]) -> Self {
        let n = coords.len();
        TwoForm { coords: coords.to_vec(), comps: vec![SymExpr::zero(); n * n] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn get(&self, a: usize, b: usize) -> &SymExpr {
        &self.comps[a * self.dim() + b]
    }

    pub fn set(&mut self, a: usize, b: usize, v: SymExpr) {
        let n = self.dim();
        if a == b {
            assert!(v.is_zero(), "diagonal of a two-form must vanish");
            return;
        }
        self.comps[b * n + a] = v.neg();
        self.comps[a * n + b] = v;
    }

    /// Coefficient of `dx ^ dy` for named coordinates.
    pub fn coefficient(&self, x: Var, y: Var) -> SymExpr {
        let a = self.coords.iter().position(|c| *c == x);
        let b = self.coords.iter().position(|c| *c == y);
        match (a, b) {
            (Some(a), Some(b)) => self.get(a, b).clone(),
            _ => SymExpr::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(SymExpr::is_zero)
    }

    pub fn add(&self, other: &TwoForm) -> TwoForm {
        TwoForm { coords: self.coords.clone(), comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &TwoForm) -> TwoForm {
        TwoForm { coords: self.coords.clone(), comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, c: &SymExpr) -> TwoForm {
        TwoForm { coords: self.coords.clone(), comps: self.comps.iter().map(|a| a * c).collect() }
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<TwoForm, SymError> {
        let comps = self.comps.iter().map(|c| c.substitute(map)).collect::<Result<_, _>>()?;
        Ok(TwoForm { coords: self.coords.clone(), comps })
    }

    pub fn eval(&self, lookup: &dyn Fn(Var) -> Option<super::Q>) -> Result<TwoForm, SymError> {
        let comps = self.comps.iter().map(|c| c.eval(lookup)).collect::<Result<_, _>>()?;
        Ok(TwoForm { coords: self.coords.clone(), comps })
    }
}

impl fmt::Display for TwoForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.dim();
        let mut any = false;
        for a in 0..n {
            for b in (a + 1)..n {
                let c = self.get(a, b);
                if c.is_zero() {
                    continue;
                }
                if any {
                    f.write_str(" + ")?;
                }
                any = true;
                write!(f, "({})*d{}^d{}", c, self.coords[a], self.coords[b])?;
            }
        }
        if !any {
            f.write_str("0")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
    Antisymmetric,
}

/// Dense tensor of fixed rank on a chart. Writes are propagated to every
/// index permutation allowed by the symmetry flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorField {
    pub coords: Vec<Var>,
    pub rank: usize,
    pub symmetry: Symmetry,
    comps: Vec<SymExpr>,
}

impl TensorField {
    pub fn zero(coords: &[Var], rank: usize, symmetry: Symmetry) -> Self {
        let n = coords.len();
        TensorField { coords: coords.to_vec(), rank, symmetry, comps: vec![SymExpr::zero(); n.pow(rank as u32)] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, i| acc * self.dim() + i)
    }

    pub fn get(&self, idx: &[usize]) -> &SymExpr {
        &self.comps[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: SymExpr) {
        match self.symmetry {
            Symmetry::General => {
                let k = self.flat(idx);
                self.comps[k] = v;
            }
            Symmetry::Symmetric | Symmetry::Antisymmetric => {
                let anti = self.symmetry == Symmetry::Antisymmetric;
                let mut seen = idx.to_vec();
                seen.sort();
                if anti && seen.windows(2).any(|w| w[0] == w[1]) {
                    assert!(v.is_zero(), "repeated index in an antisymmetric tensor");
                    return;
                }
                for (perm, sign) in permutations(idx) {
                    let k = self.flat(&perm);
                    self.comps[k] = if anti && sign < 0 { v.neg() } else { v.clone() };
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(SymExpr::is_zero)
    }

    pub fn components(&self) -> &[SymExpr] {
        &self.comps
    }

    pub fn map(&self, f: impl Fn(&SymExpr) -> SymExpr) -> TensorField {
        TensorField { coords: self.coords.clone(), rank: self.rank, symmetry: self.symmetry, comps: self.comps.iter().map(f).collect() }
    }

    pub fn try_map(&self, f: impl Fn(&SymExpr) -> Result<SymExpr, SymError>) -> Result<TensorField, SymError> {
        let comps = self.comps.iter().map(f).collect::<Result<_, _>>()?;
        Ok(TensorField { coords: self.coords.clone(), rank: self.rank, symmetry: self.symmetry, comps })
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        TensorField {
            coords: self.coords.clone(),
            rank: self.rank,
            symmetry: self.symmetry,
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect(),
        }
    }

    /// Every multi-index, in row-major order.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let total = n.pow(self.rank as u32);
        (0..total)
            .map(|mut k| {
                let mut idx = vec![0; self.rank];
                for slot in (0..self.rank).rev() {
                    idx[slot] = k % n;
                    k /= n;
                }
                idx
            })
            .collect()
    }
}

/// All permutations of `idx` with their signs (duplicates included).
fn permutations(idx: &[usize]) -> Vec<(Vec<usize>, i32)> {
    let mut out = Vec::new();
    let mut order = Vec::with_capacity(idx.len());
    let mut used = vec![false; idx.len()];
    collect_orders(&mut order, &mut used, &mut |ord| {
        let inversions = (0..ord.len()).flat_map(|i| (i + 1..ord.len()).map(move |j| (i, j))).filter(|(i, j)| ord[*i] > ord[*j]).count();
        let sign = if inversions % 2 == 0 { 1 } else { -1 };
        out.push((ord.iter().map(|i| idx[*i]).collect(), sign));
    });
    out
}

fn collect_orders(order: &mut Vec<usize>, used: &mut Vec<bool>, emit: &mut dyn FnMut(&[usize])) {
    if order.len() == used.len() {
        emit(order);
        return;
    }
    for i in 0..used.len() {
        if !used[i] {
            used[i] = true;
            order.push(i);
            collect_orders(order, used, emit);
            order.pop();
            used[i] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::registry::coordinate;
    use super::*;

    #[test]
    fn d_squared_vanishes() {
        let t = coordinate("fm_t");
        let y = coordinate("fm_y");
        let z = coordinate("fm_z");
        let f = SymExpr::var(t) * SymExpr::var(y) * SymExpr::var(y) + SymExpr::var(z) / SymExpr::var(t);
        let df = OneForm { coords: vec![t, y, z], comps: vec![f.partial(t), f.partial(y), f.partial(z)] };
        assert!(df.exterior_derivative().is_zero());
    }

    #[test]
    fn antisymmetric_writes() {
        let c = [coordinate("fm_a"), coordinate("fm_b"), coordinate("fm_c")];
        let mut t = TensorField::zero(&c, 3, Symmetry::Antisymmetric);
        t.set(&[0, 1, 2], SymExpr::one());
        assert_eq!(t.get(&[1, 0, 2]), &SymExpr::int(-1));
        assert_eq!(t.get(&[2, 0, 1]), &SymExpr::one());
    }
}
