//! Splitting of Cech cochains across the two charts of the projective line.
//!
//! Every problem here is linear once the unknown cochains are truncated to a
//! finite band of powers of `lam`: the coefficients of the unknowns become
//! columns of a sparse system over [`SymExpr`], and pivoting order decides
//! which coefficients survive as free parameters.

use std::collections::HashMap;

use crate::bundle::{self, BundleError, BundleType};
use crate::symbolic::linear::{self, Row};
use crate::symbolic::{registry, LMatrix, LaurentPoly, SymError, SymExpr, Var, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("no factorization found with degree bound up to {0}")]
    DegreeBoundExceeded(usize),
    #[error("patching matrix admits no factorization: {0}")]
    NoFactorization(String),
    #[error("shape mismatch: {0}")]
    RankMismatch(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("back-substitution left a nonzero residual in entry ({0},{1})")]
    BackSubstitution(usize, usize),
}

/// Chart side of a cochain coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    U,
    Hat,
}

/// Where the overlap of a scalar split goes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Share {
    Hat,
    U,
    /// Fraction placed on the `U` side; the rest goes to the hat side.
    Fraction(Q),
}

/// Requests that the coefficient of `lam^power` in entry `(row, col)` on
/// `side` be kept free and named `name`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeHint {
    pub row: usize,
    pub col: usize,
    pub side: Side,
    pub power: i32,
    pub name: String,
}

impl FreeHint {
    pub fn new(row: usize, col: usize, side: Side, power: i32, name: &str) -> Self {
        FreeHint { row, col, side, power, name: name.to_string() }
    }
}

#[derive(Clone, Debug)]
pub struct SplitOptions {
    /// Coordinates the new free parameters may depend on.
    pub mask: Vec<Var>,
    pub prefix: String,
    pub hints: Vec<FreeHint>,
    /// Which side's coefficients are solved for first, leaving the other free.
    pub pivot_first: Side,
    pub bound_u: Option<usize>,
    pub bound_hat: Option<usize>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions { mask: Vec::new(), prefix: "X".into(), hints: Vec::new(), pivot_first: Side::Hat, bound_u: None, bound_hat: None }
    }
}

impl SplitOptions {
    pub fn with_mask(mask: &[Var], prefix: &str) -> Self {
        SplitOptions { mask: mask.to_vec(), prefix: prefix.into(), ..Default::default() }
    }

    pub fn hints(mut self, hints: Vec<FreeHint>) -> Self {
        self.hints = hints;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeParam {
    pub var: Var,
    pub row: usize,
    pub col: usize,
    pub side: Side,
    pub power: i32,
}

impl FreeParam {
    pub fn name(&self) -> String {
        self.var.name()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructedTerm {
    pub row: usize,
    pub col: usize,
    pub power: i32,
    pub residual: SymExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Obstruction {
    pub terms: Vec<ObstructedTerm>,
}

impl Obstruction {
    pub fn dimension(&self) -> usize {
        self.terms.len()
    }
}

/// Solution of `G = -Xhat L + R X` with `X` polynomial in `lam` and `Xhat`
/// polynomial in `1/lam`. `cochain_hat` is stored in the `U` chart.
#[derive(Clone, Debug)]
pub struct SplittingSolution {
    pub cochain_u: LMatrix,
    pub cochain_hat: LMatrix,
    pub free_params: Vec<FreeParam>,
    pub obstruction: Option<Obstruction>,
}

impl SplittingSolution {
    pub fn param(&self, name: &str) -> Option<Var> {
        self.free_params.iter().find(|p| p.var.name() == name).map(|p| p.var)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Unknown {
    side: Side,
    row: usize,
    col: usize,
    power: i32,
}

fn span(m: &LMatrix) -> (i32, i32) {
    let mut lo = 0;
    let mut hi = 0;
    for e in m.entries() {
        if let (Some(a), Some(b)) = (e.min_power(), e.max_power()) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    (lo, hi)
}

/// Default truncation for [`split_matrix`].
pub fn default_bound(g: &LMatrix, left: &LMatrix, right: &LMatrix) -> usize {
    let (gl, gh) = span(g);
    let (ll, lh) = span(left);
    let (rl, rh) = span(right);
    ((lh - ll) + (rh - rl) + gl.abs().max(gh.abs()) + 2) as usize
}

pub fn split_matrix(g: &LMatrix, left: &LMatrix, right: &LMatrix, opts: &SplitOptions) -> Result<SplittingSolution, SplitError> {
    let k = right.rows;
    let m = left.rows;
    if right.cols != k || left.cols != m || g.rows != k || g.cols != m {
        return Err(SplitError::RankMismatch(format!(
            "G is {}x{}, left {}x{}, right {}x{}",
            g.rows, g.cols, left.rows, left.cols, right.rows, right.cols
        )));
    }
    let b = default_bound(g, left, right);
    let bu = opts.bound_u.unwrap_or(b) as i32;
    let bh = opts.bound_hat.unwrap_or(b) as i32;

    let mut unknowns = Vec::new();
    for row in 0..k {
        for col in 0..m {
            for p in 0..=bu {
                unknowns.push(Unknown { side: Side::U, row, col, power: p });
            }
            for p in -bh..=0 {
                unknowns.push(Unknown { side: Side::Hat, row, col, power: p });
            }
        }
    }
    let index: HashMap<Unknown, usize> = unknowns.iter().enumerate().map(|(i, u)| (*u, i)).collect();
    let hinted: HashMap<Unknown, &str> = opts
        .hints
        .iter()
        .map(|h| (Unknown { side: h.side, row: h.row, col: h.col, power: h.power }, h.name.as_str()))
        .collect();

    // Equation (i, j, p): sum_l R_il * X_lj - sum_l Xhat_il * L_lj = G_ij at lam^p.
    let mut eqs: HashMap<(usize, usize, i32), Row> = HashMap::new();
    let mut labels: Vec<(usize, usize, i32)> = Vec::new();
    let mut eq = |i: usize, j: usize, p: i32, eqs: &mut HashMap<(usize, usize, i32), Row>| -> usize {
        let key = (i, j, p);
        if !eqs.contains_key(&key) {
            labels.push(key);
            eqs.insert(key, Row::new(labels.len() - 1));
        }
        eqs[&key].label
    };
    for i in 0..k {
        for j in 0..m {
            for l in 0..k {
                for (q, c) in right.get(i, l).terms() {
                    for p in 0..=bu {
                        let e = eq(i, j, p + q, &mut eqs);
                        let _ = e;
                        let col = index[&Unknown { side: Side::U, row: l, col: j, power: p }];
                        eqs.get_mut(&(i, j, p + q)).unwrap().add_coeff(col, c);
                    }
                }
            }
            for l in 0..m {
                for (q, c) in left.get(l, j).terms() {
                    for p in -bh..=0 {
                        eq(i, j, p + q, &mut eqs);
                        let col = index[&Unknown { side: Side::Hat, row: i, col: l, power: p }];
                        eqs.get_mut(&(i, j, p + q)).unwrap().add_coeff(col, &c.neg());
                    }
                }
            }
            for (p, c) in g.get(i, j).terms() {
                eq(i, j, p, &mut eqs);
                let r = eqs.get_mut(&(i, j, p)).unwrap();
                r.rhs = r.rhs.add(c);
            }
        }
    }
    let mut rows: Vec<Row> = eqs.into_values().collect();
    rows.sort_by_key(|r| r.label);

    let first = opts.pivot_first;
    let mut order: Vec<usize> = Vec::with_capacity(unknowns.len());
    for pass in 0..3 {
        for (i, u) in unknowns.iter().enumerate() {
            let is_hint = hinted.contains_key(u);
            let take = match pass {
                0 => !is_hint && u.side == first,
                1 => !is_hint && u.side != first,
                _ => is_hint,
            };
            if take {
                order.push(i);
            }
        }
    }
    let sol = linear::solve(unknowns.len(), rows, &order);

    let mut param_vars: HashMap<usize, Var> = HashMap::new();
    let mut free_params = Vec::new();
    for c in &sol.free {
        let u = unknowns[*c];
        let name = match hinted.get(&u) {
            Some(n) => n.to_string(),
            None => format!(
                "{}[{},{}]{}{}",
                opts.prefix,
                u.row,
                u.col,
                if u.side == Side::U { "u" } else { "h" },
                u.power.abs()
            ),
        };
        let v = registry::function(&name, &opts.mask);
        param_vars.insert(*c, v);
        free_params.push(FreeParam { var: v, row: u.row, col: u.col, side: u.side, power: u.power });
    }
    free_params.sort_by(|a, b| (a.row, a.col, a.side == Side::Hat, a.power).cmp(&(b.row, b.col, b.side == Side::Hat, b.power)));

    let mut x = LMatrix::zero(k, m);
    let mut xh = LMatrix::zero(k, m);
    for (c, u) in unknowns.iter().enumerate() {
        let a = sol.value(c);
        let mut v = a.constant.clone();
        for (f, coef) in &a.terms {
            v = v.add(&coef.mul(&SymExpr::var(param_vars[f])));
        }
        if v.is_zero() {
            continue;
        }
        let target = if u.side == Side::U { &mut x } else { &mut xh };
        let mut e = target.get(u.row, u.col).clone();
        e.add_term(u.power, &v);
        target.set(u.row, u.col, e);
    }

    let obstruction = if sol.is_consistent() {
        let residual = xh.mul(left).neg().add(&right.mul(&x)).sub(g);
        for i in 0..k {
            for j in 0..m {
                if !residual.get(i, j).is_zero() {
                    return Err(SplitError::BackSubstitution(i, j));
                }
            }
        }
        None
    } else {
        let terms = sol
            .inconsistent
            .iter()
            .map(|(label, r)| {
                let (row, col, power) = labels[*label];
                ObstructedTerm { row, col, power, residual: r.clone() }
            })
            .collect();
        Some(Obstruction { terms })
    };
    Ok(SplittingSolution { cochain_u: x, cochain_hat: xh, free_params, obstruction })
}

/// Scalar split `hhat = lam^twist h + g`.
#[derive(Clone, Debug)]
pub struct ScalarSplit {
    pub h: LaurentPoly,
    pub h_hat: LaurentPoly,
    pub free_params: Vec<Var>,
    /// Powers of `g` that fit neither side, with their coefficients.
    pub obstruction: Vec<(i32, SymExpr)>,
}

pub fn split_scalar(g: &LaurentPoly, twist: i32) -> ScalarSplit {
    split_scalar_with(g, twist, &Share::Hat, &[], "c")
}

/// `h` collects powers `p >= twist`, `hhat` powers `p <= 0`; powers in both
/// ranges are divided according to `share`. Homogeneous solutions become free
/// parameters named `{prefix}{i}`.
pub fn split_scalar_with(g: &LaurentPoly, twist: i32, share: &Share, mask: &[Var], prefix: &str) -> ScalarSplit {
    let mut s = split_scalar_particular(g, twist, share);
    for i in 0..=(-twist) {
        let v = registry::function(&format!("{prefix}{i}"), mask);
        s.h.add_term(i, &SymExpr::var(v));
        s.h_hat.add_term(i + twist, &SymExpr::var(v));
        s.free_params.push(v);
    }
    s
}

/// The particular part of [`split_scalar_with`], without homogeneous terms.
pub fn split_scalar_particular(g: &LaurentPoly, twist: i32, share: &Share) -> ScalarSplit {
    let mut h = LaurentPoly::zero();
    let mut h_hat = LaurentPoly::zero();
    let mut obstruction = Vec::new();
    let frac = match share {
        Share::Hat => Q::from_integer(0.into()),
        Share::U => Q::from_integer(1.into()),
        Share::Fraction(f) => f.clone(),
    };
    for (p, c) in g.terms() {
        match (p >= twist, p <= 0) {
            (true, false) => h.add_term(p - twist, &c.neg()),
            (false, true) => h_hat.add_term(p, c),
            (true, true) => {
                let cu = c.scale(&frac);
                h.add_term(p - twist, &cu.neg());
                h_hat.add_term(p, &c.sub(&cu));
            }
            (false, false) => obstruction.push((p, c.clone())),
        }
    }
    ScalarSplit { h, h_hat, free_params: Vec::new(), obstruction }
}

/// `F = Hhat diag(lam^-n) H^-1` with `H` invertible over `U` and `Hhat`
/// invertible over the hat chart.
#[derive(Clone, Debug)]
pub struct BirkhoffFactorization {
    pub splitting_type: BundleType,
    /// Degree attached to each column of `H`, in column order.
    pub column_degrees: Vec<i32>,
    pub h: LMatrix,
    pub h_hat: LMatrix,
    pub det_h: SymExpr,
    pub free_params: Vec<FreeParam>,
    pub degree_bound: usize,
}

impl BirkhoffFactorization {
    pub fn param(&self, name: &str) -> Option<Var> {
        self.free_params.iter().find(|p| p.var.name() == name).map(|p| p.var)
    }

    pub fn h_inverse(&self) -> LMatrix {
        let inv = self.det_h.inv().expect("factorization has nonzero determinant");
        self.h.adjugate().map(|e| e.scale(&inv))
    }

    /// Replaces the free parameter `old` by `value`, a function of the new
    /// parameter `new` that takes its slot in `free_params`.
    pub fn reparametrize(&self, old: Var, new: Var, value: &SymExpr) -> Result<Self, SymError> {
        let mut map = HashMap::new();
        map.insert(old, value.clone());
        let mut out = self.clone();
        out.h = self.h.substitute(&map)?;
        out.h_hat = self.h_hat.substitute(&map)?;
        out.det_h = self.det_h.substitute(&map)?;
        for p in &mut out.free_params {
            if p.var == old {
                p.var = new;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct BirkhoffOptions {
    pub mask: Vec<Var>,
    pub prefix: String,
    pub hints: Vec<FreeHint>,
    pub max_bound: usize,
}

impl Default for BirkhoffOptions {
    fn default() -> Self {
        BirkhoffOptions { mask: Vec::new(), prefix: "H".into(), hints: Vec::new(), max_bound: 64 }
    }
}

fn column_hints(f: &LMatrix) -> Vec<i32> {
    (0..f.cols)
        .map(|j| {
            let lo = (0..f.rows).filter_map(|i| f.get(i, j).min_power()).min().unwrap_or(0);
            -lo
        })
        .collect()
}

/// Assignments of the type's degrees to columns, the heuristic one first.
fn column_assignments(t: &BundleType, hints: &[i32]) -> Vec<Vec<i32>> {
    let k = hints.len();
    let mut cols: Vec<usize> = (0..k).collect();
    cols.sort_by(|a, b| hints[*b].cmp(&hints[*a]).then(a.cmp(b)));
    let mut first = vec![0; k];
    for (slot, c) in cols.iter().enumerate() {
        first[*c] = t.degrees()[slot];
    }
    let mut out = vec![first.clone()];
    let mut perm: Vec<i32> = t.degrees().to_vec();
    perm.sort();
    loop {
        if perm != first && !out.contains(&perm) {
            out.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

fn next_permutation(v: &mut [i32]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Tries one column-degree assignment with the given truncation.
fn try_factor(f: &LMatrix, degrees: &[i32], bound: usize, opts: &BirkhoffOptions) -> Result<Option<BirkhoffFactorization>, SplitError> {
    let k = f.rows;
    let d = LMatrix::diagonal_powers(&degrees.iter().map(|n| -n).collect::<Vec<_>>());
    let zero = LMatrix::zero(k, k);
    let (lo, hi) = span(f);
    let max_n = degrees.iter().map(|n| n.abs()).max().unwrap_or(0);
    let split_opts = SplitOptions {
        mask: opts.mask.clone(),
        prefix: opts.prefix.clone(),
        hints: opts.hints.clone(),
        pivot_first: Side::U,
        bound_u: Some(bound),
        bound_hat: Some(bound + (max_n + lo.abs().max(hi.abs())) as usize),
    };
    let sol = split_matrix(&zero, &d, f, &split_opts)?;
    let det = sol.cochain_u.det();
    if det.is_zero() || !det.is_lambda_free() {
        return Ok(None);
    }
    let t = BundleType::new(degrees.to_vec())?;
    Ok(Some(BirkhoffFactorization {
        splitting_type: t,
        column_degrees: degrees.to_vec(),
        h: sol.cochain_u,
        h_hat: sol.cochain_hat,
        det_h: det.coeff(0),
        free_params: sol.free_params,
        degree_bound: bound,
    }))
}

/// Birkhoff factorization of a patching matrix with symbolic entries.
pub fn birkhoff_factorize(f: &LMatrix, opts: &BirkhoffOptions) -> Result<BirkhoffFactorization, SplitError> {
    if f.rows != f.cols {
        return Err(SplitError::RankMismatch(format!("patching matrix is {}x{}", f.rows, f.cols)));
    }
    let total = bundle::det_winding(f, &|_| None)?;
    let (lo, hi) = span(f);
    let hints = column_hints(f);
    let k = f.rows;
    let mut bound = ((hi - lo) as usize).max(1);
    let mut spread_cap = (hi - lo).max(1) + 1;
    loop {
        for t in bundle::candidate_types(k, total, spread_cap) {
            let b = bound + t.spread() as usize;
            for degrees in column_assignments(&t, &hints) {
                if let Some(fac) = try_factor(f, &degrees, b, opts)? {
                    return Ok(fac);
                }
            }
        }
        if bound >= opts.max_bound {
            return Err(SplitError::DegreeBoundExceeded(opts.max_bound));
        }
        bound = (bound * 2).min(opts.max_bound);
        spread_cap *= 2;
    }
}

/// Splitting type of `F` after substituting rationals for some symbols.
pub fn detect_splitting_type(f: &LMatrix, point: &[(Var, Q)]) -> Result<BundleType, SplitError> {
    let lookup: HashMap<Var, Q> = point.iter().cloned().collect();
    let fp = f
        .try_map(|e| e.eval(&|v| lookup.get(&v).cloned()))
        .map_err(|e| SplitError::NoFactorization(e.to_string()))?;
    Ok(birkhoff_factorize(&fp, &BirkhoffOptions { prefix: "Hpt".into(), ..Default::default() })?.splitting_type)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{registry, SymExpr};

    fn lp(terms: &[(i32, SymExpr)]) -> LaurentPoly {
        LaurentPoly::from_coeffs(terms.iter().cloned())
    }

    #[test]
    fn scalar_constant_goes_to_hat() {
        let a = SymExpr::var(registry::constant("sp_a"));
        let b = SymExpr::var(registry::constant("sp_b"));
        let g = lp(&[(-1, a.clone()), (0, b.clone()), (2, SymExpr::int(5))]);
        let s = split_scalar(&g, 0);
        assert_eq!(s.h.coeff(2), SymExpr::int(-5));
        assert_eq!(s.h_hat.coeff(0).sub(&s.h.coeff(0)), b);
        assert_eq!(s.h_hat.coeff(-1), a);
        assert!(s.obstruction.is_empty());
        let hom = s.h_hat.sub(&s.h).sub(&g);
        assert!(hom.is_zero());
    }

    #[test]
    fn scalar_obstruction_for_negative_bundle() {
        let g = lp(&[(-1, SymExpr::int(1))]);
        let s = split_scalar(&g, 1);
        assert!(s.obstruction.is_empty());
        let s = split_scalar(&lp(&[(1, SymExpr::int(1))]), 2);
        assert_eq!(s.obstruction.len(), 1);
    }

    #[test]
    fn diagonal_birkhoff() {
        let f = LMatrix::diagonal_powers(&[0, -1, -1]);
        let fac = birkhoff_factorize(&f, &BirkhoffOptions::default()).unwrap();
        assert_eq!(fac.splitting_type.to_string(), "(1,1,0)");
        assert_eq!(fac.free_params.len(), 9);
    }

    #[test]
    fn jump_detected_at_origin() {
        let x = registry::coordinate("sp_x0");
        let f = LMatrix::from_rows(vec![
            vec![lp(&[(1, SymExpr::one())]), lp(&[(0, SymExpr::var(x))])],
            vec![LaurentPoly::zero(), lp(&[(-3, SymExpr::one())])],
        ]);
        let at = |v: i64| detect_splitting_type(&f, &[(x, crate::symbolic::q(v))]).unwrap().to_string();
        assert_eq!(at(1), "(2,0)");
        assert_eq!(at(0), "(3,-1)");
    }
}
