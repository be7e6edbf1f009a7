//! Frames, clocks and metrics read off from the global section `H^-1 dw|`.

use std::collections::HashMap;

use crate::moduli::{CoefficientTables, TwistorLines, TwistorSpace};
use crate::splitting::{birkhoff_factorize, BirkhoffFactorization, BirkhoffOptions, FreeParam, SplitError};
use crate::symbolic::linear::{self, Row};
use crate::symbolic::{q, registry, LMatrix, LaurentPoly, OneForm, SymError, SymExpr, Symmetry, TensorField, TwoForm, Var, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("frame component {component} has a term lam^{power} outside its degree range")]
    NonGlobalSection { component: usize, power: i32 },
    #[error("the splitting type has no O(0) summand to serve as a clock")]
    NoClockRow,
    #[error("observer or metric is not unique: {0}")]
    NonUniqueObserver(String),
    #[error("cannot contract the frame into a metric: {0}")]
    DegenerateContraction(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

/// One component `v_i` of the frame section: a polynomial of degree `n_i` in
/// `lam` with one-form coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameComponent {
    pub degree: i32,
    /// `coeffs[p]` multiplies `lam^p`.
    pub coeffs: Vec<OneForm>,
}

impl FrameComponent {
    /// The symmetric spinor component with `k` primed zeros, `e^{0'..0'1'..1'}`.
    /// With `pi_{0'} = lam` the `lam^k` coefficient is `C(n,k)` times it.
    pub fn spinor(&self, k: usize) -> OneForm {
        let b = binomial(self.degree as u64, k as u64);
        self.coeffs[k].scale(&SymExpr::rational(Q::new(1.into(), b.into())))
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Clone, Debug)]
pub struct FrameSection {
    pub coords: Vec<Var>,
    pub components: Vec<FrameComponent>,
    /// Index of the degree-0 component, when the type has exactly one.
    pub clock_index: Option<usize>,
    pub free_params: Vec<FreeParam>,
    /// Expressions that must not vanish.
    pub side_conditions: Vec<SymExpr>,
    pub factorization: BirkhoffFactorization,
}

impl FrameSection {
    pub fn clock(&self) -> Option<&OneForm> {
        self.clock_index.map(|i| &self.components[i].coeffs[0])
    }

    /// `v_i` as a Laurent polynomial for the `a`-th coordinate.
    pub fn component_poly(&self, i: usize, a: usize) -> LaurentPoly {
        LaurentPoly::from_coeffs(self.components[i].coeffs.iter().enumerate().map(|(p, w)| (p as i32, w.comps[a].clone())))
    }

    /// Spatial components in order, i.e. every component but the clock.
    pub fn spatial(&self) -> Vec<&FrameComponent> {
        self.components.iter().enumerate().filter(|(i, _)| Some(*i) != self.clock_index).map(|(_, c)| c).collect()
    }

    pub fn param(&self, name: &str) -> Option<Var> {
        self.free_params.iter().find(|p| p.var.name() == name).map(|p| p.var)
    }
}

/// Birkhoff factorization of `F1` with the space's naming conventions, on
/// the locus given by `restriction`.
pub fn factorize_frame(space: &TwistorSpace, f1: &LMatrix, restriction: &HashMap<Var, SymExpr>) -> Result<BirkhoffFactorization, GeometryError> {
    let f = f1.substitute(restriction)?;
    let opts = BirkhoffOptions {
        mask: space.coords.clone(),
        prefix: "H".into(),
        hints: space.conventions.frame.clone(),
        ..Default::default()
    };
    let fac = birkhoff_factorize(&f, &opts)?;
    match &space.conventions.clock_scale {
        Some(name) => normalize_clock_scale(space, fac, name),
        None => Ok(fac),
    }
}

/// Trades the raw coefficient `name~` for `name = det H / cofactor`, so that
/// the clock entry of `H^-1` is exactly `1/name`.
fn normalize_clock_scale(space: &TwistorSpace, fac: BirkhoffFactorization, name: &str) -> Result<BirkhoffFactorization, GeometryError> {
    let Some(raw) = fac.param(&format!("{name}~")) else { return Ok(fac) };
    let Some(col) = fac.column_degrees.iter().position(|d| *d == 0) else { return Ok(fac) };
    let Some(row) = space.rows.iter().position(|r| r.degree == 0) else { return Ok(fac) };
    let entry = fac.h.adjugate().get(col, row).clone();
    if !entry.is_lambda_free() || entry.is_zero() {
        return Ok(fac);
    }
    let scale = fac.det_h.checked_div(&entry.coeff(0))?;
    let rest = scale.sub(&SymExpr::var(raw));
    if rest.contains_var(raw) {
        return Ok(fac);
    }
    let new = registry::function(name, &space.coords);
    Ok(fac.reparametrize(raw, new, &SymExpr::var(new).sub(&rest))?)
}

/// `v = H^-1 dw|`, restricted afterwards when `restriction` is nonempty.
pub fn frame_section_on(
    lines: &TwistorLines,
    fac: &BirkhoffFactorization,
    restriction: &HashMap<Var, SymExpr>,
) -> Result<FrameSection, GeometryError> {
    let hinv = fac.h_inverse();
    let dw = lines.differential();
    let k = hinv.rows;
    let n = lines.coords.len();
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let deg = fac.column_degrees[i];
        let mut coeffs = vec![OneForm::zero(&lines.coords); deg.max(0) as usize + 1];
        for a in 0..n {
            let mut e = LaurentPoly::zero();
            for (mu, row) in dw.iter().enumerate() {
                e = e.add(&hinv.get(i, mu).mul(&row[a]));
            }
            let e = e.substitute(restriction)?;
            for (p, c) in e.terms() {
                if p < 0 || p > deg {
                    return Err(GeometryError::NonGlobalSection { component: i, power: p });
                }
                coeffs[p as usize].comps[a] = c.clone();
            }
        }
        if deg < 0 {
            coeffs.clear();
        }
        components.push(FrameComponent { degree: deg, coeffs });
    }
    let zeros: Vec<usize> = (0..k).filter(|i| fac.column_degrees[*i] == 0).collect();
    Ok(FrameSection {
        coords: lines.coords.clone(),
        components,
        clock_index: if zeros.len() == 1 { Some(zeros[0]) } else { None },
        free_params: fac.free_params.clone(),
        side_conditions: vec![fac.det_h.clone()],
        factorization: fac.clone(),
    })
}

pub fn frame_section(lines: &TwistorLines, fac: &BirkhoffFactorization) -> Result<FrameSection, GeometryError> {
    frame_section_on(lines, fac, &HashMap::new())
}

/// `H v = dw|`, checked exactly.
pub fn reconstruction_holds(lines: &TwistorLines, frame: &FrameSection) -> bool {
    let h = &frame.factorization.h;
    let dw = lines.differential();
    (0..h.rows).all(|mu| {
        (0..lines.coords.len()).all(|a| {
            let mut e = LaurentPoly::zero();
            for i in 0..h.cols {
                e = e.add(&h.get(mu, i).mul(&frame.component_poly(i, a)));
            }
            e == dw[mu][a]
        })
    })
}

fn eps(a: usize, b: usize) -> i64 {
    match (a, b) {
        (0, 1) => 1,
        (1, 0) => -1,
        _ => 0,
    }
}

fn sym_outer(g: &mut [Vec<SymExpr>], c: &SymExpr, x: &OneForm, y: &OneForm) {
    if c.is_zero() {
        return;
    }
    for (a, xa) in x.comps.iter().enumerate() {
        if xa.is_zero() {
            continue;
        }
        for (b, yb) in y.comps.iter().enumerate() {
            g[a][b] = g[a][b].add(&c.mul(xa).mul(yb));
        }
    }
}

fn to_tensor(coords: &[Var], g: Vec<Vec<SymExpr>>) -> TensorField {
    let mut t = TensorField::zero(coords, 2, Symmetry::Symmetric);
    for a in 0..coords.len() {
        for b in a..coords.len() {
            let v = g[a][b].add(&g[b][a]).scale(&Q::new(1.into(), 2.into()));
            t.set(&[a, b], v);
        }
    }
    t
}

/// Contracts the given components with `eps_{01} = 1` on every spinor index.
///
/// A single even component `O(2n)` gives `e_{A'..} (x) e^{A'..}`; two
/// components of the same odd degree give `eps_{AB} eps_{A'B'}.. e^{AA'..} (x) e^{BB'..}`.
/// A single odd component admits no symmetric invariant, so it is contracted
/// with the identity matrix instead.
pub fn contract_components(coords: &[Var], comps: &[&FrameComponent]) -> Result<TensorField, GeometryError> {
    let n = coords.len();
    let mut g = vec![vec![SymExpr::zero(); n]; n];
    let sign = |k: usize, deg: usize| if (deg - k) % 2 == 0 { 1 } else { -1 };
    match comps {
        [c] if c.degree >= 0 && c.degree % 2 == 0 => {
            let d = c.degree as usize;
            for k in 0..=d {
                let w = SymExpr::int(sign(k, d) * binomial(d as u64, k as u64) as i64);
                sym_outer(&mut g, &w, &c.spinor(k), &c.spinor(d - k));
            }
        }
        [c] if c.degree > 0 => {
            for k in 0..=c.degree as usize {
                sym_outer(&mut g, &SymExpr::one(), &c.spinor(k), &c.spinor(k));
            }
        }
        [c0, c1] if c0.degree == c1.degree && c0.degree > 0 && c0.degree % 2 == 1 => {
            let d = c0.degree as usize;
            let pair = [c0, c1];
            for (a, ca) in pair.iter().enumerate() {
                for (b, cb) in pair.iter().enumerate() {
                    if eps(a, b) == 0 {
                        continue;
                    }
                    for k in 0..=d {
                        let w = SymExpr::int(eps(a, b) * sign(k, d) * binomial(d as u64, k as u64) as i64);
                        sym_outer(&mut g, &w, &ca.spinor(k), &cb.spinor(d - k));
                    }
                }
            }
        }
        _ => {
            let degs: Vec<i32> = comps.iter().map(|c| c.degree).collect();
            return Err(GeometryError::DegenerateContraction(format!("no contraction for components of degrees {degs:?}")));
        }
    }
    Ok(to_tensor(coords, g))
}

/// Conformal metric with the symbol naming its undetermined scale.
#[derive(Clone, Debug)]
pub struct RelativisticMetric {
    pub metric: TensorField,
    pub conformal_factor: Var,
}

pub fn relativistic_metric(frame: &FrameSection) -> Result<RelativisticMetric, GeometryError> {
    if frame.components.iter().any(|c| c.degree == 0) {
        return Err(GeometryError::DegenerateContraction("the type has an O(0) summand; use the Galilean structure".into()));
    }
    let comps: Vec<&FrameComponent> = frame.components.iter().collect();
    let metric = contract_components(&frame.coords, &comps)?;
    Ok(RelativisticMetric { metric, conformal_factor: registry::constant("conformal") })
}

#[derive(Clone, Debug)]
pub struct GalileanStructure {
    pub coords: Vec<Var>,
    pub clock: OneForm,
    /// Degenerate covariant metric `h_ab`.
    pub cometric: TensorField,
    pub observer: Vec<SymExpr>,
    /// Contravariant spatial metric `h^ab`.
    pub metric: TensorField,
    pub side_conditions: Vec<SymExpr>,
}

fn solve_unique(ncols: usize, rows: Vec<Row>, what: &str) -> Result<Vec<SymExpr>, GeometryError> {
    let order: Vec<usize> = (0..ncols).collect();
    let sol = linear::solve(ncols, rows, &order);
    if !sol.is_consistent() {
        return Err(GeometryError::NonUniqueObserver(format!("{what} has no solution")));
    }
    if !sol.free.is_empty() {
        return Err(GeometryError::NonUniqueObserver(format!("{what} has {} free directions", sol.free.len())));
    }
    Ok((0..ncols).map(|c| sol.value(c).constant.clone()).collect())
}

/// `U` with `theta(U) = 1` and `h_ab U^b = 0`.
fn solve_observer(clock: &OneForm, cometric: &TensorField) -> Result<Vec<SymExpr>, GeometryError> {
    let n = clock.dim();
    let mut rows = Vec::new();
    let mut r = Row::new(0);
    for a in 0..n {
        r.add_coeff(a, &clock.comps[a]);
    }
    r.rhs = SymExpr::one();
    rows.push(r);
    for a in 0..n {
        let mut r = Row::new(1 + a);
        for b in 0..n {
            r.add_coeff(b, cometric.get(&[a, b]));
        }
        rows.push(r);
    }
    solve_unique(n, rows, "the observer system")
}

fn sym_index(n: usize) -> HashMap<(usize, usize), usize> {
    let mut out = HashMap::new();
    let mut k = 0;
    for a in 0..n {
        for b in a..n {
            out.insert((a, b), k);
            out.insert((b, a), k);
            k += 1;
        }
    }
    out
}

/// Symmetric `X` with `X theta = 0` (contracting `X^ab theta_b`) and
/// `X^ab h_bc = delta^a_c - U^a theta_c`; used for both directions.
fn solve_projective_inverse(clock: &OneForm, other: &TensorField, observer: &[SymExpr], upper: bool) -> Result<TensorField, GeometryError> {
    let n = clock.dim();
    let idx = sym_index(n);
    let ncols = n * (n + 1) / 2;
    let mut rows = Vec::new();
    // Kernel condition: contravariant metrics kill theta, covariant ones kill U.
    let kernel: Vec<SymExpr> = if upper { clock.comps.clone() } else { observer.to_vec() };
    for a in 0..n {
        let mut r = Row::new(rows.len());
        for b in 0..n {
            r.add_coeff(idx[&(a, b)], &kernel[b]);
        }
        rows.push(r);
    }
    for a in 0..n {
        for c in 0..n {
            let mut r = Row::new(rows.len());
            for b in 0..n {
                r.add_coeff(idx[&(a, b)], other.get(&[b, c]));
            }
            let delta = if a == c { SymExpr::one() } else { SymExpr::zero() };
            // Upper: X^ab h_bc = delta^a_c - U^a theta_c.
            // Lower: X_ab h^bc = delta_a^c - theta_a U^c.
            let proj = if upper { observer[a].mul(&clock.comps[c]) } else { clock.comps[a].mul(&observer[c]) };
            r.rhs = delta.sub(&proj);
            rows.push(r);
        }
    }
    let vals = solve_unique(ncols, rows, if upper { "the contravariant metric" } else { "the covariant metric" })?;
    let mut t = TensorField::zero(&clock.coords, 2, Symmetry::Symmetric);
    for a in 0..n {
        for b in a..n {
            t.set(&[a, b], vals[idx[&(a, b)]].clone());
        }
    }
    Ok(t)
}

impl GalileanStructure {
    /// Builds the structure from a clock, a contravariant metric and an
    /// observer, solving for the cometric.
    pub fn from_clock_metric_observer(clock: OneForm, metric: TensorField, observer: Vec<SymExpr>) -> Result<Self, GeometryError> {
        let cometric = solve_projective_inverse(&clock, &metric, &observer, false)?;
        Ok(GalileanStructure { coords: clock.coords.clone(), clock, cometric, observer, metric, side_conditions: Vec::new() })
    }

    /// Residuals of `h(theta,.) = 0`, `theta(U) = 1`, `h_ab U^b = 0` and
    /// `h^ab h_bc = delta - U theta`, flattened; all zero when consistent.
    pub fn identity_residuals(&self) -> Vec<SymExpr> {
        let n = self.coords.len();
        let mut out = Vec::new();
        for a in 0..n {
            let mut s = SymExpr::zero();
            for b in 0..n {
                s = s.add(&self.metric.get(&[a, b]).mul(&self.clock.comps[b]));
            }
            out.push(s);
        }
        out.push(self.clock.contract(&self.observer).sub(&SymExpr::one()));
        for a in 0..n {
            let mut s = SymExpr::zero();
            for b in 0..n {
                s = s.add(&self.cometric.get(&[a, b]).mul(&self.observer[b]));
            }
            out.push(s);
        }
        for a in 0..n {
            for c in 0..n {
                let mut s = SymExpr::zero();
                for b in 0..n {
                    s = s.add(&self.metric.get(&[a, b]).mul(self.cometric.get(&[b, c])));
                }
                let delta = if a == c { SymExpr::one() } else { SymExpr::zero() };
                out.push(s.sub(&delta).add(&self.observer[a].mul(&self.clock.comps[c])));
            }
        }
        out
    }

    pub fn is_consistent(&self) -> bool {
        self.identity_residuals().iter().all(SymExpr::is_zero)
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<Self, SymError> {
        Ok(GalileanStructure {
            coords: self.coords.clone(),
            clock: self.clock.substitute(map)?,
            cometric: self.cometric.try_map(|e| e.substitute(map))?,
            observer: self.observer.iter().map(|e| e.substitute(map)).collect::<Result<_, _>>()?,
            metric: self.metric.try_map(|e| e.substitute(map))?,
            side_conditions: self.side_conditions.iter().map(|e| e.substitute(map)).collect::<Result<_, _>>()?,
        })
    }
}

pub fn galilean_structure(frame: &FrameSection) -> Result<GalileanStructure, GeometryError> {
    let clock = frame.clock().ok_or(GeometryError::NoClockRow)?.clone();
    let cometric = contract_components(&frame.coords, &frame.spatial())?;
    let observer = solve_observer(&clock, &cometric)?;
    let metric = solve_projective_inverse(&clock, &cometric, &observer, true)?;
    let g = GalileanStructure {
        coords: frame.coords.clone(),
        clock,
        cometric,
        observer,
        metric,
        side_conditions: frame.side_conditions.clone(),
    };
    debug_assert!(g.is_consistent());
    Ok(g)
}

pub fn torsion_two_form(g: &GalileanStructure) -> TwoForm {
    g.clock.exterior_derivative()
}

/// `factor * sum_A d(phi_{0,A}) ^ dx^{A1'}`, where `x^{A1'}` is the `lam^0`
/// coefficient of the row the table index `A` refers to.
pub fn torsion_from_tables(space: &TwistorSpace, tables: &CoefficientTables) -> TwoForm {
    let mut out = TwoForm::zero(&space.coords);
    let Some(mu) = tables.row else { return out };
    let factor = space.rows[mu].factor.clone();
    for (a, v) in tables.vars.iter().enumerate() {
        let Some(row) = space.rows.iter().find(|r| r.fibre == *v) else { continue };
        let x = row.base_section.coeff(0);
        let dphi = gradient(&space.coords, &tables.phi_a(0, a));
        let dx = gradient(&space.coords, &x);
        out = out.add(&dphi.wedge(&dx).scale(&factor));
    }
    out
}

pub fn gradient(coords: &[Var], f: &SymExpr) -> OneForm {
    OneForm { coords: coords.to_vec(), comps: coords.iter().map(|c| f.partial(*c)).collect() }
}

/// Frame of `H Phi` for a constant invertible `Phi`, i.e. `Phi^-1 v`,
/// computed from the frame components directly.
pub fn transform_frame(frame: &FrameSection, phi_inv: &[Vec<Q>]) -> Vec<FrameComponent> {
    let k = frame.components.len();
    (0..k)
        .map(|i| {
            let deg = frame.components[i].degree;
            let mut coeffs = vec![OneForm::zero(&frame.coords); deg.max(0) as usize + 1];
            for (j, cj) in frame.components.iter().enumerate() {
                let s = SymExpr::rational(phi_inv[i][j].clone());
                for (p, w) in cj.coeffs.iter().enumerate() {
                    if p < coeffs.len() {
                        coeffs[p] = coeffs[p].add(&w.scale(&s));
                    }
                }
            }
            FrameComponent { degree: deg, coeffs }
        })
        .collect()
}

/// Rational determinant of a small matrix.
pub fn det_q(m: &[Vec<Q>]) -> Q {
    let n = m.len();
    if n == 0 {
        return q(1);
    }
    let mut total = q(0);
    for j in 0..n {
        let minor: Vec<Vec<Q>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect()).collect();
        let term = m[0][j].clone() * det_q(&minor);
        total = if j % 2 == 0 { total + term } else { total - term };
    }
    total
}
