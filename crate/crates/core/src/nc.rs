//! Curvature, Newton-Cartan axioms, the Trautman condition and the field
//! equations for a connection on the moduli space, plus the discriminant
//! identities of null displacements for the `O(4)` family.

use std::collections::HashMap;

use crate::connection::{covariant_clock, covariant_metric, ConnectionFamily};
use crate::geometry::GalileanStructure;
use crate::symbolic::linear::{self, Row};
use crate::symbolic::{registry, sym, OneForm, Poly, SMatrix, SymExpr, Symmetry, TensorField, TwoForm, Var, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NcError {
    #[error("the Trautman condition needs a torsion-free connection")]
    RequiresTorsionFree,
    #[error("dimension mismatch: connection on {connection} coordinates, structure on {structure}")]
    DimensionMismatch { connection: usize, structure: usize },
    #[error("the metric on the chosen slice must have determinant +-1, got {0}")]
    NonUnimodular(String),
}

#[derive(Clone, Debug)]
pub struct CurvaturePack {
    /// `[a][b][c][d]` is `R^a_bcd`.
    pub riemann: TensorField,
    /// `R_bd = R^a_bad`.
    pub ricci: TensorField,
    /// `T^a_bc = Gamma^a_bc - Gamma^a_cb`.
    pub torsion: TensorField,
}

impl CurvaturePack {
    /// `R^a_[bcd]` at `[a][b][c][d]`, times 3.
    pub fn bianchi_residual(&self) -> TensorField {
        let r = &self.riemann;
        let n = r.dim();
        let mut out = TensorField::zero(&r.coords, 4, Symmetry::General);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = r.get(&[a, b, c, d]).add(r.get(&[a, c, d, b])).add(r.get(&[a, d, b, c]));
                        out.set(&[a, b, c, d], v);
                    }
                }
            }
        }
        out
    }
}

/// `R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_ce Gamma^e_db - Gamma^a_de Gamma^e_cb`.
pub fn curvature(conn: &ConnectionFamily) -> CurvaturePack {
    let n = conn.dim();
    let x = &conn.coords;
    let mut riemann = TensorField::zero(x, 4, Symmetry::General);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in (c + 1)..n {
                    let mut v = conn.gamma(a, d, b).partial(x[c]).sub(&conn.gamma(a, c, b).partial(x[d]));
                    for e in 0..n {
                        let (ace, aeb) = (conn.gamma(a, c, e), conn.gamma(e, d, b));
                        if !ace.is_zero() && !aeb.is_zero() {
                            v = v.add(&ace.mul(aeb));
                        }
                        let (ade, ecb) = (conn.gamma(a, d, e), conn.gamma(e, c, b));
                        if !ade.is_zero() && !ecb.is_zero() {
                            v = v.sub(&ade.mul(ecb));
                        }
                    }
                    riemann.set(&[a, b, d, c], v.neg());
                    riemann.set(&[a, b, c, d], v);
                }
            }
        }
    }
    let mut ricci = TensorField::zero(x, 2, Symmetry::General);
    for b in 0..n {
        for d in 0..n {
            let mut v = SymExpr::zero();
            for a in 0..n {
                v = v.add(riemann.get(&[a, b, a, d]));
            }
            ricci.set(&[b, d], v);
        }
    }
    CurvaturePack { riemann, ricci, torsion: conn.torsion() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcClass {
    NewtonCartan,
    TorsionalNewtonCartan,
    Incompatible,
}

impl NcClass {
    pub fn name(self) -> &'static str {
        match self {
            NcClass::NewtonCartan => "Newton-Cartan",
            NcClass::TorsionalNewtonCartan => "torsional Newton-Cartan",
            NcClass::Incompatible => "incompatible",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NcReport {
    /// `[a][b]` is `nabla_b theta_a`.
    pub nabla_theta: TensorField,
    /// `[c][a][b]` is `nabla_c h^ab`.
    pub nabla_h: TensorField,
    /// `h^ab theta_b` for each `a`.
    pub kernel: Vec<SymExpr>,
    /// Rank of `h^ab` over the field of rational functions.
    pub metric_rank: usize,
    pub torsion: TensorField,
    pub clock_derivative: TwoForm,
    pub class: NcClass,
}

impl NcReport {
    pub fn kernel_holds(&self) -> bool {
        self.kernel.iter().all(SymExpr::is_zero)
    }

    pub fn rank_holds(&self) -> bool {
        self.metric_rank + 1 == self.torsion.dim()
    }
}

fn rank(m: &TensorField) -> usize {
    let n = m.dim();
    let rows = (0..n)
        .map(|i| {
            let mut r = Row::new(i);
            for j in 0..n {
                r.add_coeff(j, m.get(&[i, j]));
            }
            r
        })
        .collect();
    let order: Vec<usize> = (0..n).collect();
    linear::solve(n, rows, &order).rank()
}

pub fn check_newton_cartan(g: &GalileanStructure, conn: &ConnectionFamily) -> Result<NcReport, NcError> {
    if g.coords.len() != conn.dim() {
        return Err(NcError::DimensionMismatch { connection: conn.dim(), structure: g.coords.len() });
    }
    let n = conn.dim();
    let nabla_theta = covariant_clock(conn, &g.clock);
    let nabla_h = covariant_metric(conn, &g.metric);
    let kernel = (0..n)
        .map(|a| (0..n).fold(SymExpr::zero(), |acc, b| acc.add(&g.metric.get(&[a, b]).mul(&g.clock.comps[b]))))
        .collect();
    let torsion = conn.torsion();
    let compatible = nabla_theta.is_zero() && nabla_h.is_zero();
    let class = match (compatible, torsion.is_zero()) {
        (true, true) => NcClass::NewtonCartan,
        (true, false) => NcClass::TorsionalNewtonCartan,
        (false, _) => NcClass::Incompatible,
    };
    Ok(NcReport {
        nabla_theta,
        nabla_h,
        kernel,
        metric_rank: rank(&g.metric),
        torsion,
        clock_derivative: g.clock.exterior_derivative(),
        class,
    })
}

/// `h^a[b R^c]_(de)a` at `[b][c][d][e]`.
pub fn check_trautman(conn: &ConnectionFamily, g: &GalileanStructure) -> Result<TensorField, NcError> {
    if !conn.is_symmetric() {
        return Err(NcError::RequiresTorsionFree);
    }
    let n = conn.dim();
    let r = curvature(conn).riemann;
    let quarter = SymExpr::frac(1, 4);
    let sym_r = |c: usize, d: usize, e: usize, a: usize| r.get(&[c, d, e, a]).add(r.get(&[c, e, d, a]));
    let mut out = TensorField::zero(&conn.coords, 4, Symmetry::General);
    for b in 0..n {
        for c in 0..n {
            for d in 0..n {
                for e in 0..n {
                    let mut v = SymExpr::zero();
                    for a in 0..n {
                        let (hab, hac) = (g.metric.get(&[a, b]), g.metric.get(&[a, c]));
                        if !hab.is_zero() {
                            v = v.add(&hab.mul(&sym_r(c, d, e, a)));
                        }
                        if !hac.is_zero() {
                            v = v.sub(&hac.mul(&sym_r(b, d, e, a)));
                        }
                    }
                    out.set(&[b, c, d, e], v.mul(&quarter));
                }
            }
        }
    }
    Ok(out)
}

/// The opaque constant standing for `4 pi G`.
pub fn four_pi_g() -> Var {
    registry::constant("4piG")
}

/// `R_ab - 4 pi G rho theta_a theta_b`.
pub fn field_residual(conn: &ConnectionFamily, g: &GalileanStructure, rho: &SymExpr, g_const: Var) -> TensorField {
    let ricci = curvature(conn).ricci;
    let k = sym(g_const).mul(rho);
    let n = conn.dim();
    let mut out = TensorField::zero(&conn.coords, 2, Symmetry::General);
    for a in 0..n {
        for b in 0..n {
            let source = k.mul(&g.clock.comps[a]).mul(&g.clock.comps[b]);
            out.set(&[a, b], ricci.get(&[a, b]).sub(&source));
        }
    }
    out
}

/// `Gamma^a_bc = 1/2 h^ad (d_b h_cd + d_c h_bd - d_d h_bc) + d_(b theta_c) U^a + theta_(b F_c)d h^ad`.
pub fn general_nc_connection(g: &GalileanStructure, f: &TwoForm) -> ConnectionFamily {
    let x = &g.coords;
    let half = SymExpr::frac(1, 2);
    let (h, hl, th) = (&g.metric, &g.cometric, &g.clock.comps);
    ConnectionFamily::from_fn(x, |a, b, c| {
        let mut v = SymExpr::zero();
        for d in 0..x.len() {
            let had = h.get(&[a, d]);
            if had.is_zero() {
                continue;
            }
            let levi = hl.get(&[c, d]).partial(x[b]).add(&hl.get(&[b, d]).partial(x[c])).sub(&hl.get(&[b, c]).partial(x[d]));
            let force = th[b].mul(f.get(c, d)).add(&th[c].mul(f.get(b, d)));
            v = v.add(&had.mul(&levi.add(&force)).mul(&half));
        }
        let dtheta = th[c].partial(x[b]).add(&th[b].partial(x[c])).mul(&half);
        v.add(&dtheta.mul(&g.observer[a]))
    })
}

/// The standard Galilean structure `theta = dt`, `h = delta^ij d_i d_j`,
/// `U = d_t` on `coords`, whose first entry is time.
pub fn standard_galilean(coords: &[Var]) -> GalileanStructure {
    let n = coords.len();
    let mut clock = OneForm::zero(coords);
    clock.comps[0] = SymExpr::one();
    let mut metric = TensorField::zero(coords, 2, Symmetry::Symmetric);
    for i in 1..n {
        metric.set(&[i, i], SymExpr::one());
    }
    let mut observer = vec![SymExpr::zero(); n];
    observer[0] = SymExpr::one();
    GalileanStructure::from_clock_metric_observer(clock, metric, observer).expect("standard structure is consistent")
}

/// `Gamma^i_tt = d_i V`, `Gamma^i_jt = Gamma^i_tj = eps^ijk d_k Omega` on
/// coordinates `(t, x1, x2, x3)`.
pub fn vacuum_nc_connection(coords: &[Var], v: &SymExpr, omega: &SymExpr) -> ConnectionFamily {
    assert_eq!(coords.len(), 4, "vacuum connection lives on 1+3 dimensions");
    let eps = |i: usize, j: usize, k: usize| -> i64 {
        let p = [i, j, k];
        if p[0] == p[1] || p[1] == p[2] || p[0] == p[2] {
            0
        } else {
            let inversions = (p[0] > p[1]) as i64 + (p[0] > p[2]) as i64 + (p[1] > p[2]) as i64;
            if inversions % 2 == 0 {
                1
            } else {
                -1
            }
        }
    };
    ConnectionFamily::from_fn(coords, |a, b, c| {
        if a == 0 {
            return SymExpr::zero();
        }
        let i = a - 1;
        match (b, c) {
            (0, 0) => v.partial(coords[a]),
            (0, s) | (s, 0) => {
                let j = s - 1;
                (0..3).fold(SymExpr::zero(), |acc, k| acc.add(&omega.partial(coords[k + 1]).scale(&Q::from_integer(eps(i, j, k).into()))))
            }
            _ => SymExpr::zero(),
        }
    })
}

/// Hodge dual of a two-form on the four coordinates `slice` (oriented in the
/// given order, `eps = +1`) for the constant metric `g` on that slice.
pub fn hodge_star_4(w: &TwoForm, slice: [usize; 4], g: &[[SymExpr; 4]; 4]) -> Result<TwoForm, NcError> {
    let mut m = SMatrix::zero(4, 4);
    for (i, row) in g.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            m.set(i, j, e.clone());
        }
    }
    let det = m.to_laurent().det().coeff(0);
    if det != SymExpr::one() && det != SymExpr::int(-1) {
        return Err(NcError::NonUnimodular(det.to_string()));
    }
    let inv = m.inverse().ok_or_else(|| NcError::NonUnimodular("0".into()))?;
    let mut up: [[SymExpr; 4]; 4] = Default::default();
    for c in 0..4 {
        for d in 0..4 {
            let mut v = SymExpr::zero();
            for e in 0..4 {
                for f in 0..4 {
                    let gg = inv.get(c, e).mul(inv.get(d, f));
                    if !gg.is_zero() {
                        v = v.add(&gg.mul(w.get(slice[e], slice[f])));
                    }
                }
            }
            up[c][d] = v;
        }
    }
    let mut out = TwoForm::zero(&w.coords);
    for a in 0..4 {
        for b in (a + 1)..4 {
            let mut v = SymExpr::zero();
            for c in 0..4 {
                for d in 0..4 {
                    let s = levi_civita4([a, b, c, d]);
                    if s != 0 {
                        v = v.add(&up[c][d].scale(&Q::new(s.into(), 2.into())));
                    }
                }
            }
            out.set(slice[a], slice[b], v);
        }
    }
    Ok(out)
}

fn levi_civita4(p: [usize; 4]) -> i64 {
    let mut sign = 1;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if p[i] == p[j] {
                return 0;
            }
            if p[i] > p[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Discriminant polynomials of the quartic
/// `dt + 4 du lam + 6 dx lam^2 + 4 dv lam^3 + dw lam^4` in the displacements.
#[derive(Clone, Debug)]
pub struct DiscriminantSet {
    /// `(dt, du, dx, dv, dw)`.
    pub vars: [Var; 5],
    pub delta2: SymExpr,
    pub delta4: SymExpr,
    pub delta6: SymExpr,
    pub g3: SymExpr,
}

/// `(G3)^2 - c Delta6` vanishes after eliminating `dt` through `Delta2 = 0`.
#[derive(Clone, Debug)]
pub struct ReductionCertificate {
    /// The value of `dt` on `Delta2 = 0`.
    pub eliminated: SymExpr,
    pub c: Q,
    pub remainder: SymExpr,
}

impl ReductionCertificate {
    pub fn holds(&self) -> bool {
        self.remainder.is_zero() && self.c != Q::from_integer(0.into())
    }
}

pub fn displacement_vars() -> [Var; 5] {
    ["δt", "δu", "δx", "δv", "δw"].map(registry::coordinate)
}

/// Builds the set from the invariants `I` and `J` of the binary quartic.
pub fn quartic_discriminants() -> DiscriminantSet {
    let vars = displacement_vars();
    let [t, u, x, v, w] = vars.map(sym);
    let (a, b, c, d, e) = (w, v, x, u, t);
    let i = a.mul(&e).sub(&b.mul(&d).scale(&Q::from_integer(4.into()))).add(&c.mul(&c).scale(&Q::from_integer(3.into())));
    let j = a
        .mul(&c)
        .mul(&e)
        .add(&b.mul(&c).mul(&d).scale(&Q::from_integer(2.into())))
        .sub(&a.mul(&d).mul(&d))
        .sub(&b.mul(&b).mul(&e))
        .sub(&c.mul(&c).mul(&c));
    let h = b.mul(&b).sub(&a.mul(&c));
    let delta2 = i.neg();
    let delta4 = h.mul(&h).scale(&Q::from_integer(12.into())).sub(&a.mul(&a).mul(&i));
    let delta6 = j.mul(&j).scale(&Q::from_integer(27.into())).sub(&i.mul(&i).mul(&i));
    DiscriminantSet { vars, delta2, delta4, delta6, g3: j }
}

impl DiscriminantSet {
    /// Eliminates `dt` with `Delta2 = 0` and finds the constant `c` with
    /// `G3^2 = c Delta6` there.
    pub fn reduction_certificate(&self) -> ReductionCertificate {
        let t = self.vars[0];
        // Delta2 = -dt dw + rest, linear in dt.
        let coeff = self.delta2.partial(t);
        let rest = self.delta2.substitute_var(t, &SymExpr::zero()).expect("polynomial");
        let eliminated = rest.checked_div(&coeff).expect("dw is not zero").neg();
        let map: HashMap<Var, SymExpr> = [(t, eliminated.clone())].into_iter().collect();
        let g3sq = self.g3.mul(&self.g3).substitute(&map).expect("polynomial");
        let d6 = self.delta6.substitute(&map).expect("polynomial");
        let ratio = g3sq.checked_div(&d6).expect("Delta6 does not vanish identically on Delta2 = 0");
        let c = ratio.as_rational().unwrap_or_else(|| Q::from_integer(0.into()));
        let remainder = g3sq.sub(&d6.scale(&c));
        ReductionCertificate { eliminated, c, remainder }
    }

    pub fn eval(&self, point: &[Q; 5]) -> [Q; 4] {
        let lookup = |v: Var| self.vars.iter().position(|w| *w == v).map(|i| point[i].clone());
        let ev = |e: &SymExpr| e.eval(&lookup).ok().and_then(|r| r.as_rational()).expect("displacement polynomials are closed");
        [ev(&self.delta2), ev(&self.delta4), ev(&self.delta6), ev(&self.g3)]
    }
}

/// The degeneracy conditions `[dx dw = dv^2 and dt dx = du^2]` and
/// `[dw dt = dx^2 or du dv = dx^2]` at a point `(dt, du, dx, dv, dw)`.
pub fn degenerate_conditions(p: &[Q; 5]) -> bool {
    let [t, u, x, v, w] = p;
    let first = x * w == v * v && t * x == u * u;
    let second = w * t == x * x || u * v == x * x;
    first && second
}

/// Displacement of the quartic `k (lam - r)^3 (lam - s)`, and of
/// `k (lam - r)^3` when `s` is `None` (a root at infinity).
pub fn triple_root_displacement(k: &Q, r: &Q, s: Option<&Q>) -> [Q; 5] {
    let mut poly: Vec<Q> = vec![k.clone()];
    let mut times = |root: &Q| {
        let mut next = vec![Q::from_integer(0.into()); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] -= c * root;
            next[i + 1] += c;
        }
        poly = next;
    };
    for _ in 0..3 {
        times(r);
    }
    if let Some(s) = s {
        times(s);
    }
    poly.resize(5, Q::from_integer(0.into()));
    let weights = [1, 4, 6, 4, 1];
    let c: Vec<Q> = poly.iter().zip(weights).map(|(c, w)| c / Q::from_integer(w.into())).collect();
    [c[0].clone(), c[1].clone(), c[2].clone(), c[3].clone(), c[4].clone()]
}

/// Displacement on the rational normal curve: `(lam - r)^4`.
pub fn rational_normal_point(r: &Q) -> [Q; 5] {
    triple_root_displacement(&Q::from_integer(1.into()), r, Some(r))
}

/// Polynomial of a displacement form, for display.
pub fn as_poly(e: &SymExpr) -> Poly {
    e.as_poly().cloned().expect("displacement forms are polynomial")
}

#[cfg(test)]
mod tests;
