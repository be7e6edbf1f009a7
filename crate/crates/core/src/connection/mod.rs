//! Affine connections induced on the moduli space by splitting the second
//! jets of the patching, and the specializations that make them compatible
//! with a Galilean structure.
//!
//! All three canonical families share one read-off step: a cochain is found
//! by [`split_matrix`], then for each pair of lower indices `(a, b)` the
//! relation `Gamma^c_ab d_c w^mu| = rhs^mu_ab` is solved coefficientwise in
//! `lam`. The relation is over-determined; consistency is asserted.

mod compat;
mod gravity;
mod vectors;

pub use compat::{
    conformal_metric, covariant_clock, covariant_metric, flat_clock_fix, frobenius_fix, impose_compatibility, newton_cartan_preset,
    torsion_clock_fix, Assignments, CompatibilityReport, Specialization,
};
pub use gravity::{fix_gravity_from_cocycle, GravityFix};
pub use vectors::{bracket_closes, global_vector_fields, in_span, span_rank, GlobalVectors, ProjectedField, ZVectorField};

use std::collections::{BTreeMap, HashMap};

use crate::bundle::{self, BundleType};
use crate::geometry::FrameSection;
use crate::moduli::{Jets, ModuliError, TwistorLines, TwistorSpace};
use crate::splitting::{detect_splitting_type, split_matrix, FreeHint, SplitError, SplitOptions};
use crate::symbolic::linear::{self, Row};
use crate::symbolic::{LMatrix, LaurentPoly, SMatrix, SymError, SymExpr, Symmetry, TensorField, Var, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConnectionError {
    #[error("read-off of Gamma^c_{{{a}{b}}} is inconsistent or not unique")]
    ReadoffInconsistent { a: usize, b: usize },
    #[error("the {kind} splitting problem is obstructed in {dimension} coefficient(s)")]
    Obstructed { kind: &'static str, dimension: usize },
    #[error("assignment for `{param}` depends on {offending:?}, outside its mask")]
    MaskViolation { param: String, offending: Vec<String> },
    #[error("frame is not square and invertible: {0}")]
    SingularFrame(String),
    #[error("cocycle has weight {found}, expected {expected}")]
    WeightMismatch { expected: i32, found: i32 },
    #[error("no parameter named `{0}`")]
    MissingParameter(String),
    #[error("unsupported space: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConnectionKind {
    Xi,
    Lambda,
    TorsionXi,
    FrameParallel,
    /// Built directly from components.
    Given,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Xi => "xi",
            ConnectionKind::Lambda => "lambda",
            ConnectionKind::TorsionXi => "torsion-xi",
            ConnectionKind::FrameParallel => "frame-parallel",
            ConnectionKind::Given => "given",
        }
    }
}

/// The cochain a family was read off from.
#[derive(Clone, Debug)]
pub enum Cochain {
    /// `chi^mu_{nu a}`, one matrix per coordinate `a`.
    Xi(Vec<LMatrix>),
    /// `rho^mu_{nu b}`, one matrix per coordinate `b`.
    TorsionXi(Vec<LMatrix>),
    /// `sigma^mu_{(nu rho)}` with columns over symmetric pairs.
    Lambda(LMatrix),
}

#[derive(Clone, Debug)]
pub struct Readoff {
    /// `w^mu|` in the `U` chart.
    pub sections: Vec<LaurentPoly>,
    pub cochain: Cochain,
}

impl Readoff {
    fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<Readoff, SymError> {
        let sections = self.sections.iter().map(|s| s.substitute(map)).collect::<Result<_, _>>()?;
        let cochain = match &self.cochain {
            Cochain::Xi(m) => Cochain::Xi(m.iter().map(|x| x.substitute(map)).collect::<Result<_, _>>()?),
            Cochain::TorsionXi(m) => Cochain::TorsionXi(m.iter().map(|x| x.substitute(map)).collect::<Result<_, _>>()?),
            Cochain::Lambda(m) => Cochain::Lambda(m.substitute(map)?),
        };
        Ok(Readoff { sections, cochain })
    }

    /// Right-hand side of the read-off relation for lower indices `(a, b)`.
    fn rhs(&self, coords: &[Var], dw: &[Vec<LaurentPoly>], a: usize, b: usize, mu: usize) -> LaurentPoly {
        let k = self.sections.len();
        let mut out = self.sections[mu].partial(coords[a]).partial(coords[b]);
        match &self.cochain {
            // Unnormalized symmetrization: chi_a d_b w + chi_b d_a w.
            Cochain::Xi(chi) => {
                for rho in 0..k {
                    out = out.add(&chi[a].get(mu, rho).mul(&dw[b][rho])).add(&chi[b].get(mu, rho).mul(&dw[a][rho]));
                }
            }
            Cochain::TorsionXi(r) => {
                for nu in 0..k {
                    out = out.add(&r[b].get(mu, nu).mul(&dw[a][nu]));
                }
            }
            Cochain::Lambda(sigma) => {
                let pairs = pair_index(k);
                for nu in 0..k {
                    for rho in 0..k {
                        let s = sigma.get(mu, pairs[&(nu, rho)]);
                        if !s.is_zero() {
                            out = out.add(&s.mul(&dw[a][nu]).mul(&dw[b][rho]));
                        }
                    }
                }
            }
        }
        out
    }
}

fn pair_index(k: usize) -> HashMap<(usize, usize), usize> {
    let mut out = HashMap::new();
    for (p, (i, j)) in bundle::symmetric_pairs(k).into_iter().enumerate() {
        out.insert((i, j), p);
        out.insert((j, i), p);
    }
    out
}

/// A family of affine connections, `gamma(a, b, c) = Gamma^a_bc`.
#[derive(Clone, Debug)]
pub struct ConnectionFamily {
    pub kind: ConnectionKind,
    pub coords: Vec<Var>,
    gamma: Vec<SymExpr>,
    pub free_params: Vec<Var>,
    pub torsion_free: bool,
    /// Expressions that must not vanish.
    pub side_conditions: Vec<SymExpr>,
    pub readoff: Option<Readoff>,
}

impl ConnectionFamily {
    pub fn zero(kind: ConnectionKind, coords: &[Var]) -> Self {
        let n = coords.len();
        ConnectionFamily {
            kind,
            coords: coords.to_vec(),
            gamma: vec![SymExpr::zero(); n * n * n],
            free_params: Vec::new(),
            torsion_free: true,
            side_conditions: Vec::new(),
            readoff: None,
        }
    }

    /// Builds a family from `f(a, b, c) = Gamma^a_bc`; the torsion flag is computed.
    pub fn from_fn(coords: &[Var], f: impl Fn(usize, usize, usize) -> SymExpr) -> Self {
        let mut out = Self::zero(ConnectionKind::Given, coords);
        let n = coords.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    out.set(a, b, c, f(a, b, c));
                }
            }
        }
        out.torsion_free = out.is_symmetric();
        out
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    fn flat(&self, a: usize, b: usize, c: usize) -> usize {
        let n = self.dim();
        (a * n + b) * n + c
    }

    pub fn gamma(&self, a: usize, b: usize, c: usize) -> &SymExpr {
        &self.gamma[self.flat(a, b, c)]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, v: SymExpr) {
        let i = self.flat(a, b, c);
        self.gamma[i] = v;
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c.name() == name)
    }

    /// `Gamma^a_bc` by coordinate names.
    pub fn get(&self, a: &str, b: &str, c: &str) -> Option<&SymExpr> {
        Some(self.gamma(self.index_of(a)?, self.index_of(b)?, self.index_of(c)?))
    }

    pub fn param(&self, name: &str) -> Option<Var> {
        self.free_params.iter().copied().find(|v| v.name() == name)
    }

    /// Nonzero components `(a, b, c, Gamma^a_bc)` in index order.
    pub fn nonzero(&self) -> Vec<(usize, usize, usize, SymExpr)> {
        let n = self.dim();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let g = self.gamma(a, b, c);
                    if !g.is_zero() {
                        out.push((a, b, c, g.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.torsion().is_zero()
    }

    /// `T^a_bc = Gamma^a_bc - Gamma^a_cb`.
    pub fn torsion(&self) -> TensorField {
        let n = self.dim();
        let mut t = TensorField::zero(&self.coords, 3, Symmetry::General);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    t.set(&[a, b, c], self.gamma(a, b, c).sub(self.gamma(a, c, b)));
                }
            }
        }
        t
    }

    /// `Gamma^a_(bc)`.
    pub fn symmetrized(&self) -> ConnectionFamily {
        let mut out = self.clone();
        let half = SymExpr::frac(1, 2);
        let n = self.dim();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    out.set(a, b, c, self.gamma(a, b, c).add(self.gamma(a, c, b)).mul(&half));
                }
            }
        }
        out.torsion_free = true;
        out.readoff = None;
        out
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<ConnectionFamily, SymError> {
        let gamma = self.gamma.iter().map(|g| g.substitute(map)).collect::<Result<_, _>>()?;
        let side_conditions = self.side_conditions.iter().map(|g| g.substitute(map)).collect::<Result<_, _>>()?;
        let readoff = self.readoff.as_ref().map(|r| r.substitute(map)).transpose()?;
        let free_params = self.free_params.iter().copied().filter(|v| !map.contains_key(v)).collect();
        Ok(ConnectionFamily { kind: self.kind, coords: self.coords.clone(), gamma, free_params, torsion_free: self.torsion_free, side_conditions, readoff })
    }

    /// `Gamma^c_ab d_c w^mu| - rhs^mu_ab` for every `(a, b, mu)`; empty when
    /// the family was not read off from a cochain.
    pub fn readoff_residuals(&self) -> Vec<LaurentPoly> {
        let Some(r) = &self.readoff else { return Vec::new() };
        let n = self.dim();
        let dw = differentials(&self.coords, &r.sections);
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for mu in 0..r.sections.len() {
                    let mut lhs = LaurentPoly::zero();
                    for c in 0..n {
                        lhs = lhs.add(&dw[c][mu].scale(self.gamma(c, a, b)));
                    }
                    out.push(lhs.sub(&r.rhs(&self.coords, &dw, a, b, mu)));
                }
            }
        }
        out
    }
}

/// `dw[c][mu] = d_c w^mu|`.
fn differentials(coords: &[Var], sections: &[LaurentPoly]) -> Vec<Vec<LaurentPoly>> {
    coords.iter().map(|c| sections.iter().map(|s| s.partial(*c)).collect()).collect()
}

/// Solves the read-off relation for every lower index pair.
fn read_off(kind: ConnectionKind, coords: &[Var], readoff: Readoff, symmetric: bool) -> Result<ConnectionFamily, ConnectionError> {
    let n = coords.len();
    let dw = differentials(coords, &readoff.sections);
    let mut fam = ConnectionFamily::zero(kind, coords);
    let order: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in 0..n {
            if symmetric && b < a {
                for c in 0..n {
                    let g = fam.gamma(c, b, a).clone();
                    fam.set(c, a, b, g);
                }
                continue;
            }
            let mut rows = Vec::new();
            for mu in 0..readoff.sections.len() {
                let rhs = readoff.rhs(coords, &dw, a, b, mu);
                let mut powers: Vec<i32> = rhs.terms().map(|(p, _)| p).collect();
                for c in 0..n {
                    powers.extend(dw[c][mu].terms().map(|(p, _)| p));
                }
                powers.sort();
                powers.dedup();
                for p in powers {
                    let mut r = Row::new(rows.len());
                    for c in 0..n {
                        r.add_coeff(c, &dw[c][mu].coeff(p));
                    }
                    r.rhs = rhs.coeff(p);
                    rows.push(r);
                }
            }
            let sol = linear::solve(n, rows, &order);
            if !sol.is_consistent() || !sol.free.is_empty() {
                return Err(ConnectionError::ReadoffInconsistent { a, b });
            }
            for c in 0..n {
                fam.set(c, a, b, sol.value(c).constant.clone());
            }
        }
    }
    fam.readoff = Some(readoff);
    Ok(fam)
}

/// Per-coordinate hints: `name` becomes `name_coord`.
fn coordinate_hints(hints: &[FreeHint], coord: Var) -> Vec<FreeHint> {
    hints.iter().map(|h| FreeHint { name: format!("{}_{}", h.name, coord.name()), ..h.clone() }).collect()
}

fn per_coordinate_cochain(
    space: &TwistorSpace,
    jets: &Jets,
    hints: &[FreeHint],
    prefix: &str,
    kind: &'static str,
) -> Result<(Vec<LMatrix>, Vec<Var>), ConnectionError> {
    let mut cochain = Vec::with_capacity(space.coords.len());
    let mut params = Vec::new();
    for (a, coord) in space.coords.iter().enumerate() {
        let opts = SplitOptions::with_mask(&space.coords, &format!("{prefix}_{}", coord.name())).hints(coordinate_hints(hints, *coord));
        let sol = split_matrix(&jets.df[a], &jets.f1, &jets.f1, &opts)?;
        if let Some(obs) = &sol.obstruction {
            return Err(ConnectionError::Obstructed { kind, dimension: obs.dimension() });
        }
        params.extend(sol.free_params.iter().map(|p| p.var));
        cochain.push(sol.cochain_u);
    }
    Ok((cochain, params))
}

/// The torsion-free Xi-connection family.
pub fn xi_connection(space: &TwistorSpace, lines: &TwistorLines, jets: &Jets) -> Result<ConnectionFamily, ConnectionError> {
    let (chi, params) = per_coordinate_cochain(space, jets, &space.conventions.xi, "xi", "xi")?;
    let readoff = Readoff { sections: lines.sections_u.clone(), cochain: Cochain::Xi(chi) };
    let mut fam = read_off(ConnectionKind::Xi, &space.coords, readoff, true)?;
    fam.free_params = params;
    Ok(fam)
}

/// The torsion Xi-connection family; torsion is generally present.
pub fn torsion_xi_connection(space: &TwistorSpace, lines: &TwistorLines, jets: &Jets) -> Result<ConnectionFamily, ConnectionError> {
    let (rho, params) = per_coordinate_cochain(space, jets, &space.conventions.torsion_xi, "rho", "torsion-xi")?;
    let readoff = Readoff { sections: lines.sections_u.clone(), cochain: Cochain::TorsionXi(rho) };
    let mut fam = read_off(ConnectionKind::TorsionXi, &space.coords, readoff, false)?;
    fam.free_params = params;
    fam.torsion_free = fam.is_symmetric();
    Ok(fam)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObstructionTag {
    /// The generic normal bundle has the undeformed type: the deformation
    /// breaks torsion-freeness.
    Torsion,
    /// The normal bundle of the sampled line differs from the base type.
    Jump,
    None,
}

impl ObstructionTag {
    pub fn name(self) -> &'static str {
        match self {
            ObstructionTag::Torsion => "torsion",
            ObstructionTag::Jump => "jump",
            ObstructionTag::None => "none",
        }
    }
}

/// One entry of the cocycle that does not split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructedEntry {
    pub row: usize,
    /// Column over symmetric pairs.
    pub col: usize,
    pub residual: LaurentPoly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructionReport {
    pub dimension: usize,
    pub representative: Vec<ObstructedEntry>,
    pub tag: ObstructionTag,
    /// Type of the normal bundle at the sample point used for the tag.
    pub generic_type: Option<BundleType>,
}

#[derive(Clone, Debug)]
pub enum LambdaOutcome {
    Connection(ConnectionFamily),
    Obstructed(ObstructionReport),
}

impl LambdaOutcome {
    pub fn connection(self) -> Option<ConnectionFamily> {
        match self {
            LambdaOutcome::Connection(c) => Some(c),
            LambdaOutcome::Obstructed(_) => None,
        }
    }

    pub fn obstruction(&self) -> Option<&ObstructionReport> {
        match self {
            LambdaOutcome::Obstructed(r) => Some(r),
            LambdaOutcome::Connection(_) => None,
        }
    }
}

/// `L[(a b)][(n r)] = F^a_n F^b_r + F^b_n F^a_r` (single term when `a = b`),
/// the action of `F (x) F` on symmetric pairs.
pub fn sym2_action(f1: &LMatrix) -> LMatrix {
    let k = f1.rows;
    let pairs = bundle::symmetric_pairs(k);
    let mut out = LMatrix::zero(pairs.len(), pairs.len());
    for (i, (a, b)) in pairs.iter().enumerate() {
        for (j, (n, r)) in pairs.iter().enumerate() {
            let mut e = f1.get(*a, *n).mul(f1.get(*b, *r));
            if a != b {
                e = e.add(&f1.get(*b, *n).mul(f1.get(*a, *r)));
            }
            out.set(i, j, e);
        }
    }
    out
}

/// Deterministic sample point off the usual jumping loci.
pub fn sample_point(coords: &[Var]) -> Vec<(Var, Q)> {
    const PRIMES: [i64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    coords.iter().enumerate().map(|(i, c)| (*c, Q::from_integer(PRIMES[i % PRIMES.len()].into()))).collect()
}

/// The Lambda-connection, or a report of why its splitting problem fails.
pub fn lambda_connection(space: &TwistorSpace, lines: &TwistorLines, jets: &Jets) -> Result<LambdaOutcome, ConnectionError> {
    let g = jets.f2_pairs();
    let left = sym2_action(&jets.f1);
    let opts = SplitOptions::with_mask(&space.coords, "sigma").hints(space.conventions.lambda.clone());
    let sol = split_matrix(&g, &left, &jets.f1, &opts)?;
    if let Some(obs) = sol.obstruction {
        let mut grouped: BTreeMap<(usize, usize), LaurentPoly> = BTreeMap::new();
        for t in &obs.terms {
            grouped.entry((t.row, t.col)).or_default().add_term(t.power, &t.residual);
        }
        let generic = detect_splitting_type(&jets.f1, &sample_point(&space.coords)).ok();
        let tag = match &generic {
            Some(t) if *t == space.base_type() => ObstructionTag::Torsion,
            Some(_) => ObstructionTag::Jump,
            None => ObstructionTag::None,
        };
        return Ok(LambdaOutcome::Obstructed(ObstructionReport {
            dimension: obs.dimension(),
            representative: grouped.into_iter().map(|((row, col), residual)| ObstructedEntry { row, col, residual }).collect(),
            tag,
            generic_type: generic,
        }));
    }
    let readoff = Readoff { sections: lines.sections_u.clone(), cochain: Cochain::Lambda(sol.cochain_u) };
    let mut fam = read_off(ConnectionKind::Lambda, &space.coords, readoff, true)?;
    fam.free_params = sol.free_params.iter().map(|p| p.var).collect();
    Ok(LambdaOutcome::Connection(fam))
}

/// The connection making every frame one-form parallel:
/// `Gamma^c_ab = (E^-1)^c_I d_b E^I_a`, where `E^I` runs over all
/// `lam`-coefficients of the frame.
pub fn frame_parallel_connection(frame: &FrameSection) -> Result<ConnectionFamily, ConnectionError> {
    let forms: Vec<_> = frame.components.iter().flat_map(|c| c.coeffs.iter()).collect();
    let n = frame.coords.len();
    if forms.len() != n {
        return Err(ConnectionError::SingularFrame(format!("{} frame one-forms on a {n}-dimensional space", forms.len())));
    }
    let mut e = SMatrix::zero(n, n);
    for (i, w) in forms.iter().enumerate() {
        for a in 0..n {
            e.set(i, a, w.comps[a].clone());
        }
    }
    let inv = e.inverse().ok_or_else(|| ConnectionError::SingularFrame("determinant vanishes".into()))?;
    let mut fam = ConnectionFamily::zero(ConnectionKind::FrameParallel, &frame.coords);
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut s = SymExpr::zero();
                for i in 0..n {
                    let d = e.get(i, a).partial(frame.coords[b]);
                    if !d.is_zero() {
                        s = s.add(&inv.get(c, i).mul(&d));
                    }
                }
                fam.set(c, a, b, s);
            }
        }
    }
    fam.free_params = frame.free_params.iter().map(|p| p.var).collect();
    fam.side_conditions = frame.side_conditions.clone();
    fam.torsion_free = fam.is_symmetric();
    Ok(fam)
}

/// `nabla_b e^I_a` for every frame one-form, flattened; zero when parallel.
pub fn frame_residuals(frame: &FrameSection, conn: &ConnectionFamily) -> Vec<SymExpr> {
    let n = frame.coords.len();
    let mut out = Vec::new();
    for comp in &frame.components {
        for w in &comp.coeffs {
            for a in 0..n {
                for b in 0..n {
                    let mut r = w.comps[a].partial(frame.coords[b]);
                    for c in 0..n {
                        r = r.sub(&conn.gamma(c, a, b).mul(&w.comps[c]));
                    }
                    out.push(r);
                }
            }
        }
    }
    out
}

/// The spatial rotation block of a connection on the five-dimensional
/// `O + O(1) + O(1)` moduli space with coordinates `t, u, v, x, y`:
/// `W = (chi00 - chi11)(du^dy + dx^dv) + 2 chi10 dx^dy + 2 chi01 dv^du` with
/// `chi00 = Gamma^u_ut`, `chi11 = Gamma^x_xt`, `chi10 = Gamma^u_xt`, `chi01 = Gamma^x_ut`.
pub fn coriolis_form(conn: &ConnectionFamily) -> Result<crate::symbolic::TwoForm, ConnectionError> {
    let idx = |n: &str| conn.index_of(n).ok_or_else(|| ConnectionError::Unsupported(format!("no coordinate `{n}`")));
    let [t, u, v, x, y] = [idx("t")?, idx("u")?, idx("v")?, idx("x")?, idx("y")?];
    let chi00 = conn.gamma(u, u, t);
    let chi11 = conn.gamma(x, x, t);
    let chi10 = conn.gamma(u, x, t);
    let chi01 = conn.gamma(x, u, t);
    let two = SymExpr::int(2);
    let diag = chi00.sub(chi11);
    let mut w = crate::symbolic::TwoForm::zero(&conn.coords);
    w.set(u, y, diag.clone());
    w.set(x, v, diag);
    w.set(x, y, two.mul(chi10));
    w.set(v, u, two.mul(chi01));
    Ok(w)
}

#[cfg(test)]
mod tests;
