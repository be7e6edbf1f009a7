//! Twistor spaces fibred over the projective line, their twistor lines and
//! the restricted jets of the patching.
//!
//! A space has one fibre coordinate per row. Row `mu` of degree `d` patches as
//! `w^mu_hat = lam^-d w^mu + Def_mu(w, lam)`, where the deformation may only
//! involve the other rows. Sections are found row by row in dependency order:
//! the flat part is a polynomial of degree `d` in fresh moduli coordinates and
//! the deformation contributes a particular scalar split.

use std::collections::{BTreeMap, HashMap};

use crate::bundle::{self, BundleType};
use crate::splitting::{split_scalar_particular, FreeHint, Share, Side};
use crate::symbolic::{laurent_substitute, q, qf, registry, LMatrix, LaurentPoly, SymError, SymExpr, Var, VarKind, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModuliError {
    #[error("malformed spec at {location}: {message}")]
    MalformedSpec { location: String, message: String },
    #[error("row `{row}` has no global section; unsplittable powers {powers:?}")]
    ObstructedSections { row: String, powers: Vec<i32> },
    #[error("patching identity fails on row `{0}`")]
    PatchingIdentity(String),
    #[error(transparent)]
    Sym(#[from] SymError),
}

fn malformed(location: &str, message: impl Into<String>) -> ModuliError {
    ModuliError::MalformedSpec { location: location.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Flat,
    Deformed3d,
    Deformed5d,
    Jumping4d,
    GibbonsHawking,
    EpsilonFamily,
    CFamily,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Flat,
        Preset::Deformed3d,
        Preset::Deformed5d,
        Preset::Jumping4d,
        Preset::GibbonsHawking,
        Preset::EpsilonFamily,
        Preset::CFamily,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Flat => "flat",
            Preset::Deformed3d => "deformed3d",
            Preset::Deformed5d => "deformed5d",
            Preset::Jumping4d => "jumping4d",
            Preset::GibbonsHawking => "gibbons_hawking",
            Preset::EpsilonFamily => "epsilon_family",
            Preset::CFamily => "c_family",
            Preset::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Preset> {
        Preset::ALL.iter().copied().find(|p| p.name() == s)
    }
}

/// Value bound to a family parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamValue {
    Rational(Q),
    Infinity,
    /// Kept as an opaque constant symbol.
    Free,
    /// A polynomial in fibre coordinates, used for `fpoly`.
    Poly(LaurentPoly),
}

/// `deform <row> += expr`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deformation {
    pub row: String,
    pub expr: LaurentPoly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwistorSpaceSpec {
    pub preset: Preset,
    /// Row degrees in row order; presets fill this in when empty.
    pub base_type: Vec<i32>,
    pub deformations: Vec<Deformation>,
    pub params: BTreeMap<String, ParamValue>,
}

/// Parameters with a structural meaning rather than a symbol to substitute.
const STRUCTURAL: [&str; 3] = ["fpoly", "n", "alpha"];

pub fn fibre_sym(name: &str) -> SymExpr {
    SymExpr::var(registry::fibre(name))
}

impl TwistorSpaceSpec {
    fn new(preset: Preset, base: Vec<i32>) -> Self {
        TwistorSpaceSpec { preset, base_type: base, deformations: Vec::new(), params: BTreeMap::new() }
    }

    pub fn flat(degrees: &[i32]) -> Self {
        Self::new(Preset::Flat, degrees.to_vec())
    }

    /// `T_hat = T + f(Omega, lam)` over `O + O(1)`.
    pub fn deformed3d(f: LaurentPoly) -> Self {
        Self::new(Preset::Deformed3d, vec![0, 1]).with_param("fpoly", ParamValue::Poly(f))
    }

    /// `T_hat = T + eps f(Omega0, Omega1, lam)` over `O + O(1) + O(1)`.
    pub fn deformed5d(f: LaurentPoly) -> Self {
        Self::new(Preset::Deformed5d, vec![0, 1, 1]).with_param("fpoly", ParamValue::Poly(f))
    }

    /// `zeta_hat = lam zeta + f(S)`, `S_hat = lam^-3 S`.
    pub fn jumping4d(f: LaurentPoly) -> Self {
        Self::new(Preset::Jumping4d, vec![-1, 3]).with_param("fpoly", ParamValue::Poly(f))
    }

    /// `T_hat = T + f(Q, lam)`, `Q_hat = lam^-2 Q`, with the overlap term
    /// shared as `alpha` on the `U` side.
    pub fn gibbons_hawking(f: LaurentPoly, alpha: Q) -> Self {
        Self::new(Preset::GibbonsHawking, vec![0, 2])
            .with_param("fpoly", ParamValue::Poly(f))
            .with_param("alpha", ParamValue::Rational(alpha))
    }

    /// `zeta_hat = lam zeta + eps Q`, `Q_hat = lam^-2 Q`.
    pub fn epsilon_family(eps: ParamValue) -> Self {
        Self::new(Preset::EpsilonFamily, vec![-1, 2]).with_param("eps", eps)
    }

    /// `T_hat = T + S / (c lam^(2n-1))`, `S_hat = lam^(2-4n) S`.
    pub fn c_family(n: u32, c: ParamValue) -> Self {
        Self::new(Preset::CFamily, vec![0, 4 * n as i32 - 2])
            .with_param("n", ParamValue::Rational(q(n as i64)))
            .with_param("c", c)
    }

    pub fn custom(base: &[i32], deformations: Vec<Deformation>) -> Self {
        TwistorSpaceSpec { deformations, ..Self::new(Preset::Custom, base.to_vec()) }
    }

    pub fn with_param(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

/// One fibre coordinate of the twistor space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub name: String,
    pub fibre: Var,
    pub degree: i32,
    /// `Def_mu`, already multiplied by `factor`.
    pub deformation: Option<LaurentPoly>,
    /// Family parameter multiplying the deformation (1 when there is none).
    pub factor: SymExpr,
    /// Flat section `sum coeff * x * lam^p` in the moduli coordinates.
    pub base_section: LaurentPoly,
}

/// Names given to the free coefficients of the splitting problems, so that
/// outputs read in the conventional symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Conventions {
    pub frame: Vec<FreeHint>,
    /// The frame hint that is rescaled so that `H^-1` has `1/name` in its
    /// clock entry; the hint itself carries the name with a trailing `~`.
    pub clock_scale: Option<String>,
    pub lambda: Vec<FreeHint>,
    pub xi: Vec<FreeHint>,
    pub torsion_xi: Vec<FreeHint>,
}

#[derive(Clone, Debug)]
pub struct TwistorSpace {
    pub preset: Preset,
    pub rows: Vec<Row>,
    pub coords: Vec<Var>,
    pub share: Share,
    pub conventions: Conventions,
    /// Order in which the coefficient tables expand the deformation:
    /// 0 for `f|`, 1 for `df/dw|` along the first variable of `f`.
    pub table_order: u32,
    pub params: BTreeMap<String, ParamValue>,
    order: Vec<usize>,
}

impl TwistorSpace {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.rows.iter().map(|r| r.degree).collect()
    }

    /// Splitting type of the undeformed normal bundle.
    pub fn base_type(&self) -> BundleType {
        BundleType::new(self.degrees()).expect("a space has at least one row")
    }

    pub fn fibre_vars(&self) -> Vec<Var> {
        self.rows.iter().map(|r| r.fibre).collect()
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.name == name)
    }

    pub fn coord(&self, name: &str) -> Option<Var> {
        self.coords.iter().copied().find(|c| c.name() == name)
    }

    pub fn is_deformed(&self) -> bool {
        self.rows.iter().any(|r| r.deformation.is_some())
    }

    /// `w^mu_hat` as a Laurent polynomial in `lam` with fibre symbols.
    pub fn patching(&self, mu: usize) -> LaurentPoly {
        let row = &self.rows[mu];
        let flat = LaurentPoly::monomial(-row.degree, SymExpr::var(row.fibre));
        match &row.deformation {
            Some(d) => flat.add(d),
            None => flat,
        }
    }

    /// Human-readable patching, one line per row.
    pub fn patching_display(&self) -> Vec<String> {
        (0..self.rank()).map(|mu| format!("{}^ = {}", self.rows[mu].name, self.patching(mu))).collect()
    }
}

struct Layout {
    name: String,
    /// `(coordinate name, power, coefficient)`.
    coords: Vec<(String, i32, Q)>,
}

fn suffix(name: &str, j: usize, count: usize) -> String {
    if count > 1 {
        format!("{name}{j}")
    } else {
        name.to_string()
    }
}

/// Default row and coordinate names. O(1) rows use the `lam^0` coefficient
/// as `x^{A1'}` and the `lam^1` coefficient as `x^{A0'}`.
fn default_layout(degrees: &[i32]) -> Vec<Layout> {
    let count = |d: i32| degrees.iter().filter(|e| **e == d).count();
    let has_zero = count(0) > 0;
    let mut seen: HashMap<i32, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, &d) in degrees.iter().enumerate() {
        let j = *seen.entry(d).and_modify(|n| *n += 1).or_insert(0);
        let c = count(d);
        let name = match d {
            0 => suffix("T", j, c),
            1 => suffix("Omega", j, c),
            2 => suffix("Q", j, c),
            -1 => suffix("zeta", j, c),
            d if d >= 3 => suffix("S", j, c),
            _ => format!("W{i}"),
        };
        let one = q(1);
        let coords: Vec<(String, i32, Q)> = match (d, c) {
            (d, _) if d < 0 => Vec::new(),
            (0, 1) => vec![("t".into(), 0, one)],
            (0, _) => vec![(format!("t{j}"), 0, one)],
            (1, 1) => vec![("y".into(), 0, one.clone()), ("z".into(), 1, one)],
            (1, 2) => {
                let (a, b) = if j == 0 { ("u", "v") } else { ("x", "y") };
                vec![(a.into(), 0, one.clone()), (b.into(), 1, one)]
            }
            (1, _) => vec![(format!("x{j}1"), 0, one.clone()), (format!("x{j}0"), 1, one)],
            (2, 1) => vec![("xi".into(), 2, one), ("xit".into(), 0, q(-1)), ("z".into(), 1, q(-2))],
            (4, 1) if !has_zero => ["t", "u", "x", "v", "w"]
                .iter()
                .zip([1, 4, 6, 4, 1])
                .enumerate()
                .map(|(p, (n, b))| (n.to_string(), p as i32, q(b)))
                .collect(),
            (d, 1) => (0..=d).map(|p| (format!("x{p}"), p, one.clone())).collect(),
            (d, _) => (0..=d).map(|p| (format!("x{j}_{p}"), p, one.clone())).collect(),
        };
        out.push(Layout { name, coords });
    }
    let mut names: Vec<&String> = out.iter().flat_map(|l| l.coords.iter().map(|c| &c.0)).collect();
    let total = names.len();
    names.sort();
    names.dedup();
    if names.len() != total {
        for (i, l) in out.iter_mut().enumerate() {
            for c in &mut l.coords {
                c.0 = format!("x{}_{}", i, c.1);
                c.2 = q(1);
            }
        }
    }
    out
}

fn hint(row: usize, col: usize, side: Side, power: i32, name: &str) -> FreeHint {
    FreeHint::new(row, col, side, power, name)
}

fn conventions(degrees: &[i32], deformed: bool) -> Conventions {
    use Side::{Hat, U};
    match degrees {
        [0, 1] => {
            let k = if deformed { "e" } else { "k" };
            let xi = vec![hint(0, 0, U, 0, "C"), hint(1, 0, U, 0, "A0"), hint(1, 0, U, 1, "A1"), hint(1, 1, U, 0, "B")];
            let mut torsion_xi = xi.clone();
            torsion_xi[0] = hint(0, 0, Hat, 0, "C");
            Conventions {
                frame: vec![hint(0, 0, U, 0, "m~"), hint(1, 0, U, 0, "a0"), hint(1, 0, U, 1, "a1"), hint(1, 1, U, 0, k)],
                clock_scale: Some("m".into()),
                lambda: vec![
                    hint(0, 0, U, 0, "Sigma"),
                    hint(1, 0, U, 0, "phi0"),
                    hint(1, 0, U, 1, "phi1"),
                    hint(1, 1, U, 0, "chi"),
                ],
                xi,
                torsion_xi,
            }
        }
        [0, 1, 1] => {
            let mut frame = vec![hint(0, 0, U, 0, "m~")];
            for (r, n) in [(1, "a"), (2, "b")] {
                frame.push(hint(r, 0, U, 0, &format!("{n}0")));
                frame.push(hint(r, 0, U, 1, &format!("{n}1")));
            }
            for (i, (r, c)) in [(1, 1), (1, 2), (2, 1), (2, 2)].iter().enumerate() {
                frame.push(hint(*r, *c, U, 0, &format!("k{}", i + 1)));
            }
            // Symmetric pairs of three slots: (0,0) is 0 and (0,1+B) is 1+B.
            let mut lambda = vec![hint(0, 0, U, 0, "Sigma")];
            let mut xi = vec![hint(0, 0, U, 0, "C")];
            for a in 0..2 {
                lambda.push(hint(1 + a, 0, U, 0, &format!("phi{a}")));
                lambda.push(hint(1 + a, 0, U, 1, &format!("psi{a}")));
                xi.push(hint(1 + a, 0, U, 0, &format!("A{a}")));
                xi.push(hint(1 + a, 0, U, 1, &format!("D{a}")));
                for b in 0..2 {
                    lambda.push(hint(1 + a, 1 + b, U, 0, &format!("chi{a}{b}")));
                    xi.push(hint(1 + a, 1 + b, U, 0, &format!("B{a}{b}")));
                }
            }
            let mut torsion_xi = xi.clone();
            torsion_xi[0] = hint(0, 0, Hat, 0, "C");
            Conventions { frame, clock_scale: Some("m".into()), lambda, xi, torsion_xi }
        }
        [0, 2] => {
            let xi = vec![
                hint(0, 0, U, 0, "A"),
                hint(1, 0, U, 0, "B"),
                hint(1, 0, U, 1, "C"),
                hint(1, 0, U, 2, "D"),
                hint(1, 1, U, 0, "E"),
            ];
            let mut torsion_xi = xi.clone();
            torsion_xi[0] = hint(0, 0, Hat, 0, "A");
            Conventions {
                frame: vec![
                    hint(0, 0, U, 0, "c0"),
                    hint(1, 0, U, 0, "a0"),
                    hint(1, 0, U, 1, "a1"),
                    hint(1, 0, U, 2, "a2"),
                    hint(1, 1, U, 0, "b0"),
                ],
                clock_scale: None,
                lambda: vec![
                    hint(0, 0, U, 0, "Sigma"),
                    hint(1, 0, U, 0, "phi0"),
                    hint(1, 0, U, 1, "phi1"),
                    hint(1, 0, U, 2, "phi2"),
                    hint(1, 1, U, 0, "chi"),
                ],
                xi,
                torsion_xi,
            }
        }
        _ => Conventions::default(),
    }
}

fn param_poly(spec: &TwistorSpaceSpec, default: LaurentPoly) -> Result<LaurentPoly, ModuliError> {
    match spec.params.get("fpoly") {
        None => Ok(default),
        Some(ParamValue::Poly(p)) => Ok(p.clone()),
        Some(ParamValue::Rational(r)) => Ok(LaurentPoly::constant(SymExpr::rational(r.clone()))),
        Some(_) => Err(malformed("param fpoly", "expected a polynomial")),
    }
}

fn param_rational(spec: &TwistorSpaceSpec, name: &str, default: Q) -> Result<Q, ModuliError> {
    match spec.params.get(name) {
        None => Ok(default),
        Some(ParamValue::Rational(r)) => Ok(r.clone()),
        Some(_) => Err(malformed(&format!("param {name}"), "expected a rational value")),
    }
}

/// Default deformation of each deformed preset.
pub fn default_deformation(preset: Preset) -> Option<LaurentPoly> {
    let lam = |p: i32| LaurentPoly::lambda_pow(p);
    Some(match preset {
        Preset::Deformed3d => lam(-1).scale(&fibre_sym("Omega").powi(2).ok()?),
        Preset::Deformed5d => lam(-1).scale(&fibre_sym("Omega0").mul(&fibre_sym("Omega1"))),
        Preset::Jumping4d => LaurentPoly::constant(fibre_sym("S").powi(2).ok()?.scale(&qf(1, 2))),
        Preset::GibbonsHawking => lam(-1).scale(&fibre_sym("Q").powi(2).ok()?),
        _ => return None,
    })
}

/// Expands a preset into explicit rows and validates the deformations.
pub fn build_space(spec: &TwistorSpaceSpec) -> Result<TwistorSpace, ModuliError> {
    let preset = spec.preset;
    let expect_base = |want: &[i32]| -> Result<Vec<i32>, ModuliError> {
        if spec.base_type.is_empty() || spec.base_type == want {
            Ok(want.to_vec())
        } else {
            Err(malformed("base", format!("preset {} has base {:?}", preset.name(), want)))
        }
    };
    let mut share = Share::Hat;
    let mut table_order = 0;
    let mut factor_name: Option<&str> = None;
    // (row name, expression before the family factor)
    let mut defs: Vec<(String, LaurentPoly)> = Vec::new();
    let user_defs: Vec<(String, LaurentPoly)> = spec.deformations.iter().map(|d| (d.row.clone(), d.expr.clone())).collect();
    let main = |row: &str| -> Result<Vec<(String, LaurentPoly)>, ModuliError> {
        if !user_defs.is_empty() {
            return Ok(user_defs.clone());
        }
        let f = param_poly(spec, default_deformation(preset).expect("deformed preset"))?;
        Ok(vec![(row.to_string(), f)])
    };
    let degrees = match preset {
        Preset::Flat => {
            if !spec.deformations.is_empty() || spec.params.contains_key("fpoly") {
                return Err(malformed("deform", "the flat preset takes no deformation"));
            }
            if spec.base_type.is_empty() {
                return Err(malformed("base", "flat preset needs base degrees"));
            }
            spec.base_type.clone()
        }
        Preset::Custom => {
            if spec.base_type.is_empty() {
                return Err(malformed("base", "missing base degrees"));
            }
            defs = user_defs.clone();
            spec.base_type.clone()
        }
        Preset::Deformed3d => {
            defs = main("T")?;
            expect_base(&[0, 1])?
        }
        Preset::Deformed5d => {
            defs = main("T")?;
            factor_name = Some("eps");
            expect_base(&[0, 1, 1])?
        }
        Preset::Jumping4d => {
            defs = main("zeta")?;
            table_order = 1;
            expect_base(&[-1, 3])?
        }
        Preset::GibbonsHawking => {
            defs = main("T")?;
            table_order = 1;
            share = Share::Fraction(param_rational(spec, "alpha", qf(1, 2))?);
            expect_base(&[0, 2])?
        }
        Preset::EpsilonFamily => {
            defs = vec![("zeta".into(), LaurentPoly::constant(fibre_sym("Q")))];
            factor_name = Some("eps");
            expect_base(&[-1, 2])?
        }
        Preset::CFamily => {
            let n = param_rational(spec, "n", q(1))?;
            if !n.is_integer() || n < q(1) {
                return Err(malformed("param n", "n must be a positive integer"));
            }
            let n: i32 = n.to_integer().try_into().map_err(|_| malformed("param n", "n is too large"))?;
            let c = SymExpr::var(registry::constant("c"));
            let term = LaurentPoly::monomial(1 - 2 * n, fibre_sym("S").checked_div(&c)?);
            defs = vec![("T".into(), term)];
            expect_base(&[0, 4 * n - 2])?
        }
    };

    let mut layout = default_layout(&degrees);
    if preset == Preset::CFamily {
        layout[1].name = "S".into();
        layout[1].coords = (0..=degrees[1]).map(|p| (format!("x{p}"), p, q(1))).collect();
    }

    let mut coords = Vec::new();
    let mut rows = Vec::new();
    for (l, d) in layout.iter().zip(&degrees) {
        let mut section = LaurentPoly::zero();
        for (name, p, c) in &l.coords {
            let v = registry::coordinate(name);
            coords.push(v);
            section.add_term(*p, &SymExpr::var(v).scale(c));
        }
        rows.push(Row {
            name: l.name.clone(),
            fibre: registry::fibre(&l.name),
            degree: *d,
            deformation: None,
            factor: SymExpr::one(),
            base_section: section,
        });
    }

    let subst = param_substitution(spec, &defs)?;
    let factor = match factor_name {
        Some(name) => subst.apply(&SymExpr::var(registry::constant(name)))?,
        None => SymExpr::one(),
    };
    for (row, expr) in &defs {
        let location = format!("deform {row}");
        let Some(mu) = rows.iter().position(|r| &r.name == row) else {
            return Err(malformed(&location, format!("unknown row `{row}`")));
        };
        let expr = expr.try_map_coeffs(|c| subst.apply(c)).map_err(|e| malformed(&location, e.to_string()))?;
        let full = expr.scale(&factor);
        validate_deformation(&rows, mu, &full, &location)?;
        let merged = match &rows[mu].deformation {
            Some(d) => d.add(&full),
            None => full,
        };
        rows[mu].deformation = if merged.is_zero() { None } else { Some(merged) };
        rows[mu].factor = factor.clone();
    }
    for r in &mut rows {
        if r.deformation.is_none() {
            r.factor = SymExpr::one();
        }
    }
    let order = dependency_order(&rows)?;
    let deformed = rows.iter().any(|r| r.deformation.is_some());
    Ok(TwistorSpace {
        preset,
        conventions: conventions(&degrees, deformed),
        rows,
        coords,
        share,
        table_order,
        params: spec.params.clone(),
        order,
    })
}

/// Rational, infinite and free bindings of family parameters.
struct ParamSubst {
    values: HashMap<Var, SymExpr>,
    /// Parameters sent to infinity, as `(p, s)` with `p = 1/s` and `s -> 0`.
    infinite: Vec<(Var, Var)>,
}

impl ParamSubst {
    fn apply(&self, e: &SymExpr) -> Result<SymExpr, SymError> {
        let mut out = e.substitute(&self.values)?;
        for (_, s) in &self.infinite {
            out = out.eval(&|v| if v == *s { Some(q(0)) } else { None })?;
        }
        Ok(out)
    }
}

fn param_substitution(spec: &TwistorSpaceSpec, defs: &[(String, LaurentPoly)]) -> Result<ParamSubst, ModuliError> {
    let mut used: Vec<String> = Vec::new();
    for (_, e) in defs {
        for (_, c) in e.terms() {
            for v in c.vars() {
                if v.kind() == VarKind::Constant {
                    used.push(v.name());
                }
            }
        }
    }
    let mut values = HashMap::new();
    let mut infinite = Vec::new();
    for (name, value) in &spec.params {
        if STRUCTURAL.contains(&name.as_str()) {
            continue;
        }
        let known = used.contains(name) || matches!(name.as_str(), "eps" | "c");
        if !known {
            return Err(malformed(&format!("param {name}"), "the parameter does not occur in the space"));
        }
        let v = registry::constant(name);
        match value {
            ParamValue::Rational(r) => {
                values.insert(v, SymExpr::rational(r.clone()));
            }
            ParamValue::Infinity => {
                let s = registry::constant(&format!("1/{name}"));
                values.insert(v, SymExpr::one().checked_div(&SymExpr::var(s))?);
                infinite.push((v, s));
            }
            ParamValue::Free => {}
            ParamValue::Poly(_) => return Err(malformed(&format!("param {name}"), "expected rational, infinity or free")),
        }
    }
    Ok(ParamSubst { values, infinite })
}

fn validate_deformation(rows: &[Row], mu: usize, expr: &LaurentPoly, location: &str) -> Result<(), ModuliError> {
    for (_, c) in expr.terms() {
        for v in c.vars() {
            match v.kind() {
                VarKind::Fibre => {
                    let Some(nu) = rows.iter().position(|r| r.fibre == v) else {
                        return Err(malformed(location, format!("unknown fibre coordinate `{v}`")));
                    };
                    if nu == mu {
                        return Err(malformed(location, format!("row `{}` cannot depend on itself", rows[mu].name)));
                    }
                }
                VarKind::Constant => {}
                _ => return Err(malformed(location, format!("`{v}` is not a fibre coordinate or family parameter"))),
            }
        }
        for v in c.denom().vars() {
            if v.kind() == VarKind::Fibre {
                return Err(malformed(location, format!("deformation is not polynomial in `{v}`")));
            }
        }
    }
    Ok(())
}

fn depends_on(row: &Row) -> Vec<Var> {
    let mut out = Vec::new();
    if let Some(d) = &row.deformation {
        for (_, c) in d.terms() {
            out.extend(c.vars().into_iter().filter(|v| v.kind() == VarKind::Fibre));
        }
    }
    out.sort();
    out.dedup();
    out
}

fn dependency_order(rows: &[Row]) -> Result<Vec<usize>, ModuliError> {
    let mut done = vec![false; rows.len()];
    let mut order = Vec::new();
    while order.len() < rows.len() {
        let before = order.len();
        for (mu, row) in rows.iter().enumerate() {
            if done[mu] {
                continue;
            }
            let ready = depends_on(row).iter().all(|v| rows.iter().position(|r| r.fibre == *v).map(|nu| done[nu]).unwrap_or(true));
            if ready {
                done[mu] = true;
                order.push(mu);
            }
        }
        if order.len() == before {
            return Err(malformed("deform", "deformations depend on each other cyclically"));
        }
    }
    Ok(order)
}

/// Global sections `w^mu|` and `w^mu_hat|`, both stored with powers of `lam`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwistorLines {
    pub coords: Vec<Var>,
    pub sections_u: Vec<LaurentPoly>,
    pub sections_hat: Vec<LaurentPoly>,
}

impl TwistorLines {
    /// `d_a w^mu|` for every row.
    pub fn derivative(&self, a: usize) -> Vec<LaurentPoly> {
        self.sections_u.iter().map(|s| s.partial(self.coords[a])).collect()
    }

    /// `dw|` as one column of forms: entry `[mu][a]` is `d_a w^mu|`.
    pub fn differential(&self) -> Vec<Vec<LaurentPoly>> {
        self.sections_u.iter().map(|s| self.coords.iter().map(|c| s.partial(*c)).collect()).collect()
    }

    pub fn substitution(&self, space: &TwistorSpace) -> HashMap<Var, LaurentPoly> {
        space.fibre_vars().into_iter().zip(self.sections_u.iter().cloned()).collect()
    }
}

pub fn compute_twistor_lines(space: &TwistorSpace) -> Result<TwistorLines, ModuliError> {
    let k = space.rank();
    let mut sections_u = vec![LaurentPoly::zero(); k];
    let mut sections_hat = vec![LaurentPoly::zero(); k];
    let mut known: HashMap<Var, LaurentPoly> = HashMap::new();
    for &mu in &space.order {
        let row = &space.rows[mu];
        let g = match &row.deformation {
            Some(d) => laurent_substitute(d, &known)?,
            None => LaurentPoly::zero(),
        };
        let split = split_scalar_particular(&g, -row.degree, &space.share);
        if !split.obstruction.is_empty() {
            return Err(ModuliError::ObstructedSections {
                row: row.name.clone(),
                powers: split.obstruction.iter().map(|(p, _)| *p).collect(),
            });
        }
        let w = row.base_section.add(&split.h);
        let w_hat = row.base_section.shift(-row.degree).add(&split.h_hat);
        if !w.shift(-row.degree).add(&g).sub(&w_hat).is_zero() {
            return Err(ModuliError::PatchingIdentity(row.name.clone()));
        }
        known.insert(row.fibre, w.clone());
        sections_u[mu] = w;
        sections_hat[mu] = w_hat;
    }
    Ok(TwistorLines { coords: space.coords.clone(), sections_u, sections_hat })
}

/// Checks `w_hat(w|, lam) = w_hat|` for every row.
pub fn patching_identity_holds(space: &TwistorSpace, lines: &TwistorLines) -> Result<bool, ModuliError> {
    let sub = lines.substitution(space);
    for mu in 0..space.rank() {
        let lhs = laurent_substitute(&space.patching(mu), &sub)?;
        if !lhs.sub(&lines.sections_hat[mu]).is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Derivatives of the patching restricted to the lines.
#[derive(Clone, Debug)]
pub struct Jets {
    /// `F^mu_nu`.
    pub f1: LMatrix,
    /// `F^mu_{nu rho}`, one symmetric matrix per `mu`.
    pub f2: Vec<LMatrix>,
    /// `d_b F^mu_nu`, one matrix per coordinate.
    pub df: Vec<LMatrix>,
}

impl Jets {
    pub fn has_second_jets(&self) -> bool {
        self.f2.iter().any(|m| !m.is_zero())
    }

    /// `F^mu_{(nu rho)}` with columns over [`bundle::symmetric_pairs`].
    pub fn f2_pairs(&self) -> LMatrix {
        let k = self.f1.rows;
        let pairs = bundle::symmetric_pairs(k);
        let mut out = LMatrix::zero(k, pairs.len());
        for mu in 0..k {
            for (p, (nu, rho)) in pairs.iter().enumerate() {
                out.set(mu, p, self.f2[mu].get(*nu, *rho).clone());
            }
        }
        out
    }
}

fn fibre_derivative(e: &LaurentPoly, v: Var) -> LaurentPoly {
    e.map_coeffs(|c| c.diff_symbol(v))
}

pub fn restricted_jets(space: &TwistorSpace, lines: &TwistorLines) -> Result<Jets, ModuliError> {
    let k = space.rank();
    let sub = lines.substitution(space);
    let fibres = space.fibre_vars();
    let mut f1 = LMatrix::zero(k, k);
    let mut f2 = vec![LMatrix::zero(k, k); k];
    for mu in 0..k {
        let row = &space.rows[mu];
        f1.set(mu, mu, LaurentPoly::lambda_pow(-row.degree));
        let Some(def) = &row.deformation else { continue };
        for nu in 0..k {
            let d1 = fibre_derivative(def, fibres[nu]);
            if d1.is_zero() {
                continue;
            }
            let e = f1.get(mu, nu).add(&laurent_substitute(&d1, &sub)?);
            f1.set(mu, nu, e);
            for rho in 0..k {
                let d2 = fibre_derivative(&d1, fibres[rho]);
                if !d2.is_zero() {
                    f2[mu].set(nu, rho, laurent_substitute(&d2, &sub)?);
                }
            }
        }
    }
    let mut df = Vec::with_capacity(lines.coords.len());
    for a in 0..lines.coords.len() {
        let dw = lines.derivative(a);
        let mut m = LMatrix::zero(k, k);
        for mu in 0..k {
            for nu in 0..k {
                let mut e = LaurentPoly::zero();
                for (rho, dwr) in dw.iter().enumerate() {
                    e = e.add(&f2[mu].get(nu, rho).mul(dwr));
                }
                m.set(mu, nu, e);
            }
        }
        df.push(m);
    }
    Ok(Jets { f1, f2, df })
}

/// Laurent coefficients of the restricted deformation and its fibre derivatives.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoefficientTables {
    /// Index of the deformed row the tables expand.
    pub row: Option<usize>,
    /// Fibre variables `f` depends on, indexing `A` below.
    pub vars: Vec<Var>,
    /// Derivative order of `gamma`: 0 for `f|`, 1 for `df/dw|` along `vars[0]`.
    pub order: u32,
    pub gamma: BTreeMap<i32, SymExpr>,
    pub phi: BTreeMap<(i32, usize), SymExpr>,
    pub psi: BTreeMap<(i32, usize, usize), SymExpr>,
}

impl CoefficientTables {
    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty() && self.phi.is_empty() && self.psi.is_empty()
    }

    pub fn gamma(&self, n: i32) -> SymExpr {
        self.gamma.get(&n).cloned().unwrap_or_default()
    }

    pub fn phi(&self, n: i32) -> SymExpr {
        self.phi_a(n, 0)
    }

    pub fn phi_a(&self, n: i32, a: usize) -> SymExpr {
        self.phi.get(&(n, a)).cloned().unwrap_or_default()
    }

    pub fn psi(&self, n: i32) -> SymExpr {
        self.psi_ab(n, 0, 0)
    }

    pub fn psi_ab(&self, n: i32, a: usize, b: usize) -> SymExpr {
        self.psi.get(&(n, a.min(b), a.max(b))).cloned().unwrap_or_default()
    }

    /// What each table expands, for reports.
    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        let base = if self.order == 0 { "f|".to_string() } else { "df/dw|".to_string() };
        vec![
            ("gamma", base.clone()),
            ("phi", format!("d({base})/dw^A")),
            ("psi", format!("d2({base})/dw^A dw^B")),
        ]
    }
}

fn collect(e: &LaurentPoly, mut put: impl FnMut(i32, SymExpr)) {
    for (p, c) in e.terms() {
        put(p, c.clone());
    }
}

/// Tables for the first deformed row, with the family factor divided out.
pub fn coefficient_tables(space: &TwistorSpace, lines: &TwistorLines) -> Result<CoefficientTables, ModuliError> {
    let Some(mu) = space.rows.iter().position(|r| r.deformation.is_some()) else {
        return Ok(CoefficientTables::default());
    };
    let row = &space.rows[mu];
    if row.factor.is_zero() {
        return Ok(CoefficientTables::default());
    }
    let inv = row.factor.inv()?;
    let f = row.deformation.as_ref().expect("deformed row").scale(&inv);
    let deps = depends_on(row);
    let vars: Vec<Var> = space.fibre_vars().into_iter().filter(|v| deps.contains(v)).collect();
    let sub = lines.substitution(space);
    let base = if space.table_order == 1 && !vars.is_empty() { fibre_derivative(&f, vars[0]) } else { f };
    let mut t = CoefficientTables { row: Some(mu), vars: vars.clone(), order: space.table_order, ..Default::default() };
    collect(&laurent_substitute(&base, &sub)?, |n, c| {
        t.gamma.insert(n, c);
    });
    for (a, va) in vars.iter().enumerate() {
        let d1 = fibre_derivative(&base, *va);
        collect(&laurent_substitute(&d1, &sub)?, |n, c| {
            t.phi.insert((n, a), c);
        });
        for (b, vb) in vars.iter().enumerate().skip(a) {
            let d2 = fibre_derivative(&d1, *vb);
            collect(&laurent_substitute(&d2, &sub)?, |n, c| {
                t.psi.insert((n, a, b), c);
            });
        }
    }
    Ok(t)
}

/// Number of moduli predicted by the type: `sum max(n_i + 1, 0)`.
pub fn expected_moduli(t: &BundleType) -> usize {
    t.h0()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(name: &str) -> SymExpr {
        SymExpr::var(registry::coordinate(name))
    }

    #[test]
    fn flat_3d_lines() {
        let space = build_space(&TwistorSpaceSpec::flat(&[0, 1])).unwrap();
        let lines = compute_twistor_lines(&space).unwrap();
        assert_eq!(lines.sections_u[0], LaurentPoly::constant(c("t")));
        assert_eq!(lines.sections_u[1], LaurentPoly::from_coeffs([(0, c("y")), (1, c("z"))]));
        assert_eq!(space.coords.len(), expected_moduli(&space.base_type()));
        let jets = restricted_jets(&space, &lines).unwrap();
        assert_eq!(jets.f1, LMatrix::diagonal_powers(&[0, -1]));
        assert!(!jets.has_second_jets());
        assert!(coefficient_tables(&space, &lines).unwrap().is_empty());
    }

    #[test]
    fn deformed_3d_tables() {
        let space = build_space(&TwistorSpaceSpec::deformed3d(default_deformation(Preset::Deformed3d).unwrap())).unwrap();
        let lines = compute_twistor_lines(&space).unwrap();
        let (y, z, t) = (c("y"), c("z"), c("t"));
        assert_eq!(lines.sections_u[0], LaurentPoly::from_coeffs([(0, t.clone()), (1, z.mul(&z).neg())]));
        assert_eq!(lines.sections_hat[0].coeff(0), t.add(&y.mul(&z).scale(&q(2))));
        assert_eq!(lines.sections_hat[0].coeff(-1), y.mul(&y));
        let tab = coefficient_tables(&space, &lines).unwrap();
        assert_eq!(tab.gamma(-1), y.mul(&y));
        assert_eq!(tab.gamma(0), y.mul(&z).scale(&q(2)));
        assert_eq!(tab.gamma(1), z.mul(&z));
        assert_eq!(tab.phi(-1), y.scale(&q(2)));
        assert_eq!(tab.phi(0), z.scale(&q(2)));
        assert_eq!(tab.psi(-1), SymExpr::int(2));
        assert!(tab.psi(0).is_zero());
        let jets = restricted_jets(&space, &lines).unwrap();
        for a in 0..3 {
            assert_eq!(jets.df[a], jets.f1.partial(space.coords[a]));
        }
    }

    #[test]
    fn epsilon_and_c_family_patchings() {
        let eps = build_space(&TwistorSpaceSpec::epsilon_family(ParamValue::Free)).unwrap();
        let e = SymExpr::var(registry::constant("eps"));
        assert_eq!(eps.rows[0].deformation, Some(LaurentPoly::constant(e.mul(&fibre_sym("Q")))));
        let inf = build_space(&TwistorSpaceSpec::c_family(1, ParamValue::Infinity)).unwrap();
        assert!(!inf.is_deformed());
        let one = build_space(&TwistorSpaceSpec::c_family(1, ParamValue::Rational(q(1)))).unwrap();
        let lines = compute_twistor_lines(&one).unwrap();
        assert_eq!(lines.sections_u[0].coeff(1), c("x2").neg());
    }

    #[test]
    fn rejects_bad_deformations() {
        let inv = LaurentPoly::constant(SymExpr::one().checked_div(&fibre_sym("Omega")).unwrap());
        let spec = TwistorSpaceSpec::custom(&[0, 1], vec![Deformation { row: "T".into(), expr: inv }]);
        assert!(matches!(build_space(&spec), Err(ModuliError::MalformedSpec { .. })));
        let own = LaurentPoly::constant(fibre_sym("T"));
        let spec = TwistorSpaceSpec::custom(&[0, 1], vec![Deformation { row: "T".into(), expr: own }]);
        assert!(build_space(&spec).is_err());
    }

    #[test]
    fn jumping_hat_section() {
        let space = build_space(&TwistorSpaceSpec::jumping4d(default_deformation(Preset::Jumping4d).unwrap())).unwrap();
        let lines = compute_twistor_lines(&space).unwrap();
        let x0 = c("x0");
        assert_eq!(lines.sections_hat[0], LaurentPoly::constant(x0.mul(&x0).scale(&qf(1, 2))));
        assert_eq!(space.coords.len(), 4);
    }
}
