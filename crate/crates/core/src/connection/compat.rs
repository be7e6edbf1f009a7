use std::collections::{BTreeMap, HashMap};

use super::{ConnectionError, ConnectionFamily, ConnectionKind};
use crate::geometry::{galilean_structure, FrameSection, GalileanStructure};
use crate::moduli::{coefficient_tables, CoefficientTables, Preset, TwistorLines, TwistorSpace};
use crate::symbolic::{registry, sym, OneForm, SymExpr, Symmetry, TensorField, Var};

/// Parameter substitutions, applied simultaneously.
pub type Assignments = BTreeMap<Var, SymExpr>;

#[derive(Clone, Debug)]
pub struct CompatibilityReport {
    pub connection: ConnectionFamily,
    pub structure: GalileanStructure,
    /// `[a][b]` is `nabla_b theta_a`.
    pub nabla_theta: TensorField,
    /// `[c][a][b]` is `nabla_c h^ab`.
    pub nabla_h: TensorField,
}

impl CompatibilityReport {
    pub fn clock_parallel(&self) -> bool {
        self.nabla_theta.is_zero()
    }

    pub fn metric_parallel(&self) -> bool {
        self.nabla_h.is_zero()
    }

    pub fn is_compatible(&self) -> bool {
        self.clock_parallel() && self.metric_parallel()
    }

    /// Nonzero residual components labelled by their indices.
    pub fn nonzero_residuals(&self) -> Vec<(String, SymExpr)> {
        let name = |i: usize| self.structure.coords[i].name();
        let mut out = Vec::new();
        for idx in self.nabla_theta.indices() {
            let v = self.nabla_theta.get(&idx);
            if !v.is_zero() {
                out.push((format!("nabla_{} theta_{}", name(idx[1]), name(idx[0])), v.clone()));
            }
        }
        for idx in self.nabla_h.indices() {
            let v = self.nabla_h.get(&idx);
            if !v.is_zero() {
                out.push((format!("nabla_{} h^{}{}", name(idx[0]), name(idx[1]), name(idx[2])), v.clone()));
            }
        }
        out
    }
}

/// `nabla_b theta_a = d_b theta_a - Gamma^c_ab theta_c`, stored at `[a][b]`.
pub fn covariant_clock(conn: &ConnectionFamily, clock: &OneForm) -> TensorField {
    let n = conn.dim();
    let mut out = TensorField::zero(&conn.coords, 2, Symmetry::General);
    for a in 0..n {
        for b in 0..n {
            let mut r = clock.comps[a].partial(conn.coords[b]);
            for c in 0..n {
                r = r.sub(&conn.gamma(c, a, b).mul(&clock.comps[c]));
            }
            out.set(&[a, b], r);
        }
    }
    out
}

/// `nabla_c h^ab = d_c h^ab + Gamma^a_dc h^db + Gamma^b_dc h^ad`, stored at `[c][a][b]`.
pub fn covariant_metric(conn: &ConnectionFamily, metric: &TensorField) -> TensorField {
    let n = conn.dim();
    let mut out = TensorField::zero(&conn.coords, 3, Symmetry::General);
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut r = metric.get(&[a, b]).partial(conn.coords[c]);
                for d in 0..n {
                    r = r.add(&conn.gamma(a, d, c).mul(metric.get(&[d, b])));
                    r = r.add(&conn.gamma(b, d, c).mul(metric.get(&[a, d])));
                }
                out.set(&[c, a, b], r);
            }
        }
    }
    out
}

fn check_masks(assignments: &Assignments) -> Result<(), ConnectionError> {
    for (param, value) in assignments {
        let allowed = registry::dependencies(*param);
        let offending: Vec<String> = value.coordinate_support().into_iter().filter(|c| !allowed.contains(c)).map(|c| c.name()).collect();
        if !offending.is_empty() {
            return Err(ConnectionError::MaskViolation { param: param.name(), offending });
        }
    }
    Ok(())
}

/// Substitutes `assignments` into both the connection and the structure and
/// returns the exact residuals of `nabla theta` and `nabla h`.
pub fn impose_compatibility(conn: &ConnectionFamily, g: &GalileanStructure, assignments: &Assignments) -> Result<CompatibilityReport, ConnectionError> {
    check_masks(assignments)?;
    let map: HashMap<Var, SymExpr> = assignments.iter().map(|(k, v)| (*k, v.clone())).collect();
    let connection = conn.substitute(&map)?;
    let structure = g.substitute(&map)?;
    let nabla_theta = covariant_clock(&connection, &structure.clock);
    let nabla_h = covariant_metric(&connection, &structure.metric);
    Ok(CompatibilityReport { connection, structure, nabla_theta, nabla_h })
}

fn need(v: Option<Var>, name: &str) -> Result<Var, ConnectionError> {
    v.ok_or_else(|| ConnectionError::MissingParameter(name.to_string()))
}

/// The coordinate carried by the degree-0 row.
fn clock_coordinate(space: &TwistorSpace) -> Result<Var, ConnectionError> {
    space
        .rows
        .iter()
        .find(|r| r.degree == 0)
        .and_then(|r| r.base_section.coeff(0).vars().into_iter().next())
        .ok_or_else(|| ConnectionError::Unsupported("no degree-0 row".into()))
}

/// `m -> m(t)` and `Sigma = -d_t m / m`.
pub fn flat_clock_fix(space: &TwistorSpace, frame: &FrameSection, conn: &ConnectionFamily) -> Result<Assignments, ConnectionError> {
    let t = clock_coordinate(space)?;
    let m = need(frame.param("m"), "m")?;
    let mt = sym(registry::function("m", &[t]));
    let mut out = Assignments::new();
    out.insert(m, mt.clone());
    if let Some(sigma) = conn.param("Sigma") {
        out.insert(sigma, mt.partial(t).checked_div(&mt)?.neg());
    }
    Ok(out)
}

fn scaled_tables(space: &TwistorSpace, lines: &TwistorLines) -> Result<(CoefficientTables, SymExpr), ConnectionError> {
    let tables = coefficient_tables(space, lines)?;
    let factor = tables.row.map(|r| space.rows[r].factor.clone()).unwrap_or_else(SymExpr::one);
    Ok((tables, factor))
}

/// `C_b = m d_b(1/m) + phi_{-1} A1_b` for the torsion Xi-connection over `O + O(1)`.
pub fn torsion_clock_fix(space: &TwistorSpace, lines: &TwistorLines, frame: &FrameSection, conn: &ConnectionFamily) -> Result<Assignments, ConnectionError> {
    let m = sym(need(frame.param("m"), "m")?);
    let (tables, factor) = scaled_tables(space, lines)?;
    let phi_m1 = tables.phi(-1).mul(&factor);
    let minv = m.inv()?;
    let mut out = Assignments::new();
    for b in &space.coords {
        let c = need(conn.param(&format!("C_{b}")), &format!("C_{b}"))?;
        let a1 = sym(need(conn.param(&format!("A1_{b}")), &format!("A1_{b}"))?);
        out.insert(c, m.mul(&minv.partial(*b)).add(&phi_m1.mul(&a1)));
    }
    Ok(out)
}

/// `B = phi_0 A0 + d(calB)`; returns the assignments and `calB`.
pub fn frobenius_fix(space: &TwistorSpace, lines: &TwistorLines, conn: &ConnectionFamily) -> Result<(Assignments, Var), ConnectionError> {
    let (tables, factor) = scaled_tables(space, lines)?;
    let phi0 = tables.phi(0).mul(&factor);
    let cal_b = registry::function("calB", &space.coords);
    let mut out = Assignments::new();
    for b in &space.coords {
        let bb = need(conn.param(&format!("B_{b}")), &format!("B_{b}"))?;
        let a0 = sym(need(conn.param(&format!("A0_{b}")), &format!("A0_{b}"))?);
        out.insert(bb, phi0.mul(&a0).add(&sym(cal_b).partial(*b)));
    }
    Ok((out, cal_b))
}

/// Galilean structure with spatial block `h^ij = kappa htilde^ij`, where
/// `d kappa = -2 kappa d(base)`, completed by `h(theta, .) = 0` and the
/// observer `U = d_time / theta_time`.
pub fn conformal_metric(clock: &OneForm, time: usize, htilde: &[Vec<SymExpr>], base: Var) -> Result<GalileanStructure, ConnectionError> {
    let n = clock.dim();
    let spatial: Vec<usize> = (0..n).filter(|i| *i != time).collect();
    if htilde.len() != spatial.len() || htilde.iter().any(|r| r.len() != spatial.len()) {
        return Err(ConnectionError::Unsupported(format!("htilde must be {0}x{0}", spatial.len())));
    }
    let kappa = registry::function(&format!("kappa_{}", base.name()), &registry::dependencies(base));
    registry::set_derivative_rule(kappa, sym(kappa).scale(&crate::symbolic::q(-2)), base);
    let k = sym(kappa);
    let theta_t = &clock.comps[time];
    let mut h = TensorField::zero(&clock.coords, 2, Symmetry::Symmetric);
    for (i, a) in spatial.iter().enumerate() {
        for (j, b) in spatial.iter().enumerate().skip(i) {
            h.set(&[*a, *b], k.mul(&htilde[i][j]));
        }
    }
    for a in &spatial {
        let mut s = SymExpr::zero();
        for b in &spatial {
            s = s.add(&clock.comps[*b].mul(h.get(&[*b, *a])));
        }
        h.set(&[time, *a], s.checked_div(theta_t)?.neg());
    }
    let mut tt = SymExpr::zero();
    for a in &spatial {
        for b in &spatial {
            tt = tt.add(&clock.comps[*a].mul(&clock.comps[*b]).mul(h.get(&[*a, *b])));
        }
    }
    h.set(&[time, time], tt.checked_div(&theta_t.mul(theta_t))?);
    let mut observer = vec![SymExpr::zero(); n];
    observer[time] = theta_t.inv()?;
    Ok(GalileanStructure::from_clock_metric_observer(clock.clone(), h, observer)?)
}

/// Substitutions and Galilean structure under which a preset's canonical
/// family becomes Newton-Cartan.
#[derive(Clone, Debug)]
pub struct Specialization {
    pub assignments: Assignments,
    pub structure: GalileanStructure,
}

fn identity(n: usize) -> Vec<Vec<SymExpr>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { SymExpr::one() } else { SymExpr::zero() }).collect()).collect()
}

/// The substitutions used for the flat `O + O(1)`, flat `O + O(1) + O(1)`
/// and deformed `O + O(1)` constructions; `conn` must be the Lambda family
/// for flat spaces and the torsion Xi family for the deformed one.
pub fn newton_cartan_preset(space: &TwistorSpace, lines: &TwistorLines, frame: &FrameSection, conn: &ConnectionFamily) -> Result<Specialization, ConnectionError> {
    let t = clock_coordinate(space)?;
    let time = space.coords.iter().position(|c| *c == t).expect("clock coordinate is a coordinate");
    let n = space.coords.len();
    let clock = frame.clock().ok_or_else(|| ConnectionError::Unsupported("frame has no clock".into()))?.clone();
    match (space.degrees().as_slice(), space.is_deformed(), conn.kind) {
        ([0, 1], false, ConnectionKind::Lambda) => {
            let mut assignments = flat_clock_fix(space, frame, conn)?;
            let cal_b = registry::function("calB", &[t]);
            let chi = need(conn.param("chi"), "chi")?;
            assignments.insert(chi, sym(cal_b).partial(t));
            let m = need(frame.param("m"), "m")?;
            let map: HashMap<Var, SymExpr> = [(m, assignments[&m].clone())].into_iter().collect();
            let structure = conformal_metric(&clock.substitute(&map)?, time, &identity(n - 1), cal_b)?;
            Ok(Specialization { assignments, structure })
        }
        ([0, 1], true, ConnectionKind::TorsionXi) if space.preset == Preset::Deformed3d || space.preset == Preset::Custom => {
            let mut assignments = torsion_clock_fix(space, lines, frame, conn)?;
            let (frob, cal_b) = frobenius_fix(space, lines, conn)?;
            assignments.extend(frob);
            let structure = conformal_metric(&clock, time, &identity(n - 1), cal_b)?;
            Ok(Specialization { assignments, structure })
        }
        ([0, 1, 1], false, ConnectionKind::Lambda) => {
            let mut assignments = flat_clock_fix(space, frame, conn)?;
            let kt = sym(registry::function("K", &[t]));
            let [k1, k2, k3, k4] = ["k1", "k2", "k3", "k4"].map(|s| frame.param(s));
            let (k1, k2, k3, k4) = (need(k1, "k1")?, need(k2, "k2")?, need(k3, "k3")?, need(k4, "k4")?);
            // k1 k4 - k2 k3 = K(t).
            assignments.insert(k4, kt.add(&sym(k2).mul(&sym(k3))).checked_div(&sym(k1))?);
            let chi00 = sym(need(conn.param("chi00"), "chi00")?);
            let chi11 = need(conn.param("chi11"), "chi11")?;
            assignments.insert(chi11, kt.partial(t).checked_div(&kt)?.neg().sub(&chi00));
            let g = galilean_structure(frame)?;
            let m = need(frame.param("m"), "m")?;
            let map: HashMap<Var, SymExpr> = [m, k4].iter().map(|v| (*v, assignments[v].clone())).collect();
            Ok(Specialization { assignments, structure: g.substitute(&map)? })
        }
        (d, deformed, kind) => Err(ConnectionError::Unsupported(format!(
            "no Newton-Cartan preset for type {d:?} (deformed: {deformed}) with the {} family",
            kind.name()
        ))),
    }
}
