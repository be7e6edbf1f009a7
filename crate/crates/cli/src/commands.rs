//! Commands and the report trees they produce.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Subcommand, ValueEnum};
use kodaira::connection::{
    bracket_closes, fix_gravity_from_cocycle, global_vector_fields, impose_compatibility, lambda_connection, newton_cartan_preset,
    torsion_xi_connection, xi_connection, Assignments, ConnectionFamily, LambdaOutcome, ObstructionReport,
};
use kodaira::geometry::{factorize_frame, frame_section, galilean_structure, FrameSection, GalileanStructure};
use kodaira::moduli::{build_space, compute_twistor_lines, restricted_jets, Jets, TwistorLines, TwistorSpace};
use kodaira::nc::{check_newton_cartan, quartic_discriminants, NcClass};
use kodaira::splitting::{birkhoff_factorize, detect_splitting_type, BirkhoffOptions};
use kodaira::symbolic::{registry, LaurentPoly, OneForm, SymExpr, TensorField, TwoForm, Var, VarKind, Q};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::dsl::{eval, fibre_scope, parse_expr, Pos, Scope, SpecDocument};
use crate::error::{CliError, InModule};
use crate::report::{Report, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Xi,
    Lambda,
    TorsionXi,
}

#[derive(Clone, Debug, PartialEq, Eq, Subcommand)]
pub enum Task {
    /// Twistor lines: rows, patching and the sections on both charts.
    Lines,
    /// Splitting type of the normal bundle, generically or at given points.
    NormalBundle {
        /// A point such as `x0=1/2,t=0`; coordinates left out stay symbolic.
        #[arg(long)]
        at: Vec<String>,
        /// A grid such as `x0=-1..1` or `x0=-1..1:1/2,t=0..2`.
        #[arg(long, conflicts_with = "at")]
        scan: Option<String>,
    },
    /// Frame section, clock and the induced Galilean structure.
    Frame,
    /// A connection family read off the twistor space.
    Connection {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Newton-Cartan classification after the standard substitutions or
    /// those in a file.
    VerifyNc {
        /// Lines `name = expr`; names are coordinates and free parameters,
        /// `f(t, y)` is a free function and `diff(e, t)` a partial derivative.
        #[arg(long)]
        subst: Option<PathBuf>,
    },
    /// Global holomorphic vector fields and their pushdowns.
    GlobalVectors {
        #[arg(long)]
        tdeg: u32,
    },
    /// Discriminant locus of the O(4) quartic.
    Discriminants,
    /// Gravitational field of the Lambda family from a cocycle.
    GravityFix {
        #[arg(long, allow_hyphen_values = true)]
        cocycle: String,
        #[arg(long, default_value_t = -3, allow_hyphen_values = true)]
        weight: i32,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Lines => "lines",
            Task::NormalBundle { .. } => "normal-bundle",
            Task::Frame => "frame",
            Task::Connection { .. } => "connection",
            Task::VerifyNc { .. } => "verify-nc",
            Task::GlobalVectors { .. } => "global-vectors",
            Task::Discriminants => "discriminants",
            Task::GravityFix { .. } => "gravity-fix",
        }
    }
}

struct Pipeline {
    space: TwistorSpace,
    lines: TwistorLines,
    jets: Jets,
}

impl Pipeline {
    fn new(doc: &SpecDocument) -> Result<Self, CliError> {
        let space = build_space(&doc.to_spec()).in_module("moduli")?;
        let lines = compute_twistor_lines(&space).in_module("moduli")?;
        let jets = restricted_jets(&space, &lines).in_module("moduli")?;
        Ok(Pipeline { space, lines, jets })
    }

    fn frame(&self) -> Result<FrameSection, CliError> {
        let fac = factorize_frame(&self.space, &self.jets.f1, &HashMap::new()).in_module("geometry")?;
        frame_section(&self.lines, &fac).in_module("geometry")
    }
}

/// Runs one task. Failures become error reports rather than `Err`, so a
/// batch keeps going and every run leaves a tree behind.
pub fn run(task: &Task, doc: Option<&SpecDocument>, base_dir: &Path) -> Report {
    match execute(task, doc, base_dir) {
        Ok((status, tree)) => Report::new(task.name(), status, tree),
        Err(e) => Report::new(task.name(), Status::Error, error_tree(&e)),
    }
}

pub fn error_tree(e: &CliError) -> Value {
    let module = match e {
        CliError::Module { module, .. } => module,
        CliError::Parse { .. } | CliError::UnknownSymbol { .. } | CliError::Spec { .. } => "cli",
        CliError::Usage(_) | CliError::Io { .. } => "cli",
    };
    let mut m = Map::new();
    m.insert("module".into(), json!(module));
    m.insert("message".into(), json!(e.to_string()));
    if let Some(p) = e.pos() {
        m.insert("line".into(), json!(p.line));
        m.insert("column".into(), json!(p.col));
    }
    Value::Object(m)
}

fn execute(task: &Task, doc: Option<&SpecDocument>, base_dir: &Path) -> Result<(Status, Value), CliError> {
    if let Task::Discriminants = task {
        return Ok((Status::Ok, discriminants()));
    }
    let doc = doc.ok_or_else(|| CliError::Usage(format!("`{}` needs a spec file", task.name())))?;
    let p = Pipeline::new(doc)?;
    match task {
        Task::Lines => Ok((Status::Ok, lines(&p))),
        Task::NormalBundle { at, scan } => normal_bundle(&p, at, scan.as_deref()).map(|v| (Status::Ok, v)),
        Task::Frame => frame(&p).map(|v| (Status::Ok, v)),
        Task::Connection { kind } => connection(&p, *kind),
        Task::VerifyNc { subst } => verify_nc(&p, subst.as_ref().map(|s| base_dir.join(s)).as_deref()),
        Task::GlobalVectors { tdeg } => global_vectors(&p, *tdeg).map(|v| (Status::Ok, v)),
        Task::GravityFix { cocycle, weight } => gravity_fix(&p, cocycle, *weight).map(|v| (Status::Ok, v)),
        Task::Discriminants => unreachable!("handled above"),
    }
}

fn s(e: &impl std::fmt::Display) -> Value {
    Value::String(e.to_string())
}

fn names(vars: &[Var]) -> Value {
    Value::Array(vars.iter().map(|v| s(v)).collect())
}

fn degrees(d: &[i32]) -> Value {
    json!(d)
}

fn one_form(w: &OneForm) -> Value {
    s(w)
}

fn two_form(w: &TwoForm) -> Value {
    s(w)
}

/// Nonzero components keyed by coordinate names, `a,b` for rank two.
fn tensor(t: &TensorField) -> Value {
    let mut m = Map::new();
    for idx in t.indices() {
        let v = t.get(&idx);
        if !v.is_zero() {
            let key: Vec<String> = idx.iter().map(|i| t.coords[*i].name()).collect();
            m.insert(key.join(","), s(v));
        }
    }
    Value::Object(m)
}

fn exprs(v: &[SymExpr]) -> Value {
    Value::Array(v.iter().map(|e| s(e)).collect())
}

fn lines(p: &Pipeline) -> Value {
    let rows: Vec<Value> = p
        .space
        .rows
        .iter()
        .enumerate()
        .map(|(mu, r)| {
            json!({
                "row": r.name,
                "degree": r.degree,
                "patching": p.space.patching(mu).to_string(),
                "section": p.lines.sections_u[mu].to_string(),
                "section_hat": p.lines.sections_hat[mu].to_string(),
            })
        })
        .collect();
    json!({
        "preset": p.space.preset.name(),
        "base_type": degrees(&p.space.degrees()),
        "coordinates": names(&p.space.coords),
        "rows": rows,
    })
}

/// `x0=1/2,t=0` or a grid `x0=-1..1:1/2,t=0..2`, as one list of values per
/// coordinate.
fn parse_axes(p: &Pipeline, text: &str, grid: bool) -> Result<Vec<(Var, Vec<Q>)>, CliError> {
    let mut axes = Vec::new();
    let mut col = 1;
    for part in text.split(',') {
        let pos = Pos { line: 1, col };
        col += part.chars().count() + 1;
        let (name, value) = part.split_once('=').ok_or_else(|| CliError::parse(pos, format!("expected `name=value` in `{part}`")))?;
        let name = name.trim();
        let var = p.space.coord(name).ok_or_else(|| CliError::UnknownSymbol { name: name.into(), pos })?;
        let rational = |t: &str| t.trim().parse::<Q>().map_err(|_| CliError::parse(pos, format!("`{t}` is not a rational number")));
        let values = match value.split_once("..") {
            Some((lo, rest)) if grid => {
                let (hi, step) = match rest.split_once(':') {
                    Some((hi, st)) => (rational(hi)?, rational(st)?),
                    None => (rational(rest)?, Q::from_integer(1.into())),
                };
                let lo = rational(lo)?;
                if step <= Q::from_integer(0.into()) || hi < lo {
                    return Err(CliError::parse(pos, "a range needs lo <= hi and a positive step"));
                }
                let mut vs = Vec::new();
                let mut x = lo;
                while x <= hi {
                    vs.push(x.clone());
                    x += &step;
                }
                vs
            }
            _ => vec![rational(value)?],
        };
        axes.push((var, values));
    }
    Ok(axes)
}

fn grid_points(axes: &[(Var, Vec<Q>)]) -> Vec<Vec<(Var, Q)>> {
    let mut points = vec![Vec::new()];
    for (v, values) in axes {
        points = points.into_iter().flat_map(|pt: Vec<(Var, Q)>| values.iter().map(move |x| [pt.clone(), vec![(*v, x.clone())]].concat())).collect();
    }
    points
}

fn point_tree(point: &[(Var, Q)]) -> Value {
    let m: Map<String, Value> = point.iter().map(|(v, x)| (v.name(), s(x))).collect();
    Value::Object(m)
}

fn normal_bundle(p: &Pipeline, at: &[String], scan: Option<&str>) -> Result<Value, CliError> {
    let mut points: Vec<Vec<(Var, Q)>> = Vec::new();
    for a in at {
        points.push(parse_axes(p, a, false)?.into_iter().map(|(v, xs)| (v, xs[0].clone())).collect());
    }
    if let Some(g) = scan {
        points = grid_points(&parse_axes(p, g, true)?);
    }
    let generic = birkhoff_factorize(&p.jets.f1, &BirkhoffOptions::default()).in_module("splitting")?.splitting_type;
    let mut out = Map::new();
    out.insert("base_type".into(), degrees(&p.space.degrees()));
    out.insert("generic_type".into(), degrees(generic.degrees()));
    if !points.is_empty() {
        let f1 = &p.jets.f1;
        // The first point runs alone so that every symbol the factorization
        // interns exists before the parallel part starts.
        let first = detect_splitting_type(f1, &points[0]);
        let rest: Vec<_> = points[1..].par_iter().map(|pt| detect_splitting_type(f1, pt)).collect();
        let mut results = Vec::new();
        for (pt, t) in points.iter().zip(std::iter::once(first).chain(rest)) {
            let t = t.in_module("splitting")?;
            results.push(json!({ "point": point_tree(pt), "type": degrees(t.degrees()) }));
        }
        out.insert("points".into(), Value::Array(results));
    }
    Ok(Value::Object(out))
}

fn galilean(g: &GalileanStructure) -> Value {
    json!({
        "clock": one_form(&g.clock),
        "observer": exprs(&g.observer),
        "metric": tensor(&g.metric),
        "cometric": tensor(&g.cometric),
    })
}

fn frame(p: &Pipeline) -> Result<Value, CliError> {
    let f = p.frame()?;
    let components: Vec<Value> = f
        .components
        .iter()
        .map(|c| json!({ "degree": c.degree, "coefficients": c.coeffs.iter().map(one_form).collect::<Vec<_>>() }))
        .collect();
    let mut out = Map::new();
    out.insert("splitting_type".into(), degrees(f.factorization.splitting_type.degrees()));
    out.insert("column_degrees".into(), degrees(&f.factorization.column_degrees));
    out.insert("h".into(), s(&f.factorization.h));
    out.insert("components".into(), Value::Array(components));
    out.insert("clock".into(), f.clock().map(one_form).unwrap_or(Value::Null));
    out.insert("free_params".into(), Value::Array(f.free_params.iter().map(|fp| json!(fp.name())).collect()));
    out.insert("side_conditions".into(), exprs(&f.side_conditions));
    out.insert(
        "galilean".into(),
        match galilean_structure(&f) {
            Ok(g) => galilean(&g),
            Err(e) => json!({ "unavailable": e.to_string() }),
        },
    );
    Ok(Value::Object(out))
}

fn family(c: &ConnectionFamily) -> Value {
    let mut comps = Map::new();
    for (a, b, cc, v) in c.nonzero() {
        comps.insert(format!("Gamma^{}_({},{})", c.coords[a], c.coords[b], c.coords[cc]), s(&v));
    }
    json!({
        "kind": c.kind.name(),
        "coordinates": names(&c.coords),
        "free_params": names(&c.free_params),
        "torsion_free": c.torsion_free,
        "components": Value::Object(comps),
        "side_conditions": exprs(&c.side_conditions),
    })
}

fn obstruction(r: &ObstructionReport) -> Value {
    let reps: Vec<Value> = r.representative.iter().map(|e| json!({ "row": e.row, "col": e.col, "residual": e.residual.to_string() })).collect();
    json!({
        "dimension": r.dimension,
        "tag": r.tag.name(),
        "generic_type": r.generic_type.as_ref().map(|t| degrees(t.degrees())).unwrap_or(Value::Null),
        "representative": reps,
    })
}

fn connection(p: &Pipeline, kind: Kind) -> Result<(Status, Value), CliError> {
    let (space, lines, jets) = (&p.space, &p.lines, &p.jets);
    let fam = match kind {
        Kind::Xi => xi_connection(space, lines, jets).in_module("connection")?,
        Kind::TorsionXi => torsion_xi_connection(space, lines, jets).in_module("connection")?,
        Kind::Lambda => match lambda_connection(space, lines, jets).in_module("connection")? {
            LambdaOutcome::Connection(c) => c,
            LambdaOutcome::Obstructed(r) => return Ok((Status::Obstructed, json!({ "obstruction": obstruction(&r) }))),
        },
    };
    Ok((Status::Ok, json!({ "connection": family(&fam) })))
}

/// Names usable in a substitution file.
struct SubstScope {
    names: HashMap<String, Var>,
    coords: Vec<Var>,
}

impl Scope for SubstScope {
    fn ident(&self, name: &str) -> Option<LaurentPoly> {
        self.names.get(name).map(|v| LaurentPoly::constant(SymExpr::var(*v)))
    }

    fn call(&self, name: &str, args: &[LaurentPoly], pos: Pos) -> Result<LaurentPoly, CliError> {
        let as_coord = |a: &LaurentPoly| -> Result<Var, CliError> {
            let c = a.coeff(0);
            let vars = c.vars();
            match (vars.iter().next(), vars.len()) {
                (Some(v), 1) if c == SymExpr::var(*v) && self.coords.contains(v) => Ok(*v),
                _ => Err(CliError::parse(pos, format!("arguments of `{name}` must be coordinates"))),
            }
        };
        if name == "diff" {
            if args.len() != 2 {
                return Err(CliError::parse(pos, "`diff` takes an expression and a coordinate"));
            }
            let x = as_coord(&args[1])?;
            return Ok(args[0].partial(x));
        }
        let mask = args.iter().map(as_coord).collect::<Result<Vec<_>, _>>()?;
        Ok(LaurentPoly::constant(SymExpr::var(registry::function(name, &mask))))
    }
}

fn read_subst(path: &Path, scope: &SubstScope) -> Result<Assignments, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let mut out = Assignments::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let (lhs, rhs) = line.split_once('=').ok_or_else(|| CliError::parse(Pos { line: n, col: 1 }, "expected `name = expr`"))?;
        let name = lhs.trim();
        let col = lhs.find(name).unwrap_or(0) + 1;
        let var = *scope.names.get(name).ok_or_else(|| CliError::UnknownSymbol { name: name.into(), pos: Pos { line: n, col } })?;
        let expr = parse_expr(&" ".repeat(lhs.chars().count() + 1).chars().chain(rhs.chars()).collect::<String>(), n)?;
        let value = eval(&expr, scope)?;
        if !value.is_lambda_free() {
            return Err(CliError::parse(expr.pos, "substitutions cannot involve lam"));
        }
        out.insert(var, value.coeff(0));
    }
    Ok(out)
}

fn verify_nc(p: &Pipeline, subst: Option<&Path>) -> Result<(Status, Value), CliError> {
    let (space, lines, jets) = (&p.space, &p.lines, &p.jets);
    let conn = if space.is_deformed() {
        torsion_xi_connection(space, lines, jets).in_module("connection")?
    } else {
        match lambda_connection(space, lines, jets).in_module("connection")? {
            LambdaOutcome::Connection(c) => c,
            LambdaOutcome::Obstructed(r) => return Ok((Status::Obstructed, json!({ "obstruction": obstruction(&r) }))),
        }
    };
    let frame = p.frame()?;
    let (structure, assignments) = match subst {
        None => {
            let spec = newton_cartan_preset(space, lines, &frame, &conn).in_module("connection")?;
            (spec.structure, spec.assignments)
        }
        Some(path) => {
            let mut names: HashMap<String, Var> = space.coords.iter().map(|v| (v.name(), *v)).collect();
            for fp in &frame.free_params {
                names.insert(fp.name(), fp.var);
            }
            for v in &conn.free_params {
                names.insert(v.name(), *v);
            }
            let scope = SubstScope { names, coords: space.coords.clone() };
            let assignments = read_subst(path, &scope)?;
            (galilean_structure(&frame).in_module("geometry")?, assignments)
        }
    };
    let compat = impose_compatibility(&conn, &structure, &assignments).in_module("connection")?;
    let report = check_newton_cartan(&compat.structure, &compat.connection).in_module("nc")?;
    let assigned: BTreeMap<String, Value> = assignments.iter().map(|(k, v)| (k.name(), s(v))).collect();
    let residuals: Map<String, Value> = compat.nonzero_residuals().into_iter().map(|(k, v)| (k, s(&v))).collect();
    let status = if report.class == NcClass::Incompatible { Status::Obstructed } else { Status::Ok };
    Ok((
        status,
        json!({
            "family": conn.kind.name(),
            "assignments": assigned,
            "classification": report.class.name(),
            "clock_parallel": report.nabla_theta.is_zero(),
            "metric_parallel": report.nabla_h.is_zero(),
            "kernel_holds": report.kernel_holds(),
            "rank_holds": report.rank_holds(),
            "clock_derivative": two_form(&report.clock_derivative),
            "torsion": tensor(&report.torsion),
            "residuals": residuals,
            "structure": galilean(&compat.structure),
        }),
    ))
}

fn global_vectors(p: &Pipeline, tdeg: u32) -> Result<Value, CliError> {
    let g = global_vector_fields(&p.space, &p.lines, tdeg).in_module("connection")?;
    let closes = bracket_closes(&p.space, &p.lines, &g).in_module("connection")?;
    let pushdowns: Vec<Value> = g.pushdowns.iter().map(|f| exprs(&f.components)).collect();
    Ok(json!({
        "tdeg": tdeg,
        "dimension": g.dimension(),
        "pushdown_rank": g.pushdown_rank(),
        "coordinates": names(&g.coords),
        "pushdowns": pushdowns,
        "brackets_close": closes,
    }))
}

fn discriminants() -> Value {
    let d = quartic_discriminants();
    let cert = d.reduction_certificate();
    json!({
        "variables": names(&d.vars),
        "delta2": s(&d.delta2),
        "delta4": s(&d.delta4),
        "delta6": s(&d.delta6),
        "g3": s(&d.g3),
        "reduction": {
            "c": s(&cert.c),
            "eliminated": s(&cert.eliminated),
            "remainder": s(&cert.remainder),
            "holds": cert.holds(),
        },
    })
}

fn gravity_fix(p: &Pipeline, cocycle: &str, weight: i32) -> Result<Value, CliError> {
    let expr = parse_expr(cocycle, 1)?;
    let f = eval(&expr, &fibre_scope(&p.space))?;
    if f.terms().any(|(_, c)| c.vars().iter().any(|v| v.kind() == VarKind::Coordinate)) {
        return Err(CliError::parse(expr.pos, "a cocycle is a function of the fibre symbols and lam"));
    }
    let fam = match lambda_connection(&p.space, &p.lines, &p.jets).in_module("connection")? {
        LambdaOutcome::Connection(c) => c,
        LambdaOutcome::Obstructed(r) => return Err(CliError::Module { module: "connection", message: format!("Lambda family obstructed ({})", r.tag.name()) }),
    };
    let fix = fix_gravity_from_cocycle(&p.space, &p.lines, &fam, &f, weight).in_module("connection")?;
    Ok(json!({
        "cocycle": f.to_string(),
        "phi_up": exprs(&fix.phi_up),
        "divergence": s(&fix.divergence),
        "connection": family(&fix.family),
    }))
}
