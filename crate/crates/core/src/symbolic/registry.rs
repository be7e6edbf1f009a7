//! Process-wide symbol table.
//!
//! Every symbol that can appear in a [`Poly`](super::Poly) is a [`Var`], an
//! index into an append-only table. Indices are handed out in registration
//! order and never reused, so the graded-lex term order is stable for the
//! lifetime of the process.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use super::SymExpr;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) u32);

impl Var {
    pub fn index(self) -> u32 {
        self.0
    }

    pub fn name(self) -> String {
        with(|r| r.entries[self.0 as usize].name.clone())
    }

    pub fn kind(self) -> VarKind {
        with(|r| r.entries[self.0 as usize].kind.clone())
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name(), self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarKind {
    /// A coordinate on the moduli space.
    Coordinate,
    /// A family parameter or opaque constant; killed by every coordinate derivative.
    Constant,
    /// A coordinate on the fibres of the twistor space.
    Fibre,
    /// A free function of the coordinates listed in `mask`. `derivs` is the
    /// sorted multi-index of coordinate derivatives already applied to `root`.
    Function { root: Var, derivs: Vec<Var>, mask: Vec<Var> },
}

struct Entry {
    name: String,
    kind: VarKind,
    rule: Option<(SymExpr, Var)>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Key {
    Plain(u8, String),
    Function(String, Vec<Var>),
    Derivative(Var, Vec<Var>),
}

#[derive(Default)]
struct Registry {
    entries: Vec<Entry>,
    index: HashMap<Key, Var>,
}

fn table() -> &'static RwLock<Registry> {
    static TABLE: OnceLock<RwLock<Registry>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(Registry::default()))
}

fn with<T>(f: impl FnOnce(&Registry) -> T) -> T {
    f(&table().read().expect("symbol table poisoned"))
}

fn intern(key: Key, make: impl FnOnce(Var) -> Entry) -> Var {
    if let Some(v) = with(|r| r.index.get(&key).copied()) {
        return v;
    }
    let mut r = table().write().expect("symbol table poisoned");
    if let Some(v) = r.index.get(&key) {
        return *v;
    }
    let v = Var(r.entries.len() as u32);
    let entry = make(v);
    r.entries.push(entry);
    r.index.insert(key, v);
    v
}

fn plain(tag: u8, name: &str, kind: VarKind) -> Var {
    intern(Key::Plain(tag, name.to_string()), |_| Entry { name: name.to_string(), kind, rule: None })
}

pub fn coordinate(name: &str) -> Var {
    plain(0, name, VarKind::Coordinate)
}

pub fn constant(name: &str) -> Var {
    plain(1, name, VarKind::Constant)
}

pub fn fibre(name: &str) -> Var {
    plain(2, name, VarKind::Fibre)
}

/// A free function symbol. Two calls with the same name and mask return the
/// same symbol; the same name with a different mask is a different symbol.
pub fn function(name: &str, mask: &[Var]) -> Var {
    let mut mask = mask.to_vec();
    mask.sort();
    mask.dedup();
    let key = Key::Function(name.to_string(), mask.clone());
    intern(key, |v| Entry {
        name: name.to_string(),
        kind: VarKind::Function { root: v, derivs: Vec::new(), mask },
        rule: None,
    })
}

/// Install `d_a(var) = coeff * d_a(base)` for every coordinate `a`.
pub fn set_derivative_rule(var: Var, coeff: SymExpr, base: Var) {
    let mut r = table().write().expect("symbol table poisoned");
    r.entries[var.0 as usize].rule = Some((coeff, base));
}

pub fn derivative_rule(var: Var) -> Option<(SymExpr, Var)> {
    with(|r| r.entries[var.0 as usize].rule.clone())
}

/// The symbol for `d_coord(var)`, or `None` when the derivative vanishes.
/// Only meaningful for function symbols without a rule.
pub fn derivative_symbol(var: Var, coord: Var) -> Option<Var> {
    let VarKind::Function { root, derivs, mask } = var.kind() else {
        return None;
    };
    if mask.binary_search(&coord).is_err() {
        return None;
    }
    let mut multi = derivs;
    let at = multi.partition_point(|c| *c <= coord);
    multi.insert(at, coord);
    let key = Key::Derivative(root, multi.clone());
    // Names are resolved before `intern` takes the write lock.
    let list: Vec<String> = multi.iter().map(|c| c.name()).collect();
    let name = format!("D[{}]({})", list.join(","), root.name());
    Some(intern(key, |_| Entry {
        name,
        kind: VarKind::Function { root, derivs: multi, mask },
        rule: None,
    }))
}

/// Coordinates the symbol may depend on.
pub fn dependencies(var: Var) -> Vec<Var> {
    match var.kind() {
        VarKind::Coordinate => vec![var],
        VarKind::Function { mask, .. } => mask,
        VarKind::Constant | VarKind::Fibre => Vec::new(),
    }
}

/// Root function symbol of a derivative symbol, with its multi-index.
pub fn root_of(var: Var) -> Option<(Var, Vec<Var>)> {
    match var.kind() {
        VarKind::Function { root, derivs, .. } => Some((root, derivs)),
        _ => None,
    }
}

pub fn derivative_multi(root: Var, multi: &[Var]) -> Option<Var> {
    let mut v = root;
    for c in multi {
        v = derivative_symbol(v, *c)?;
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_idempotent() {
        let a = coordinate("reg_t");
        assert_eq!(a, coordinate("reg_t"));
        assert_ne!(a, constant("reg_t"));
        let f = function("reg_f", &[a]);
        assert_eq!(f, function("reg_f", &[a, a]));
    }

    #[test]
    fn derivative_multi_index_is_sorted() {
        let t = coordinate("reg_u");
        let y = coordinate("reg_v");
        let f = function("reg_g", &[t, y]);
        let fty = derivative_symbol(derivative_symbol(f, t).unwrap(), y).unwrap();
        let fyt = derivative_symbol(derivative_symbol(f, y).unwrap(), t).unwrap();
        assert_eq!(fty, fyt);
        let only_t = function("reg_h", &[t]);
        assert!(derivative_symbol(only_t, y).is_none());
    }
}
