use std::collections::HashMap;

use super::{ConnectionError, ConnectionFamily};
use crate::moduli::{TwistorLines, TwistorSpace};
use crate::symbolic::{laurent_substitute, LaurentPoly, SymExpr, Var};

/// Gravitational field read off a weight `-3` cocycle and the Lambda family
/// with it substituted.
#[derive(Clone, Debug)]
pub struct GravityFix {
    /// `phi^{0'}`, `phi^{1'}`.
    pub phi_up: [SymExpr; 2],
    /// `d_{x^{1'}} phi^{0'} + d_{x^{0'}} phi^{1'}`; zero for every cocycle.
    pub divergence: SymExpr,
    pub family: ConnectionFamily,
}

/// Reads the field off the `lam^-2` and `lam^-1` coefficients of the
/// restricted cocycle `f`, raises the spinor index with `pi . dpi = -dlam`,
/// and substitutes `phi0 = phi^{1'}`, `phi1 = phi^{0'}` into `family`.
pub fn fix_gravity_from_cocycle(
    space: &TwistorSpace,
    lines: &TwistorLines,
    family: &ConnectionFamily,
    f: &LaurentPoly,
    weight: i32,
) -> Result<GravityFix, ConnectionError> {
    if weight != -3 {
        return Err(ConnectionError::WeightMismatch { expected: -3, found: weight });
    }
    let spatial = space
        .rows
        .iter()
        .find(|r| r.degree == 1)
        .ok_or_else(|| ConnectionError::Unsupported("no O(1) row".into()))?;
    let coord = |p: i32| -> Result<Var, ConnectionError> {
        spatial
            .base_section
            .coeff(p)
            .vars()
            .into_iter()
            .next()
            .ok_or_else(|| ConnectionError::Unsupported("O(1) row has no coordinate".into()))
    };
    let (x0, x1) = (coord(0)?, coord(1)?);
    let restricted = laurent_substitute(f, &lines.substitution(space))?;
    let phi_lower0 = restricted.coeff(-2).neg();
    let phi_lower1 = restricted.coeff(-1).neg();
    let phi_up = [phi_lower1, phi_lower0.neg()];
    let divergence = phi_up[0].partial(x1).add(&phi_up[1].partial(x0));
    let mut map = HashMap::new();
    for (name, value) in [("phi0", &phi_up[1]), ("phi1", &phi_up[0])] {
        let v = family.param(name).ok_or_else(|| ConnectionError::MissingParameter(name.into()))?;
        map.insert(v, value.clone());
    }
    let family = family.substitute(&map)?;
    Ok(GravityFix { phi_up, divergence, family })
}
