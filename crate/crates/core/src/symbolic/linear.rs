//! Sparse Gauss-Jordan elimination over [`SymExpr`].

use std::collections::{BTreeMap, BTreeSet};

use super::expr::SymExpr;

#[derive(Clone, Debug, Default)]
pub struct Row {
    pub coeffs: BTreeMap<usize, SymExpr>,
    pub rhs: SymExpr,
    /// Caller-defined tag carried through elimination.
    pub label: usize,
}

impl Row {
    pub fn new(label: usize) -> Self {
        Row { coeffs: BTreeMap::new(), rhs: SymExpr::zero(), label }
    }

    pub fn add_coeff(&mut self, col: usize, c: &SymExpr) {
        if c.is_zero() {
            return;
        }
        let e = self.coeffs.entry(col).or_default();
        *e = e.add(c);
        if e.is_zero() {
            self.coeffs.remove(&col);
        }
    }
}

/// An unknown expressed through the free unknowns:
/// `value = constant + sum coeff * x_free`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Affine {
    pub constant: SymExpr,
    pub terms: Vec<(usize, SymExpr)>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub ncols: usize,
    /// Free columns, in the order they were found.
    pub free: Vec<usize>,
    values: Vec<Affine>,
    /// Rows reduced to `0 = residual` with nonzero residual.
    pub inconsistent: Vec<(usize, SymExpr)>,
}

impl Solution {
    pub fn is_consistent(&self) -> bool {
        self.inconsistent.is_empty()
    }

    pub fn value(&self, col: usize) -> &Affine {
        &self.values[col]
    }

    pub fn rank(&self) -> usize {
        self.ncols - self.free.len()
    }
}

/// Solves the system, trying pivots column by column in `order`. Columns late
/// in the order are the ones left free when there is a choice.
pub fn solve(ncols: usize, rows: Vec<Row>, order: &[usize]) -> Solution {
    let mut rows = rows;
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ncols];
    for (r, row) in rows.iter().enumerate() {
        for c in row.coeffs.keys() {
            col_rows[*c].insert(r);
        }
    }
    let mut is_pivot_row = vec![false; rows.len()];
    let mut pivot_of: Vec<Option<usize>> = vec![None; ncols];
    let mut seen = vec![false; ncols];

    for &col in order.iter().chain((0..ncols).collect::<Vec<_>>().iter()) {
        if seen[col] {
            continue;
        }
        seen[col] = true;
        let pick = col_rows[col]
            .iter()
            .copied()
            .filter(|r| !is_pivot_row[*r])
            .min_by_key(|r| {
                let c = &rows[*r].coeffs[&col];
                (!c.is_constant(), c.weight(), rows[*r].coeffs.len(), *r)
            });
        let Some(pr) = pick else { continue };
        let inv = rows[pr].coeffs[&col].inv().expect("pivot is nonzero");
        if !inv.is_one() {
            let row = &mut rows[pr];
            for v in row.coeffs.values_mut() {
                *v = v.mul(&inv);
            }
            row.rhs = row.rhs.mul(&inv);
        }
        is_pivot_row[pr] = true;
        pivot_of[col] = Some(pr);
        let pivot = rows[pr].clone();
        let targets: Vec<usize> = col_rows[col].iter().copied().filter(|r| *r != pr).collect();
        for r in targets {
            let factor = rows[r].coeffs[&col].clone();
            let row = &mut rows[r];
            for (c, v) in &pivot.coeffs {
                let had = row.coeffs.contains_key(c);
                row.add_coeff(*c, &factor.mul(v).neg());
                let has = row.coeffs.contains_key(c);
                if had && !has {
                    col_rows[*c].remove(&r);
                } else if !had && has {
                    col_rows[*c].insert(r);
                }
            }
            row.rhs = row.rhs.sub(&factor.mul(&pivot.rhs));
        }
    }

    let free: Vec<usize> = order
        .iter()
        .chain((0..ncols).collect::<Vec<_>>().iter())
        .copied()
        .filter(|c| pivot_of[*c].is_none())
        .collect::<Vec<_>>();
    let mut dedup = BTreeSet::new();
    let free: Vec<usize> = free.into_iter().filter(|c| dedup.insert(*c)).collect();

    let mut values = vec![Affine { constant: SymExpr::zero(), terms: Vec::new() }; ncols];
    for c in &free {
        values[*c] = Affine { constant: SymExpr::zero(), terms: vec![(*c, SymExpr::one())] };
    }
    for col in 0..ncols {
        if let Some(r) = pivot_of[col] {
            let row = &rows[r];
            let terms = row.coeffs.iter().filter(|(c, _)| **c != col).map(|(c, v)| (*c, v.neg())).collect();
            values[col] = Affine { constant: row.rhs.clone(), terms };
        }
    }
    let inconsistent = rows
        .iter()
        .enumerate()
        .filter(|(r, row)| !is_pivot_row[*r] && row.coeffs.is_empty() && !row.rhs.is_zero())
        .map(|(_, row)| (row.label, row.rhs.clone()))
        .collect();
    Solution { ncols, free, values, inconsistent }
}
