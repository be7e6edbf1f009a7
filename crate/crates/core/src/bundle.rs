//! Splitting types of holomorphic vector bundles on the projective line and
//! the Cech cohomology bookkeeping derived from them.

use std::fmt;

use crate::symbolic::{LMatrix, Q, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("determinant of the patching matrix is not a single power of lam: {0}")]
    NotMonomialDeterminant(String),
    #[error("a bundle type needs at least one summand")]
    Empty,
}

/// `O(n_1) + ... + O(n_k)` with `n_1 >= ... >= n_k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BundleType(Vec<i32>);

impl BundleType {
    pub fn new(mut degrees: Vec<i32>) -> Result<Self, BundleError> {
        if degrees.is_empty() {
            return Err(BundleError::Empty);
        }
        degrees.sort_by(|a, b| b.cmp(a));
        Ok(BundleType(degrees))
    }

    pub fn degrees(&self) -> &[i32] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> i32 {
        self.0.iter().sum()
    }

    pub fn spread(&self) -> i32 {
        self.0[0] - self.0[self.0.len() - 1]
    }

    pub fn is_balanced(&self) -> bool {
        self.spread() <= 1
    }

    pub fn h0(&self) -> usize {
        self.0.iter().map(|n| h0(*n)).sum()
    }

    pub fn h1(&self) -> usize {
        self.0.iter().map(|n| h1(*n)).sum()
    }

    /// `h^0` of the endomorphism bundle.
    pub fn h0_endomorphisms(&self) -> usize {
        endomorphism_degrees(&self.0).iter().map(|n| h0(*n)).sum()
    }

    /// `h^0` of `N (x) Sym^2 N*`.
    pub fn h0_sym2_dual(&self) -> usize {
        sym2_dual_degrees(&self.0).iter().map(|(_, _, n)| h0(*n)).sum()
    }

    pub fn h1_sym2_dual(&self) -> usize {
        sym2_dual_degrees(&self.0).iter().map(|(_, _, n)| h1(*n)).sum()
    }
}

impl fmt::Display for BundleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Dimension of global sections of `O(n)`.
pub fn h0(n: i32) -> usize {
    (n + 1).max(0) as usize
}

/// Dimension of first cohomology of `O(n)`.
pub fn h1(n: i32) -> usize {
    (-n - 1).max(0) as usize
}

/// Degrees `n_i - n_j` of the entries of `N (x) N*`, row major.
pub fn endomorphism_degrees(n: &[i32]) -> Vec<i32> {
    n.iter().flat_map(|a| n.iter().map(move |b| a - b)).collect()
}

/// Entries `(i, (j, k), n_i - n_j - n_k)` of `N (x) Sym^2 N*` with `j <= k`.
pub fn sym2_dual_degrees(n: &[i32]) -> Vec<(usize, (usize, usize), i32)> {
    let mut out = Vec::new();
    for (i, ni) in n.iter().enumerate() {
        for j in 0..n.len() {
            for k in j..n.len() {
                out.push((i, (j, k), ni - n[j] - n[k]));
            }
        }
    }
    out
}

/// Unordered pairs `(j, k)` with `j <= k`, in the order used for symmetric slots.
pub fn symmetric_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|j| (j..k).map(move |l| (j, l))).collect()
}

/// Monomial basis `lam^p`, `0 <= p <= n`, of sections of `O(n)` over `U`.
pub fn h0_basis(n: i32) -> Vec<i32> {
    (0..=n.max(-1)).collect()
}

/// `w` such that `det F = unit * lam^(-w)`, so the bundle has degree `w`.
pub fn det_winding(f: &LMatrix, sample: &dyn Fn(Var) -> Option<Q>) -> Result<i32, BundleError> {
    let det = f.det();
    let det = det.eval(sample).map_err(|e| BundleError::NotMonomialDeterminant(e.to_string()))?;
    let mut terms = det.terms();
    match (terms.next(), terms.next()) {
        (Some((p, _)), None) => Ok(-p),
        _ => Err(BundleError::NotMonomialDeterminant(det.to_string())),
    }
}

/// Rank-`k` types of total degree `d` with spread at most `max_spread`,
/// most balanced first and lexicographic among equal spreads.
pub fn candidate_types(k: usize, d: i32, max_spread: i32) -> Vec<BundleType> {
    let mut out = Vec::new();
    let lo = d.div_euclid(k as i32) - max_spread;
    let hi = d.div_euclid(k as i32) + max_spread + 1;
    let mut cur = Vec::with_capacity(k);
    fill(k, d, hi, lo, &mut cur, &mut out);
    let mut types: Vec<BundleType> =
        out.into_iter().map(|v| BundleType(v)).filter(|t| t.spread() <= max_spread).collect();
    types.sort_by(|a, b| a.spread().cmp(&b.spread()).then_with(|| a.0.cmp(&b.0)));
    types.dedup();
    types
}

fn fill(k: usize, remaining: i32, max_next: i32, lo: i32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
    if cur.len() == k {
        if remaining == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let left = (k - cur.len()) as i32;
    for n in (lo..=max_next).rev() {
        // The rest are at most `n` each and at least `lo` each.
        if n * left < remaining || lo * left > remaining {
            continue;
        }
        cur.push(n);
        fill(k, remaining - n, n, lo, cur, out);
        cur.pop();
    }
}
