use std::collections::HashMap;
use std::fmt;

use super::expr::SymExpr;
use super::laurent::LaurentPoly;
use super::registry::Var;
use super::SymError;

/// Dense matrix of Laurent polynomials, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<LaurentPoly>,
}

impl LMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        LMatrix { rows, cols, data: vec![LaurentPoly::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.set(i, i, LaurentPoly::constant(SymExpr::one()));
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<LaurentPoly>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        LMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn diagonal_powers(powers: &[i32]) -> Self {
        let mut m = Self::zero(powers.len(), powers.len());
        for (i, p) in powers.iter().enumerate() {
            m.set(i, i, LaurentPoly::lambda_pow(*p));
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> &LaurentPoly {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: LaurentPoly) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> impl Iterator<Item = &LaurentPoly> {
        self.data.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(LaurentPoly::is_zero)
    }

    pub fn mul(&self, other: &LMatrix) -> LMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = LMatrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = LaurentPoly::zero();
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b));
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add(&self, other: &LMatrix) -> LMatrix {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &LMatrix) -> LMatrix {
        self.zip(other, |a, b| a.sub(b))
    }

    fn zip(&self, other: &LMatrix, f: impl Fn(&LaurentPoly, &LaurentPoly) -> LaurentPoly) -> LMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        LMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect() }
    }

    pub fn neg(&self) -> LMatrix {
        self.map(LaurentPoly::neg)
    }

    pub fn scale(&self, c: &SymExpr) -> LMatrix {
        self.map(|e| e.scale(c))
    }

    pub fn map(&self, f: impl Fn(&LaurentPoly) -> LaurentPoly) -> LMatrix {
        LMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn try_map(&self, f: impl Fn(&LaurentPoly) -> Result<LaurentPoly, SymError>) -> Result<LMatrix, SymError> {
        let data = self.data.iter().map(f).collect::<Result<_, _>>()?;
        Ok(LMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn partial(&self, coord: Var) -> LMatrix {
        self.map(|e| e.partial(coord))
    }

    pub fn substitute(&self, map: &HashMap<Var, SymExpr>) -> Result<LMatrix, SymError> {
        self.try_map(|e| e.substitute(map))
    }

    pub fn transpose(&self) -> LMatrix {
        let mut out = LMatrix::zero(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> LMatrix {
        let mut data = Vec::with_capacity((self.rows - 1) * (self.cols - 1));
        for i in (0..self.rows).filter(|i| *i != skip_row) {
            for j in (0..self.cols).filter(|j| *j != skip_col) {
                data.push(self.get(i, j).clone());
            }
        }
        LMatrix { rows: self.rows - 1, cols: self.cols - 1, data }
    }

    /// Determinant by cofactor expansion along the sparsest row.
    pub fn det(&self) -> LaurentPoly {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        match self.rows {
            0 => LaurentPoly::constant(SymExpr::one()),
            1 => self.get(0, 0).clone(),
            2 => self.get(0, 0).mul(self.get(1, 1)).sub(&self.get(0, 1).mul(self.get(1, 0))),
            n => {
                let row = (0..n).max_by_key(|i| (0..n).filter(|j| self.get(*i, *j).is_zero()).count()).unwrap();
                let mut acc = LaurentPoly::zero();
                for j in 0..n {
                    let e = self.get(row, j);
                    if e.is_zero() {
                        continue;
                    }
                    let term = e.mul(&self.minor(row, j).det());
                    acc = if (row + j) % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
                }
                acc
            }
        }
    }

    pub fn adjugate(&self) -> LMatrix {
        let n = self.rows;
        let mut out = LMatrix::zero(n, n);
        if n == 1 {
            out.set(0, 0, LaurentPoly::constant(SymExpr::one()));
            return out;
        }
        for i in 0..n {
            for j in 0..n {
                let c = self.minor(i, j).det();
                out.set(j, i, if (i + j) % 2 == 0 { c } else { c.neg() });
            }
        }
        out
    }

    /// Inverse when the determinant is a nonzero lam-free expression.
    pub fn inverse_lambda_free_det(&self) -> Option<LMatrix> {
        let det = self.det();
        if !det.is_lambda_free() || det.is_zero() {
            return None;
        }
        let inv = det.coeff(0).inv().ok()?;
        Some(self.adjugate().map(|e| e.scale(&inv)))
    }
}

impl fmt::Display for LMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.rows {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str("[")?;
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

/// Dense matrix of expressions, used for frames and coordinate bases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<SymExpr>,
}

impl SMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SMatrix { rows, cols, data: vec![SymExpr::zero(); rows * cols] }
    }

    pub fn get(&self, i: usize, j: usize) -> &SymExpr {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: SymExpr) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_laurent(&self) -> LMatrix {
        let rows = (0..self.rows).map(|i| (0..self.cols).map(|j| LaurentPoly::constant(self.get(i, j).clone())).collect()).collect();
        LMatrix::from_rows(rows)
    }

    /// Inverse by Gauss-Jordan; `None` when singular.
    pub fn inverse(&self) -> Option<SMatrix> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = SMatrix::zero(n, n);
        for i in 0..n {
            inv.set(i, i, SymExpr::one());
        }
        for col in 0..n {
            let pr = (col..n).filter(|r| !a.get(*r, col).is_zero()).min_by_key(|r| (!a.get(*r, col).is_constant(), a.get(*r, col).weight()))?;
            if pr != col {
                for j in 0..n {
                    let (x, y) = (a.get(col, j).clone(), a.get(pr, j).clone());
                    a.set(col, j, y);
                    a.set(pr, j, x);
                    let (x, y) = (inv.get(col, j).clone(), inv.get(pr, j).clone());
                    inv.set(col, j, y);
                    inv.set(pr, j, x);
                }
            }
            let p = a.get(col, col).inv().ok()?;
            for j in 0..n {
                a.set(col, j, a.get(col, j) * &p);
                inv.set(col, j, inv.get(col, j) * &p);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_zero() {
                    continue;
                }
                let f = a.get(r, col).clone();
                for j in 0..n {
                    a.set(r, j, a.get(r, j) - &f * a.get(col, j));
                    inv.set(r, j, inv.get(r, j) - &f * inv.get(col, j));
                }
            }
        }
        Some(inv)
    }
}
