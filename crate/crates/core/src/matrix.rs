//! Dense matrices with [`ScalarPoly`] entries.
//!
//! Small and exact: everything is stored row-major and multiplied the
//! schoolbook way, which is all the pipeline needs (matrix sizes here are
//! the representation dimension or the algebra dimension, both single
//! digits).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::context::{Context, CoordId};
use crate::error::Error;
use crate::poly::{Rat, ScalarPoly};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    ctx: Context,
    rows: usize,
    cols: usize,
    entries: Vec<ScalarPoly>,
}

impl PolyMatrix {
    pub fn zero(ctx: &Context, rows: usize, cols: usize) -> PolyMatrix {
        PolyMatrix {
            ctx: ctx.clone(),
            rows,
            cols,
            entries: vec![ScalarPoly::zero(ctx); rows * cols],
        }
    }

    pub fn identity(ctx: &Context, n: usize) -> PolyMatrix {
        let mut m = PolyMatrix::zero(ctx, n, n);
        for i in 0..n {
            m.set(i, i, ScalarPoly::one(ctx));
        }
        m
    }

    /// Builds from rows, which must be nonempty and rectangular.
    pub fn from_rows(ctx: &Context, rows: Vec<Vec<ScalarPoly>>) -> Result<PolyMatrix> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch);
        }
        let mut ctx = ctx.clone();
        for r in &rows {
            for e in r {
                ctx = ctx.unify(e.context())?;
            }
        }
        let entries = rows.into_iter().flatten().collect();
        Ok(PolyMatrix { ctx, rows: nrows, cols: ncols, entries })
    }

    /// Builds from entry strings in the polynomial grammar.
    pub fn parse_rows(ctx: &Context, rows: &[Vec<String>]) -> Result<PolyMatrix> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| ScalarPoly::parse(ctx, s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        PolyMatrix::from_rows(ctx, parsed)
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn at(&self, row: usize, col: usize) -> &ScalarPoly {
        &self.entries[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: ScalarPoly) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(ScalarPoly::is_zero)
    }

    pub fn checked_add(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch);
        }
        let ctx = self.ctx.unify(&other.ctx)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.checked_add(b))
            .collect::<Result<_>>()?;
        Ok(PolyMatrix { ctx, rows: self.rows, cols: self.cols, entries })
    }

    pub fn checked_mul(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch);
        }
        let ctx = self.ctx.unify(&other.ctx)?;
        let mut out = PolyMatrix::zero(&ctx, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.at(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let cur = out.at(i, j).checked_add(&a.checked_mul(b)?)?;
                    out.set(i, j, cur);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, p: &ScalarPoly) -> PolyMatrix {
        self.map(|e| e * p)
    }

    pub fn scale_rat(&self, r: &Rat) -> PolyMatrix {
        self.map(|e| e.scale(r))
    }

    pub fn pow(&self, exp: u32) -> Result<PolyMatrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch);
        }
        let mut acc = PolyMatrix::identity(&self.ctx, self.rows);
        for _ in 0..exp {
            acc = acc.checked_mul(self)?;
        }
        Ok(acc)
    }

    /// The commutator `self * other - other * self`.
    pub fn commutator(&self, other: &PolyMatrix) -> Result<PolyMatrix> {
        let ab = self.checked_mul(other)?;
        let ba = other.checked_mul(self)?;
        ab.checked_add(&-&ba)
    }

    pub fn map<F: Fn(&ScalarPoly) -> ScalarPoly>(&self, f: F) -> PolyMatrix {
        let entries: Vec<ScalarPoly> = self.entries.iter().map(f).collect();
        let ctx = entries.first().map_or(self.ctx.clone(), |e| e.context().clone());
        PolyMatrix { ctx, rows: self.rows, cols: self.cols, entries }
    }

    pub fn try_map<F: Fn(&ScalarPoly) -> Result<ScalarPoly>>(&self, f: F) -> Result<PolyMatrix> {
        let entries: Vec<ScalarPoly> =
            self.entries.iter().map(f).collect::<Result<_>>()?;
        let ctx = entries.first().map_or(self.ctx.clone(), |e| e.context().clone());
        Ok(PolyMatrix { ctx, rows: self.rows, cols: self.cols, entries })
    }

    /// Entry-wise coordinate substitution.
    pub fn substitute(
        &self,
        bindings: &std::collections::BTreeMap<CoordId, ScalarPoly>,
    ) -> Result<PolyMatrix> {
        self.try_map(|e| e.substitute(bindings))
    }

    /// Entry-wise partial derivative.
    pub fn partial(&self, coord: CoordId) -> PolyMatrix {
        self.map(|e| e.partial(coord))
    }

    pub fn transport(&self, target: &Context) -> Result<PolyMatrix> {
        let entries = self
            .entries
            .iter()
            .map(|e| e.transport(target))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolyMatrix { ctx: target.clone(), rows: self.rows, cols: self.cols, entries })
    }

    pub fn row(&self, i: usize) -> &[ScalarPoly] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

impl Add for &PolyMatrix {
    type Output = PolyMatrix;
    fn add(self, rhs: &PolyMatrix) -> PolyMatrix {
        self.checked_add(rhs).expect("matrix shape or context mismatch in +")
    }
}

impl Sub for &PolyMatrix {
    type Output = PolyMatrix;
    fn sub(self, rhs: &PolyMatrix) -> PolyMatrix {
        self.checked_add(&-rhs).expect("matrix shape or context mismatch in -")
    }
}

impl Mul for &PolyMatrix {
    type Output = PolyMatrix;
    fn mul(self, rhs: &PolyMatrix) -> PolyMatrix {
        self.checked_mul(rhs).expect("matrix shape or context mismatch in *")
    }
}

impl Neg for &PolyMatrix {
    type Output = PolyMatrix;
    fn neg(self) -> PolyMatrix {
        self.map(|e| -e)
    }
}

impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.at(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl Serialize for PolyMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(ScalarPoly::to_string).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}
