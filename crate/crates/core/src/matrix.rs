//! Dense row-major matrices of [`BigReal`] with basis tags on both sides.
//!
//! Row and column spaces are tagged so that products between, say, a
//! moment-coordinate space and a Legendre-coordinate space cannot be formed
//! by accident.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rug::{Assign, Float};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::precision::{to_decimal, BigReal, PrecisionContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Coefficients with respect to L_1, L_2, … in L²(0,1).
    Legendre,
    /// Unit vectors e_1, e_2, … of ℓ², indexing the moments ∫ t^{i−1} z(t) dt.
    Moment,
    /// Weighted point values at quadrature nodes (Nyström).
    Nodal,
    /// Plain ℓ² coordinates with no further meaning.
    Coordinate,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Legendre => "legendre",
            Basis::Moment => "moment",
            Basis::Nodal => "nodal",
            Basis::Coordinate => "coordinate",
        }
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legendre" => Ok(Basis::Legendre),
            "moment" => Ok(Basis::Moment),
            "nodal" => Ok(Basis::Nodal),
            "coordinate" => Ok(Basis::Coordinate),
            other => Err(Error::InvalidArgument(format!("unknown basis tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    pub row_basis: Basis,
    pub col_basis: Basis,
    ctx: PrecisionContext,
    data: Vec<BigReal>,
}

impl DenseMatrix {
    pub fn zeros(
        ctx: &PrecisionContext,
        rows: usize,
        cols: usize,
        row_basis: Basis,
        col_basis: Basis,
    ) -> Self {
        Self {
            rows,
            cols,
            row_basis,
            col_basis,
            ctx: *ctx,
            data: vec![ctx.zero(); rows * cols],
        }
    }

    pub fn identity(ctx: &PrecisionContext, n: usize, basis: Basis) -> Self {
        let mut m = Self::zeros(ctx, n, n, basis, basis);
        for i in 0..n {
            m.data[i * n + i] = ctx.one();
        }
        m
    }

    pub fn diagonal(ctx: &PrecisionContext, diag: Vec<BigReal>, basis: Basis) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(ctx, n, n, basis, basis);
        for (i, d) in diag.into_iter().enumerate() {
            m.data[i * n + i] = ctx.convert(&d);
        }
        m
    }

    /// Fill entry (i, j) from `f(i, j)`, 0-based, rows in parallel when allowed.
    pub fn from_fn<F>(
        ctx: &PrecisionContext,
        rows: usize,
        cols: usize,
        row_basis: Basis,
        col_basis: Basis,
        exec: Execution,
        f: F,
    ) -> Self
    where
        F: Fn(usize, usize) -> BigReal + Sync + Send,
    {
        let row_data = exec.map_range(rows, |i| {
            (0..cols).map(|j| ctx.convert(&f(i, j))).collect::<Vec<_>>()
        });
        Self::from_rows(ctx, row_data, row_basis, col_basis)
            .expect("rows produced with uniform length")
    }

    pub fn from_rows(
        ctx: &PrecisionContext,
        rows: Vec<Vec<BigReal>>,
        row_basis: Basis,
        col_basis: Basis,
    ) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows
            .into_iter()
            .flatten()
            .map(|x| ctx.convert(&x))
            .collect();
        Ok(Self {
            rows: r,
            cols: c,
            row_basis,
            col_basis,
            ctx: *ctx,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn context(&self) -> &PrecisionContext {
        &self.ctx
    }

    pub fn get(&self, i: usize, j: usize) -> &BigReal {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigReal) {
        self.data[i * self.cols + j] = self.ctx.convert(&v);
    }

    pub fn row(&self, i: usize) -> &[BigReal] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<BigReal> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn columns(&self) -> Vec<Vec<BigReal>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(&self.ctx, self.cols, self.rows, self.col_basis, self.row_basis);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j).clone();
            }
        }
        t
    }

    /// Leading `rows × cols` block.
    pub fn leading(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows > self.rows || cols > self.cols {
            return Err(Error::Dimension(format!(
                "leading block {rows}x{cols} of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let mut out = Self::zeros(&self.ctx, rows, cols, self.row_basis, self.col_basis);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self.get(i, j).clone();
            }
        }
        Ok(out)
    }

    /// Rescale to another context; basis tags are kept.
    pub fn with_context(&self, ctx: &PrecisionContext) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            row_basis: self.row_basis,
            col_basis: self.col_basis,
            ctx: *ctx,
            data: self.data.iter().map(|x| ctx.convert(x)).collect(),
        }
    }

    pub fn scale(&self, s: &BigReal) -> Self {
        let mut out = self.clone();
        for x in &mut out.data {
            *x *= s;
        }
        out
    }

    /// self − other, tags must agree.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> BigReal {
        let mut m = self.ctx.zero();
        for x in &self.data {
            let a = Float::with_val(self.ctx.bits(), x.abs_ref());
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<BigReal> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut m = self.ctx.zero();
        for (x, y) in self.data.iter().zip(&other.data) {
            let d = Float::with_val(self.ctx.bits(), x - y).abs();
            if d > m {
                m = d;
            }
        }
        Ok(m)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        if self.row_basis != other.row_basis {
            return Err(Error::Basis {
                outer: self.row_basis,
                inner: other.row_basis,
            });
        }
        if self.col_basis != other.col_basis {
            return Err(Error::Basis {
                outer: self.col_basis,
                inner: other.col_basis,
            });
        }
        Ok(())
    }

    /// MᵀM, in the column basis on both sides.
    pub fn gram(&self, exec: Execution) -> Self {
        compose_with(&self.transpose(), self, exec).expect("transpose chains with itself")
    }

    pub fn mat_vec(&self, x: &[BigReal]) -> Result<Vec<BigReal>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        let prec = self.ctx.bits();
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = Float::new(prec);
                let mut tmp = Float::new(prec);
                for (a, b) in self.row(i).iter().zip(x) {
                    tmp.assign(a * b);
                    acc += &tmp;
                }
                acc
            })
            .collect())
    }

    /// Row-major CSV: an optional `#` header line with the shape, tags and
    /// precision, then one line per row with full-precision decimal strings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# rows={},cols={},row_basis={},col_basis={},bits={}",
            self.rows,
            self.cols,
            self.row_basis.as_str(),
            self.col_basis.as_str(),
            self.ctx.bits()
        )?;
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(to_decimal).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(ctx: &PrecisionContext, r: R) -> Result<Self> {
        let mut row_basis = Basis::Coordinate;
        let mut col_basis = Basis::Coordinate;
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.trim().split(',') {
                    match field.split_once('=') {
                        Some(("row_basis", v)) => row_basis = v.parse()?,
                        Some(("col_basis", v)) => col_basis = v.parse()?,
                        _ => {}
                    }
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| ctx.parse(s))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        Self::from_rows(ctx, rows, row_basis, col_basis)
    }
}

/// Matrix product `outer · inner` at the outer matrix's precision.
pub fn compose(outer: &DenseMatrix, inner: &DenseMatrix) -> Result<DenseMatrix> {
    compose_with(outer, inner, Execution::default())
}

pub fn compose_with(outer: &DenseMatrix, inner: &DenseMatrix, exec: Execution) -> Result<DenseMatrix> {
    if outer.cols != inner.rows {
        return Err(Error::Dimension(format!(
            "cannot compose {}x{} after {}x{}",
            outer.rows, outer.cols, inner.rows, inner.cols
        )));
    }
    if outer.col_basis != inner.row_basis {
        return Err(Error::Basis {
            outer: outer.col_basis,
            inner: inner.row_basis,
        });
    }
    let ctx = outer.ctx;
    let prec = ctx.bits();
    let inner_cols = inner.columns();
    let rows = exec.map_range(outer.rows, |i| {
        let a = outer.row(i);
        let mut tmp = Float::new(prec);
        inner_cols
            .iter()
            .map(|col| {
                let mut acc = Float::new(prec);
                for (x, y) in a.iter().zip(col) {
                    tmp.assign(x * y);
                    acc += &tmp;
                }
                acc
            })
            .collect::<Vec<_>>()
    });
    DenseMatrix::from_rows(&ctx, rows, outer.row_basis, inner.col_basis).map(|mut m| {
        m.rows = outer.rows;
        m.cols = inner.cols;
        m
    })
}
