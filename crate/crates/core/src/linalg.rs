//! Dense matrices over GF(2^w).
//!
//! Vectors are plain `&[Symbol]` slices; a column vector is a `len x 1`
//! matrix when a matrix is needed. Elimination picks the first nonzero entry
//! as pivot, there is no stability concern over a finite field.

use std::collections::HashSet;
use std::fmt;

use itertools::Itertools;
use thiserror::Error;

use crate::gf::{Field, GfError, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operands belong to different fields")]
    FieldMismatch,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("cauchy points are not pairwise distinct (value {0} repeats)")]
    CauchyCollision(Symbol),
    #[error("cauchy matrix needs {needed} distinct points but the field has only {order}")]
    Capacity { needed: usize, order: u32 },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate index {0}")]
    DuplicateIndex(usize),
    #[error(transparent)]
    Gf(#[from] GfError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Symbol>,
    field: Field,
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "GfMatrix {}x{} over {:?}",
            self.rows, self.cols, self.field
        )?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl GfMatrix {
    pub fn new(
        field: &Field,
        rows: usize,
        cols: usize,
        data: Vec<Symbol>,
    ) -> Result<GfMatrix, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for &x in &data {
            field.element(x as u32)?;
        }
        Ok(GfMatrix {
            rows,
            cols,
            data,
            field: field.clone(),
        })
    }

    pub fn zeros(field: &Field, rows: usize, cols: usize) -> GfMatrix {
        GfMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
            field: field.clone(),
        }
    }

    pub fn identity(field: &Field, size: usize) -> GfMatrix {
        let mut m = GfMatrix::zeros(field, size, size);
        for i in 0..size {
            m.data[i * size + i] = 1;
        }
        m
    }

    pub fn diagonal(field: &Field, diag: &[Symbol]) -> Result<GfMatrix, LinalgError> {
        let n = diag.len();
        let mut m = GfMatrix::zeros(field, n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = field.element(d as u32)?;
        }
        Ok(m)
    }

    pub fn from_rows(field: &Field, rows: &[Vec<Symbol>]) -> Result<GfMatrix, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        GfMatrix::new(field, rows.len(), cols, rows.concat())
    }

    /// A single-column matrix.
    pub fn column(field: &Field, v: &[Symbol]) -> Result<GfMatrix, LinalgError> {
        GfMatrix::new(field, v.len(), 1, v.to_vec())
    }

    /// Cauchy matrix with entry `(i, j) = 1 / (h[i] - f[j])`.
    pub fn cauchy(field: &Field, h: &[Symbol], f: &[Symbol]) -> Result<GfMatrix, LinalgError> {
        let needed = h.len() + f.len();
        if needed as u64 > field.order() as u64 {
            return Err(LinalgError::Capacity {
                needed,
                order: field.order(),
            });
        }
        let mut seen = HashSet::with_capacity(needed);
        for &x in h.iter().chain(f) {
            field.element(x as u32)?;
            if !seen.insert(x) {
                return Err(LinalgError::CauchyCollision(x));
            }
        }
        let mut data = Vec::with_capacity(h.len() * f.len());
        for &hi in h {
            for &fj in f {
                data.push(field.inv(field.sub(hi, fj))?);
            }
        }
        GfMatrix::new(field, h.len(), f.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn data(&self) -> &[Symbol] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Symbol> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Symbol {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: Symbol) {
        debug_assert!(self.field.contains(value as u32));
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[Symbol] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Symbol] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    /// Number of rows containing at least one nonzero entry.
    pub fn nonzero_rows(&self) -> usize {
        (0..self.rows)
            .filter(|&r| self.row(r).iter().any(|&x| x != 0))
            .count()
    }

    fn check_field(&self, other: &GfMatrix) -> Result<(), LinalgError> {
        if self.field != other.field {
            return Err(LinalgError::FieldMismatch);
        }
        Ok(())
    }

    pub fn mul(&self, rhs: &GfMatrix) -> Result<GfMatrix, LinalgError> {
        self.check_field(rhs)?;
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = GfMatrix::zeros(&self.field, self.rows, rhs.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (i, &coef) in self.row(r).iter().enumerate() {
                self.field.mul_add_slice(dst, rhs.row(i), coef);
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[Symbol]) -> Result<Vec<Symbol>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| acc ^ self.field.mul(a, b))
            })
            .collect())
    }

    /// Element-wise sum (XOR).
    pub fn add(&self, rhs: &GfMatrix) -> Result<GfMatrix, LinalgError> {
        self.check_field(rhs)?;
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} plus {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(GfMatrix {
            data,
            ..self.clone()
        })
    }

    pub fn vstack(&self, below: &GfMatrix) -> Result<GfMatrix, LinalgError> {
        self.check_field(below)?;
        if self.cols != below.cols {
            return Err(LinalgError::DimensionMismatch("vstack column count".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(GfMatrix {
            rows: self.rows + below.rows,
            data,
            ..self.clone()
        })
    }

    fn check_indices(indices: &[usize], len: usize) -> Result<(), LinalgError> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in indices {
            if i >= len {
                return Err(LinalgError::IndexOutOfRange { index: i, len });
            }
            if !seen.insert(i) {
                return Err(LinalgError::DuplicateIndex(i));
            }
        }
        Ok(())
    }

    /// Rows `rows` of `self`, in the given order.
    pub fn row_submatrix(&self, rows: &[usize]) -> Result<GfMatrix, LinalgError> {
        GfMatrix::check_indices(rows, self.rows)?;
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Ok(GfMatrix {
            rows: rows.len(),
            data,
            ..self.clone()
        })
    }

    pub fn col_submatrix(&self, cols: &[usize]) -> Result<GfMatrix, LinalgError> {
        GfMatrix::check_indices(cols, self.cols)?;
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(GfMatrix {
            cols: cols.len(),
            data,
            ..self.clone()
        })
    }

    /// Reduced row echelon form in place over the first `upto` columns.
    /// Returns the pivot columns.
    fn reduce(&mut self, upto: usize) -> Vec<usize> {
        let field = self.field.clone();
        let mut pivots = Vec::new();
        let mut prow = 0;
        for c in 0..upto {
            if prow == self.rows {
                break;
            }
            let Some(found) = (prow..self.rows).find(|&r| self.get(r, c) != 0) else {
                continue;
            };
            if found != prow {
                for j in 0..self.cols {
                    self.data.swap(found * self.cols + j, prow * self.cols + j);
                }
            }
            let inv = field.inv(self.get(prow, c)).expect("pivot is nonzero");
            field.scale_slice(self.row_mut(prow), inv);
            let pivot_row = self.row(prow).to_vec();
            for r in 0..self.rows {
                let factor = self.get(r, c);
                if r != prow && factor != 0 {
                    field.mul_add_slice(self.row_mut(r), &pivot_row, factor);
                }
            }
            pivots.push(c);
            prow += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.reduce(m.cols).len()
    }

    pub fn invert(&self) -> Result<GfMatrix, LinalgError> {
        if self.rows != self.cols {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut aug = GfMatrix::zeros(&self.field, n, 2 * n);
        for r in 0..n {
            aug.row_mut(r)[..n].copy_from_slice(self.row(r));
            aug.data[r * 2 * n + n + r] = 1;
        }
        if aug.reduce(n).len() < n {
            return Err(LinalgError::Singular);
        }
        aug.col_submatrix(&(n..2 * n).collect::<Vec<_>>())
    }

    /// Solves `self * X = rhs` for a matrix with full column rank.
    ///
    /// Returns `Ok(None)` when the system is inconsistent and
    /// `Err(Singular)` when `self` does not have full column rank.
    pub fn solve(&self, rhs: &GfMatrix) -> Result<Option<GfMatrix>, LinalgError> {
        self.check_field(rhs)?;
        if rhs.rows != self.rows {
            return Err(LinalgError::DimensionMismatch(
                "right-hand side row count".into(),
            ));
        }
        let (n, m) = (self.cols, rhs.cols);
        let width = n + m;
        let mut aug = GfMatrix::zeros(&self.field, self.rows, width);
        for r in 0..self.rows {
            let row = aug.row_mut(r);
            row[..n].copy_from_slice(self.row(r));
            row[n..].copy_from_slice(rhs.row(r));
        }
        if aug.reduce(n).len() < n {
            return Err(LinalgError::Singular);
        }
        // rows below the pivots must be zero on the right-hand side
        for r in n..aug.rows {
            if aug.row(r)[n..].iter().any(|&x| x != 0) {
                return Ok(None);
            }
        }
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            data.extend_from_slice(&aug.row(r)[n..]);
        }
        Ok(Some(GfMatrix {
            rows: n,
            cols: m,
            data,
            field: self.field.clone(),
        }))
    }

    /// True iff every choice of `2 * gamma` columns is linearly independent.
    ///
    /// Requires `rows == 2 * gamma < cols`. Checked exhaustively over all
    /// column subsets; a row with at least `2 * gamma` zeros is an immediate
    /// failure since those columns give a square block with a zero row.
    pub fn satisfies_criterion2(&self, gamma: usize) -> Result<bool, LinalgError> {
        let width = 2 * gamma;
        if self.rows != width || width >= self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "criterion check needs 2*gamma = {width} rows and more than {width} columns, got {}x{}",
                self.rows, self.cols
            )));
        }
        if gamma == 0 {
            return Ok(true);
        }
        for r in 0..self.rows {
            if self.row(r).iter().filter(|&&x| x == 0).count() >= width {
                return Ok(false);
            }
        }
        for cols in (0..self.cols).combinations(width) {
            if self.col_submatrix(&cols)?.rank() < width {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Default Cauchy evaluation points: `h_i = i`, `f_j = n + j`.
pub fn default_cauchy_points(n: usize, k: usize) -> (Vec<Symbol>, Vec<Symbol>) {
    let h = (0..n).map(|i| i as Symbol).collect();
    let f = (0..k).map(|j| (n + j) as Symbol).collect();
    (h, f)
}
