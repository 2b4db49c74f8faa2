//! Affine matrix expressions over scalar decision variables.
//!
//! Every entry of a [`MatrixExpr`] is an affine form `constant + sum
//! coeff * x[idx]` over the problem's flattened variable vector. Blocks,
//! transposes, and constant multiplications keep expressions affine,
//! which is all the design inequalities need.

use nalgebra::DMatrix;

/// Affine scalar form. Terms are kept sorted by variable index with no
/// duplicates and no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self {
            constant: 0.0,
            terms: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn variable(idx: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(idx, 1.0)],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &LinExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.constant += other.constant * s;
        let mut merged = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut a, mut b) = (0, 0);
        while a < self.terms.len() && b < other.terms.len() {
            let (ia, ca) = self.terms[a];
            let (ib, cb) = other.terms[b];
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    merged.push((ia, ca));
                    a += 1;
                }
                std::cmp::Ordering::Greater => {
                    merged.push((ib, cb * s));
                    b += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = ca + cb * s;
                    if c != 0.0 {
                        merged.push((ia, c));
                    }
                    a += 1;
                    b += 1;
                }
            }
        }
        merged.extend_from_slice(&self.terms[a..]);
        merged.extend(other.terms[b..].iter().map(|&(i, c)| (i, c * s)));
        self.terms = merged;
    }

    /// Evaluate at a full assignment of the scalar variables.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Largest absolute coefficient, including the constant.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .iter()
            .map(|&(_, c)| c.abs())
            .fold(self.constant.abs(), f64::max)
    }

    /// Sum of `|coeff * x|` plus `|constant|`; a backward-error scale.
    pub fn magnitude_at(&self, x: &[f64]) -> f64 {
        self.constant.abs()
            + self
                .terms
                .iter()
                .map(|&(i, c)| (c * x[i]).abs())
                .sum::<f64>()
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    fn approx_eq(&self, other: &LinExpr, tol: f64) -> bool {
        let scale = self.max_abs_coeff().max(other.max_abs_coeff()).max(1.0);
        let mut diff = self.clone();
        diff.add_assign_scaled(other, -1.0);
        diff.constant.abs() <= tol * scale
            && diff.terms.iter().all(|&(_, c)| c.abs() <= tol * scale)
    }
}

/// Dense matrix of affine forms, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExpr {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl MatrixExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![LinExpr::zero(); rows * cols],
        }
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        let mut e = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                *e.entry_mut(i, j) = LinExpr::constant(m[(i, j)]);
            }
        }
        e
    }

    pub fn identity(n: usize, scale: f64) -> Self {
        let mut e = Self::zeros(n, n);
        for i in 0..n {
            *e.entry_mut(i, i) = LinExpr::constant(scale);
        }
        e
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<LinExpr>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).clone();
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e = e.scaled(s);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix expression shape mismatch in add"
        );
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(other.entries.iter()) {
            a.add_assign_scaled(b, 1.0);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix expression shape mismatch in sub"
        );
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(other.entries.iter()) {
            a.add_assign_scaled(b, -1.0);
        }
        out
    }

    /// Constant matrix times affine expression.
    pub fn mul_left(m: &DMatrix<f64>, expr: &Self) -> Self {
        assert_eq!(m.ncols(), expr.rows, "shape mismatch in mul_left");
        let mut out = Self::zeros(m.nrows(), expr.cols);
        for i in 0..m.nrows() {
            for j in 0..expr.cols {
                let acc = out.entry_mut(i, j);
                for k in 0..expr.rows {
                    let c = m[(i, k)];
                    if c != 0.0 {
                        acc.add_assign_scaled(expr.entry(k, j), c);
                    }
                }
            }
        }
        out
    }

    /// Affine expression times constant matrix.
    pub fn mul_right(expr: &Self, m: &DMatrix<f64>) -> Self {
        assert_eq!(expr.cols, m.nrows(), "shape mismatch in mul_right");
        let mut out = Self::zeros(expr.rows, m.ncols());
        for i in 0..expr.rows {
            for j in 0..m.ncols() {
                let acc = out.entry_mut(i, j);
                for k in 0..expr.cols {
                    let c = m[(k, j)];
                    if c != 0.0 {
                        acc.add_assign_scaled(expr.entry(i, k), c);
                    }
                }
            }
        }
        out
    }

    /// One row of the expression as a `1 x cols` expression.
    pub fn row(&self, i: usize) -> Self {
        assert!(i < self.rows);
        let mut out = Self::zeros(1, self.cols);
        for j in 0..self.cols {
            *out.entry_mut(0, j) = self.entry(i, j).clone();
        }
        out
    }

    /// Assemble a block matrix. All blocks in a block-row must share
    /// heights; all blocks in a block-column must share widths.
    pub fn from_blocks(blocks: &[&[&MatrixExpr]]) -> Self {
        assert!(!blocks.is_empty() && !blocks[0].is_empty());
        let block_cols = blocks[0].len();
        let row_heights: Vec<usize> = blocks.iter().map(|r| r[0].nrows()).collect();
        let col_widths: Vec<usize> = blocks[0].iter().map(|b| b.ncols()).collect();
        for row in blocks {
            assert_eq!(row.len(), block_cols, "ragged block rows");
            for (b, &w) in row.iter().zip(col_widths.iter()) {
                assert_eq!(b.ncols(), w, "inconsistent block widths");
                assert_eq!(b.nrows(), row[0].nrows(), "inconsistent block heights");
            }
        }
        let total_rows: usize = row_heights.iter().sum();
        let total_cols: usize = col_widths.iter().sum();
        let mut out = Self::zeros(total_rows, total_cols);
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, block) in row.iter().enumerate() {
                for i in 0..block.nrows() {
                    for j in 0..block.ncols() {
                        *out.entry_mut(r0 + i, c0 + j) = block.entry(i, j).clone();
                    }
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        out
    }

    /// Evaluate every entry at an assignment.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(x))
    }

    /// Largest absolute coefficient over all entries.
    pub fn max_abs_coeff(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    /// Structural symmetry: entry (i,j) and entry (j,i) must agree as
    /// affine forms up to a small relative coefficient tolerance.
    pub fn is_structurally_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if !self.entry(i, j).approx_eq(self.entry(j, i), tol) {
                    return false;
                }
            }
        }
        true
    }
}
