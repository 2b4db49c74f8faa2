//! Lowering of an [`LmiProblem`](super::LmiProblem) to prescaled conic
//! data shared by both backends.
//!
//! Each constraint is divided by its largest-magnitude coefficient so
//! the positive-definiteness shift acts uniformly, and each equality row
//! is normalized the same way.

use super::expr::LinExpr;
use super::LmiProblem;

/// One normalized equality row: `sum coeffs * x = rhs`.
pub(crate) struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// One prescaled positive-definiteness block.
pub(crate) struct PsdBlock {
    pub dim: usize,
    /// Upper-triangle entries in column-major (svec) order, after
    /// dividing by the constraint scale. No sqrt(2) weighting and no
    /// shift; backends apply their own conventions.
    pub entries: Vec<LinExpr>,
}

impl PsdBlock {
    /// (row, col) with row <= col for svec position `k`.
    pub fn coords(dim: usize, k: usize) -> (usize, usize) {
        let mut idx = k;
        for col in 0..dim {
            if idx <= col {
                return (idx, col);
            }
            idx -= col + 1;
        }
        unreachable!("svec index {k} out of range for dim {dim}");
    }

    pub fn svec_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }
}

pub(crate) struct CompiledProblem {
    pub n_vars: usize,
    pub eq_rows: Vec<EqRow>,
    pub blocks: Vec<PsdBlock>,
    /// Per-constraint scale divisor, aligned with `problem.constraints`.
    pub scales: Vec<f64>,
    /// Shift used to realize strict positivity during the solve.
    pub shift: f64,
}

pub(crate) fn compile(problem: &LmiProblem, shift: f64) -> CompiledProblem {
    let mut eq_rows = Vec::new();
    for eq in &problem.equalities {
        for i in 0..eq.diff.nrows() {
            for j in 0..eq.diff.ncols() {
                let entry = eq.diff.entry(i, j);
                if entry.is_structurally_zero() {
                    continue;
                }
                let scale = entry.max_abs_coeff().max(f64::MIN_POSITIVE);
                let scaled = entry.scaled(1.0 / scale);
                eq_rows.push(EqRow {
                    coeffs: scaled.terms.clone(),
                    rhs: -scaled.constant,
                });
            }
        }
    }

    let mut blocks = Vec::new();
    let mut scales = Vec::new();
    for c in &problem.constraints {
        let dim = c.expr.nrows();
        let scale = c.expr.max_abs_coeff().max(f64::MIN_POSITIVE).max(1e-300);
        let inv = 1.0 / scale;
        let mut entries = Vec::with_capacity(PsdBlock::svec_len(dim));
        for col in 0..dim {
            for row in 0..=col {
                // Symmetrize to wash out roundoff asymmetry in (i,j)/(j,i).
                let mut e = c.expr.entry(row, col).scaled(0.5 * inv);
                e.add_assign_scaled(c.expr.entry(col, row), 0.5 * inv);
                entries.push(e);
            }
        }
        scales.push(scale);
        blocks.push(PsdBlock { dim, entries });
    }

    CompiledProblem {
        n_vars: problem.n_scalars,
        eq_rows,
        blocks,
        scales,
        shift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_coords_walk_columns() {
        // dim 3: (0,0), (0,1), (1,1), (0,2), (1,2), (2,2)
        let expected = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];
        for (k, &coord) in expected.iter().enumerate() {
            assert_eq!(PsdBlock::coords(3, k), coord);
        }
    }
}
