//! Alternating-projection fallback backend.
//!
//! The problem is lifted to `y = (x, svec(S_1), ..., svec(S_k))` and the
//! iterates alternate between the affine set (equality rows plus the
//! graph constraints `S_j = F_j(x)`) and the product of shifted PSD
//! cones (`S_j >= shift * I`, projected by eigenvalue clamping). The
//! iteration stops as soon as the candidate passes the same margin and
//! equality checks the external verification pass applies; stalls and
//! iteration limits are reported as uncertified infeasibility.

use nalgebra::{DMatrix, DVector};

use super::compile::{CompiledProblem, PsdBlock};
use super::{BackendOutcome, SolveOptions};
use crate::numeric;

const SQRT2: f64 = std::f64::consts::SQRT_2;

pub(crate) fn solve(compiled: &CompiledProblem, opts: &SolveOptions) -> BackendOutcome {
    let n = compiled.n_vars;
    let svec_lens: Vec<usize> = compiled
        .blocks
        .iter()
        .map(|b| PsdBlock::svec_len(b.dim))
        .collect();
    let n_conic: usize = svec_lens.iter().sum();
    let dim = n + n_conic;
    let m = compiled.eq_rows.len() + n_conic;

    // Affine rows C y = d.
    let mut c = DMatrix::zeros(m, dim);
    let mut d = DVector::zeros(m);
    for (r, row) in compiled.eq_rows.iter().enumerate() {
        for &(idx, coeff) in &row.coeffs {
            c[(r, idx)] = coeff;
        }
        d[r] = row.rhs;
    }
    let mut r = compiled.eq_rows.len();
    let mut s_offset = n;
    for block in &compiled.blocks {
        for (k, entry) in block.entries.iter().enumerate() {
            let (i, j) = PsdBlock::coords(block.dim, k);
            let weight = if i == j { 1.0 } else { SQRT2 };
            for &(idx, coeff) in &entry.terms {
                c[(r, idx)] += weight * coeff;
            }
            c[(r, s_offset + k)] = -1.0;
            d[r] = -weight * entry.constant;
            r += 1;
        }
        s_offset += PsdBlock::svec_len(block.dim);
    }

    // Orthogonal projector onto {C y = d} via a pseudoinverse of C.
    let pinv = match c.clone().svd(true, true).pseudo_inverse(1e-12) {
        Ok(p) => p,
        Err(e) => {
            return BackendOutcome::Failure {
                note: format!("alternating projections: pseudoinverse failed: {e}"),
            }
        }
    };
    let project_affine = |y: &DVector<f64>| -> DVector<f64> { y - &pinv * (&c * y - &d) };

    let mut y = project_affine(&DVector::zeros(dim));
    let check_every = 25;
    let mut last_checked = y.clone();

    for iter in 0..opts.max_iterations {
        // Project onto the shifted PSD cones.
        let mut offset = n;
        for block in &compiled.blocks {
            let len = PsdBlock::svec_len(block.dim);
            let mat = svec_to_mat(y.as_slice(), offset, block.dim);
            let clamped = clamp_eigenvalues(&mat, compiled.shift);
            mat_to_svec(&clamped, y.as_mut_slice(), offset);
            offset += len;
        }
        y = project_affine(&y);

        if iter % check_every == check_every - 1 {
            let x = y.as_slice()[..n].to_vec();
            if candidate_ok(compiled, &x, opts) {
                return BackendOutcome::Candidate {
                    x,
                    note: format!("alternating projections: converged after {} iterations", iter + 1),
                };
            }
            let movement = (&y - &last_checked).norm();
            if movement <= 1e-13 * (1.0 + y.norm()) {
                return BackendOutcome::Infeasible {
                    certified: false,
                    note: format!(
                        "alternating projections stalled after {} iterations (movement {movement:.3e}); \
                         the constraint sets appear disjoint (iteration limit surrogate)",
                        iter + 1
                    ),
                };
            }
            last_checked = y.clone();
        }
    }

    let x = y.as_slice()[..n].to_vec();
    if candidate_ok(compiled, &x, opts) {
        return BackendOutcome::Candidate {
            x,
            note: "alternating projections: converged at the iteration cap".to_string(),
        };
    }
    BackendOutcome::Infeasible {
        certified: false,
        note: format!(
            "alternating projections: iteration limit ({}) without reaching the margin; \
             infeasible or converging too slowly",
            opts.max_iterations
        ),
    }
}

/// Mirror of the external verification on compiled (prescaled) data.
fn candidate_ok(compiled: &CompiledProblem, x: &[f64], opts: &SolveOptions) -> bool {
    for row in &compiled.eq_rows {
        let value: f64 = row.coeffs.iter().map(|&(i, c)| c * x[i]).sum();
        let magnitude: f64 = row
            .coeffs
            .iter()
            .map(|&(i, c)| (c * x[i]).abs())
            .sum::<f64>()
            + row.rhs.abs();
        if (value - row.rhs).abs() > opts.equality_tol * (1.0 + magnitude) {
            return false;
        }
    }
    for block in &compiled.blocks {
        let mut mat = DMatrix::zeros(block.dim, block.dim);
        for (k, entry) in block.entries.iter().enumerate() {
            let (i, j) = PsdBlock::coords(block.dim, k);
            let v = entry.eval(x);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
        if numeric::sym_min_eig(&mat) < opts.feasibility_margin {
            return false;
        }
    }
    true
}

fn svec_to_mat(y: &[f64], offset: usize, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for col in 0..dim {
        for row in 0..=col {
            let v = y[offset + k];
            if row == col {
                m[(row, col)] = v;
            } else {
                m[(row, col)] = v / SQRT2;
                m[(col, row)] = v / SQRT2;
            }
            k += 1;
        }
    }
    m
}

fn mat_to_svec(m: &DMatrix<f64>, y: &mut [f64], offset: usize) {
    let dim = m.nrows();
    let mut k = 0;
    for col in 0..dim {
        for row in 0..=col {
            y[offset + k] = if row == col {
                m[(row, col)]
            } else {
                m[(row, col)] * SQRT2
            };
            k += 1;
        }
    }
}

/// Projection onto `{M : M >= floor * I}` in the Frobenius norm.
fn clamp_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = 0.5 * (m + m.transpose());
    let eig = nalgebra::SymmetricEigen::new(sym);
    let clamped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(floor)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trip_preserves_norm() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -1.0, 0.5, 3.0, 0.2, -1.0, 0.2, 1.0]);
        let mut buf = vec![0.0; 6];
        mat_to_svec(&m, &mut buf, 0);
        let back = svec_to_mat(&buf, 0, 3);
        assert!((&back - &m).norm() < 1e-14);
        let frob = m.norm();
        let svec_norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((frob - svec_norm).abs() < 1e-12);
    }

    #[test]
    fn clamping_produces_margin() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let clamped = clamp_eigenvalues(&m, 0.1);
        assert!(numeric::sym_min_eig(&clamped) >= 0.1 - 1e-12);
    }
}
