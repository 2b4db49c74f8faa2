//! Interior-point backend: lowers the compiled problem to Clarabel's
//! conic form (zero cone for equalities, PSD triangle cones for the
//! matrix blocks) and maps solver statuses back.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::compile::{CompiledProblem, PsdBlock};
use super::expr::LinExpr;
use super::{BackendOutcome, SolveOptions};

pub(crate) fn solve(
    compiled: &CompiledProblem,
    objective: Option<&LinExpr>,
    opts: &SolveOptions,
) -> BackendOutcome {
    let n = compiled.n_vars;
    let n_eq = compiled.eq_rows.len();
    let n_conic: usize = compiled
        .blocks
        .iter()
        .map(|b| PsdBlock::svec_len(b.dim))
        .sum();
    let m = n_eq + n_conic;

    // Assemble A (m x n) and b with  A x + s = b,  s in 0^{n_eq} x PSD...
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut b = vec![0.0; m];
    for (r, row) in compiled.eq_rows.iter().enumerate() {
        for &(idx, coeff) in &row.coeffs {
            cols[idx].push((r, coeff));
        }
        b[r] = row.rhs;
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut r = n_eq;
    for block in &compiled.blocks {
        for (k, entry) in block.entries.iter().enumerate() {
            let (i, j) = PsdBlock::coords(block.dim, k);
            let weight = if i == j { 1.0 } else { sqrt2 };
            for &(idx, coeff) in &entry.terms {
                cols[idx].push((r, -weight * coeff));
            }
            let shift = if i == j { compiled.shift } else { 0.0 };
            b[r] = weight * (entry.constant - shift);
            r += 1;
        }
    }

    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(row, _)| row);
        // Merge duplicates defensively; expressions are already merged.
        let mut last_row = usize::MAX;
        for &(row, val) in col.iter() {
            if row == last_row {
                let v: &mut f64 = nzval.last_mut().unwrap();
                *v += val;
            } else {
                rowval.push(row);
                nzval.push(val);
                last_row = row;
            }
        }
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(m, n, colptr, rowval, nzval);

    let p = CscMatrix::<f64>::zeros((n, n));
    let mut q = vec![0.0; n];
    if let Some(obj) = objective {
        // Clarabel minimizes; negate to maximize.
        for &(idx, coeff) in &obj.terms {
            q[idx] -= coeff;
        }
    }

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    for block in &compiled.blocks {
        cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
    }

    let settings = match DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iterations.min(u32::MAX as usize) as u32)
        .build()
    {
        Ok(s) => s,
        Err(e) => {
            return BackendOutcome::Failure {
                note: format!("interior-point settings rejected: {e}"),
            }
        }
    };

    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(e) => {
            return BackendOutcome::Failure {
                note: format!("interior-point setup failed: {e}"),
            }
        }
    };
    solver.solve();
    let status = solver.solution.status;
    let iterations = solver.solution.iterations;

    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => BackendOutcome::Candidate {
            x: solver.solution.x.clone(),
            note: format!("interior point: {status:?} in {iterations} iterations"),
        },
        SolverStatus::PrimalInfeasible => BackendOutcome::Infeasible {
            certified: true,
            note: format!(
                "interior point: primal infeasibility certificate after {iterations} iterations"
            ),
        },
        SolverStatus::AlmostPrimalInfeasible => BackendOutcome::Infeasible {
            certified: false,
            note: "interior point: reduced-accuracy infeasibility certificate".to_string(),
        },
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            BackendOutcome::Failure {
                note: "interior point: objective unbounded over the constraint set (dual infeasible); bound the scalar or supply a bracket"
                    .to_string(),
            }
        }
        SolverStatus::MaxIterations | SolverStatus::InsufficientProgress => {
            // Hand back the final iterate; verification decides whether it
            // happens to be usable. Otherwise this is an uncertified no.
            BackendOutcome::Candidate {
                x: solver.solution.x.clone(),
                note: format!("interior point: iteration limit ({status:?})"),
            }
        }
        other => BackendOutcome::Failure {
            note: format!("interior point: terminated with {other:?}"),
        },
    }
}
