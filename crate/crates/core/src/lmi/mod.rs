//! Strict linear-matrix-inequality feasibility with an explicit margin.
//!
//! A problem is a set of named matrix variables (full, symmetric,
//! diagonal, or scalar), affine symmetric matrix expressions required to
//! be positive definite, affine equality constraints, and an optional
//! scalar objective to maximize. Strict positivity is realized as
//! `expr >= shift * I` inside the solve; every returned feasible
//! solution is re-verified by an independent eigenvalue pass before it
//! is handed back, so solver output is never trusted blindly.
//!
//! Two backends share that verification pass: a primal-dual interior
//! point conic solver over PSD cones (the default) and an alternating
//! projection fallback that needs nothing beyond dense linear algebra.

mod altproj;
mod compile;
mod dump;
mod expr;
mod interior_point;

pub use dump::{dump_problem, dump_solution};
pub use expr::{LinExpr, MatrixExpr};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::numeric;
use compile::CompiledProblem;

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("constraint `{0}` is not structurally symmetric; build it from blocks with declared transposes")]
    NotSymmetric(String),
    #[error("equality `{label}` relates shapes {lhs_rows}x{lhs_cols} and {rhs_rows}x{rhs_cols}")]
    EqualityShapeMismatch {
        label: String,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("expression references scalar variable {idx}, but only {n_scalars} are declared")]
    UndeclaredVariable { idx: usize, n_scalars: usize },
    #[error("problem has no objective; call set_objective before maximize_scalar")]
    MissingObjective,
    #[error("bisection requires a single-variable objective")]
    ObjectiveNotScalarVariable,
    #[error("objective must be feasible at {0}; status was {1:?}")]
    InfeasibleAtBracketStart(f64, LmiStatus),
}

/// Shape and structure of a matrix decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Full { rows: usize, cols: usize },
    Symmetric { dim: usize },
    Diagonal { dim: usize },
    Scalar,
}

impl VarKind {
    fn scalar_len(&self) -> usize {
        match *self {
            VarKind::Full { rows, cols } => rows * cols,
            VarKind::Symmetric { dim } => dim * (dim + 1) / 2,
            VarKind::Diagonal { dim } => dim,
            VarKind::Scalar => 1,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Full { rows, cols } => (rows, cols),
            VarKind::Symmetric { dim } | VarKind::Diagonal { dim } => (dim, dim),
            VarKind::Scalar => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
pub(crate) struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

impl VarDecl {
    /// Flat scalar index for entry (i, j); None when the entry is
    /// structurally zero (off-diagonal of a diagonal variable).
    fn scalar_index(&self, i: usize, j: usize) -> Option<usize> {
        match self.kind {
            VarKind::Full { cols, .. } => Some(self.offset + i * cols + j),
            VarKind::Symmetric { dim } => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                Some(self.offset + a * dim - a * (a + 1) / 2 + b)
            }
            VarKind::Diagonal { .. } => (i == j).then_some(self.offset + i),
            VarKind::Scalar => Some(self.offset),
        }
    }

    fn unpack(&self, x: &[f64]) -> DMatrix<f64> {
        let (rows, cols) = self.kind.shape();
        DMatrix::from_fn(rows, cols, |i, j| match self.scalar_index(i, j) {
            Some(k) => x[k],
            None => 0.0,
        })
    }
}

pub(crate) struct PdConstraint {
    pub label: String,
    pub expr: MatrixExpr,
}

pub(crate) struct EqConstraint {
    pub label: String,
    /// Stored as `lhs - rhs`, required to vanish entrywise.
    pub diff: MatrixExpr,
}

/// Feasibility problem over matrix variables: every constraint expression
/// must be positive definite, every equality must hold, and the optional
/// scalar objective is maximized.
#[derive(Default)]
pub struct LmiProblem {
    pub(crate) vars: Vec<VarDecl>,
    pub(crate) n_scalars: usize,
    pub(crate) constraints: Vec<PdConstraint>,
    pub(crate) equalities: Vec<EqConstraint>,
    pub(crate) objective: Option<LinExpr>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, kind: VarKind) -> VarId {
        let decl = VarDecl {
            name: name.to_string(),
            kind,
            offset: self.n_scalars,
        };
        self.n_scalars += kind.scalar_len();
        self.vars.push(decl);
        VarId(self.vars.len() - 1)
    }

    /// Expression view of a declared variable.
    pub fn var(&self, id: VarId) -> MatrixExpr {
        let decl = &self.vars[id.0];
        let (rows, cols) = decl.kind.shape();
        let mut e = MatrixExpr::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if let Some(k) = decl.scalar_index(i, j) {
                    *e.entry_mut(i, j) = LinExpr::variable(k);
                }
            }
        }
        e
    }

    /// Scalar expression view of a `Scalar` variable.
    pub fn scalar(&self, id: VarId) -> LinExpr {
        let decl = &self.vars[id.0];
        assert!(matches!(decl.kind, VarKind::Scalar));
        LinExpr::variable(decl.offset)
    }

    /// Require `expr` positive definite. The expression must be
    /// structurally symmetric.
    pub fn require_pd(&mut self, label: &str, expr: MatrixExpr) -> Result<(), LmiError> {
        if !expr.is_structurally_symmetric(1e-12) {
            return Err(LmiError::NotSymmetric(label.to_string()));
        }
        self.check_indices(&expr)?;
        self.constraints.push(PdConstraint {
            label: label.to_string(),
            expr,
        });
        Ok(())
    }

    /// Require `lhs == rhs` entrywise.
    pub fn require_eq(
        &mut self,
        label: &str,
        lhs: &MatrixExpr,
        rhs: &MatrixExpr,
    ) -> Result<(), LmiError> {
        if (lhs.nrows(), lhs.ncols()) != (rhs.nrows(), rhs.ncols()) {
            return Err(LmiError::EqualityShapeMismatch {
                label: label.to_string(),
                lhs_rows: lhs.nrows(),
                lhs_cols: lhs.ncols(),
                rhs_rows: rhs.nrows(),
                rhs_cols: rhs.ncols(),
            });
        }
        let diff = lhs.sub(rhs);
        self.check_indices(&diff)?;
        self.equalities.push(EqConstraint {
            label: label.to_string(),
            diff,
        });
        Ok(())
    }

    /// Scalar linear functional to maximize.
    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = Some(objective);
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    fn check_indices(&self, expr: &MatrixExpr) -> Result<(), LmiError> {
        for i in 0..expr.nrows() {
            for j in 0..expr.ncols() {
                for &(idx, _) in &expr.entry(i, j).terms {
                    if idx >= self.n_scalars {
                        return Err(LmiError::UndeclaredVariable {
                            idx,
                            n_scalars: self.n_scalars,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn unpack_all(&self, x: &[f64]) -> Vec<(String, DMatrix<f64>)> {
        self.vars
            .iter()
            .map(|d| (d.name.clone(), d.unpack(x)))
            .collect()
    }
}

/// Solver backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Primal-dual interior-point conic solve over PSD cones.
    #[default]
    InteriorPoint,
    /// Alternating projections onto the affine set and the shifted PSD
    /// cone. No objective support; scalar maximization bisects.
    AlternatingProjections,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub backend: Backend,
    /// Margin every verified-feasible solution must attain, measured on
    /// the prescaled constraints.
    pub feasibility_margin: f64,
    /// Positive-definiteness shift used inside the solve; kept above
    /// `feasibility_margin` so verification is robust to solver
    /// tolerances.
    pub solve_shift: f64,
    /// Relative tolerance for equality constraints at verification.
    pub equality_tol: f64,
    /// Relative tolerance on the maximized scalar.
    pub eta_rel_tol: f64,
    /// Upper bracket for scalar bisection; grown geometrically from 1
    /// when absent.
    pub eta_bracket: Option<f64>,
    /// Iteration cap for the backend.
    pub max_iterations: usize,
    /// Use bisection for maximize_scalar even when the backend could
    /// optimize directly.
    pub force_bisection: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            backend: Backend::InteriorPoint,
            feasibility_margin: 1e-8,
            solve_shift: 1e-6,
            equality_tol: 1e-9,
            eta_rel_tol: 1e-4,
            eta_bracket: None,
            max_iterations: 200_000,
            force_bisection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LmiStatus {
    Feasible,
    Infeasible { certified: bool },
    NumericalFailure,
}

/// Verified solve outcome. `values` and `margin` are meaningful only
/// when the status is `Feasible`.
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: LmiStatus,
    /// Smallest eigenvalue over all prescaled constraint expressions.
    pub margin: f64,
    /// Value of the objective, when one was set.
    pub objective: Option<f64>,
    pub values: Vec<(String, DMatrix<f64>)>,
    pub diagnostics: String,
}

impl LmiSolution {
    pub fn value(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.values
            .iter()
            .find_map(|(n, m)| (n == name).then_some(m))
    }

    pub fn is_feasible(&self) -> bool {
        self.status == LmiStatus::Feasible
    }

    fn not_feasible(status: LmiStatus, diagnostics: String) -> Self {
        Self {
            status,
            margin: f64::NAN,
            objective: None,
            values: Vec::new(),
            diagnostics,
        }
    }
}

pub(crate) enum BackendOutcome {
    /// A candidate assignment to hand to the verification pass.
    Candidate { x: Vec<f64>, note: String },
    Infeasible { certified: bool, note: String },
    Failure { note: String },
}

/// Solve a feasibility problem and independently verify the result.
pub fn solve_feasibility(problem: &LmiProblem, opts: &SolveOptions) -> LmiSolution {
    let compiled = compile::compile(problem, opts.solve_shift);
    run_and_verify(problem, &compiled, None, opts)
}

/// Maximize the problem's scalar objective subject to its constraints.
///
/// The interior-point backend optimizes directly; otherwise the scalar is
/// bisected with feasibility solves until the relative tolerance
/// `eta_rel_tol` is met or the upper bracket is hit.
pub fn maximize_scalar(problem: &LmiProblem, opts: &SolveOptions) -> Result<LmiSolution, LmiError> {
    let objective = problem
        .objective
        .clone()
        .ok_or(LmiError::MissingObjective)?;
    let direct_capable = opts.backend == Backend::InteriorPoint && !opts.force_bisection;
    if direct_capable {
        let compiled = compile::compile(problem, opts.solve_shift);
        let solution = run_and_verify(problem, &compiled, Some(&objective), opts);
        if solution.is_feasible() {
            return Ok(solution);
        }
        // Fall through to bisection only on numerical failure; a
        // certified infeasible answer stands.
        if matches!(solution.status, LmiStatus::Infeasible { .. }) {
            return Ok(solution);
        }
    }
    bisect_scalar(problem, &objective, opts)
}

fn bisect_scalar(
    problem: &LmiProblem,
    objective: &LinExpr,
    opts: &SolveOptions,
) -> Result<LmiSolution, LmiError> {
    // Bisection fixes the objective variable with an equality row, so the
    // objective must be a lone scalar variable.
    if objective.terms.len() != 1 || objective.constant != 0.0 {
        return Err(LmiError::ObjectiveNotScalarVariable);
    }
    let (var_idx, coeff) = objective.terms[0];
    if coeff != 1.0 {
        return Err(LmiError::ObjectiveNotScalarVariable);
    }

    let solve_at = |value: f64| -> LmiSolution {
        let mut pinned = MatrixExpr::zeros(1, 1);
        *pinned.entry_mut(0, 0) = LinExpr::variable(var_idx);
        let target = MatrixExpr::from_constant(&DMatrix::from_element(1, 1, value));
        // Clone the problem shallowly: reuse vars/constraints, add one
        // equality pinning the scalar.
        let mut eqs: Vec<EqConstraint> = problem
            .equalities
            .iter()
            .map(|e| EqConstraint {
                label: e.label.clone(),
                diff: e.diff.clone(),
            })
            .collect();
        eqs.push(EqConstraint {
            label: "bisection-pin".to_string(),
            diff: pinned.sub(&target),
        });
        let pinned_problem = LmiProblem {
            vars: problem.vars.clone(),
            n_scalars: problem.n_scalars,
            constraints: problem
                .constraints
                .iter()
                .map(|c| PdConstraint {
                    label: c.label.clone(),
                    expr: c.expr.clone(),
                })
                .collect(),
            equalities: eqs,
            objective: None,
        };
        solve_feasibility(&pinned_problem, opts)
    };

    let base = solve_at(0.0);
    if !base.is_feasible() {
        return Err(LmiError::InfeasibleAtBracketStart(0.0, base.status));
    }

    // Establish an infeasible upper bracket.
    let mut lo = 0.0;
    let mut best = base;
    let mut hi = opts.eta_bracket.unwrap_or(1.0).max(1e-12);
    let mut bracket_hit = true;
    for _ in 0..48 {
        let probe = solve_at(hi);
        if probe.is_feasible() {
            lo = hi;
            best = probe;
            if opts.eta_bracket.is_some() {
                // Configured bracket is feasible: report it as the answer.
                break;
            }
            hi *= 2.0;
        } else {
            bracket_hit = false;
            break;
        }
    }

    if !bracket_hit {
        let tol = opts.eta_rel_tol * hi.abs().max(1.0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let probe = solve_at(mid);
            if probe.is_feasible() {
                lo = mid;
                best = probe;
            } else {
                hi = mid;
            }
        }
    }

    let mut solution = best;
    solution.objective = Some(lo);
    solution.diagnostics = format!(
        "{}; bisection: objective in [{lo:.6e}, {hi:.6e}]{}",
        solution.diagnostics,
        if bracket_hit { " (upper bracket hit)" } else { "" }
    );
    Ok(solution)
}

fn run_and_verify(
    problem: &LmiProblem,
    compiled: &CompiledProblem,
    objective: Option<&LinExpr>,
    opts: &SolveOptions,
) -> LmiSolution {
    let outcome = match opts.backend {
        Backend::InteriorPoint => interior_point::solve(compiled, objective, opts),
        Backend::AlternatingProjections => altproj::solve(compiled, opts),
    };
    match outcome {
        BackendOutcome::Candidate { x, note } => {
            let report = verify_assignment(problem, compiled, &x, opts);
            if report.ok {
                LmiSolution {
                    status: LmiStatus::Feasible,
                    margin: report.margin,
                    objective: objective.map(|o| o.eval(&x)),
                    values: problem.unpack_all(&x),
                    diagnostics: format!("{note}; verified: {}", report.summary),
                }
            } else if note.contains("iteration limit") {
                LmiSolution::not_feasible(
                    LmiStatus::Infeasible { certified: false },
                    format!("{note}; verification failed: {}", report.summary),
                )
            } else {
                LmiSolution::not_feasible(
                    LmiStatus::NumericalFailure,
                    format!(
                        "solver reported success but verification failed: {} ({note})",
                        report.summary
                    ),
                )
            }
        }
        BackendOutcome::Infeasible { certified, note } => {
            LmiSolution::not_feasible(LmiStatus::Infeasible { certified }, note)
        }
        BackendOutcome::Failure { note } => {
            LmiSolution::not_feasible(LmiStatus::NumericalFailure, note)
        }
    }
}

struct VerifyReport {
    ok: bool,
    margin: f64,
    summary: String,
}

/// Independent verification: evaluate every prescaled constraint at the
/// assignment and check its smallest eigenvalue, then check every
/// equality to relative tolerance. Decoupled from the solve path.
fn verify_assignment(
    problem: &LmiProblem,
    compiled: &CompiledProblem,
    x: &[f64],
    opts: &SolveOptions,
) -> VerifyReport {
    let mut margin = f64::INFINITY;
    let mut worst_label = "-".to_string();
    for (c, scale) in problem.constraints.iter().zip(compiled.scales.iter()) {
        let value = c.expr.eval(x) / *scale;
        let eig = numeric::sym_min_eig(&value);
        if eig < margin {
            margin = eig;
            worst_label = c.label.clone();
        }
    }
    if problem.constraints.is_empty() {
        margin = f64::INFINITY;
    }

    let mut eq_worst = 0.0_f64;
    let mut eq_label = "-".to_string();
    for e in &problem.equalities {
        for i in 0..e.diff.nrows() {
            for j in 0..e.diff.ncols() {
                let entry = e.diff.entry(i, j);
                let denom = 1.0 + entry.magnitude_at(x);
                let rel = entry.eval(x).abs() / denom;
                if rel > eq_worst {
                    eq_worst = rel;
                    eq_label = e.label.clone();
                }
            }
        }
    }

    let margin_ok = margin >= opts.feasibility_margin;
    let eq_ok = eq_worst <= opts.equality_tol;
    VerifyReport {
        ok: margin_ok && eq_ok,
        margin,
        summary: format!(
            "margin {margin:.3e} (constraint `{worst_label}`), worst equality residual {eq_worst:.3e} (`{eq_label}`)"
        ),
    }
}
