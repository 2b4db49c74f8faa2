//! Structured-text serialization of problems and solutions for
//! debugging (the CLI's `dump-lmi` output). The format is line-oriented:
//! a header line per section, then one line per variable, equality row,
//! or constraint entry. Off-diagonal constraint entries are listed once
//! (the expressions are symmetric by construction).

use std::fmt::Write;

use super::{LmiProblem, LmiSolution, VarKind};

fn kind_str(kind: VarKind) -> String {
    match kind {
        VarKind::Full { rows, cols } => format!("full {rows} {cols}"),
        VarKind::Symmetric { dim } => format!("symmetric {dim}"),
        VarKind::Diagonal { dim } => format!("diagonal {dim}"),
        VarKind::Scalar => "scalar".to_string(),
    }
}

/// Render a problem in the documented debug format.
pub fn dump_problem(problem: &LmiProblem) -> String {
    let mut out = String::new();
    writeln!(out, "lmi-problem scalars={}", problem.n_scalars).unwrap();

    writeln!(out, "variables {}", problem.vars.len()).unwrap();
    for v in &problem.vars {
        writeln!(out, "  var {} {} offset {}", v.name, kind_str(v.kind), v.offset).unwrap();
    }

    match &problem.objective {
        Some(obj) => {
            let mut line = String::new();
            render_terms(&mut line, obj.constant, &obj.terms, problem);
            writeln!(out, "objective maximize {line}").unwrap();
        }
        None => writeln!(out, "objective none").unwrap(),
    }

    writeln!(out, "equalities {}", problem.equalities.len()).unwrap();
    for eq in &problem.equalities {
        writeln!(
            out,
            "  equality {} shape {}x{}",
            eq.label,
            eq.diff.nrows(),
            eq.diff.ncols()
        )
        .unwrap();
        for i in 0..eq.diff.nrows() {
            for j in 0..eq.diff.ncols() {
                let e = eq.diff.entry(i, j);
                if e.is_structurally_zero() {
                    continue;
                }
                let mut line = String::new();
                render_terms(&mut line, e.constant, &e.terms, problem);
                writeln!(out, "    ({i},{j}): {line} = 0").unwrap();
            }
        }
    }

    writeln!(out, "constraints {}", problem.constraints.len()).unwrap();
    for c in &problem.constraints {
        writeln!(out, "  constraint {} dim {}", c.label, c.expr.nrows()).unwrap();
        for i in 0..c.expr.nrows() {
            for j in i..c.expr.ncols() {
                let e = c.expr.entry(i, j);
                if e.is_structurally_zero() {
                    continue;
                }
                let mut line = String::new();
                render_terms(&mut line, e.constant, &e.terms, problem);
                writeln!(out, "    ({i},{j}): {line}").unwrap();
            }
        }
    }
    out
}

/// Render a solution in the documented debug format.
pub fn dump_solution(solution: &LmiSolution) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "lmi-solution status={:?} margin={:.17e} objective={}",
        solution.status,
        solution.margin,
        solution
            .objective
            .map_or("none".to_string(), |v| format!("{v:.17e}")),
    )
    .unwrap();
    writeln!(out, "diagnostics {}", solution.diagnostics).unwrap();
    for (name, value) in &solution.values {
        writeln!(out, "value {} rows {} cols {}", name, value.nrows(), value.ncols()).unwrap();
        for i in 0..value.nrows() {
            let row: Vec<String> = (0..value.ncols())
                .map(|j| format!("{:.17e}", value[(i, j)]))
                .collect();
            writeln!(out, "  {}", row.join(" ")).unwrap();
        }
    }
    out
}

fn render_terms(line: &mut String, constant: f64, terms: &[(usize, f64)], problem: &LmiProblem) {
    if constant != 0.0 || terms.is_empty() {
        write!(line, "{constant:.17e}").unwrap();
    }
    for &(idx, coeff) in terms {
        let (name, local) = locate(problem, idx);
        if !line.is_empty() {
            write!(line, " + ").unwrap();
        }
        write!(line, "{coeff:.17e}*{name}[{local}]").unwrap();
    }
}

fn locate(problem: &LmiProblem, idx: usize) -> (String, usize) {
    for v in &problem.vars {
        let len = match v.kind {
            VarKind::Full { rows, cols } => rows * cols,
            VarKind::Symmetric { dim } => dim * (dim + 1) / 2,
            VarKind::Diagonal { dim } => dim,
            VarKind::Scalar => 1,
        };
        if idx >= v.offset && idx < v.offset + len {
            return (v.name.clone(), idx - v.offset);
        }
    }
    ("?".to_string(), idx)
}
