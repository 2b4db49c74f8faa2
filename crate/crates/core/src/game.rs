//! Quadratic network game: utilities, best responses, Nash equilibria,
//! target interventions, and the stacked open-loop matrices used by the
//! model-based verification oracles.
//!
//! Agent `n` picks an action `x_n` to maximize
//! `-q_n/2 x_n^2 + x_n (w_n s_n(x) + d_n) + x_n u_n`, where `s_n` is the
//! adjacency-weighted aggregate of its neighbors' actions and `u_n` is the
//! regulator's intervention. All agents update simultaneously.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::numeric;

/// Tolerance below which an influence weight counts as zero.
const MIN_INFLUENCE: f64 = 1e-12;

/// Relative residual tolerance for equilibrium linear solves.
const NE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("expected {expected} entries for `{field}`, got {got}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("adjacency must be {n}x{n}, got {rows}x{cols}")]
    AdjacencyShape { n: usize, rows: usize, cols: usize },
    #[error("adjacency diagonal entry ({n},{n}) is {value}; self loops are not allowed")]
    SelfLoop { n: usize, value: f64 },
    #[error("adjacency entry ({row},{col}) = {value} lies outside [0, 1]")]
    AdjacencyRange { row: usize, col: usize, value: f64 },
    #[error("cost curvature q[{agent}] = {value} must be positive and finite")]
    NonPositiveCost { agent: usize, value: f64 },
    #[error("influence weight w[{agent}] = {value} is numerically zero (|w| < {MIN_INFLUENCE:e})")]
    ZeroInfluence { agent: usize, value: f64 },
    #[error("`{field}` contains a non-finite entry")]
    NonFinite { field: &'static str },
    #[error("agent index {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("Q - WP is singular to working precision; the game has no unique equilibrium under a constant intervention")]
    SingularInteractionMatrix,
}

/// The unknown "plant": a quadratic game over a weighted directed network.
///
/// Construction validates every invariant; afterwards the value is
/// immutable and all operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGame {
    n_agents: usize,
    adjacency: DMatrix<f64>,
    q: DVector<f64>,
    w: DVector<f64>,
    d: DVector<f64>,
}

impl NetworkGame {
    pub fn new(
        adjacency: DMatrix<f64>,
        q: DVector<f64>,
        w: DVector<f64>,
        d: DVector<f64>,
    ) -> Result<Self, GameError> {
        let n = q.len();
        if n == 0 {
            return Err(GameError::DimensionMismatch {
                field: "q",
                expected: 1,
                got: 0,
            });
        }
        for (field, v) in [("w", &w), ("d", &d)] {
            if v.len() != n {
                return Err(GameError::DimensionMismatch {
                    field,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if adjacency.nrows() != n || adjacency.ncols() != n {
            return Err(GameError::AdjacencyShape {
                n,
                rows: adjacency.nrows(),
                cols: adjacency.ncols(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let p = adjacency[(i, j)];
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(GameError::AdjacencyRange {
                        row: i,
                        col: j,
                        value: p,
                    });
                }
            }
            if adjacency[(i, i)] != 0.0 {
                return Err(GameError::SelfLoop {
                    n: i,
                    value: adjacency[(i, i)],
                });
            }
        }
        for (agent, &qn) in q.iter().enumerate() {
            if !qn.is_finite() || qn <= 0.0 {
                return Err(GameError::NonPositiveCost { agent, value: qn });
            }
        }
        for (agent, &wn) in w.iter().enumerate() {
            if !wn.is_finite() || wn.abs() < MIN_INFLUENCE {
                return Err(GameError::ZeroInfluence { agent, value: wn });
            }
        }
        if !d.iter().all(|v| v.is_finite()) {
            return Err(GameError::NonFinite { field: "d" });
        }
        Ok(Self {
            n_agents: n,
            adjacency,
            q,
            w,
            d,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// True when every private cost curvature equals one (`Q = I`).
    pub fn has_identity_costs(&self) -> bool {
        self.q.iter().all(|&qn| qn == 1.0)
    }

    /// `Q - WP`, the matrix whose nonsingularity characterizes uniqueness
    /// of the equilibrium under a constant intervention.
    pub fn interaction_matrix(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = -self.w[i] * self.adjacency[(i, j)];
            }
            m[(i, i)] += self.q[i];
        }
        m
    }

    /// `Q^{-1} W P`, the one-step best-response map's linear part.
    pub fn response_matrix(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.w[i] * self.adjacency[(i, j)] / self.q[i];
            }
        }
        m
    }

    /// Adjacency-weighted aggregate of neighbor actions for agent `n`
    /// (0-based). Independent of `x[n]` because the diagonal is zero.
    pub fn aggregate(&self, x: &DVector<f64>, n: usize) -> Result<f64, GameError> {
        self.check_agent(n)?;
        self.check_profile(x)?;
        Ok(self.adjacency.row(n).transpose().dot(x))
    }

    /// Utility of agent `n` at profile `x` under intervention `u_n`.
    pub fn utility(&self, n: usize, x: &DVector<f64>, u_n: f64) -> Result<f64, GameError> {
        self.check_agent(n)?;
        self.check_profile(x)?;
        let s_n = self.adjacency.row(n).transpose().dot(x);
        let x_n = x[n];
        Ok(-0.5 * self.q[n] * x_n * x_n + x_n * (self.w[n] * s_n + self.d[n]) + x_n * u_n)
    }

    /// Simultaneous best response: every agent plays the maximizer of its
    /// utility given the previous profile `x` and intervention `u`.
    pub fn best_response_step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, GameError> {
        self.check_len("x", x)?;
        self.check_len("u", u)?;
        let mut next = &self.adjacency * x;
        for n in 0..self.n_agents {
            next[n] = (self.w[n] * next[n] + self.d[n] + u[n]) / self.q[n];
        }
        Ok(next)
    }

    /// Unique Nash equilibrium under the constant intervention `u`, i.e.
    /// the solution of `(Q - WP) x = d + u`, with a residual check.
    pub fn nash_equilibrium(&self, u: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        self.check_len("u", u)?;
        let rhs = &self.d + u;
        numeric::solve_checked(&self.interaction_matrix(), &rhs, NE_RESIDUAL_TOL)
            .ok_or(GameError::SingularInteractionMatrix)
    }

    /// Constant intervention that places the equilibrium at `x_star`:
    /// `u* = (Q - WP) x* - d`.
    pub fn target_intervention(&self, x_star: &TargetProfile) -> Result<DVector<f64>, GameError> {
        self.check_len("x_star", x_star.as_vector())?;
        Ok(self.interaction_matrix() * x_star.as_vector() - &self.d)
    }

    /// Stacked open-loop matrices of the regulator-agents interconnection.
    /// Model knowledge: used only by oracles and tests, never by the
    /// data-driven designer.
    pub fn open_loop_matrices(&self, x_star: &TargetProfile) -> OpenLoopSystem {
        let n = self.n_agents;
        let br = self.response_matrix();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&br);
        for i in 0..n {
            a[(n + i, i)] = -1.0;
            a[(n + i, n + i)] = 1.0;
        }
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            b[(i, i)] = 1.0 / self.q[i];
        }
        let mut e = DVector::zeros(2 * n);
        for i in 0..n {
            e[i] = self.d[i] / self.q[i];
            e[n + i] = x_star.as_vector()[i];
        }
        OpenLoopSystem { a, b, e }
    }

    fn check_agent(&self, n: usize) -> Result<(), GameError> {
        if n >= self.n_agents {
            return Err(GameError::AgentOutOfRange {
                agent: n,
                n_agents: self.n_agents,
            });
        }
        Ok(())
    }

    fn check_profile(&self, x: &DVector<f64>) -> Result<(), GameError> {
        self.check_len("x", x)
    }

    fn check_len(&self, field: &'static str, v: &DVector<f64>) -> Result<(), GameError> {
        if v.len() != self.n_agents {
            return Err(GameError::DimensionMismatch {
                field,
                expected: self.n_agents,
                got: v.len(),
            });
        }
        if !v.iter().all(|e| e.is_finite()) {
            return Err(GameError::NonFinite { field });
        }
        Ok(())
    }
}

/// Desired action profile the regulator steers the agents toward.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProfile {
    x_star: DVector<f64>,
}

impl TargetProfile {
    pub fn new(x_star: DVector<f64>) -> Result<Self, GameError> {
        if !x_star.iter().all(|v| v.is_finite()) {
            return Err(GameError::NonFinite { field: "x_star" });
        }
        Ok(Self { x_star })
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn len(&self) -> usize {
        self.x_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_star.len() == 0
    }
}

/// Open-loop interconnection of the integrator-augmented agent dynamics:
/// state `(x, z)`, input `u`, constant offset `e`.
///
/// `a` has the best-response map in the top-left block and an integrator
/// block on the bottom; `b` injects the intervention through `Q^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl OpenLoopSystem {
    /// `[B  AB]`, whose full row rank certifies controllability of the
    /// interconnection.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let rows = self.b.nrows();
        let cols = self.b.ncols();
        let mut m = DMatrix::zeros(rows, 2 * cols);
        m.view_mut((0, 0), (rows, cols)).copy_from(&self.b);
        m.view_mut((0, cols), (rows, cols))
            .copy_from(&(&self.a * &self.b));
        m
    }
}
