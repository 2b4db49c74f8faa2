//! Data-driven design of the PI intervention gains.
//!
//! Both designs consume only the differenced data matrices: no utility
//! parameters and no network knowledge. The unconstrained design returns
//! gains plus a Lyapunov certificate; the budget-constrained design adds
//! a dead-zone sector certificate and an ellipsoidal estimate of the
//! region of attraction. Model-based checks (spectral radii, equilibrium
//! reports) live here too but are oracle utilities for tests and
//! simulation, never inputs to the design.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{stacked_data_rank, DataMatrices};
use crate::game::{NetworkGame, TargetProfile};
use crate::lmi::{
    self, Backend, LmiProblem, LmiSolution, LmiStatus, MatrixExpr, SolveOptions, VarKind,
};
use crate::numeric;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("need at least {need} data columns for {n_agents} agents, got {got}")]
    InsufficientColumns {
        need: usize,
        got: usize,
        n_agents: usize,
    },
    #[error("data matrices are identically zero; nothing to design from")]
    DegenerateData,
    #[error("design LMI infeasible ({}): {diagnostics}", if *.certified { "certified" } else { "uncertified" })]
    LmiInfeasible {
        certified: bool,
        diagnostics: String,
    },
    #[error("LMI solve failed numerically: {diagnostics}")]
    NumericalFailure { diagnostics: String },
    #[error("{what} is ill conditioned (condition estimate {cond:.3e} exceeds {limit:.1e})")]
    IllConditioned {
        what: &'static str,
        cond: f64,
        limit: f64,
    },
    #[error("budget assumption violated: target intervention sits on or outside the bounds for agents {agents:?}")]
    AssumptionViolated { agents: Vec<usize> },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("integral gain K_z is singular")]
    SingularKz,
    #[error("certificate re-verification failed: {0}")]
    CertificateCheckFailed(String),
    #[error(transparent)]
    Lmi(#[from] lmi::LmiError),
}

/// PI intervention gains `u = K_x x + K_z z`.
///
/// `new` enforces the `K_z` condition estimate required for a unique
/// closed-loop equilibrium; `new_unchecked` exists for baselines such as
/// the zero-gain open loop, which model-based reports then reject with
/// `SingularKz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    kx: DMatrix<f64>,
    kz: DMatrix<f64>,
}

impl ControllerGains {
    pub const KZ_CONDITION_LIMIT: f64 = 1e10;

    pub fn new(kx: DMatrix<f64>, kz: DMatrix<f64>) -> Result<Self, SynthesisError> {
        assert_eq!(kx.nrows(), kx.ncols());
        assert_eq!(kz.nrows(), kz.ncols());
        assert_eq!(kx.nrows(), kz.nrows());
        let cond = numeric::condition_number(&kz);
        if !cond.is_finite() || cond > Self::KZ_CONDITION_LIMIT {
            return Err(SynthesisError::IllConditioned {
                what: "K_z",
                cond,
                limit: Self::KZ_CONDITION_LIMIT,
            });
        }
        Ok(Self { kx, kz })
    }

    pub fn new_unchecked(kx: DMatrix<f64>, kz: DMatrix<f64>) -> Self {
        Self { kx, kz }
    }

    pub fn zero(n: usize) -> Self {
        Self::new_unchecked(DMatrix::zeros(n, n), DMatrix::zeros(n, n))
    }

    pub fn kx(&self) -> &DMatrix<f64> {
        &self.kx
    }

    pub fn kz(&self) -> &DMatrix<f64> {
        &self.kz
    }

    pub fn n_agents(&self) -> usize {
        self.kx.nrows()
    }

    /// Stacked `[K_x  K_z]`, shape `N x 2N`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.n_agents();
        let mut k = DMatrix::zeros(n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&self.kx);
        k.view_mut((0, n), (n, n)).copy_from(&self.kz);
        k
    }

    fn from_stacked(k: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = k.nrows();
        (
            k.view((0, 0), (n, n)).into_owned(),
            k.view((0, n), (n, n)).into_owned(),
        )
    }
}

/// Elementwise intervention budget `u_min <= u_n <= u_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetBounds {
    pub u_min: f64,
    pub u_max: f64,
}

impl BudgetBounds {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self, SynthesisError> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
            return Err(SynthesisError::PreconditionViolated(format!(
                "budget bounds must satisfy u_min < u_max, got [{u_min}, {u_max}]"
            )));
        }
        Ok(Self { u_min, u_max })
    }
}

/// Unconstrained design output: gains plus the Lyapunov certificate.
#[derive(Debug, Clone)]
pub struct UnconstrainedCertificate {
    pub gains: ControllerGains,
    /// Lyapunov matrix `Xi0 * Theta` (order 2N), positive definite.
    pub p_lyap: DMatrix<f64>,
    /// Decision matrix in normalized data coordinates (data divided by
    /// `data_scale` before the solve; the products `Xi0*Theta` etc. are
    /// scale invariant).
    pub theta: DMatrix<f64>,
    pub data_scale: f64,
    /// Verified margin of the prescaled design LMI.
    pub lmi_margin: f64,
    /// Smallest eigenvalue of `P - (Xi1 Th) P^{-1} (Xi1 Th)^T`.
    pub decrease_margin: f64,
    /// `Xi1 * Theta`, the data-side image of `(A + BK) * P`.
    pub xi1_theta: DMatrix<f64>,
}

/// Budget-constrained design output: gains, Lyapunov matrix, sector
/// certificate, and the region-of-attraction ellipsoid `E(m, 1)`.
#[derive(Debug, Clone)]
pub struct BudgetCertificate {
    pub gains: ControllerGains,
    /// Lyapunov matrix `M = (Xi0 ThetaBar)^{-1}` (order 2N).
    pub m: DMatrix<f64>,
    /// `M^{-1} = Xi0 ThetaBar`, kept explicitly for volume and sampling.
    pub m_inv: DMatrix<f64>,
    /// Diagonal positive definite sector multiplier.
    pub s: DMatrix<f64>,
    /// Auxiliary variable `Z = H * Xi0 ThetaBar`.
    pub z_var: DMatrix<f64>,
    /// Sector matrix `H = Z * (Xi0 ThetaBar)^{-1}`, shape `N x 2N`.
    pub h: DMatrix<f64>,
    /// Per-agent slack to the nearest budget bound at the target.
    pub rho: DVector<f64>,
    /// Volume lower bound when maximize_volume was requested.
    pub eta: Option<f64>,
    pub theta_bar: DMatrix<f64>,
    pub data_scale: f64,
    pub lmi_margin: f64,
}

impl BudgetCertificate {
    pub fn n_agents(&self) -> usize {
        self.gains.n_agents()
    }

    /// `H_(n) M^{-1} H_(n)^T` for each agent; certified strictly below
    /// `rho_n^2`, which places the ellipsoid inside the sector region.
    pub fn sector_levels(&self) -> DVector<f64> {
        let n = self.n_agents();
        DVector::from_fn(n, |i, _| {
            let hi = self.h.row(i);
            (hi * &self.m_inv * hi.transpose())[(0, 0)]
        })
    }
}

/// Options shared by both designs.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub lmi: SolveOptions,
    /// Condition cap for inverting `Xi0 * Theta`.
    pub condition_limit: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            lmi: SolveOptions::default(),
            condition_limit: 1e10,
        }
    }
}

impl SynthesisOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            lmi: SolveOptions {
                backend,
                ..SolveOptions::default()
            },
            ..Self::default()
        }
    }
}

/// A design LMI ready to solve, with the normalized data it was built
/// from. The products `Xi0*Theta` etc. are invariant to the
/// normalization, so certificates computed from the normalized matrices
/// are certificates for the original data.
pub struct DesignProblem {
    pub problem: LmiProblem,
    pub v0n: DMatrix<f64>,
    pub xi0n: DMatrix<f64>,
    pub xi1n: DMatrix<f64>,
    pub data_scale: f64,
    /// Volume variable, present when the problem was built with one.
    pub eta: Option<lmi::VarId>,
}

/// Build the unconstrained design LMI: `Theta` with the symmetric alias
/// `P = Xi0 Theta` (its own declared-symmetric variable plus an equality
/// constraint) and the block inequality `[[P, Xi1 Theta], [*, P]] > 0`.
pub fn build_unconstrained_problem(data: &DataMatrices) -> Result<DesignProblem, SynthesisError> {
    let n = data.n_agents();
    let cols = data.n_columns();
    if cols < 3 * n {
        return Err(SynthesisError::InsufficientColumns {
            need: 3 * n,
            got: cols,
            n_agents: n,
        });
    }
    let (v0n, xi0n, xi1n, scale) = normalized(data)?;

    let mut problem = LmiProblem::new();
    let theta = problem.add_var(
        "theta",
        VarKind::Full {
            rows: cols,
            cols: 2 * n,
        },
    );
    let p_alias = problem.add_var("p_lyap", VarKind::Symmetric { dim: 2 * n });

    let theta_expr = problem.var(theta);
    let p_expr = problem.var(p_alias);
    let xi0_theta = MatrixExpr::mul_left(&xi0n, &theta_expr);
    let xi1_theta = MatrixExpr::mul_left(&xi1n, &theta_expr);
    problem.require_eq("p-alias", &p_expr, &xi0_theta)?;
    let block = MatrixExpr::from_blocks(&[
        &[&p_expr, &xi1_theta],
        &[&xi1_theta.transpose(), &p_expr],
    ]);
    problem.require_pd("stability", block)?;

    Ok(DesignProblem {
        problem,
        v0n,
        xi0n,
        xi1n,
        data_scale: scale,
        eta: None,
    })
}

/// Stabilizing gains from data alone.
///
/// Finds `Theta` with the symmetric alias `P = Xi0 Theta` (declared as
/// its own symmetric variable and tied down by an equality constraint)
/// such that `[[P, Xi1 Theta], [*, P]]` is positive definite, then
/// returns `K = V0 Theta (Xi0 Theta)^{-1}` with the certificate.
pub fn synthesize_unconstrained(
    data: &DataMatrices,
    opts: &SynthesisOptions,
) -> Result<UnconstrainedCertificate, SynthesisError> {
    let design = build_unconstrained_problem(data)?;
    let DesignProblem {
        problem,
        v0n,
        xi0n,
        xi1n,
        data_scale: scale,
        ..
    } = design;

    let solution = lmi::solve_feasibility(&problem, &opts.lmi);
    let solution = expect_feasible(solution, data)?;

    let theta_val = solution.value("theta").unwrap().clone();
    let g = &xi0n * &theta_val;
    check_condition(&g, "Xi0 * Theta", opts.condition_limit)?;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::IllConditioned {
            what: "Xi0 * Theta",
            cond: f64::INFINITY,
            limit: opts.condition_limit,
        })?;
    let k = &v0n * &theta_val * &g_inv;
    let (kx, kz) = ControllerGains::from_stacked(&k);
    let gains = ControllerGains::new(kx, kz)?;

    let xi1_theta_val = &xi1n * &theta_val;
    let p_sym = 0.5 * (&g + g.transpose());
    let decrease = &p_sym - &xi1_theta_val * &g_inv * xi1_theta_val.transpose();
    let decrease_margin = numeric::sym_min_eig(&decrease);
    let p_margin = numeric::sym_min_eig(&p_sym);
    if p_margin <= 0.0 || decrease_margin < opts.lmi.feasibility_margin {
        return Err(SynthesisError::CertificateCheckFailed(format!(
            "Lyapunov certificate margins too small: min eig(P) = {p_margin:.3e}, \
             decrease margin = {decrease_margin:.3e}"
        )));
    }

    Ok(UnconstrainedCertificate {
        gains,
        p_lyap: p_sym,
        theta: theta_val,
        data_scale: scale,
        lmi_margin: solution.margin,
        decrease_margin,
        xi1_theta: xi1_theta_val,
    })
}

/// Per-agent distance from the target intervention to the nearest budget
/// bound. Errors when any `u*_n` touches or leaves the budget box.
pub fn compute_rho(
    bounds: &BudgetBounds,
    u_star: &DVector<f64>,
) -> Result<DVector<f64>, SynthesisError> {
    let offenders: Vec<usize> = u_star
        .iter()
        .enumerate()
        .filter(|&(_, &u)| u <= bounds.u_min || u >= bounds.u_max)
        .map(|(i, _)| i)
        .collect();
    if !offenders.is_empty() {
        return Err(SynthesisError::AssumptionViolated { agents: offenders });
    }
    Ok(DVector::from_fn(u_star.len(), |i, _| {
        (u_star[i] - bounds.u_min)
            .abs()
            .min((bounds.u_max - u_star[i]).abs())
    }))
}

/// Worst-case `rho` over elementwise interval bounds on the (unknown)
/// target intervention. Collapses to [`compute_rho`] for degenerate
/// intervals and never exceeds the true `rho` when the box contains it.
pub fn rho_lower_bound(
    bounds: &BudgetBounds,
    u_star_lower: &DVector<f64>,
    u_star_upper: &DVector<f64>,
) -> Result<DVector<f64>, SynthesisError> {
    assert_eq!(u_star_lower.len(), u_star_upper.len());
    let mut offenders = Vec::new();
    for i in 0..u_star_lower.len() {
        if u_star_lower[i] > u_star_upper[i]
            || u_star_lower[i] <= bounds.u_min
            || u_star_upper[i] >= bounds.u_max
        {
            offenders.push(i);
        }
    }
    if !offenders.is_empty() {
        return Err(SynthesisError::AssumptionViolated { agents: offenders });
    }
    Ok(DVector::from_fn(u_star_lower.len(), |i, _| {
        (u_star_lower[i] - bounds.u_min).min(bounds.u_max - u_star_upper[i])
    }))
}

/// Build the budget design LMI: the 3x3 Lyapunov/sector block with
/// `B = [I; 0]`, the per-agent sector containment blocks against
/// `rho_n^2`, and (optionally) the volume variable with
/// `Xi0 ThetaBar > eta I`.
pub fn build_budget_problem(
    data: &DataMatrices,
    rho: &DVector<f64>,
    with_volume_var: bool,
) -> Result<DesignProblem, SynthesisError> {
    let n = data.n_agents();
    let cols = data.n_columns();
    if cols < 3 * n {
        return Err(SynthesisError::InsufficientColumns {
            need: 3 * n,
            got: cols,
            n_agents: n,
        });
    }
    if rho.len() != n || rho.iter().any(|&r| !(r > 0.0)) {
        return Err(SynthesisError::PreconditionViolated(
            "rho must be a strictly positive vector, one entry per agent".to_string(),
        ));
    }
    let (v0n, xi0n, xi1n, scale) = normalized(data)?;

    let mut problem = LmiProblem::new();
    let theta = problem.add_var(
        "theta_bar",
        VarKind::Full {
            rows: cols,
            cols: 2 * n,
        },
    );
    let p_alias = problem.add_var("m_inv", VarKind::Symmetric { dim: 2 * n });
    let s_var = problem.add_var("s", VarKind::Diagonal { dim: n });
    let z_var = problem.add_var("z", VarKind::Full { rows: n, cols: 2 * n });
    let eta_var = with_volume_var.then(|| problem.add_var("eta", VarKind::Scalar));

    let theta_expr = problem.var(theta);
    let p_expr = problem.var(p_alias);
    let s_expr = problem.var(s_var);
    let z_expr = problem.var(z_var);

    let xi0_theta = MatrixExpr::mul_left(&xi0n, &theta_expr);
    let xi1_theta = MatrixExpr::mul_left(&xi1n, &theta_expr);
    let v0_theta = MatrixExpr::mul_left(&v0n, &theta_expr);
    problem.require_eq("m-inv-alias", &p_expr, &xi0_theta)?;

    // [ P        *    *  ]
    // [ V0Th+Z   2S   *  ]   with B = [I; 0] known under Q = I.
    // [ Xi1Th    BS   P  ]
    let v0z = v0_theta.add(&z_expr);
    let b_top = b_identity_top(n);
    let bs = MatrixExpr::mul_left(&b_top, &s_expr);
    let two_s = s_expr.scaled(2.0);
    let big = MatrixExpr::from_blocks(&[
        &[&p_expr, &v0z.transpose(), &xi1_theta.transpose()],
        &[&v0z, &two_s, &bs.transpose()],
        &[&xi1_theta, &bs, &p_expr],
    ]);
    problem.require_pd("lyapunov-sector", big)?;

    // Per-agent sector containment [[P, Z_(n)'], [Z_(n), rho_n^2]].
    for i in 0..n {
        let z_row = z_expr.row(i);
        let rho_sq = MatrixExpr::from_constant(&DMatrix::from_element(1, 1, rho[i] * rho[i]));
        let block = MatrixExpr::from_blocks(&[
            &[&p_expr, &z_row.transpose()],
            &[&z_row, &rho_sq],
        ]);
        problem.require_pd(&format!("sector-{i}"), block)?;
    }

    if let Some(eta) = eta_var {
        let mut eta_i = MatrixExpr::zeros(2 * n, 2 * n);
        for i in 0..2 * n {
            *eta_i.entry_mut(i, i) = problem.scalar(eta);
        }
        let volume_expr = problem.var(p_alias).sub(&eta_i);
        problem.require_pd("volume", volume_expr)?;
        problem.set_objective(problem.scalar(eta));
    }

    Ok(DesignProblem {
        problem,
        v0n,
        xi0n,
        xi1n,
        data_scale: scale,
        eta: eta_var,
    })
}

/// Budget-constrained design with the saturated PI protocol.
///
/// Requires data collected from a game with unit cost curvatures
/// (`Q = I`), so the input matrix `[I; 0]` is known without a model; use
/// [`check_identity_costs`] to assert that on the simulation side. When
/// `maximize_volume` is set, the additional inequality
/// `Xi0 ThetaBar > eta I` is imposed and `eta` maximized up to a cap
/// estimated from a preliminary feasibility solve.
pub fn synthesize_budget(
    data: &DataMatrices,
    rho: &DVector<f64>,
    maximize_volume: bool,
    opts: &SynthesisOptions,
) -> Result<BudgetCertificate, SynthesisError> {
    let design = build_budget_problem(data, rho, maximize_volume)?;
    let DesignProblem {
        mut problem,
        v0n,
        xi0n,
        xi1n,
        data_scale: scale,
        eta: eta_var,
    } = design;

    let solution = if let Some(eta) = eta_var {
        let mut lmi_opts = opts.lmi.clone();
        let eta_cap = match lmi_opts.eta_bracket {
            Some(cap) => cap,
            None => {
                // Upper bracket from a preliminary feasibility solve:
                // lambda_max(Xi0 ThetaBar) <= sigma_max(Xi0) * ||ThetaBar||.
                let base = lmi::solve_feasibility(&problem, &opts.lmi);
                let base = expect_feasible(base, data)?;
                let theta0 = base.value("theta_bar").unwrap();
                let cap = numeric::sigma_max(&xi0n) * numeric::sigma_max(theta0);
                lmi_opts.eta_bracket = Some(cap);
                cap
            }
        };
        // The cap also enters as a constraint so the direct objective
        // path stays bounded and well scaled.
        let mut cap_expr = MatrixExpr::zeros(1, 1);
        *cap_expr.entry_mut(0, 0) = lmi::LinExpr {
            constant: eta_cap,
            terms: vec![],
        };
        let eta_scalar = problem.scalar(eta);
        let mut minus_eta = MatrixExpr::zeros(1, 1);
        *minus_eta.entry_mut(0, 0) = eta_scalar.scaled(-1.0);
        problem.require_pd("eta-cap", cap_expr.add(&minus_eta))?;
        lmi::maximize_scalar(&problem, &lmi_opts)?
    } else {
        lmi::solve_feasibility(&problem, &opts.lmi)
    };
    let solution = expect_feasible(solution, data)?;

    let theta_val = solution.value("theta_bar").unwrap().clone();
    let s_val = solution.value("s").unwrap().clone();
    let z_val = solution.value("z").unwrap().clone();
    let g = &xi0n * &theta_val;
    check_condition(&g, "Xi0 * ThetaBar", opts.condition_limit)?;
    let m_inv = 0.5 * (&g + g.transpose());
    let m = m_inv
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::IllConditioned {
            what: "Xi0 * ThetaBar",
            cond: f64::INFINITY,
            limit: opts.condition_limit,
        })?;
    let m = 0.5 * (&m + m.transpose());
    let k = &v0n * &theta_val * &m;
    let (kx, kz) = ControllerGains::from_stacked(&k);
    let gains = ControllerGains::new(kx, kz)?;
    let h = &z_val * &m;

    let cert = BudgetCertificate {
        gains,
        m,
        m_inv,
        s: s_val,
        z_var: z_val,
        h,
        rho: rho.clone(),
        eta: solution.objective,
        theta_bar: theta_val,
        data_scale: scale,
        lmi_margin: solution.margin,
    };
    reverify_budget(&cert, &v0n, &xi0n, &xi1n, opts)?;
    Ok(cert)
}

/// Substitute the returned variables back into the design inequalities
/// and re-check them with plain eigenvalue computations, independent of
/// the LMI solver's own verification.
fn reverify_budget(
    cert: &BudgetCertificate,
    v0n: &DMatrix<f64>,
    xi0n: &DMatrix<f64>,
    xi1n: &DMatrix<f64>,
    opts: &SynthesisOptions,
) -> Result<(), SynthesisError> {
    let n = cert.n_agents();
    let g = xi0n * &cert.theta_bar;
    let xi1_theta = xi1n * &cert.theta_bar;
    let v0z = v0n * &cert.theta_bar + &cert.z_var;
    let mut big = DMatrix::zeros(5 * n, 5 * n);
    big.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&g);
    big.view_mut((2 * n, 0), (n, 2 * n)).copy_from(&v0z);
    big.view_mut((0, 2 * n), (2 * n, n)).copy_from(&v0z.transpose());
    big.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(2.0 * &cert.s));
    big.view_mut((3 * n, 0), (2 * n, 2 * n)).copy_from(&xi1_theta);
    big.view_mut((0, 3 * n), (2 * n, 2 * n))
        .copy_from(&xi1_theta.transpose());
    let bs = b_identity_top(n) * &cert.s;
    big.view_mut((3 * n, 2 * n), (2 * n, n)).copy_from(&bs);
    big.view_mut((2 * n, 3 * n), (n, 2 * n)).copy_from(&bs.transpose());
    big.view_mut((3 * n, 3 * n), (2 * n, 2 * n)).copy_from(&g);

    // Data is normalized to unit max-abs upstream, so the assembled
    // block has O(1) coefficients and an absolute margin is meaningful
    // even when eta-maximization drives the solution itself large.
    let margin = numeric::sym_min_eig(&big);
    if margin < opts.lmi.feasibility_margin {
        return Err(SynthesisError::CertificateCheckFailed(format!(
            "Lyapunov/sector block matrix margin {margin:.3e} below {:.1e}",
            opts.lmi.feasibility_margin
        )));
    }

    let levels = cert.sector_levels();
    for i in 0..n {
        if !(levels[i] < cert.rho[i] * cert.rho[i]) {
            return Err(SynthesisError::CertificateCheckFailed(format!(
                "sector containment failed for agent {i}: H M^-1 H' = {:.6e} vs rho^2 = {:.6e}",
                levels[i],
                cert.rho[i] * cert.rho[i]
            )));
        }
    }
    Ok(())
}

/// Model-based closed-loop report (oracle; test and simulation only).
#[derive(Debug, Clone)]
pub struct ClosedLoopReport {
    /// Spectral radius of `A + BK` from the true game.
    pub spectral_radius: f64,
    /// Integrator equilibrium `z* = K_z^{-1}((Q - WP - K_x) x* - d)`.
    pub z_star: DVector<f64>,
    /// True when the radius is below `1 - 1e-9`.
    pub stable: bool,
}

/// Evaluate gains against the true game: closed-loop spectral radius and
/// the unique equilibrium pair `(x*, z*)`.
pub fn verify_closed_loop(
    game: &NetworkGame,
    x_star: &TargetProfile,
    gains: &ControllerGains,
) -> Result<ClosedLoopReport, SynthesisError> {
    let sys = game.open_loop_matrices(x_star);
    let closed = &sys.a + &sys.b * gains.stacked();
    let radius = numeric::spectral_radius(&closed);
    let rhs = (game.interaction_matrix() - gains.kx()) * x_star.as_vector() - game.d();
    let z_star = gains
        .kz()
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|z| z.iter().all(|v| v.is_finite()))
        .ok_or(SynthesisError::SingularKz)?;
    Ok(ClosedLoopReport {
        spectral_radius: radius,
        z_star,
        stable: radius < 1.0 - 1e-9,
    })
}

/// Assert the unit-curvature precondition of the budget design against
/// the simulated game.
pub fn check_identity_costs(game: &NetworkGame) -> Result<(), SynthesisError> {
    if game.has_identity_costs() {
        Ok(())
    } else {
        Err(SynthesisError::PreconditionViolated(
            "budget synthesis requires unit cost curvatures (Q = I); \
             regenerate the game with q_n = 1"
                .to_string(),
        ))
    }
}

fn b_identity_top(n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        b[(i, i)] = 1.0;
    }
    b
}

fn normalized(
    data: &DataMatrices,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64), SynthesisError> {
    let scale = numeric::max_abs(&data.v0)
        .max(numeric::max_abs(&data.xi0))
        .max(numeric::max_abs(&data.xi1));
    if scale <= 0.0 || !scale.is_finite() {
        return Err(SynthesisError::DegenerateData);
    }
    Ok((
        &data.v0 / scale,
        &data.xi0 / scale,
        &data.xi1 / scale,
        scale,
    ))
}

fn check_condition(
    m: &DMatrix<f64>,
    what: &'static str,
    limit: f64,
) -> Result<(), SynthesisError> {
    let cond = numeric::condition_number(m);
    if !cond.is_finite() || cond > limit {
        return Err(SynthesisError::IllConditioned { what, cond, limit });
    }
    Ok(())
}

fn expect_feasible(
    solution: LmiSolution,
    data: &DataMatrices,
) -> Result<LmiSolution, SynthesisError> {
    match solution.status {
        LmiStatus::Feasible => Ok(solution),
        LmiStatus::Infeasible { certified } => {
            let rank = stacked_data_rank(&data.v0, &data.xi0);
            let need = 3 * data.n_agents();
            let hint = if rank.rank < need {
                format!(
                    "stacked data matrix [V0; Xi0] is rank deficient ({}/{need}): \
                     the excitation is not rich enough, collect more or re-seed",
                    rank.rank
                )
            } else {
                format!("stacked data matrix [V0; Xi0] has full row rank ({need}/{need}): \
                     the constraint set itself is infeasible")
            };
            Err(SynthesisError::LmiInfeasible {
                certified,
                diagnostics: format!("{}; {hint}", solution.diagnostics),
            })
        }
        LmiStatus::NumericalFailure => {
            let rank = stacked_data_rank(&data.v0, &data.xi0);
            let need = 3 * data.n_agents();
            let hint = if rank.rank < need {
                format!(
                    "; note: stacked data matrix [V0; Xi0] is rank deficient ({}/{need}), \
                     which typically explains the breakdown",
                    rank.rank
                )
            } else {
                String::new()
            };
            Err(SynthesisError::NumericalFailure {
                diagnostics: format!("{}{hint}", solution.diagnostics),
            })
        }
    }
}
