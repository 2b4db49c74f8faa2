//! Excitation generation, trajectory collection, differenced data
//! matrices, and persistency-of-excitation checks.
//!
//! The regulator's dataset is a length-`T` intervention sequence and the
//! corresponding `T+1` actions produced by the best-response dynamics.
//! Differencing removes the unknown constant offset, and the target
//! profile enters the second block row of the state data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{GameError, NetworkGame, TargetProfile};
use crate::numeric;

/// Trajectory states beyond this magnitude abort collection.
pub const OVERFLOW_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("excitation bounds must satisfy lower < upper, got [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("horizon {got} is too short; at least {min} steps are required")]
    HorizonTooShort { got: usize, min: usize },
    #[error("expected {expected} rows/entries for `{field}`, got {got}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state magnitude exceeded {OVERFLOW_LIMIT:e} at step {step}; the open loop is unstable over this horizon, shorten T or rescale the game")]
    Overflow { step: usize },
    #[error(
        "insufficient data for a PE check of order {order}: the depth-{order} Hankel matrix has {rows} rows but only {cols} columns; \
         a horizon of at least T = {min_horizon} is required for {n_agents} agents"
    )]
    InsufficientData {
        order: usize,
        rows: usize,
        cols: usize,
        min_horizon: usize,
        n_agents: usize,
    },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Seeded uniform excitation over a bounded interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    pub lower: f64,
    pub upper: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl ExcitationSpec {
    pub fn new(lower: f64, upper: f64, horizon: usize, seed: u64) -> Result<Self, DataError> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(DataError::InvalidBounds { lower, upper });
        }
        if horizon < Trajectory::MIN_HORIZON {
            return Err(DataError::HorizonTooShort {
                got: horizon,
                min: Trajectory::MIN_HORIZON,
            });
        }
        Ok(Self {
            lower,
            upper,
            horizon,
            seed,
        })
    }
}

/// Recorded intervention/action data. Time runs along columns:
/// `u_seq` is `N x T`, `x_seq` is `N x (T+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    u_seq: DMatrix<f64>,
    x_seq: DMatrix<f64>,
}

impl Trajectory {
    /// Shortest horizon that yields at least one differenced column.
    pub const MIN_HORIZON: usize = 3;

    pub fn new(u_seq: DMatrix<f64>, x_seq: DMatrix<f64>) -> Result<Self, DataError> {
        let horizon = u_seq.ncols();
        if horizon < Self::MIN_HORIZON {
            return Err(DataError::HorizonTooShort {
                got: horizon,
                min: Self::MIN_HORIZON,
            });
        }
        if x_seq.ncols() != horizon + 1 {
            return Err(DataError::DimensionMismatch {
                field: "x_seq columns",
                expected: horizon + 1,
                got: x_seq.ncols(),
            });
        }
        if x_seq.nrows() != u_seq.nrows() {
            return Err(DataError::DimensionMismatch {
                field: "x_seq rows",
                expected: u_seq.nrows(),
                got: x_seq.nrows(),
            });
        }
        Ok(Self { u_seq, x_seq })
    }

    pub fn horizon(&self) -> usize {
        self.u_seq.ncols()
    }

    pub fn n_agents(&self) -> usize {
        self.u_seq.nrows()
    }

    /// Interventions, one column per time step `0..T-1`.
    pub fn interventions(&self) -> &DMatrix<f64> {
        &self.u_seq
    }

    /// Actions, one column per time step `0..T`.
    pub fn actions(&self) -> &DMatrix<f64> {
        &self.x_seq
    }
}

/// Differenced data matrices plus the target the regulator aims for.
///
/// `v0` is `N x (T-1)`; `xi0` and `xi1` are `2N x (T-1)`. The top block
/// rows hold action differences, the bottom block rows hold the gap to
/// the target profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub v0: DMatrix<f64>,
    pub xi0: DMatrix<f64>,
    pub xi1: DMatrix<f64>,
    pub x_star: DVector<f64>,
}

impl DataMatrices {
    pub fn n_agents(&self) -> usize {
        self.v0.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.v0.ncols()
    }
}

/// Deterministic i.i.d. uniform excitation: `N x T`, identical output for
/// identical `(spec, n_agents)`. Draw order is time-major (all agents at
/// step 0, then step 1, ...).
pub fn generate_excitation(spec: &ExcitationSpec, n_agents: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut u = DMatrix::zeros(n_agents, spec.horizon);
    for t in 0..spec.horizon {
        for n in 0..n_agents {
            u[(n, t)] = rng.gen_range(spec.lower..spec.upper);
        }
    }
    u
}

/// Run the best-response dynamics under the given intervention sequence,
/// recording all actions. Aborts with `Overflow` when the state leaves
/// `[-OVERFLOW_LIMIT, OVERFLOW_LIMIT]`.
pub fn collect_trajectory(
    game: &NetworkGame,
    u_seq: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<Trajectory, DataError> {
    let n = game.n_agents();
    if u_seq.nrows() != n {
        return Err(DataError::DimensionMismatch {
            field: "u_seq rows",
            expected: n,
            got: u_seq.nrows(),
        });
    }
    let horizon = u_seq.ncols();
    let mut x_seq = DMatrix::zeros(n, horizon + 1);
    x_seq.column_mut(0).copy_from(x0);
    let mut x = x0.clone();
    for t in 0..horizon {
        x = game.best_response_step(&x, &u_seq.column(t).into_owned())?;
        if numeric::max_abs(&DMatrix::from_column_slice(n, 1, x.as_slice())) > OVERFLOW_LIMIT {
            return Err(DataError::Overflow { step: t + 1 });
        }
        x_seq.column_mut(t + 1).copy_from(&x);
    }
    Trajectory::new(u_seq.clone(), x_seq)
}

/// Build the differenced data matrices from a trajectory and a target.
pub fn build_data_matrices(
    traj: &Trajectory,
    x_star: &TargetProfile,
) -> Result<DataMatrices, DataError> {
    let n = traj.n_agents();
    let t = traj.horizon();
    if x_star.len() != n {
        return Err(DataError::DimensionMismatch {
            field: "x_star",
            expected: n,
            got: x_star.len(),
        });
    }
    let cols = t - 1;
    let u = traj.interventions();
    let x = traj.actions();
    let xs = x_star.as_vector();

    let mut v0 = DMatrix::zeros(n, cols);
    let mut xi0 = DMatrix::zeros(2 * n, cols);
    let mut xi1 = DMatrix::zeros(2 * n, cols);
    for j in 0..cols {
        for i in 0..n {
            v0[(i, j)] = u[(i, j + 1)] - u[(i, j)];
            xi0[(i, j)] = x[(i, j + 1)] - x[(i, j)];
            xi0[(n + i, j)] = xs[i] - x[(i, j)];
            xi1[(i, j)] = x[(i, j + 2)] - x[(i, j + 1)];
            xi1[(n + i, j)] = xs[i] - x[(i, j + 1)];
        }
    }
    Ok(DataMatrices {
        v0,
        xi0,
        xi1,
        x_star: xs.clone(),
    })
}

/// Outcome of a persistency-of-excitation rank check.
#[derive(Debug, Clone)]
pub struct PeReport {
    pub order: usize,
    pub hankel_rows: usize,
    pub hankel_cols: usize,
    pub required_rank: usize,
    pub numerical_rank: usize,
    pub smallest_retained_singular_value: f64,
    pub passed: bool,
}

impl std::fmt::Display for PeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "PE order {}: {} ({} x {} Hankel, rank {}/{}, smallest retained sigma {:.3e})",
            self.order,
            if self.passed { "pass" } else { "FAIL" },
            self.hankel_rows,
            self.hankel_cols,
            self.numerical_rank,
            self.required_rank,
            self.smallest_retained_singular_value,
        )
    }
}

/// Check persistency of excitation of the differenced input sequence
/// (the columns of `v0`) at the given order: the depth-`order` block
/// Hankel matrix must have full row rank.
///
/// Errors with `InsufficientData` when the Hankel matrix has no more
/// columns than rows, i.e. when the horizon is below
/// [`pe_minimum_horizon`].
pub fn pe_check(v0: &DMatrix<f64>, order: usize) -> Result<PeReport, DataError> {
    assert!(order >= 1, "PE order must be at least 1");
    let n = v0.nrows();
    let samples = v0.ncols();
    let rows = n * order;
    let horizon = samples + 1; // v0 holds T-1 differenced samples
    let min_horizon = n * order + order + 1;
    if samples < order || samples - order + 1 <= rows {
        return Err(DataError::InsufficientData {
            order,
            rows,
            cols: samples.saturating_sub(order - 1),
            min_horizon,
            n_agents: n,
        });
    }
    let _ = horizon;
    let cols = samples - order + 1;
    let mut hankel = DMatrix::zeros(rows, cols);
    for block in 0..order {
        for j in 0..cols {
            hankel
                .view_mut((block * n, j), (n, 1))
                .copy_from(&v0.column(block + j));
        }
    }
    let report = numeric::numerical_rank(&hankel);
    Ok(PeReport {
        order,
        hankel_rows: rows,
        hankel_cols: cols,
        required_rank: rows,
        numerical_rank: report.rank,
        smallest_retained_singular_value: report.smallest_retained,
        passed: report.rank == rows,
    })
}

/// Row-rank check of the stacked matrix `[V0; Xi0]`, which must have full
/// row rank `3N` for the data-driven design to be solvable.
pub fn stacked_data_rank(v0: &DMatrix<f64>, xi0: &DMatrix<f64>) -> numeric::RankReport {
    let n = v0.nrows();
    let cols = v0.ncols();
    assert_eq!(xi0.ncols(), cols, "V0 and Xi0 must have equal column counts");
    assert_eq!(xi0.nrows(), 2 * n);
    let mut stacked = DMatrix::zeros(3 * n, cols);
    stacked.view_mut((0, 0), (n, cols)).copy_from(v0);
    stacked.view_mut((n, 0), (2 * n, cols)).copy_from(xi0);
    numeric::numerical_rank(&stacked)
}

/// Smallest horizon `T` for which the depth-`2N+1` Hankel matrix over the
/// length-`T-1` differenced input sequence has more columns than rows:
/// `T = N(2N+1) + (2N+1) + 1`.
pub fn pe_minimum_horizon(n_agents: usize) -> usize {
    assert!(n_agents >= 1);
    let order = 2 * n_agents + 1;
    n_agents * order + order + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn toy_game() -> NetworkGame {
        NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.3, 0.0]),
            DVector::from_vec(vec![1.0, 1.5]),
            DVector::from_vec(vec![-0.9, 0.7]),
            DVector::from_vec(vec![2.0, -1.0]),
        )
        .unwrap()
    }

    #[test]
    fn excitation_spec_rejects_degenerate_interval() {
        assert!(matches!(
            ExcitationSpec::new(0.0, 0.0, 80, 1),
            Err(DataError::InvalidBounds { .. })
        ));
        assert!(matches!(
            ExcitationSpec::new(2.0, -2.0, 80, 1),
            Err(DataError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn excitation_shape_bounds_and_determinism() {
        let spec = ExcitationSpec::new(-2.0, 2.0, 80, 7).unwrap();
        let u1 = generate_excitation(&spec, 5);
        let u2 = generate_excitation(&spec, 5);
        assert_eq!(u1.nrows(), 5);
        assert_eq!(u1.ncols(), 80);
        assert!(u1.iter().all(|&v| (-2.0..=2.0).contains(&v)));
        assert_eq!(u1, u2, "same seed must reproduce bit-identical draws");
        let u3 = generate_excitation(&ExcitationSpec::new(-2.0, 2.0, 80, 8).unwrap(), 5);
        assert_ne!(u1, u3);
    }

    #[test]
    fn trajectory_at_fixed_point_is_constant() {
        let game = toy_game();
        let u_bar = DVector::from_vec(vec![0.3, -0.2]);
        let ne = game.nash_equilibrium(&u_bar).unwrap();
        let t = 6;
        let mut u_seq = DMatrix::zeros(2, t);
        for j in 0..t {
            u_seq.column_mut(j).copy_from(&u_bar);
        }
        let traj = collect_trajectory(&game, &u_seq, &ne).unwrap();
        for j in 0..=t {
            assert!((traj.actions().column(j) - &ne).norm() < 1e-12);
        }
    }

    #[test]
    fn scalar_step_example() {
        // N = 1, q = 1, P = 0, d = 0, u = (1), x0 = 0 -> x = (0, 1, 1, 1).
        let game = NetworkGame::new(
            DMatrix::zeros(1, 1),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
        )
        .unwrap();
        let u_seq = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let traj = collect_trajectory(&game, &u_seq, &DVector::zeros(1)).unwrap();
        assert_eq!(traj.actions().row(0).clone_owned().as_slice(), &[0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn overflow_guard_fires_on_unstable_loop() {
        // q = 1, w = 1, P approximately permutation: response radius ~ 3.
        let game = NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.3, 0.3]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let u_seq = DMatrix::from_element(2, 60, 0.5);
        let err = collect_trajectory(&game, &u_seq, &DVector::from_element(2, 1.0)).unwrap_err();
        assert!(matches!(err, DataError::Overflow { .. }));
    }

    #[test]
    fn data_matrix_shapes() {
        let game = toy_game();
        let spec = ExcitationSpec::new(-1.0, 1.0, 30, 3).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let target = TargetProfile::new(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let data = build_data_matrices(&traj, &target).unwrap();
        assert_eq!(data.v0.shape(), (2, 29));
        assert_eq!(data.xi0.shape(), (4, 29));
        assert_eq!(data.xi1.shape(), (4, 29));
    }

    #[test]
    fn constant_data_at_equilibrium_produces_zero_blocks() {
        let game = toy_game();
        let u_bar = DVector::from_vec(vec![0.1, 0.2]);
        let ne = game.nash_equilibrium(&u_bar).unwrap();
        let mut u_seq = DMatrix::zeros(2, 8);
        for j in 0..8 {
            u_seq.column_mut(j).copy_from(&u_bar);
        }
        let traj = collect_trajectory(&game, &u_seq, &ne).unwrap();
        let target = TargetProfile::new(ne.clone()).unwrap();
        let data = build_data_matrices(&traj, &target).unwrap();
        assert!(numeric::max_abs(&data.v0) == 0.0);
        assert!(numeric::max_abs(&data.xi0) < 1e-12);
    }

    #[test]
    fn data_identity_against_open_loop_oracle() {
        let game = toy_game();
        let spec = ExcitationSpec::new(-2.0, 2.0, 40, 11).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let target = TargetProfile::new(DVector::from_vec(vec![1.5, -0.5])).unwrap();
        let data = build_data_matrices(&traj, &target).unwrap();
        let sys = game.open_loop_matrices(&target);
        let reconstructed = &sys.a * &data.xi0 + &sys.b * &data.v0;
        let err = numeric::max_abs(&(&data.xi1 - reconstructed));
        assert!(
            err <= 1e-10 * (1.0 + numeric::max_abs(&data.xi1)),
            "data identity residual {err}"
        );
    }

    #[test]
    fn xi1_top_is_shifted_xi0_top() {
        let game = toy_game();
        let spec = ExcitationSpec::new(-1.0, 1.0, 20, 5).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let target = TargetProfile::new(DVector::zeros(2)).unwrap();
        let data = build_data_matrices(&traj, &target).unwrap();
        for j in 0..data.n_columns() - 1 {
            for i in 0..2 {
                assert_eq!(data.xi1[(i, j)], data.xi0[(i, j + 1)]);
            }
        }
    }

    #[test]
    fn pe_fails_for_constant_input() {
        let v0 = DMatrix::from_element(2, 40, 1.0);
        let report = pe_check(&v0, 2).unwrap();
        assert!(!report.passed);
        // Every Hankel column repeats the same stacked vector.
        assert!(report.numerical_rank < report.required_rank);
        assert_eq!(report.numerical_rank, 1);
    }

    #[test]
    fn pe_passes_for_random_excitation_at_case_study_size() {
        let spec = ExcitationSpec::new(-2.0, 2.0, 80, 7).unwrap();
        let u = generate_excitation(&spec, 5);
        // Difference the raw input sequence directly; the check only sees v0.
        let mut v0 = DMatrix::zeros(5, 79);
        for j in 0..79 {
            let diff = u.column(j + 1) - u.column(j);
            v0.column_mut(j).copy_from(&diff);
        }
        let report = pe_check(&v0, 11).unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn pe_rank_monotone_in_order() {
        let spec = ExcitationSpec::new(-2.0, 2.0, 80, 13).unwrap();
        let u = generate_excitation(&spec, 2);
        let mut v0 = DMatrix::zeros(2, 79);
        for j in 0..79 {
            let diff = u.column(j + 1) - u.column(j);
            v0.column_mut(j).copy_from(&diff);
        }
        let at_five = pe_check(&v0, 5).unwrap().passed;
        assert!(at_five);
        for order in 1..5 {
            assert!(pe_check(&v0, order).unwrap().passed);
        }
    }

    #[test]
    fn pe_insufficient_data_threshold() {
        // N = 1, order 3: minimum horizon is 7, so 5 samples (T = 6) must error.
        let v0 = DMatrix::from_row_slice(1, 5, &[1.0, -1.0, 2.0, 0.5, -0.7]);
        assert!(matches!(
            pe_check(&v0, 3),
            Err(DataError::InsufficientData { min_horizon: 7, .. })
        ));
        // 6 samples (T = 7) is the smallest workable horizon.
        let v0 = DMatrix::from_row_slice(1, 6, &[1.0, -1.0, 2.0, 0.5, -0.7, 1.3]);
        assert!(pe_check(&v0, 3).is_ok());
    }

    #[test]
    fn stacked_rank_full_for_case_study_data() {
        let game = NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.3, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
            DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        let spec = ExcitationSpec::new(-2.0, 2.0, 40, 9).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let target = TargetProfile::new(DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let data = build_data_matrices(&traj, &target).unwrap();
        assert_eq!(stacked_data_rank(&data.v0, &data.xi0).rank, 6);
    }

    #[test]
    fn minimum_horizon_formula() {
        assert_eq!(pe_minimum_horizon(1), 7);
        assert_eq!(pe_minimum_horizon(2), 16);
        assert_eq!(pe_minimum_horizon(5), 67);
    }

    #[test]
    fn determinism_end_to_end() {
        let game = toy_game();
        let spec = ExcitationSpec::new(-2.0, 2.0, 25, 99).unwrap();
        let target = TargetProfile::new(DVector::from_vec(vec![0.3, 0.4])).unwrap();
        let run = || {
            let u = generate_excitation(&spec, 2);
            let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
            build_data_matrices(&traj, &target).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.v0, b.v0);
        assert_eq!(a.xi0, b.xi0);
        assert_eq!(a.xi1, b.xi1);
    }

    #[test]
    fn random_excitation_passes_pe_at_minimum_horizon() {
        // Randomized uniform excitation at minimal horizons (N <= 3 keeps
        // the unit test fast; the acceptance suite covers N = 5).
        for n in 1..=3usize {
            let order = 2 * n + 1;
            let t = pe_minimum_horizon(n);
            let mut passes = 0;
            for seed in 0..100u64 {
                let spec = ExcitationSpec::new(-2.0, 2.0, t, seed).unwrap();
                let u = generate_excitation(&spec, n);
                let mut v0 = DMatrix::zeros(n, t - 1);
                for j in 0..t - 1 {
                    let diff = u.column(j + 1) - u.column(j);
                    v0.column_mut(j).copy_from(&diff);
                }
                if pe_check(&v0, order).unwrap().passed {
                    passes += 1;
                }
            }
            assert!(passes >= 99, "N={n}: only {passes}/100 seeds passed PE");
        }
    }

    #[test]
    fn collected_data_stays_finite_for_case_study_scale() {
        // Mildly unstable 2-agent loop over a modest horizon stays within
        // the overflow guard and reproduces identically.
        let game = NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.6, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-1.8, -1.8]),
            DVector::from_vec(vec![4.0, 3.0]),
        )
        .unwrap();
        assert!(numeric::spectral_radius(&game.response_matrix()) > 1.0);
        let spec = ExcitationSpec::new(-2.0, 2.0, 40, 21).unwrap();
        let u = generate_excitation(&spec, 2);
        let t1 = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let t2 = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        assert!(t1.actions().iter().all(|v| v.is_finite()));
        assert_eq!(t1, t2);
        assert_relative_eq!(
            t1.actions()[(0, 40)],
            t2.actions()[(0, 40)]
        );
    }
}
