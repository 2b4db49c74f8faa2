//! Interconnected regulator-agents dynamics: the PI intervention
//! protocol (plain or saturated) driving the best-response dynamics,
//! with saturation flags, Lyapunov monitoring, region-of-attraction
//! membership, and convergence metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::data::OVERFLOW_LIMIT;
use crate::game::{GameError, NetworkGame, TargetProfile};
use crate::numeric;
use crate::synthesis::{BudgetBounds, BudgetCertificate, ControllerGains};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state magnitude exceeded {OVERFLOW_LIMIT:e} at step {step}; the loop is diverging")]
    Overflow { step: usize },
    #[error("dead-zone interval for agent {agent} is [{lo}, {hi}], which does not strictly contain 0")]
    InvalidDeadZone { agent: usize, lo: f64, hi: f64 },
    #[error("expected {expected} entries for `{field}`, got {got}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Integral state of the regulator: cumulative target-minus-action.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorState {
    pub z: DVector<f64>,
}

impl RegulatorState {
    pub fn zero(n: usize) -> Self {
        Self {
            z: DVector::zeros(n),
        }
    }
}

/// Elementwise clamp onto the budget box.
pub fn sat(v: &DVector<f64>, bounds: &BudgetBounds) -> DVector<f64> {
    v.map(|x| x.clamp(bounds.u_min, bounds.u_max))
}

/// Dead-zone of the shifted saturation: `phi(v) = sat(v) - v` over the
/// per-agent intervals `[u_min - u*_n, u_max - u*_n]`, each of which must
/// strictly contain zero.
pub fn dead_zone(v: &DVector<f64>, intervals: &[(f64, f64)]) -> Result<DVector<f64>, SimError> {
    if v.len() != intervals.len() {
        return Err(SimError::DimensionMismatch {
            field: "intervals",
            expected: v.len(),
            got: intervals.len(),
        });
    }
    for (agent, &(lo, hi)) in intervals.iter().enumerate() {
        if !(lo < 0.0 && hi > 0.0) {
            return Err(SimError::InvalidDeadZone { agent, lo, hi });
        }
    }
    Ok(DVector::from_fn(v.len(), |i, _| {
        v[i].clamp(intervals[i].0, intervals[i].1) - v[i]
    }))
}

/// One PI update: `u = K_x x + K_z z`, then integrate the target gap.
pub fn pi_step(
    x: &DVector<f64>,
    state: &RegulatorState,
    gains: &ControllerGains,
    x_star: &TargetProfile,
) -> (DVector<f64>, RegulatorState) {
    let u = gains.kx() * x + gains.kz() * &state.z;
    let z_next = &state.z + x_star.as_vector() - x;
    (u, RegulatorState { z: z_next })
}

/// Source for the integrator equilibrium used in Lyapunov monitoring.
/// `z*` depends on the hidden game, so it is either supplied by the
/// simulation-side oracle or estimated post hoc from the final state.
#[derive(Debug, Clone)]
pub enum ZStarMode {
    Oracle(DVector<f64>),
    PostHocEstimate,
}

/// Lyapunov monitoring: record `V(k) = delta' M delta` along the run.
#[derive(Debug, Clone)]
pub struct LyapunovMonitor {
    pub m: DMatrix<f64>,
    pub z_star: ZStarMode,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub steps: usize,
    pub bounds: Option<BudgetBounds>,
    pub lyapunov: Option<LyapunovMonitor>,
}

/// Recorded closed-loop run. Time runs along columns: `x_traj` and
/// `z_traj` are `N x (K+1)`, `u_traj` is `N x K`.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub x_traj: DMatrix<f64>,
    pub z_traj: DMatrix<f64>,
    pub u_traj: DMatrix<f64>,
    saturated: Vec<bool>,
    pub lyapunov: Option<Vec<f64>>,
    pub bounds: Option<BudgetBounds>,
}

impl ClosedLoopRun {
    pub fn steps(&self) -> usize {
        self.u_traj.ncols()
    }

    pub fn n_agents(&self) -> usize {
        self.x_traj.nrows()
    }

    pub fn saturated_at(&self, step: usize, agent: usize) -> bool {
        self.saturated[step * self.n_agents() + agent]
    }

    /// Fraction of (step, agent) pairs at a budget bound.
    pub fn saturation_duty_cycle(&self) -> f64 {
        if self.saturated.is_empty() {
            return 0.0;
        }
        self.saturated.iter().filter(|&&s| s).count() as f64 / self.saturated.len() as f64
    }
}

/// Run the closed loop for `steps` iterations from `(x0, z0)`.
///
/// With budget bounds the saturated protocol is used and every recorded
/// intervention lies inside the box by construction. The Lyapunov trace
/// measures the deviation from `(x*, z*)`; in post-hoc mode `z*` is
/// taken as the final integrator state, which is only meaningful for
/// runs that have converged.
pub fn simulate_closed_loop(
    game: &NetworkGame,
    gains: &ControllerGains,
    x_star: &TargetProfile,
    x0: &DVector<f64>,
    z0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<ClosedLoopRun, SimError> {
    let n = game.n_agents();
    let k_steps = opts.steps;
    let mut x_traj = DMatrix::zeros(n, k_steps + 1);
    let mut z_traj = DMatrix::zeros(n, k_steps + 1);
    let mut u_traj = DMatrix::zeros(n, k_steps);
    let mut saturated = vec![false; k_steps * n];

    let mut x = x0.clone();
    let mut state = RegulatorState { z: z0.clone() };
    x_traj.column_mut(0).copy_from(&x);
    z_traj.column_mut(0).copy_from(&state.z);

    for k in 0..k_steps {
        let (u_raw, next_state) = pi_step(&x, &state, gains, x_star);
        let u = match &opts.bounds {
            Some(bounds) => {
                let clamped = sat(&u_raw, bounds);
                for i in 0..n {
                    saturated[k * n + i] = clamped[i] != u_raw[i];
                }
                clamped
            }
            None => u_raw,
        };
        u_traj.column_mut(k).copy_from(&u);
        x = game.best_response_step(&x, &u)?;
        state = next_state;
        if x.amax() > OVERFLOW_LIMIT || state.z.amax() > OVERFLOW_LIMIT {
            return Err(SimError::Overflow { step: k + 1 });
        }
        x_traj.column_mut(k + 1).copy_from(&x);
        z_traj.column_mut(k + 1).copy_from(&state.z);
    }

    let lyapunov = opts.lyapunov.as_ref().map(|mon| {
        let z_star = match &mon.z_star {
            ZStarMode::Oracle(z) => z.clone(),
            ZStarMode::PostHocEstimate => z_traj.column(k_steps).into_owned(),
        };
        (0..=k_steps)
            .map(|k| {
                let mut delta = DVector::zeros(2 * n);
                for i in 0..n {
                    delta[i] = x_traj[(i, k)] - x_star.as_vector()[i];
                    delta[n + i] = z_traj[(i, k)] - z_star[i];
                }
                (delta.transpose() * &mon.m * &delta)[(0, 0)]
            })
            .collect()
    });

    Ok(ClosedLoopRun {
        x_traj,
        z_traj,
        u_traj,
        saturated,
        lyapunov,
        bounds: opts.bounds,
    })
}

/// Membership in the certified region of attraction: `delta' M delta <= 1`
/// with `delta = (x - x*, z - z*)`.
pub fn roa_membership(
    certificate: &BudgetCertificate,
    x: &DVector<f64>,
    z: &DVector<f64>,
    x_star: &TargetProfile,
    z_star: &DVector<f64>,
) -> bool {
    let n = x.len();
    let mut delta = DVector::zeros(2 * n);
    for i in 0..n {
        delta[i] = x[i] - x_star.as_vector()[i];
        delta[n + i] = z[i] - z_star[i];
    }
    (delta.transpose() * &certificate.m * &delta)[(0, 0)] <= 1.0
}

/// Uniform sample from the ellipsoid `{delta : delta' M delta <= 1}`:
/// the affine image of a uniform unit-ball sample under the symmetric
/// inverse square root of `M`. Returns `None` when `M` is not positive
/// definite.
pub fn sample_in_ellipsoid<R: Rng>(m: &DMatrix<f64>, rng: &mut R) -> Option<DVector<f64>> {
    let dim = m.nrows();
    let m_inv_sqrt = numeric::sym_inv_sqrt(m)?;
    // Gaussian direction via Box-Muller, then a radius with the ball's
    // volume-correct distribution.
    let mut g = DVector::zeros(dim);
    for i in 0..dim {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        g[i] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
    let norm = g.norm();
    if norm == 0.0 {
        return Some(DVector::zeros(dim));
    }
    let radius: f64 = rng.gen_range(0.0_f64..1.0).powf(1.0 / dim as f64);
    Some(m_inv_sqrt * g * (radius / norm))
}

/// Summary statistics of a run against a convergence tolerance.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub tol: f64,
    pub initial_error_inf: f64,
    pub final_error_inf: f64,
    /// First step whose action error is within `tol`, if any.
    pub first_step_within_tol: Option<usize>,
    /// Geometric decay rate fitted to the error tail; `None` when the
    /// run diverged, stayed at the target, or left too few points.
    pub rate_estimate: Option<f64>,
    pub max_abs_intervention: DVector<f64>,
    pub saturation_duty_cycle: f64,
    pub diverged: bool,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.final_error_inf <= self.tol
    }
}

/// Reduce a run to its convergence metrics.
pub fn convergence_metrics(
    run: &ClosedLoopRun,
    x_star: &TargetProfile,
    tol: f64,
) -> ConvergenceReport {
    let n = run.n_agents();
    let k_steps = run.steps();
    let errors: Vec<f64> = (0..=k_steps)
        .map(|k| {
            (0..n)
                .map(|i| (run.x_traj[(i, k)] - x_star.as_vector()[i]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let initial = errors[0];
    let final_err = errors[k_steps];
    let first_within = errors.iter().position(|&e| e <= tol);
    let diverged = !final_err.is_finite() || final_err > 100.0 * (1.0 + initial);

    // Fit ln(error) over the geometric tail: below 1% of the initial
    // error but above the floating-point floor.
    let floor = 1e-12 * (1.0 + x_star.as_vector().amax());
    let cap = initial * 1e-2;
    let rate_estimate = if diverged {
        None
    } else {
        let pts: Vec<(f64, f64)> = errors
            .iter()
            .enumerate()
            .filter(|&(_, &e)| e > floor && e <= cap)
            .map(|(k, &e)| (k as f64, e.ln()))
            .collect();
        fit_slope(&pts).filter(|s| *s < 0.0).map(f64::exp)
    };

    let max_abs_intervention = DVector::from_fn(n, |i, _| {
        (0..k_steps)
            .map(|k| run.u_traj[(i, k)].abs())
            .fold(0.0, f64::max)
    });

    ConvergenceReport {
        tol,
        initial_error_inf: initial,
        final_error_inf: final_err,
        first_step_within_tol: first_within,
        rate_estimate,
        max_abs_intervention,
        saturation_duty_cycle: run.saturation_duty_cycle(),
        diverged,
    }
}

fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        build_data_matrices, collect_trajectory, generate_excitation, ExcitationSpec,
    };
    use crate::synthesis::{
        self, compute_rho, synthesize_budget, synthesize_unconstrained, SynthesisOptions,
    };
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn test_game(q_identity: bool) -> NetworkGame {
        let q = if q_identity {
            DVector::from_element(2, 1.0)
        } else {
            DVector::from_vec(vec![1.0, 1.3])
        };
        NetworkGame::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.75, 0.0]),
            q,
            DVector::from_vec(vec![-1.8, -1.8]),
            DVector::from_vec(vec![6.0, 5.0]),
        )
        .unwrap()
    }

    fn designed(
        game: &NetworkGame,
        x_star: &TargetProfile,
        seed: u64,
    ) -> crate::synthesis::UnconstrainedCertificate {
        let spec = ExcitationSpec::new(-2.0, 2.0, 40, seed).unwrap();
        let u = generate_excitation(&spec, game.n_agents());
        let traj = collect_trajectory(game, &u, &DVector::zeros(game.n_agents())).unwrap();
        let data = build_data_matrices(&traj, x_star).unwrap();
        synthesize_unconstrained(&data, &SynthesisOptions::default()).unwrap()
    }

    #[test]
    fn sat_clamps_and_passes_through() {
        let bounds = BudgetBounds::new(-8.0, 8.0).unwrap();
        let inside = DVector::from_vec(vec![1.0, -7.9]);
        assert_eq!(sat(&inside, &bounds), inside);
        let outside = DVector::from_vec(vec![10.0, -10.0]);
        assert_eq!(sat(&outside, &bounds), DVector::from_vec(vec![8.0, -8.0]));
    }

    proptest! {
        #[test]
        fn sat_is_idempotent(v in proptest::collection::vec(-100.0..100.0f64, 1..6)) {
            let bounds = BudgetBounds::new(-8.0, 8.0).unwrap();
            let v = DVector::from_vec(v);
            let once = sat(&v, &bounds);
            let twice = sat(&once, &bounds);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn dead_zone_vanishes_inside(v in proptest::collection::vec(-5.9..5.9f64, 3)) {
            let v = DVector::from_vec(v);
            let phi = dead_zone(&v, &[(-6.0, 6.0); 3]).unwrap();
            prop_assert!(phi.amax() == 0.0);
        }
    }

    #[test]
    fn dead_zone_hand_case() {
        let v = DVector::from_vec(vec![9.0]);
        let phi = dead_zone(&v, &[(-6.0, 6.0)]).unwrap();
        assert_relative_eq!(phi[0], -3.0);
        assert!(dead_zone(&v, &[(1.0, 6.0)]).is_err());
    }

    #[test]
    fn pi_step_holds_integrator_at_target() {
        let x_star = TargetProfile::new(DVector::from_vec(vec![2.0, 3.0])).unwrap();
        let gains = ControllerGains::new_unchecked(DMatrix::zeros(2, 2), DMatrix::identity(2, 2));
        let state = RegulatorState {
            z: DVector::from_vec(vec![5.0, -1.0]),
        };
        let (u, next) = pi_step(x_star.as_vector(), &state, &gains, &x_star);
        assert_eq!(next.z, state.z);
        // K_x = 0, K_z = I: the intervention is the integrator state.
        assert_eq!(u, state.z);
    }

    #[test]
    fn equilibrium_is_fixed_point_of_simulation() {
        let game = test_game(false);
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let cert = designed(&game, &x_star, 41);
        let report = synthesis::verify_closed_loop(&game, &x_star, &cert.gains).unwrap();

        let run = simulate_closed_loop(
            &game,
            &cert.gains,
            &x_star,
            x_star.as_vector(),
            &report.z_star,
            &SimOptions {
                steps: 50,
                ..SimOptions::default()
            },
        )
        .unwrap();
        let u_star = game.target_intervention(&x_star).unwrap();
        for k in 0..50 {
            assert!((run.x_traj.column(k) - x_star.as_vector()).amax() < 1e-9);
            assert!((run.u_traj.column(k) - &u_star).amax() < 1e-8);
        }
    }

    #[test]
    fn designed_loop_converges_from_rest() {
        let game = test_game(false);
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let cert = designed(&game, &x_star, 41);
        let run = simulate_closed_loop(
            &game,
            &cert.gains,
            &x_star,
            &DVector::zeros(2),
            &DVector::zeros(2),
            &SimOptions {
                steps: 400,
                ..SimOptions::default()
            },
        )
        .unwrap();
        let report = convergence_metrics(&run, &x_star, 1e-6);
        assert!(report.converged(), "final error {}", report.final_error_inf);
        assert!(!report.diverged);

        // Tail decay matches the closed-loop spectral radius within 10%.
        let oracle = synthesis::verify_closed_loop(&game, &x_star, &cert.gains).unwrap();
        let rate = report.rate_estimate.expect("tail should be geometric");
        assert!(
            (rate - oracle.spectral_radius).abs() <= 0.1 * oracle.spectral_radius,
            "fitted {rate} vs radius {}",
            oracle.spectral_radius
        );
    }

    #[test]
    fn zero_gain_run_is_flagged_divergent() {
        let game = test_game(false); // unstable open loop
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let gains = ControllerGains::zero(2);
        let result = simulate_closed_loop(
            &game,
            &gains,
            &x_star,
            &DVector::from_vec(vec![1.0, 1.0]),
            &DVector::zeros(2),
            &SimOptions {
                steps: 400,
                ..SimOptions::default()
            },
        );
        match result {
            Err(SimError::Overflow { .. }) => {}
            Ok(run) => {
                let report = convergence_metrics(&run, &x_star, 1e-6);
                assert!(report.diverged);
                assert!(report.rate_estimate.is_none());
            }
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn constant_at_target_has_no_rate() {
        let game = test_game(false);
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let cert = designed(&game, &x_star, 41);
        let report = synthesis::verify_closed_loop(&game, &x_star, &cert.gains).unwrap();
        let run = simulate_closed_loop(
            &game,
            &cert.gains,
            &x_star,
            x_star.as_vector(),
            &report.z_star,
            &SimOptions {
                steps: 40,
                ..SimOptions::default()
            },
        )
        .unwrap();
        let metrics = convergence_metrics(&run, &x_star, 1e-6);
        assert_eq!(metrics.first_step_within_tol, Some(0));
        assert!(metrics.final_error_inf <= 1e-9);
        assert!(metrics.rate_estimate.is_none());
    }

    fn budget_setup() -> (
        NetworkGame,
        TargetProfile,
        BudgetBounds,
        crate::synthesis::BudgetCertificate,
        DVector<f64>,
    ) {
        let game = test_game(true);
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        let bounds = BudgetBounds::new(-8.0, 8.0).unwrap();
        let u_star = game.target_intervention(&x_star).unwrap();
        let rho = compute_rho(&bounds, &u_star).unwrap();
        let spec = ExcitationSpec::new(-2.0, 2.0, 40, 23).unwrap();
        let u = generate_excitation(&spec, 2);
        let traj = collect_trajectory(&game, &u, &DVector::zeros(2)).unwrap();
        let data = build_data_matrices(&traj, &x_star).unwrap();
        let cert = synthesize_budget(&data, &rho, false, &SynthesisOptions::default()).unwrap();
        let z_star = synthesis::verify_closed_loop(&game, &x_star, &cert.gains)
            .unwrap()
            .z_star;
        (game, x_star, bounds, cert, z_star)
    }

    #[test]
    fn saturated_run_respects_budget_and_descends() {
        let (game, x_star, bounds, cert, z_star) = budget_setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let delta = sample_in_ellipsoid(&cert.m, &mut rng).unwrap();
            let x0 = DVector::from_fn(2, |i, _| x_star.as_vector()[i] + delta[i]);
            let z0 = DVector::from_fn(2, |i, _| z_star[i] + delta[2 + i]);
            assert!(roa_membership(&cert, &x0, &z0, &x_star, &z_star));
            let run = simulate_closed_loop(
                &game,
                &cert.gains,
                &x_star,
                &x0,
                &z0,
                &SimOptions {
                    steps: 600,
                    bounds: Some(bounds),
                    lyapunov: Some(LyapunovMonitor {
                        m: cert.m.clone(),
                        z_star: ZStarMode::Oracle(z_star.clone()),
                    }),
                },
            )
            .unwrap();
            for k in 0..run.steps() {
                for i in 0..2 {
                    assert!((-8.0..=8.0).contains(&run.u_traj[(i, k)]));
                }
            }
            let v = run.lyapunov.as_ref().unwrap();
            for k in 1..v.len() {
                assert!(
                    v[k] <= v[k - 1] + 1e-9,
                    "trial {trial}: V increased at step {k}: {} -> {}",
                    v[k - 1],
                    v[k]
                );
            }
            let metrics = convergence_metrics(&run, &x_star, 1e-6);
            assert!(
                metrics.converged(),
                "trial {trial}: {}",
                metrics.final_error_inf
            );
        }
    }

    #[test]
    fn unconstrained_and_saturated_agree_when_inactive() {
        let (game, x_star, bounds, cert, z_star) = budget_setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let delta = sample_in_ellipsoid(&(cert.m.clone() * 4.0), &mut rng).unwrap();
        let x0 = DVector::from_fn(2, |i, _| x_star.as_vector()[i] + delta[i]);
        let z0 = DVector::from_fn(2, |i, _| z_star[i] + delta[2 + i]);
        let saturated = simulate_closed_loop(
            &game,
            &cert.gains,
            &x_star,
            &x0,
            &z0,
            &SimOptions {
                steps: 200,
                bounds: Some(bounds),
                ..SimOptions::default()
            },
        )
        .unwrap();
        if saturated.saturation_duty_cycle() == 0.0 {
            let plain = simulate_closed_loop(
                &game,
                &cert.gains,
                &x_star,
                &x0,
                &z0,
                &SimOptions {
                    steps: 200,
                    ..SimOptions::default()
                },
            )
            .unwrap();
            assert_eq!(saturated.x_traj, plain.x_traj);
            assert_eq!(saturated.u_traj, plain.u_traj);
        }
    }

    #[test]
    fn sector_residual_nonpositive_inside_sector_set() {
        // Monte-Carlo check of the dead-zone sector inequality
        // phi' S^{-1} (phi + K delta + H delta) <= 0 on S_H.
        let (game, x_star, bounds, cert, _z_star) = budget_setup();
        let u_star = game.target_intervention(&x_star).unwrap();
        let intervals: Vec<(f64, f64)> = (0..2)
            .map(|i| (bounds.u_min - u_star[i], bounds.u_max - u_star[i]))
            .collect();
        let s_inv = DMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                1.0 / cert.s[(i, i)]
            } else {
                0.0
            }
        });
        let k = cert.gains.stacked();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 1000 {
            let delta = DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
            let inside = (0..2).all(|i| {
                let hd = (cert.h.row(i) * &delta)[(0, 0)];
                hd.abs() <= cert.rho[i]
            });
            if !inside {
                continue;
            }
            checked += 1;
            let kd = &k * &delta;
            let hd = &cert.h * &delta;
            let phi = dead_zone(&kd, &intervals).unwrap();
            let residual = (phi.transpose() * &s_inv * (&phi + &kd + &hd))[(0, 0)];
            assert!(
                residual <= 1e-10,
                "sector residual {residual} positive at sample {checked}"
            );
        }
    }

    #[test]
    fn roa_membership_boundary() {
        let (_, x_star, _, cert, z_star) = budget_setup();
        let xs = x_star.as_vector();
        assert!(roa_membership(&cert, xs, &z_star, &x_star, &z_star));

        // Scale a direction to land just outside the unit level set.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let delta = sample_in_ellipsoid(&cert.m, &mut rng).unwrap();
        let level = (delta.transpose() * &cert.m * &delta)[(0, 0)];
        assert!(level <= 1.0 + 1e-12);
        let scale = ((1.0 + 1e-6) / level).sqrt();
        let just_outside = &delta * scale;
        let x = DVector::from_fn(2, |i, _| xs[i] + just_outside[i]);
        let z = DVector::from_fn(2, |i, _| z_star[i] + just_outside[2 + i]);
        assert!(!roa_membership(&cert, &x, &z, &x_star, &z_star));
    }

    #[test]
    fn ellipsoid_samples_are_members() {
        let (_, _, _, cert, _) = budget_setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let delta = sample_in_ellipsoid(&cert.m, &mut rng).unwrap();
            let level = (delta.transpose() * &cert.m * &delta)[(0, 0)];
            assert!(level <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn overflow_guard_in_simulation() {
        let game = test_game(false);
        let x_star = TargetProfile::new(DVector::from_vec(vec![3.0, 4.0])).unwrap();
        // Destabilizing positive feedback.
        let gains = ControllerGains::new_unchecked(
            DMatrix::from_diagonal_element(2, 2, 50.0),
            DMatrix::identity(2, 2),
        );
        let err = simulate_closed_loop(
            &game,
            &gains,
            &x_star,
            &DVector::from_vec(vec![1.0, -1.0]),
            &DVector::zeros(2),
            &SimOptions {
                steps: 10_000,
                ..SimOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Overflow { .. }));
    }
}
