//! Shipped case study: Cournot competition among five firms producing
//! differentiated goods, in two variants (heterogeneous costs without a
//! budget, unit costs with a saturated budget).

use std::path::Path;

use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::pipeline::PipelineError;

/// Directed, weighted product-substitutability network: entry (n, m) is
/// the influence of firm m's output on firm n's price. Zero diagonal,
/// entries in [0, 1]. Chosen so that the best-response map is unstable
/// for both cost variants (no open-loop stability is assumed anywhere)
/// while the target interventions of the budget variant stay strictly
/// inside the +-8 box.
pub fn cournot_adjacency() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        5,
        5,
        &[
            0.0, 0.40, 0.0, 0.0, 0.30, //
            0.45, 0.0, 0.25, 0.0, 0.0, //
            0.15, 0.0, 0.0, 0.40, 0.0, //
            0.0, 0.15, 0.0, 0.0, 0.25, //
            0.40, 0.0, 0.30, 0.0, 0.0,
        ],
    )
}

const COURNOT_UNCONSTRAINED: &str = r#"# Cournot case study, heterogeneous costs, no intervention budget.

[game]
q = [1.0, 1.2, 0.8, 1.4, 0.9]
w = [-1.8, -1.8, -1.8, -1.8, -1.8]
d = [12.0, 8.0, 10.0, 6.0, 10.0]
adjacency_file = "p_matrix.csv"

[target]
x_star = [4.0, 5.2, 5.0, 7.0, 7.5]

[excitation]
lower = -2.0
upper = 2.0
horizon = 80
seed = 7

[synthesis]
mode = "unconstrained"

[simulation]
steps = 500
tol = 1e-6
"#;

const COURNOT_BUDGET: &str = r#"# Cournot case study, unit costs, intervention budget |u_n| <= 8.

[game]
q = [1.0, 1.0, 1.0, 1.0, 1.0]
w = [-1.8, -1.8, -1.8, -1.8, -1.8]
d = [12.0, 8.0, 10.0, 6.0, 10.0]
adjacency_file = "p_matrix.csv"

[target]
x_star = [4.0, 5.2, 5.0, 7.0, 7.5]

[excitation]
lower = -2.0
upper = 2.0
horizon = 80
seed = 7

[synthesis]
mode = "budget"
u_min = -8.0
u_max = 8.0
rho_source = "oracle"

[simulation]
steps = 1000
tol = 1e-6
start = "ellipsoid"
sim_seed = 42
"#;

const CASE_STUDY_README: &str = r#"# Cournot case study

Five firms produce differentiated goods. Firm `n` chooses a quantity
`x_n`; its sale price follows the inverse demand

    p_n(x) = alpha_n - (l_n * x_n + beta_n * sum_m P_nm x_m)

where `P_nm` in [0, 1] measures how substitutable firm `m`'s product is
for firm `n`'s customers (`p_matrix.csv`, zero diagonal, directed).
Production cost is quadratic, `a_n/2 * x_n^2 + b_n * x_n`, and the
regulator adds a per-unit subsidy or tax `u_n`, contributing `u_n x_n`
to the profit. Expanding

    profit_n = p_n(x) x_n - (a_n/2 x_n^2 + b_n x_n) + u_n x_n

gives the quadratic utility used by the tooling,

    -1/2 q_n x_n^2 + x_n (w_n s_n(x) + d_n) + x_n u_n,

with the mapping

    q_n = a_n + 2 l_n      (own-price slope enters the quadratic term twice)
    w_n = -beta_n          (substitutes: neighbors depress the price)
    d_n = alpha_n - b_n    (choke price net of linear cost)

The configs pin the aggregate coefficients directly:

* `cournot_unconstrained.toml` - heterogeneous `q`, no budget. The
  regulator records 80 steps of uniformly drawn interventions in
  [-2, 2], designs PI gains from the differenced data, and steers the
  firms to the target profile `x* = (4.0, 5.2, 5.0, 7.0, 7.5)`.
* `cournot_budget.toml` - unit `q`, interventions saturated to
  [-8, 8]. The design also returns an ellipsoidal region of attraction;
  the simulation starts from a point sampled inside it.

With these parameters the best-response dynamics are unstable in open
loop (spectral radius of `Q^{-1}WP` is about 1.14 and 1.15 for the two
variants), so no constant intervention can steer the firms anywhere:
the stabilization genuinely comes from the designed dynamic protocol.

Run either variant with

    netsteer run --config cournot_unconstrained.toml --out results/
    netsteer run --config cournot_budget.toml --out results-budget/ --plots
"#;

/// Write the case-study bundle (two configs, the adjacency matrix, and
/// a README documenting the Cournot mapping) into `dir`.
pub fn dump_case_study(dir: &Path) -> Result<Vec<std::path::PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Artifact {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut written = Vec::new();
    let p_path = dir.join("p_matrix.csv");
    netsteer_core::io::write_matrix_csv(&p_path, &cournot_adjacency())?;
    written.push(p_path);
    for (name, text) in [
        ("cournot_unconstrained.toml", COURNOT_UNCONSTRAINED),
        ("cournot_budget.toml", COURNOT_BUDGET),
        ("README.md", CASE_STUDY_README),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| PipelineError::Artifact {
            path: path.display().to_string(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Parsed unconstrained preset (used by tests and `run` without files).
pub fn cournot_unconstrained_config() -> (ExperimentConfig, String) {
    let cfg = toml::from_str(COURNOT_UNCONSTRAINED).expect("preset parses");
    (cfg, COURNOT_UNCONSTRAINED.to_string())
}

/// Parsed budget preset.
pub fn cournot_budget_config() -> (ExperimentConfig, String) {
    let cfg = toml::from_str(COURNOT_BUDGET).expect("preset parses");
    (cfg, COURNOT_BUDGET.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_invariants() {
        let p = cournot_adjacency();
        for i in 0..5 {
            assert_eq!(p[(i, i)], 0.0);
            for j in 0..5 {
                assert!((0.0..=1.0).contains(&p[(i, j)]));
            }
        }
    }

    #[test]
    fn presets_parse() {
        let (u, _) = cournot_unconstrained_config();
        assert_eq!(u.game.q, vec![1.0, 1.2, 0.8, 1.4, 0.9]);
        assert_eq!(u.excitation.horizon, 80);
        let (b, _) = cournot_budget_config();
        assert_eq!(b.synthesis.u_max, Some(8.0));
        assert!(b.game.q.iter().all(|&q| q == 1.0));
    }
}
