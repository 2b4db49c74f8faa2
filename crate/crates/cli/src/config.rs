//! Experiment configuration: a TOML schema covering the game definition,
//! target profile, excitation, synthesis mode, and simulation settings.
//! The full schema is documented in the repository README.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use netsteer_core::data::ExcitationSpec;
use netsteer_core::game::{NetworkGame, TargetProfile};
use netsteer_core::synthesis::BudgetBounds;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// On-disk schema. Every section maps 1:1 onto a TOML table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSection,
    pub target: TargetSection,
    pub excitation: ExcitationSection,
    #[serde(default)]
    pub collection: CollectionSection,
    pub synthesis: SynthesisSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    /// Inline row-major adjacency; mutually exclusive with
    /// `adjacency_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    /// CSV matrix path, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub x_star: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSection {
    pub lower: f64,
    pub upper: f64,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionSection {
    /// Initial action profile for data collection; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMode {
    Unconstrained,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSource {
    /// Compute the exact per-agent slack from the simulated game.
    Oracle,
    /// Worst case over user-supplied interval bounds on the target
    /// intervention.
    Bounds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub mode: SynthesisMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_source: Option<RhoSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star_upper: Option<Vec<f64>>,
    #[serde(default)]
    pub maximize_volume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationStart {
    /// Start from the configured (or zero) `x0`, `z0`.
    Config,
    /// Sample the start inside the certified ellipsoid (budget mode).
    Ellipsoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub steps: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<SimulationStart>,
    /// Seed for ellipsoid start sampling.
    #[serde(default = "default_sim_seed")]
    pub sim_seed: u64,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_sim_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
}

/// Configuration after validation: concrete matrices and specs, ready
/// for the pipeline.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub game: NetworkGame,
    pub x_star: TargetProfile,
    pub excitation: ExcitationSpec,
    pub collection_x0: DVector<f64>,
    pub mode: SynthesisMode,
    pub bounds: Option<BudgetBounds>,
    pub rho_source: Option<RhoSource>,
    pub u_star_box: Option<(DVector<f64>, DVector<f64>)>,
    pub maximize_volume: bool,
    pub sim_steps: usize,
    pub sim_tol: f64,
    pub sim_x0: Option<DVector<f64>>,
    pub sim_z0: Option<DVector<f64>>,
    pub sim_start: SimulationStart,
    pub sim_seed: u64,
    pub output_directory: Option<PathBuf>,
    /// SHA-256 of the raw config text, for artifact metadata.
    pub config_hash: String,
    /// Raw TOML text, persisted next to artifacts for reproduction.
    pub raw_text: String,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Validate and resolve into concrete pipeline inputs. `base_dir` is
    /// the directory of the config file, used to resolve relative paths.
    pub fn resolve(&self, base_dir: &Path, raw_text: &str) -> Result<ResolvedConfig, ConfigError> {
        let n = self.game.q.len();
        if n == 0 {
            return Err(invalid("[game] q must not be empty"));
        }
        for (name, v) in [("w", &self.game.w), ("d", &self.game.d)] {
            if v.len() != n {
                return Err(invalid(format!(
                    "[game] {name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        let adjacency = match (&self.game.adjacency, &self.game.adjacency_file) {
            (Some(rows), None) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("[game] adjacency must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
            (None, Some(file)) => {
                let path = base_dir.join(file);
                netsteer_core::io::read_matrix_csv(&path)
                    .map_err(|e| invalid(format!("[game] adjacency_file: {e}")))?
            }
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "[game] adjacency and adjacency_file are mutually exclusive",
                ))
            }
            (None, None) => {
                return Err(invalid(
                    "[game] one of adjacency or adjacency_file is required",
                ))
            }
        };
        let game = NetworkGame::new(
            adjacency,
            DVector::from_vec(self.game.q.clone()),
            DVector::from_vec(self.game.w.clone()),
            DVector::from_vec(self.game.d.clone()),
        )
        .map_err(|e| invalid(format!("[game] {e}")))?;

        if self.target.x_star.len() != n {
            return Err(invalid(format!(
                "[target] x_star has {} entries, expected {n}",
                self.target.x_star.len()
            )));
        }
        let x_star = TargetProfile::new(DVector::from_vec(self.target.x_star.clone()))
            .map_err(|e| invalid(format!("[target] {e}")))?;

        let excitation = ExcitationSpec::new(
            self.excitation.lower,
            self.excitation.upper,
            self.excitation.horizon,
            self.excitation.seed,
        )
        .map_err(|e| invalid(format!("[excitation] {e}")))?;

        let collection_x0 = match &self.collection.x0 {
            Some(v) => {
                if v.len() != n {
                    return Err(invalid(format!(
                        "[collection] x0 has {} entries, expected {n}",
                        v.len()
                    )));
                }
                DVector::from_vec(v.clone())
            }
            None => DVector::zeros(n),
        };

        let (bounds, rho_source, u_star_box) = match self.synthesis.mode {
            SynthesisMode::Unconstrained => (None, None, None),
            SynthesisMode::Budget => {
                let (u_min, u_max) = match (self.synthesis.u_min, self.synthesis.u_max) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => {
                        return Err(invalid(
                            "[synthesis] budget mode requires u_min and u_max",
                        ))
                    }
                };
                let bounds = BudgetBounds::new(u_min, u_max)
                    .map_err(|e| invalid(format!("[synthesis] {e}")))?;
                let source = self.synthesis.rho_source.ok_or_else(|| {
                    invalid("[synthesis] budget mode requires rho_source = \"oracle\" | \"bounds\"")
                })?;
                let boxed = match source {
                    RhoSource::Oracle => None,
                    RhoSource::Bounds => {
                        let (lo, hi) = match (
                            &self.synthesis.u_star_lower,
                            &self.synthesis.u_star_upper,
                        ) {
                            (Some(lo), Some(hi)) if lo.len() == n && hi.len() == n => {
                                (DVector::from_vec(lo.clone()), DVector::from_vec(hi.clone()))
                            }
                            _ => {
                                return Err(invalid(
                                    "[synthesis] rho_source = \"bounds\" requires u_star_lower \
                                     and u_star_upper with one entry per agent",
                                ))
                            }
                        };
                        Some((lo, hi))
                    }
                };
                (Some(bounds), Some(source), boxed)
            }
        };

        for (name, v) in [("x0", &self.simulation.x0), ("z0", &self.simulation.z0)] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(invalid(format!(
                        "[simulation] {name} has {} entries, expected {n}",
                        v.len()
                    )));
                }
            }
        }
        if self.simulation.steps == 0 {
            return Err(invalid("[simulation] steps must be positive"));
        }
        if !(self.simulation.tol > 0.0) {
            return Err(invalid("[simulation] tol must be positive"));
        }
        let sim_start = self.simulation.start.unwrap_or(match self.synthesis.mode {
            SynthesisMode::Unconstrained => SimulationStart::Config,
            SynthesisMode::Budget => SimulationStart::Ellipsoid,
        });
        if sim_start == SimulationStart::Ellipsoid && self.synthesis.mode != SynthesisMode::Budget {
            return Err(invalid(
                "[simulation] start = \"ellipsoid\" requires budget mode (it samples the certified region)",
            ));
        }

        use sha2::Digest;
        let config_hash = format!("{:x}", sha2::Sha256::digest(raw_text.as_bytes()));

        Ok(ResolvedConfig {
            game,
            x_star,
            excitation,
            collection_x0,
            mode: self.synthesis.mode,
            bounds,
            rho_source,
            u_star_box,
            maximize_volume: self.synthesis.maximize_volume,
            sim_steps: self.simulation.steps,
            sim_tol: self.simulation.tol,
            sim_x0: self.simulation.x0.clone().map(DVector::from_vec),
            sim_z0: self.simulation.z0.clone().map(DVector::from_vec),
            sim_start,
            sim_seed: self.simulation.sim_seed,
            output_directory: self.output.directory.as_ref().map(|d| base_dir.join(d)),
            config_hash,
            raw_text: raw_text.to_string(),
        })
    }
}
