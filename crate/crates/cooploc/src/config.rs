//! Scenario files: a TOML document describing references, trajectory,
//! formation, channel, and filter settings.
//!
//! Angles are degrees in the file and radians internally. Coordinates and
//! offsets carry as many components as `dimension`. Unknown keys are
//! rejected so typos surface as parse errors naming the offending key.

use nalgebra::{DVector, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::channel::{PathLossModel, CALIBRATED_VALIDITY_M, IEEE802154_TX_DBM};
use crate::filter::InitPolicy;
use crate::geometry::{Attitude, FormationSpec, GeometryError};
use crate::sim::{
    Scenario, SimError, TrajectorySpec, DEFAULT_POS_VAR, DEFAULT_Q_SPECTRAL, DEFAULT_TS,
    DEFAULT_VEL_VAR,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    // Sources are left out of the messages; error-chain reporters print them.
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario config")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scenario(#[from] SimError),
}

/// Root of the scenario file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Name used in reports; defaults to the file stem.
    pub id: Option<String>,
    pub dimension: usize,
    /// Sampling period in seconds (default 0.1).
    pub ts: Option<f64>,
    /// Monte Carlo trial count override.
    pub trials: Option<usize>,
    /// Base RNG seed override.
    pub base_seed: Option<u64>,
    /// Drop measurements beyond the channel validity range. Defaults to
    /// true for clamped channels and false otherwise.
    pub drop_out_of_validity: Option<bool>,
    pub references: Vec<Vec<f64>>,
    pub trajectory: TrajectoryConfig,
    pub formation: Option<FormationConfig>,
    pub channel: ChannelConfig,
    pub init: Option<InitConfig>,
    pub process: Option<ProcessConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryConfig {
    Line {
        start: Vec<f64>,
        end: Vec<f64>,
        duration_s: f64,
    },
    Waypoints {
        points: Vec<Vec<f64>>,
        duration_s: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    /// Body-frame buddy offsets in meters, one row per buddy.
    pub offsets: Vec<Vec<f64>>,
    /// Body-to-world rotation in degrees.
    pub attitude_deg: Option<AttitudeConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeConfig {
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    Ieee802154 {
        tx_power_dbm: Option<f64>,
    },
    LogDistance {
        a: f64,
        n: f64,
        sigma: f64,
    },
    LogDistanceClamped {
        a: f64,
        n: f64,
        sigma: f64,
        d_max: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Start at a known position (defaults to the trajectory start).
    KnownStart {
        position: Option<Vec<f64>>,
        pos_var: Option<f64>,
        vel_var: Option<f64>,
    },
    /// Multilaterate the start from the first measurement row.
    CoarseMultilateration {
        pos_var: Option<f64>,
        vel_var: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub q_spectral: QSpectral,
}

/// Velocity noise intensity: one shared value or one per axis.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum QSpectral {
    Shared(f64),
    PerAxis(Vec<f64>),
}

/// Trial count and seed carried alongside a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunDefaults {
    pub trials: Option<usize>,
    pub base_seed: Option<u64>,
}

fn coordinates(raw: &[f64], dimension: usize, what: &str) -> Result<DVector<f64>, ConfigError> {
    if raw.len() != dimension {
        return Err(ConfigError::Invalid(format!(
            "{what} has {} components, expected {dimension}",
            raw.len()
        )));
    }
    Ok(DVector::from_row_slice(raw))
}

fn offset_vector(raw: &[f64], dimension: usize, index: usize) -> Result<Vector3<f64>, ConfigError> {
    if raw.len() != dimension {
        return Err(ConfigError::Invalid(format!(
            "formation offset {index} has {} components, expected {dimension}",
            raw.len()
        )));
    }
    Ok(Vector3::new(raw[0], raw[1], if dimension == 3 { raw[2] } else { 0.0 }))
}

impl ScenarioConfig {
    /// Parses a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads and parses a scenario file.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Converts the parsed document into a validated scenario plus the
    /// file's run defaults. `fallback_id` names the scenario when the file
    /// does not.
    pub fn into_scenario(self, fallback_id: &str) -> Result<(Scenario, RunDefaults), ConfigError> {
        let dimension = self.dimension;
        if dimension != 2 && dimension != 3 {
            return Err(ConfigError::Invalid(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }

        let references = self
            .references
            .iter()
            .enumerate()
            .map(|(j, r)| coordinates(r, dimension, &format!("reference {j}")))
            .collect::<Result<Vec<_>, _>>()?;

        let trajectory = match &self.trajectory {
            TrajectoryConfig::Line {
                start,
                end,
                duration_s,
            } => TrajectorySpec::line(
                coordinates(start, dimension, "trajectory start")?,
                coordinates(end, dimension, "trajectory end")?,
                *duration_s,
            )?,
            TrajectoryConfig::Waypoints { points, duration_s } => {
                let pts = points
                    .iter()
                    .enumerate()
                    .map(|(k, p)| coordinates(p, dimension, &format!("waypoint {k}")))
                    .collect::<Result<Vec<_>, _>>()?;
                TrajectorySpec::waypoints(pts, *duration_s)?
            }
        };

        let formation = match &self.formation {
            None => FormationSpec::single(dimension)?,
            Some(cfg) => {
                let offsets = cfg
                    .offsets
                    .iter()
                    .enumerate()
                    .map(|(k, o)| offset_vector(o, dimension, k))
                    .collect::<Result<Vec<_>, _>>()?;
                let att = cfg.attitude_deg.as_ref().map_or(Attitude::ZERO, |a| {
                    Attitude::from_degrees(a.roll, a.pitch, a.yaw)
                });
                FormationSpec::new(dimension, offsets, att)?
            }
        };

        let channel = match self.channel {
            ChannelConfig::Ieee802154 { tx_power_dbm } => PathLossModel::Ieee802154 {
                tx_power_dbm: tx_power_dbm.unwrap_or(IEEE802154_TX_DBM),
            },
            ChannelConfig::LogDistance { a, n, sigma } => {
                PathLossModel::LogDistance { a, n, sigma }
            }
            ChannelConfig::LogDistanceClamped { a, n, sigma, d_max } => {
                PathLossModel::LogDistanceClamped {
                    a,
                    n,
                    sigma,
                    d_max: d_max.unwrap_or(CALIBRATED_VALIDITY_M),
                }
            }
        };

        let init = match &self.init {
            None => InitPolicy::KnownStart {
                position: trajectory.start(),
                pos_var: DEFAULT_POS_VAR,
                vel_var: DEFAULT_VEL_VAR,
            },
            Some(InitConfig::KnownStart {
                position,
                pos_var,
                vel_var,
            }) => InitPolicy::KnownStart {
                position: match position {
                    Some(p) => coordinates(p, dimension, "init position")?,
                    None => trajectory.start(),
                },
                pos_var: pos_var.unwrap_or(DEFAULT_POS_VAR),
                vel_var: vel_var.unwrap_or(DEFAULT_VEL_VAR),
            },
            Some(InitConfig::CoarseMultilateration { pos_var, vel_var }) => {
                InitPolicy::CoarseMultilateration {
                    pos_var: pos_var.unwrap_or(DEFAULT_POS_VAR),
                    vel_var: vel_var.unwrap_or(DEFAULT_VEL_VAR),
                }
            }
        };

        let q_spectral = match &self.process {
            None => vec![DEFAULT_Q_SPECTRAL; dimension],
            Some(ProcessConfig {
                q_spectral: QSpectral::Shared(q),
            }) => vec![*q; dimension],
            Some(ProcessConfig {
                q_spectral: QSpectral::PerAxis(qs),
            }) => {
                if qs.len() != dimension {
                    return Err(ConfigError::Invalid(format!(
                        "q_spectral has {} entries, expected {dimension}",
                        qs.len()
                    )));
                }
                qs.clone()
            }
        };

        let drop_out_of_validity = self.drop_out_of_validity.unwrap_or(matches!(
            channel,
            PathLossModel::LogDistanceClamped { .. }
        ));

        let scenario = Scenario {
            id: self.id.unwrap_or_else(|| fallback_id.to_string()),
            references,
            trajectory,
            formation,
            channel,
            ts: self.ts.unwrap_or(DEFAULT_TS),
            q_spectral,
            init,
            drop_out_of_validity,
        };
        scenario.validate()?;
        Ok((
            scenario,
            RunDefaults {
                trials: self.trials,
                base_seed: self.base_seed,
            },
        ))
    }
}

/// Convenience wrapper: load a scenario file and convert it.
pub fn load_scenario(path: &std::path::Path) -> Result<(Scenario, RunDefaults), ConfigError> {
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    ScenarioConfig::load(path)?.into_scenario(&fallback)
}
