//! Simulation config documents and the built-in presets.
//!
//! Default parameters:
//!
//! | parameter                     | value         |
//! |-------------------------------|---------------|
//! | MUE max transmit power        | 10 dBm        |
//! | SBS max transmit power        | 20 dBm        |
//! | MUE target rate               | 25 Mbps       |
//! | SBS peer target rate          | 50 Mbps       |
//! | carrier frequency             | 900 MHz       |
//! | path loss exponent            | 3.3           |
//! | floor penetration, 1/2/3 fl.  | 9 / 12 / 24 dB|
//! | noise power                   | -126.2 dB     |
//! | MUE task arrival rate         | 5 tasks/slot  |
//! | bandwidth                     | 20 MHz        |
//! | cloud delay                   | 0.3 s/task    |
//!
//! Everything else (CPU speeds, task size, energy constants, trust generator)
//! is an implementation choice documented on the fields of [`paper_fig4`].

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameSettings;
use crate::scenario::{
    BuildingGeometry, ChannelParams, Deployment, DeviceProfile, ScenarioConfig, WeightProfile,
};
use crate::trust::TrustGenConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Deserializes JSON and reports schema violations with their field path.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// A complete run configuration: how to build the world and how to play the
/// coalition game on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub game: GameSettings,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "schema_version".into(),
                message: format!(
                    "unsupported version {} (expected {CONFIG_SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        self.scenario.validate()?;
        self.game.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn table_one_channel() -> ChannelParams {
    ChannelParams {
        carrier_frequency_mhz: 900.0,
        path_loss_exponent: 3.3,
        floor_penetration_db: vec![9.0, 12.0, 24.0],
        noise_power_db: -126.2,
        interference_db: None,
        bandwidth_hz: 20e6,
        target_rate_mue: 25e6,
        target_rate_sbs: 50e6,
        floor_height: 10.0,
        // 1 Mbit per task.
        task_size_bits: 1e6,
    }
}

pub fn default_weights() -> WeightProfile {
    WeightProfile {
        w_c: 0.2,
        w_r: 0.2,
        w_0: 1.0,
        gamma: 0.1,
        kappa: 2.5e-20,
        rho: 1e8,
        cloud_delay: 0.3,
        cloud_energy: 0.05,
    }
}

/// Thirteen SBSs and fifty-two MUEs in a 100 m x 200 m x 50 m office
/// building with five 10 m floors.
pub fn paper_fig4() -> SimConfig {
    SimConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        seed: 1,
        scenario: ScenarioConfig {
            geometry: BuildingGeometry {
                width: 100.0,
                depth: 200.0,
                height: 50.0,
                floor_height: 10.0,
            },
            deployment: Deployment::Fixed {
                sbs_count: 13,
                mue_count: 52,
            },
            channel: table_one_channel(),
            weights: default_weights(),
            devices: DeviceProfile {
                // 10 to 30 tasks per slot of service at rho = 1e8 cycles.
                sbs_cpu_min: 1e9,
                sbs_cpu_max: 3e9,
                utilization_cap: 0.9,
                sbs_max_power_dbm: 20.0,
                mue_max_power_dbm: 10.0,
                mue_arrival_rate: 5.0,
                mue_private_fraction: 0.2,
            },
            trust: TrustGenConfig {
                edge_probability: 0.5,
                min_trust: 0.5,
                max_trust: 1.0,
            },
        },
        game: GameSettings::default(),
    }
}

pub const PRESETS: &[&str] = &["paper-fig4"];

pub fn preset(name: &str) -> Option<SimConfig> {
    match name {
        "paper-fig4" => Some(paper_fig4()),
        _ => None,
    }
}
