//! The physical world of one run: building, SBS and MUE placement, radio
//! parameters, workload and cost weights, and the social trust network.

mod channel;
mod generate;

pub use channel::{
    db_to_linear, dbm_to_watts, link_metrics, path_loss_db, tx_power_for_rate, ChannelParams, LinkMetrics,
    TxPower,
};
pub use generate::{
    generate_scenario, place_mue, random_trust, stream_rng, Deployment, DeviceProfile, ScenarioConfig,
    MUE_STREAM, SBS_STREAM, TRUST_STREAM,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trust::TrustNetwork;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn distance(self, other: Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingGeometry {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub floor_height: f64,
}

impl BuildingGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("depth", self.depth),
            ("height", self.height),
            ("floor_height", self.floor_height),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("geometry.{name} must be > 0")));
            }
        }
        let floors = self.height / self.floor_height;
        if (floors - floors.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "geometry.height must be an integer multiple of floor_height".into(),
            ));
        }
        Ok(())
    }

    pub fn num_floors(&self) -> usize {
        (self.height / self.floor_height).round() as usize
    }

    pub fn floor_area(&self) -> f64 {
        self.width * self.depth
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0.0..=self.width).contains(&p.x)
            && (0.0..=self.depth).contains(&p.y)
            && (0.0..=self.height).contains(&p.z)
    }
}

/// Cost weights and per-task constants of the cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfile {
    /// Money per unit of delay-equivalent operational cost.
    pub w_c: f64,
    /// Money per task of untrusted offloading.
    pub w_r: f64,
    /// Cloud price per task.
    pub w_0: f64,
    /// Delay units per joule.
    pub gamma: f64,
    /// CPU energy constant; energy per task is `kappa * f^2`.
    pub kappa: f64,
    /// Mean CPU cycles per task.
    pub rho: f64,
    /// Round-trip delay of a cloud task, seconds.
    pub cloud_delay: f64,
    /// SBS transmit energy per cloud task, joules.
    pub cloud_energy: f64,
}

impl WeightProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_c", self.w_c),
            ("w_r", self.w_r),
            ("w_0", self.w_0),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("cloud_delay", self.cloud_delay),
            ("cloud_energy", self.cloud_energy),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("weights.{name} must be >= 0")));
            }
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig("weights.rho must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sbs {
    pub id: usize,
    pub position: Point3,
    /// CPU cycles per second.
    pub cpu_speed: f64,
    pub max_tx_power_dbm: f64,
    /// Fraction of the service rate that may be loaded, in (0, 1).
    pub utilization_cap: f64,
    pub authorized_mues: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mue {
    pub id: usize,
    pub position: Point3,
    pub home_sbs: usize,
    /// Tasks per slot.
    pub arrival_rate: f64,
    pub private_fraction: f64,
    pub max_tx_power_dbm: f64,
}

impl Mue {
    pub fn normal_rate(&self) -> f64 {
        (1.0 - self.private_fraction) * self.arrival_rate
    }
}

/// Immutable world state for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub geometry: BuildingGeometry,
    pub channel: ChannelParams,
    pub weights: WeightProfile,
    pub sbss: Vec<Sbs>,
    pub mues: Vec<Mue>,
    pub trust: TrustNetwork,
}

impl Scenario {
    pub fn num_sbs(&self) -> usize {
        self.sbss.len()
    }

    /// Aggregate arrival rate at SBS `i` from its authorized MUEs.
    pub fn arrival_at(&self, i: usize) -> f64 {
        self.sbss[i]
            .authorized_mues
            .iter()
            .map(|&m| self.mues[m].arrival_rate)
            .sum()
    }

    /// M/M/1 service rate `f_i / rho` in tasks per slot.
    pub fn service_rate(&self, i: usize) -> f64 {
        self.sbss[i].cpu_speed / self.weights.rho
    }

    /// Largest admissible workload `eta * f_i / rho`.
    pub fn capacity(&self, i: usize) -> f64 {
        self.sbss[i].utilization_cap * self.service_rate(i)
    }

    /// Surplus (positive) or deficit (negative) of SBS `i`.
    pub fn surplus(&self, i: usize) -> f64 {
        self.capacity(i) - self.arrival_at(i)
    }

    pub fn sbs_link(&self, from: usize, to: usize) -> Result<LinkMetrics> {
        let a = &self.sbss[from];
        link_metrics(
            a.position,
            a.max_tx_power_dbm,
            self.sbss[to].position,
            self.channel.target_rate_sbs,
            &self.channel,
        )
    }

    pub fn mue_link(&self, mue: usize, sbs: usize) -> Result<LinkMetrics> {
        let m = &self.mues[mue];
        link_metrics(
            m.position,
            m.max_tx_power_dbm,
            self.sbss[sbs].position,
            self.channel.target_rate_mue,
            &self.channel,
        )
    }

    /// Checks the structural invariants a loaded or hand-built scenario must meet.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.channel.validate()?;
        self.weights.validate()?;
        if self.sbss.is_empty() {
            return Err(Error::EmptyDeployment);
        }
        for (idx, s) in self.sbss.iter().enumerate() {
            if s.id != idx {
                return Err(Error::InvalidConfig(format!("sbss[{idx}].id must equal {idx}")));
            }
            if !(s.cpu_speed > 0.0) {
                return Err(Error::InvalidConfig(format!("sbss[{idx}].cpu_speed must be > 0")));
            }
            if !(s.utilization_cap > 0.0 && s.utilization_cap < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "sbss[{idx}].utilization_cap must lie in (0, 1)"
                )));
            }
            if !self.geometry.contains(s.position) {
                return Err(Error::InvalidConfig(format!(
                    "sbss[{idx}] lies outside the building"
                )));
            }
            for &m in &s.authorized_mues {
                if self.mues.get(m).map(|u| u.home_sbs) != Some(idx) {
                    return Err(Error::InvalidConfig(format!(
                        "sbss[{idx}] authorizes MUE {m} whose home differs"
                    )));
                }
            }
        }
        for (idx, m) in self.mues.iter().enumerate() {
            if m.id != idx {
                return Err(Error::InvalidConfig(format!("mues[{idx}].id must equal {idx}")));
            }
            if !(0.0..=1.0).contains(&m.private_fraction) || !(m.arrival_rate >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "mues[{idx}] needs arrival_rate >= 0 and private_fraction in [0, 1]"
                )));
            }
            let home = self
                .sbss
                .get(m.home_sbs)
                .ok_or_else(|| Error::InvalidConfig(format!("mues[{idx}].home_sbs is not an SBS")))?;
            if !home.authorized_mues.contains(&idx) {
                return Err(Error::InvalidConfig(format!(
                    "mues[{idx}] is missing from its home SBS's authorized set"
                )));
            }
        }
        for i in 0..self.sbss.len() {
            if !self.trust.contains(i) {
                return Err(Error::UnknownNode(i));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a scenario document, reporting the JSON path of
    /// any schema violation.
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = crate::config::parse_json(text)?;
        if scenario.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "schema_version".into(),
                message: format!(
                    "unsupported version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    scenario.schema_version
                ),
            });
        }
        scenario.validate()?;
        Ok(scenario)
    }
}
