//! Seeded scenario generation.
//!
//! A single ChaCha8 generator is seeded from the scenario seed and split into
//! independent streams so that changing one population leaves the others
//! untouched (a sweep over MUE counts keeps the same SBS layout and trust):
//!
//! * stream 0: SBS count (PPP mode), then per SBS: floor, x, y, CPU speed;
//! * stream 1: MUE count (PPP mode), then per MUE: floor, x, y, redrawn until
//!   the nearest SBS can serve the MUE at its target rate;
//! * stream 2: trust edges, see [`TrustNetwork::random`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{BuildingGeometry, ChannelParams, Mue, Point3, Sbs, Scenario, WeightProfile};
use crate::error::{Error, Result};
use crate::trust::{TrustGenConfig, TrustNetwork};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

pub const SBS_STREAM: u64 = 0;
pub const MUE_STREAM: u64 = 1;
pub const TRUST_STREAM: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How many SBSs and MUEs to place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Deployment {
    /// Homogeneous Poisson point processes with intensities per square meter
    /// of floor area.
    Ppp { sbs_intensity: f64, mue_intensity: f64 },
    /// Exact counts, positions still uniform.
    Fixed { sbs_count: usize, mue_count: usize },
}

/// Hardware and workload parameters shared by all devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    /// SBS CPU speeds are drawn uniformly from this range (cycles/s).
    pub sbs_cpu_min: f64,
    pub sbs_cpu_max: f64,
    pub utilization_cap: f64,
    pub sbs_max_power_dbm: f64,
    pub mue_max_power_dbm: f64,
    pub mue_arrival_rate: f64,
    pub mue_private_fraction: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.sbs_cpu_min > 0.0 && self.sbs_cpu_max >= self.sbs_cpu_min) {
            return Err(Error::InvalidConfig(
                "devices: need 0 < sbs_cpu_min <= sbs_cpu_max".into(),
            ));
        }
        if !(self.utilization_cap > 0.0 && self.utilization_cap < 1.0) {
            return Err(Error::InvalidConfig(
                "devices.utilization_cap must lie in (0, 1)".into(),
            ));
        }
        if !(self.mue_arrival_rate >= 0.0) {
            return Err(Error::InvalidConfig(
                "devices.mue_arrival_rate must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mue_private_fraction) {
            return Err(Error::InvalidConfig(
                "devices.mue_private_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: BuildingGeometry,
    pub deployment: Deployment,
    pub channel: ChannelParams,
    pub weights: WeightProfile,
    pub devices: DeviceProfile,
    pub trust: TrustGenConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.channel.validate()?;
        self.weights.validate()?;
        self.devices.validate()?;
        self.trust.validate()?;
        if (self.geometry.floor_height - self.channel.floor_height).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "geometry.floor_height and channel.floor_height differ".into(),
            ));
        }
        if let Deployment::Ppp {
            sbs_intensity,
            mue_intensity,
        } = self.deployment
        {
            if !(sbs_intensity >= 0.0 && mue_intensity >= 0.0) {
                return Err(Error::InvalidConfig("deployment intensities must be >= 0".into()));
            }
        }
        Ok(())
    }
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(dist.sample(rng) as usize)
}

fn uniform_point<R: Rng>(geometry: &BuildingGeometry, rng: &mut R) -> Point3 {
    let floor = rng.random_range(0..geometry.num_floors());
    let x = rng.random_range(0.0..geometry.width);
    let y = rng.random_range(0.0..geometry.depth);
    Point3 {
        x,
        y,
        z: floor as f64 * geometry.floor_height,
    }
}

fn nearest_sbs(sbss: &[Sbs], p: Point3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for s in sbss {
        let d = s.position.distance(p);
        if d < best_d {
            best = s.id;
            best_d = d;
        }
    }
    best
}

/// Draws a uniform MUE position whose nearest SBS can serve it, redrawing up
/// to a fixed number of times. Returns the position and the home SBS.
pub fn place_mue<R: Rng>(config: &ScenarioConfig, sbss: &[Sbs], rng: &mut R) -> Option<(Point3, usize)> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let position = uniform_point(&config.geometry, rng);
        let home = nearest_sbs(sbss, position);
        let covered = super::link_metrics(
            position,
            config.devices.mue_max_power_dbm,
            sbss[home].position,
            config.channel.target_rate_mue,
            &config.channel,
        )
        .map(|l| l.feasible)
        .unwrap_or(false);
        if covered {
            return Some((position, home));
        }
    }
    None
}

/// Places SBSs and MUEs and draws the trust network for one seed.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let geometry = &config.geometry;
    let devices = &config.devices;
    let volume_area = geometry.floor_area() * geometry.num_floors() as f64;

    let mut rng = stream_rng(seed, SBS_STREAM);
    let n_sbs = match config.deployment {
        Deployment::Ppp { sbs_intensity, .. } => poisson_count(sbs_intensity * volume_area, &mut rng)?,
        Deployment::Fixed { sbs_count, .. } => sbs_count,
    };
    if n_sbs == 0 {
        return Err(Error::EmptyDeployment);
    }
    let mut sbss = Vec::with_capacity(n_sbs);
    for id in 0..n_sbs {
        let position = uniform_point(geometry, &mut rng);
        let cpu_speed = if devices.sbs_cpu_max > devices.sbs_cpu_min {
            rng.random_range(devices.sbs_cpu_min..devices.sbs_cpu_max)
        } else {
            devices.sbs_cpu_min
        };
        sbss.push(Sbs {
            id,
            position,
            cpu_speed,
            max_tx_power_dbm: devices.sbs_max_power_dbm,
            utilization_cap: devices.utilization_cap,
            authorized_mues: Vec::new(),
        });
    }

    let mut rng = stream_rng(seed, MUE_STREAM);
    let n_mue = match config.deployment {
        Deployment::Ppp { mue_intensity, .. } => poisson_count(mue_intensity * volume_area, &mut rng)?,
        Deployment::Fixed { mue_count, .. } => mue_count,
    };
    let mut mues = Vec::with_capacity(n_mue);
    for id in 0..n_mue {
        let (position, home) = place_mue(config, &sbss, &mut rng).ok_or_else(|| {
            Error::InvalidConfig(format!("could not place MUE {id} within reach of an SBS"))
        })?;
        sbss[home].authorized_mues.push(id);
        mues.push(Mue {
            id,
            position,
            home_sbs: home,
            arrival_rate: devices.mue_arrival_rate,
            private_fraction: devices.mue_private_fraction,
            max_tx_power_dbm: devices.mue_max_power_dbm,
        });
    }

    let mut scenario = Scenario {
        schema_version: super::SCENARIO_SCHEMA_VERSION,
        seed,
        geometry: geometry.clone(),
        channel: config.channel.clone(),
        weights: config.weights.clone(),
        sbss,
        mues,
        trust: TrustNetwork::with_nodes(0..n_sbs),
    };
    scenario.trust = random_trust(&scenario, &config.trust, seed, 0)?;
    Ok(scenario)
}

/// Draws a trust network over the physically reachable SBS pairs of
/// `scenario`. `snapshot` selects an independent draw for periodic refreshes;
/// snapshot 0 is the one stored in a freshly generated scenario.
pub fn random_trust(
    scenario: &Scenario,
    config: &TrustGenConfig,
    seed: u64,
    snapshot: u64,
) -> Result<TrustNetwork> {
    let mut rng = stream_rng(seed, TRUST_STREAM + 16 * snapshot);
    let n = scenario.num_sbs();
    let mut reachable = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                reachable[i * n + j] = scenario.sbs_link(i, j).map(|l| l.feasible).unwrap_or(false);
            }
        }
    }
    TrustNetwork::random(0..n, |i, j| reachable[i * n + j], config, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::paper_fig4;

    #[test]
    fn fixed_counts_are_exact() {
        let cfg = paper_fig4().scenario;
        let s = generate_scenario(&cfg, 7).unwrap();
        assert_eq!(s.sbss.len(), 13);
        assert_eq!(s.mues.len(), 52);
        s.validate().unwrap();
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = paper_fig4().scenario;
        assert_eq!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 11).unwrap()
        );
        assert_ne!(
            generate_scenario(&cfg, 11).unwrap(),
            generate_scenario(&cfg, 12).unwrap()
        );
    }

    #[test]
    fn zero_mue_intensity_gives_all_sellers() {
        let mut cfg = paper_fig4().scenario;
        cfg.deployment = Deployment::Ppp {
            sbs_intensity: 2e-4,
            mue_intensity: 0.0,
        };
        let s = generate_scenario(&cfg, 3).unwrap();
        assert!(s.mues.is_empty());
        assert!((0..s.num_sbs()).all(|i| s.surplus(i) >= 0.0));
    }

    #[test]
    fn empty_deployment_is_an_error() {
        let mut cfg = paper_fig4().scenario;
        cfg.deployment = Deployment::Ppp {
            sbs_intensity: 0.0,
            mue_intensity: 1e-3,
        };
        assert!(matches!(generate_scenario(&cfg, 1), Err(Error::EmptyDeployment)));
    }

    #[test]
    fn homes_are_nearest_and_rates_add_up() {
        let cfg = paper_fig4().scenario;
        for seed in 0..20 {
            let s = generate_scenario(&cfg, seed).unwrap();
            for m in &s.mues {
                let d_home = m.position.distance(s.sbss[m.home_sbs].position);
                for sbs in &s.sbss {
                    let d = m.position.distance(sbs.position);
                    assert!(d > d_home || (d == d_home && sbs.id >= m.home_sbs));
                }
            }
            for i in 0..s.num_sbs() {
                let direct: f64 = s
                    .mues
                    .iter()
                    .filter(|m| m.home_sbs == i)
                    .map(|m| m.arrival_rate)
                    .sum();
                assert_eq!(s.arrival_at(i), direct);
            }
        }
    }

    #[test]
    fn poisson_count_mean() {
        let mut cfg = paper_fig4().scenario;
        let intensity = 1.5e-4;
        cfg.deployment = Deployment::Ppp {
            sbs_intensity: intensity,
            mue_intensity: 0.0,
        };
        let expected = intensity * cfg.geometry.floor_area() * cfg.geometry.num_floors() as f64;
        let mut total = 0usize;
        let seeds = 1000;
        for seed in 0..seeds {
            total += generate_scenario(&cfg, seed).map(|s| s.num_sbs()).unwrap_or(0);
        }
        let mean = total as f64 / seeds as f64;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean {mean} vs {expected}"
        );
    }
}
