use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::formation::{form_coalitions, Evaluator};
use crate::game::Game;
use crate::partitions::Partition;
use crate::scenario::{generate_scenario, place_mue, random_trust, stream_rng, Mue, Point3};

/// RNG stream for churn and per-slot arrival rates.
pub const DYNAMIC_STREAM: u64 = 3;

/// Multi-slot run with MUE churn and periodically refreshed trust.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSpec {
    pub slots: usize,
    /// Trust is redrawn every this many slots.
    pub refresh_every: usize,
    /// Per-MUE arrival rate drawn uniformly from this range each slot.
    pub arrival_min: f64,
    pub arrival_max: f64,
    /// Mean number of MUEs joining per slot (Poisson).
    pub join_rate: f64,
    /// Probability that an MUE leaves at the start of a slot.
    pub leave_probability: f64,
}

impl Default for DynamicSpec {
    fn default() -> Self {
        Self {
            slots: 30,
            refresh_every: 5,
            arrival_min: 3.0,
            arrival_max: 7.0,
            join_rate: 2.0,
            leave_probability: 0.05,
        }
    }
}

impl DynamicSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.refresh_every == 0 {
            return Err(Error::InvalidConfig(
                "dynamic: slots and refresh_every must be >= 1".into(),
            ));
        }
        if !(self.arrival_min >= 0.0 && self.arrival_max >= self.arrival_min) {
            return Err(Error::InvalidConfig(
                "dynamic: need 0 <= arrival_min <= arrival_max".into(),
            ));
        }
        if !(self.join_rate >= 0.0) || !(0.0..=1.0).contains(&self.leave_probability) {
            return Err(Error::InvalidConfig(
                "dynamic: join_rate must be >= 0 and leave_probability in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub trust_snapshot: u64,
    pub n_mue: usize,
    /// Task arrival rate per SBS.
    pub arrivals: Vec<f64>,
    pub partition: Partition,
    pub phi: Vec<f64>,
    pub standalone: Vec<f64>,
    /// `phi_i - v({i})` per SBS.
    pub gain: Vec<f64>,
    pub system_utility: f64,
    pub noncoop_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSeries {
    pub seed: u64,
    pub refresh_every: usize,
    pub slots: Vec<SlotRecord>,
}

/// Forms coalitions independently in every slot. SBSs stay put; MUEs come
/// and go and redraw their arrival rates, all driven by `seed`.
pub fn run_dynamic(base: &SimConfig, spec: &DynamicSpec, seed: u64) -> Result<SlotSeries> {
    base.validate()?;
    spec.validate()?;
    let template = generate_scenario(&base.scenario, seed)?;
    let mut rng = stream_rng(seed, DYNAMIC_STREAM);
    let mut active: Vec<(Point3, usize)> = template.mues.iter().map(|m| (m.position, m.home_sbs)).collect();
    let joins = if spec.join_rate > 0.0 {
        Some(Poisson::new(spec.join_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let devices = &base.scenario.devices;
    let mut slots = Vec::with_capacity(spec.slots);
    for slot in 0..spec.slots {
        if slot > 0 {
            active.retain(|_| !rng.random_bool(spec.leave_probability));
            let arriving = joins.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            for _ in 0..arriving {
                if let Some(p) = place_mue(&base.scenario, &template.sbss, &mut rng) {
                    active.push(p);
                }
            }
        }
        let mut scenario = template.clone();
        for s in &mut scenario.sbss {
            s.authorized_mues.clear();
        }
        scenario.mues = active
            .iter()
            .enumerate()
            .map(|(id, &(position, home))| {
                let rate = if spec.arrival_max > spec.arrival_min {
                    rng.random_range(spec.arrival_min..spec.arrival_max)
                } else {
                    spec.arrival_min
                };
                Mue {
                    id,
                    position,
                    home_sbs: home,
                    arrival_rate: rate,
                    private_fraction: devices.mue_private_fraction,
                    max_tx_power_dbm: devices.mue_max_power_dbm,
                }
            })
            .collect();
        for m in &scenario.mues {
            scenario.sbss[m.home_sbs].authorized_mues.push(m.id);
        }
        let snapshot = (slot / spec.refresh_every) as u64;
        let trust = random_trust(&scenario, &base.scenario.trust, seed, snapshot)?;
        scenario.trust = trust;
        let game = Game::new(&scenario, base.game.clone())?;
        let eval = Evaluator::new(&game)?;
        let f = form_coalitions(&eval)?;
        let phi = f.phi();
        let standalone: Vec<f64> = (0..game.num_sbs()).map(|i| eval.standalone(i)).collect();
        slots.push(SlotRecord {
            slot,
            trust_snapshot: snapshot,
            n_mue: scenario.mues.len(),
            arrivals: (0..game.num_sbs()).map(|i| game.arrival(i)).collect(),
            gain: phi.iter().zip(&standalone).map(|(p, s)| p - s).collect(),
            system_utility: f.system_utility(),
            noncoop_utility: standalone.iter().sum(),
            partition: f.partition,
            phi,
            standalone,
        });
    }
    Ok(SlotSeries {
        seed,
        refresh_every: spec.refresh_every,
        slots,
    })
}

#[derive(Debug, Serialize)]
struct DynamicCsvRow {
    slot: usize,
    trust_snapshot: u64,
    sbs_id: usize,
    coalition_id: usize,
    arrivals: f64,
    phi: f64,
    standalone: f64,
    gain: f64,
}

/// One row per (slot, SBS).
pub fn write_dynamic_csv<W: Write>(out: W, series: &SlotSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &series.slots {
        for i in 0..s.phi.len() {
            w.serialize(DynamicCsvRow {
                slot: s.slot,
                trust_snapshot: s.trust_snapshot,
                sbs_id: i,
                coalition_id: s
                    .partition
                    .coalitions()
                    .iter()
                    .position(|c| c.contains(&i))
                    .unwrap_or(0),
                arrivals: s.arrivals[i],
                phi: s.phi[i],
                standalone: s.standalone[i],
                gain: s.gain[i],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::paper_fig4;
    use crate::scenario::Deployment;

    fn base() -> SimConfig {
        let mut cfg = paper_fig4();
        cfg.scenario.deployment = Deployment::Fixed {
            sbs_count: 6,
            mue_count: 24,
        };
        cfg
    }

    #[test]
    fn static_arrivals_repeat_between_refreshes() {
        let spec = DynamicSpec {
            slots: 6,
            refresh_every: 3,
            arrival_min: 5.0,
            arrival_max: 5.0,
            join_rate: 0.0,
            leave_probability: 0.0,
        };
        let s = run_dynamic(&base(), &spec, 4).unwrap();
        assert_eq!(s.slots.len(), 6);
        assert_eq!(s.slots[0].partition, s.slots[1].partition);
        assert_eq!(s.slots[1].partition, s.slots[2].partition);
        assert_eq!(s.slots[3].partition, s.slots[5].partition);
        assert_eq!(s.slots[3].trust_snapshot, 1);
    }

    #[test]
    fn gains_are_nonnegative_and_deterministic() {
        let spec = DynamicSpec {
            slots: 8,
            ..DynamicSpec::default()
        };
        let a = run_dynamic(&base(), &spec, 9).unwrap();
        for s in &a.slots {
            assert!(s.gain.iter().all(|&g| g >= -1e-9));
            assert!(s.system_utility >= s.noncoop_utility - 1e-9);
        }
        assert_eq!(a, run_dynamic(&base(), &spec, 9).unwrap());
        let mut buf = Vec::new();
        write_dynamic_csv(&mut buf, &a).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 8 * 6);
    }

    #[test]
    fn zero_slots_rejected() {
        let spec = DynamicSpec {
            slots: 0,
            ..DynamicSpec::default()
        };
        assert!(run_dynamic(&base(), &spec, 1).is_err());
    }
}
