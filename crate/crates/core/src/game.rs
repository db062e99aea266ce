//! The evaluation context shared by matching, formation and the baselines:
//! a scenario plus everything derived from it once (link metrics, coverage,
//! effective trust, capacities) and the game's tunable settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payments::ShareBasis;
use crate::scenario::{LinkMetrics, Scenario};
use crate::trust::{PathSelection, TrustNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSettings {
    /// Coalitions with at most this many buyers are valued by trying every
    /// buyer ordering; larger ones use descending deficit.
    pub exhaustive_threshold: usize,
    pub path_selection: PathSelection,
    /// Enables re-association of MUE traffic to sellers before peer offloading.
    pub mue_association: bool,
    /// Offset added when shifting standalone utilities to positive weights.
    pub epsilon: f64,
    pub share_basis: ShareBasis,
    /// Largest coalition for which every sub-partition is tried as a split.
    pub split_cap: usize,
    /// Absolute tolerance for Pareto comparisons.
    pub tolerance: f64,
    /// Merge-and-split gives up after `iteration_cap_factor * N^2` rounds.
    pub iteration_cap_factor: usize,
    /// Largest network the centralized optimum will search.
    pub central_cap: usize,
}

impl Default for GameSettings {
    fn default() -> Self {
        Self {
            exhaustive_threshold: 6,
            path_selection: PathSelection::HopCount,
            mue_association: true,
            epsilon: 1.0,
            share_basis: ShareBasis::Standalone,
            split_cap: 6,
            tolerance: 1e-9,
            iteration_cap_factor: 10,
            central_cap: 10,
        }
    }
}

impl GameSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("game.epsilon must be > 0".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("game.tolerance must be >= 0".into()));
        }
        if self.split_cap < 2 {
            return Err(Error::InvalidConfig("game.split_cap must be >= 2".into()));
        }
        if self.iteration_cap_factor == 0 {
            return Err(Error::InvalidConfig(
                "game.iteration_cap_factor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

const INFEASIBLE: LinkMetrics = LinkMetrics {
    delay: f64::INFINITY,
    energy: f64::INFINITY,
    power_w: f64::INFINITY,
    feasible: false,
};

/// Scenario plus derived tables. Immutable once built.
#[derive(Debug, Clone)]
pub struct Game {
    scenario: Scenario,
    settings: GameSettings,
    n: usize,
    trust: Vec<f64>,
    sbs_links: Vec<LinkMetrics>,
    mue_links: Vec<LinkMetrics>,
    arrival: Vec<f64>,
    normal: Vec<f64>,
    service_rate: Vec<f64>,
    capacity: Vec<f64>,
    compute_energy: Vec<f64>,
}

impl Game {
    /// Builds the context using the scenario's own trust network.
    pub fn new(scenario: &Scenario, settings: GameSettings) -> Result<Self> {
        Self::with_trust(scenario, &scenario.trust, settings)
    }

    pub fn with_trust(scenario: &Scenario, trust: &TrustNetwork, settings: GameSettings) -> Result<Self> {
        settings.validate()?;
        scenario.validate()?;
        let n = scenario.num_sbs();
        let ids: Vec<usize> = (0..n).collect();
        let matrix = trust.trust_matrix(&ids, settings.path_selection)?;
        let trust = (0..n * n).map(|k| matrix.at(k / n, k % n)).collect();

        let mut sbs_links = vec![INFEASIBLE; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sbs_links[i * n + j] = scenario.sbs_link(i, j).unwrap_or(INFEASIBLE);
                }
            }
        }
        let mut mue_links = vec![INFEASIBLE; scenario.mues.len() * n];
        for m in 0..scenario.mues.len() {
            for j in 0..n {
                mue_links[m * n + j] = scenario.mue_link(m, j).unwrap_or(INFEASIBLE);
            }
        }
        let w = &scenario.weights;
        let arrival: Vec<f64> = (0..n).map(|i| scenario.arrival_at(i)).collect();
        let normal = (0..n)
            .map(|i| {
                scenario.sbss[i]
                    .authorized_mues
                    .iter()
                    .map(|&m| scenario.mues[m].normal_rate())
                    .sum()
            })
            .collect();
        Ok(Self {
            n,
            trust,
            sbs_links,
            mue_links,
            arrival,
            normal,
            service_rate: (0..n).map(|i| scenario.service_rate(i)).collect(),
            capacity: (0..n).map(|i| scenario.capacity(i)).collect(),
            compute_energy: scenario
                .sbss
                .iter()
                .map(|s| w.gamma * w.kappa * s.cpu_speed * s.cpu_speed)
                .collect(),
            scenario: scenario.clone(),
            settings,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn settings(&self) -> &GameSettings {
        &self.settings
    }

    pub fn num_sbs(&self) -> usize {
        self.n
    }

    pub fn num_mue(&self) -> usize {
        self.scenario.mues.len()
    }

    pub fn trust(&self, i: usize, j: usize) -> f64 {
        self.trust[i * self.n + j]
    }

    pub fn sbs_link(&self, i: usize, j: usize) -> &LinkMetrics {
        &self.sbs_links[i * self.n + j]
    }

    pub fn mue_link(&self, m: usize, j: usize) -> &LinkMetrics {
        &self.mue_links[m * self.n + j]
    }

    /// Delay-equivalent cost of one task over the SBS link `i -> j`.
    pub fn sbs_task_cost(&self, i: usize, j: usize) -> f64 {
        self.sbs_link(i, j).cost_per_task(self.scenario.weights.gamma)
    }

    pub fn mue_task_cost(&self, m: usize, j: usize) -> f64 {
        self.mue_link(m, j).cost_per_task(self.scenario.weights.gamma)
    }

    pub fn covers(&self, sbs: usize, mue: usize) -> bool {
        self.mue_link(mue, sbs).feasible
    }

    pub fn peer_feasible(&self, i: usize, j: usize) -> bool {
        i != j && self.sbs_link(i, j).feasible
    }

    /// Task arrival rate at SBS `i` from its own MUEs.
    pub fn arrival(&self, i: usize) -> f64 {
        self.arrival[i]
    }

    /// Normal (offloadable) part of the arrival rate at SBS `i`.
    pub fn normal_volume(&self, i: usize) -> f64 {
        self.normal[i]
    }

    pub fn service_rate(&self, i: usize) -> f64 {
        self.service_rate[i]
    }

    pub fn capacity(&self, i: usize) -> f64 {
        self.capacity[i]
    }

    pub fn surplus(&self, i: usize) -> f64 {
        self.capacity[i] - self.arrival[i]
    }

    pub fn authorized(&self, i: usize) -> &[usize] {
        &self.scenario.sbss[i].authorized_mues
    }

    /// `omega * (1/(f/rho - omega) + gamma*kappa*f^2)`, in delay units.
    pub fn compute_cost(&self, i: usize, workload: f64) -> Result<f64> {
        let mu = self.service_rate[i];
        if workload >= mu {
            return Err(Error::QueueUnstable {
                sbs: i,
                workload,
                service_rate: mu,
            });
        }
        if workload <= 0.0 {
            return Ok(0.0);
        }
        Ok(workload * (1.0 / (mu - workload) + self.compute_energy[i]))
    }

    /// Whether coalitions containing `i` and `j` could ever trade: a feasible
    /// SBS link either way, or an MUE of one covered by the other.
    pub fn reachable(&self, i: usize, j: usize) -> bool {
        self.peer_feasible(i, j)
            || self.peer_feasible(j, i)
            || self.authorized(i).iter().any(|&m| self.covers(j, m))
            || self.authorized(j).iter().any(|&m| self.covers(i, m))
    }
}
