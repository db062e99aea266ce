//! Small hand-built scenarios: SBSs on a line at one height, MUEs placed
//! beside them. Used by the test suites and handy for experiments.

use crate::config::{default_weights, table_one_channel};
use crate::game::{Game, GameSettings};
use crate::scenario::{BuildingGeometry, Mue, Point3, Sbs, Scenario, WeightProfile};
use crate::trust::TrustNetwork;

/// Ground-floor line topology. Positions are x coordinates in meters; SBSs
/// sit at y = 10, MUEs at y = 12.
#[derive(Debug, Clone)]
pub struct LineSpec {
    pub sbs_x: Vec<f64>,
    /// CPU speed per SBS, cycles per second.
    pub cpu: Vec<f64>,
    /// `(home SBS, x, arrival rate, private fraction)` per MUE.
    pub mues: Vec<(usize, f64, f64, f64)>,
    /// Directed trust edges `(from, to, value)`.
    pub trust: Vec<(usize, usize, f64)>,
    pub weights: WeightProfile,
    pub settings: GameSettings,
    pub utilization_cap: f64,
}

impl Default for LineSpec {
    fn default() -> Self {
        Self {
            sbs_x: Vec::new(),
            cpu: Vec::new(),
            mues: Vec::new(),
            trust: Vec::new(),
            weights: default_weights(),
            settings: GameSettings::default(),
            utilization_cap: 0.9,
        }
    }
}

pub fn line_scenario(spec: &LineSpec) -> Scenario {
    assert_eq!(spec.sbs_x.len(), spec.cpu.len(), "one CPU speed per SBS");
    let mut sbss: Vec<Sbs> = spec
        .sbs_x
        .iter()
        .zip(&spec.cpu)
        .enumerate()
        .map(|(id, (&x, &cpu))| Sbs {
            id,
            position: Point3 { x, y: 10.0, z: 5.0 },
            cpu_speed: cpu,
            max_tx_power_dbm: 20.0,
            utilization_cap: spec.utilization_cap,
            authorized_mues: Vec::new(),
        })
        .collect();
    let mues = spec
        .mues
        .iter()
        .enumerate()
        .map(|(id, &(home, x, rate, private))| {
            sbss[home].authorized_mues.push(id);
            Mue {
                id,
                position: Point3 { x, y: 12.0, z: 5.0 },
                home_sbs: home,
                arrival_rate: rate,
                private_fraction: private,
                max_tx_power_dbm: 10.0,
            }
        })
        .collect();
    let mut trust = TrustNetwork::with_nodes(0..sbss.len());
    for &(a, b, t) in &spec.trust {
        trust.add_edge(a, b, t).expect("valid trust edge");
    }
    Scenario {
        schema_version: crate::scenario::SCENARIO_SCHEMA_VERSION,
        seed: 0,
        geometry: BuildingGeometry {
            width: 5000.0,
            depth: 20.0,
            height: 10.0,
            floor_height: 10.0,
        },
        channel: table_one_channel(),
        weights: spec.weights.clone(),
        sbss,
        mues,
        trust,
    }
}

pub fn line_game(spec: &LineSpec) -> Game {
    Game::new(&line_scenario(spec), spec.settings.clone()).expect("valid line scenario")
}
