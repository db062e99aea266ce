//! Per-SBS cost terms and utilities of an allocation.
//!
//! Units: delays in seconds per task, energies in joules per task (folded into
//! delay units by `gamma`), flows in tasks per slot. `w_c` converts the four
//! delay-equivalent stage costs into money, which is added to the cloud fee.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Game;

/// Normal traffic of `mue` (authorized at `buyer`) redirected to `seller`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reassociation {
    pub buyer: usize,
    pub seller: usize,
    pub mue: usize,
    pub rate: f64,
}

/// Tasks relayed from SBS `from` to SBS `to` over the wireless backhaul.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerFlow {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Outcome of workload balancing inside one coalition (or several, merged).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub members: Vec<usize>,
    pub reassociations: Vec<Reassociation>,
    pub peer_flows: Vec<PeerFlow>,
    pub cloud_flows: BTreeMap<usize, f64>,
    pub local_workloads: BTreeMap<usize, f64>,
}

impl Allocation {
    /// Concatenates allocations of disjoint coalitions.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a Allocation>) -> Allocation {
        let mut out = Allocation::default();
        for p in parts {
            out.members.extend(&p.members);
            out.reassociations.extend(&p.reassociations);
            out.peer_flows.extend(&p.peer_flows);
            out.cloud_flows.extend(&p.cloud_flows);
            out.local_workloads.extend(&p.local_workloads);
        }
        out.members.sort_unstable();
        out
    }

    pub fn local(&self, i: usize) -> f64 {
        self.local_workloads.get(&i).copied().unwrap_or(0.0)
    }

    pub fn cloud(&self, i: usize) -> f64 {
        self.cloud_flows.get(&i).copied().unwrap_or(0.0)
    }

    pub fn total_cloud(&self) -> f64 {
        self.cloud_flows.values().sum()
    }

    /// Normal-task rate that buyer `i` redirected to seller `j` via its MUEs.
    pub fn reassociated(&self, i: usize, j: usize) -> f64 {
        self.reassociations
            .iter()
            .filter(|r| r.buyer == i && r.seller == j)
            .map(|r| r.rate)
            .sum()
    }

    pub fn peer(&self, i: usize, j: usize) -> f64 {
        self.peer_flows
            .iter()
            .filter(|f| f.from == i && f.to == j)
            .map(|f| f.rate)
            .sum()
    }

    fn outflow(&self, i: usize) -> f64 {
        self.reassociations
            .iter()
            .filter(|r| r.buyer == i)
            .map(|r| r.rate)
            .sum::<f64>()
            + self
                .peer_flows
                .iter()
                .filter(|f| f.from == i)
                .map(|f| f.rate)
                .sum::<f64>()
    }

    fn inflow(&self, j: usize) -> f64 {
        self.reassociations
            .iter()
            .filter(|r| r.seller == j)
            .map(|r| r.rate)
            .sum::<f64>()
            + self
                .peer_flows
                .iter()
                .filter(|f| f.to == j)
                .map(|f| f.rate)
                .sum::<f64>()
    }

    /// Checks every structural invariant: nonnegative flows, queue stability,
    /// per-buyer conservation, per-seller accumulation, role constraints,
    /// physical feasibility and the private-task bound.
    pub fn check(&self, game: &Game) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAllocation(msg));
        let tol = |scale: f64| 1e-9 * scale.abs().max(1.0);
        let is_member = |i: usize| self.members.contains(&i);

        for r in &self.reassociations {
            if !(r.rate >= 0.0 && r.rate.is_finite()) {
                return bad(format!("negative re-association rate for MUE {}", r.mue));
            }
            if !is_member(r.buyer) || !is_member(r.seller) {
                return bad(format!(
                    "re-association {}->{} leaves the coalition",
                    r.buyer, r.seller
                ));
            }
            if game.scenario().mues.get(r.mue).map(|m| m.home_sbs) != Some(r.buyer) {
                return bad(format!("MUE {} is not authorized at SBS {}", r.mue, r.buyer));
            }
            if r.rate > 0.0 && !game.covers(r.seller, r.mue) {
                return Err(Error::InfeasibleAssociation {
                    mue: r.mue,
                    sbs: r.seller,
                });
            }
        }
        for f in &self.peer_flows {
            if !(f.rate >= 0.0 && f.rate.is_finite()) {
                return bad(format!("negative peer flow {}->{}", f.from, f.to));
            }
            if !is_member(f.from) || !is_member(f.to) || f.from == f.to {
                return bad(format!("peer flow {}->{} is not between members", f.from, f.to));
            }
            if f.rate > 0.0 && !game.peer_feasible(f.from, f.to) {
                return Err(Error::InfeasiblePeerLink {
                    from: f.from,
                    to: f.to,
                });
            }
        }
        let mut per_mue: BTreeMap<usize, f64> = BTreeMap::new();
        for r in &self.reassociations {
            *per_mue.entry(r.mue).or_default() += r.rate;
        }
        for (&m, &rate) in &per_mue {
            let normal = game.scenario().mues[m].normal_rate();
            if rate > normal + tol(normal) {
                return bad(format!("MUE {m} re-associates {rate} > normal rate {normal}"));
            }
        }

        for &i in &self.members {
            let local = match self.local_workloads.get(&i) {
                Some(&w) => w,
                None => return bad(format!("missing local workload for SBS {i}")),
            };
            let cloud = self.cloud(i);
            if !(local >= -tol(local) && cloud >= 0.0) {
                return bad(format!("negative workload at SBS {i}"));
            }
            if local >= game.service_rate(i) {
                return Err(Error::QueueUnstable {
                    sbs: i,
                    workload: local,
                    service_rate: game.service_rate(i),
                });
            }
            if local > game.capacity(i) + tol(game.capacity(i)) {
                return bad(format!(
                    "SBS {i} loaded {local} beyond capacity {}",
                    game.capacity(i)
                ));
            }
            let arrival = game.arrival(i);
            let out = self.outflow(i);
            let inn = self.inflow(i);
            let is_seller = game.surplus(i) >= 0.0;
            if is_seller {
                if out > 0.0 || cloud > 0.0 {
                    return bad(format!("seller SBS {i} offloads its own traffic"));
                }
                if (local - (arrival + inn)).abs() > tol(arrival + inn) {
                    return bad(format!(
                        "seller accumulation fails at SBS {i}: {local} != {arrival} + {inn}"
                    ));
                }
            } else {
                if inn > 0.0 {
                    return bad(format!("buyer SBS {i} receives peer traffic"));
                }
                if (arrival - (local + out + cloud)).abs() > tol(arrival) {
                    return bad(format!(
                        "buyer conservation fails at SBS {i}: {arrival} != {local} + {out} + {cloud}"
                    ));
                }
                let normal = game.normal_volume(i);
                if out > normal + tol(normal) {
                    return bad(format!("buyer SBS {i} offloads private tasks to peers"));
                }
            }
        }
        Ok(())
    }
}

/// Per-SBS cost breakdown in money units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub sbs: usize,
    /// Stage costs below are in delay units, before the `w_c` conversion.
    pub association: f64,
    pub peer_tx: f64,
    pub compute: f64,
    pub cloud_tx: f64,
    pub cloud_fee: f64,
    pub risk: f64,
    /// `w_c (association + peer_tx + compute + cloud_tx) + cloud_fee`.
    pub operational: f64,
    /// `-(operational + risk)`.
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a CostReport>) -> CostReport {
        let mut rows: Vec<CostRow> = parts.into_iter().flat_map(|r| r.rows.iter().copied()).collect();
        rows.sort_by_key(|r| r.sbs);
        CostReport { rows }
    }

    pub fn total_utility(&self) -> f64 {
        self.rows.iter().map(|r| r.utility).sum()
    }

    pub fn total_cost(&self) -> f64 {
        -self.total_utility()
    }

    pub fn total_risk(&self) -> f64 {
        self.rows.iter().map(|r| r.risk).sum()
    }

    pub fn row(&self, sbs: usize) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.sbs == sbs)
    }

    pub fn utility(&self, sbs: usize) -> f64 {
        self.row(sbs).map_or(0.0, |r| r.utility)
    }
}

/// MUE-to-SBS transmission cost absorbed by SBS `i`: kept traffic over the
/// home link, re-associated normal traffic over the seller link.
pub fn association_cost(game: &Game, i: usize, alloc: &Allocation) -> Result<f64> {
    let mut cost = 0.0;
    for &m in game.authorized(i) {
        let lambda = game.scenario().mues[m].arrival_rate;
        let mut kept = lambda;
        for r in alloc.reassociations.iter().filter(|r| r.mue == m && r.rate > 0.0) {
            if !game.covers(r.seller, m) {
                return Err(Error::InfeasibleAssociation {
                    mue: m,
                    sbs: r.seller,
                });
            }
            kept -= r.rate;
            cost += r.rate * game.mue_task_cost(m, r.seller);
        }
        if kept > 1e-12 {
            if !game.covers(i, m) {
                return Err(Error::InfeasibleAssociation { mue: m, sbs: i });
            }
            cost += kept * game.mue_task_cost(m, i);
        }
    }
    Ok(cost)
}

pub fn peer_tx_cost(game: &Game, i: usize, alloc: &Allocation) -> Result<f64> {
    let mut cost = 0.0;
    for f in alloc.peer_flows.iter().filter(|f| f.from == i && f.rate > 0.0) {
        if !game.peer_feasible(i, f.to) {
            return Err(Error::InfeasiblePeerLink { from: i, to: f.to });
        }
        cost += f.rate * game.sbs_task_cost(i, f.to);
    }
    Ok(cost)
}

pub fn compute_cost(game: &Game, i: usize, alloc: &Allocation) -> Result<f64> {
    game.compute_cost(i, alloc.local(i))
}

/// `(transmission cost in delay units, cloud fee in money)` for `beta_i0` tasks.
pub fn cloud_cost(game: &Game, cloud_tasks: f64) -> (f64, f64) {
    let w = &game.scenario().weights;
    (
        cloud_tasks * (w.cloud_delay + w.gamma * w.cloud_energy),
        w.w_0 * cloud_tasks,
    )
}

/// `w_r * sum_j (beta^u_ij + beta_ij)(1 - T_ij)`, charged to the offloader only.
pub fn risk_cost(game: &Game, i: usize, alloc: &Allocation) -> f64 {
    let mut per_target: BTreeMap<usize, f64> = BTreeMap::new();
    for r in alloc.reassociations.iter().filter(|r| r.buyer == i) {
        *per_target.entry(r.seller).or_default() += r.rate;
    }
    for f in alloc.peer_flows.iter().filter(|f| f.from == i) {
        *per_target.entry(f.to).or_default() += f.rate;
    }
    game.scenario().weights.w_r
        * per_target
            .into_iter()
            .map(|(j, rate)| rate * (1.0 - game.trust(i, j)))
            .fold(0.0, |acc, x| acc + x)
}

pub fn cost_row(game: &Game, i: usize, alloc: &Allocation) -> Result<CostRow> {
    let w = &game.scenario().weights;
    let association = association_cost(game, i, alloc)?;
    let peer_tx = peer_tx_cost(game, i, alloc)?;
    let compute = compute_cost(game, i, alloc)?;
    let (cloud_tx, cloud_fee) = cloud_cost(game, alloc.cloud(i));
    let risk = risk_cost(game, i, alloc);
    let operational = w.w_c * (association + peer_tx + compute + cloud_tx) + cloud_fee;
    Ok(CostRow {
        sbs: i,
        association,
        peer_tx,
        compute,
        cloud_tx,
        cloud_fee,
        risk,
        operational,
        utility: -(operational + risk),
    })
}

/// Full breakdown for every member of the allocation.
pub fn evaluate(game: &Game, alloc: &Allocation) -> Result<CostReport> {
    let rows = alloc
        .members
        .iter()
        .map(|&i| cost_row(game, i, alloc))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport { rows })
}
