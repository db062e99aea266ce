//! Comparison schemes: no cooperation, maximal peer offloading, and the
//! centralized best partition.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{evaluate, Allocation, CostReport, PeerFlow, Reassociation};
use crate::error::{Error, Result};
use crate::formation::{form_coalitions, Evaluator, Formation};
use crate::game::Game;
use crate::matching::{role, Role, EPS};
use crate::partitions::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    #[serde(rename = "noncoop")]
    NonCooperative,
    #[serde(rename = "cloudmin")]
    CloudMin,
    #[serde(rename = "central")]
    Centralized,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::NonCooperative,
        Scheme::CloudMin,
        Scheme::Centralized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::NonCooperative => "noncoop",
            Scheme::CloudMin => "cloudmin",
            Scheme::Centralized => "central",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme {s:?}")))
    }
}

/// Result of one scheme on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub partition: Partition,
    pub allocation: Allocation,
    pub report: CostReport,
}

impl SchemeOutcome {
    pub fn total_utility(&self) -> f64 {
        self.report.total_utility()
    }

    pub fn total_cost(&self) -> f64 {
        self.report.total_cost()
    }

    pub fn total_cloud(&self) -> f64 {
        self.allocation.total_cloud()
    }

    pub fn from_formation(f: &Formation) -> Self {
        Self {
            scheme: Scheme::Proposed,
            partition: f.partition.clone(),
            allocation: f.allocation.clone(),
            report: f.report.clone(),
        }
    }
}

fn from_partition(eval: &Evaluator, scheme: Scheme, partition: Partition) -> Result<SchemeOutcome> {
    let values = partition
        .coalitions()
        .iter()
        .map(|c| eval.value(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(SchemeOutcome {
        scheme,
        allocation: Allocation::merge(values.iter().map(|v| &v.allocation)),
        report: CostReport::merge(values.iter().map(|v| &v.report)),
        partition,
    })
}

/// Every SBS alone: local processing up to capacity, the rest to the cloud.
pub fn non_cooperative(eval: &Evaluator) -> Result<SchemeOutcome> {
    let n = eval.game().num_sbs();
    from_partition(eval, Scheme::NonCooperative, Partition::singletons(0..n))
}

/// Merge-and-split formation, packaged like the baselines.
pub fn proposed(eval: &Evaluator) -> Result<(SchemeOutcome, Formation)> {
    let f = form_coalitions(eval)?;
    Ok((SchemeOutcome::from_formation(&f), f))
}

/// Best partition by total value over all partitions of the network. Exact:
/// dynamic programming over subsets, with every coalition valued once.
pub fn centralized_opt(eval: &Evaluator, cap: usize) -> Result<SchemeOutcome> {
    let n = eval.game().num_sbs();
    if n > cap {
        return Err(Error::TooLarge {
            what: "centralized search",
            n,
            cap,
        });
    }
    let full = (1usize << n) - 1;
    let members = |mask: usize| -> Vec<usize> { (0..n).filter(|&i| mask >> i & 1 == 1).collect() };
    let all: Vec<Vec<usize>> = (1..=full).map(members).collect();
    eval.prefetch(&all)?;
    let mut value = vec![0.0; full + 1];
    for (mask, coalition) in (1..=full).zip(&all) {
        value[mask] = eval.value(coalition)?.value;
    }
    let mut best = vec![f64::NEG_INFINITY; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // Submasks of `rest`, each joined with the lowest member.
        let mut sub = rest;
        loop {
            let block = sub | low;
            let total = value[block] + best[mask ^ block];
            if total > best[mask] {
                best[mask] = total;
                choice[mask] = block;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    let mut blocks = Vec::new();
    let mut mask = full;
    while mask != 0 {
        blocks.push(members(choice[mask]));
        mask ^= choice[mask];
    }
    from_partition(eval, Scheme::Centralized, Partition::new(blocks)?)
}

struct FlowNet {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNet {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    /// Adds `u -> v` with capacity `c`; returns the edge index.
    fn edge(&mut self, u: usize, v: usize, c: f64) -> usize {
        let e = self.to.len();
        self.head[u].push(e);
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(e + 1);
        self.to.push(u);
        self.cap.push(0.0);
        e
    }

    fn flow_on(&self, e: usize) -> f64 {
        self.cap[e + 1]
    }

    /// Edmonds-Karp: shortest augmenting paths in edge-insertion order.
    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let mut prev = vec![usize::MAX; self.head.len()];
            let mut queue = VecDeque::from([s]);
            prev[s] = usize::MAX - 1;
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if prev[v] == usize::MAX && self.cap[e] > EPS {
                        prev[v] = e;
                        queue.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            total += push;
        }
    }
}

/// Peer offloading wherever physically possible, ignoring cost and risk:
/// the grand coalition moves the maximum total of normal traffic from
/// buyers to sellers, so the cloud receives the least possible. Costs are
/// then evaluated honestly.
pub fn cloud_min(game: &Game) -> Result<SchemeOutcome> {
    let n = game.num_sbs();
    let m = game.num_mue();
    let assoc = game.settings().mue_association;
    // Nodes: source, sink, SBSs, MUEs.
    let (src, sink) = (0, 1);
    let sbs_node = |i: usize| 2 + i;
    let mue_node = |k: usize| 2 + n + k;
    let mut net = FlowNet::new(2 + n + m);
    let buyers: Vec<usize> = (0..n).filter(|&i| role(game, i) == Role::Buyer).collect();
    let sellers: Vec<usize> = (0..n).filter(|&i| role(game, i) == Role::Seller).collect();
    let mut peer_edges = Vec::new();
    let mut mue_edges = Vec::new();
    for &b in &buyers {
        let tradable = (-game.surplus(b)).min(game.normal_volume(b));
        net.edge(src, sbs_node(b), tradable);
        for &s in &sellers {
            if game.peer_feasible(b, s) {
                peer_edges.push((b, s, net.edge(sbs_node(b), sbs_node(s), f64::INFINITY)));
            }
        }
        if assoc {
            for &k in game.authorized(b) {
                let normal = game.scenario().mues[k].normal_rate();
                if normal <= 0.0 || !game.covers(b, k) {
                    continue;
                }
                net.edge(sbs_node(b), mue_node(k), normal);
                for &s in &sellers {
                    if game.covers(s, k) {
                        mue_edges.push((b, s, k, net.edge(mue_node(k), sbs_node(s), f64::INFINITY)));
                    }
                }
            }
        }
    }
    for &s in &sellers {
        net.edge(sbs_node(s), sink, game.surplus(s));
    }
    net.max_flow(src, sink);

    let mut reassociations: Vec<Reassociation> = mue_edges
        .iter()
        .filter(|e| net.flow_on(e.3) > EPS)
        .map(|&(buyer, seller, mue, e)| Reassociation {
            buyer,
            seller,
            mue,
            rate: net.flow_on(e),
        })
        .collect();
    let mut peer_flows: Vec<PeerFlow> = peer_edges
        .iter()
        .filter(|e| net.flow_on(e.2) > EPS)
        .map(|&(from, to, e)| PeerFlow {
            from,
            to,
            rate: net.flow_on(e),
        })
        .collect();

    // Association first: move peer flow onto co-covered traffic still at home.
    if assoc {
        let mut used = vec![0.0; m];
        for r in &reassociations {
            used[r.mue] += r.rate;
        }
        for f in &mut peer_flows {
            for &k in game.authorized(f.from) {
                if f.rate <= EPS {
                    break;
                }
                let left = game.scenario().mues[k].normal_rate() - used[k];
                if left > EPS && game.covers(f.from, k) && game.covers(f.to, k) {
                    let shift = left.min(f.rate);
                    used[k] += shift;
                    f.rate -= shift;
                    reassociations.push(Reassociation {
                        buyer: f.from,
                        seller: f.to,
                        mue: k,
                        rate: shift,
                    });
                }
            }
        }
        peer_flows.retain(|f| f.rate > EPS);
    }

    let mut alloc = Allocation {
        members: (0..n).collect(),
        reassociations,
        peer_flows,
        ..Allocation::default()
    };
    for i in 0..n {
        let arrival = game.arrival(i);
        let out: f64 = alloc
            .reassociations
            .iter()
            .filter(|r| r.buyer == i)
            .map(|r| r.rate)
            .sum::<f64>()
            + alloc
                .peer_flows
                .iter()
                .filter(|f| f.from == i)
                .map(|f| f.rate)
                .sum::<f64>();
        let inn: f64 = alloc
            .reassociations
            .iter()
            .filter(|r| r.seller == i)
            .map(|r| r.rate)
            .sum::<f64>()
            + alloc
                .peer_flows
                .iter()
                .filter(|f| f.to == i)
                .map(|f| f.rate)
                .sum::<f64>();
        if role(game, i) == Role::Buyer {
            let cloud = (-game.surplus(i) - out).max(0.0);
            alloc.cloud_flows.insert(i, cloud);
            alloc.local_workloads.insert(i, arrival - out - cloud);
        } else {
            alloc.local_workloads.insert(i, arrival + inn);
        }
    }
    let report = evaluate(game, &alloc)?;
    Ok(SchemeOutcome {
        scheme: Scheme::CloudMin,
        partition: Partition::new(vec![(0..n).collect()])?,
        allocation: alloc,
        report,
    })
}

/// Runs one scheme by name.
pub fn run_scheme(eval: &Evaluator, scheme: Scheme) -> Result<SchemeOutcome> {
    match scheme {
        Scheme::Proposed => proposed(eval).map(|p| p.0),
        Scheme::NonCooperative => non_cooperative(eval),
        Scheme::CloudMin => cloud_min(eval.game()),
        Scheme::Centralized => centralized_opt(eval, eval.game().settings().central_cap),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::SetPartitions;
    use crate::testkit::{line_game, LineSpec};
    use approx::assert_relative_eq;

    fn cpu(cap: f64) -> f64 {
        cap / 0.9 * 1e8
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("greedy".parse::<Scheme>().is_err());
    }

    #[test]
    fn all_sellers_pay_only_association_and_compute() {
        let g = line_game(&LineSpec {
            sbs_x: vec![0.0, 50.0],
            cpu: vec![cpu(10.0), cpu(10.0)],
            mues: vec![(0, 0.0, 3.0, 0.0)],
            ..LineSpec::default()
        });
        let eval = Evaluator::new(&g).unwrap();
        let nc = non_cooperative(&eval).unwrap();
        let w_c = g.scenario().weights.w_c;
        let expected: f64 = nc
            .report
            .rows
            .iter()
            .map(|r| w_c * (r.association + r.compute))
            .sum();
        assert_relative_eq!(nc.total_cost(), expected, max_relative = 1e-12);
        assert_eq!(nc.report.total_risk(), 0.0);
    }

    #[test]
    fn lone_buyer_pays_the_cloud_fee() {
        let g = line_game(&LineSpec {
            sbs_x: vec![0.0],
            cpu: vec![cpu(2.0)],
            mues: vec![(0, 0.0, 10.0, 0.0)],
            ..LineSpec::default()
        });
        let eval = Evaluator::new(&g).unwrap();
        let nc = non_cooperative(&eval).unwrap();
        assert_relative_eq!(
            nc.report.rows[0].cloud_fee,
            8.0 * g.scenario().weights.w_0,
            max_relative = 1e-12
        );
        assert_eq!(nc.report.total_risk(), 0.0);
    }

    #[test]
    fn cloud_min_fills_reachable_surplus() {
        let g = line_game(&LineSpec {
            sbs_x: vec![0.0, 50.0, 3000.0],
            cpu: vec![cpu(2.0), cpu(20.0), cpu(2.0)],
            mues: vec![(0, 0.0, 10.0, 0.0), (2, 3000.0, 10.0, 0.0)],
            ..LineSpec::default()
        });
        let cm = cloud_min(&g).unwrap();
        cm.allocation.check(&g).unwrap();
        assert_eq!(cm.allocation.cloud(0), 0.0);
        // SBS 2 is out of reach: all of its deficit goes to the cloud.
        assert_relative_eq!(cm.allocation.cloud(2), 8.0, max_relative = 1e-12);
        let eval = Evaluator::new(&g).unwrap();
        assert!(cm.total_cloud() <= non_cooperative(&eval).unwrap().total_cloud());
    }

    #[test]
    fn centralized_matches_brute_force() {
        let g = line_game(&LineSpec {
            sbs_x: vec![0.0, 60.0, 120.0],
            cpu: vec![cpu(2.0), cpu(6.0), cpu(3.0)],
            mues: vec![(0, 0.0, 6.0, 0.0), (2, 120.0, 6.0, 0.1)],
            trust: vec![(0, 1, 0.9), (2, 1, 0.6)],
            ..LineSpec::default()
        });
        let eval = Evaluator::new(&g).unwrap();
        let best = SetPartitions::new(&[0, 1, 2])
            .map(|p| eval.total_value(&p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let c = centralized_opt(&eval, 10).unwrap();
        assert_relative_eq!(c.total_utility(), best, max_relative = 1e-12);
        let (p, _) = proposed(&eval).unwrap();
        assert!(c.total_utility() >= p.total_utility() - 1e-9);
        assert!(matches!(
            centralized_opt(&eval, 2),
            Err(Error::TooLarge { cap: 2, .. })
        ));
    }

    #[test]
    fn single_sbs_centralized_is_trivial() {
        let g = line_game(&LineSpec {
            sbs_x: vec![0.0],
            cpu: vec![cpu(2.0)],
            mues: vec![(0, 0.0, 1.0, 0.0)],
            ..LineSpec::default()
        });
        let eval = Evaluator::new(&g).unwrap();
        let c = centralized_opt(&eval, 10).unwrap();
        assert_eq!(c.partition, Partition::singletons([0]));
    }
}
