//! Social trust network between SBSs and effective trust by propagation.
//!
//! Trust is the product of edge values along a path chosen by
//! [`PathSelection`]; under hop count a direct edge is always that path.
//! Pairs with no path get trust 0.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSelection {
    /// Fewest hops; ties go to the lexicographically smallest node sequence.
    #[default]
    HopCount,
    /// Path with the largest trust product.
    MaxProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustEdge {
    pub from: usize,
    pub to: usize,
    pub trust: f64,
}

/// On-disk adjacency list. `nodes` is optional; when absent the node set is
/// the set of edge endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrustFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<usize>>,
    edges: Vec<TrustEdge>,
}

/// Directed graph of pairwise trust values in [0, 1].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrustNetwork {
    nodes: BTreeSet<usize>,
    edges: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl Serialize for TrustNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrustFile {
            nodes: Some(self.nodes.iter().copied().collect()),
            edges: self.edges().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrustNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = TrustFile::deserialize(d)?;
        TrustNetwork::from_file(file).map_err(serde::de::Error::custom)
    }
}

impl TrustNetwork {
    pub fn with_nodes(nodes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            edges: BTreeMap::new(),
        }
    }

    fn from_file(file: TrustFile) -> Result<Self> {
        let mut net = match file.nodes {
            Some(nodes) => Self::with_nodes(nodes),
            None => Self::with_nodes(file.edges.iter().flat_map(|e| [e.from, e.to])),
        };
        for e in file.edges {
            net.add_edge(e.from, e.to, e.trust)?;
        }
        Ok(net)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.nodes.contains(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().copied()
    }

    pub fn add_edge(&mut self, from: usize, to: usize, trust: f64) -> Result<()> {
        let bad = |reason: &str| Error::InvalidTrustEdge {
            from,
            to,
            reason: reason.into(),
        };
        if from == to {
            return Err(bad("self-loops are not allowed"));
        }
        if !(0.0..=1.0).contains(&trust) {
            return Err(bad("trust must lie in [0, 1]"));
        }
        for id in [from, to] {
            if !self.contains(id) {
                return Err(Error::UnknownNode(id));
            }
        }
        self.edges.entry(from).or_default().insert(to, trust);
        Ok(())
    }

    pub fn direct(&self, from: usize, to: usize) -> Option<f64> {
        self.edges.get(&from).and_then(|m| m.get(&to)).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = TrustEdge> + '_ {
        self.edges
            .iter()
            .flat_map(|(&from, out)| out.iter().map(move |(&to, &trust)| TrustEdge { from, to, trust }))
    }

    fn successors(&self, id: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges
            .get(&id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&k, &v)| (k, v)))
    }

    fn check(&self, id: usize) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownNode(id))
        }
    }

    /// Trust that `i` places in `j`.
    pub fn effective_trust(&self, i: usize, j: usize, selection: PathSelection) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Ok(1.0);
        }
        Ok(match selection {
            PathSelection::HopCount => match self.direct(i, j) {
                Some(t) => t,
                None => self.hop_path(i, j).map_or(0.0, |path| self.path_product(&path)),
            },
            // A direct edge is just the one-hop candidate here.
            PathSelection::MaxProduct => self.max_product(i, j),
        })
    }

    /// Product of the edge trusts along `path` (a node sequence).
    pub fn path_product(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.direct(w[0], w[1]).unwrap_or(0.0))
            .product()
    }

    /// Lexicographically smallest among the fewest-hop paths from `i` to `j`.
    pub fn hop_path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        // Hop distance to `j` over reversed edges, then walk forward choosing
        // the smallest successor that stays on a shortest path.
        let mut reverse: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in self.edges() {
            reverse.entry(e.to).or_default().push(e.from);
        }
        let mut dist: BTreeMap<usize, usize> = BTreeMap::new();
        dist.insert(j, 0);
        let mut queue = VecDeque::from([j]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &p in reverse.get(&u).into_iter().flatten() {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(p) {
                    e.insert(du + 1);
                    queue.push_back(p);
                }
            }
        }
        let mut remaining = *dist.get(&i)?;
        let mut path = vec![i];
        let mut at = i;
        while remaining > 0 {
            at = self
                .successors(at)
                .map(|(k, _)| k)
                .find(|k| dist.get(k) == Some(&(remaining - 1)))?;
            path.push(at);
            remaining -= 1;
        }
        Some(path)
    }

    fn max_product(&self, i: usize, j: usize) -> f64 {
        // Dijkstra on best-known products; edge values <= 1 keep it monotone.
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        let mut done: BTreeSet<usize> = BTreeSet::new();
        best.insert(i, 1.0);
        loop {
            let next = best
                .iter()
                .filter(|(k, _)| !done.contains(k))
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&k, &v)| (k, v));
            let Some((u, value)) = next else { break };
            if u == j {
                return value;
            }
            done.insert(u);
            for (k, t) in self.successors(u) {
                let cand = value * t;
                if !done.contains(&k) && best.get(&k).is_none_or(|&b| cand > b) {
                    best.insert(k, cand);
                }
            }
        }
        0.0
    }

    /// Effective trusts among `ids`, with a unit diagonal.
    pub fn trust_matrix(&self, ids: &[usize], selection: PathSelection) -> Result<TrustMatrix> {
        let n = ids.len();
        let mut values = vec![0.0; n * n];
        for (a, &i) in ids.iter().enumerate() {
            for (b, &j) in ids.iter().enumerate() {
                values[a * n + b] = self.effective_trust(i, j, selection)?;
            }
        }
        Ok(TrustMatrix {
            ids: ids.to_vec(),
            values,
        })
    }

    /// Random network: each ordered pair `(i, j)` accepted by `eligible` gets
    /// an edge with probability `edge_probability` and a value uniform in
    /// `[min_trust, max_trust]`. Pairs are visited in ascending `(i, j)`
    /// order and every visited pair consumes exactly two draws.
    pub fn random<R: Rng>(
        ids: impl IntoIterator<Item = usize>,
        eligible: impl Fn(usize, usize) -> bool,
        config: &TrustGenConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut net = Self::with_nodes(ids);
        let nodes: Vec<usize> = net.nodes().collect();
        for &i in &nodes {
            for &j in &nodes {
                if i == j || !eligible(i, j) {
                    continue;
                }
                let keep = rng.random::<f64>() < config.edge_probability;
                let u = rng.random::<f64>();
                if keep {
                    let t = config.min_trust + u * (config.max_trust - config.min_trust);
                    net.add_edge(i, j, t)?;
                }
            }
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        crate::config::parse_json(text)
    }
}

/// Dense matrix of effective trusts over a list of ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustMatrix {
    ids: Vec<usize>,
    values: Vec<f64>,
}

impl TrustMatrix {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Entry by position in `ids`.
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.ids.len() + b]
    }

    /// Entry by node id.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let a = self.ids.iter().position(|&x| x == i)?;
        let b = self.ids.iter().position(|&x| x == j)?;
        Some(self.at(a, b))
    }
}

/// Parameters of the random trust generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustGenConfig {
    pub edge_probability: f64,
    pub min_trust: f64,
    pub max_trust: f64,
}

impl TrustGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(Error::InvalidConfig(
                "trust.edge_probability must lie in [0, 1]".into(),
            ));
        }
        if !(0.0 <= self.min_trust && self.min_trust <= self.max_trust && self.max_trust <= 1.0) {
            return Err(Error::InvalidConfig(
                "trust: need 0 <= min_trust <= max_trust <= 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn net(n: usize, edges: &[(usize, usize, f64)]) -> TrustNetwork {
        let mut t = TrustNetwork::with_nodes(0..n);
        for &(a, b, v) in edges {
            t.add_edge(a, b, v).unwrap();
        }
        t
    }

    #[test]
    fn direct_edge_short_circuits() {
        let t = net(3, &[(0, 1, 0.7), (0, 2, 1.0), (2, 1, 1.0)]);
        assert_eq!(t.effective_trust(0, 1, PathSelection::HopCount).unwrap(), 0.7);
        // Max-product looks past the direct edge.
        assert_eq!(t.effective_trust(0, 1, PathSelection::MaxProduct).unwrap(), 1.0);
        let lone = net(2, &[(0, 1, 0.7)]);
        assert_eq!(
            lone.effective_trust(0, 1, PathSelection::MaxProduct).unwrap(),
            0.7
        );
    }

    #[test]
    fn two_hop_product() {
        let t = net(3, &[(0, 2, 0.8), (2, 1, 0.9)]);
        assert_relative_eq!(t.effective_trust(0, 1, PathSelection::HopCount).unwrap(), 0.72);
        assert_eq!(t.effective_trust(1, 0, PathSelection::HopCount).unwrap(), 0.0);
    }

    #[test]
    fn unknown_node_and_bad_edges() {
        let mut t = net(2, &[]);
        assert!(matches!(
            t.effective_trust(0, 9, PathSelection::HopCount),
            Err(Error::UnknownNode(9))
        ));
        assert!(t.add_edge(0, 0, 0.5).is_err());
        assert!(t.add_edge(0, 1, 1.5).is_err());
    }

    #[test]
    fn hop_count_prefers_fewer_hops_then_smaller_ids() {
        // 0->3 via 2 (two hops, 0.1*0.1) beats 0->1->4->3 (three hops, all 1.0).
        let t = net(
            5,
            &[
                (0, 2, 0.1),
                (2, 3, 0.1),
                (0, 1, 1.0),
                (1, 4, 1.0),
                (4, 3, 1.0),
                (0, 4, 0.5),
                (4, 3, 1.0),
            ],
        );
        // Shortest hop paths 0->2->3 and 0->4->3; lexicographic picks 0->2->3.
        assert_eq!(t.hop_path(0, 3).unwrap(), vec![0, 2, 3]);
        assert_relative_eq!(t.effective_trust(0, 3, PathSelection::HopCount).unwrap(), 0.01);
        assert_relative_eq!(t.effective_trust(0, 3, PathSelection::MaxProduct).unwrap(), 1.0);
    }

    #[test]
    fn matrix_extremes() {
        let ids = [0, 1, 2];
        let empty = net(3, &[]).trust_matrix(&ids, PathSelection::HopCount).unwrap();
        let mut full = net(3, &[]);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    full.add_edge(i, j, 1.0).unwrap();
                }
            }
        }
        let full = full.trust_matrix(&ids, PathSelection::HopCount).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(empty.at(a, b), if a == b { 1.0 } else { 0.0 });
                assert_eq!(full.at(a, b), 1.0);
            }
        }
    }

    #[test]
    fn social_network_example_path() {
        // SBS 5 reaches SBS 13 only through SBS 10.
        let mut t = TrustNetwork::with_nodes(1..=13);
        t.add_edge(5, 10, 0.9).unwrap();
        t.add_edge(10, 13, 0.8).unwrap();
        t.add_edge(5, 4, 0.6).unwrap();
        t.add_edge(3, 10, 0.7).unwrap();
        let ids: Vec<usize> = (1..=13).collect();
        let m = t.trust_matrix(&ids, PathSelection::HopCount).unwrap();
        assert_eq!(t.hop_path(5, 13).unwrap(), vec![5, 10, 13]);
        assert_relative_eq!(m.get(5, 13).unwrap(), 0.9 * 0.8);
        assert_eq!(m.get(13, 5).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip_and_node_inference() {
        let text = r#"{ "edges": [{ "from": 1, "to": 2, "trust": 0.5 }] }"#;
        let t = TrustNetwork::from_json(text).unwrap();
        assert!(t.contains(1) && t.contains(2) && !t.contains(0));
        let again = TrustNetwork::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(t, again);
        assert!(TrustNetwork::from_json(r#"{ "edges": [{ "from": 1, "to": 2, "trust": 2.0 }] }"#).is_err());
    }

    fn arb_net() -> impl Strategy<Value = (TrustNetwork, usize, usize)> {
        (3usize..7)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec((0..n, 0..n, 0.0f64..=1.0), 0..20),
                    0..n,
                    0..n,
                )
            })
            .prop_map(|(n, edges, i, j)| {
                let mut t = TrustNetwork::with_nodes(0..n);
                for (a, b, v) in edges {
                    if a != b {
                        t.add_edge(a, b, v).unwrap();
                    }
                }
                (t, i, j)
            })
    }

    proptest! {
        #[test]
        fn trust_in_unit_interval_and_below_path_min((t, i, j) in arb_net()) {
            for sel in [PathSelection::HopCount, PathSelection::MaxProduct] {
                let v = t.effective_trust(i, j, sel).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if i != j && t.direct(i, j).is_none() {
                if let Some(path) = t.hop_path(i, j) {
                    let v = t.effective_trust(i, j, PathSelection::HopCount).unwrap();
                    let min_edge = path.windows(2).map(|w| t.direct(w[0], w[1]).unwrap()).fold(1.0, f64::min);
                    prop_assert!(v <= min_edge + 1e-15);
                }
            }
        }

        #[test]
        fn adding_an_edge_never_lowers_max_product((t, i, j) in arb_net(), a in 0usize..3, b in 0usize..3, v in 0.0f64..=1.0) {
            prop_assume!(a != b && t.direct(a, b).is_none());
            let before = t.effective_trust(i, j, PathSelection::MaxProduct).unwrap();
            let mut t2 = t.clone();
            t2.add_edge(a, b, v).unwrap();
            let after = t2.effective_trust(i, j, PathSelection::MaxProduct).unwrap();
            prop_assert!(after >= before - 1e-15);
        }
    }
}
