//! Buyer-seller workload matching inside one coalition.
//!
//! Buyers act one after another. Each repeatedly picks the cheapest available
//! seller and moves as much work as it can: first by re-associating MUEs that
//! both SBSs cover, then by peer offloading over the SBS link. Whatever no
//! seller absorbs goes to the cloud. A coalition's value is the best total
//! utility over buyer orderings.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::cost::{evaluate, Allocation, CostReport, PeerFlow, Reassociation};
use crate::error::Result;
use crate::game::Game;

/// Rates below this are treated as exhausted.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Buyer,
    Seller,
}

pub fn role(game: &Game, i: usize) -> Role {
    if game.surplus(i) >= 0.0 {
        Role::Seller
    } else {
        Role::Buyer
    }
}

/// Remaining tradable quantities while a coalition's buyers acquire capacity.
#[derive(Debug, Clone)]
pub struct MarketState {
    members: Vec<usize>,
    /// Unmet deficit per buyer; zero for sellers and non-members.
    deficit: Vec<f64>,
    /// Unsold surplus per seller.
    surplus: Vec<f64>,
    /// Normal traffic a buyer may still hand to peers.
    normal_left: Vec<f64>,
    /// Normal traffic per MUE still served by its home SBS.
    mue_left: Vec<f64>,
    reassociations: Vec<Reassociation>,
    peer_flows: Vec<PeerFlow>,
}

impl MarketState {
    pub fn new(game: &Game, members: &[usize]) -> Self {
        let n = game.num_sbs();
        let mut deficit = vec![0.0; n];
        let mut surplus = vec![0.0; n];
        let mut normal_left = vec![0.0; n];
        for &i in members {
            match role(game, i) {
                Role::Buyer => {
                    deficit[i] = -game.surplus(i);
                    normal_left[i] = game.normal_volume(i);
                }
                Role::Seller => surplus[i] = game.surplus(i),
            }
        }
        let mue_left = game.scenario().mues.iter().map(|m| m.normal_rate()).collect();
        let mut members = members.to_vec();
        members.sort_unstable();
        Self {
            members,
            deficit,
            surplus,
            normal_left,
            mue_left,
            reassociations: Vec::new(),
            peer_flows: Vec::new(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn buyers<'a>(&'a self, game: &'a Game) -> impl Iterator<Item = usize> + 'a {
        self.members
            .iter()
            .copied()
            .filter(move |&i| role(game, i) == Role::Buyer)
    }

    pub fn sellers<'a>(&'a self, game: &'a Game) -> impl Iterator<Item = usize> + 'a {
        self.members
            .iter()
            .copied()
            .filter(move |&i| role(game, i) == Role::Seller)
    }

    pub fn remaining_deficit(&self, b: usize) -> f64 {
        self.deficit[b]
    }

    pub fn remaining_surplus(&self, s: usize) -> f64 {
        self.surplus[s]
    }

    pub fn remaining_normal(&self, b: usize) -> f64 {
        self.normal_left[b]
    }

    pub fn mue_remaining(&self, m: usize) -> f64 {
        self.mue_left[m]
    }

    /// The buyer side of a pair offer: unmet deficit, capped by the
    /// normal traffic that may leave the buyer (private tasks stay home or go
    /// to the cloud).
    pub fn buyer_tradable(&self, b: usize) -> f64 {
        self.deficit[b].min(self.normal_left[b])
    }

    /// MUEs of `b` covered by both `b` and `s` with normal traffic left, in
    /// Stage 1 order: descending remaining rate, then ascending id.
    pub fn co_covered(&self, game: &Game, b: usize, s: usize) -> Vec<(usize, f64)> {
        if !game.settings().mue_association {
            return Vec::new();
        }
        let mut out: Vec<(usize, f64)> = game
            .authorized(b)
            .iter()
            .copied()
            .filter(|&m| self.mue_left[m] > EPS && game.covers(b, m) && game.covers(s, m))
            .map(|m| (m, self.mue_left[m]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Whether `s` can still take any of `b`'s work.
    pub fn available(&self, game: &Game, b: usize, s: usize) -> bool {
        self.surplus[s] > EPS
            && self.buyer_tradable(b) > EPS
            && (game.peer_feasible(b, s) || !self.co_covered(game, b, s).is_empty())
    }

    pub fn apply(&mut self, offer: &PairOffload) {
        let moved = offer.transferred();
        for &(m, rate) in &offer.reassociated {
            self.mue_left[m] = (self.mue_left[m] - rate).max(0.0);
            self.reassociations.push(Reassociation {
                buyer: offer.buyer,
                seller: offer.seller,
                mue: m,
                rate,
            });
        }
        if offer.peer > 0.0 {
            self.peer_flows.push(PeerFlow {
                from: offer.buyer,
                to: offer.seller,
                rate: offer.peer,
            });
        }
        self.deficit[offer.buyer] = (self.deficit[offer.buyer] - moved).max(0.0);
        self.normal_left[offer.buyer] = (self.normal_left[offer.buyer] - moved).max(0.0);
        self.surplus[offer.seller] = (self.surplus[offer.seller] - moved).max(0.0);
    }

    /// Closes the market: unmet deficits go to the cloud.
    pub fn into_allocation(self, game: &Game) -> Allocation {
        let mut alloc = Allocation {
            members: self.members.clone(),
            reassociations: self.reassociations,
            peer_flows: self.peer_flows,
            ..Allocation::default()
        };
        for &i in &self.members {
            let arrival = game.arrival(i);
            match role(game, i) {
                Role::Buyer => {
                    let out: f64 = alloc
                        .reassociations
                        .iter()
                        .filter(|r| r.buyer == i)
                        .map(|r| r.rate)
                        .chain(alloc.peer_flows.iter().filter(|f| f.from == i).map(|f| f.rate))
                        .sum();
                    let cloud = (-game.surplus(i) - out).max(0.0);
                    alloc.cloud_flows.insert(i, cloud);
                    alloc.local_workloads.insert(i, arrival - out - cloud);
                }
                Role::Seller => {
                    let inn: f64 = alloc
                        .reassociations
                        .iter()
                        .filter(|r| r.seller == i)
                        .map(|r| r.rate)
                        .chain(alloc.peer_flows.iter().filter(|f| f.to == i).map(|f| f.rate))
                        .sum();
                    alloc.local_workloads.insert(i, arrival + inn);
                }
            }
        }
        alloc
    }
}

/// One application of the two-stage peer offloading scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOffload {
    pub buyer: usize,
    pub seller: usize,
    /// `min(buyer tradable, seller surplus)` at the time of the offer.
    pub tradable: f64,
    /// `(MUE, rate)` re-associated from buyer to seller.
    pub reassociated: Vec<(usize, f64)>,
    /// Peer-offloaded rate `beta_bs`.
    pub peer: f64,
    /// Neither a usable SBS link nor co-covered traffic: nothing moves.
    pub no_channel: bool,
}

impl PairOffload {
    pub fn reassociated_total(&self) -> f64 {
        self.reassociated.iter().map(|r| r.1).sum()
    }

    pub fn transferred(&self) -> f64 {
        self.reassociated_total() + self.peer
    }
}

/// Two-stage offer from seller `s` to buyer `b`. Stage 1 drains co-covered
/// MUEs (splitting the last one) and Stage 2 sends the residual over the SBS
/// link. Without a feasible link the residual stays with the buyer.
pub fn pair_offload(game: &Game, state: &MarketState, b: usize, s: usize) -> PairOffload {
    let alpha = state.buyer_tradable(b).min(state.remaining_surplus(s)).max(0.0);
    let mut reassociated = Vec::new();
    let mut need = alpha;
    if alpha > EPS {
        for (m, rate) in state.co_covered(game, b, s) {
            if need <= EPS {
                break;
            }
            let take = rate.min(need);
            reassociated.push((m, take));
            need -= take;
        }
    }
    let link = game.peer_feasible(b, s);
    let peer = if link && need > EPS { need } else { 0.0 };
    let no_channel = reassociated.is_empty() && !link;
    PairOffload {
        buyer: b,
        seller: s,
        tradable: alpha,
        reassociated,
        peer,
        no_channel,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSeller {
    pub seller: usize,
    /// Cost per transferred task; infinite when nothing can move.
    pub marginal_cost: f64,
    pub feasible: bool,
}

/// Money cost of `offer` per task moved: association cost change, peer
/// transmission and the seller's extra computing (all times `w_c`), plus the
/// buyer's risk.
pub fn marginal_cost(game: &Game, state: &MarketState, offer: &PairOffload) -> f64 {
    let moved = offer.transferred();
    if moved <= EPS {
        return f64::INFINITY;
    }
    let (b, s) = (offer.buyer, offer.seller);
    let w = &game.scenario().weights;
    let association: f64 = offer
        .reassociated
        .iter()
        .map(|&(m, x)| x * (game.mue_task_cost(m, s) - game.mue_task_cost(m, b)))
        .sum();
    let peer = offer.peer * game.sbs_task_cost(b, s);
    let load = game.arrival(s) + (game.surplus(s) - state.remaining_surplus(s));
    let compute = match (game.compute_cost(s, load + moved), game.compute_cost(s, load)) {
        (Ok(after), Ok(before)) => after - before,
        _ => return f64::INFINITY,
    };
    let risk = w.w_r * moved * (1.0 - game.trust(b, s));
    (w.w_c * (association + peer + compute) + risk) / moved
}

/// Sellers ordered by marginal cost for buyer `b`; infeasible sellers last,
/// ties to the smaller id.
pub fn seller_rank(game: &Game, state: &MarketState, b: usize) -> Vec<RankedSeller> {
    let mut ranked: Vec<RankedSeller> = state
        .sellers(game)
        .filter(|&s| state.remaining_surplus(s) > EPS)
        .map(|s| {
            let feasible = state.available(game, b, s);
            let marginal_cost = if feasible {
                marginal_cost(game, state, &pair_offload(game, state, b, s))
            } else {
                f64::INFINITY
            };
            RankedSeller {
                seller: s,
                marginal_cost,
                feasible: feasible && marginal_cost.is_finite(),
            }
        })
        .collect();
    ranked.sort_by(|x, y| {
        y.feasible
            .cmp(&x.feasible)
            .then(x.marginal_cost.total_cmp(&y.marginal_cost))
            .then(x.seller.cmp(&y.seller))
    });
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingOutcome {
    pub ordering: Vec<usize>,
    pub allocation: Allocation,
    pub report: CostReport,
}

impl OrderingOutcome {
    pub fn utility(&self) -> f64 {
        self.report.total_utility()
    }
}

/// Runs the sequential acquisition process with buyers acting in `ordering`.
pub fn run_ordering(game: &Game, members: &[usize], ordering: &[usize]) -> Result<OrderingOutcome> {
    let mut state = MarketState::new(game, members);
    for &b in ordering {
        loop {
            if state.buyer_tradable(b) <= EPS {
                break;
            }
            let Some(best) = seller_rank(game, &state, b).into_iter().find(|r| r.feasible) else {
                break;
            };
            let offer = pair_offload(game, &state, b, best.seller);
            if offer.transferred() <= EPS {
                break;
            }
            state.apply(&offer);
        }
    }
    let allocation = state.into_allocation(game);
    let report = evaluate(game, &allocation)?;
    Ok(OrderingOutcome {
        ordering: ordering.to_vec(),
        allocation,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionValue {
    pub members: Vec<usize>,
    pub value: f64,
    pub ordering: Vec<usize>,
    pub allocation: Allocation,
    pub report: CostReport,
    /// The ordering came from the descending-deficit rule rather than a full search.
    pub heuristic: bool,
}

/// Buyers by descending deficit, ties to the smaller id.
pub fn heuristic_ordering(game: &Game, members: &[usize]) -> Vec<usize> {
    let mut buyers: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| role(game, i) == Role::Buyer)
        .collect();
    buyers.sort_by(|&a, &b| game.surplus(a).total_cmp(&game.surplus(b)).then(a.cmp(&b)));
    buyers
}

/// `v(S)`: the best total utility over buyer orderings. Orderings are tried
/// in lexicographic order and the first strict maximum is kept.
pub fn coalition_value(game: &Game, members: &[usize]) -> Result<CoalitionValue> {
    let mut members = members.to_vec();
    members.sort_unstable();
    let buyers: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| role(game, i) == Role::Buyer)
        .collect();
    let heuristic = buyers.len() > game.settings().exhaustive_threshold;
    let best = if heuristic {
        run_ordering(game, &members, &heuristic_ordering(game, &members))?
    } else {
        let mut best: Option<OrderingOutcome> = None;
        for ordering in buyers.iter().copied().permutations(buyers.len()) {
            let outcome = run_ordering(game, &members, &ordering)?;
            if best.as_ref().is_none_or(|b| outcome.utility() > b.utility()) {
                best = Some(outcome);
            }
        }
        best.expect("at least the empty ordering")
    };
    Ok(CoalitionValue {
        value: best.utility(),
        members,
        ordering: best.ordering,
        allocation: best.allocation,
        report: best.report,
        heuristic,
    })
}
