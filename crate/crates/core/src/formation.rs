//! Merge-and-split coalition formation and stability checks.
//!
//! Starting from singletons, the engine repeatedly merges two coalitions when
//! the union makes no member worse off and some member better off
//! (post-payment utilities `phi`), and splits a coalition when one of its
//! sub-partitions does the same. Every applied step strictly improves the
//! partition in the Pareto order, so the loop terminates.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{Allocation, CostReport};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::matching::{coalition_value, CoalitionValue};
use crate::partitions::{two_way_splits, Partition, SetPartitions};
use crate::payments::{divide_payoff, divide_payoff_unchecked, DivisionConfig, PaymentLedger};

/// Largest network certified in collective-deviation mode by default.
pub const C_MODE_CAP: usize = 8;

/// Memoizes coalition values and payment ledgers for one game. Safe to share
/// across threads; values are computed outside the lock.
pub struct Evaluator<'g> {
    game: &'g Game,
    standalone: BTreeMap<usize, f64>,
    values: Mutex<HashMap<Vec<usize>, Arc<CoalitionValue>>>,
    ledgers: Mutex<HashMap<Vec<usize>, Arc<PaymentLedger>>>,
}

impl<'g> Evaluator<'g> {
    pub fn new(game: &'g Game) -> Result<Self> {
        let eval = Self {
            game,
            standalone: BTreeMap::new(),
            values: Mutex::new(HashMap::new()),
            ledgers: Mutex::new(HashMap::new()),
        };
        let standalone = (0..game.num_sbs())
            .into_par_iter()
            .map(|i| eval.value(&[i]).map(|v| (i, v.value)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { standalone, ..eval })
    }

    pub fn game(&self) -> &'g Game {
        self.game
    }

    pub fn division(&self) -> DivisionConfig {
        let s = self.game.settings();
        DivisionConfig {
            epsilon: s.epsilon,
            basis: s.share_basis,
            tolerance: s.tolerance,
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.game.settings().tolerance
    }

    fn key(members: &[usize]) -> Vec<usize> {
        let mut k = members.to_vec();
        k.sort_unstable();
        k
    }

    pub fn value(&self, members: &[usize]) -> Result<Arc<CoalitionValue>> {
        let key = Self::key(members);
        if let Some(v) = self.values.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(coalition_value(self.game, &key)?);
        Ok(self.values.lock().unwrap().entry(key).or_insert(v).clone())
    }

    /// Evaluates many coalitions in parallel, warming the cache.
    pub fn prefetch(&self, coalitions: &[Vec<usize>]) -> Result<()> {
        coalitions.par_iter().try_for_each(|c| self.value(c).map(|_| ()))
    }

    pub fn standalone(&self, i: usize) -> f64 {
        self.standalone[&i]
    }

    pub fn standalone_values(&self) -> &BTreeMap<usize, f64> {
        &self.standalone
    }

    pub fn surplus(&self, members: &[usize]) -> Result<f64> {
        Ok(self.value(members)?.value - members.iter().map(|&i| self.standalone(i)).sum::<f64>())
    }

    fn negligible(&self, x: f64, scale: f64) -> bool {
        x.abs() <= self.tolerance() * scale.abs().max(1.0)
    }

    /// Payment ledger of one coalition. A negative surplus (possible only for
    /// coalitions the engine never forms) is shared out as a loss.
    pub fn ledger(&self, members: &[usize]) -> Result<Arc<PaymentLedger>> {
        let key = Self::key(members);
        if let Some(l) = self.ledgers.lock().unwrap().get(&key) {
            return Ok(l.clone());
        }
        let v = self.value(&key)?;
        let realized: BTreeMap<usize, f64> = v.report.rows.iter().map(|r| (r.sbs, r.utility)).collect();
        let base: f64 = key.iter().map(|&i| self.standalone(i)).sum();
        let surplus = v.value - base;
        let ledger = if surplus >= 0.0 || self.negligible(surplus, base) {
            divide_payoff(&key, v.value, &self.standalone, &realized, &self.division())?
        } else {
            divide_payoff_unchecked(&key, v.value, &self.standalone, &realized, &self.division())?
        };
        let l = Arc::new(ledger);
        Ok(self.ledgers.lock().unwrap().entry(key).or_insert(l).clone())
    }

    /// `phi_i` for every SBS covered by `coalitions`.
    pub fn phi(&self, coalitions: &[Vec<usize>]) -> Result<BTreeMap<usize, f64>> {
        let mut out = BTreeMap::new();
        for c in coalitions {
            for e in &self.ledger(c)?.entries {
                out.insert(e.sbs, e.phi);
            }
        }
        Ok(out)
    }

    pub fn total_value(&self, coalitions: &[Vec<usize>]) -> Result<f64> {
        coalitions.iter().map(|c| self.value(c).map(|v| v.value)).sum()
    }

    pub fn cached_values(&self) -> usize {
        self.values.lock().unwrap().len()
    }
}

/// `a` Pareto-dominates `b`: nobody loses more than `tol`, someone gains more than `tol`.
pub fn dominates(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>, tol: f64) -> Result<bool> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::MismatchedSets);
    }
    let mut strict = false;
    for (x, y) in a.values().zip(b.values()) {
        if *x < *y - tol {
            return Ok(false);
        }
        if *x > *y + tol {
            strict = true;
        }
    }
    Ok(strict)
}

/// Pareto dominance between two collections of coalitions over the same SBSs.
pub fn pareto_dominates(eval: &Evaluator, a: &[Vec<usize>], b: &[Vec<usize>]) -> Result<bool> {
    dominates(&eval.phi(a)?, &eval.phi(b)?, eval.tolerance())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Merge,
    Split,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Merge => "merge",
            Op::Split => "split",
        }
    }
}

/// An applied merge or split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub op: Op,
    pub before: Vec<Vec<usize>>,
    pub after: Vec<Vec<usize>>,
    pub partition: Partition,
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = a.iter().chain(b).copied().collect();
    m.sort_unstable();
    m
}

fn coalitions_reachable(game: &Game, a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|&i| b.iter().any(|&j| game.reachable(i, j)))
}

/// Whether merging `a` and `b` is an admissible, dominant move.
pub fn merge_applies(eval: &Evaluator, a: &[usize], b: &[usize]) -> Result<bool> {
    let merged = union(a, b);
    let parts = eval.value(a)?.value + eval.value(b)?.value;
    let v = eval.value(&merged)?.value;
    if v < parts && !eval.negligible(v - parts, parts) {
        return Ok(false);
    }
    pareto_dominates(eval, &[merged], &[a.to_vec(), b.to_vec()])
}

/// Whether replacing `coalition` by `blocks` is an admissible, dominant move.
/// Blocks worth less than their members alone are never formed.
pub fn split_applies(eval: &Evaluator, coalition: &[usize], blocks: &[Vec<usize>]) -> Result<bool> {
    for b in blocks {
        let s = eval.surplus(b)?;
        if s < 0.0 && !eval.negligible(s, eval.value(b)?.value) {
            return Ok(false);
        }
    }
    pareto_dominates(eval, blocks, &[coalition.to_vec()])
}

/// First dominant pairwise merge among physically reachable coalitions, or
/// `None`. Pairs are scanned by (smaller, larger) minimum member.
pub fn try_merge(eval: &Evaluator, partition: &Partition) -> Result<Option<Step>> {
    let cs = partition.coalitions();
    let game = eval.game();
    let pairs: Vec<(usize, usize)> = (0..cs.len())
        .flat_map(|a| (a + 1..cs.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| coalitions_reachable(game, &cs[a], &cs[b]))
        .collect();
    let unions: Vec<Vec<usize>> = pairs.iter().map(|&(a, b)| union(&cs[a], &cs[b])).collect();
    eval.prefetch(&unions)?;
    for (&(a, b), merged) in pairs.iter().zip(unions) {
        if merge_applies(eval, &cs[a], &cs[b])? {
            return Ok(Some(Step {
                op: Op::Merge,
                before: vec![cs[a].clone(), cs[b].clone()],
                after: vec![merged.clone()],
                partition: partition.replace(&[a, b], vec![merged]),
            }));
        }
    }
    Ok(None)
}

/// Candidate sub-partitions of `coalition` (excluding itself). Returns
/// whether the enumeration was capped to two-way splits.
pub fn split_candidates(coalition: &[usize], cap: usize) -> (Vec<Vec<Vec<usize>>>, bool) {
    if coalition.len() < 2 {
        return (Vec::new(), false);
    }
    if coalition.len() <= cap {
        (SetPartitions::new(coalition).skip(1).collect(), false)
    } else {
        (two_way_splits(coalition).map(|[a, b]| vec![a, b]).collect(), true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub step: Option<Step>,
    /// Some coalition was too large for a full sub-partition search.
    pub capped: bool,
}

/// First dominant split, checking coalitions by ascending size (then
/// smallest member) and their sub-partitions in restricted-growth order.
pub fn try_split(eval: &Evaluator, partition: &Partition) -> Result<SplitOutcome> {
    let cs = partition.coalitions();
    let mut order: Vec<usize> = (0..cs.len()).collect();
    order.sort_by_key(|&k| (cs[k].len(), cs[k][0]));
    let cap = eval.game().settings().split_cap;
    let mut capped = false;
    for k in order {
        let (candidates, was_capped) = split_candidates(&cs[k], cap);
        capped |= was_capped;
        let blocks: Vec<Vec<usize>> = candidates.iter().flatten().cloned().collect();
        eval.prefetch(&blocks)?;
        for cand in candidates {
            if split_applies(eval, &cs[k], &cand)? {
                return Ok(SplitOutcome {
                    step: Some(Step {
                        op: Op::Split,
                        before: vec![cs[k].clone()],
                        after: cand.clone(),
                        partition: partition.replace(&[k], cand),
                    }),
                    capped,
                });
            }
        }
    }
    Ok(SplitOutcome { step: None, capped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub op: Op,
    pub before: Vec<Vec<usize>>,
    pub after: Vec<Vec<usize>>,
    pub system_utility: f64,
    /// `phi` of every SBS after the step, indexed by id.
    pub phi: Vec<f64>,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub partition: Partition,
    pub trace: Vec<TraceStep>,
    pub initial_utility: f64,
    pub initial_phi: Vec<f64>,
    pub values: Vec<CoalitionValue>,
    pub ledgers: Vec<PaymentLedger>,
    pub allocation: Allocation,
    pub report: CostReport,
    pub split_capped: bool,
    /// Some coalition's value used the heuristic buyer ordering.
    pub heuristic: bool,
}

impl Formation {
    pub fn system_utility(&self) -> f64 {
        self.values.iter().map(|v| v.value).sum()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.trace
            .last()
            .map_or_else(|| self.initial_phi.clone(), |t| t.phi.clone())
    }
}

fn phi_vec(eval: &Evaluator, partition: &Partition) -> Result<Vec<f64>> {
    Ok(eval.phi(partition.coalitions())?.into_values().collect())
}

/// Runs merge-and-split from the all-singleton partition until neither
/// operation applies.
pub fn form_coalitions(eval: &Evaluator) -> Result<Formation> {
    let game = eval.game();
    let n = game.num_sbs();
    let cap = game.settings().iteration_cap_factor * n * n;
    let mut partition = Partition::singletons(0..n);
    let initial_phi = phi_vec(eval, &partition)?;
    let initial_utility = eval.total_value(partition.coalitions())?;
    let mut trace = Vec::new();
    let mut split_capped = false;
    loop {
        let step = match try_merge(eval, &partition)? {
            Some(step) => Some(step),
            None => {
                let out = try_split(eval, &partition)?;
                split_capped |= out.capped;
                out.step
            }
        };
        let Some(step) = step else { break };
        if trace.len() >= cap {
            return Err(Error::NonConvergence(cap));
        }
        partition = step.partition.clone();
        trace.push(TraceStep {
            iteration: trace.len() + 1,
            op: step.op,
            before: step.before,
            after: step.after,
            system_utility: eval.total_value(partition.coalitions())?,
            phi: phi_vec(eval, &partition)?,
            partition: partition.clone(),
        });
    }
    finish(eval, partition, trace, initial_utility, initial_phi, split_capped)
}

fn finish(
    eval: &Evaluator,
    partition: Partition,
    trace: Vec<TraceStep>,
    initial_utility: f64,
    initial_phi: Vec<f64>,
    split_capped: bool,
) -> Result<Formation> {
    let values: Vec<CoalitionValue> = partition
        .coalitions()
        .iter()
        .map(|c| eval.value(c).map(|v| (*v).clone()))
        .collect::<Result<_>>()?;
    let ledgers: Vec<PaymentLedger> = partition
        .coalitions()
        .iter()
        .map(|c| eval.ledger(c).map(|l| (*l).clone()))
        .collect::<Result<_>>()?;
    let allocation = Allocation::merge(values.iter().map(|v| &v.allocation));
    let report = CostReport::merge(values.iter().map(|v| &v.report));
    Ok(Formation {
        heuristic: values.iter().any(|v| v.heuristic),
        partition,
        trace,
        initial_utility,
        initial_phi,
        values,
        ledgers,
        allocation,
        report,
        split_capped,
    })
}

/// Evaluates a given partition as if it had been formed (no trace).
pub fn evaluate_partition(eval: &Evaluator, partition: &Partition) -> Result<Formation> {
    let phi = phi_vec(eval, partition)?;
    let utility = eval.total_value(partition.coalitions())?;
    finish(eval, partition.clone(), Vec::new(), utility, phi, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    /// Immune to merge and split deviations.
    Hp,
    /// Immune to arbitrary collective deviations: Pareto-maximal among all partitions.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    /// No partition is Pareto-maximal, so nothing can be stable in this sense.
    NoneExists,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub mode: StabilityMode,
    pub verdict: Verdict,
    pub detail: String,
    /// Pareto-maximal partitions found (collective mode only).
    pub maximal: Vec<Partition>,
    /// Deviations or partitions examined.
    pub checked: usize,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Stable
    }
}

/// Checks `partition` for stability. Collective mode enumerates every
/// partition of the network and fails beyond `c_cap` SBSs.
pub fn certify_stability(
    eval: &Evaluator,
    partition: &Partition,
    mode: StabilityMode,
    c_cap: usize,
) -> Result<Certificate> {
    match mode {
        StabilityMode::Hp => certify_hp(eval, partition),
        StabilityMode::C => certify_c(eval, partition, c_cap),
    }
}

fn certify_hp(eval: &Evaluator, partition: &Partition) -> Result<Certificate> {
    let cs = partition.coalitions();
    let mut checked = 0;
    for a in 0..cs.len() {
        for b in a + 1..cs.len() {
            checked += 1;
            if merge_applies(eval, &cs[a], &cs[b])? {
                return Ok(Certificate {
                    mode: StabilityMode::Hp,
                    verdict: Verdict::Unstable,
                    detail: format!("merging {:?} and {:?} dominates", cs[a], cs[b]),
                    maximal: Vec::new(),
                    checked,
                });
            }
        }
    }
    let cap = eval.game().settings().split_cap;
    let mut capped = false;
    for c in cs {
        let (candidates, was_capped) = split_candidates(c, cap);
        capped |= was_capped;
        for cand in candidates {
            checked += 1;
            if split_applies(eval, c, &cand)? {
                return Ok(Certificate {
                    mode: StabilityMode::Hp,
                    verdict: Verdict::Unstable,
                    detail: format!("splitting {c:?} into {cand:?} dominates"),
                    maximal: Vec::new(),
                    checked,
                });
            }
        }
    }
    Ok(Certificate {
        mode: StabilityMode::Hp,
        verdict: Verdict::Stable,
        detail: if capped {
            "no dominant merge or split (large coalitions checked for two-way splits only)".into()
        } else {
            "no dominant merge or split".into()
        },
        maximal: Vec::new(),
        checked,
    })
}

fn certify_c(eval: &Evaluator, partition: &Partition, cap: usize) -> Result<Certificate> {
    let n = eval.game().num_sbs();
    if n > cap {
        return Err(Error::TooLarge {
            what: "collective stability check",
            n,
            cap,
        });
    }
    let ids: Vec<usize> = (0..n).collect();
    let all: Vec<Vec<Vec<usize>>> = SetPartitions::new(&ids).collect();
    // Warm every coalition once, in parallel.
    let coalitions: Vec<Vec<usize>> = (1u64..(1u64 << n))
        .map(|mask| ids.iter().copied().filter(|&i| mask >> i & 1 == 1).collect())
        .collect();
    eval.prefetch(&coalitions)?;
    let phis: Vec<Vec<f64>> = all
        .par_iter()
        .map(|p| Ok(eval.phi(p)?.into_values().collect()))
        .collect::<Result<_>>()?;
    // A partition dominates-or-equals every other exactly when it attains
    // every SBS's best phi simultaneously.
    let tol = eval.tolerance();
    let best: Vec<f64> = (0..n)
        .map(|i| phis.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let attains = |p: &[f64]| p.iter().zip(&best).all(|(x, b)| *x >= b - tol);
    let maximal: Vec<Partition> = all
        .iter()
        .zip(&phis)
        .filter(|(_, p)| attains(p))
        .map(|(blocks, _)| Partition::new(blocks.clone()))
        .collect::<Result<_>>()?;
    let checked = all.len();
    if maximal.is_empty() {
        return Ok(Certificate {
            mode: StabilityMode::C,
            verdict: Verdict::NoneExists,
            detail: "no collectively stable partition exists".into(),
            maximal,
            checked,
        });
    }
    let own = phi_vec(eval, partition)?;
    let (verdict, detail) = if attains(&own) {
        (
            Verdict::Stable,
            "partition is Pareto-maximal among all partitions".to_string(),
        )
    } else {
        (
            Verdict::Unstable,
            format!("partition {} is dominated by {}", partition, maximal[0]),
        )
    };
    Ok(Certificate {
        mode: StabilityMode::C,
        verdict,
        detail,
        maximal,
        checked,
    })
}
