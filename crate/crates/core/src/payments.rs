//! Proportional-fair division of a coalition's surplus and the two-phase
//! settlement run by the edge orchestrator.
//!
//! Each member gets its standalone value plus a share `psi_i` of the surplus
//! `v(S) - sum_j v({j})`. Shares are proportional to utilities shifted to be
//! positive: `v_i - min_j v_j + epsilon`. The payment `g_i = phi_i - u_i`
//! closes the gap between what a member realized and what it is owed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which utility the proportional weights are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareBasis {
    /// Standalone value `v({i})`.
    #[default]
    Standalone,
    /// Utility `u_i` realized inside the coalition.
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sbs: usize,
    pub standalone: f64,
    /// Utility realized in the coalition before payments.
    pub u: f64,
    pub psi: f64,
    /// Utility after payments.
    pub phi: f64,
    /// Payment made (positive) or reward received (negative).
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentLedger {
    pub value: f64,
    pub entries: Vec<LedgerEntry>,
}

impl PaymentLedger {
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.sbs)
    }

    pub fn entry(&self, sbs: usize) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.sbs == sbs)
    }

    pub fn phi(&self, sbs: usize) -> Option<f64> {
        self.entry(sbs).map(|e| e.phi)
    }

    pub fn surplus(&self) -> f64 {
        self.value - self.entries.iter().map(|e| e.standalone).sum::<f64>()
    }

    /// `sum g_i`, zero for a balanced ledger.
    pub fn imbalance(&self) -> f64 {
        self.entries.iter().map(|e| e.g).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisionConfig {
    pub epsilon: f64,
    pub basis: ShareBasis,
    /// Surpluses above `-tolerance * max(1, |sum v({j})|)` are treated as
    /// nonnegative rounding noise.
    pub tolerance: f64,
}

impl Default for DivisionConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            basis: ShareBasis::Standalone,
            tolerance: 1e-9,
        }
    }
}

fn lookup(map: &BTreeMap<usize, f64>, i: usize, what: &str) -> Result<f64> {
    map.get(&i)
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("no {what} utility for SBS {i}")))
}

/// Divides `value` among `members`. Fails with [`Error::NegativeSurplus`]
/// when the coalition is worth less than its members alone.
pub fn divide_payoff(
    members: &[usize],
    value: f64,
    standalone: &BTreeMap<usize, f64>,
    realized: &BTreeMap<usize, f64>,
    cfg: &DivisionConfig,
) -> Result<PaymentLedger> {
    let base: f64 = members
        .iter()
        .map(|&i| lookup(standalone, i, "standalone"))
        .sum::<Result<f64>>()?;
    let surplus = value - base;
    if surplus < -cfg.tolerance * base.abs().max(1.0) {
        return Err(Error::NegativeSurplus(surplus));
    }
    divide(members, value, surplus.max(0.0), standalone, realized, cfg)
}

/// The same rule with no surplus check; a negative surplus is shared out as
/// a loss. Used when scoring arbitrary partitions.
pub fn divide_payoff_unchecked(
    members: &[usize],
    value: f64,
    standalone: &BTreeMap<usize, f64>,
    realized: &BTreeMap<usize, f64>,
    cfg: &DivisionConfig,
) -> Result<PaymentLedger> {
    let base: f64 = members
        .iter()
        .map(|&i| lookup(standalone, i, "standalone"))
        .sum::<Result<f64>>()?;
    divide(members, value, value - base, standalone, realized, cfg)
}

fn divide(
    members: &[usize],
    value: f64,
    surplus: f64,
    standalone: &BTreeMap<usize, f64>,
    realized: &BTreeMap<usize, f64>,
    cfg: &DivisionConfig,
) -> Result<PaymentLedger> {
    if members.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot divide the payoff of an empty coalition".into(),
        ));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidConfig("epsilon must be > 0".into()));
    }
    let basis_map = match cfg.basis {
        ShareBasis::Standalone => standalone,
        ShareBasis::Realized => realized,
    };
    let basis: Vec<f64> = members
        .iter()
        .map(|&i| lookup(basis_map, i, "basis"))
        .collect::<Result<_>>()?;
    let min = basis.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = basis.iter().map(|b| b - min + cfg.epsilon).collect();
    let total: f64 = shifted.iter().sum();

    let mut entries = Vec::with_capacity(members.len());
    let mut assigned = 0.0;
    for (k, &i) in members.iter().enumerate() {
        let v_i = lookup(standalone, i, "standalone")?;
        let u = lookup(realized, i, "realized")?;
        let psi = shifted[k] / total;
        // The last member absorbs rounding so the shares sum to v(S).
        let phi = if k + 1 == members.len() {
            value - assigned
        } else {
            psi * surplus + v_i
        };
        assigned += phi;
        entries.push(LedgerEntry {
            sbs: i,
            standalone: v_i,
            u,
            psi,
            phi,
            g: phi - u,
        });
    }
    Ok(PaymentLedger { value, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub coalition: usize,
    pub sbs: usize,
    pub amount: f64,
}

/// Orchestrator record: payments collected from buyers, then rewards paid out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Settlement {
    pub collected: Vec<Transfer>,
    pub distributed: Vec<Transfer>,
}

impl Settlement {
    pub fn total_collected(&self) -> f64 {
        self.collected.iter().map(|t| t.amount).sum()
    }

    pub fn total_distributed(&self) -> f64 {
        self.distributed.iter().map(|t| t.amount).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.collected.is_empty() && self.distributed.is_empty()
    }
}

/// Clears every coalition's ledger. Coalition ids are ledger indices.
pub fn settle(ledgers: &[PaymentLedger], tolerance: f64) -> Result<Settlement> {
    let mut out = Settlement::default();
    for (c, ledger) in ledgers.iter().enumerate() {
        let imbalance = ledger.imbalance();
        let scale = ledger.entries.iter().map(|e| e.g.abs()).fold(1.0, f64::max);
        if imbalance.abs() > tolerance * scale {
            return Err(Error::SettlementImbalance {
                coalition: c,
                imbalance,
            });
        }
        for e in &ledger.entries {
            if e.g > 0.0 {
                out.collected.push(Transfer {
                    coalition: c,
                    sbs: e.sbs,
                    amount: e.g,
                });
            }
        }
    }
    for (c, ledger) in ledgers.iter().enumerate() {
        for e in &ledger.entries {
            if e.g < 0.0 {
                out.distributed.push(Transfer {
                    coalition: c,
                    sbs: e.sbs,
                    amount: -e.g,
                });
            }
        }
    }
    Ok(out)
}
