//! CSV output: per-SBS costs, payment ledgers and formation traces.

use std::io::Write;

use serde::Serialize;

use crate::baselines::SchemeOutcome;
use crate::error::Result;
use crate::formation::TraceStep;
use crate::partitions::Partition;
use crate::payments::PaymentLedger;

#[derive(Debug, Serialize)]
struct CostCsvRow {
    scheme: &'static str,
    sbs_id: usize,
    coalition_id: usize,
    local_workload: f64,
    cloud_tasks: f64,
    association: f64,
    peer_tx: f64,
    compute: f64,
    cloud_tx: f64,
    cloud_fee: f64,
    risk: f64,
    operational: f64,
    utility: f64,
}

fn coalition_id(partition: &Partition, sbs: usize) -> usize {
    partition
        .coalitions()
        .iter()
        .position(|c| c.contains(&sbs))
        .unwrap_or(usize::MAX)
}

/// One row per (scheme, SBS).
pub fn write_costs<W: Write>(out: W, outcomes: &[SchemeOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in outcomes {
        for r in &o.report.rows {
            w.serialize(CostCsvRow {
                scheme: o.scheme.as_str(),
                sbs_id: r.sbs,
                coalition_id: coalition_id(&o.partition, r.sbs),
                local_workload: o.allocation.local(r.sbs),
                cloud_tasks: o.allocation.cloud(r.sbs),
                association: r.association,
                peer_tx: r.peer_tx,
                compute: r.compute,
                cloud_tx: r.cloud_tx,
                cloud_fee: r.cloud_fee,
                risk: r.risk,
                operational: r.operational,
                utility: r.utility,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LedgerCsvRow {
    sbs_id: usize,
    coalition_id: usize,
    u: f64,
    phi: f64,
    g: f64,
    psi: f64,
    standalone: f64,
}

/// One row per SBS; coalition ids are ledger indices.
pub fn write_ledger<W: Write>(out: W, ledgers: &[PaymentLedger]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (c, l) in ledgers.iter().enumerate() {
        for e in &l.entries {
            w.serialize(LedgerCsvRow {
                sbs_id: e.sbs,
                coalition_id: c,
                u: e.u,
                phi: e.phi,
                g: e.g,
                psi: e.psi,
                standalone: e.standalone,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn label(coalitions: &[Vec<usize>]) -> String {
    coalitions
        .iter()
        .map(|c| {
            format!(
                "{{{}}}",
                c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            )
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct TraceCsvRow<'a> {
    iteration: usize,
    op: &'a str,
    coalitions_before: String,
    coalitions_after: String,
    system_utility: f64,
    partition: String,
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if trace.is_empty() {
        w.write_record([
            "iteration",
            "op",
            "coalitions_before",
            "coalitions_after",
            "system_utility",
            "partition",
        ])?;
    }
    for t in trace {
        w.serialize(TraceCsvRow {
            iteration: t.iteration,
            op: t.op.as_str(),
            coalitions_before: label(&t.before),
            coalitions_after: label(&t.after),
            system_utility: t.system_utility,
            partition: t.partition.label(),
        })?;
    }
    w.flush()?;
    Ok(())
}
