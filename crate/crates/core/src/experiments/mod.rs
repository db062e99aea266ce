//! Experiment drivers: one slot with every scheme, parameter sweeps with a
//! resumable on-disk layout, and multi-slot runs with MUE churn.

mod dynamic;
mod sweep;

pub use dynamic::{run_dynamic, write_dynamic_csv, DynamicSpec, SlotRecord, SlotSeries, DYNAMIC_STREAM};
pub use sweep::{
    aggregate, read_table, run_sweep, write_summary_csv, GroupStats, Stat, SweepAxis, SweepOutcome, SweepRow,
    SweepSpec, SweepSummary,
};

use serde::Serialize;

use crate::baselines::{centralized_opt, cloud_min, non_cooperative, Scheme, SchemeOutcome};
use crate::error::Result;
use crate::formation::{form_coalitions, Evaluator, Formation};
use crate::game::Game;

/// `(cost_noncoop - cost_proposed) / cost_noncoop`, or 0 for a costless network.
pub fn relative_gain(cost_noncoop: f64, cost_proposed: f64) -> f64 {
    if cost_noncoop.abs() < 1e-12 {
        0.0
    } else {
        (cost_noncoop - cost_proposed) / cost_noncoop
    }
}

/// Every scheme on one scenario, plus the proposed scheme's formation trace.
#[derive(Debug, Clone, Serialize)]
pub struct SlotBundle {
    pub formation: Formation,
    /// Proposed, non-cooperative, cloud-min and (when requested) centralized.
    pub outcomes: Vec<SchemeOutcome>,
}

impl SlotBundle {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme == scheme)
    }

    pub fn relative_gain(&self) -> f64 {
        let nc = self.outcome(Scheme::NonCooperative).expect("always run");
        let p = self.outcome(Scheme::Proposed).expect("always run");
        relative_gain(nc.total_cost(), p.total_cost())
    }
}

pub fn run_single_slot(game: &Game, include_central: bool) -> Result<SlotBundle> {
    let eval = Evaluator::new(game)?;
    let formation = form_coalitions(&eval)?;
    let mut outcomes = vec![
        SchemeOutcome::from_formation(&formation),
        non_cooperative(&eval)?,
        cloud_min(game)?,
    ];
    if include_central {
        outcomes.push(centralized_opt(&eval, game.settings().central_cap)?);
    }
    Ok(SlotBundle { formation, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::paper_fig4;
    use crate::scenario::generate_scenario;

    #[test]
    fn gain_formula() {
        assert_eq!(relative_gain(10.0, 6.0), 0.4);
        assert_eq!(relative_gain(0.0, 0.0), 0.0);
    }

    #[test]
    fn bundle_has_every_scheme_per_sbs() {
        let mut cfg = paper_fig4();
        cfg.scenario.deployment = crate::scenario::Deployment::Fixed {
            sbs_count: 5,
            mue_count: 25,
        };
        let s = generate_scenario(&cfg.scenario, 3).unwrap();
        let g = Game::new(&s, cfg.game.clone()).unwrap();
        let b = run_single_slot(&g, true).unwrap();
        assert_eq!(b.outcomes.len(), 4);
        for o in &b.outcomes {
            assert_eq!(o.report.rows.len(), 5);
        }
        let again = run_single_slot(&g, true).unwrap();
        assert_eq!(b.outcomes, again.outcomes);
        let mut prev = b.formation.initial_utility;
        for t in &b.formation.trace {
            assert!(t.system_utility >= prev - 1e-9);
            prev = t.system_utility;
        }
    }
}
