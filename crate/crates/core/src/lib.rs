//! Trust-aware coalition formation among small-cell edge servers.
//!
//! SBSs with spare computing capacity (sellers) absorb workload from
//! overloaded neighbours (buyers) inside coalitions formed by merge-and-split.
//! A coalition's value is its best total utility over buyer orderings, split
//! among members by proportional-fair payments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod cost;
pub mod error;
pub mod experiments;
pub mod formation;
pub mod game;
pub mod matching;
pub mod partitions;
pub mod payments;
pub mod report;
pub mod scenario;
pub mod testkit;
pub mod trust;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use game::{Game, GameSettings};
pub use scenario::Scenario;
