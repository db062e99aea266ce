use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty deployment: no SBSs were generated")]
    EmptyDeployment,

    #[error("degenerate distance: transmitter and receiver coincide")]
    DegenerateDistance,

    #[error("no link: channel gain must be positive")]
    NoLink,

    #[error("node not in network: {0}")]
    UnknownNode(usize),

    #[error("invalid trust edge {from}->{to}: {reason}")]
    InvalidTrustEdge { from: usize, to: usize, reason: String },

    #[error("infeasible association: MUE {mue} cannot reach SBS {sbs}")]
    InfeasibleAssociation { mue: usize, sbs: usize },

    #[error("infeasible peer link: SBS {from} cannot reach SBS {to}")]
    InfeasiblePeerLink { from: usize, to: usize },

    #[error("queue unstable at SBS {sbs}: workload {workload} >= service rate {service_rate}")]
    QueueUnstable {
        sbs: usize,
        workload: f64,
        service_rate: f64,
    },

    #[error("coalition should not have formed: surplus {0} is negative")]
    NegativeSurplus(f64),

    #[error("settlement imbalance in coalition {coalition}: payments sum to {imbalance}")]
    SettlementImbalance { coalition: usize, imbalance: f64 },

    #[error("non-convergence: merge-and-split exceeded {0} iterations")]
    NonConvergence(usize),

    #[error("{what} supports at most {cap} SBSs, got {n}")]
    TooLarge {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("collections cover different SBS sets")]
    MismatchedSets,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
