//! Scoring outcomes against true values, the efficiency oracle, and the
//! strategy lab.

pub mod metrics;
pub mod oracle;
pub mod strategy;

pub use metrics::{score, Metrics, Valuation};
pub use oracle::{efficient_outcome, enumerate_alternatives, MAX_GRANT_PAIRS};
pub use strategy::{
    deviation_search, empty_future, multi_identity_probe, DeviationReport, GridSpec,
    MultiIdentityReport, SplitOutcome,
};
