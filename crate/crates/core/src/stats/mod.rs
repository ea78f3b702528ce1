//! Balanced two-way fixed-effects ANOVA with replication, F-distribution
//! tail probabilities, and the numerosity-selectivity rule built on them.

mod anova;
pub mod special;

use thiserror::Error;

pub use anova::{
    classify_selectivity, two_way_anova, AnovaTable, CellGrid, SelectivityLabel, SelectivityReason,
    DEFAULT_ALPHA,
};
pub use special::f_upper_tail;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("unbalanced design: {0}")]
    UnbalancedDesign(String),
    #[error("insufficient replicates: need s >= 2, got {0}")]
    InsufficientReplicates(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    Convergence(String),
}
