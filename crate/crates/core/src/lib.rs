//! Heterogeneous treatment effect estimation: base learners, propensity
//! models, CATE meta-learners, semi-synthetic data generators and a
//! replication benchmark.

pub mod bench;
pub mod data;
pub mod dgp;
pub mod error;
pub mod learners;
pub mod meta;
pub mod metrics;
pub mod propensity;
pub mod seed;
pub mod split;

pub use data::{CausalDataset, ColumnKind, SimTruth};
pub use error::{HteError, Result};
pub use seed::{SeedTree, Stream};
