//! Hierarchical personalized federated learning over a simulated mobile
//! edge network.
//!
//! UEs run one personalized (MAML-style) step per round, edge servers
//! average their UEs synchronously, and the cloud fuses a subset of edge
//! servers per round with stale meta-gradients. Which edge servers join a
//! round is decided by a data-importance vs latency threshold rule, and the
//! shared uplink bandwidth is split by min-max progressive filling.

pub mod bandwidth;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod lambert;
pub mod loss;
pub mod network;
pub mod params;
pub mod pfl;
pub mod scheduler;
pub mod tasks;

pub use error::{HpflError, Result};
pub use params::ParamVector;
