//! A deterministic laboratory for blockchain consensus: proof of work with
//! difficulty retargeting, coin-days proof of stake, a discrete-event network
//! simulator, a nothing-at-stake adversary with slashing, and the metrics that
//! quantify them.

pub mod adversary;
pub mod config;
pub mod hashcore;
pub mod ledger;
pub mod metrics;
pub mod pos;
pub mod pow;
pub mod simnet;
pub mod stats;
pub mod trace;

pub use config::{ConfigError, ScenarioConfig};
pub use hashcore::{double_sha256, merkle_root, target_from_zero_bits, Digest256, Target256};
pub use metrics::{compute_report, MetricsReport};
pub use simnet::run;
pub use trace::{SimulationTrace, TraceRecord};
