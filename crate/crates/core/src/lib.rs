//! Cluster-based detection of false data injection in wireless sensor
//! networks: protocol state machines, a seeded discrete-event simulator, and
//! the metrics and reports built on top of them.

pub mod attack;
pub mod clustering;
pub mod config;
pub mod detection;
pub mod domain;
pub mod experiment;
pub mod fixtures;
pub mod ingest;
pub mod metrics;
pub mod node;
pub mod rng;
pub mod similarity;
pub mod simnet;
pub mod trace;

pub use config::{ConfigError, ExperimentConfig, ScenarioConfig};
pub use domain::{AlertMessage, DataMessage, NeighborRecord, NodeId, Reading};
pub use metrics::ConfusionCounts;
pub use simnet::{run, RunOutput, Simulation};
pub use trace::{Trace, TraceLevel};
