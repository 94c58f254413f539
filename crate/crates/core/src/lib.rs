//! Multi-hop mobile WiFi simulator in which every node tunes its own
//! transmit power with a small deep Q-network.
//!
//! The crate covers the physical layer ([`phy`], [`channel`]), ETX routing
//! ([`routing`]), the learner ([`dqn`]), the per-node controllers
//! ([`policies`]), the frame loop ([`sim`]) and reporting ([`metrics`],
//! [`export`]).

pub mod channel;
pub mod config;
pub mod dqn;
pub mod error;
pub mod export;
pub mod metrics;
pub mod phy;
pub mod policies;
pub mod rng;
pub mod routing;
pub mod selftest;
pub mod sim;
pub mod types;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use policies::Arm;
pub use sim::{run_experiment, FrameLog, Simulation};
pub use types::{NodeId, NodeState, PowerAction, PowerLevel};
