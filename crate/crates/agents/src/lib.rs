//! Outer loop of the optimizer: agents that plan, bind, analyze and select,
//! and the orchestrator that runs them around the inner evolutionary loop.

pub mod analyzer;
pub mod completion;
pub mod config;
pub mod error;
pub mod events;
pub mod gates;
pub mod matcher;
pub mod orchestrator;
pub mod planner;
pub mod proposer;
pub mod selector;
pub mod store;
pub mod wire;

pub use config::{AutonomyMode, RunConfig};
pub use error::{AgentError, Result};
pub use orchestrator::{Agents, Orchestrator, Outcome, RunState, RunStatus};
