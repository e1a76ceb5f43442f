//! Deterministic tick-driven simulator of vehicles on a ring road sharing a
//! congestible radio channel, running one detection protocol per run.

pub mod channel;
pub mod config;
mod ppp;
mod sim;
pub mod topology;
pub mod trace;
mod witness;

pub use config::{CloneMode, ClonePlacement, ConfigError, Protocol, SimConfig};
pub use sim::{inject_clone, run, step_mobility, NodeState, SimError};
pub use topology::{build_topology, RingRoad, Topology, TopologyError};
pub use trace::{AlertKind, AlertRecord, ChannelCounters, CloneRecord, Event, KeyAudit, MessageKind, Raiser, Trace};
