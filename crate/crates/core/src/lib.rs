//! Node-replication (clone) detection toolkit.
//!
//! * [`field`] and [`keying`]: symmetric bivariate polynomial key
//!   pre-distribution over a prime field.
//! * [`generations`] and [`station`]: generation windows with master-key
//!   erasure and the central station that enforces them.
//! * [`baselines`]: neighbour-broadcast and randomized-multicast witness
//!   detection, used for comparison.
//! * [`netsim`]: deterministic discrete-event simulator on a ring road.
//! * [`metrics`]: sweeps, CSV output, complexity fits and detection reports.

pub mod baselines;
pub mod field;
pub mod generations;
pub mod geometry;
pub mod keying;
pub mod metrics;
pub mod netsim;
pub mod station;

pub use field::{FieldElement, Modulus, SymmetricBivariatePoly, UnivariatePoly};
pub use generations::Tick;
pub use geometry::Position;
pub use keying::{HashMode, IdentityHash, KeyShare, NodeId, NodeKey};
