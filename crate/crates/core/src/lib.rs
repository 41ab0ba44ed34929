//! Multi-agent collision avoidance with second-order control barrier
//! functions and a responsibility-allocation layer.
//!
//! Point-mass agents with double-integrator dynamics fly toward goals under
//! a PD law. Every interacting pair yields an affine condition on the two
//! agents' accelerations. The engine runs in one of three modes:
//!
//! * **decentralized**: every agent filters its nominal input against all
//!   of its neighbors, assuming a fixed model of the neighbor's input;
//! * **coordinated**: a coverage problem assigns each pair's condition to
//!   exactly one of the two agents, which then enforces only what it was
//!   assigned;
//! * **oracle**: the exact joint problem over all inputs, for small swarms.
//!
//! See the `examples/` directory for one runnable program per capability.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod hocbf;
pub mod output;
pub mod qp;
pub mod validate;
pub mod world;

pub use config::{CijVariant, Mode, NeighborModel, ScenarioConfig};
pub use error::{Error, Result};
pub use world::{AgentState, Bounds, Vec3};
