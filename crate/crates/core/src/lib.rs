//! Timestepped parallel and distributed simulation in which entities
//! migrate between logical processes (LPs) at runtime, driven by local
//! self-clustering heuristics.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`], [`routing`]: identifiers, entity records and the
//!   timestep-aware ownership table every LP replicates.
//! * [`engine`]: the per-step phase loop and the schedulers.
//! * [`transport`]: in-process channels, TCP and the wire codec.
//! * [`migration`], [`heuristics`], [`balancer`]: who moves, when, and how
//!   many.
//! * [`model`]: the random waypoint benchmark and a scripted test model.
//! * [`metrics`], [`harness`]: cost accounting, configuration, sweeps and
//!   CSV output.

pub mod balancer;
pub mod domain;
pub mod engine;
pub mod error;
pub mod harness;
pub mod heuristics;
pub mod metrics;
pub mod migration;
pub mod model;
pub mod rng;
pub mod routing;
pub mod transport;

pub use domain::{EntityId, InteractionEvent, LpId, Timestep};
pub use engine::{run_local, EngineConfig, RunReport, Scheduler};
pub use error::{Result, SimError};
