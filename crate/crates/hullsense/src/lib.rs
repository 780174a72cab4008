//! Distributed multi-step model predictive consensus for constrained linear
//! agents.
//!
//! A network of agents exchanges sampled states every `M` plant steps. Each
//! agent solves a local convex optimal control problem whose terminal state
//! must lie inside the convex hull of its own sample and its in-neighbors'
//! samples while contracting toward the hull barycenter, then (optionally)
//! re-selects among near-optimal plans the one that maximizes distance to the
//! hull's relative boundary. A coordinator routes samples, collects plans and
//! propagates the true plants, either in process or over TCP.
//!
//! The crate is organized as a library; the `examples/` directory shows one
//! runnable program per capability, and the thin `hullsense` binary exposes
//! the scenario runner, horizon checker, boundary-trap demonstration and TCP
//! coordinator/agent processes.
//!
//! ```bash
//! cargo run -p hullsense --example run_si_reference
//! cargo run -p hullsense -- run scenarios/si_paper.json --out target/si_out
//! ```

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod conic;
pub mod dynamics;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod logging;
pub mod ocp;
pub mod protocol;
pub mod runtime;
pub mod scenario;

pub use conic::{ConeSpec, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
pub use dynamics::{HorizonBound, InputSet, LinearAgent};
pub use geometry::{Hull2, Point};
pub use graph::{EdgeSet, GraphSchedule};
pub use ocp::{OcpSpec, PlanResult, SelectionPolicy};
pub use runtime::{NetworkState, RunArtifacts, StepRecord, StopReason};
pub use scenario::ScenarioConfig;
