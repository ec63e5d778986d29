//! Fixed-priority schedule simulation and schedule reconstruction from
//! busy-interval observations.
//!
//! The pipeline runs [`simulator`] to produce a ground-truth trace and its
//! busy intervals, then [`decompose`], [`windows`], [`refine`] and
//! [`translate`] to rebuild job start times from the intervals alone, and
//! finally [`metrics`] to score the result. [`harness`] strings the steps
//! together and runs seeded sweeps.

pub mod decompose;
pub mod error;
pub mod exec;
pub mod generator;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod refine;
pub mod simulator;
pub mod translate;
pub mod windows;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{BusyInterval, Job, TaskSet, TaskSpec, Tick, Trace};
