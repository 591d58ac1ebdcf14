//! Column-level hybrid ANN/SNN execution on a dual-core sparse accelerator.
//!
//! The crate is organised bottom-up:
//!
//! - [`sparse`]: bitmap-compressed fibers, 128-bit chunking, inner join and
//!   prefix offsets, plus the `NFBM` matrix interchange format.
//! - [`neuro`]: integer-exact QCFS activation, thermometer spike trains,
//!   integrate/soft-reset neurons and the column-wise hybrid GEMM.
//! - [`cost`]: quantile workload statistics and the analytic
//!   energy/latency/EDP model with its surrogate objective.
//! - [`sched`]: score-then-refine column assignment, LPT packing, baselines,
//!   an exhaustive oracle and bitmask emission.
//! - [`sim`]: cycle-level model of both cores, the FiberCache and HBM.
//! - [`workload`]: seeded synthetic layers, im2col lowering and profiling.
//! - [`pipeline`]: staged batch orchestration used by the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results never depend on the execution mode.

pub mod cost;
pub mod error;
pub mod hash;
pub mod neuro;
pub mod par;
pub mod pipeline;
pub mod sched;
pub mod sim;
pub mod sparse;
pub mod workload;

pub use error::{Error, Result};
