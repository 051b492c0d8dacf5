//! Agent-based simulation of cultural variant evolution in pairwise-interacting
//! micro-societies, where the order of pairings (early, mid or late full
//! connectivity) interacts with content bias, coordination bias, bounded
//! memory and mutation.
//!
//! * [`model`]: agent memory and the biased production rule
//! * [`schedule`]: pairing schedules, validation, reachability, file formats
//! * [`engine`]: single runs, replicate batches and parameter sweeps
//! * [`metrics`]: entropy, adaptiveness, time to convergence, aggregation
//! * [`output`]: CSV record formats and the checkpointed sweep directory
//! * [`config`]: JSON sweep configuration
//! * [`plot`]: SVG charts of summary files

pub mod config;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod output;
pub mod plot;
pub mod schedule;

pub use engine::{
    run_replicates, run_simulation, seed_derive, sweep, EngineError, HorizonMode, ParameterPoint, QualityMode,
    RunResult, SimulationConfig, SweepGrid,
};
pub use model::{BiasParams, MemoryWindow, QualityAssignment, VariantId};
pub use schedule::{builtin_schedule, ConnectivityKind, Schedule};
