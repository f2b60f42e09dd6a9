//! Per-activation read memory size profiling for multithreaded traces.
//!
//! For each routine activation the profiler reports its TRMS (distinct cells
//! read whose value came from before the activation, where cells overwritten
//! by other threads or the kernel count again on their next read) and its RMS
//! (distinct cells whose first access by the activation was a read).

pub mod check;
pub mod fit;
pub mod metrics;
pub mod oracle;
pub mod overflow;
pub mod pipeline;
pub mod profiler;
pub mod report;
pub mod search;
pub mod shadow;
pub mod store;
pub mod trace;
pub mod tracegen;

pub use overflow::RenumberStats;
pub use profiler::{run, run_events, Frame, ProfileError, ProfilerConfig, RunError, Session, Stats, ThreadState};
pub use shadow::{CounterWidth, Geometry, GlobalShadow, ShadowError, TimestampTable, WriterTag};
pub use store::{ProfileStore, ProfileTuple};
pub use trace::{
    Access, EventKind, Granularity, MergeStream, MergedTrace, RoutineId, RoutineNames, ThreadId,
    TraceError, TraceEvent,
};
