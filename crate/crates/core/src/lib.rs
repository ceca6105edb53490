//! Detection and analysis of high-level events in process event logs.
//!
//! An event log is cut into fixed-width time windows; aspect functions measure
//! the behaviour of activities, resources and segments per window; values
//! exceeding a threshold become high-level events, which are linked across
//! windows into cascades and threads.

pub mod aspects;
pub mod detection;
pub mod event_log;
pub mod framing;
pub mod hl_export;
pub mod interplay;
pub mod propagation;
pub mod proximity;
pub mod robustness;
pub mod simgen;
pub mod time;
mod util;

pub use aspects::{AspectCategory, AspectEngine, AspectError, AspectEvaluation, AspectKind};
pub use detection::{
    detect, DetectionError, Direction, HighLevelActivity, HighLevelEvent, ThresholdPolicy,
};
pub use event_log::{
    load_csv, ActivityId, CaseId, ComponentId, ComponentKind, Event, EventId, EventLog, LogError,
    RawEvent, ResourceId, Schema,
};
pub use framing::{make_framing, Framing, FramingError, TimeWindow, TimeWindows, WindowIndex};
pub use propagation::{
    build_graph, Cascade, PropagationError, PropagationGraph, Thread, ThreadPrune, ThreadSet,
    Variant,
};
pub use proximity::{ProximityContext, ProximityError, ProximityMethod};
pub use time::{Duration, Timestamp, TimestampFormat};
