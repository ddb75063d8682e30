//! Intent extraction from recorded UI sessions.
//!
//! The crate is organised bottom-up: [`model`] holds the shared data
//! types, [`ingest`] turns raw episode dumps into trajectories,
//! [`gateway`] talks to generation backends, [`pipeline`] implements the
//! extraction methods, [`eval`] scores their output and [`costlat`]
//! estimates what they cost to run.

pub mod cache;
pub mod costlat;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synthetic;

pub use error::{CostError, EvalError, GatewayError, IngestError, ModelError, PipelineError};
pub use model::{
    AblationConfig, ActionKind, ActionRecord, CallRecord, CallRole, ImageRef, IntentStatement, Interaction,
    InteractionSummary, Method, PipelineTrace, Platform, Rect, Trajectory,
};
