//! MEC system level: orchestrator and the Mx2 lifecycle proxy.

mod context;
mod orchestrator;
mod placement;
mod ualcmp;

use thiserror::Error;

pub use context::{AppContext, ContextState};
pub use orchestrator::{CreateRequest, HostDirectory, Orchestrator};
pub use placement::{FirstFit, HostSnapshot, PlacementPolicy};
pub use ualcmp::{Mx2Call, Mx2Reply, Ualcmp, UalcmpAction, APP_CONTEXTS_PATH, APP_LIST_PATH};

use crate::mechost::VimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestrationError {
    #[error("appDId `{0}` already onboarded")]
    DuplicateAppDId(String),
    #[error("unknown app `{0}`")]
    UnknownAppDId(String),
    #[error("no suitable MEC host for `{0}`")]
    NoSuitableHost(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("context `{context}` is {state}")]
    IllegalState { context: String, state: ContextState },
    #[error("cannot load app package: {0}")]
    PackageLoad(String),
    #[error(transparent)]
    Host(#[from] VimError),
}
