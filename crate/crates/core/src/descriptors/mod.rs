//! Application package descriptors, scenario files and resource arithmetic.

mod app_descriptor;
mod resources;
mod scenario;

pub use app_descriptor::AppDescriptor;
pub use resources::{parse_quantity, resource_fits, ResourceVector, MEGABYTE};
pub use scenario::{
    Attachment, BridgeConfig, BridgeModeConfig, DangerZone, DeviceAppConfig, Diagnostic, GnbConfig, LinkSpec,
    MecAppParams, MecHostConfig, NatRouterConfig, NatRuleConfig, NetworkConfig, OrchestratorConfig, PackageRef,
    ScenarioConfig, UeAppConfig, UeConfig, ORCHESTRATOR_NODE, UALCMP_NODE, UPF_NODE,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("bad value for `{0}`")]
    BadValue(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Json(String),
    #[error("unknown MEC host `{0}`")]
    UnknownHost(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}
