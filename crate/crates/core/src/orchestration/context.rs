use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::OrchestrationError;
use crate::descriptors::AppDescriptor;
use crate::kernel::SimTime;
use crate::net::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContextState {
    Requested,
    Instantiating,
    Running,
    Terminating,
    Terminated,
    Failed,
}

impl ContextState {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContextState::Requested => "REQUESTED",
            ContextState::Instantiating => "INSTANTIATING",
            ContextState::Running => "RUNNING",
            ContextState::Terminating => "TERMINATING",
            ContextState::Terminated => "TERMINATED",
            ContextState::Failed => "FAILED",
        }
    }

    pub fn can_become(&self, next: ContextState) -> bool {
        use ContextState::*;
        matches!(
            (self, next),
            (Requested, Instantiating)
                | (Instantiating, Running)
                | (Instantiating, Failed)
                | (Running, Terminating)
                | (Terminating, Terminated)
        )
    }
}

impl fmt::Display for ContextState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle record linking a Device app request to a MEC app instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AppContext {
    pub context_id: String,
    pub app_d_id: String,
    pub app_name: String,
    pub app_provider: String,
    pub device_app_id: String,
    pub callback_reference: Option<String>,
    pub app_package_source: Option<String>,
    pub state: ContextState,
    /// Set iff `state == Running`.
    pub app_endpoint: Option<Endpoint>,
    /// Set iff a simulated app is instantiating or running.
    pub host_name: Option<String>,
    pub app_instance_id: Option<String>,
    /// Host the app was placed on, kept after termination.
    pub placed_on: Option<String>,
    pub external: bool,
    pub reason: Option<String>,
    pub timestamps: BTreeMap<ContextState, SimTime>,
    pub(crate) reserved_endpoint: Option<Endpoint>,
}

impl AppContext {
    pub(crate) fn new(
        context_id: String,
        descriptor: &AppDescriptor,
        device_app_id: String,
        callback_reference: Option<String>,
        app_package_source: Option<String>,
        now: SimTime,
    ) -> Self {
        AppContext {
            context_id,
            app_d_id: descriptor.app_d_id.clone(),
            app_name: descriptor.app_name.clone(),
            app_provider: descriptor.app_provider.clone(),
            device_app_id,
            callback_reference,
            app_package_source,
            state: ContextState::Requested,
            app_endpoint: None,
            host_name: None,
            app_instance_id: None,
            placed_on: None,
            external: descriptor.is_external(),
            reason: None,
            timestamps: BTreeMap::from([(ContextState::Requested, now)]),
            reserved_endpoint: None,
        }
    }

    pub(crate) fn transition(&mut self, next: ContextState, now: SimTime) -> Result<(), OrchestrationError> {
        if !self.state.can_become(next) {
            return Err(OrchestrationError::IllegalState { context: self.context_id.clone(), state: self.state });
        }
        self.state = next;
        self.timestamps.insert(next, now);
        Ok(())
    }

    /// Body returned by the Mx2 app_contexts resource.
    pub fn to_json(&self) -> Value {
        let mut instance = json!({
            "appInstanceId": self.app_instance_id,
        });
        if let Some(ep) = self.app_endpoint {
            instance["referenceURI"] = json!(format!("udp://{ep}"));
            instance["appEndpoint"] = json!({ "address": ep.addr.to_string(), "port": ep.port });
        }
        if let Some(host) = &self.host_name {
            instance["appLocation"] = json!({ "hostName": host });
        }
        let mut app_info = json!({
            "appDId": self.app_d_id,
            "appName": self.app_name,
            "appProvider": self.app_provider,
            "userAppInstanceInfo": [instance],
        });
        if let Some(src) = &self.app_package_source {
            app_info["appPackageSource"] = json!(src);
        }
        json!({
            "contextId": self.context_id,
            "associateDevAppId": self.device_app_id,
            "callbackReference": self.callback_reference,
            "state": self.state,
            "appInfo": app_info,
        })
    }
}
