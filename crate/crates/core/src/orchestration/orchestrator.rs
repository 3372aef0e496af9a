use std::collections::BTreeMap;

use super::context::{AppContext, ContextState};
use super::placement::{FirstFit, HostSnapshot, PlacementPolicy};
use super::OrchestrationError;
use crate::descriptors::AppDescriptor;
use crate::kernel::SimTime;
use crate::mechost::VimError;
use crate::net::Endpoint;

/// Synchronous view of the managed hosts.
pub trait HostDirectory {
    fn snapshot(&self, host: &str) -> Option<HostSnapshot>;
    fn instantiate(&mut self, host: &str, descriptor: &AppDescriptor, app_instance_id: &str) -> Result<Endpoint, VimError>;
    fn terminate(&mut self, host: &str, app_instance_id: &str) -> Result<(), VimError>;
}

/// Body of a create request after UALCMP parsing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CreateRequest {
    pub app_d_id: Option<String>,
    pub app_name: Option<String>,
    pub app_package_source: Option<String>,
    pub device_app_id: String,
    pub callback_reference: Option<String>,
}

pub struct Orchestrator {
    managed_hosts: Vec<String>,
    onboarded: BTreeMap<String, AppDescriptor>,
    contexts: BTreeMap<String, AppContext>,
    processing_delay: SimTime,
    policy: Box<dyn PlacementPolicy>,
    next_context: u64,
    next_instance: u64,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("managed_hosts", &self.managed_hosts)
            .field("onboarded", &self.onboarded.keys().collect::<Vec<_>>())
            .field("contexts", &self.contexts.len())
            .field("processing_delay", &self.processing_delay)
            .finish()
    }
}

impl Orchestrator {
    pub fn new(managed_hosts: Vec<String>, processing_delay: SimTime) -> Self {
        Self::with_policy(managed_hosts, processing_delay, Box::new(FirstFit))
    }

    pub fn with_policy(managed_hosts: Vec<String>, processing_delay: SimTime, policy: Box<dyn PlacementPolicy>) -> Self {
        Orchestrator {
            managed_hosts,
            onboarded: BTreeMap::new(),
            contexts: BTreeMap::new(),
            processing_delay,
            policy,
            next_context: 1,
            next_instance: 1,
        }
    }

    pub fn managed_hosts(&self) -> &[String] {
        &self.managed_hosts
    }

    pub fn processing_delay(&self) -> SimTime {
        self.processing_delay
    }

    pub fn onboard(&mut self, descriptor: AppDescriptor) -> Result<String, OrchestrationError> {
        if self.onboarded.contains_key(&descriptor.app_d_id) {
            return Err(OrchestrationError::DuplicateAppDId(descriptor.app_d_id));
        }
        let id = descriptor.app_d_id.clone();
        self.onboarded.insert(id.clone(), descriptor);
        Ok(id)
    }

    pub fn onboarded(&self) -> impl Iterator<Item = &AppDescriptor> {
        self.onboarded.values()
    }

    pub fn descriptor(&self, app_d_id: &str) -> Option<&AppDescriptor> {
        self.onboarded.get(app_d_id)
    }

    pub fn context(&self, context_id: &str) -> Option<&AppContext> {
        self.contexts.get(context_id)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &AppContext> {
        self.contexts.values()
    }

    /// Find the descriptor a request refers to, onboarding it from its
    /// package source when it is not known yet.
    pub fn resolve(
        &mut self,
        req: &CreateRequest,
        load: impl FnOnce(&str) -> Result<AppDescriptor, String>,
    ) -> Result<String, OrchestrationError> {
        if let Some(id) = &req.app_d_id {
            if self.onboarded.contains_key(id) {
                return Ok(id.clone());
            }
        }
        if let Some(name) = &req.app_name {
            if let Some(d) = self.onboarded.values().find(|d| &d.app_name == name) {
                return Ok(d.app_d_id.clone());
            }
        }
        let Some(source) = &req.app_package_source else {
            let wanted = req.app_d_id.as_ref().or(req.app_name.as_ref()).cloned().unwrap_or_default();
            return Err(OrchestrationError::UnknownAppDId(wanted));
        };
        let descriptor = load(source).map_err(OrchestrationError::PackageLoad)?;
        match self.onboarded.get(&descriptor.app_d_id) {
            Some(existing) if *existing == descriptor => Ok(descriptor.app_d_id),
            Some(_) => Err(OrchestrationError::DuplicateAppDId(descriptor.app_d_id)),
            None => self.onboard(descriptor),
        }
    }

    fn snapshots(&self, hosts: &dyn HostDirectory) -> Vec<HostSnapshot> {
        self.managed_hosts.iter().filter_map(|h| hosts.snapshot(h)).collect()
    }

    /// Host chosen by the placement policy among the managed hosts.
    pub fn select_mec_host(&self, descriptor: &AppDescriptor, hosts: &dyn HostDirectory) -> Result<String, OrchestrationError> {
        self.policy
            .select(descriptor, &self.snapshots(hosts))
            .ok_or_else(|| OrchestrationError::NoSuitableHost(descriptor.app_d_id.clone()))
    }

    /// Create a context and perform placement and allocation immediately.
    /// The outcome becomes visible through [`Orchestrator::complete_create`]
    /// once the processing delay has elapsed.
    pub fn begin_create(
        &mut self,
        req: &CreateRequest,
        app_d_id: &str,
        now: SimTime,
        hosts: &mut dyn HostDirectory,
    ) -> Result<String, OrchestrationError> {
        let descriptor = self
            .onboarded
            .get(app_d_id)
            .cloned()
            .ok_or_else(|| OrchestrationError::UnknownAppDId(app_d_id.to_string()))?;
        let context_id = format!("ctx-{}", self.next_context);
        self.next_context += 1;
        let mut ctx = AppContext::new(
            context_id.clone(),
            &descriptor,
            req.device_app_id.clone(),
            req.callback_reference.clone(),
            req.app_package_source.clone(),
            now,
        );
        ctx.transition(ContextState::Instantiating, now)?;
        if let Some(ep) = descriptor.emulated {
            ctx.reserved_endpoint = Some(ep);
        } else {
            match self.select_mec_host(&descriptor, hosts) {
                Ok(host) => {
                    let instance = format!("app-{}", self.next_instance);
                    self.next_instance += 1;
                    match hosts.instantiate(&host, &descriptor, &instance) {
                        Ok(ep) => {
                            ctx.reserved_endpoint = Some(ep);
                            ctx.app_instance_id = Some(instance);
                            ctx.host_name = Some(host.clone());
                            ctx.placed_on = Some(host);
                        }
                        Err(e) => ctx.reason = Some(e.to_string()),
                    }
                }
                Err(e) => ctx.reason = Some(e.to_string()),
            }
        }
        self.contexts.insert(context_id.clone(), ctx);
        Ok(context_id)
    }

    /// RUNNING with the reserved endpoint, or FAILED with a reason.
    pub fn complete_create(&mut self, context_id: &str, now: SimTime) -> Result<&AppContext, OrchestrationError> {
        let ctx = self
            .contexts
            .get_mut(context_id)
            .ok_or_else(|| OrchestrationError::UnknownContext(context_id.to_string()))?;
        match ctx.reserved_endpoint.take() {
            Some(ep) => {
                ctx.transition(ContextState::Running, now)?;
                ctx.app_endpoint = Some(ep);
            }
            None => {
                ctx.transition(ContextState::Failed, now)?;
                ctx.host_name = None;
            }
        }
        Ok(ctx)
    }

    /// Move a RUNNING context to TERMINATING and release its host resources.
    pub fn begin_delete(
        &mut self,
        context_id: &str,
        now: SimTime,
        hosts: &mut dyn HostDirectory,
    ) -> Result<&AppContext, OrchestrationError> {
        let ctx = self
            .contexts
            .get_mut(context_id)
            .ok_or_else(|| OrchestrationError::UnknownContext(context_id.to_string()))?;
        ctx.transition(ContextState::Terminating, now)?;
        ctx.app_endpoint = None;
        if let (Some(host), Some(instance)) = (ctx.host_name.take(), ctx.app_instance_id.as_deref()) {
            hosts.terminate(&host, instance).map_err(OrchestrationError::Host)?;
        }
        Ok(ctx)
    }

    pub fn complete_delete(&mut self, context_id: &str, now: SimTime) -> Result<&AppContext, OrchestrationError> {
        let ctx = self
            .contexts
            .get_mut(context_id)
            .ok_or_else(|| OrchestrationError::UnknownContext(context_id.to_string()))?;
        ctx.transition(ContextState::Terminated, now)?;
        Ok(ctx)
    }

    /// Every RUNNING simulated context sits on a host offering its services.
    pub fn placement_sound(&self, services_of: impl Fn(&str) -> Vec<String>) -> bool {
        self.contexts.values().filter(|c| c.state == ContextState::Running && !c.external).all(|c| {
            let Some(host) = &c.host_name else { return false };
            let offered = services_of(host);
            self.onboarded
                .get(&c.app_d_id)
                .is_some_and(|d| d.services_required.iter().all(|s| offered.contains(s)))
        })
    }
}
