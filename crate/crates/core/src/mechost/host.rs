use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{MecAppEntry, Paradigm, ServiceBase, ServiceDescriptor, ServiceRegistry, ServiceRequest, Vim, VimError};
use crate::apps::{AppCatalog, MecApp, MecAppEnv};
use crate::descriptors::{AppDescriptor, ResourceVector};
use crate::http::HttpResponse;
use crate::kernel::{EventHandle, Kernel, NodeId, SimTime};
use crate::net::Endpoint;
use crate::orchestration::HostSnapshot;
use crate::services::{LocationService, RadioEnvironment, RnisService, LOCATION_SERVICE, RNI_SERVICE};

pub const REGISTRY_PORT: u16 = 10021;
pub const LOCATION_PORT: u16 = 10020;
pub const RNIS_PORT: u16 = 10030;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatformService {
    Registry,
    Location,
    Rnis,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HostError {
    #[error("unknown MEC service `{0}`")]
    UnknownService(String),
}

pub struct HostedApp {
    pub runtime: Box<dyn MecApp>,
    jobs: BTreeMap<u64, EventHandle>,
}

impl HostedApp {
    pub fn pending_jobs(&self) -> usize {
        self.jobs.len()
    }
}

/// One MEC host: VIM, MEC platform (registry and services) and the
/// runtimes of the apps it hosts.
pub struct MecHost {
    vim: Vim,
    registry: ServiceRegistry,
    location: Option<LocationService>,
    rnis: Option<RnisService>,
    bases: BTreeMap<u16, ServiceBase>,
    apps: BTreeMap<String, HostedApp>,
    next_job: u64,
}

impl std::fmt::Debug for MecHost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MecHost")
            .field("vim", &self.vim)
            .field("services", &self.services())
            .field("apps", &self.apps.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl MecHost {
    pub fn new(
        name: impl Into<String>,
        address: Ipv4Addr,
        budget: ResourceVector,
        paradigm: Paradigm,
        services: &[String],
        service_time: SimTime,
    ) -> Result<Self, HostError> {
        let name = name.into();
        let mut host = MecHost {
            vim: Vim::new(name.clone(), address, budget, paradigm),
            registry: ServiceRegistry::default(),
            location: None,
            rnis: None,
            bases: BTreeMap::from([(REGISTRY_PORT, ServiceBase::new(service_time))]),
            apps: BTreeMap::new(),
            next_job: 1,
        };
        for s in services {
            let port = match s.as_str() {
                LOCATION_SERVICE => {
                    host.location = Some(LocationService::new());
                    LOCATION_PORT
                }
                RNI_SERVICE => {
                    host.rnis = Some(RnisService);
                    RNIS_PORT
                }
                other => return Err(HostError::UnknownService(other.to_string())),
            };
            host.bases.insert(port, ServiceBase::new(service_time));
            host.registry.register(ServiceDescriptor {
                ser_name: s.clone(),
                ser_instance_id: format!("{s}-{name}"),
                endpoint: Endpoint::new(address, port),
            });
        }
        Ok(host)
    }

    pub fn name(&self) -> &str {
        self.vim.host_name()
    }

    pub fn address(&self) -> Ipv4Addr {
        self.vim.address()
    }

    pub fn vim(&self) -> &Vim {
        &self.vim
    }

    pub fn registry(&self) -> &ServiceRegistry {
        &self.registry
    }

    pub fn registry_endpoint(&self) -> Endpoint {
        Endpoint::new(self.address(), REGISTRY_PORT)
    }

    pub fn location(&self) -> Option<&LocationService> {
        self.location.as_ref()
    }

    pub fn location_mut(&mut self) -> Option<&mut LocationService> {
        self.location.as_mut()
    }

    pub fn services(&self) -> Vec<String> {
        self.registry.names().map(str::to_string).collect()
    }

    pub fn snapshot(&self) -> HostSnapshot {
        HostSnapshot { name: self.name().to_string(), free: self.vim.free(), services: self.services() }
    }

    pub fn service_at(&self, port: u16) -> Option<PlatformService> {
        match port {
            REGISTRY_PORT => Some(PlatformService::Registry),
            LOCATION_PORT if self.location.is_some() => Some(PlatformService::Location),
            RNIS_PORT if self.rnis.is_some() => Some(PlatformService::Rnis),
            _ => None,
        }
    }

    pub fn base_mut(&mut self, port: u16) -> Option<&mut ServiceBase> {
        self.bases.get_mut(&port)
    }

    /// Run service-specific logic for a request popped from a queue.
    pub fn serve(&mut self, port: u16, req: &ServiceRequest, env: &RadioEnvironment, now: SimTime) -> HttpResponse {
        match (self.service_at(port), &mut self.location, &self.rnis) {
            (Some(PlatformService::Registry), _, _) => self.registry.handle(req),
            (Some(PlatformService::Location), Some(loc), _) => loc.handle(req, env, now),
            (Some(PlatformService::Rnis), _, Some(rnis)) => rnis.handle(req, env, now),
            _ => HttpResponse::problem(404, format!("no service on port {port}")),
        }
    }

    pub fn instantiate_app(
        &mut self,
        descriptor: &AppDescriptor,
        app_instance_id: &str,
        catalog: &AppCatalog,
        instructions_per_notification: u64,
    ) -> Result<MecAppEntry, VimError> {
        let entry = self.vim.instantiate(descriptor, app_instance_id)?.clone();
        let env = MecAppEnv {
            app_instance_id: app_instance_id.to_string(),
            app_name: descriptor.app_name.clone(),
            endpoint: entry.endpoint,
            registry: self.registry_endpoint(),
            instructions_per_notification,
        };
        self.apps.insert(app_instance_id.to_string(), HostedApp { runtime: catalog.create(env), jobs: BTreeMap::new() });
        Ok(entry)
    }

    /// Release the app's resources and cancel its pending compute jobs and
    /// any notifications still travelling to it.
    pub fn terminate_app<P>(&mut self, app_instance_id: &str, kernel: &mut Kernel<P>) -> Result<MecAppEntry, VimError> {
        let entry = self.vim.terminate(app_instance_id)?;
        if let Some(app) = self.apps.remove(app_instance_id) {
            for handle in app.jobs.into_values() {
                kernel.cancel(handle);
            }
        }
        if let Some(loc) = &mut self.location {
            for handle in loc.unsubscribe_callback(entry.endpoint) {
                kernel.cancel(handle);
            }
        }
        Ok(entry)
    }

    pub fn app(&self, app_instance_id: &str) -> Option<&HostedApp> {
        self.apps.get(app_instance_id)
    }

    pub fn app_mut(&mut self, app_instance_id: &str) -> Option<&mut HostedApp> {
        self.apps.get_mut(app_instance_id)
    }

    pub fn app_id_by_port(&self, port: u16) -> Option<String> {
        self.vim.app_by_port(port).map(|e| e.app_instance_id.clone())
    }

    /// Schedule the completion of a compute job at `now + processing time`.
    pub fn submit_job<P>(
        &mut self,
        app_instance_id: &str,
        instructions: u64,
        kernel: &mut Kernel<P>,
        target: NodeId,
        payload: impl FnOnce(u64) -> P,
    ) -> Result<(u64, SimTime), VimError> {
        let delay = self.vim.processing_time(app_instance_id, instructions)?;
        let app = self
            .apps
            .get_mut(app_instance_id)
            .ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        let job = self.next_job;
        self.next_job += 1;
        let handle = kernel.schedule_in(delay, target, payload(job)).expect("non-negative processing time");
        app.jobs.insert(job, handle);
        Ok((job, delay))
    }

    /// True if the job belonged to a live app and was still pending.
    pub fn finish_job(&mut self, app_instance_id: &str, job: u64) -> bool {
        self.apps.get_mut(app_instance_id).is_some_and(|a| a.jobs.remove(&job).is_some())
    }
}
