//! MEC host level: VIM, MEC platform with its service registry, and the
//! generic REST server behaviour of platform services.

mod host;
mod registry;
mod service_base;
mod vim;

pub use host::{HostError, HostedApp, MecHost, PlatformService, LOCATION_PORT, REGISTRY_PORT, RNIS_PORT};
pub use registry::{ServiceDescriptor, ServiceRegistry, SERVICES_PATH};
pub use service_base::{QueuedRequest, ServiceBase, ServiceRequest};
pub use vim::{MecAppEntry, Paradigm, Vim, VimError, FIRST_APP_PORT};
