use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{resource_fits, AppDescriptor, ResourceVector};
use crate::kernel::SimTime;
use crate::net::Endpoint;

/// First port handed out to MEC apps on a host.
pub const FIRST_APP_PORT: u16 = 4001;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VimError {
    #[error("insufficient resources on host")]
    InsufficientResources,
    #[error("unknown MEC app `{0}`")]
    UnknownApp(String),
    #[error("MEC app `{0}` already exists")]
    DuplicateApp(String),
    #[error("MEC app has a zero CPU rate")]
    ZeroRate,
    #[error("instruction count must be positive")]
    NoInstructions,
    #[error("no free port for a new MEC app")]
    PortsExhausted,
}

/// How a host's CPU is divided between running MEC apps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Paradigm {
    /// Each app gets exactly the rate in its descriptor.
    #[default]
    Segregation,
    /// The whole host capacity is split in proportion to requested rates.
    FairSharing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MecAppEntry {
    pub app_instance_id: String,
    pub app_d_id: String,
    pub app_name: String,
    pub endpoint: Endpoint,
    pub allocated: ResourceVector,
}

/// Virtualisation infrastructure manager: resource accounting and
/// processing-time computation for one MEC host.
#[derive(Debug, Clone)]
pub struct Vim {
    host_name: String,
    address: Ipv4Addr,
    budget: ResourceVector,
    free: ResourceVector,
    apps: BTreeMap<String, MecAppEntry>,
    paradigm: Paradigm,
    next_port: u16,
}

impl Vim {
    pub fn new(host_name: impl Into<String>, address: Ipv4Addr, budget: ResourceVector, paradigm: Paradigm) -> Self {
        Vim {
            host_name: host_name.into(),
            address,
            budget,
            free: budget,
            apps: BTreeMap::new(),
            paradigm,
            next_port: FIRST_APP_PORT,
        }
    }

    pub fn host_name(&self) -> &str {
        &self.host_name
    }

    pub fn address(&self) -> Ipv4Addr {
        self.address
    }

    pub fn budget(&self) -> ResourceVector {
        self.budget
    }

    pub fn free(&self) -> ResourceVector {
        self.free
    }

    pub fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    pub fn apps(&self) -> impl Iterator<Item = &MecAppEntry> {
        self.apps.values()
    }

    pub fn app(&self, id: &str) -> Option<&MecAppEntry> {
        self.apps.get(id)
    }

    pub fn app_by_port(&self, port: u16) -> Option<&MecAppEntry> {
        self.apps.values().find(|e| e.endpoint.port == port)
    }

    pub fn allocated_total(&self) -> ResourceVector {
        self.apps.values().map(|e| e.allocated).sum()
    }

    /// `free + Σ allocated == budget`.
    pub fn is_consistent(&self) -> bool {
        self.free.checked_add(&self.allocated_total()) == Some(self.budget) && self.free.le(&self.budget)
    }

    fn allocate_port(&mut self) -> Result<u16, VimError> {
        for _ in 0..=u16::MAX {
            let port = self.next_port;
            self.next_port = if port == u16::MAX { FIRST_APP_PORT } else { port + 1 };
            if self.app_by_port(port).is_none() {
                return Ok(port);
            }
        }
        Err(VimError::PortsExhausted)
    }

    /// Admit an app: allocate its compute descriptor and give it an endpoint.
    pub fn instantiate(&mut self, descriptor: &AppDescriptor, app_instance_id: &str) -> Result<&MecAppEntry, VimError> {
        if self.apps.contains_key(app_instance_id) {
            return Err(VimError::DuplicateApp(app_instance_id.to_string()));
        }
        let demand = descriptor.virtual_compute;
        if !resource_fits(&demand, &self.free) {
            return Err(VimError::InsufficientResources);
        }
        let port = self.allocate_port()?;
        self.free = self.free.checked_sub(&demand).expect("fit was checked");
        let entry = MecAppEntry {
            app_instance_id: app_instance_id.to_string(),
            app_d_id: descriptor.app_d_id.clone(),
            app_name: descriptor.app_name.clone(),
            endpoint: Endpoint::new(self.address, port),
            allocated: demand,
        };
        Ok(self.apps.entry(app_instance_id.to_string()).or_insert(entry))
    }

    pub fn terminate(&mut self, app_instance_id: &str) -> Result<MecAppEntry, VimError> {
        let entry = self
            .apps
            .remove(app_instance_id)
            .ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        self.free = self.free.checked_add(&entry.allocated).expect("released resources fit in budget");
        debug_assert!(self.free.le(&self.budget));
        Ok(entry)
    }

    /// CPU rate (instructions/s) the app currently obtains.
    pub fn effective_rate(&self, app_instance_id: &str) -> Result<f64, VimError> {
        let entry = self
            .apps
            .get(app_instance_id)
            .ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        let rate = entry.allocated.cpu as f64;
        if entry.allocated.cpu == 0 {
            return Err(VimError::ZeroRate);
        }
        Ok(match self.paradigm {
            Paradigm::Segregation => rate,
            Paradigm::FairSharing => {
                let total: u64 = self.apps.values().map(|e| e.allocated.cpu).sum();
                self.budget.cpu as f64 * rate / total as f64
            }
        })
    }

    /// Time to execute `instructions` with the rates of the currently running
    /// app set; the result is held for the whole job.
    pub fn processing_time(&self, app_instance_id: &str, instructions: u64) -> Result<SimTime, VimError> {
        if instructions == 0 {
            return Err(VimError::NoInstructions);
        }
        let entry = self
            .apps
            .get(app_instance_id)
            .ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        if entry.allocated.cpu == 0 {
            return Err(VimError::ZeroRate);
        }
        let n = instructions as f64;
        let r = entry.allocated.cpu as f64;
        Ok(match self.paradigm {
            Paradigm::Segregation => n / r,
            Paradigm::FairSharing => {
                let total: u64 = self.apps.values().map(|e| e.allocated.cpu).sum();
                n * total as f64 / (self.budget.cpu as f64 * r)
            }
        })
    }
}
