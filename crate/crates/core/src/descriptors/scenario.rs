//! JSON scenario schema.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{Ipv4Addr, SocketAddr};

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::resources::{parse_quantity, ResourceVector};
use super::ScenarioError;
use crate::mechost::Paradigm;
use crate::net::Endpoint;
use crate::services::Point;

pub const UPF_NODE: &str = "upf";
pub const UALCMP_NODE: &str = "ualcmp";
pub const ORCHESTRATOR_NODE: &str = "orchestrator";

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Mobility sampling period in seconds.
    #[serde(default = "default_mobility_step")]
    pub mobility_step: f64,
    /// Distance at which the synthetic CQI reaches zero.
    #[serde(default = "default_cqi_distance")]
    pub cqi_max_distance: f64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub gnbs: Vec<GnbConfig>,
    #[serde(default)]
    pub hosts: Vec<MecHostConfig>,
    #[serde(default)]
    pub orchestrator: OrchestratorConfig,
    #[serde(default)]
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub danger_zones: Vec<DangerZone>,
    /// Per-application tuning keyed by appName.
    #[serde(default)]
    pub mec_app_params: BTreeMap<String, MecAppParams>,
    #[serde(default)]
    pub device_app: DeviceAppConfig,
    #[serde(default)]
    pub nat_routers: Vec<NatRouterConfig>,
    #[serde(default)]
    pub bridges: Vec<BridgeConfig>,
}

fn default_mobility_step() -> f64 {
    0.1
}

fn default_cqi_distance() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkSpec {
    #[serde(default)]
    pub latency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitrate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Attachment {
    /// Transport node this entity hangs off (`upf`, a gNB id, a NAT router...).
    #[serde(default = "default_attach_node")]
    pub node: String,
    #[serde(default)]
    pub latency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitrate: Option<f64>,
}

fn default_attach_node() -> String {
    UPF_NODE.to_string()
}

impl Default for Attachment {
    fn default() -> Self {
        Attachment { node: default_attach_node(), latency: 0.0, bitrate: None }
    }
}

impl Attachment {
    pub fn link(&self) -> LinkSpec {
        LinkSpec { latency: self.latency, bitrate: self.bitrate }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkConfig {
    /// UE to serving gNB.
    #[serde(default)]
    pub radio: LinkSpec,
    /// UALCMP to the UPF.
    #[serde(default)]
    pub ualcmp: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GnbConfig {
    pub id: String,
    pub position: Point,
    /// gNB to UPF.
    #[serde(default)]
    pub backhaul: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MecHostConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<Ipv4Addr>,
    #[serde(deserialize_with = "resource_vector")]
    pub budget: ResourceVector,
    #[serde(default)]
    pub services: Vec<String>,
    #[serde(default)]
    pub paradigm: Paradigm,
    #[serde(default)]
    pub attachment: Attachment,
    /// Per-request processing time of every REST service on the platform.
    #[serde(default)]
    pub service_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OrchestratorConfig {
    /// Hosts managed by the orchestrator, in preference order. Accepts a
    /// JSON list or a space-separated string; defaults to every host.
    #[serde(default, deserialize_with = "host_list")]
    pub mec_hosts_list: Option<Vec<String>>,
    #[serde(default)]
    pub onboarded_packages: Vec<PackageRef>,
    #[serde(default)]
    pub processing_delay: f64,
    /// Orchestrator to UALCMP.
    #[serde(default)]
    pub ualcmp_link: LinkSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PackageRef {
    Path(String),
    Inline(Value),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UeConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<Ipv4Addr>,
    pub initial_position: Point,
    #[serde(default)]
    pub velocity: Point,
    #[serde(default)]
    pub apps: Vec<UeAppConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum UeAppConfig {
    #[serde(rename_all = "camelCase")]
    WarningAlert {
        start_time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop_time: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        app_name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        app_package_source: Option<String>,
        /// Name of a danger zone.
        zone: String,
        /// Uniform random delay in [0, startJitter) added to startTime.
        #[serde(default)]
        start_jitter: f64,
        #[serde(default = "default_ue_app_port")]
        local_port: u16,
    },
}

fn default_ue_app_port() -> u16 {
    4000
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DangerZone {
    pub name: String,
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MecAppParams {
    /// Instructions executed per location notification before replying.
    #[serde(default)]
    pub instructions_per_notification: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceAppConfig {
    /// Mx2 request timeout in simulated seconds.
    #[serde(default = "default_device_timeout")]
    pub timeout: f64,
}

fn default_device_timeout() -> f64 {
    5.0
}

impl Default for DeviceAppConfig {
    fn default() -> Self {
        DeviceAppConfig { timeout: default_device_timeout() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NatRouterConfig {
    pub name: String,
    /// Addresses owned by the router (destinations UEs send to).
    pub interfaces: Vec<Ipv4Addr>,
    #[serde(default)]
    pub attachment: Attachment,
    #[serde(default)]
    pub rules: Vec<NatRuleConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NatRuleConfig {
    pub external: Endpoint,
    pub internal: Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum BridgeModeConfig {
    UdpDatagram,
    HttpClient,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BridgeConfig {
    pub name: String,
    pub mode: BridgeModeConfig,
    /// Real socket address to bind.
    pub local: SocketAddr,
    /// Real-world addresses reached through this bridge.
    #[serde(default)]
    pub remote_addresses: Vec<Ipv4Addr>,
    /// httpClient mode: simulated endpoint inbound requests are sent to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Endpoint>,
    #[serde(default)]
    pub attachment: Attachment,
}

fn resource_vector<'de, D: Deserializer<'de>>(d: D) -> Result<ResourceVector, D::Error> {
    use serde::de::Error;
    let v = Value::deserialize(d)?;
    let obj = v.as_object().ok_or_else(|| D::Error::custom("budget must be an object"))?;
    let get = |keys: &[&str]| -> Result<u64, D::Error> {
        let (k, val) = keys
            .iter()
            .find_map(|k| obj.get(*k).map(|v| (*k, v)))
            .ok_or_else(|| D::Error::custom(format!("budget is missing `{}`", keys[0])))?;
        parse_quantity(val).ok_or_else(|| D::Error::custom(format!("budget `{k}` must be a non-negative quantity")))
    };
    Ok(ResourceVector {
        ram: get(&["ram", "virtualMemory"])?,
        disk: get(&["disk", "virtualDisk", "storage"])?,
        cpu: get(&["cpu", "virtualCpu"])?,
    })
}

fn host_list<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<String>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Form {
        List(Vec<String>),
        Spaced(String),
    }
    Ok(match Option::<Form>::deserialize(d)? {
        None => None,
        Some(Form::List(v)) => Some(v),
        Some(Form::Spaced(s)) => Some(s.split_whitespace().map(str::to_string).collect()),
    })
}

/// One validation finding; `location` is a JSON-pointer-like path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
    #[serde(skip)]
    pub error: ScenarioError,
}

impl Diagnostic {
    fn new(location: impl Into<String>, error: ScenarioError) -> Self {
        Diagnostic { location: location.into(), message: error.to_string(), error }
    }

    fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        let location = location.into();
        Self::new(location.clone(), ScenarioError::Invalid { location, message: message.into() })
    }
}

impl ScenarioConfig {
    /// Parse and validate; the first problem found is returned as the error.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let cfg = Self::parse_unchecked(text)?;
        match cfg.diagnostics().into_iter().next() {
            Some(d) => Err(d.error),
            None => Ok(cfg),
        }
    }

    pub fn parse_unchecked(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))
    }

    /// Hosts managed by the orchestrator, in preference order.
    pub fn managed_hosts(&self) -> Vec<String> {
        match &self.orchestrator.mec_hosts_list {
            Some(list) => list.clone(),
            None => self.hosts.iter().map(|h| h.name.clone()).collect(),
        }
    }

    /// Whether the scenario needs the realtime clock.
    pub fn declares_external(&self) -> bool {
        !self.bridges.is_empty()
            || self.orchestrator.onboarded_packages.iter().any(|p| match p {
                PackageRef::Inline(v) => v.get("emulatedMecApplication").is_some_and(|e| !e.is_null()),
                PackageRef::Path(_) => false,
            })
    }

    /// Structural checks that do not touch the filesystem.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();

        let mut names: BTreeSet<&str> = [UPF_NODE, UALCMP_NODE, ORCHESTRATOR_NODE].into_iter().collect();
        let node_names = self
            .gnbs
            .iter()
            .enumerate()
            .map(|(i, g)| (g.id.as_str(), format!("/gnbs/{i}/id")))
            .chain(self.hosts.iter().enumerate().map(|(i, h)| (h.name.as_str(), format!("/hosts/{i}/name"))))
            .chain(self.ues.iter().enumerate().map(|(i, u)| (u.name.as_str(), format!("/ues/{i}/name"))))
            .chain(self.nat_routers.iter().enumerate().map(|(i, n)| (n.name.as_str(), format!("/natRouters/{i}/name"))))
            .chain(self.bridges.iter().enumerate().map(|(i, b)| (b.name.as_str(), format!("/bridges/{i}/name"))));
        for (name, location) in node_names {
            if !names.insert(name) {
                out.push(Diagnostic::new(location, ScenarioError::DuplicateName(name.to_string())));
            }
        }

        let mut zones = BTreeSet::new();
        for (i, z) in self.danger_zones.iter().enumerate() {
            if !zones.insert(z.name.as_str()) {
                out.push(Diagnostic::new(format!("/dangerZones/{i}/name"), ScenarioError::DuplicateName(z.name.clone())));
            }
            if !(z.radius > 0.0) {
                out.push(Diagnostic::invalid(format!("/dangerZones/{i}/radius"), "radius must be positive"));
            }
        }

        let host_names: BTreeSet<&str> = self.hosts.iter().map(|h| h.name.as_str()).collect();
        if let Some(list) = &self.orchestrator.mec_hosts_list {
            let mut seen = BTreeSet::new();
            for (i, name) in list.iter().enumerate() {
                if !host_names.contains(name.as_str()) {
                    out.push(Diagnostic::new(format!("/orchestrator/mecHostsList/{i}"), ScenarioError::UnknownHost(name.clone())));
                } else if !seen.insert(name) {
                    out.push(Diagnostic::new(format!("/orchestrator/mecHostsList/{i}"), ScenarioError::DuplicateName(name.clone())));
                }
            }
        }

        if !(self.mobility_step > 0.0) {
            out.push(Diagnostic::invalid("/mobilityStep", "mobility step must be positive"));
        }
        if !(self.cqi_max_distance > 0.0) {
            out.push(Diagnostic::invalid("/cqiMaxDistance", "CQI distance must be positive"));
        }
        if !(self.orchestrator.processing_delay >= 0.0) {
            out.push(Diagnostic::invalid("/orchestrator/processingDelay", "processing delay must be non-negative"));
        }
        if !(self.device_app.timeout > 0.0) {
            out.push(Diagnostic::invalid("/deviceApp/timeout", "timeout must be positive"));
        }

        let check_link = |link: LinkSpec, location: String, out: &mut Vec<Diagnostic>| {
            if !(link.latency >= 0.0) {
                out.push(Diagnostic::invalid(format!("{location}/latency"), "latency must be non-negative"));
            }
            if link.bitrate.is_some_and(|r| !(r > 0.0)) {
                out.push(Diagnostic::invalid(format!("{location}/bitrate"), "bitrate must be positive"));
            }
        };
        check_link(self.network.radio, "/network/radio".into(), &mut out);
        check_link(self.network.ualcmp, "/network/ualcmp".into(), &mut out);
        check_link(self.orchestrator.ualcmp_link, "/orchestrator/ualcmpLink".into(), &mut out);
        for (i, g) in self.gnbs.iter().enumerate() {
            check_link(g.backhaul, format!("/gnbs/{i}/backhaul"), &mut out);
        }

        // Attachment targets must be declared before the attaching entity
        // can be wired; gNBs, the UPF and NAT routers are valid anchors.
        let mut anchors: BTreeSet<&str> = [UPF_NODE].into_iter().collect();
        anchors.extend(self.gnbs.iter().map(|g| g.id.as_str()));
        anchors.extend(self.nat_routers.iter().map(|n| n.name.as_str()));
        let attachments = self
            .hosts
            .iter()
            .enumerate()
            .map(|(i, h)| (format!("/hosts/{i}/attachment"), &h.attachment))
            .chain(self.nat_routers.iter().enumerate().map(|(i, n)| (format!("/natRouters/{i}/attachment"), &n.attachment)))
            .chain(self.bridges.iter().enumerate().map(|(i, b)| (format!("/bridges/{i}/attachment"), &b.attachment)));
        for (location, att) in attachments {
            if !anchors.contains(att.node.as_str()) && !host_names.contains(att.node.as_str()) {
                out.push(Diagnostic::invalid(format!("{location}/node"), format!("unknown attachment node `{}`", att.node)));
            }
            check_link(att.link(), location, &mut out);
        }
        for (i, n) in self.nat_routers.iter().enumerate() {
            if n.attachment.node == n.name {
                out.push(Diagnostic::invalid(format!("/natRouters/{i}/attachment/node"), "router cannot attach to itself"));
            }
        }

        for (i, h) in self.hosts.iter().enumerate() {
            if !(h.service_time >= 0.0) {
                out.push(Diagnostic::invalid(format!("/hosts/{i}/serviceTime"), "service time must be non-negative"));
            }
            let mut svcs = BTreeSet::new();
            for (j, s) in h.services.iter().enumerate() {
                if !svcs.insert(s) {
                    out.push(Diagnostic::new(format!("/hosts/{i}/services/{j}"), ScenarioError::DuplicateName(s.clone())));
                } else if !crate::services::KNOWN_SERVICES.contains(&s.as_str()) {
                    out.push(Diagnostic::invalid(format!("/hosts/{i}/services/{j}"), format!("unknown service `{s}`")));
                }
            }
        }

        if !self.ues.is_empty() && self.gnbs.is_empty() {
            out.push(Diagnostic::invalid("/gnbs", "scenario with UEs needs at least one gNB"));
        }
        for (i, ue) in self.ues.iter().enumerate() {
            for (j, app) in ue.apps.iter().enumerate() {
                let UeAppConfig::WarningAlert { start_time, stop_time, app_name, app_package_source, zone, start_jitter, .. } = app;
                let loc = format!("/ues/{i}/apps/{j}");
                if !(*start_time >= 0.0) {
                    out.push(Diagnostic::invalid(format!("{loc}/startTime"), "start time must be non-negative"));
                }
                if let Some(stop) = stop_time {
                    if !(*stop >= *start_time) {
                        out.push(Diagnostic::invalid(format!("{loc}/stopTime"), "stop time precedes start time"));
                    }
                }
                if !(*start_jitter >= 0.0) {
                    out.push(Diagnostic::invalid(format!("{loc}/startJitter"), "jitter must be non-negative"));
                }
                if app_name.is_none() && app_package_source.is_none() {
                    out.push(Diagnostic::invalid(loc.clone(), "either appName or appPackageSource is required"));
                }
                if !zones.contains(zone.as_str()) {
                    out.push(Diagnostic::invalid(format!("{loc}/zone"), format!("unknown danger zone `{zone}`")));
                }
            }
        }

        let mut externals = BTreeSet::new();
        for (i, n) in self.nat_routers.iter().enumerate() {
            for (j, r) in n.rules.iter().enumerate() {
                if !externals.insert(r.external) {
                    out.push(Diagnostic::new(format!("/natRouters/{i}/rules/{j}/external"), ScenarioError::DuplicateName(r.external.to_string())));
                }
                if !n.interfaces.contains(&r.external.addr) {
                    out.push(Diagnostic::invalid(
                        format!("/natRouters/{i}/rules/{j}/external"),
                        "external address is not an interface of this router",
                    ));
                }
            }
        }
        for (i, b) in self.bridges.iter().enumerate() {
            if b.mode == BridgeModeConfig::HttpClient && b.target.is_none() {
                out.push(Diagnostic::invalid(format!("/bridges/{i}/target"), "httpClient bridges need a target endpoint"));
            }
        }

        let mut addrs = BTreeSet::new();
        let explicit = self
            .hosts
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.address.map(|a| (format!("/hosts/{i}/address"), a)))
            .chain(self.ues.iter().enumerate().filter_map(|(i, u)| u.address.map(|a| (format!("/ues/{i}/address"), a))))
            .chain(self.nat_routers.iter().enumerate().flat_map(|(i, n)| {
                n.interfaces.iter().enumerate().map(move |(j, a)| (format!("/natRouters/{i}/interfaces/{j}"), *a))
            }))
            .chain(self.bridges.iter().enumerate().flat_map(|(i, b)| {
                b.remote_addresses.iter().enumerate().map(move |(j, a)| (format!("/bridges/{i}/remoteAddresses/{j}"), *a))
            }));
        for (location, a) in explicit {
            if !addrs.insert(a) {
                out.push(Diagnostic::new(location, ScenarioError::DuplicateName(a.to_string())));
            }
        }

        out
    }
}
