//! Wires a scenario into a runnable discrete-event simulation: transport
//! topology, MEC hosts, orchestrator, UALCMP, UEs, NAT routers and bridges.

mod message;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

pub use message::{HttpKind, HttpMessage, Message, Timer};

use crate::apps::{
    bridge_attach, AppCatalog, Attrs, BridgeEgress, BridgeError, BridgeHandle, BridgeInbound, BridgeMode, DeviceApp,
    IoAction, MecApp, NatError, NatRouter, NatRule, Outbox, UeWarningAlertApp, DEVICE_APP_PORT,
};
use crate::descriptors::{
    AppDescriptor, BridgeModeConfig, LinkSpec, MecAppParams, PackageRef, ScenarioConfig, ScenarioError, UeAppConfig,
    ORCHESTRATOR_NODE, UALCMP_NODE, UPF_NODE,
};
use crate::http::{HttpRequest, HttpResponse};
use crate::kernel::{ClockMode, Delivered, EventHandle, Kernel, KernelError, LinkParams, NodeId, SimTime};
use crate::mechost::{HostError, MecAppEntry, MecHost, VimError, LOCATION_PORT};
use crate::net::{ConnId, Datagram, Endpoint};
use crate::orchestration::{
    AppContext, HostDirectory, HostSnapshot, Mx2Call, Mx2Reply, OrchestrationError, Orchestrator, Ualcmp, UalcmpAction,
};
use crate::runner::{EventLog, EventRecord, RunSummary};
use crate::services::{Gnb, RadioEnvironment};

pub const UALCMP_ADDRESS: Ipv4Addr = Ipv4Addr::new(10, 30, 0, 1);
pub const UALCMP_PORT: u16 = 8080;
const PROBE_PORT: u16 = 9000;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("package `{package}`: {reason}")]
    Package { package: String, reason: String },
    #[error(transparent)]
    Onboard(#[from] OrchestrationError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Nat(#[from] NatError),
    #[error("bridge `{name}`: {error}")]
    Bridge { name: String, error: BridgeError },
    #[error("address {0} assigned twice")]
    AddressConflict(Ipv4Addr),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub mode: ClockMode,
    /// Seeds the start-jitter draws.
    pub seed: u64,
    /// Relative package paths are resolved against this directory.
    pub base_dir: PathBuf,
    pub catalog: AppCatalog,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { mode: ClockMode::Virtual, seed: 0, base_dir: PathBuf::from("."), catalog: AppCatalog::default() }
    }
}

/// Read and parse an application package descriptor.
pub fn load_package(base_dir: &Path, source: &str) -> Result<AppDescriptor, String> {
    let path = base_dir.join(source);
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    AppDescriptor::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn link(spec: LinkSpec) -> LinkParams {
    LinkParams { latency: spec.latency, bitrate: spec.bitrate }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Environment,
    Upf,
    Gnb,
    Ualcmp,
    Orchestrator,
    Host(usize),
    Ue(usize),
    Nat(usize),
    Bridge(usize),
    Probe(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeEvent {
    Datagram(Datagram),
    Request { conn: ConnId, src: Endpoint, request: HttpRequest },
    Response { conn: ConnId, response: HttpResponse },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub t: SimTime,
    pub event: ProbeEvent,
}

struct Probe {
    node: NodeId,
    address: Ipv4Addr,
    inbox: Vec<ProbeRecord>,
}

struct UeApp {
    port: u16,
    app: UeWarningAlertApp,
}

struct UeNode {
    name: String,
    node: NodeId,
    address: Ipv4Addr,
    device: DeviceApp,
    apps: Vec<UeApp>,
}

struct BridgeSlot {
    name: String,
    mode: BridgeMode,
    target: Option<Endpoint>,
    handle: BridgeHandle,
    /// External peer to the sim endpoint that last wrote to it.
    flows: BTreeMap<Endpoint, Endpoint>,
    inbound: BTreeMap<ConnId, u64>,
    outbound: BTreeMap<u64, (ConnId, Endpoint, Endpoint)>,
    next_token: u64,
}

enum Actor {
    MecApp { host: usize, app: String },
    Device(usize),
    UeApp(usize, usize),
}

enum HostEvent {
    Instantiated { host: usize, app: String },
    Terminated { host: usize, entry: MecAppEntry },
}

/// [`HostDirectory`] over the simulated hosts; records what happened so the
/// world can start runtimes and log afterwards.
struct HostsView<'a> {
    hosts: &'a mut [MecHost],
    index: &'a BTreeMap<String, usize>,
    catalog: &'a AppCatalog,
    params: &'a BTreeMap<String, MecAppParams>,
    kernel: &'a mut Kernel<Message>,
    events: Vec<HostEvent>,
}

impl HostDirectory for HostsView<'_> {
    fn snapshot(&self, host: &str) -> Option<HostSnapshot> {
        self.index.get(host).map(|&i| self.hosts[i].snapshot())
    }

    fn instantiate(&mut self, host: &str, descriptor: &AppDescriptor, app_instance_id: &str) -> Result<Endpoint, VimError> {
        let &i = self.index.get(host).ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        let instructions = self.params.get(&descriptor.app_name).map_or(0, |p| p.instructions_per_notification);
        let entry = self.hosts[i].instantiate_app(descriptor, app_instance_id, self.catalog, instructions)?;
        self.events.push(HostEvent::Instantiated { host: i, app: app_instance_id.to_string() });
        Ok(entry.endpoint)
    }

    fn terminate(&mut self, host: &str, app_instance_id: &str) -> Result<(), VimError> {
        let &i = self.index.get(host).ok_or_else(|| VimError::UnknownApp(app_instance_id.to_string()))?;
        let entry = self.hosts[i].terminate_app(app_instance_id, self.kernel)?;
        for (j, other) in self.hosts.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            if let Some(loc) = other.location_mut() {
                for h in loc.unsubscribe_callback(entry.endpoint) {
                    self.kernel.cancel(h);
                }
            }
        }
        self.events.push(HostEvent::Terminated { host: i, entry });
        Ok(())
    }
}

struct World {
    roles: Vec<Role>,
    names: BTreeMap<String, NodeId>,
    owners: BTreeMap<Ipv4Addr, NodeId>,
    ualcmp_node: NodeId,
    orchestrator_node: NodeId,
    radio_link: LinkParams,
    dt: SimTime,
    mobility_steps: u64,
    radio: RadioEnvironment,
    hosts: Vec<MecHost>,
    host_nodes: Vec<NodeId>,
    host_index: BTreeMap<String, usize>,
    catalog: AppCatalog,
    app_params: BTreeMap<String, MecAppParams>,
    orchestrator: Orchestrator,
    ualcmp: Ualcmp,
    ualcmp_endpoint: Endpoint,
    base_dir: PathBuf,
    ues: Vec<UeNode>,
    nats: Vec<(NodeId, NatRouter)>,
    bridges: Vec<BridgeSlot>,
    probes: Vec<Probe>,
    conn_origin: BTreeMap<ConnId, NodeId>,
    next_conn: u64,
    log: EventLog,
}

/// A built scenario ready to run.
pub struct Simulation {
    kernel: Kernel<Message>,
    world: World,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("now", &self.kernel.now())
            .field("hosts", &self.world.hosts.len())
            .field("ues", &self.world.ues.len())
            .field("records", &self.world.log.len())
            .finish()
    }
}

fn add_node(k: &mut Kernel<Message>, roles: &mut Vec<Role>, names: &mut BTreeMap<String, NodeId>, name: &str, role: Role) -> NodeId {
    let id = k.add_node(name);
    roles.push(role);
    names.insert(name.to_string(), id);
    id
}

fn claim(owners: &mut BTreeMap<Ipv4Addr, NodeId>, addr: Ipv4Addr, node: NodeId) -> Result<(), BuildError> {
    match owners.insert(addr, node) {
        Some(_) => Err(BuildError::AddressConflict(addr)),
        None => Ok(()),
    }
}

impl Simulation {
    /// Parse `path` and build it, resolving packages next to the file.
    pub fn load(path: &Path, mut opts: SimOptions) -> Result<Simulation, BuildError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Json(format!("{}: {e}", path.display())))?;
        let cfg = ScenarioConfig::parse(&text)?;
        opts.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Simulation::build(&cfg, opts)
    }

    pub fn build(cfg: &ScenarioConfig, opts: SimOptions) -> Result<Simulation, BuildError> {
        if let Some(d) = cfg.diagnostics().into_iter().next() {
            return Err(d.error.into());
        }
        let mut k = Kernel::new(opts.mode);
        let mut roles = Vec::new();
        let mut names = BTreeMap::new();
        let mut owners = BTreeMap::new();

        let environment_node = add_node(&mut k, &mut roles, &mut names, "environment", Role::Environment);
        let upf = add_node(&mut k, &mut roles, &mut names, UPF_NODE, Role::Upf);
        for g in &cfg.gnbs {
            let n = add_node(&mut k, &mut roles, &mut names, &g.id, Role::Gnb);
            k.transport_mut().connect(n, upf, link(g.backhaul))?;
        }
        let ualcmp_node = add_node(&mut k, &mut roles, &mut names, UALCMP_NODE, Role::Ualcmp);
        k.transport_mut().connect(ualcmp_node, upf, link(cfg.network.ualcmp))?;
        claim(&mut owners, UALCMP_ADDRESS, ualcmp_node)?;
        let orchestrator_node = add_node(&mut k, &mut roles, &mut names, ORCHESTRATOR_NODE, Role::Orchestrator);
        k.transport_mut().connect(orchestrator_node, ualcmp_node, link(cfg.orchestrator.ualcmp_link))?;

        let mut nats = Vec::new();
        for (i, n) in cfg.nat_routers.iter().enumerate() {
            let node = add_node(&mut k, &mut roles, &mut names, &n.name, Role::Nat(i));
            for &a in &n.interfaces {
                claim(&mut owners, a, node)?;
            }
            let rules = n.rules.iter().map(|r| NatRule { external: r.external, internal: r.internal }).collect();
            nats.push((node, NatRouter::new(n.name.clone(), n.interfaces.iter().copied(), rules)?));
        }

        let mut hosts = Vec::new();
        let mut host_nodes = Vec::new();
        let mut host_index = BTreeMap::new();
        for (i, h) in cfg.hosts.iter().enumerate() {
            let node = add_node(&mut k, &mut roles, &mut names, &h.name, Role::Host(i));
            let addr = h.address.unwrap_or(Ipv4Addr::new(10, 20, 0, i as u8 + 1));
            claim(&mut owners, addr, node)?;
            hosts.push(MecHost::new(h.name.clone(), addr, h.budget, h.paradigm, &h.services, h.service_time)?);
            host_nodes.push(node);
            host_index.insert(h.name.clone(), i);
        }
        // Attachments may point at any node declared above, so wire them last.
        let attachments = cfg
            .nat_routers
            .iter()
            .map(|n| (&n.name, &n.attachment))
            .chain(cfg.hosts.iter().map(|h| (&h.name, &h.attachment)));
        for (name, att) in attachments {
            k.transport_mut().connect(names[name], names[&att.node], link(att.link()))?;
        }

        let mut radio = RadioEnvironment::new(
            cfg.gnbs.iter().map(|g| Gnb { id: g.id.clone(), position: g.position }).collect(),
            cfg.cqi_max_distance,
        );
        let ualcmp_endpoint = Endpoint::new(UALCMP_ADDRESS, UALCMP_PORT);
        let mut ues = Vec::new();
        for (i, u) in cfg.ues.iter().enumerate() {
            let node = add_node(&mut k, &mut roles, &mut names, &u.name, Role::Ue(i));
            let address = u.address.unwrap_or(Ipv4Addr::new(10, 10, (i / 250) as u8, (i % 250) as u8 + 1));
            claim(&mut owners, address, node)?;
            let state = radio.add_ue(u.name.clone(), u.initial_position, u.velocity);
            if let Some(cell) = state.serving_cell.clone() {
                k.transport_mut().connect(node, names[&cell], link(cfg.network.radio))?;
            }
            let device_ep = Endpoint::new(address, DEVICE_APP_PORT);
            let apps = u
                .apps
                .iter()
                .map(|a| {
                    let UeAppConfig::WarningAlert { app_name, app_package_source, zone, local_port, .. } = a;
                    let z = cfg.danger_zones.iter().find(|z| &z.name == zone).expect("zones validated");
                    UeApp {
                        port: *local_port,
                        app: UeWarningAlertApp::new(
                            u.name.clone(),
                            device_ep,
                            app_name.clone(),
                            app_package_source.clone(),
                            z.center,
                            z.radius,
                        ),
                    }
                })
                .collect();
            let device = DeviceApp::new(u.name.clone(), ualcmp_endpoint, cfg.device_app.timeout);
            ues.push(UeNode { name: u.name.clone(), node, address, device, apps });
        }

        let mut orchestrator = Orchestrator::new(cfg.managed_hosts(), cfg.orchestrator.processing_delay);
        let mut onboarded = Vec::new();
        for p in &cfg.orchestrator.onboarded_packages {
            let descriptor = match p {
                PackageRef::Path(src) => load_package(&opts.base_dir, src)
                    .map_err(|reason| BuildError::Package { package: src.clone(), reason })?,
                PackageRef::Inline(v) => AppDescriptor::from_json(v)
                    .map_err(|e| BuildError::Package { package: "inline".into(), reason: e.to_string() })?,
            };
            onboarded.push((descriptor.app_d_id.clone(), descriptor.app_name.clone()));
            orchestrator.onboard(descriptor)?;
        }

        let mut bridges = Vec::new();
        for (i, b) in cfg.bridges.iter().enumerate() {
            let node = add_node(&mut k, &mut roles, &mut names, &b.name, Role::Bridge(i));
            for &a in &b.remote_addresses {
                claim(&mut owners, a, node)?;
            }
            k.transport_mut().connect(node, names[&b.attachment.node], link(b.attachment.link()))?;
            let mode = match b.mode {
                BridgeModeConfig::UdpDatagram => BridgeMode::UdpDatagram,
                BridgeModeConfig::HttpClient => BridgeMode::HttpClient,
            };
            let handle = bridge_attach(&k, mode, b.local, node, Message::Bridge)
                .map_err(|error| BuildError::Bridge { name: b.name.clone(), error })?;
            bridges.push(BridgeSlot {
                name: b.name.clone(),
                mode,
                target: b.target,
                handle,
                flows: BTreeMap::new(),
                inbound: BTreeMap::new(),
                outbound: BTreeMap::new(),
                next_token: 1,
            });
        }

        let mut world = World {
            roles,
            names,
            owners,
            ualcmp_node,
            orchestrator_node,
            radio_link: link(cfg.network.radio),
            dt: cfg.mobility_step,
            mobility_steps: 0,
            radio,
            hosts,
            host_nodes,
            host_index,
            catalog: opts.catalog,
            app_params: cfg.mec_app_params.clone(),
            orchestrator,
            ualcmp: Ualcmp::new(),
            ualcmp_endpoint,
            base_dir: opts.base_dir,
            ues,
            nats,
            bridges,
            probes: Vec::new(),
            conn_origin: BTreeMap::new(),
            next_conn: 1,
            log: EventLog::new(),
        };

        for (id, name) in onboarded {
            world.record(0.0, ORCHESTRATOR_NODE, "ONBOARDED", attrs([("appDId", json!(id)), ("appName", json!(name))]));
        }
        for h in 0..world.hosts.len() {
            world.snapshot(0.0, h);
        }

        if !world.ues.is_empty() {
            k.schedule(world.dt, environment_node, Message::Timer(Timer::Mobility))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for (i, u) in cfg.ues.iter().enumerate() {
            for (j, a) in u.apps.iter().enumerate() {
                let UeAppConfig::WarningAlert { start_time, stop_time, start_jitter, .. } = a;
                let jitter = if *start_jitter > 0.0 { rng.gen::<f64>() * start_jitter } else { 0.0 };
                let node = world.ues[i].node;
                k.schedule(start_time + jitter, node, Message::Timer(Timer::UeAppStart { ue: i, app: j }))?;
                if let Some(stop) = stop_time {
                    k.schedule(stop.max(start_time + jitter), node, Message::Timer(Timer::UeAppStop { ue: i, app: j }))?;
                }
            }
        }

        Ok(Simulation { kernel: k, world })
    }

    /// Dispatch events up to `until`. With `None` a virtual run only ends
    /// when the queue drains, which never happens while UEs move.
    pub fn run(&mut self, until: Option<SimTime>) -> u64 {
        let world = &mut self.world;
        self.kernel.run(until, |k, ev| world.dispatch(k, ev))
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn kernel(&self) -> &Kernel<Message> {
        &self.kernel
    }

    pub fn records(&self) -> &[EventRecord] {
        self.world.log.records()
    }

    pub fn to_jsonl(&self) -> String {
        self.world.log.to_jsonl()
    }

    /// Stream the log (including what was recorded so far) to `sink`.
    pub fn stream_log_to(&mut self, sink: Box<dyn Write + Send>) -> std::io::Result<()> {
        self.world.log.stream_to(sink)
    }

    pub fn finish_log(&mut self) -> std::io::Result<()> {
        self.world.log.finish()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary::from_records(self.world.log.records()).expect("the simulator writes well-formed records")
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.world.orchestrator
    }

    pub fn hosts(&self) -> &[MecHost] {
        &self.world.hosts
    }

    pub fn host(&self, name: &str) -> Option<&MecHost> {
        self.world.host_index.get(name).map(|&i| &self.world.hosts[i])
    }

    pub fn radio(&self) -> &RadioEnvironment {
        &self.world.radio
    }

    pub fn ualcmp_endpoint(&self) -> Endpoint {
        self.world.ualcmp_endpoint
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.world.names.get(name).copied()
    }

    /// One-way delay between two named nodes for a message of `bits`.
    pub fn path_delay(&self, from: &str, to: &str, bits: u64) -> Option<SimTime> {
        self.kernel.path_delay(self.node(from)?, self.node(to)?, bits)
    }

    fn ue(&self, name: &str) -> Option<&UeNode> {
        self.world.ues.iter().find(|u| u.name == name)
    }

    pub fn ue_address(&self, name: &str) -> Option<Ipv4Addr> {
        self.ue(name).map(|u| u.address)
    }

    pub fn device_app(&self, ue: &str) -> Option<&DeviceApp> {
        self.ue(ue).map(|u| &u.device)
    }

    pub fn ue_app(&self, ue: &str, index: usize) -> Option<&UeWarningAlertApp> {
        self.ue(ue)?.apps.get(index).map(|a| &a.app)
    }

    pub fn bridge_addr(&self, name: &str) -> Option<SocketAddr> {
        self.world.bridges.iter().find(|b| b.name == name).map(|b| b.handle.local_addr())
    }

    /// Add a passive endpoint owning `address`, linked to node `attach`.
    pub fn add_probe(&mut self, name: &str, address: Ipv4Addr, attach: &str, spec: LinkSpec) -> Result<usize, BuildError> {
        let w = &mut self.world;
        let anchor = *w.names.get(attach).ok_or(KernelError::UnknownNode)?;
        if w.owners.contains_key(&address) {
            return Err(BuildError::AddressConflict(address));
        }
        let idx = w.probes.len();
        let node = add_node(&mut self.kernel, &mut w.roles, &mut w.names, name, Role::Probe(idx));
        self.kernel.transport_mut().connect(node, anchor, link(spec))?;
        w.owners.insert(address, node);
        w.probes.push(Probe { node, address, inbox: Vec::new() });
        Ok(idx)
    }

    pub fn probe_endpoint(&self, probe: usize) -> Endpoint {
        Endpoint::new(self.world.probes[probe].address, PROBE_PORT)
    }

    /// Send an HTTP request from a probe now; the response lands in its inbox.
    pub fn probe_request(&mut self, probe: usize, dst: Endpoint, request: &HttpRequest) -> ConnId {
        let w = &mut self.world;
        let conn = w.conn();
        let p = &w.probes[probe];
        let msg = HttpMessage::request(conn, Endpoint::new(p.address, PROBE_PORT), dst, request);
        let node = p.node;
        w.send_request(&mut self.kernel, node, msg);
        conn
    }

    pub fn probe_datagram(&mut self, probe: usize, src_port: u16, dst: Endpoint, payload: Vec<u8>) {
        let p = &self.world.probes[probe];
        let d = Datagram::new(Endpoint::new(p.address, src_port), dst, payload);
        let node = p.node;
        self.world.route_datagram(&mut self.kernel, node, d);
    }

    pub fn probe_inbox(&self, probe: usize) -> &[ProbeRecord] {
        &self.world.probes[probe].inbox
    }

    pub fn probe_response(&self, probe: usize, conn: ConnId) -> Option<&HttpResponse> {
        self.world.probes[probe].inbox.iter().find_map(|r| match &r.event {
            ProbeEvent::Response { conn: c, response } if *c == conn => Some(response),
            _ => None,
        })
    }

    /// Send a request from a probe and run until its response arrives or
    /// `horizon` seconds pass.
    pub fn probe_exchange(&mut self, probe: usize, dst: Endpoint, request: &HttpRequest, horizon: SimTime) -> Option<HttpResponse> {
        let conn = self.probe_request(probe, dst, request);
        let deadline = self.now() + horizon;
        while self.probe_response(probe, conn).is_none() {
            let Some(ev) = self.kernel.next_event(Some(deadline)) else { break };
            self.world.dispatch(&mut self.kernel, ev);
        }
        self.probe_response(probe, conn).cloned()
    }
}

fn attrs<const N: usize>(items: [(&str, Value); N]) -> Attrs {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn context_attrs(ctx: &AppContext) -> Attrs {
    let mut a = attrs([
        ("contextId", json!(ctx.context_id)),
        ("state", json!(ctx.state.as_str())),
        ("appDId", json!(ctx.app_d_id)),
        ("deviceAppId", json!(ctx.device_app_id)),
    ]);
    if let Some(h) = &ctx.placed_on {
        a.insert("host".into(), json!(h));
    }
    if let Some(ep) = ctx.app_endpoint {
        a.insert("endpoint".into(), json!(ep.to_string()));
    }
    if let Some(r) = &ctx.reason {
        a.insert("reason".into(), json!(r));
    }
    a
}

impl World {
    fn conn(&mut self) -> ConnId {
        let c = ConnId(self.next_conn);
        self.next_conn += 1;
        c
    }

    fn record(&mut self, t: SimTime, node: &str, kind: &str, attrs: Attrs) {
        self.log.push(EventRecord { t, node: node.to_string(), kind: kind.to_string(), attrs });
    }

    fn snapshot(&mut self, t: SimTime, h: usize) {
        let vim = self.hosts[h].vim();
        let a = attrs([
            ("host", json!(vim.host_name())),
            ("budget", json!(vim.budget())),
            ("free", json!(vim.free())),
            ("allocated", json!(vim.allocated_total())),
            ("apps", json!(vim.apps().count())),
        ]);
        let name = vim.host_name().to_string();
        self.record(t, &name, "RESOURCE_SNAPSHOT", a);
    }

    fn node_name(&self, k: &Kernel<Message>, node: NodeId) -> String {
        k.transport().name(node).to_string()
    }

    fn drop_message(&mut self, k: &Kernel<Message>, at: NodeId, dst: Endpoint, reason: &str) {
        let name = self.node_name(k, at);
        self.record(k.now(), &name, "DROP", attrs([("dst", json!(dst.to_string())), ("reason", json!(reason))]));
    }

    fn transmit(&mut self, k: &mut Kernel<Message>, from: NodeId, to: NodeId, msg: Message) -> Option<EventHandle> {
        let bits = msg.bits();
        match k.send_message(from, to, msg, bits) {
            Ok(h) => Some(h),
            Err(e) => {
                let name = self.node_name(k, from);
                let dst = self.node_name(k, to);
                self.record(k.now(), &name, "DROP", attrs([("to", json!(dst)), ("reason", json!(e.to_string()))]));
                None
            }
        }
    }

    fn owner(&self, addr: Ipv4Addr) -> Option<NodeId> {
        self.owners.get(&addr).copied()
    }

    fn route_datagram(&mut self, k: &mut Kernel<Message>, from: NodeId, d: Datagram) {
        let Some(mut to) = self.owner(d.dst.addr) else {
            return self.drop_message(k, from, d.dst, "no route");
        };
        // Traffic from a mapped internal endpoint leaves through its router
        // so the source is rewritten back to the public endpoint.
        if let Some((nat, _)) = self.nats.iter().find(|(n, r)| *n != from && r.has_internal(d.src)) {
            to = *nat;
        }
        self.transmit(k, from, to, Message::Datagram(d));
    }

    fn send_request(&mut self, k: &mut Kernel<Message>, from: NodeId, msg: HttpMessage) -> Option<EventHandle> {
        let Some(to) = self.owner(msg.dst.addr) else {
            self.drop_message(k, from, msg.dst, "no route");
            return None;
        };
        self.conn_origin.insert(msg.conn, from);
        self.transmit(k, from, to, Message::Http(msg))
    }

    fn send_response(&mut self, k: &mut Kernel<Message>, from: NodeId, msg: HttpMessage) {
        let Some(to) = self.conn_origin.remove(&msg.conn).or_else(|| self.owner(msg.dst.addr)) else {
            return self.drop_message(k, from, msg.dst, "no route");
        };
        self.transmit(k, from, to, Message::Http(msg));
    }

    fn respond(&mut self, k: &mut Kernel<Message>, from: NodeId, req: &HttpMessage, response: &HttpResponse) {
        self.send_response(k, from, HttpMessage::response(req.conn, req.dst, req.src, response));
    }

    fn dispatch(&mut self, k: &mut Kernel<Message>, ev: Delivered<Message>) {
        let at = ev.target;
        match ev.payload {
            Message::Datagram(d) => self.on_datagram(k, at, d),
            Message::Http(h) => match h.kind {
                HttpKind::Request => self.on_request(k, at, h),
                HttpKind::Response => self.on_response(k, at, h),
            },
            Message::Mx2 { request_id, call } => self.on_mx2(k, request_id, call),
            Message::Mx2Reply { request_id, reply } => {
                if let Some((conn, client, response)) = self.ualcmp.complete(request_id, reply) {
                    let msg = HttpMessage::response(conn, self.ualcmp_endpoint, client, &response);
                    self.send_response(k, self.ualcmp_node, msg);
                }
            }
            Message::Timer(t) => self.on_timer(k, at, t),
            Message::Bridge(b) => self.on_bridge_inbound(k, at, b),
        }
    }

    fn with_mec_app<R>(
        &mut self,
        k: &mut Kernel<Message>,
        host: usize,
        app: &str,
        f: impl FnOnce(&mut dyn MecApp, &mut Outbox<'_>) -> R,
    ) -> Option<R> {
        let endpoint = self.hosts[host].vim().app(app)?.endpoint;
        let runtime = self.hosts[host].app_mut(app)?;
        let mut out = Outbox::new(k.now(), endpoint, &mut self.next_conn);
        let r = f(runtime.runtime.as_mut(), &mut out);
        let actions = out.into_actions();
        self.apply(k, Actor::MecApp { host, app: app.to_string() }, actions);
        Some(r)
    }

    fn with_device(&mut self, k: &mut Kernel<Message>, ue: usize, f: impl FnOnce(&mut DeviceApp, &mut Outbox<'_>)) {
        let u = &mut self.ues[ue];
        let mut out = Outbox::new(k.now(), Endpoint::new(u.address, DEVICE_APP_PORT), &mut self.next_conn);
        f(&mut u.device, &mut out);
        let actions = out.into_actions();
        self.apply(k, Actor::Device(ue), actions);
    }

    fn with_ue_app(&mut self, k: &mut Kernel<Message>, ue: usize, app: usize, f: impl FnOnce(&mut UeWarningAlertApp, &mut Outbox<'_>)) {
        let u = &mut self.ues[ue];
        let slot = &mut u.apps[app];
        let mut out = Outbox::new(k.now(), Endpoint::new(u.address, slot.port), &mut self.next_conn);
        f(&mut slot.app, &mut out);
        let actions = out.into_actions();
        self.apply(k, Actor::UeApp(ue, app), actions);
    }

    fn apply(&mut self, k: &mut Kernel<Message>, actor: Actor, actions: Vec<IoAction>) {
        let node = match &actor {
            Actor::MecApp { host, .. } => self.host_nodes[*host],
            Actor::Device(u) | Actor::UeApp(u, _) => self.ues[*u].node,
        };
        for action in actions {
            match action {
                IoAction::Send(d) => self.route_datagram(k, node, d),
                IoAction::Request { conn, src, dst, request } => {
                    self.send_request(k, node, HttpMessage::request(conn, src, dst, &request));
                }
                IoAction::Compute { instructions, token } => {
                    let Actor::MecApp { host, app } = &actor else { continue };
                    let (h, id) = (*host, app.clone());
                    let res = self.hosts[h].submit_job(app, instructions, k, node, move |job| {
                        Message::Timer(Timer::Compute { host: h, app: id, job, token })
                    });
                    if let Err(e) = res {
                        let name = self.node_name(k, node);
                        let a = attrs([("app", json!(app)), ("error", json!(e.to_string()))]);
                        self.record(k.now(), &name, "MEC_APP_ERROR", a);
                    }
                }
                IoAction::Timer { delay, token } => {
                    let timer = match &actor {
                        Actor::MecApp { host, app } => Timer::MecApp { host: *host, app: app.clone(), token },
                        Actor::Device(ue) => Timer::DeviceApp { ue: *ue, token },
                        Actor::UeApp(..) => continue,
                    };
                    let _ = k.schedule_in(delay.max(0.0), node, Message::Timer(timer));
                }
                IoAction::Log { kind, mut attrs } => {
                    let tag = match &actor {
                        Actor::MecApp { app, .. } => app.clone(),
                        Actor::Device(_) => "deviceApp".to_string(),
                        Actor::UeApp(_, j) => format!("ueApp-{j}"),
                    };
                    attrs.entry("app".into()).or_insert(json!(tag));
                    let name = self.node_name(k, node);
                    self.record(k.now(), &name, kind, attrs);
                }
            }
        }
    }

    fn on_datagram(&mut self, k: &mut Kernel<Message>, at: NodeId, d: Datagram) {
        match self.roles[at.0] {
            Role::Ue(u) => {
                if d.dst.port == DEVICE_APP_PORT {
                    self.with_device(k, u, |dev, out| dev.on_datagram(&d, out));
                } else if let Some(j) = self.ues[u].apps.iter().position(|a| a.port == d.dst.port) {
                    self.with_ue_app(k, u, j, |app, out| app.on_datagram(&d, out));
                } else {
                    self.drop_message(k, at, d.dst, "port unreachable");
                }
            }
            Role::Host(h) => match self.hosts[h].app_id_by_port(d.dst.port) {
                Some(app) => {
                    self.with_mec_app(k, h, &app, |rt, out| rt.on_datagram(&d, out));
                }
                None => self.drop_message(k, at, d.dst, "port unreachable"),
            },
            Role::Nat(n) => {
                let router = &self.nats[n].1;
                if router.owns(d.dst.addr) {
                    let before = d.dst;
                    match router.forward(d) {
                        Some(fwd) => {
                            let a = attrs([("from", json!(before.to_string())), ("to", json!(fwd.dst.to_string()))]);
                            let name = self.node_name(k, at);
                            self.record(k.now(), &name, "NAT_TRANSLATE", a);
                            self.route_datagram(k, at, fwd);
                        }
                        None => self.drop_message(k, at, before, "no NAT rule"),
                    }
                } else {
                    let out = router.reverse(d);
                    self.route_datagram(k, at, out);
                }
            }
            Role::Bridge(b) => {
                let slot = &mut self.bridges[b];
                if slot.mode != BridgeMode::UdpDatagram {
                    return self.drop_message(k, at, d.dst, "bridge mode mismatch");
                }
                slot.flows.insert(d.dst, d.src);
                slot.handle.send(BridgeEgress::Datagram { to: d.dst.socket_addr(), payload: d.payload });
            }
            Role::Probe(p) => self.probes[p].inbox.push(ProbeRecord { t: k.now(), event: ProbeEvent::Datagram(d) }),
            _ => self.drop_message(k, at, d.dst, "not a datagram endpoint"),
        }
    }

    fn on_request(&mut self, k: &mut Kernel<Message>, at: NodeId, msg: HttpMessage) {
        let now = k.now();
        match self.roles[at.0] {
            Role::Host(h) => {
                let port = msg.dst.port;
                if let Some(base) = self.hosts[h].base_mut(port) {
                    if base.enqueue(msg.conn, msg.src, &msg.bytes, now) {
                        let st = base.service_time();
                        let _ = k.schedule_in(st, at, Message::Timer(Timer::ServiceSlot { host: h, port }));
                    }
                    return;
                }
                let Some(app) = self.hosts[h].app_id_by_port(port) else {
                    return self.respond(k, at, &msg, &HttpResponse::problem(404, format!("nothing listening on {}", msg.dst)));
                };
                let response = match HttpRequest::parse(&msg.bytes) {
                    Ok(req) => self
                        .with_mec_app(k, h, &app, |rt, out| rt.on_request(msg.src, &req, out))
                        .unwrap_or_else(|| HttpResponse::problem(404, "application gone")),
                    Err(_) => HttpResponse::problem(400, "malformed request"),
                };
                self.respond(k, at, &msg, &response);
            }
            Role::Ualcmp => match self.ualcmp.handle(msg.conn, msg.src, &msg.bytes, &self.orchestrator) {
                UalcmpAction::Respond(r) => self.respond(k, at, &msg, &r),
                UalcmpAction::Forward { request_id, call } => {
                    let to = self.orchestrator_node;
                    self.transmit(k, at, to, Message::Mx2 { request_id, call });
                }
            },
            Role::Bridge(b) => {
                let slot = &mut self.bridges[b];
                if slot.mode != BridgeMode::HttpClient {
                    return self.respond(k, at, &msg, &HttpResponse::problem(502, "bridge mode mismatch"));
                }
                let token = slot.next_token;
                slot.next_token += 1;
                slot.outbound.insert(token, (msg.conn, msg.src, msg.dst));
                slot.handle.send(BridgeEgress::HttpRequest { token, to: msg.dst.socket_addr(), bytes: msg.bytes });
            }
            Role::Probe(p) => {
                let event = match HttpRequest::parse(&msg.bytes) {
                    Ok(request) => ProbeEvent::Request { conn: msg.conn, src: msg.src, request },
                    Err(_) => return self.respond(k, at, &msg, &HttpResponse::problem(400, "malformed request")),
                };
                self.probes[p].inbox.push(ProbeRecord { t: now, event });
                self.respond(k, at, &msg, &HttpResponse::empty(204));
            }
            _ => self.respond(k, at, &msg, &HttpResponse::problem(404, format!("nothing listening on {}", msg.dst))),
        }
    }

    fn on_response(&mut self, k: &mut Kernel<Message>, at: NodeId, msg: HttpMessage) {
        let Ok(response) = HttpResponse::parse(&msg.bytes) else {
            return self.drop_message(k, at, msg.dst, "malformed response");
        };
        match self.roles[at.0] {
            Role::Ue(u) if msg.dst.port == DEVICE_APP_PORT => {
                self.with_device(k, u, |dev, out| dev.on_response(msg.conn, &response, out));
            }
            Role::Host(h) => {
                if let Some(app) = self.hosts[h].app_id_by_port(msg.dst.port) {
                    self.with_mec_app(k, h, &app, |rt, out| rt.on_response(msg.conn, &response, out));
                }
            }
            Role::Bridge(b) => {
                if let Some(token) = self.bridges[b].inbound.remove(&msg.conn) {
                    self.bridges[b].handle.send(BridgeEgress::HttpResponse { token, bytes: msg.bytes });
                }
            }
            Role::Probe(p) => {
                self.probes[p].inbox.push(ProbeRecord { t: k.now(), event: ProbeEvent::Response { conn: msg.conn, response } });
            }
            _ => {}
        }
    }

    fn on_mx2(&mut self, k: &mut Kernel<Message>, request_id: u64, call: Mx2Call) {
        let now = k.now();
        let node = self.orchestrator_node;
        let delay = self.orchestrator.processing_delay();
        match call {
            Mx2Call::Create(req) => {
                let base = self.base_dir.clone();
                let mut view = HostsView {
                    hosts: &mut self.hosts,
                    index: &self.host_index,
                    catalog: &self.catalog,
                    params: &self.app_params,
                    kernel: k,
                    events: Vec::new(),
                };
                let result = self
                    .orchestrator
                    .resolve(&req, |src| load_package(&base, src))
                    .and_then(|id| self.orchestrator.begin_create(&req, &id, now, &mut view));
                let events = std::mem::take(&mut view.events);
                match result {
                    Ok(context_id) => {
                        let ctx = self.orchestrator.context(&context_id).expect("just created").clone();
                        let mut requested = context_attrs(&ctx);
                        requested.insert("state".into(), json!("REQUESTED"));
                        self.record(now, ORCHESTRATOR_NODE, "CONTEXT_STATE", requested);
                        self.record(now, ORCHESTRATOR_NODE, "CONTEXT_STATE", context_attrs(&ctx));
                        self.host_events(k, events);
                        let timer = Timer::CreateDone { request_id, context_id };
                        let _ = k.schedule_in(delay, node, Message::Timer(timer));
                    }
                    Err(e) => {
                        self.record(now, ORCHESTRATOR_NODE, "MX2_ERROR", attrs([("error", json!(e.to_string()))]));
                        let to = self.ualcmp_node;
                        self.transmit(k, node, to, Message::Mx2Reply { request_id, reply: Mx2Reply::Created(Err(e)) });
                    }
                }
            }
            Mx2Call::Delete(context_id) => {
                let mut view = HostsView {
                    hosts: &mut self.hosts,
                    index: &self.host_index,
                    catalog: &self.catalog,
                    params: &self.app_params,
                    kernel: k,
                    events: Vec::new(),
                };
                let result = self.orchestrator.begin_delete(&context_id, now, &mut view).cloned();
                let events = std::mem::take(&mut view.events);
                match result {
                    Ok(ctx) => {
                        self.record(now, ORCHESTRATOR_NODE, "CONTEXT_STATE", context_attrs(&ctx));
                        self.host_events(k, events);
                        let timer = Timer::DeleteDone { request_id, context_id };
                        let _ = k.schedule_in(delay, node, Message::Timer(timer));
                    }
                    Err(e) => {
                        self.record(now, ORCHESTRATOR_NODE, "MX2_ERROR", attrs([("error", json!(e.to_string()))]));
                        let to = self.ualcmp_node;
                        self.transmit(k, node, to, Message::Mx2Reply { request_id, reply: Mx2Reply::Deleted(Err(e)) });
                    }
                }
            }
        }
    }

    fn host_events(&mut self, k: &mut Kernel<Message>, events: Vec<HostEvent>) {
        let now = k.now();
        for e in events {
            match e {
                HostEvent::Instantiated { host, app } => {
                    let entry = self.hosts[host].vim().app(&app).expect("instantiated").clone();
                    let name = self.hosts[host].name().to_string();
                    let a = attrs([
                        ("appInstanceId", json!(app)),
                        ("appName", json!(entry.app_name)),
                        ("endpoint", json!(entry.endpoint.to_string())),
                    ]);
                    self.record(now, &name, "APP_INSTANTIATED", a);
                    self.snapshot(now, host);
                    self.with_mec_app(k, host, &app, |rt, out| rt.start(out));
                }
                HostEvent::Terminated { host, entry } => {
                    let name = self.hosts[host].name().to_string();
                    self.record(now, &name, "APP_TERMINATED", attrs([("appInstanceId", json!(entry.app_instance_id))]));
                    self.snapshot(now, host);
                }
            }
        }
    }

    fn on_timer(&mut self, k: &mut Kernel<Message>, at: NodeId, timer: Timer) {
        let now = k.now();
        match timer {
            Timer::Mobility => self.mobility(k, at),
            Timer::ServiceSlot { host, port } => self.service_slot(k, host, port),
            Timer::CreateDone { request_id, context_id } => {
                let reply = self.orchestrator.complete_create(&context_id, now).cloned();
                if let Ok(ctx) = &reply {
                    self.record(now, ORCHESTRATOR_NODE, "CONTEXT_STATE", context_attrs(ctx));
                }
                let to = self.ualcmp_node;
                self.transmit(k, at, to, Message::Mx2Reply { request_id, reply: Mx2Reply::Created(reply) });
            }
            Timer::DeleteDone { request_id, context_id } => {
                let reply = self.orchestrator.complete_delete(&context_id, now).cloned();
                if let Ok(ctx) = &reply {
                    self.record(now, ORCHESTRATOR_NODE, "CONTEXT_STATE", context_attrs(ctx));
                }
                let to = self.ualcmp_node;
                self.transmit(k, at, to, Message::Mx2Reply { request_id, reply: Mx2Reply::Deleted(reply) });
            }
            Timer::Compute { host, app, job, token } => {
                if self.hosts[host].finish_job(&app, job) {
                    self.with_mec_app(k, host, &app, |rt, out| rt.on_compute_done(token, out));
                }
            }
            Timer::MecApp { host, app, token } => {
                self.with_mec_app(k, host, &app, |rt, out| rt.on_timer(token, out));
            }
            Timer::DeviceApp { ue, token } => self.with_device(k, ue, |dev, out| dev.on_timer(token, out)),
            Timer::UeAppStart { ue, app } => self.with_ue_app(k, ue, app, |a, out| a.start(out)),
            Timer::UeAppStop { ue, app } => self.with_ue_app(k, ue, app, |a, out| a.stop(out)),
        }
    }

    fn mobility(&mut self, k: &mut Kernel<Message>, at: NodeId) {
        let now = k.now();
        for change in self.radio.step(self.dt) {
            let Some(u) = self.ues.iter().position(|u| u.name == change.ue_id) else { continue };
            let node = self.ues[u].node;
            if let Some(old) = change.from.as_ref().and_then(|c| self.names.get(c)) {
                k.transport_mut().disconnect(node, *old);
            }
            if let Some(new) = change.to.as_ref().and_then(|c| self.names.get(c)) {
                let _ = k.transport_mut().connect(node, *new, self.radio_link);
            }
            let a = attrs([("ueId", json!(change.ue_id)), ("from", json!(change.from)), ("to", json!(change.to))]);
            let name = change.ue_id.clone();
            self.record(now, &name, "CELL_CHANGE", a);
        }
        for h in 0..self.hosts.len() {
            let Some(loc) = self.hosts[h].location_mut() else { continue };
            let notes = loc.evaluate(&self.radio, now);
            let src = Endpoint::new(self.hosts[h].address(), LOCATION_PORT);
            let host_node = self.host_nodes[h];
            for (callback, note) in notes {
                let conn = self.conn();
                let request = HttpRequest::post_json(callback.path.clone(), &note.to_json());
                let a = attrs([
                    ("subscriptionId", json!(note.subscription_id)),
                    ("ueId", json!(note.ue_id)),
                    ("event", json!(note.event)),
                    ("x", json!(note.position.x)),
                    ("y", json!(note.position.y)),
                    ("callback", json!(callback.url())),
                ]);
                let name = self.hosts[h].name().to_string();
                self.record(now, &name, "LOC_NOTIFICATION", a);
                if let Some(handle) = self.send_request(k, host_node, HttpMessage::request(conn, src, callback.endpoint, &request)) {
                    if let Some(loc) = self.hosts[h].location_mut() {
                        loc.track_inflight(&note.subscription_id, handle, |h| k.is_pending(h));
                    }
                }
            }
        }
        // Absolute step times keep the sampling grid free of drift.
        self.mobility_steps += 1;
        let next = (self.mobility_steps + 1) as f64 * self.dt;
        let _ = k.schedule(next, at, Message::Timer(Timer::Mobility));
    }

    fn service_slot(&mut self, k: &mut Kernel<Message>, h: usize, port: u16) {
        let now = k.now();
        let Some(base) = self.hosts[h].base_mut(port) else { return };
        let Some(item) = base.pop() else {
            base.finish();
            return;
        };
        let response = match &item.request {
            Ok(req) => self.hosts[h].serve(port, req, &self.radio, now),
            Err(r) => r.clone(),
        };
        if let Some(loc) = self.hosts[h].location_mut() {
            for handle in loc.take_orphaned() {
                k.cancel(handle);
            }
        }
        let src = Endpoint::new(self.hosts[h].address(), port);
        let node = self.host_nodes[h];
        self.send_response(k, node, HttpMessage::response(item.conn, src, item.client, &response));
        let base = self.hosts[h].base_mut(port).expect("service exists");
        if base.finish() {
            let st = base.service_time();
            let _ = k.schedule_in(st, node, Message::Timer(Timer::ServiceSlot { host: h, port }));
        }
    }

    fn on_bridge_inbound(&mut self, k: &mut Kernel<Message>, at: NodeId, inbound: BridgeInbound) {
        let Role::Bridge(b) = self.roles[at.0] else { return };
        match inbound {
            BridgeInbound::Datagram { from, payload } => {
                let Some(src) = Endpoint::from_socket_addr(from) else { return };
                let slot = &self.bridges[b];
                let Some(dst) = slot.flows.get(&src).copied().or(slot.target) else {
                    return self.drop_message(k, at, src, "no flow for inbound datagram");
                };
                self.route_datagram(k, at, Datagram::new(src, dst, payload));
            }
            BridgeInbound::HttpRequest { token, from, bytes } => {
                let (Some(src), Some(dst)) = (Endpoint::from_socket_addr(from), self.bridges[b].target) else {
                    let bytes = HttpResponse::problem(502, "bridge has no target").to_bytes();
                    self.bridges[b].handle.send(BridgeEgress::HttpResponse { token, bytes });
                    return;
                };
                let conn = self.conn();
                self.bridges[b].inbound.insert(conn, token);
                self.send_request(k, at, HttpMessage { conn, src, dst, kind: HttpKind::Request, bytes });
            }
            BridgeInbound::HttpResponse { token, bytes } => {
                if let Some((conn, client, server)) = self.bridges[b].outbound.remove(&token) {
                    self.send_response(k, at, HttpMessage { conn, src: server, dst: client, kind: HttpKind::Response, bytes });
                }
            }
            BridgeInbound::HttpFailed { token, error } => {
                if let Some((conn, client, server)) = self.bridges[b].outbound.remove(&token) {
                    let r = HttpResponse::problem(502, error);
                    self.send_response(k, at, HttpMessage::response(conn, server, client, &r));
                }
            }
        }
    }
}
