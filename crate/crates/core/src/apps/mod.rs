//! Application stack: the Device app, the WarningAlert app pair, NAT and
//! the external-app bridge.

pub mod bridge;
mod device_app;
mod echo;
mod nat;
mod warning_alert;
pub mod wire;

use std::collections::BTreeMap;

use serde_json::Value;

pub use bridge::{bridge_attach, BridgeEgress, BridgeError, BridgeHandle, BridgeInbound, BridgeMode};
pub use device_app::{DeviceApp, DEVICE_APP_PORT};
pub use echo::EchoMecApp;
pub use nat::{nat_translate, NatError, NatRouter, NatRule};
pub use warning_alert::{MecWarningAlertApp, ReceivedAlert, UeAppPhase, UeWarningAlertApp, NOTIFY_PATH};
pub use wire::{DeviceAppMessage, WarningMessage, WireError};

use crate::http::{HttpRequest, HttpResponse};
use crate::kernel::SimTime;
use crate::net::{ConnId, Datagram, Endpoint};

pub type Attrs = BTreeMap<String, Value>;

/// Side effect requested by an application handler.
#[derive(Debug, Clone, PartialEq)]
pub enum IoAction {
    Send(Datagram),
    Request { conn: ConnId, src: Endpoint, dst: Endpoint, request: HttpRequest },
    Compute { instructions: u64, token: u64 },
    Timer { delay: SimTime, token: u64 },
    Log { kind: &'static str, attrs: Attrs },
}

/// Collects the actions of one handler invocation.
#[derive(Debug)]
pub struct Outbox<'a> {
    now: SimTime,
    local: Endpoint,
    next_conn: &'a mut u64,
    actions: Vec<IoAction>,
}

impl<'a> Outbox<'a> {
    pub fn new(now: SimTime, local: Endpoint, next_conn: &'a mut u64) -> Self {
        Outbox { now, local, next_conn, actions: Vec::new() }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn local(&self) -> Endpoint {
        self.local
    }

    pub fn send(&mut self, dst: Endpoint, payload: Vec<u8>) {
        self.actions.push(IoAction::Send(Datagram::new(self.local, dst, payload)));
    }

    pub fn request(&mut self, dst: Endpoint, request: HttpRequest) -> ConnId {
        let conn = ConnId(*self.next_conn);
        *self.next_conn += 1;
        self.actions.push(IoAction::Request { conn, src: self.local, dst, request });
        conn
    }

    pub fn compute(&mut self, instructions: u64, token: u64) {
        self.actions.push(IoAction::Compute { instructions, token });
    }

    pub fn timer(&mut self, delay: SimTime, token: u64) {
        self.actions.push(IoAction::Timer { delay, token });
    }

    pub fn log(&mut self, kind: &'static str, attrs: impl IntoIterator<Item = (&'static str, Value)>) {
        let attrs = attrs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        self.actions.push(IoAction::Log { kind, attrs });
    }

    pub fn actions(&self) -> &[IoAction] {
        &self.actions
    }

    pub fn into_actions(self) -> Vec<IoAction> {
        self.actions
    }
}

/// Configuration handed to a MEC app when it is instantiated.
#[derive(Debug, Clone, PartialEq)]
pub struct MecAppEnv {
    pub app_instance_id: String,
    pub app_name: String,
    pub endpoint: Endpoint,
    pub registry: Endpoint,
    pub instructions_per_notification: u64,
}

/// Behaviour of a simulated MEC app instance.
pub trait MecApp: Send {
    fn start(&mut self, _out: &mut Outbox<'_>) {}
    fn on_datagram(&mut self, _datagram: &Datagram, _out: &mut Outbox<'_>) {}
    fn on_request(&mut self, _client: Endpoint, request: &HttpRequest, _out: &mut Outbox<'_>) -> HttpResponse {
        HttpResponse::problem(404, format!("no resource at {}", request.path()))
    }
    fn on_response(&mut self, _conn: ConnId, _response: &HttpResponse, _out: &mut Outbox<'_>) {}
    fn on_compute_done(&mut self, _token: u64, _out: &mut Outbox<'_>) {}
    fn on_timer(&mut self, _token: u64, _out: &mut Outbox<'_>) {}
}

pub type MecAppFactory = fn(MecAppEnv) -> Box<dyn MecApp>;

/// Maps app names to runtime constructors. Unknown names get an echo app.
#[derive(Debug, Clone)]
pub struct AppCatalog {
    factories: BTreeMap<String, MecAppFactory>,
}

impl Default for AppCatalog {
    fn default() -> Self {
        let mut c = AppCatalog { factories: BTreeMap::new() };
        c.register("MECWarningAlertApp", |env| Box::new(MecWarningAlertApp::new(env)));
        c
    }
}

impl AppCatalog {
    pub fn register(&mut self, app_name: &str, factory: MecAppFactory) {
        self.factories.insert(app_name.to_string(), factory);
    }

    pub fn create(&self, env: MecAppEnv) -> Box<dyn MecApp> {
        match self.factories.get(&env.app_name) {
            Some(f) => f(env),
            None => Box::new(EchoMecApp::new(env)),
        }
    }
}
