//! The danger-zone application pair: a UE app on each car and the MEC app
//! that watches the zone through the Location service.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::wire::{DeviceAppMessage, WarningMessage};
use super::{MecApp, MecAppEnv, Outbox};
use crate::http::{HttpRequest, HttpResponse, Method};
use crate::kernel::SimTime;
use crate::mechost::{ServiceDescriptor, SERVICES_PATH};
use crate::net::{ConnId, Datagram, Endpoint};
use crate::services::{LocationNotification, Point, ZoneEvent, CIRCLE_PATH, LOCATION_SERVICE};

pub const NOTIFY_PATH: &str = "/warning/notify";

#[derive(Debug, Clone, PartialEq)]
pub enum UeAppPhase {
    Idle,
    Requested,
    Running { mec: Endpoint },
    Stopping,
    Stopped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedAlert {
    pub received_at: SimTime,
    pub notified_at: SimTime,
    pub position: Point,
    pub exit: bool,
}

#[derive(Debug)]
pub struct UeWarningAlertApp {
    ue_id: String,
    device: Endpoint,
    app_name: Option<String>,
    app_package_source: Option<String>,
    center: Point,
    radius: f64,
    phase: UeAppPhase,
    stop_requested: bool,
    alerts: Vec<ReceivedAlert>,
}

impl UeWarningAlertApp {
    pub fn new(
        ue_id: impl Into<String>,
        device: Endpoint,
        app_name: Option<String>,
        app_package_source: Option<String>,
        center: Point,
        radius: f64,
    ) -> Self {
        UeWarningAlertApp {
            ue_id: ue_id.into(),
            device,
            app_name,
            app_package_source,
            center,
            radius,
            phase: UeAppPhase::Idle,
            stop_requested: false,
            alerts: Vec::new(),
        }
    }

    pub fn phase(&self) -> &UeAppPhase {
        &self.phase
    }

    pub fn alerts(&self) -> &[ReceivedAlert] {
        &self.alerts
    }

    pub fn start(&mut self, out: &mut Outbox<'_>) {
        if self.phase != UeAppPhase::Idle {
            return;
        }
        let msg = DeviceAppMessage::CreateApp { app_name: self.app_name.clone(), app_package_source: self.app_package_source.clone() };
        out.send(self.device, msg.encode());
        out.log("CREATE_APP", [("ueId", json!(self.ue_id)), ("appName", json!(self.app_name))]);
        self.phase = UeAppPhase::Requested;
    }

    pub fn stop(&mut self, out: &mut Outbox<'_>) {
        match self.phase {
            UeAppPhase::Running { mec } => {
                out.send(mec, WarningMessage::StopWarning { ue_id: self.ue_id.clone() }.encode());
                out.send(self.device, DeviceAppMessage::DeleteApp { app_name: self.app_name.clone() }.encode());
                out.log("DELETE_APP", [("ueId", json!(self.ue_id))]);
                self.phase = UeAppPhase::Stopping;
            }
            UeAppPhase::Requested => self.stop_requested = true,
            UeAppPhase::Idle => self.phase = UeAppPhase::Stopped,
            _ => {}
        }
    }

    pub fn on_datagram(&mut self, datagram: &Datagram, out: &mut Outbox<'_>) {
        if let Ok(msg) = DeviceAppMessage::decode(&datagram.payload) {
            return self.on_device_message(msg, out);
        }
        match WarningMessage::decode(&datagram.payload) {
            Ok(WarningMessage::WarningAlert { ue_id, position, timestamp }) => {
                self.record(out, false, position, timestamp, ue_id);
            }
            Ok(WarningMessage::ZoneExit { ue_id, position, timestamp }) => {
                self.record(out, true, position, timestamp, ue_id);
            }
            Ok(other) => out.log("UE_APP_ERROR", [("error", json!(format!("unexpected {}", other.kind())))]),
            Err(e) => out.log("UE_APP_ERROR", [("error", json!(e.to_string()))]),
        }
    }

    fn record(&mut self, out: &mut Outbox<'_>, exit: bool, position: Point, notified_at: SimTime, ue_id: String) {
        let now = out.now();
        self.alerts.push(ReceivedAlert { received_at: now, notified_at, position, exit });
        let kind = if exit { "ZONE_EXIT" } else { "WARNING_ALERT" };
        out.log(
            kind,
            [
                ("ueId", json!(ue_id)),
                ("x", json!(position.x)),
                ("y", json!(position.y)),
                ("notifiedAt", json!(notified_at)),
            ],
        );
    }

    fn on_device_message(&mut self, msg: DeviceAppMessage, out: &mut Outbox<'_>) {
        match msg {
            DeviceAppMessage::AckCreateApp(Ok(mec)) => {
                out.log("ACK_CREATE_APP", [("result", json!("ok")), ("mecAppEndpoint", json!(mec.to_string()))]);
                self.phase = UeAppPhase::Running { mec };
                let start = WarningMessage::StartWarning { ue_id: self.ue_id.clone(), center: self.center, radius: self.radius };
                out.send(mec, start.encode());
                if self.stop_requested {
                    self.stop(out);
                }
            }
            DeviceAppMessage::AckCreateApp(Err(reason)) => {
                out.log("ACK_CREATE_APP", [("result", json!("fail")), ("reason", json!(reason))]);
                self.phase = UeAppPhase::Failed(reason);
            }
            DeviceAppMessage::AckDeleteApp(result) => {
                let (r, reason) = match &result {
                    Ok(()) => ("ok", Value::Null),
                    Err(e) => ("fail", json!(e)),
                };
                out.log("ACK_DELETE_APP", [("result", json!(r)), ("reason", reason)]);
                self.phase = match result {
                    Ok(()) => UeAppPhase::Stopped,
                    Err(e) => UeAppPhase::Failed(e),
                };
            }
            other => out.log("UE_APP_ERROR", [("error", json!(format!("unexpected {}", other.kind())))]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Discovery {
    Pending(ConnId),
    Found(Endpoint),
    Failed,
}

#[derive(Debug)]
pub struct MecWarningAlertApp {
    env: MecAppEnv,
    discovery: Discovery,
    queued: Vec<(String, Point, f64)>,
    ues: BTreeMap<String, Endpoint>,
    pending_subs: BTreeMap<ConnId, String>,
    subscriptions: BTreeMap<String, String>,
    jobs: BTreeMap<u64, LocationNotification>,
    next_token: u64,
}

impl MecWarningAlertApp {
    pub fn new(env: MecAppEnv) -> Self {
        MecWarningAlertApp {
            env,
            discovery: Discovery::Failed,
            queued: Vec::new(),
            ues: BTreeMap::new(),
            pending_subs: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            jobs: BTreeMap::new(),
            next_token: 1,
        }
    }

    pub fn location_service(&self) -> Option<Endpoint> {
        match self.discovery {
            Discovery::Found(ep) => Some(ep),
            _ => None,
        }
    }

    pub fn subscription(&self, ue_id: &str) -> Option<&str> {
        self.subscriptions.get(ue_id).map(String::as_str)
    }

    fn subscribe(&mut self, out: &mut Outbox<'_>, location: Endpoint, ue_id: String, center: Point, radius: f64) {
        let body = json!({ "circleNotificationSubscription": {
            "callbackReference": { "notifyURL": format!("http://{}{NOTIFY_PATH}", self.env.endpoint) },
            "address": ue_id,
            "center": center,
            "radius": radius,
            "enteringLeavingCriteria": "Both",
        }});
        let conn = out.request(location, HttpRequest::post_json(CIRCLE_PATH, &body));
        self.pending_subs.insert(conn, ue_id);
    }

    fn alert(&self, n: &LocationNotification, out: &mut Outbox<'_>) {
        let Some(&ue) = self.ues.get(&n.ue_id) else { return };
        let (ue_id, position, timestamp) = (n.ue_id.clone(), n.position, n.timestamp);
        let msg = match n.event {
            ZoneEvent::Entering => WarningMessage::WarningAlert { ue_id, position, timestamp },
            ZoneEvent::Leaving => WarningMessage::ZoneExit { ue_id, position, timestamp },
        };
        out.log("ALERT_SENT", [("ueId", json!(n.ue_id)), ("kind", json!(msg.kind())), ("notifiedAt", json!(timestamp))]);
        out.send(ue, msg.encode());
    }
}

impl MecApp for MecWarningAlertApp {
    fn start(&mut self, out: &mut Outbox<'_>) {
        let conn = out.request(self.env.registry, HttpRequest::get(format!("{SERVICES_PATH}?ser_name={LOCATION_SERVICE}")));
        self.discovery = Discovery::Pending(conn);
    }

    fn on_datagram(&mut self, datagram: &Datagram, out: &mut Outbox<'_>) {
        match WarningMessage::decode(&datagram.payload) {
            Ok(WarningMessage::StartWarning { ue_id, center, radius }) => {
                self.ues.insert(ue_id.clone(), datagram.src);
                match self.discovery {
                    Discovery::Found(loc) => self.subscribe(out, loc, ue_id, center, radius),
                    Discovery::Pending(_) => self.queued.push((ue_id, center, radius)),
                    Discovery::Failed => {
                        out.log("MEC_APP_ERROR", [("error", json!("LocationService unavailable")), ("ueId", json!(ue_id))])
                    }
                }
            }
            Ok(WarningMessage::StopWarning { ue_id }) => {
                self.ues.remove(&ue_id);
                if let (Some(sub), Discovery::Found(loc)) = (self.subscriptions.remove(&ue_id), &self.discovery) {
                    out.request(*loc, HttpRequest::delete(format!("{CIRCLE_PATH}/{sub}")));
                }
            }
            Ok(other) => out.log("MEC_APP_ERROR", [("error", json!(format!("unexpected {}", other.kind())))]),
            Err(e) => out.log("MEC_APP_ERROR", [("error", json!(e.to_string()))]),
        }
    }

    fn on_request(&mut self, _client: Endpoint, request: &HttpRequest, out: &mut Outbox<'_>) -> HttpResponse {
        if request.method() != Some(Method::Post) || request.path() != NOTIFY_PATH {
            return HttpResponse::problem(404, format!("no resource at {}", request.path()));
        }
        let notification = serde_json::from_slice(&request.body).ok().and_then(|v: Value| LocationNotification::from_json(&v));
        let Some(n) = notification else {
            return HttpResponse::problem(400, "not a subscription notification");
        };
        if self.env.instructions_per_notification > 0 {
            let token = self.next_token;
            self.next_token += 1;
            out.compute(self.env.instructions_per_notification, token);
            self.jobs.insert(token, n);
        } else {
            self.alert(&n, out);
        }
        HttpResponse::empty(204)
    }

    fn on_response(&mut self, conn: ConnId, response: &HttpResponse, out: &mut Outbox<'_>) {
        if self.discovery == Discovery::Pending(conn) {
            let found = (response.status == 200)
                .then(|| response.json_body())
                .flatten()
                .and_then(|b| b.as_array().and_then(|a| a.iter().find_map(ServiceDescriptor::endpoint_of)));
            match found {
                Some(loc) => {
                    self.discovery = Discovery::Found(loc);
                    out.log("SERVICE_DISCOVERED", [("serName", json!(LOCATION_SERVICE)), ("endpoint", json!(loc.to_string()))]);
                    for (ue, center, radius) in std::mem::take(&mut self.queued) {
                        self.subscribe(out, loc, ue, center, radius);
                    }
                }
                None => {
                    self.discovery = Discovery::Failed;
                    out.log("MEC_APP_ERROR", [("error", json!("LocationService unavailable"))]);
                }
            }
            return;
        }
        if let Some(ue_id) = self.pending_subs.remove(&conn) {
            let sub = response.json_body().and_then(|b| {
                b["circleNotificationSubscription"]["subscriptionId"].as_str().map(str::to_string)
            });
            match (response.status, sub) {
                (201, Some(sub)) => {
                    out.log("LOC_SUBSCRIBED", [("ueId", json!(ue_id)), ("subscriptionId", json!(sub))]);
                    if self.ues.contains_key(&ue_id) {
                        self.subscriptions.insert(ue_id, sub);
                    } else if let Discovery::Found(loc) = self.discovery {
                        // Stopped while the subscription was in flight.
                        out.request(loc, HttpRequest::delete(format!("{CIRCLE_PATH}/{sub}")));
                    }
                }
                (status, _) => out.log("MEC_APP_ERROR", [("error", json!(format!("subscribe failed: {status}")))]),
            }
        }
    }

    fn on_compute_done(&mut self, token: u64, out: &mut Outbox<'_>) {
        if let Some(n) = self.jobs.remove(&token) {
            self.alert(&n, out);
        }
    }
}
