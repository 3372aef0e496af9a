use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::wire::DeviceAppMessage;
use super::Outbox;
use crate::http::{HttpRequest, HttpResponse};
use crate::kernel::SimTime;
use crate::net::{ConnId, Datagram, Endpoint};
use crate::orchestration::APP_CONTEXTS_PATH;

pub const DEVICE_APP_PORT: u16 = 4500;

#[derive(Debug, Clone, PartialEq)]
enum State {
    Idle,
    Creating { ue_app: Endpoint, conn: ConnId, token: u64 },
    Running { ue_app: Endpoint, context_id: String, endpoint: Endpoint },
    Deleting { ue_app: Endpoint, conn: ConnId, token: u64, context_id: String, endpoint: Endpoint },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stale {
    Create,
    Delete,
}

/// Lifecycle client on the UE: turns CREATE_APP/DELETE_APP datagrams into
/// Mx2 calls and answers each with exactly one ack.
#[derive(Debug)]
pub struct DeviceApp {
    device_app_id: String,
    ualcmp: Endpoint,
    timeout: SimTime,
    state: State,
    next_token: u64,
    stale: BTreeMap<ConnId, (Stale, String)>,
}

impl DeviceApp {
    pub fn new(device_app_id: impl Into<String>, ualcmp: Endpoint, timeout: SimTime) -> Self {
        DeviceApp { device_app_id: device_app_id.into(), ualcmp, timeout, state: State::Idle, next_token: 1, stale: BTreeMap::new() }
    }

    pub fn device_app_id(&self) -> &str {
        &self.device_app_id
    }

    /// Context id and endpoint of the running MEC app, if any.
    pub fn running(&self) -> Option<(&str, Endpoint)> {
        match &self.state {
            State::Running { context_id, endpoint, .. } => Some((context_id, *endpoint)),
            _ => None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.state == State::Idle
    }

    fn token(&mut self) -> u64 {
        let t = self.next_token;
        self.next_token += 1;
        t
    }

    fn ack(out: &mut Outbox<'_>, to: Endpoint, msg: DeviceAppMessage) {
        out.send(to, msg.encode());
    }

    fn mx2(&self, out: &mut Outbox<'_>, request: HttpRequest) -> ConnId {
        let (method, path) = (request.method.clone(), request.target.clone());
        let conn = out.request(self.ualcmp, request);
        out.log("MX2_REQUEST", [("method", json!(method)), ("path", json!(path)), ("conn", json!(conn.0))]);
        conn
    }

    pub fn on_datagram(&mut self, datagram: &Datagram, out: &mut Outbox<'_>) {
        let msg = match DeviceAppMessage::decode(&datagram.payload) {
            Ok(m) => m,
            Err(e) => {
                out.log("DEVICE_APP_ERROR", [("error", json!(e.to_string()))]);
                return;
            }
        };
        let ue_app = datagram.src;
        match msg {
            DeviceAppMessage::CreateApp { app_name, app_package_source } => {
                if self.state != State::Idle {
                    return Self::ack(out, ue_app, DeviceAppMessage::AckCreateApp(Err("busy".into())));
                }
                let mut info = serde_json::Map::new();
                if let Some(n) = app_name {
                    info.insert("appName".into(), json!(n));
                }
                if let Some(s) = app_package_source {
                    info.insert("appPackageSource".into(), json!(s));
                }
                let body = json!({
                    "associateDevAppId": self.device_app_id,
                    "callbackReference": format!("http://{}/callback", out.local()),
                    "appInfo": info,
                });
                let conn = self.mx2(out, HttpRequest::post_json(APP_CONTEXTS_PATH, &body));
                let token = self.token();
                out.timer(self.timeout, token);
                self.state = State::Creating { ue_app, conn, token };
            }
            DeviceAppMessage::DeleteApp { .. } => match std::mem::replace(&mut self.state, State::Idle) {
                State::Running { context_id, endpoint, .. } => {
                    let conn = self.mx2(out, HttpRequest::delete(format!("{APP_CONTEXTS_PATH}/{context_id}")));
                    let token = self.token();
                    out.timer(self.timeout, token);
                    self.state = State::Deleting { ue_app, conn, token, context_id, endpoint };
                }
                State::Idle => Self::ack(out, ue_app, DeviceAppMessage::AckDeleteApp(Err("no running app".into()))),
                busy => {
                    self.state = busy;
                    Self::ack(out, ue_app, DeviceAppMessage::AckDeleteApp(Err("busy".into())));
                }
            },
            other => out.log("DEVICE_APP_ERROR", [("error", json!(format!("unexpected {}", other.kind())))]),
        }
    }

    pub fn on_response(&mut self, conn: ConnId, response: &HttpResponse, out: &mut Outbox<'_>) {
        out.log("MX2_RESPONSE", [("conn", json!(conn.0)), ("status", json!(response.status))]);
        if let Some((kind, context_id)) = self.stale.remove(&conn) {
            match kind {
                Stale::Create if response.status == 201 => {
                    if let Some((ctx, _)) = created(response) {
                        let c = self.mx2(out, HttpRequest::delete(format!("{APP_CONTEXTS_PATH}/{ctx}")));
                        self.stale.insert(c, (Stale::Delete, ctx));
                    }
                }
                Stale::Delete if response.status == 204 => {
                    if matches!(&self.state, State::Running { context_id: c, .. } if *c == context_id) {
                        self.state = State::Idle;
                    }
                }
                _ => {}
            }
            return;
        }
        match std::mem::replace(&mut self.state, State::Idle) {
            State::Creating { ue_app, conn: c, .. } if c == conn => match created(response) {
                Some((context_id, endpoint)) => {
                    self.state = State::Running { ue_app, context_id, endpoint };
                    Self::ack(out, ue_app, DeviceAppMessage::AckCreateApp(Ok(endpoint)));
                }
                None => Self::ack(out, ue_app, DeviceAppMessage::AckCreateApp(Err(failure(response)))),
            },
            State::Deleting { ue_app, conn: c, context_id, endpoint, .. } if c == conn => {
                if response.status == 204 {
                    Self::ack(out, ue_app, DeviceAppMessage::AckDeleteApp(Ok(())));
                } else {
                    self.state = State::Running { ue_app, context_id, endpoint };
                    Self::ack(out, ue_app, DeviceAppMessage::AckDeleteApp(Err(failure(response))));
                }
            }
            other => self.state = other,
        }
    }

    pub fn on_timer(&mut self, token: u64, out: &mut Outbox<'_>) {
        match std::mem::replace(&mut self.state, State::Idle) {
            State::Creating { ue_app, conn, token: t } if t == token => {
                self.stale.insert(conn, (Stale::Create, String::new()));
                Self::ack(out, ue_app, DeviceAppMessage::AckCreateApp(Err("timeout".into())));
            }
            State::Deleting { ue_app, conn, token: t, context_id, endpoint } if t == token => {
                self.stale.insert(conn, (Stale::Delete, context_id.clone()));
                self.state = State::Running { ue_app, context_id, endpoint };
                Self::ack(out, ue_app, DeviceAppMessage::AckDeleteApp(Err("timeout".into())));
            }
            other => self.state = other,
        }
    }
}

/// Context id and MEC app endpoint of a 201 app_contexts response.
fn created(response: &HttpResponse) -> Option<(String, Endpoint)> {
    if response.status != 201 {
        return None;
    }
    let body = response.json_body()?;
    let ep = &body["appInfo"]["userAppInstanceInfo"][0]["appEndpoint"];
    let addr = ep["address"].as_str()?.parse().ok()?;
    let port = u16::try_from(ep["port"].as_u64()?).ok()?;
    Some((body["contextId"].as_str()?.to_string(), Endpoint::new(addr, port)))
}

fn failure(response: &HttpResponse) -> String {
    let detail = response.json_body().and_then(|b| b.get("detail").and_then(Value::as_str).map(str::to_string));
    match detail {
        Some(d) => format!("{}: {d}", response.status),
        None => format!("status {}", response.status),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::IoAction;
    use std::net::Ipv4Addr;

    struct Rig {
        app: DeviceApp,
        conn: u64,
        local: Endpoint,
        ue: Endpoint,
    }

    impl Rig {
        fn new() -> Self {
            let ualcmp = Endpoint::new(Ipv4Addr::new(10, 30, 0, 1), 8080);
            Rig {
                app: DeviceApp::new("car[0]", ualcmp, 5.0),
                conn: 1,
                local: Endpoint::new(Ipv4Addr::new(10, 10, 0, 1), DEVICE_APP_PORT),
                ue: Endpoint::new(Ipv4Addr::new(10, 10, 0, 1), 4000),
            }
        }
        fn datagram(&mut self, msg: DeviceAppMessage) -> Vec<IoAction> {
            let mut out = Outbox::new(0.0, self.local, &mut self.conn);
            self.app.on_datagram(&Datagram::new(self.ue, self.local, msg.encode()), &mut out);
            out.into_actions()
        }
        fn response(&mut self, conn: ConnId, resp: HttpResponse) -> Vec<IoAction> {
            let mut out = Outbox::new(1.0, self.local, &mut self.conn);
            self.app.on_response(conn, &resp, &mut out);
            out.into_actions()
        }
        fn timer(&mut self, token: u64) -> Vec<IoAction> {
            let mut out = Outbox::new(5.0, self.local, &mut self.conn);
            self.app.on_timer(token, &mut out);
            out.into_actions()
        }
    }

    fn acks(actions: &[IoAction]) -> Vec<DeviceAppMessage> {
        actions
            .iter()
            .filter_map(|a| match a {
                IoAction::Send(d) => Some(DeviceAppMessage::decode(&d.payload).unwrap()),
                _ => None,
            })
            .collect()
    }

    fn request_conn(actions: &[IoAction]) -> ConnId {
        actions.iter().find_map(|a| if let IoAction::Request { conn, .. } = a { Some(*conn) } else { None }).unwrap()
    }

    fn create() -> DeviceAppMessage {
        DeviceAppMessage::CreateApp { app_name: Some("MECWarningAlertApp".into()), app_package_source: None }
    }

    fn created_response() -> HttpResponse {
        HttpResponse::json(
            201,
            &json!({"contextId": "ctx-1", "appInfo": {"userAppInstanceInfo": [{"appEndpoint": {"address": "10.20.0.2", "port": 4001}}]}}),
        )
    }

    #[test]
    fn create_then_delete() {
        let mut rig = Rig::new();
        let actions = rig.datagram(create());
        let IoAction::Request { request, .. } = actions.iter().find(|a| matches!(a, IoAction::Request { .. })).unwrap() else {
            unreachable!()
        };
        let body: Value = serde_json::from_slice(&request.body).unwrap();
        assert_eq!(body["appInfo"]["appName"], "MECWarningAlertApp");
        assert_eq!(body["associateDevAppId"], "car[0]");
        let conn = request_conn(&actions);
        assert_eq!(acks(&rig.datagram(create())), vec![DeviceAppMessage::AckCreateApp(Err("busy".into()))]);
        let ep = Endpoint::new(Ipv4Addr::new(10, 20, 0, 2), 4001);
        assert_eq!(acks(&rig.response(conn, created_response())), vec![DeviceAppMessage::AckCreateApp(Ok(ep))]);
        assert_eq!(rig.app.running(), Some(("ctx-1", ep)));
        // The create timer firing late is a no-op.
        assert!(acks(&rig.timer(1)).is_empty());

        let actions = rig.datagram(DeviceAppMessage::DeleteApp { app_name: None });
        let conn = request_conn(&actions);
        assert_eq!(acks(&rig.response(conn, HttpResponse::empty(204))), vec![DeviceAppMessage::AckDeleteApp(Ok(()))]);
        assert!(rig.app.is_idle());
    }

    #[test]
    fn failures_are_acked() {
        let mut rig = Rig::new();
        let conn = request_conn(&rig.datagram(create()));
        let acks_ = acks(&rig.response(conn, HttpResponse::problem(404, "unknown app `X`")));
        assert_eq!(acks_, vec![DeviceAppMessage::AckCreateApp(Err("404: unknown app `X`".into()))]);
        assert_eq!(
            acks(&rig.datagram(DeviceAppMessage::DeleteApp { app_name: None })),
            vec![DeviceAppMessage::AckDeleteApp(Err("no running app".into()))]
        );
    }

    #[test]
    fn timeout_then_late_success_cleans_up() {
        let mut rig = Rig::new();
        let conn = request_conn(&rig.datagram(create()));
        assert_eq!(acks(&rig.timer(1)), vec![DeviceAppMessage::AckCreateApp(Err("timeout".into()))]);
        let late = rig.response(conn, created_response());
        assert!(acks(&late).is_empty());
        let IoAction::Request { request, .. } = late.iter().find(|a| matches!(a, IoAction::Request { .. })).unwrap() else {
            unreachable!()
        };
        assert_eq!(request.target, format!("{APP_CONTEXTS_PATH}/ctx-1"));
        assert!(rig.app.is_idle());
    }
}
