use crate::apps::BridgeInbound;
use crate::http::{HttpRequest, HttpResponse};
use crate::net::{ConnId, Datagram, Endpoint};
use crate::orchestration::{Mx2Call, Mx2Reply};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpKind {
    Request,
    Response,
}

/// One HTTP message in flight, as serialized bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    pub conn: ConnId,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub kind: HttpKind,
    pub bytes: Vec<u8>,
}

impl HttpMessage {
    pub fn request(conn: ConnId, src: Endpoint, dst: Endpoint, request: &HttpRequest) -> Self {
        HttpMessage { conn, src, dst, kind: HttpKind::Request, bytes: request.to_bytes() }
    }

    pub fn response(conn: ConnId, src: Endpoint, dst: Endpoint, response: &HttpResponse) -> Self {
        HttpMessage { conn, src, dst, kind: HttpKind::Response, bytes: response.to_bytes() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Timer {
    Mobility,
    ServiceSlot { host: usize, port: u16 },
    CreateDone { request_id: u64, context_id: String },
    DeleteDone { request_id: u64, context_id: String },
    Compute { host: usize, app: String, job: u64, token: u64 },
    MecApp { host: usize, app: String, token: u64 },
    DeviceApp { ue: usize, token: u64 },
    UeAppStart { ue: usize, app: usize },
    UeAppStop { ue: usize, app: usize },
}

/// Kernel payload of the simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Datagram(Datagram),
    Http(HttpMessage),
    Mx2 { request_id: u64, call: Mx2Call },
    Mx2Reply { request_id: u64, reply: Mx2Reply },
    Timer(Timer),
    Bridge(BridgeInbound),
}

impl Message {
    /// Size used for serialization delay on rate-limited links.
    pub fn bits(&self) -> u64 {
        match self {
            Message::Datagram(d) => d.payload.len() as u64 * 8,
            Message::Http(h) => h.bytes.len() as u64 * 8,
            _ => 0,
        }
    }
}
