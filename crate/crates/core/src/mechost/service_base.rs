//! Generic REST server behaviour shared by every platform service: request
//! parsing, method screening and a single FIFO processing queue.

use std::collections::VecDeque;

use crate::http::{HttpError, HttpRequest, HttpResponse, Method};
use crate::kernel::SimTime;
use crate::net::{ConnId, Endpoint};

/// What service-specific logic gets to see of a request.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    pub method: Method,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ServiceRequest {
    /// 501 for methods outside GET/POST/PUT/DELETE.
    pub fn from_http(req: &HttpRequest) -> Result<ServiceRequest, HttpResponse> {
        let method = req
            .method()
            .ok_or_else(|| HttpResponse::problem(501, format!("method {} not supported", req.method)))?;
        Ok(ServiceRequest { method, path: req.path().to_string(), query: req.query(), body: req.body.clone() })
    }

    /// 400 on unparsable bytes, then as [`ServiceRequest::from_http`].
    pub fn from_bytes(raw: &[u8]) -> Result<ServiceRequest, HttpResponse> {
        match HttpRequest::parse(raw) {
            Ok(req) => Self::from_http(&req),
            Err(HttpError::Malformed | HttpError::Incomplete) => Err(HttpResponse::problem(400, "malformed request")),
        }
    }

    pub fn query_param(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug)]
pub struct QueuedRequest {
    pub conn: ConnId,
    pub client: Endpoint,
    pub arrived: SimTime,
    pub request: Result<ServiceRequest, HttpResponse>,
}

#[derive(Debug, Default)]
pub struct ServiceBase {
    queue: VecDeque<QueuedRequest>,
    busy: bool,
    service_time: SimTime,
    served: u64,
}

impl ServiceBase {
    pub fn new(service_time: SimTime) -> Self {
        ServiceBase { service_time, ..Default::default() }
    }

    pub fn service_time(&self) -> SimTime {
        self.service_time
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    /// Queue a raw request. Returns true when the server was idle and the
    /// caller must schedule a processing slot `service_time` from now.
    pub fn enqueue(&mut self, conn: ConnId, client: Endpoint, raw: &[u8], now: SimTime) -> bool {
        self.queue.push_back(QueuedRequest { conn, client, arrived: now, request: ServiceRequest::from_bytes(raw) });
        if self.busy {
            false
        } else {
            self.busy = true;
            true
        }
    }

    /// Take the head of the queue when its processing slot completes.
    pub fn pop(&mut self) -> Option<QueuedRequest> {
        let item = self.queue.pop_front();
        if item.is_some() {
            self.served += 1;
        }
        item
    }

    /// After handling a popped request: true if another slot must be
    /// scheduled, otherwise the server goes idle.
    pub fn finish(&mut self) -> bool {
        self.busy = !self.queue.is_empty();
        self.busy
    }
}
