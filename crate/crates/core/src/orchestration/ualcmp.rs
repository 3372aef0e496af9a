//! Mx2 front end. Requests needing the orchestrator are forwarded as
//! messages and answered once the orchestrator replies.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::context::{AppContext, ContextState};
use super::orchestrator::{CreateRequest, Orchestrator};
use super::OrchestrationError;
use crate::http::{HttpRequest, HttpResponse, Method};
use crate::net::{ConnId, Endpoint};

pub const APP_LIST_PATH: &str = "/dev_app/v1/app_list";
pub const APP_CONTEXTS_PATH: &str = "/dev_app/v1/app_contexts";

#[derive(Debug, Clone, PartialEq)]
pub enum Mx2Call {
    Create(CreateRequest),
    Delete(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mx2Reply {
    Created(Result<AppContext, OrchestrationError>),
    Deleted(Result<AppContext, OrchestrationError>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum UalcmpAction {
    Respond(HttpResponse),
    Forward { request_id: u64, call: Mx2Call },
}

#[derive(Debug, Default)]
pub struct Ualcmp {
    pending: BTreeMap<u64, (ConnId, Endpoint)>,
    next_request: u64,
}

impl Ualcmp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn handle(&mut self, conn: ConnId, client: Endpoint, raw: &[u8], orchestrator: &Orchestrator) -> UalcmpAction {
        let req = match HttpRequest::parse(raw) {
            Ok(r) => r,
            Err(_) => return UalcmpAction::Respond(HttpResponse::problem(400, "malformed request")),
        };
        let Some(method) = req.method() else {
            return UalcmpAction::Respond(HttpResponse::problem(501, format!("method {} not supported", req.method)));
        };
        let path = req.path();
        let call = match (method, path) {
            (Method::Get, APP_LIST_PATH) => return UalcmpAction::Respond(app_list(orchestrator)),
            (Method::Post, APP_CONTEXTS_PATH) => match parse_create(&req.body) {
                Ok(c) => Mx2Call::Create(c),
                Err(detail) => return UalcmpAction::Respond(HttpResponse::problem(400, detail)),
            },
            (Method::Delete, p) => match p.strip_prefix(APP_CONTEXTS_PATH).and_then(|r| r.strip_prefix('/')) {
                Some(id) if !id.is_empty() && !id.contains('/') => Mx2Call::Delete(id.to_string()),
                _ => return UalcmpAction::Respond(not_found(path)),
            },
            _ => return UalcmpAction::Respond(not_found(path)),
        };
        let request_id = self.next_request;
        self.next_request += 1;
        self.pending.insert(request_id, (conn, client));
        UalcmpAction::Forward { request_id, call }
    }

    /// Map an orchestrator reply to the HTTP response for the waiting client.
    pub fn complete(&mut self, request_id: u64, reply: Mx2Reply) -> Option<(ConnId, Endpoint, HttpResponse)> {
        let (conn, client) = self.pending.remove(&request_id)?;
        Some((conn, client, reply_response(reply)))
    }
}

fn not_found(path: &str) -> HttpResponse {
    HttpResponse::problem(404, format!("no resource at {path}"))
}

fn app_list(orchestrator: &Orchestrator) -> HttpResponse {
    let list: Vec<Value> = orchestrator
        .onboarded()
        .map(|d| json!({ "appInfo": { "appDId": d.app_d_id, "appName": d.app_name, "appProvider": d.app_provider } }))
        .collect();
    HttpResponse::json(200, &json!({ "appList": list }))
}

fn opt_str(v: &Value, keys: &[&str]) -> Result<Option<String>, String> {
    for k in keys {
        match v.get(*k) {
            None | Some(Value::Null) => continue,
            Some(Value::String(s)) => return Ok(Some(s.clone())),
            Some(_) => return Err(format!("{k} must be a string")),
        }
    }
    Ok(None)
}

fn parse_create(body: &[u8]) -> Result<CreateRequest, String> {
    let v: Value = serde_json::from_slice(body).map_err(|e| format!("invalid JSON body: {e}"))?;
    if !v.is_object() {
        return Err("body must be a JSON object".into());
    }
    let device_app_id = opt_str(&v, &["associateDevAppId"])?.ok_or("missing associateDevAppId")?;
    let callback_reference = opt_str(&v, &["callbackReference"])?;
    let info = v.get("appInfo").filter(|i| i.is_object()).ok_or("missing appInfo")?;
    let req = CreateRequest {
        app_d_id: opt_str(info, &["appDId", "appDid"])?,
        app_name: opt_str(info, &["appName"])?,
        app_package_source: opt_str(info, &["appPackageSource"])?,
        device_app_id,
        callback_reference,
    };
    if req.app_d_id.is_none() && req.app_name.is_none() && req.app_package_source.is_none() {
        return Err("appInfo needs appDId, appName or appPackageSource".into());
    }
    Ok(req)
}

fn error_status(e: &OrchestrationError) -> u16 {
    match e {
        OrchestrationError::UnknownAppDId(_) | OrchestrationError::UnknownContext(_) | OrchestrationError::PackageLoad(_) => 404,
        OrchestrationError::IllegalState { .. } | OrchestrationError::DuplicateAppDId(_) => 409,
        OrchestrationError::NoSuitableHost(_) | OrchestrationError::Host(_) => 500,
    }
}

fn reply_response(reply: Mx2Reply) -> HttpResponse {
    match reply {
        Mx2Reply::Created(Ok(ctx)) if ctx.state == ContextState::Running => {
            let mut resp = HttpResponse::json(201, &ctx.to_json());
            resp.headers.push(("Location".into(), format!("{APP_CONTEXTS_PATH}/{}", ctx.context_id)));
            resp
        }
        Mx2Reply::Created(Ok(ctx)) => HttpResponse::problem(
            500,
            format!("context {} {}: {}", ctx.context_id, ctx.state, ctx.reason.as_deref().unwrap_or("instantiation failed")),
        ),
        Mx2Reply::Deleted(Ok(_)) => HttpResponse::empty(204),
        Mx2Reply::Created(Err(e)) | Mx2Reply::Deleted(Err(e)) => HttpResponse::problem(error_status(&e), e.to_string()),
    }
}
