//! Minimal HTTP/1.1 messages exchanged over the simulated transport and the
//! realtime bridge. Bodies are delimited by `Content-Length`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HttpError {
    #[error("malformed HTTP message")]
    Malformed,
    #[error("incomplete HTTP message")]
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "PUT" => Some(Method::Put),
            "DELETE" => Some(Method::Delete),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    /// Raw method token; see [`HttpRequest::method`] for the supported set.
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn new(method: Method, target: impl Into<String>) -> Self {
        HttpRequest { method: method.as_str().to_string(), target: target.into(), headers: Vec::new(), body: Vec::new() }
    }

    pub fn get(target: impl Into<String>) -> Self {
        Self::new(Method::Get, target)
    }

    pub fn delete(target: impl Into<String>) -> Self {
        Self::new(Method::Delete, target)
    }

    pub fn post_json(target: impl Into<String>, body: &serde_json::Value) -> Self {
        let mut req = Self::new(Method::Post, target);
        req.body = serde_json::to_vec(body).expect("JSON values serialize");
        req.headers.push(("Content-Type".into(), "application/json".into()));
        req
    }

    pub fn method(&self) -> Option<Method> {
        Method::parse(&self.method)
    }

    pub fn path(&self) -> &str {
        self.target.split('?').next().unwrap_or("")
    }

    pub fn query(&self) -> Vec<(String, String)> {
        match self.target.split_once('?') {
            Some((_, q)) => form_urlencoded::parse(q.as_bytes()).into_owned().collect(),
            None => Vec::new(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        header(&self.headers, name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{} {} HTTP/1.1\r\n", self.method, self.target).into_bytes();
        write_headers(&mut out, &self.headers, self.body.len());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<HttpRequest, HttpError> {
        let mut headers = [httparse::EMPTY_HEADER; 64];
        let mut req = httparse::Request::new(&mut headers);
        let status = req.parse(bytes).map_err(|_| HttpError::Malformed)?;
        let head_len = match status {
            httparse::Status::Complete(n) => n,
            httparse::Status::Partial => return Err(HttpError::Incomplete),
        };
        if req.version != Some(1) {
            return Err(HttpError::Malformed);
        }
        let headers = owned_headers(req.headers)?;
        let body = body(bytes, head_len, &headers)?;
        Ok(HttpRequest {
            method: req.method.ok_or(HttpError::Malformed)?.to_string(),
            target: req.path.ok_or(HttpError::Malformed)?.to_string(),
            headers,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn empty(status: u16) -> Self {
        HttpResponse { status, headers: Vec::new(), body: Vec::new() }
    }

    pub fn json(status: u16, body: &impl Serialize) -> Self {
        HttpResponse {
            status,
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: serde_json::to_vec(body).expect("response bodies serialize"),
        }
    }

    /// RFC 7807 problem details body.
    pub fn problem(status: u16, detail: impl Into<String>) -> Self {
        let body = serde_json::json!({
            "type": "about:blank",
            "title": reason(status),
            "status": status,
            "detail": detail.into(),
        });
        let mut resp = Self::json(status, &body);
        resp.headers[0].1 = "application/problem+json".into();
        resp
    }

    pub fn json_body(&self) -> Option<serde_json::Value> {
        serde_json::from_slice(&self.body).ok()
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        header(&self.headers, name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("HTTP/1.1 {} {}\r\n", self.status, reason(self.status)).into_bytes();
        write_headers(&mut out, &self.headers, self.body.len());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<HttpResponse, HttpError> {
        let mut headers = [httparse::EMPTY_HEADER; 64];
        let mut resp = httparse::Response::new(&mut headers);
        let head_len = match resp.parse(bytes).map_err(|_| HttpError::Malformed)? {
            httparse::Status::Complete(n) => n,
            httparse::Status::Partial => return Err(HttpError::Incomplete),
        };
        let headers = owned_headers(resp.headers)?;
        let body = body(bytes, head_len, &headers)?;
        Ok(HttpResponse { status: resp.code.ok_or(HttpError::Malformed)?, headers, body })
    }
}

/// Length of the first complete message in `buf`, if one is buffered.
pub fn complete_message_len(buf: &[u8]) -> Result<Option<usize>, HttpError> {
    let Some(head_end) = buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4) else {
        return Ok(None);
    };
    let head = std::str::from_utf8(&buf[..head_end]).map_err(|_| HttpError::Malformed)?;
    let mut len = 0usize;
    for line in head.split("\r\n").skip(1) {
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().map_err(|_| HttpError::Malformed)?;
            }
        }
    }
    Ok((buf.len() >= head_end + len).then_some(head_end + len))
}

pub fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        201 => "Created",
        204 => "No Content",
        400 => "Bad Request",
        404 => "Not Found",
        409 => "Conflict",
        500 => "Internal Server Error",
        501 => "Not Implemented",
        503 => "Service Unavailable",
        504 => "Gateway Timeout",
        _ => "Unknown",
    }
}

fn header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
}

fn write_headers(out: &mut Vec<u8>, headers: &[(String, String)], body_len: usize) {
    for (k, v) in headers {
        if k.eq_ignore_ascii_case("content-length") {
            continue;
        }
        out.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
    }
    out.extend_from_slice(format!("Content-Length: {body_len}\r\n\r\n").as_bytes());
}

fn owned_headers(headers: &[httparse::Header<'_>]) -> Result<Vec<(String, String)>, HttpError> {
    headers
        .iter()
        .map(|h| {
            let v = std::str::from_utf8(h.value).map_err(|_| HttpError::Malformed)?;
            Ok((h.name.to_string(), v.to_string()))
        })
        .collect()
}

fn body(bytes: &[u8], head_len: usize, headers: &[(String, String)]) -> Result<Vec<u8>, HttpError> {
    let len = match header(headers, "content-length") {
        Some(v) => v.trim().parse::<usize>().map_err(|_| HttpError::Malformed)?,
        None => bytes.len() - head_len,
    };
    let rest = &bytes[head_len..];
    if rest.len() < len {
        return Err(HttpError::Incomplete);
    }
    Ok(rest[..len].to_vec())
}
