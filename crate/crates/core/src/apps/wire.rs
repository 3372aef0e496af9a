//! Single-line `key=value|key=value` encoding used between UE apps, Device
//! apps and MEC apps. Values escape `%`, `|`, `=`, CR and LF as `%XX`.

use std::str::FromStr;

use thiserror::Error;

use crate::net::Endpoint;
use crate::services::Point;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message is not UTF-8")]
    NotUtf8,
    #[error("malformed pair `{0}`")]
    MalformedPair(String),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("bad value for `{0}`")]
    BadValue(&'static str),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '%' => out.push_str("%25"),
            '|' => out.push_str("%7C"),
            '=' => out.push_str("%3D"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(v: &str) -> Result<String, WireError> {
    let bytes = v.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = v.get(i + 1..i + 3).ok_or_else(|| WireError::MalformedPair(v.into()))?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| WireError::MalformedPair(v.into()))?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| WireError::NotUtf8)
}

/// Ordered key/value pairs of one message.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fields(Vec<(String, String)>);

impl Fields {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_opt(self, key: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.with(key, v),
            None => self,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &'static str) -> Result<&str, WireError> {
        self.get(key).ok_or(WireError::MissingKey(key))
    }

    pub fn parsed<T: FromStr>(&self, key: &'static str) -> Result<T, WireError> {
        self.require(key)?.parse().map_err(|_| WireError::BadValue(key))
    }

    pub fn encode(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={}", escape(v)))
            .collect::<Vec<_>>()
            .join("|")
            .into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Fields, WireError> {
        let text = std::str::from_utf8(bytes).map_err(|_| WireError::NotUtf8)?;
        let text = text.strip_suffix('\n').unwrap_or(text);
        let mut pairs = Vec::new();
        for pair in text.split('|') {
            let (k, v) = pair.split_once('=').ok_or_else(|| WireError::MalformedPair(pair.into()))?;
            if k.is_empty() {
                return Err(WireError::MalformedPair(pair.into()));
            }
            pairs.push((k.to_string(), unescape(v)?));
        }
        Ok(Fields(pairs))
    }
}

/// Device app protocol. An ok create ack always carries the MEC app
/// endpoint; a failed one only a reason.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceAppMessage {
    CreateApp { app_name: Option<String>, app_package_source: Option<String> },
    AckCreateApp(Result<Endpoint, String>),
    DeleteApp { app_name: Option<String> },
    AckDeleteApp(Result<(), String>),
}

impl DeviceAppMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            DeviceAppMessage::CreateApp { .. } => "CREATE_APP",
            DeviceAppMessage::AckCreateApp(_) => "ACK_CREATE_APP",
            DeviceAppMessage::DeleteApp { .. } => "DELETE_APP",
            DeviceAppMessage::AckDeleteApp(_) => "ACK_DELETE_APP",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let f = Fields::new().with("kind", self.kind());
        let f = match self {
            DeviceAppMessage::CreateApp { app_name, app_package_source } => f
                .with_opt("appName", app_name.as_deref())
                .with_opt("appPackageSource", app_package_source.as_deref()),
            DeviceAppMessage::DeleteApp { app_name } => f.with_opt("appName", app_name.as_deref()),
            DeviceAppMessage::AckCreateApp(Ok(ep)) => f.with("result", "ok").with("mecAppEndpoint", ep),
            DeviceAppMessage::AckDeleteApp(Ok(())) => f.with("result", "ok"),
            DeviceAppMessage::AckCreateApp(Err(r)) | DeviceAppMessage::AckDeleteApp(Err(r)) => {
                f.with("result", "fail").with("reason", r)
            }
        };
        f.encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let f = Fields::decode(bytes)?;
        let owned = |k| f.get(k).map(str::to_string);
        let outcome = || -> Result<Result<(), String>, WireError> {
            match f.require("result")? {
                "ok" => Ok(Ok(())),
                "fail" => Ok(Err(owned("reason").unwrap_or_default())),
                _ => Err(WireError::BadValue("result")),
            }
        };
        match f.require("kind")? {
            "CREATE_APP" => {
                let msg = DeviceAppMessage::CreateApp { app_name: owned("appName"), app_package_source: owned("appPackageSource") };
                match &msg {
                    DeviceAppMessage::CreateApp { app_name: None, app_package_source: None } => Err(WireError::MissingKey("appName")),
                    _ => Ok(msg),
                }
            }
            "DELETE_APP" => Ok(DeviceAppMessage::DeleteApp { app_name: owned("appName") }),
            "ACK_CREATE_APP" => Ok(DeviceAppMessage::AckCreateApp(match outcome()? {
                Ok(()) => Ok(f.parsed("mecAppEndpoint")?),
                Err(r) => {
                    if f.get("mecAppEndpoint").is_some() {
                        return Err(WireError::BadValue("mecAppEndpoint"));
                    }
                    Err(r)
                }
            })),
            "ACK_DELETE_APP" => Ok(DeviceAppMessage::AckDeleteApp(outcome()?)),
            other => Err(WireError::UnknownKind(other.to_string())),
        }
    }
}

/// UE app to MEC WarningAlert app traffic and back.
#[derive(Debug, Clone, PartialEq)]
pub enum WarningMessage {
    StartWarning { ue_id: String, center: Point, radius: f64 },
    StopWarning { ue_id: String },
    WarningAlert { ue_id: String, position: Point, timestamp: f64 },
    ZoneExit { ue_id: String, position: Point, timestamp: f64 },
}

impl WarningMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WarningMessage::StartWarning { .. } => "START_WARNING",
            WarningMessage::StopWarning { .. } => "STOP_WARNING",
            WarningMessage::WarningAlert { .. } => "WARNING_ALERT",
            WarningMessage::ZoneExit { .. } => "ZONE_EXIT",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let f = Fields::new().with("kind", self.kind());
        let f = match self {
            WarningMessage::StartWarning { ue_id, center, radius } => f
                .with("ueId", ue_id)
                .with("centerX", center.x)
                .with("centerY", center.y)
                .with("radius", radius),
            WarningMessage::StopWarning { ue_id } => f.with("ueId", ue_id),
            WarningMessage::WarningAlert { ue_id, position, timestamp }
            | WarningMessage::ZoneExit { ue_id, position, timestamp } => f
                .with("ueId", ue_id)
                .with("x", position.x)
                .with("y", position.y)
                .with("timestamp", timestamp),
        };
        f.encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let f = Fields::decode(bytes)?;
        let ue_id = f.require("ueId")?.to_string();
        let point = |x, y| -> Result<Point, WireError> { Ok(Point::new(f.parsed(x)?, f.parsed(y)?)) };
        match f.require("kind")? {
            "START_WARNING" => {
                Ok(WarningMessage::StartWarning { ue_id, center: point("centerX", "centerY")?, radius: f.parsed("radius")? })
            }
            "STOP_WARNING" => Ok(WarningMessage::StopWarning { ue_id }),
            "WARNING_ALERT" => {
                Ok(WarningMessage::WarningAlert { ue_id, position: point("x", "y")?, timestamp: f.parsed("timestamp")? })
            }
            "ZONE_EXIT" => Ok(WarningMessage::ZoneExit { ue_id, position: point("x", "y")?, timestamp: f.parsed("timestamp")? }),
            other => Err(WireError::UnknownKind(other.to_string())),
        }
    }
}
