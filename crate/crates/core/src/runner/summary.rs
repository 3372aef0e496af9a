use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::log::EventRecord;
use crate::descriptors::ResourceVector;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HostSummary {
    pub budget: ResourceVector,
    pub free: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextSummary {
    pub app_d_id: String,
    pub device_app_id: String,
    pub host: Option<String>,
    pub state: String,
    /// First time each lifecycle state was entered.
    pub timestamps: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub event_count: u64,
    pub hosts: BTreeMap<String, HostSummary>,
    pub contexts: BTreeMap<String, ContextSummary>,
    /// UE receive time minus Location notification time, per WARNING_ALERT.
    pub alert_latencies: Vec<f64>,
}

fn vector(v: Option<&Value>) -> Option<ResourceVector> {
    v.and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn text(r: &EventRecord, key: &str) -> Option<String> {
    r.attr(key).and_then(Value::as_str).map(str::to_string)
}

impl RunSummary {
    /// Rebuild a summary from log records alone.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Result<RunSummary, String> {
        let mut s = RunSummary::default();
        for r in records {
            s.event_count += 1;
            match r.kind.as_str() {
                "RESOURCE_SNAPSHOT" => {
                    let host = text(r, "host").ok_or("RESOURCE_SNAPSHOT without host")?;
                    let budget = vector(r.attr("budget")).ok_or("RESOURCE_SNAPSHOT without budget")?;
                    let free = vector(r.attr("free")).ok_or("RESOURCE_SNAPSHOT without free")?;
                    s.hosts.insert(host, HostSummary { budget, free });
                }
                "CONTEXT_STATE" => {
                    let id = text(r, "contextId").ok_or("CONTEXT_STATE without contextId")?;
                    let state = text(r, "state").ok_or("CONTEXT_STATE without state")?;
                    let c = s.contexts.entry(id).or_default();
                    c.app_d_id = text(r, "appDId").unwrap_or_default();
                    c.device_app_id = text(r, "deviceAppId").unwrap_or_default();
                    if let Some(h) = text(r, "host") {
                        c.host = Some(h);
                    }
                    c.timestamps.entry(state.clone()).or_insert(r.t);
                    c.state = state;
                }
                "WARNING_ALERT" => {
                    let notified = r.attr("notifiedAt").and_then(Value::as_f64).ok_or("WARNING_ALERT without notifiedAt")?;
                    s.alert_latencies.push(r.t - notified);
                }
                _ => {}
            }
        }
        Ok(s)
    }

    pub fn hosts_consistent(&self) -> bool {
        self.hosts.values().all(|h| h.free.le(&h.budget))
    }
}
