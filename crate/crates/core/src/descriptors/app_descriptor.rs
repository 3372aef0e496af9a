use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde_json::{json, Map, Value};

use super::resources::{parse_quantity, ResourceVector};
use super::DescriptorError;
use crate::net::Endpoint;

/// Application package metadata as onboarded into the orchestrator.
#[derive(Debug, Clone, PartialEq)]
pub struct AppDescriptor {
    pub app_d_id: String,
    pub app_name: String,
    pub app_provider: String,
    pub virtual_compute: ResourceVector,
    pub services_required: Vec<String>,
    /// Set when the app runs outside the simulator.
    pub emulated: Option<Endpoint>,
    /// Fields this crate does not interpret, kept verbatim.
    pub extensions: BTreeMap<String, Value>,
}

const ID_KEYS: [&str; 2] = ["appDId", "appDid"];
const MEMORY_KEYS: [&str; 3] = ["virtualMemory", "ram", "memory"];
const DISK_KEYS: [&str; 4] = ["virtualDisk", "virtualStorage", "disk", "storage"];
const CPU_KEYS: [&str; 2] = ["virtualCpu", "cpu"];

impl AppDescriptor {
    pub fn is_external(&self) -> bool {
        self.emulated.is_some()
    }

    pub fn parse(text: &str) -> Result<AppDescriptor, DescriptorError> {
        let value: Value = serde_json::from_str(text).map_err(|e| DescriptorError::Json(e.to_string()))?;
        Self::from_json(&value)
    }

    pub fn from_json(value: &Value) -> Result<AppDescriptor, DescriptorError> {
        let obj = value
            .as_object()
            .ok_or_else(|| DescriptorError::BadValue("<root>".into()))?;

        let app_d_id = required_string(obj, &ID_KEYS, "appDId")?;
        let app_name = required_string(obj, &["appName"], "appName")?;
        let app_provider = required_string(obj, &["appProvider"], "appProvider")?;

        let vcd = obj
            .get("virtualComputeDescriptor")
            .ok_or_else(|| DescriptorError::MissingField("virtualComputeDescriptor".into()))?
            .as_object()
            .ok_or_else(|| DescriptorError::BadValue("virtualComputeDescriptor".into()))?;
        let virtual_compute = ResourceVector {
            ram: quantity(vcd, &MEMORY_KEYS)?,
            disk: quantity(vcd, &DISK_KEYS)?,
            cpu: quantity(vcd, &CPU_KEYS)?,
        };

        let services_required = match obj.get("appServiceRequired") {
            None => return Err(DescriptorError::MissingField("appServiceRequired".into())),
            Some(Value::Array(items)) => items
                .iter()
                .map(service_name)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| DescriptorError::BadValue("appServiceRequired".into()))?,
            Some(_) => return Err(DescriptorError::BadValue("appServiceRequired".into())),
        };

        let emulated = match obj.get("emulatedMecApplication") {
            None | Some(Value::Null) => None,
            Some(v) => Some(emulated_endpoint(v)?),
        };

        let known: Vec<&str> = ID_KEYS
            .iter()
            .copied()
            .chain(["appName", "appProvider", "virtualComputeDescriptor", "appServiceRequired", "emulatedMecApplication"])
            .collect();
        let extensions = obj
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        Ok(AppDescriptor {
            app_d_id,
            app_name,
            app_provider,
            virtual_compute,
            services_required,
            emulated,
            extensions,
        })
    }

    /// Canonical JSON form (`appDId` casing, bytes for memory and disk).
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in &self.extensions {
            obj.insert(k.clone(), v.clone());
        }
        obj.insert("appDId".into(), json!(self.app_d_id));
        obj.insert("appName".into(), json!(self.app_name));
        obj.insert("appProvider".into(), json!(self.app_provider));
        obj.insert(
            "virtualComputeDescriptor".into(),
            json!({
                "virtualMemory": self.virtual_compute.ram,
                "virtualDisk": self.virtual_compute.disk,
                "virtualCpu": self.virtual_compute.cpu,
            }),
        );
        obj.insert(
            "appServiceRequired".into(),
            Value::Array(self.services_required.iter().map(|s| json!({ "serName": s })).collect()),
        );
        if let Some(ep) = &self.emulated {
            obj.insert(
                "emulatedMecApplication".into(),
                json!({ "ipAddress": ep.addr.to_string(), "port": ep.port }),
            );
        }
        Value::Object(obj)
    }
}

fn required_string(obj: &Map<String, Value>, keys: &[&str], canonical: &str) -> Result<String, DescriptorError> {
    let value = keys
        .iter()
        .find_map(|k| obj.get(*k))
        .ok_or_else(|| DescriptorError::MissingField(canonical.into()))?;
    match value.as_str() {
        Some(s) if !s.is_empty() => Ok(s.to_string()),
        _ => Err(DescriptorError::BadValue(canonical.into())),
    }
}

fn quantity(obj: &Map<String, Value>, keys: &[&str]) -> Result<u64, DescriptorError> {
    let canonical = keys[0];
    let (key, value) = keys
        .iter()
        .find_map(|k| obj.get(*k).map(|v| (*k, v)))
        .ok_or_else(|| DescriptorError::MissingField(format!("virtualComputeDescriptor.{canonical}")))?;
    parse_quantity(value).ok_or_else(|| DescriptorError::BadValue(format!("virtualComputeDescriptor.{key}")))
}

// Accepts "Name", {"serName": "Name"} and {"ServiceDependency": {"serName": "Name"}}.
fn service_name(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Object(o) => {
            if let Some(Value::String(s)) = o.get("serName") {
                Some(s.clone())
            } else {
                service_name(o.get("ServiceDependency")?)
            }
        }
        _ => None,
    }
}

fn emulated_endpoint(v: &Value) -> Result<Endpoint, DescriptorError> {
    let obj = v
        .as_object()
        .ok_or_else(|| DescriptorError::BadValue("emulatedMecApplication".into()))?;
    let addr = obj
        .get("ipAddress")
        .ok_or_else(|| DescriptorError::MissingField("emulatedMecApplication.ipAddress".into()))?
        .as_str()
        .and_then(|s| s.parse::<Ipv4Addr>().ok())
        .ok_or_else(|| DescriptorError::BadValue("emulatedMecApplication.ipAddress".into()))?;
    let port = obj
        .get("port")
        .ok_or_else(|| DescriptorError::MissingField("emulatedMecApplication.port".into()))?;
    let port = port
        .as_u64()
        .or_else(|| port.as_str().and_then(|s| s.parse().ok()))
        .filter(|p| (1..=65535).contains(p))
        .ok_or_else(|| DescriptorError::BadValue("emulatedMecApplication.port".into()))?;
    Ok(Endpoint::new(addr, port as u16))
}
