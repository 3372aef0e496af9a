//! Mp1 service registry.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::ServiceRequest;
use crate::http::{HttpResponse, Method};
use crate::net::Endpoint;

pub const SERVICES_PATH: &str = "/mec_service_mgmt/v1/services";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDescriptor {
    pub ser_name: String,
    pub ser_instance_id: String,
    pub endpoint: Endpoint,
}

impl ServiceDescriptor {
    /// ServiceInfo JSON. State is always ACTIVE.
    pub fn to_json(&self) -> Value {
        json!({
            "serInstanceId": self.ser_instance_id,
            "serName": self.ser_name,
            "state": "ACTIVE",
            "serializer": "JSON",
            "transportInfo": {
                "id": format!("{}-http", self.ser_instance_id),
                "name": "REST",
                "type": "REST_HTTP",
                "protocol": "HTTP",
                "version": "1.1",
                "endpoint": { "addresses": [ { "host": self.endpoint.addr.to_string(), "port": self.endpoint.port } ] }
            }
        })
    }

    /// Endpoint of a ServiceInfo JSON value.
    pub fn endpoint_of(info: &Value) -> Option<Endpoint> {
        let addr = &info["transportInfo"]["endpoint"]["addresses"][0];
        let host = addr["host"].as_str()?.parse().ok()?;
        let port = u16::try_from(addr["port"].as_u64()?).ok()?;
        Some(Endpoint::new(host, port))
    }
}

#[derive(Debug, Default)]
pub struct ServiceRegistry {
    services: BTreeMap<String, ServiceDescriptor>,
}

impl ServiceRegistry {
    /// Returns false if a service with the same name is already registered.
    pub fn register(&mut self, descriptor: ServiceDescriptor) -> bool {
        if self.services.contains_key(&descriptor.ser_name) {
            return false;
        }
        self.services.insert(descriptor.ser_name.clone(), descriptor);
        true
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.services.keys().map(String::as_str)
    }

    pub fn get(&self, ser_name: &str) -> Option<&ServiceDescriptor> {
        self.services.get(ser_name)
    }

    pub fn handle(&self, req: &ServiceRequest) -> HttpResponse {
        if req.method != Method::Get {
            return HttpResponse::problem(404, format!("no {} resource at {}", req.method, req.path));
        }
        if req.path == SERVICES_PATH {
            let filter = req.query_param("ser_name");
            let list: Vec<Value> = self
                .services
                .values()
                .filter(|d| filter.is_none_or(|f| f.split(',').any(|n| n == d.ser_name)))
                .map(ServiceDescriptor::to_json)
                .collect();
            return HttpResponse::json(200, &list);
        }
        if let Some(id) = req.path.strip_prefix(SERVICES_PATH).and_then(|r| r.strip_prefix('/')) {
            if let Some(d) = self.services.values().find(|d| d.ser_instance_id == id) {
                return HttpResponse::json(200, &d.to_json());
            }
        }
        HttpResponse::problem(404, format!("no resource at {}", req.path))
    }
}
