//! Radio Network Information service: per-UE layer-2 measurements.

use serde::Serialize;
use serde_json::json;

use super::radio::RadioEnvironment;
use crate::http::{HttpResponse, Method};
use crate::kernel::SimTime;
use crate::mechost::ServiceRequest;

pub const L2_MEAS_PATH: &str = "/rni/v2/queries/layer2_meas";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct L2Measurement {
    pub ue_id: String,
    pub cell_id: Option<String>,
    pub cqi: u8,
    pub timestamp: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasFilter<'a> {
    All,
    Ue(&'a str),
    Cell(&'a str),
}

#[derive(Debug, Default)]
pub struct RnisService;

impl RnisService {
    /// Snapshot of matching UEs. `None` when an explicit UE is unknown.
    pub fn layer2_meas(&self, env: &RadioEnvironment, filter: MeasFilter<'_>, now: SimTime) -> Option<Vec<L2Measurement>> {
        if let MeasFilter::Ue(id) = filter {
            env.ue(id)?;
        }
        Some(
            env.ues()
                .filter(|u| match filter {
                    MeasFilter::All => true,
                    MeasFilter::Ue(id) => u.ue_id == id,
                    MeasFilter::Cell(cell) => u.serving_cell.as_deref() == Some(cell),
                })
                .map(|u| L2Measurement {
                    ue_id: u.ue_id.clone(),
                    cell_id: u.serving_cell.clone(),
                    cqi: u.cqi,
                    timestamp: now,
                })
                .collect(),
        )
    }

    pub fn handle(&self, req: &ServiceRequest, env: &RadioEnvironment, now: SimTime) -> HttpResponse {
        if req.method != Method::Get || req.path != L2_MEAS_PATH {
            return HttpResponse::problem(404, format!("no resource at {}", req.path));
        }
        let filter = match (req.query_param("ue_id"), req.query_param("cell_id")) {
            (Some(ue), _) => MeasFilter::Ue(ue),
            (None, Some(cell)) => MeasFilter::Cell(cell),
            (None, None) => MeasFilter::All,
        };
        match self.layer2_meas(env, filter, now) {
            Some(list) => HttpResponse::json(200, &json!({ "timestamp": now, "cellUEInfo": list })),
            None => HttpResponse::problem(404, "unknown UE"),
        }
    }
}
