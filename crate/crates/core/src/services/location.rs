//! Location service: user position queries and circle-area subscriptions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::radio::{Point, RadioEnvironment};
use crate::http::{HttpResponse, Method};
use crate::kernel::{EventHandle, SimTime};
use crate::mechost::ServiceRequest;
use crate::net::Endpoint;

pub const USERS_PATH: &str = "/location/v2/queries/users";
pub const CIRCLE_PATH: &str = "/location/v2/subscriptions/area/circle";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocationError {
    #[error("radius must be positive")]
    BadRadius,
    #[error("unknown subscription `{0}`")]
    UnknownSubscription(String),
    #[error("unknown UE `{0}`")]
    UnknownUe(String),
    #[error("bad notify URL `{0}`")]
    BadCallback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Trigger {
    Entering,
    Leaving,
    #[default]
    Both,
}

impl Trigger {
    fn fires(&self, event: ZoneEvent) -> bool {
        matches!(
            (self, event),
            (Trigger::Both, _) | (Trigger::Entering, ZoneEvent::Entering) | (Trigger::Leaving, ZoneEvent::Leaving)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneEvent {
    Entering,
    Leaving,
}

/// Where notifications are POSTed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Callback {
    pub endpoint: Endpoint,
    pub path: String,
}

impl Callback {
    /// Parse `http://a.b.c.d:port/path`.
    pub fn parse(url: &str) -> Result<Callback, LocationError> {
        let bad = || LocationError::BadCallback(url.to_string());
        let rest = url.strip_prefix("http://").ok_or_else(bad)?;
        let (authority, path) = match rest.find('/') {
            Some(i) => rest.split_at(i),
            None => (rest, "/"),
        };
        let endpoint = authority.parse().map_err(|_| bad())?;
        Ok(Callback { endpoint, path: path.to_string() })
    }

    pub fn url(&self) -> String {
        format!("http://{}{}", self.endpoint, self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSpec {
    pub center: Point,
    pub radius: f64,
    /// `None` tracks every UE.
    pub tracked_ue: Option<String>,
    pub callback: Callback,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircleSubscription {
    pub subscription_id: String,
    pub spec: CircleSpec,
    pub last_inside: BTreeMap<String, bool>,
}

impl CircleSubscription {
    fn inside(&self, p: &Point) -> bool {
        p.distance(&self.spec.center) <= self.spec.radius
    }

    fn tracks(&self, ue_id: &str) -> bool {
        self.spec.tracked_ue.as_deref().is_none_or(|t| t == ue_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LocationNotification {
    pub subscription_id: String,
    pub ue_id: String,
    pub event: ZoneEvent,
    pub position: Point,
    pub timestamp: SimTime,
}

impl LocationNotification {
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "subscriptionNotification": self })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<LocationNotification> {
        serde_json::from_value(v.get("subscriptionNotification")?.clone()).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UserLocation {
    pub address: String,
    pub access_point_id: Option<String>,
    pub location_info: Point,
    pub timestamp: SimTime,
}

#[derive(Debug, Default)]
pub struct LocationService {
    subscriptions: BTreeMap<String, CircleSubscription>,
    next_id: u64,
    inflight: BTreeMap<String, Vec<EventHandle>>,
    orphaned: Vec<EventHandle>,
}

impl LocationService {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscription(&self, id: &str) -> Option<&CircleSubscription> {
        self.subscriptions.get(id)
    }

    pub fn subscription_count(&self) -> usize {
        self.subscriptions.len()
    }

    pub fn user_location(&self, env: &RadioEnvironment, ue_id: &str, now: SimTime) -> Result<UserLocation, LocationError> {
        let ue = env.ue(ue_id).ok_or_else(|| LocationError::UnknownUe(ue_id.to_string()))?;
        Ok(UserLocation {
            address: ue.ue_id.clone(),
            access_point_id: ue.serving_cell.clone(),
            location_info: ue.position,
            timestamp: now,
        })
    }

    /// Store a subscription; inside/outside state starts from current positions.
    pub fn subscribe(&mut self, spec: CircleSpec, env: &RadioEnvironment) -> Result<String, LocationError> {
        if !(spec.radius > 0.0) || !spec.radius.is_finite() {
            return Err(LocationError::BadRadius);
        }
        self.next_id += 1;
        let id = format!("circle-{}", self.next_id);
        let mut sub = CircleSubscription { subscription_id: id.clone(), spec, last_inside: BTreeMap::new() };
        let seeded: BTreeMap<String, bool> = env
            .ues()
            .filter(|u| sub.tracks(&u.ue_id))
            .map(|u| (u.ue_id.clone(), sub.inside(&u.position)))
            .collect();
        sub.last_inside = seeded;
        self.subscriptions.insert(id.clone(), sub);
        Ok(id)
    }

    /// Remove a subscription; returns the in-flight notification events that
    /// must be cancelled.
    pub fn unsubscribe(&mut self, id: &str) -> Result<Vec<EventHandle>, LocationError> {
        self.subscriptions
            .remove(id)
            .ok_or_else(|| LocationError::UnknownSubscription(id.to_string()))?;
        Ok(self.inflight.remove(id).unwrap_or_default())
    }

    /// Drop every subscription notifying `endpoint`.
    pub fn unsubscribe_callback(&mut self, endpoint: Endpoint) -> Vec<EventHandle> {
        let ids: Vec<String> = self
            .subscriptions
            .values()
            .filter(|s| s.spec.callback.endpoint == endpoint)
            .map(|s| s.subscription_id.clone())
            .collect();
        ids.iter().flat_map(|id| self.unsubscribe(id).unwrap_or_default()).collect()
    }

    /// Record the kernel event carrying a notification so it can be
    /// suppressed if the subscription goes away before delivery.
    pub fn track_inflight(&mut self, subscription_id: &str, handle: EventHandle, is_pending: impl Fn(EventHandle) -> bool) {
        let list = self.inflight.entry(subscription_id.to_string()).or_default();
        list.retain(|h| is_pending(*h));
        list.push(handle);
    }

    /// Compare current positions against the stored inside/outside state and
    /// emit a notification for every transition the trigger selects.
    pub fn evaluate(&mut self, env: &RadioEnvironment, now: SimTime) -> Vec<(Callback, LocationNotification)> {
        let mut out = Vec::new();
        for sub in self.subscriptions.values_mut() {
            for ue in env.ues() {
                if !sub.tracks(&ue.ue_id) {
                    continue;
                }
                let inside = sub.inside(&ue.position);
                let previous = sub.last_inside.insert(ue.ue_id.clone(), inside);
                let event = match (previous, inside) {
                    (Some(false), true) => ZoneEvent::Entering,
                    (Some(true), false) => ZoneEvent::Leaving,
                    // UEs appearing after subscription time only seed state.
                    _ => continue,
                };
                if sub.spec.trigger.fires(event) {
                    out.push((
                        sub.spec.callback.clone(),
                        LocationNotification {
                            subscription_id: sub.subscription_id.clone(),
                            ue_id: ue.ue_id.clone(),
                            event,
                            position: ue.position,
                            timestamp: now,
                        },
                    ));
                }
            }
        }
        out
    }

    pub fn handle(&mut self, req: &ServiceRequest, env: &RadioEnvironment, now: SimTime) -> HttpResponse {
        match (req.method, req.path.as_str()) {
            (Method::Get, USERS_PATH) => match req.query_param("address") {
                Some(addr) => match self.user_location(env, addr, now) {
                    Ok(loc) => HttpResponse::json(200, &json!({ "userInfo": loc })),
                    Err(e) => HttpResponse::problem(404, e.to_string()),
                },
                None => {
                    let all: Vec<_> = env
                        .ues()
                        .map(|u| self.user_location(env, &u.ue_id, now).expect("listed UE exists"))
                        .collect();
                    HttpResponse::json(200, &json!({ "userList": all }))
                }
            },
            (Method::Post, CIRCLE_PATH) => self.handle_subscribe(req, env),
            (Method::Delete, path) if path.starts_with(CIRCLE_PATH) => {
                let id = path[CIRCLE_PATH.len()..].trim_start_matches('/');
                match self.unsubscribe(id) {
                    Ok(handles) => {
                        self.orphaned.extend(handles);
                        HttpResponse::empty(204)
                    }
                    Err(e) => HttpResponse::problem(404, e.to_string()),
                }
            }
            _ => HttpResponse::problem(404, format!("no resource at {}", req.path)),
        }
    }

    /// Handles of notifications orphaned by REST unsubscribes since the
    /// last call; the owner cancels them in the kernel.
    pub fn take_orphaned(&mut self) -> Vec<EventHandle> {
        std::mem::take(&mut self.orphaned)
    }

    fn handle_subscribe(&mut self, req: &ServiceRequest, env: &RadioEnvironment) -> HttpResponse {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct CallbackReference {
            #[serde(rename = "notifyURL")]
            notify_url: String,
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct Body {
            callback_reference: CallbackReference,
            #[serde(default)]
            address: Option<String>,
            center: Point,
            radius: f64,
            #[serde(default)]
            entering_leaving_criteria: Trigger,
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct Envelope {
            circle_notification_subscription: Body,
        }

        let body: Envelope = match serde_json::from_slice(&req.body) {
            Ok(b) => b,
            Err(e) => return HttpResponse::problem(400, e.to_string()),
        };
        let b = body.circle_notification_subscription;
        let callback = match Callback::parse(&b.callback_reference.notify_url) {
            Ok(c) => c,
            Err(e) => return HttpResponse::problem(400, e.to_string()),
        };
        let spec = CircleSpec {
            center: b.center,
            radius: b.radius,
            tracked_ue: b.address.clone(),
            callback,
            trigger: b.entering_leaving_criteria,
        };
        match self.subscribe(spec, env) {
            Ok(id) => {
                let resource = format!("{CIRCLE_PATH}/{id}");
                let mut resp = HttpResponse::json(
                    201,
                    &json!({ "circleNotificationSubscription": {
                        "subscriptionId": id,
                        "resourceURL": resource,
                        "callbackReference": { "notifyURL": b.callback_reference.notify_url },
                        "address": b.address,
                        "center": b.center,
                        "radius": b.radius,
                        "enteringLeavingCriteria": b.entering_leaving_criteria,
                    }}),
                );
                resp.headers.push(("Location".into(), resource));
                resp
            }
            Err(e) => HttpResponse::problem(400, e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::HttpRequest;
    use crate::services::radio::Gnb;
    use std::net::Ipv4Addr;

    fn env_with(ue: Point, v: Point) -> RadioEnvironment {
        let mut env = RadioEnvironment::new(vec![Gnb { id: "g".into(), position: Point::default() }], 1000.0);
        env.add_ue("car", ue, v);
        env
    }

    fn spec(trigger: Trigger) -> CircleSpec {
        CircleSpec {
            center: Point::new(0.0, 0.0),
            radius: 100.0,
            tracked_ue: Some("car".into()),
            callback: Callback { endpoint: Endpoint::new(Ipv4Addr::LOCALHOST, 4001), path: "/notify".into() },
            trigger,
        }
    }

    // Brute force: replay the same position updates and list transitions.
    fn first_entering_step(start: f64, v: f64, dt: f64, r: f64, steps: usize) -> Option<usize> {
        let mut x = start;
        let mut inside = x.abs() <= r;
        for k in 1..=steps {
            x += v * dt;
            let now_inside = x.abs() <= r;
            if now_inside && !inside {
                return Some(k);
            }
            inside = now_inside;
        }
        None
    }

    #[test]
    fn entering_at_first_crossing_step() {
        let mut env = env_with(Point::new(150.0, 0.0), Point::new(-10.0, 0.0));
        let mut loc = LocationService::new();
        loc.subscribe(spec(Trigger::Both), &env).unwrap();
        let expected = first_entering_step(150.0, -10.0, 0.1, 100.0, 1000).unwrap();
        let mut got = None;
        for k in 1..=1000 {
            env.step(0.1);
            let notes = loc.evaluate(&env, k as f64 * 0.1);
            if let Some((_, n)) = notes.first() {
                assert_eq!(n.event, ZoneEvent::Entering);
                got = Some(k);
                break;
            }
        }
        assert_eq!(got, Some(expected));
        // Roughly 5 s of travel at 10 m/s, sampled every 0.1 s.
        assert!((49..=51).contains(&expected));
    }

    #[test]
    fn start_inside_entering_only_waits_for_reentry() {
        // Out along +x, back along -x: leave at x > 100, re-enter on the way back.
        let mut env = env_with(Point::new(90.0, 0.0), Point::new(10.0, 0.0));
        let mut loc = LocationService::new();
        loc.subscribe(spec(Trigger::Entering), &env).unwrap();
        let mut events = vec![];
        for k in 1..=4 {
            env.step(1.0);
            events.extend(loc.evaluate(&env, k as f64).into_iter().map(|(_, n)| n.event));
        }
        assert!(events.is_empty(), "leaving must not be reported under Entering");
        let mut back = env_with(env.ue("car").unwrap().position, Point::new(-10.0, 0.0));
        let sub = loc.subscriptions.values_mut().next().unwrap();
        sub.last_inside.insert("car".into(), false);
        for k in 1..=4 {
            back.step(1.0);
            events.extend(loc.evaluate(&back, k as f64).into_iter().map(|(_, n)| n.event));
        }
        assert_eq!(events, vec![ZoneEvent::Entering]);
    }

    #[test]
    fn bad_radius_and_unsubscribe() {
        let env = env_with(Point::default(), Point::default());
        let mut loc = LocationService::new();
        let mut s = spec(Trigger::Both);
        s.radius = 0.0;
        assert_eq!(loc.subscribe(s, &env), Err(LocationError::BadRadius));
        let id = loc.subscribe(spec(Trigger::Both), &env).unwrap();
        assert!(loc.unsubscribe(&id).is_ok());
        assert_eq!(loc.unsubscribe(&id), Err(LocationError::UnknownSubscription(id)));
    }

    #[test]
    fn user_location_queries() {
        let mut env = env_with(Point::new(10.0, 0.0), Point::new(10.0, 0.0));
        let mut loc = LocationService::new();
        let get = |loc: &mut LocationService, env: &RadioEnvironment, addr: &str| {
            let req = ServiceRequest::from_http(&HttpRequest::get(format!("{USERS_PATH}?address={addr}"))).unwrap();
            loc.handle(&req, env, 1.0)
        };
        let resp = get(&mut loc, &env, "car");
        assert_eq!(resp.status, 200);
        assert_eq!(resp.json_body().unwrap()["userInfo"]["locationInfo"], json!({"x": 10.0, "y": 0.0}));
        env.step(1.0);
        let resp = get(&mut loc, &env, "car");
        assert_eq!(resp.json_body().unwrap()["userInfo"]["locationInfo"]["x"], json!(20.0));
        assert_eq!(get(&mut loc, &env, "nobody").status, 404);
    }

    #[test]
    fn rest_subscribe_and_delete() {
        let env = env_with(Point::new(150.0, 0.0), Point::default());
        let mut loc = LocationService::new();
        let body = json!({"circleNotificationSubscription": {
            "callbackReference": {"notifyURL": "http://10.20.0.2:4001/notify"},
            "address": "car", "center": {"x": 0.0, "y": 0.0}, "radius": 100.0,
            "enteringLeavingCriteria": "Entering"}});
        let req = ServiceRequest::from_http(&HttpRequest::post_json(CIRCLE_PATH, &body)).unwrap();
        let resp = loc.handle(&req, &env, 0.0);
        assert_eq!(resp.status, 201);
        let id = resp.json_body().unwrap()["circleNotificationSubscription"]["subscriptionId"]
            .as_str()
            .unwrap()
            .to_string();
        let sub = loc.subscription(&id).unwrap();
        assert_eq!(sub.spec.callback.url(), "http://10.20.0.2:4001/notify");
        assert_eq!(sub.last_inside.get("car"), Some(&false));

        let del = ServiceRequest::from_http(&HttpRequest::delete(format!("{CIRCLE_PATH}/{id}"))).unwrap();
        assert_eq!(loc.handle(&del, &env, 0.0).status, 204);
        assert_eq!(loc.handle(&del, &env, 0.0).status, 404);

        let mut zero = body.clone();
        zero["circleNotificationSubscription"]["radius"] = json!(0.0);
        let req = ServiceRequest::from_http(&HttpRequest::post_json(CIRCLE_PATH, &zero)).unwrap();
        assert_eq!(loc.handle(&req, &env, 0.0).status, 400);
    }
}
