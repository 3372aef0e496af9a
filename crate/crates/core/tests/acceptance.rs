//! Acceptance suite: one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, UdpSocket};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use mecsim_core::descriptors::{AppDescriptor, LinkSpec, ResourceVector, ScenarioConfig, MEGABYTE as MB};
use mecsim_core::http::{HttpRequest, HttpResponse};
use mecsim_core::kernel::{ClockMode, Kernel};
use mecsim_core::mechost::{Paradigm, Vim, VimError, SERVICES_PATH};
use mecsim_core::net::Endpoint;
use mecsim_core::orchestration::{
    ContextState, CreateRequest, HostDirectory, HostSnapshot, Orchestrator, APP_CONTEXTS_PATH, APP_LIST_PATH,
};
use mecsim_core::runner::{run_scenario, summarize, RunOptions};
use mecsim_core::services::{
    Callback, CircleSpec, Gnb, LocationService, Point, RadioEnvironment, Trigger, ZoneEvent, CIRCLE_PATH,
};
use mecsim_core::sim::{ProbeEvent, SimOptions, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    root().join("scenarios").join(name)
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let text = std::fs::read_to_string(root().join("docs/schemas").join(name)).expect("schema file");
    let value: Value = serde_json::from_str(&text).expect("schema JSON");
    jsonschema::JSONSchema::compile(&value).expect("valid schema")
}

fn conforms(schema_name: &str, body: &Value) -> Result<(), String> {
    let s = schema(schema_name);
    let result = s.validate(body).map_err(|errs| {
        errs.map(|e| format!("{} at {}", e, e.instance_path)).collect::<Vec<_>>().join("; ")
    });
    result.map_err(|e| format!("{schema_name}: {e}"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn descriptor(id: &str, ram_mb: u64, disk_mb: u64, cpu: u64, services: &[&str]) -> AppDescriptor {
    AppDescriptor::from_json(&json!({
        "appDId": id,
        "appName": id,
        "appProvider": "acceptance",
        "virtualComputeDescriptor": {"virtualMemory": ram_mb * MB, "virtualDisk": disk_mb * MB, "virtualCpu": cpu},
        "appServiceRequired": services,
    }))
    .expect("descriptor")
}

fn placement() -> Outcome {
    let mut sim = Simulation::load(&scenario("multiMecHost.json"), SimOptions::default()).map_err(err)?;
    let waa = sim.orchestrator().descriptor("WAA_DID").ok_or("WAA_DID not onboarded")?;
    ensure!(
        waa.virtual_compute == ResourceVector::new(10 * MB, 10 * MB, 1500) && waa.services_required == ["LocationService"],
        "descriptor is not 10MB/10MB/1500 requiring LocationService: {waa:?}"
    );
    let b1 = sim.host("mecHost1").unwrap().vim().budget();
    let b2 = sim.host("mecHost2").unwrap().vim().budget();
    ensure!(b1 == b2, "budgets differ: {b1:?} vs {b2:?}");
    sim.run(Some(5.0));
    let ctxs: Vec<_> = sim.orchestrator().contexts().collect();
    ensure!(ctxs.len() == 1, "expected one context, got {}", ctxs.len());
    ensure!(ctxs[0].state == ContextState::Running, "context is {}", ctxs[0].state);
    ensure!(ctxs[0].placed_on.as_deref() == Some("mecHost2"), "placed on {:?}", ctxs[0].placed_on);
    let h1 = sim.host("mecHost1").unwrap().vim();
    let h2 = sim.host("mecHost2").unwrap().vim();
    ensure!(h1.free() == b1, "mecHost1 allocated something");
    ensure!(h2.free() == ResourceVector::new(22 * MB, 22 * MB, 1500), "mecHost2 free {:?}", h2.free());
    Ok(format!("ctx-1 on mecHost2 at {}", ctxs[0].app_endpoint.map(|e| e.to_string()).unwrap_or_default()))
}

struct Fleet {
    vims: Vec<Vim>,
    services: Vec<Vec<String>>,
}

impl Fleet {
    fn index(&self, name: &str) -> usize {
        self.vims.iter().position(|v| v.host_name() == name).expect("known host")
    }
}

impl HostDirectory for Fleet {
    fn snapshot(&self, host: &str) -> Option<HostSnapshot> {
        let i = self.vims.iter().position(|v| v.host_name() == host)?;
        Some(HostSnapshot { name: host.to_string(), free: self.vims[i].free(), services: self.services[i].clone() })
    }

    fn instantiate(&mut self, host: &str, d: &AppDescriptor, id: &str) -> Result<Endpoint, VimError> {
        let i = self.index(host);
        self.vims[i].instantiate(d, id).map(|e| e.endpoint)
    }

    fn terminate(&mut self, host: &str, id: &str) -> Result<(), VimError> {
        let i = self.index(host);
        self.vims[i].terminate(id).map(|_| ())
    }
}

fn accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut steps = 0u64;
    let mut placed = 0u64;
    for seq in 0..1000 {
        let n_hosts = rng.gen_range(2..=4);
        let mut fleet = Fleet { vims: Vec::new(), services: Vec::new() };
        let mut budgets = Vec::new();
        for h in 0..n_hosts {
            let budget = ResourceVector::new(rng.gen_range(10..=100) * MB, rng.gen_range(10..=100) * MB, rng.gen_range(1000..=6000));
            fleet.vims.push(Vim::new(format!("h{h}"), Ipv4Addr::new(10, 20, 0, h as u8 + 1), budget, Paradigm::Segregation));
            fleet.services.push(if rng.gen_bool(0.5) { vec!["LocationService".into()] } else { vec![] });
            budgets.push(budget);
        }
        let mut orch = Orchestrator::new((0..n_hosts).map(|h| format!("h{h}")).collect(), 0.0);
        let mut demands = BTreeMap::new();
        for d in 0..4 {
            let services: &[&str] = if rng.gen_bool(0.5) { &["LocationService"] } else { &[] };
            let desc = descriptor(&format!("d{d}"), rng.gen_range(1..=40), rng.gen_range(1..=40), rng.gen_range(100..=3000), services);
            demands.insert(desc.app_d_id.clone(), desc.virtual_compute);
            orch.onboard(desc).map_err(err)?;
        }
        // Independent ledger of what each host should have handed out.
        let mut expected: Vec<ResourceVector> = vec![ResourceVector::ZERO; n_hosts];
        let mut live: Vec<(String, usize, ResourceVector)> = Vec::new();
        let len = rng.gen_range(1..=40);
        let check = |fleet: &Fleet, expected: &[ResourceVector], when: &str| -> Result<(), String> {
            for (i, v) in fleet.vims.iter().enumerate() {
                let total = v.free().checked_add(&v.allocated_total());
                if total != Some(budgets[i]) {
                    return Err(format!("seq {seq} {when}: host {i} free+alloc {total:?} != budget {:?}", budgets[i]));
                }
                if budgets[i].checked_sub(&expected[i]) != Some(v.free()) {
                    return Err(format!("seq {seq} {when}: host {i} free {:?} disagrees with ledger", v.free()));
                }
            }
            Ok(())
        };
        for step in 0..len {
            let t = step as f64;
            if live.is_empty() || rng.gen_bool(0.6) {
                let app = format!("d{}", rng.gen_range(0..4));
                let req = CreateRequest { app_d_id: Some(app.clone()), device_app_id: "dev".into(), ..Default::default() };
                let id = orch.begin_create(&req, &app, t, &mut fleet).map_err(err)?;
                let ctx = orch.complete_create(&id, t).map_err(err)?;
                if ctx.state == ContextState::Running {
                    let host = fleet.index(ctx.host_name.as_deref().ok_or("running context without host")?);
                    expected[host] = expected[host].checked_add(&demands[&app]).unwrap();
                    live.push((id, host, demands[&app]));
                    placed += 1;
                }
            } else {
                let (id, host, demand) = live.swap_remove(rng.gen_range(0..live.len()));
                orch.begin_delete(&id, t, &mut fleet).map_err(err)?;
                expected[host] = expected[host].checked_sub(&demand).unwrap();
                orch.complete_delete(&id, t).map_err(err)?;
            }
            steps += 1;
            check(&fleet, &expected, &format!("step {step}"))?;
        }
        for (id, host, demand) in live.drain(..) {
            orch.begin_delete(&id, 1e3, &mut fleet).map_err(err)?;
            orch.complete_delete(&id, 1e3).map_err(err)?;
            expected[host] = expected[host].checked_sub(&demand).unwrap();
            check(&fleet, &expected, "teardown")?;
        }
        for (i, v) in fleet.vims.iter().enumerate() {
            ensure!(v.free() == budgets[i], "seq {seq}: host {i} final free {:?} != budget", v.free());
        }
    }
    Ok(format!("1000 sequences, {steps} steps, {placed} placements"))
}

fn vim_with(paradigm: Paradigm, capacity: u64, rates: &[u64]) -> Vim {
    let budget = ResourceVector::new(u64::MAX / 2, u64::MAX / 2, capacity);
    let mut vim = Vim::new("h", Ipv4Addr::new(10, 20, 0, 1), budget, paradigm);
    for (i, &r) in rates.iter().enumerate() {
        vim.instantiate(&descriptor(&format!("a{i}"), 0, 0, r, &[]), &format!("a{i}")).expect("fits");
    }
    vim
}

fn delays() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let capacity = rng.gen_range(1000..=100_000u64);
        let k = rng.gen_range(1..=6);
        let rates: Vec<u64> = (0..k).map(|_| rng.gen_range(1..=capacity / k as u64)).collect();
        let n = rng.gen_range(1..=10_000_000u64);
        let seg = vim_with(Paradigm::Segregation, capacity, &rates);
        let fair = vim_with(Paradigm::FairSharing, capacity, &rates);
        let sum: u64 = rates.iter().sum();
        for (i, &r) in rates.iter().enumerate() {
            let id = format!("a{i}");
            let want_seg = n as f64 / r as f64;
            let share = capacity as f64 * r as f64 / sum as f64;
            let want_fair = n as f64 / share;
            let got_seg = seg.processing_time(&id, n).map_err(err)?;
            let got_fair = fair.processing_time(&id, n).map_err(err)?;
            for (got, want) in [(got_seg, want_seg), (got_fair, want_fair)] {
                let rel = ((got - want) / want).abs();
                worst = worst.max(rel);
                ensure!(rel <= 1e-9, "n={n} r={r} C={capacity} rates={rates:?}: {got} vs {want}");
            }
        }
    }
    let single = vim_with(Paradigm::FairSharing, 3000, &[1500]).processing_time("a0", 1500).map_err(err)?;
    ensure!(single == 0.5, "single-app fair sharing gives {single}");
    let double = vim_with(Paradigm::FairSharing, 3000, &[1500, 1500]).processing_time("a0", 1500).map_err(err)?;
    ensure!(double == 1.0, "two-app fair sharing gives {double}");
    for _ in 0..1000 {
        let capacity = rng.gen_range(2..=100_000u64);
        let mut cuts: Vec<u64> = (0..rng.gen_range(0..5)).map(|_| rng.gen_range(1..capacity)).collect();
        cuts.extend([0, capacity]);
        cuts.sort_unstable();
        cuts.dedup();
        let rates: Vec<u64> = cuts.windows(2).map(|w| w[1] - w[0]).collect();
        let seg = vim_with(Paradigm::Segregation, capacity, &rates);
        let fair = vim_with(Paradigm::FairSharing, capacity, &rates);
        let n = rng.gen_range(1..=10_000_000u64);
        for i in 0..rates.len() {
            let id = format!("a{i}");
            let (a, b) = (seg.processing_time(&id, n).map_err(err)?, fair.processing_time(&id, n).map_err(err)?);
            ensure!(a == b, "saturated host C={capacity} rates={rates:?}: segregation {a} != fair {b}");
        }
    }
    Ok(format!("max rel err {worst:.1e}; 0.5 s and 1.0 s cases exact"))
}

#[derive(Clone, Copy)]
enum Control {
    Add(usize, u64),
    Remove(usize),
    Submit(usize, u64),
}

struct Job {
    app: usize,
    start: f64,
    rate: u64,
    work: f64,
    snapshot: f64,
}

fn processor_sharing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut jobs_total, mut divergent, mut max_gap) = (0usize, 0usize, 0.0f64);
    for trial in 0..300 {
        let capacity = rng.gen_range(2000..=10_000u64);
        let mut vim = Vim::new("h", Ipv4Addr::new(10, 20, 0, 1), ResourceVector::new(u64::MAX / 2, u64::MAX / 2, capacity), Paradigm::FairSharing);
        let mut kernel: Kernel<usize> = Kernel::new(ClockMode::Virtual);
        let node = kernel.add_node("h");
        let mut times: Vec<f64> = (0..rng.gen_range(5..30)).map(|_| rng.gen_range(0.0..10.0)).collect();
        times.sort_by(f64::total_cmp);

        let mut active: BTreeMap<usize, u64> = BTreeMap::new();
        let mut timeline: Vec<(f64, u64)> = vec![(0.0, 0)];
        let mut jobs: Vec<Job> = Vec::new();
        let mut fired: BTreeMap<usize, f64> = BTreeMap::new();
        let mut removed_at: BTreeMap<usize, Vec<f64>> = BTreeMap::new();

        for &t in &times {
            kernel.run(Some(t), |_, ev| {
                fired.insert(ev.payload, ev.time);
            });
            let app = rng.gen_range(0..4usize);
            let control = match active.get(&app) {
                None => Control::Add(app, rng.gen_range(100..=capacity / 4)),
                Some(_) if rng.gen_bool(0.2) => Control::Remove(app),
                Some(_) => Control::Submit(app, rng.gen_range(1..=20_000)),
            };
            let id = format!("a{app}");
            match control {
                Control::Add(a, r) => {
                    vim.instantiate(&descriptor(&id, 0, 0, r, &[]), &id).map_err(err)?;
                    active.insert(a, r);
                    timeline.push((t, active.values().sum()));
                }
                Control::Remove(a) => {
                    vim.terminate(&id).map_err(err)?;
                    active.remove(&a);
                    removed_at.entry(a).or_default().push(t);
                    timeline.push((t, active.values().sum()));
                }
                Control::Submit(a, n) => {
                    let d = vim.processing_time(&id, n).map_err(err)?;
                    kernel.schedule_in(d, node, jobs.len()).map_err(err)?;
                    // Oracle: the rate C·r/Σr is fixed when the job starts;
                    // the delay is the exactly rounded rational n·Σr/(C·r).
                    let sum: u64 = active.values().sum();
                    let num = n as u128 * sum as u128;
                    let den = capacity as u128 * active[&a] as u128;
                    let snapshot = t + num as f64 / den as f64;
                    jobs.push(Job { app: a, start: t, rate: active[&a], work: n as f64, snapshot });
                }
            }
        }
        kernel.run(None, |_, ev| {
            fired.insert(ev.payload, ev.time);
        });
        ensure!(fired.len() == jobs.len(), "trial {trial}: {} jobs fired of {}", fired.len(), jobs.len());
        for (i, job) in jobs.iter().enumerate() {
            ensure!(fired[&i] == job.snapshot, "trial {trial} job {i}: kernel {} vs oracle {}", fired[&i], job.snapshot);
        }

        // Time-varying processor sharing: the share follows every change of
        // the instantiated set while the job is in service.
        for job in &jobs {
            if removed_at.get(&job.app).is_some_and(|ts| ts.iter().any(|&x| x >= job.start && x < job.snapshot)) {
                continue;
            }
            let Some(done) = shared_completion(&timeline, job, capacity) else { continue };
            jobs_total += 1;
            let gap = (done - job.snapshot).abs();
            if gap > 1e-9 * job.snapshot.max(1.0) {
                divergent += 1;
                max_gap = max_gap.max(gap);
            }
        }
    }
    Ok(format!(
        "snapshot model exact; vs time-varying PS: {divergent}/{jobs_total} jobs diverge, max gap {max_gap:.3} s (reported only)"
    ))
}

/// Completion time of `job` under true processor sharing, integrating the
/// app's share over the piecewise-constant Σr timeline.
fn shared_completion(timeline: &[(f64, u64)], job: &Job, capacity: u64) -> Option<f64> {
    let mut idx = timeline.iter().take_while(|(at, _)| *at <= job.start).count();
    let mut sum = timeline[idx - 1].1;
    let (mut t, mut left) = (job.start, job.work);
    loop {
        let rate = capacity as f64 * job.rate as f64 / sum as f64;
        let finish = t + left / rate;
        match timeline.get(idx) {
            Some(&(at, next)) if at < finish => {
                left -= rate * (at - t);
                t = at;
                sum = next;
                idx += 1;
                if sum == 0 {
                    return None;
                }
            }
            _ => return Some(finish),
        }
    }
}

fn geofence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dt = 0.1;
    let mut events = 0usize;
    for trial in 0..500 {
        let center = Point::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let radius = rng.gen_range(10.0..300.0);
        let start = Point::new(rng.gen_range(-1000.0..1000.0), rng.gen_range(-1000.0..1000.0));
        let steps = rng.gen_range(100..600);
        let horizon = steps as f64 * dt;
        // Half the trajectories aim through the circle, the rest wander.
        let velocity = if rng.gen_bool(0.5) {
            let aim = Point::new(center.x + rng.gen_range(-radius..radius), center.y + rng.gen_range(-radius..radius));
            let k = rng.gen_range(1.2..3.0) / horizon;
            Point::new((aim.x - start.x) * k, (aim.y - start.y) * k)
        } else {
            Point::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0))
        };
        let trigger = [Trigger::Both, Trigger::Entering, Trigger::Leaving][rng.gen_range(0..3)];

        let mut env = RadioEnvironment::new(vec![Gnb { id: "g".into(), position: Point::new(0.0, 0.0) }], 1000.0);
        env.add_ue("ue", start, velocity);
        let mut loc = LocationService::new();
        let spec = CircleSpec {
            center,
            radius,
            tracked_ue: Some("ue".into()),
            callback: Callback::parse("http://10.0.0.1:1/cb").map_err(err)?,
            trigger,
        };
        loc.subscribe(spec, &env).map_err(err)?;
        let mut got = Vec::new();
        for k in 1..=steps {
            env.step(dt);
            for (_, n) in loc.evaluate(&env, k as f64 * dt) {
                got.push((k, n.event, n.position.x, n.position.y));
            }
        }

        let mut want = Vec::new();
        let (mut x, mut y) = (start.x, start.y);
        let inside = |x: f64, y: f64| (x - center.x).hypot(y - center.y) <= radius;
        let mut prev = inside(x, y);
        for k in 1..=steps {
            x += velocity.x * dt;
            y += velocity.y * dt;
            let now = inside(x, y);
            if now != prev {
                let event = if now { ZoneEvent::Entering } else { ZoneEvent::Leaving };
                let selected = matches!(
                    (trigger, event),
                    (Trigger::Both, _) | (Trigger::Entering, ZoneEvent::Entering) | (Trigger::Leaving, ZoneEvent::Leaving)
                );
                if selected {
                    want.push((k, event, x, y));
                }
            }
            prev = now;
        }
        ensure!(got == want, "trial {trial}: service {got:?} vs oracle {want:?}");
        events += want.len();
    }
    Ok(format!("500 trajectories, {events} notifications matched"))
}

fn end_to_end() -> Outcome {
    let path = scenario("multiMecHost.json");
    let cfg = ScenarioConfig::parse(&std::fs::read_to_string(&path).map_err(err)?).map_err(err)?;
    let mut sim = Simulation::load(&path, SimOptions::default()).map_err(err)?;
    sim.run(Some(60.0));
    let alerts: Vec<_> = sim.records().iter().filter(|r| r.kind == "WARNING_ALERT").collect();
    ensure!(alerts.len() == 1, "{} WARNING_ALERT records", alerts.len());
    let app = sim.ue_app("car1", 0).ok_or("no UE app")?;
    let received: Vec<_> = app.alerts().iter().filter(|a| !a.exit).collect();
    ensure!(received.len() == 1, "UE app saw {} alerts", received.len());
    let a = received[0];

    let ue = &cfg.ues[0];
    let zone = &cfg.danger_zones[0];
    let (dx, dy) = (ue.initial_position.x - zone.center.x, ue.initial_position.y - zone.center.y);
    let (vx, vy) = (ue.velocity.x, ue.velocity.y);
    ensure!(dx.hypot(dy) > zone.radius, "car starts inside the zone");
    let (qa, qb, qc) = (vx * vx + vy * vy, 2.0 * (dx * vx + dy * vy), dx * dx + dy * dy - zone.radius * zone.radius);
    let crossing = (-qb - (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    let lag = a.notified_at - crossing;
    ensure!((0.0..=cfg.mobility_step + 1e-9).contains(&lag), "notified at {} but crossing at {crossing}", a.notified_at);

    // MEC app and Location service share mecHost2; the alert then goes
    // host -> UPF -> serving gNB -> car.
    let host = cfg.hosts.iter().find(|h| h.name == "mecHost2").unwrap();
    let pos = Point::new(ue.initial_position.x + vx * a.notified_at, ue.initial_position.y + vy * a.notified_at);
    let serving = cfg
        .gnbs
        .iter()
        .min_by(|g, h| g.position.distance(&pos).total_cmp(&h.position.distance(&pos)).then(g.id.cmp(&h.id)))
        .unwrap();
    let path_latency = host.attachment.latency + serving.backhaul.latency + cfg.network.radio.latency;
    let expected = a.notified_at + path_latency;
    ensure!((a.received_at - expected).abs() <= 1e-9, "received {} expected {expected}", a.received_at);
    Ok(format!("crossing {crossing:.3} s, notified {:.3} s, received {:.4} s", a.notified_at, a.received_at))
}

const EMULATED_PACKAGE: &str = r#"{
    "appDId": "WAA_EXT", "appName": "ExternalWarningAlert", "appProvider": "acceptance",
    "virtualComputeDescriptor": {"virtualMemory": "10MB", "virtualDisk": "10MB", "virtualCpu": 1500},
    "appServiceRequired": [],
    "emulatedMecApplication": {"ipAddress": "10.40.0.1", "port": 4001}
}"#;

fn external_app() -> Outcome {
    let cfg_text = format!(
        r#"{{"hosts": [
            {{"name": "mecHost1", "budget": {{"ram": "32MB", "disk": "32MB", "cpu": 3000}}, "services": ["LocationService"]}},
            {{"name": "mecHost2", "budget": {{"ram": "32MB", "disk": "32MB", "cpu": 3000}}}}],
           "orchestrator": {{"onboardedPackages": [{EMULATED_PACKAGE}], "processingDelay": 0.01}}}}"#
    );
    let cfg = ScenarioConfig::parse(&cfg_text).map_err(err)?;
    ensure!(cfg.declares_external(), "scenario with an emulated app must need the realtime clock");
    let mut sim = Simulation::build(&cfg, SimOptions::default()).map_err(err)?;
    let probe = sim.add_probe("probe", Ipv4Addr::new(10, 99, 0, 1), "upf", LinkSpec::default()).map_err(err)?;
    let body = json!({"associateDevAppId": "dev", "appInfo": {"appName": "ExternalWarningAlert"}});
    let ualcmp = sim.ualcmp_endpoint();
    let resp = sim
        .probe_exchange(probe, ualcmp, &HttpRequest::post_json(APP_CONTEXTS_PATH, &body), 1.0)
        .ok_or("no Mx2 response")?;
    ensure!(resp.status == 201, "create returned {}", resp.status);
    let v = resp.json_body().ok_or("no body")?;
    let ep = &v["appInfo"]["userAppInstanceInfo"][0]["appEndpoint"];
    ensure!(ep == &json!({"address": "10.40.0.1", "port": 4001}), "endpoint {ep}");
    ensure!(v["state"] == "RUNNING", "state {}", v["state"]);
    let ctx = sim.orchestrator().contexts().next().unwrap();
    ensure!(ctx.app_endpoint == Some("10.40.0.1:4001".parse().unwrap()), "context endpoint {:?}", ctx.app_endpoint);
    for h in sim.hosts() {
        let vim = h.vim();
        ensure!(vim.free() == vim.budget() && vim.apps().count() == 0, "{} allocated resources", vim.host_name());
    }

    let echo = UdpSocket::bind("127.0.0.1:0").map_err(err)?;
    echo.set_read_timeout(Some(Duration::from_millis(20))).map_err(err)?;
    let echo_port = echo.local_addr().map_err(err)?.port();
    let stop = Arc::new(AtomicBool::new(false));
    let (seen_tx, seen_rx) = mpsc::channel();
    let stop_echo = stop.clone();
    let server = thread::spawn(move || {
        let mut buf = [0u8; 65536];
        while !stop_echo.load(Ordering::Relaxed) {
            if let Ok((n, from)) = echo.recv_from(&mut buf) {
                let _ = seen_tx.send(buf[..n].to_vec());
                let _ = echo.send_to(&buf[..n], from);
            }
        }
    });

    let rt_text = format!(
        r#"{{"natRouters": [{{"name": "nat", "interfaces": ["10.40.0.1"], "attachment": {{"node": "upf", "latency": 0.001}},
              "rules": [{{"external": "10.40.0.1:7000", "internal": "127.0.0.1:{echo_port}"}}]}}],
           "bridges": [{{"name": "ext", "mode": "udpDatagram", "local": "127.0.0.1:0", "remoteAddresses": ["127.0.0.1"],
              "target": "10.40.0.1:7000", "attachment": {{"node": "upf", "latency": 0.001}}}}]}}"#
    );
    let rt_cfg = ScenarioConfig::parse(&rt_text).map_err(err)?;
    let mut rt = Simulation::build(&rt_cfg, SimOptions { mode: ClockMode::realtime(), ..SimOptions::default() }).map_err(err)?;
    let bridge = rt.bridge_addr("ext").ok_or("bridge not bound")?;
    let client = UdpSocket::bind("127.0.0.1:0").map_err(err)?;
    client.set_read_timeout(Some(Duration::from_secs(2))).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let payloads: Vec<Vec<u8>> = [1usize, 17, 512, 1400, 8000]
        .iter()
        .map(|&n| (0..n).map(|_| rng.gen()).collect())
        .collect();
    for p in &payloads {
        client.send_to(p, bridge).map_err(err)?;
    }
    rt.run(Some(0.5));
    let mut back = Vec::new();
    let mut buf = [0u8; 65536];
    while back.len() < payloads.len() {
        match client.recv_from(&mut buf) {
            Ok((n, from)) => {
                ensure!(from == bridge, "reply from {from}, expected the bridge {bridge}");
                back.push(buf[..n].to_vec());
            }
            Err(e) => {
                stop.store(true, Ordering::Relaxed);
                return Err(format!("only {} of {} echoes came back: {e}", back.len(), payloads.len()));
            }
        }
    }
    stop.store(true, Ordering::Relaxed);
    server.join().map_err(|_| "echo thread panicked")?;
    let mut seen: Vec<Vec<u8>> = seen_rx.try_iter().collect();
    let mut sent = payloads.clone();
    sent.sort();
    seen.sort();
    back.sort();
    ensure!(seen == sent, "server-side payloads differ from what the client sent");
    ensure!(back == sent, "client-side payloads differ from what was echoed");
    let translations = rt.records().iter().filter(|r| r.kind == "NAT_TRANSLATE").count();
    ensure!(translations == payloads.len(), "{translations} NAT translations for {} packets", payloads.len());
    Ok(format!("endpoint 10.40.0.1:4001, 0 allocated; {} payloads echoed via NAT", payloads.len()))
}

fn expect(resp: &HttpResponse, status: u16, schema_name: Option<&str>, what: &str) -> Result<(), String> {
    if resp.status != status {
        return Err(format!("{what}: status {} (want {status}), body {}", resp.status, String::from_utf8_lossy(&resp.body)));
    }
    match schema_name {
        Some(s) => conforms(s, &resp.json_body().ok_or(format!("{what}: body is not JSON"))?),
        None if resp.body.is_empty() => Ok(()),
        None => Err(format!("{what}: expected an empty body")),
    }
}

fn conformance() -> Outcome {
    let mut sim = Simulation::load(&scenario("multiMecHost.json"), SimOptions::default()).map_err(err)?;
    let p = sim.add_probe("probe", Ipv4Addr::new(10, 99, 0, 1), "upf", LinkSpec { latency: 0.001, bitrate: None }).map_err(err)?;
    let ualcmp = sim.ualcmp_endpoint();
    let mut checks = 0;
    let mut call = |sim: &mut Simulation, dst: Endpoint, req: HttpRequest| {
        checks += 1;
        sim.probe_exchange(p, dst, &req, 2.0).ok_or_else(|| format!("no response to {} {}", req.method, req.target))
    };
    const PROBLEM: Option<&str> = Some("problem_details.schema.json");

    let list = call(&mut sim, ualcmp, HttpRequest::get(APP_LIST_PATH))?;
    expect(&list, 200, Some("app_list.schema.json"), "GET app_list")?;
    let create = json!({"associateDevAppId": "probe", "callbackReference": "http://10.99.0.1:9000/cb", "appInfo": {"appDId": "WAA_DID"}});
    let created = call(&mut sim, ualcmp, HttpRequest::post_json(APP_CONTEXTS_PATH, &create))?;
    expect(&created, 201, Some("app_context.schema.json"), "POST app_contexts")?;
    let body = created.json_body().unwrap();
    let id = body["contextId"].as_str().unwrap().to_string();
    let location = format!("{APP_CONTEXTS_PATH}/{id}");
    ensure!(created.header("location") == Some(location.as_str()), "Location header {:?}", created.header("location"));
    ensure!(body["state"] == "RUNNING", "created context is {}", body["state"]);

    let mp1_h2 = Endpoint::new(sim.host("mecHost2").unwrap().address(), 10021);
    let mp1_h1 = Endpoint::new(sim.host("mecHost1").unwrap().address(), 10021);
    let target = format!("{SERVICES_PATH}?ser_name=LocationService");
    let services = call(&mut sim, mp1_h2, HttpRequest::get(target.clone()))?;
    expect(&services, 200, Some("service_info_list.schema.json"), "GET services on mecHost2")?;
    let found = services.json_body().unwrap();
    ensure!(found.as_array().map(Vec::len) == Some(1) && found[0]["serName"] == "LocationService", "services {found}");
    let none = call(&mut sim, mp1_h1, HttpRequest::get(target))?;
    expect(&none, 200, Some("service_info_list.schema.json"), "GET services on mecHost1")?;
    ensure!(none.json_body().unwrap() == json!([]), "mecHost1 lists services");

    let loc = Endpoint::new(sim.host("mecHost2").unwrap().address(), 10020);
    let sub = json!({"circleNotificationSubscription": {
        "callbackReference": {"notifyURL": "http://10.99.0.1:9000/notify"},
        "address": "car1", "center": {"x": 300.0, "y": 0.0}, "radius": 50.0, "enteringLeavingCriteria": "Entering"}});
    let subscribed = call(&mut sim, loc, HttpRequest::post_json(CIRCLE_PATH, &sub))?;
    ensure!(subscribed.status == 201, "circle subscription returned {}", subscribed.status);

    ensure!(sim.now() < 20.0, "exchanges took too long");
    sim.run(Some(26.0));
    let note = sim
        .probe_inbox(p)
        .iter()
        .find_map(|r| match &r.event {
            ProbeEvent::Request { request, .. } if request.path() == "/notify" => serde_json::from_slice::<Value>(&request.body).ok(),
            _ => None,
        })
        .ok_or("no location notification reached the probe")?;
    conforms("location_notification.schema.json", &note)?;

    let deleted = call(&mut sim, ualcmp, HttpRequest::delete(location.clone()))?;
    expect(&deleted, 204, None, "DELETE app_contexts/{id}")?;
    let again = call(&mut sim, ualcmp, HttpRequest::delete(location))?;
    expect(&again, 409, PROBLEM, "DELETE terminated context")?;
    let unknown = call(&mut sim, ualcmp, HttpRequest::delete(format!("{APP_CONTEXTS_PATH}/ctx-999")))?;
    expect(&unknown, 404, PROBLEM, "DELETE unknown context")?;
    let bad_app = json!({"associateDevAppId": "probe", "appInfo": {"appDId": "NOPE"}});
    let missing = call(&mut sim, ualcmp, HttpRequest::post_json(APP_CONTEXTS_PATH, &bad_app))?;
    expect(&missing, 404, PROBLEM, "POST unknown appDId")?;
    let mut malformed = HttpRequest::post_json(APP_CONTEXTS_PATH, &json!({}));
    malformed.body = b"{not json".to_vec();
    malformed.headers.retain(|(k, _)| !k.eq_ignore_ascii_case("content-length"));
    malformed.headers.push(("Content-Length".into(), malformed.body.len().to_string()));
    let bad = call(&mut sim, ualcmp, malformed)?;
    expect(&bad, 400, PROBLEM, "POST malformed body")?;
    let patch = call(&mut sim, ualcmp, HttpRequest { method: "PATCH".into(), ..HttpRequest::get(APP_LIST_PATH) })?;
    expect(&patch, 501, PROBLEM, "PATCH app_list")?;
    let nowhere = call(&mut sim, ualcmp, HttpRequest::get("/dev_app/v1/nothing"))?;
    expect(&nowhere, 404, PROBLEM, "GET unknown route")?;
    Ok(format!("{checks} exchanges conform"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let text = std::fs::read_to_string(scenario("multiMecHost.json")).map_err(err)?;
    let jittered = text.replace("\"startTime\": 1.0", "\"startTime\": 1.0, \"startJitter\": 3.0");
    let path = dir.path().join("jitter.json");
    std::fs::write(&path, jittered).map_err(err)?;
    std::fs::copy(scenario("WarningAlertApp.json"), dir.path().join("WarningAlertApp.json")).map_err(err)?;
    let mut logs = Vec::new();
    for run in 0..2 {
        let log = dir.path().join(format!("run{run}.jsonl"));
        let opts = RunOptions { seed: 42, log_path: Some(log.clone()), ..RunOptions::default() };
        let summary = run_scenario(&path, &opts).map_err(err)?;
        ensure!(summarize(&log).map_err(err)? == summary, "summary rebuilt from the log differs");
        logs.push(std::fs::read(&log).map_err(err)?);
    }
    ensure!(!logs[0].is_empty(), "empty log");
    ensure!(logs[0] == logs[1], "logs differ");
    let other = dir.path().join("other.jsonl");
    run_scenario(&path, &RunOptions { seed: 43, log_path: Some(other.clone()), ..RunOptions::default() }).map_err(err)?;
    let differs = std::fs::read(&other).map_err(err)? != logs[0];
    Ok(format!("{} bytes identical; another seed {}", logs[0].len(), if differs { "differs" } else { "matches" }))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 placement on mecHost2", placement),
        ("AC2 resource accounting", accounting),
        ("AC3 delay paradigms", delays),
        ("AC4 fair-sharing snapshot oracle", processor_sharing),
        ("AC5 geofence notifications", geofence),
        ("AC6 end-to-end WarningAlert", end_to_end),
        ("AC7 external app and NAT echo", external_app),
        ("AC8 Mx2/Mp1 conformance", conformance),
        ("AC9 deterministic logs", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(note) => println!("PASS {name}: {note} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
