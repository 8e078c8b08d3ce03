//! The ride-lifecycle benchmark.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use serde::Serialize;

use crate::canonical;
use crate::chaincode::{self, GeoPoint, UserRole};
use crate::config::{ConfigError, NetworkConfig};
use crate::identity::{Credentials, MspId, Role};
use crate::ledger::StateKey;
use crate::netsim::{Scheduler, SimRng, SimTime};
use crate::txflow::{
    AppDriver, ClientId, Counters, Notification, SimNetwork, SimWorld, TxHandle, TxRecord,
};

use super::{virtual_timestamp, DelayStream, TrafficProfile, WorkloadError};

/// The six lifecycle invocations every solo ride needs, in order.
pub const LIFECYCLE_FUNCTIONS: [&str; 6] = [
    "requestRide",
    "acceptRide",
    "setRideDestination",
    "pickupRider",
    "dropoffRider",
    "leaveDriver",
];

/// Functions that emit a chaincode event.
const EVENT_FUNCTIONS: [&str; 4] = ["requestRide", "acceptRide", "pickupRider", "dropoffRider"];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub rides: usize,
    pub profile: TrafficProfile,
    /// Logical submitter clients bound to each organization.
    pub submitters_per_org: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            rides: 1000,
            profile: TrafficProfile::ConstantRate {
                delay_ms: 100.0,
                deviation_frac: 0.3,
            },
            submitters_per_org: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowMean {
    pub window: usize,
    pub samples: usize,
    pub peer_ms: f64,
    pub orderer_ms: f64,
    pub event_ms: f64,
}

/// Everything one benchmark run produced.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub config_echo: serde_json::Value,
    pub counters: Counters,
    pub records: Vec<TxRecord>,
    pub peer_mean_ms: f64,
    pub orderer_mean_ms: f64,
    pub event_mean_ms: f64,
    /// Means over each consecutive window of 1000 transactions.
    pub window_means: Vec<WindowMean>,
    pub tps_committed: f64,
    pub duration_ms: f64,
    pub events_expected: u64,
    pub stalled_rides: u64,
}

impl BenchReport {
    /// One row per submitted transaction. Millisecond columns are blank
    /// for phases a transaction never reached.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tx_id,ride_id,fn,peer_ms,orderer_ms,event_ms,valid,block_height\n");
        for r in &self.records {
            let ms = |from: SimTime, to: Option<SimTime>| -> String {
                to.map(|t| format!("{:.3}", t.since(from) as f64 / 1000.0))
                    .unwrap_or_default()
            };
            let peer = ms(r.t_submit, r.t_endorsed);
            let orderer = r
                .t_order_submit
                .map(|s| ms(s, r.t_ack))
                .unwrap_or_default();
            let event = r
                .t_order_submit
                .map(|s| ms(s, r.t_event))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.tx_id,
                r.ride_id,
                r.function,
                peer,
                orderer,
                event,
                r.valid.map(|v| v.to_string()).unwrap_or_default(),
                r.height.map(|h| h.to_string()).unwrap_or_default(),
            ));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config_echo,
            "totals": {
                "submitted": self.counters.submitted,
                "committed_valid": self.counters.committed_valid,
                "committed_invalid": self.counters.committed_invalid,
                "policy_unsatisfied": self.counters.policy_unsatisfied,
                "divergence_failures": self.counters.divergence_failures,
                "chaincode_rejected": self.counters.chaincode_rejected,
                "version_mismatch": self.counters.version_mismatch,
                "retries": self.counters.retries,
                "read_after_write_flags": self.counters.raw_flags,
                "events_delivered": self.counters.events_delivered,
                "events_expected": self.events_expected,
                "duplicate_event_deliveries": self.counters.duplicate_event_deliveries,
                "stalled_rides": self.stalled_rides,
            },
            "latency_ms": {
                "peer_mean": round3(self.peer_mean_ms),
                "orderer_mean": round3(self.orderer_mean_ms),
                "event_mean": round3(self.event_mean_ms),
                "windows": self.window_means.iter().map(|w| serde_json::json!({
                    "window": w.window,
                    "samples": w.samples,
                    "peer_mean": round3(w.peer_ms),
                    "orderer_mean": round3(w.orderer_ms),
                    "event_mean": round3(w.event_ms),
                })).collect::<Vec<_>>(),
            },
            "tps_committed": round3(self.tps_committed),
            "duration_virtual_ms": round3(self.duration_ms),
        })
    }

    /// Canonical summary bytes, stable across runs with the same seed.
    pub fn summary_bytes(&self) -> Vec<u8> {
        canonical::canonical_bytes(&self.summary_json())
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

struct RideActors {
    rider: Credentials,
    driver: Credentials,
    ride_key: String,
    ride_id: String,
    pickup: GeoPoint,
    dropoff: GeoPoint,
    step: usize,
    inflight: bool,
    stalled: bool,
}

struct Submitter {
    client: ClientId,
    rides: Vec<usize>,
    cursor: usize,
    next_at: SimTime,
    idle: bool,
    tick_seq: u64,
    stream: DelayStream,
    rng: SimRng,
}

struct BenchState {
    submitters: Vec<Submitter>,
    rides: Vec<RideActors>,
    handles: BTreeMap<TxHandle, (usize, usize)>,
    next_handle: TxHandle,
}

impl BenchState {
    /// Submit the next lifecycle step of the first ready ride, rotating
    /// fairly. Returns false when no ride is ready.
    fn submit_next_ready(
        &mut self,
        net: &mut SimNetwork,
        sched: &mut Scheduler<SimWorld>,
        sub_idx: usize,
    ) -> bool {
        let assigned = self.submitters[sub_idx].rides.clone();
        let n = assigned.len();
        if n == 0 {
            return false;
        }
        let start = self.submitters[sub_idx].cursor;
        for offset in 0..n {
            let ride_idx = assigned[(start + offset) % n];
            let ready = {
                let ride = &self.rides[ride_idx];
                !ride.inflight && !ride.stalled && ride.step < LIFECYCLE_FUNCTIONS.len()
            };
            if !ready {
                continue;
            }
            self.submitters[sub_idx].cursor = (start + offset + 1) % n;
            let handle = self.next_handle;
            self.next_handle += 1;
            self.handles.insert(handle, (sub_idx, ride_idx));
            let now_ts = virtual_timestamp(sched.now());
            let ride = &mut self.rides[ride_idx];
            ride.inflight = true;
            let (creds, function, args) = lifecycle_invocation(ride, ride.step, &now_ts);
            let client = self.submitters[sub_idx].client.clone();
            let ride_id = ride.ride_id.clone();
            net.submit(sched, &client, &creds, function, args, &ride_id, handle);
            return true;
        }
        false
    }
}

fn lifecycle_invocation(
    ride: &RideActors,
    step: usize,
    now_ts: &str,
) -> (Credentials, &'static str, Vec<String>) {
    let key = ride.ride_key.clone();
    match LIFECYCLE_FUNCTIONS[step] {
        "requestRide" => (
            ride.rider.clone(),
            "requestRide",
            vec![ride.pickup.canonical()],
        ),
        "acceptRide" => (ride.driver.clone(), "acceptRide", vec![key]),
        "setRideDestination" => (
            ride.rider.clone(),
            "setRideDestination",
            vec![key, ride.dropoff.canonical()],
        ),
        "pickupRider" => (
            ride.driver.clone(),
            "pickupRider",
            vec![key, ride.pickup.canonical(), now_ts.to_string()],
        ),
        "dropoffRider" => (
            ride.driver.clone(),
            "dropoffRider",
            vec![key, ride.dropoff.canonical(), now_ts.to_string()],
        ),
        "leaveDriver" => (ride.rider.clone(), "leaveDriver", vec![key]),
        _ => unreachable!("lifecycle has six steps"),
    }
}

struct BenchDriver {
    state: Rc<RefCell<BenchState>>,
}

impl BenchDriver {
    fn tick(
        state: &Rc<RefCell<BenchState>>,
        net: &mut SimNetwork,
        sched: &mut Scheduler<SimWorld>,
        sub_idx: usize,
        seq: u64,
    ) {
        {
            let st = state.borrow();
            if st.submitters[sub_idx].tick_seq != seq {
                return; // superseded by a wake-up
            }
        }
        let submitted = {
            let mut st = state.borrow_mut();
            st.submit_next_ready(net, sched, sub_idx)
        };
        let mut st = state.borrow_mut();
        if submitted {
            let now = sched.now();
            let sub = &mut st.submitters[sub_idx];
            let delay = sub.stream.next_us(&mut sub.rng);
            sub.next_at = now.plus_us(delay);
            sub.tick_seq += 1;
            let seq = sub.tick_seq;
            let at = sub.next_at;
            let state2 = Rc::clone(state);
            sched
                .schedule(at, move |w, s| {
                    Self::tick(&state2, &mut w.net, s, sub_idx, seq)
                })
                .expect("future");
        } else {
            st.submitters[sub_idx].idle = true;
        }
    }
}

impl AppDriver for BenchDriver {
    fn on_notification(
        &mut self,
        _net: &mut SimNetwork,
        sched: &mut Scheduler<SimWorld>,
        note: Notification,
    ) {
        let Notification::TxSettled {
            handle, outcome, ..
        } = note
        else {
            return; // event deliveries are accounted in the network counters
        };
        let state = Rc::clone(&self.state);
        let wake: Option<usize> = {
            let mut st = state.borrow_mut();
            let (sub_idx, ride_idx) = match st.handles.remove(&handle) {
                Some(pair) => pair,
                None => return,
            };
            {
                let ride = &mut st.rides[ride_idx];
                ride.inflight = false;
                if outcome.committed_valid() {
                    ride.step += 1;
                } else {
                    ride.stalled = true;
                }
            }
            let sub = &mut st.submitters[sub_idx];
            if sub.idle {
                sub.idle = false;
                sub.tick_seq += 1;
                Some(sub_idx)
            } else {
                None
            }
        };
        if let Some(sub_idx) = wake {
            let (at, seq) = {
                let st = state.borrow();
                let sub = &st.submitters[sub_idx];
                (sub.next_at.max(sched.now()), sub.tick_seq)
            };
            let state2 = Rc::clone(&state);
            sched
                .schedule(at, move |w, s| {
                    Self::tick(&state2, &mut w.net, s, sub_idx, seq)
                })
                .expect("future");
        }
    }
}

/// Deterministic coordinates for ride `i`: pickup and dropoff a few
/// kilometers apart, unique per ride.
fn ride_coordinates(i: usize) -> (GeoPoint, GeoPoint) {
    let row = (i % 400) as f64;
    let band = (i / 400) as f64;
    let pickup = GeoPoint::new(35.0 + row * 0.001, -87.0 + band * 0.01).expect("in range");
    let dropoff = GeoPoint::new(35.0 + row * 0.001, -86.5 + band * 0.01).expect("in range");
    (pickup, dropoff)
}

/// Enroll riders and drivers for `rides` rides and seed their user
/// records as already registered (drivers upgraded), identically on every
/// peer. Registration happens before the measured window; the benchmark
/// itself submits only lifecycle transactions.
fn provision_rides(
    net: &mut SimNetwork,
    config: &NetworkConfig,
    rides: usize,
) -> Result<Vec<RideActors>, ConfigError> {
    let mut out = Vec::with_capacity(rides);
    let mut seeds = Vec::new();
    let orgs: Vec<MspId> = config
        .orgs
        .iter()
        .map(|o| MspId::for_org(&o.name).map_err(|e| ConfigError::Invalid(e.to_string())))
        .collect::<Result<_, _>>()?;
    for i in 0..rides {
        let msp = orgs[i % orgs.len()].clone();
        let rider = net
            .registry
            .enroll_identity(&msp, Role::Rider, 10_000_000 + 2 * i as u64)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let driver = net
            .registry
            .enroll_identity(&msp, Role::Rider, 10_000_001 + 2 * i as u64)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        net.registry
            .promote_to_driver(&msp, &driver.identity.uid)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let (pickup, dropoff) = ride_coordinates(i);
        seeds.push((
            StateKey::user(&msp, &rider.identity.uid),
            canonical::canonical_bytes(&chaincode_user_record(&msp, &rider.identity.uid, UserRole::Rider)),
        ));
        seeds.push((
            StateKey::user(&msp, &driver.identity.uid),
            canonical::canonical_bytes(&chaincode_user_record(&msp, &driver.identity.uid, UserRole::Driver)),
        ));
        out.push(RideActors {
            ride_key: StateKey::ride_request(&msp, &rider.identity.uid).to_string(),
            ride_id: format!("ID-{}", rider.identity.uid),
            rider,
            driver,
            pickup,
            dropoff,
            step: 0,
            inflight: false,
            stalled: false,
        });
    }
    net.seed_state(&seeds);
    Ok(out)
}

fn chaincode_user_record(msp: &MspId, uid: &str, role: UserRole) -> chaincode::UserRecord {
    chaincode::seeded_user_record(msp, uid, "pw", role)
}

/// Run one benchmark: build the network, provision actors, drive every
/// ride through its lifecycle at the configured rate, and aggregate.
pub fn run_bench(
    config: &NetworkConfig,
    seed: u64,
    options: &BenchOptions,
) -> Result<BenchReport, ConfigError> {
    options
        .profile
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if options.rides == 0 {
        return Err(ConfigError::Invalid(WorkloadError::NoRides.to_string()));
    }
    let mut net = SimNetwork::build(config, seed)?;
    let rides = provision_rides(&mut net, config, options.rides)?;

    let mut master_rng = SimRng::new(seed ^ 0xB_EEF);
    let submitter_count = options.submitters_per_org * config.orgs.len();
    let mut submitters = Vec::with_capacity(submitter_count);
    for s in 0..submitter_count {
        let org = &config.orgs[s % config.orgs.len()];
        let client = net.add_client(&org.name)?;
        for name in ["RideRequested", "RideAccepted", "DriverArrived", "RideEnding"] {
            net.subscribe(&client, name)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        submitters.push(Submitter {
            client,
            rides: Vec::new(),
            cursor: 0,
            next_at: SimTime::ZERO,
            idle: false,
            tick_seq: 0,
            stream: options.profile.stream_for_submitter(submitter_count),
            rng: master_rng.fork(s as u64),
        });
    }
    for (i, _) in rides.iter().enumerate() {
        submitters[i % submitter_count].rides.push(i);
    }

    let state = Rc::new(RefCell::new(BenchState {
        submitters,
        rides,
        handles: BTreeMap::new(),
        next_handle: 1,
    }));
    let driver = BenchDriver {
        state: Rc::clone(&state),
    };
    let mut world = SimWorld::new(net, Box::new(driver));
    let mut sched: Scheduler<SimWorld> = Scheduler::new();
    for sub_idx in 0..submitter_count {
        let state2 = Rc::clone(&state);
        sched
            .schedule(SimTime::ZERO, move |w, s| {
                BenchDriver::tick(&state2, &mut w.net, s, sub_idx, 0)
            })
            .expect("start of time");
    }
    sched.run_until_quiescent(&mut world);

    let stalled = state.borrow().rides.iter().filter(|r| r.stalled).count() as u64;
    let net = world.net;
    Ok(finish_report(config, seed, options, net, stalled))
}

fn finish_report(
    config: &NetworkConfig,
    seed: u64,
    options: &BenchOptions,
    net: SimNetwork,
    stalled_rides: u64,
) -> BenchReport {
    let records = net.records;
    let counters = net.counters;
    let mean = |f: &dyn Fn(&TxRecord) -> Option<f64>| -> f64 {
        let vals: Vec<f64> = records.iter().filter_map(|r| f(r)).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let peer = |r: &TxRecord| {
        r.t_endorsed
            .map(|t| t.since(r.t_submit) as f64 / 1000.0)
    };
    let orderer = |r: &TxRecord| match (r.t_order_submit, r.t_ack) {
        (Some(s), Some(a)) => Some(a.since(s) as f64 / 1000.0),
        _ => None,
    };
    let event = |r: &TxRecord| match (r.t_order_submit, r.t_event) {
        (Some(s), Some(e)) => Some(e.since(s) as f64 / 1000.0),
        _ => None,
    };
    let mut window_means = Vec::new();
    for (w, chunk) in records.chunks(1000).enumerate() {
        let collect = |f: &dyn Fn(&TxRecord) -> Option<f64>| -> (usize, f64) {
            let vals: Vec<f64> = chunk.iter().filter_map(|r| f(r)).collect();
            let n = vals.len();
            (n, if n == 0 { 0.0 } else { vals.iter().sum::<f64>() / n as f64 })
        };
        let (n, peer_ms) = collect(&peer);
        let (_, orderer_ms) = collect(&orderer);
        let (_, event_ms) = collect(&event);
        window_means.push(WindowMean {
            window: w,
            samples: n,
            peer_ms,
            orderer_ms,
            event_ms,
        });
    }
    let duration_us = match (net.first_submit, net.last_commit) {
        (Some(a), Some(b)) => b.since(a),
        _ => 0,
    };
    let events_expected = records
        .iter()
        .filter(|r| r.valid == Some(true) && EVENT_FUNCTIONS.contains(&r.function.as_str()))
        .count() as u64
        * net.clients.len() as u64;
    let profile_echo = match options.profile {
        TrafficProfile::ConstantRate {
            delay_ms,
            deviation_frac,
        } => serde_json::json!({"kind": "constant", "delay_ms": delay_ms, "deviation": deviation_frac}),
        TrafficProfile::Poisson { lambda_tps } => {
            serde_json::json!({"kind": "poisson", "lambda_tps": lambda_tps})
        }
    };
    BenchReport {
        config_echo: serde_json::json!({
            "seed": seed,
            "orgs": config.orgs.iter().map(|o| serde_json::json!({"name": o.name, "peers": o.peers})).collect::<Vec<_>>(),
            "policy": config.policy,
            "ordering": {"batch_timeout_ms": config.ordering.batch_timeout_ms, "max_message_count": config.ordering.max_message_count},
            "profile": profile_echo,
            "rides": options.rides,
            "submitters": options.submitters_per_org * config.orgs.len(),
        }),
        counters,
        peer_mean_ms: mean(&peer),
        orderer_mean_ms: mean(&orderer),
        event_mean_ms: mean(&event),
        window_means,
        tps_committed: if duration_us == 0 {
            0.0
        } else {
            counters.committed_valid as f64 / (duration_us as f64 / 1_000_000.0)
        },
        duration_ms: duration_us as f64 / 1000.0,
        events_expected,
        stalled_rides,
        records,
    }
}
