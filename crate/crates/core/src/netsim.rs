//! Deterministic discrete-event simulation: virtual clock, scheduler,
//! single-server FIFO queues, and the one seeded random number generator
//! every stochastic choice flows through.
//!
//! Virtual time is an integer microsecond count, so identical
//! `(seed, config)` inputs replay identical event traces on any platform.
//! The scheduler is strictly single-threaded; whole simulation instances
//! are independent and can run in parallel.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetSimError {
    #[error("cannot schedule at {at:?} before current time {now:?}")]
    TimeTravel { at: SimTime, now: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(String),
}

/// Virtual time in integer microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: f64) -> Self {
        SimTime((ms * 1000.0).round() as u64)
    }

    pub fn as_us(&self) -> u64 {
        self.0
    }

    pub fn as_ms_f64(&self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn plus_us(&self, us: u64) -> SimTime {
        SimTime(self.0 + us)
    }

    /// Saturating difference, in microseconds.
    pub fn since(&self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

pub type Action<W> = Box<dyn FnOnce(&mut W, &mut Scheduler<W>)>;

struct ScheduledEvent<W> {
    fire_at: SimTime,
    seq: u64,
    action: Action<W>,
}

impl<W> PartialEq for ScheduledEvent<W> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}
impl<W> Eq for ScheduledEvent<W> {}
impl<W> PartialOrd for ScheduledEvent<W> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<W> Ord for ScheduledEvent<W> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Event queue with a total order by `(fire_at, seq)`: ties fire in
/// scheduling order. Actions receive the world and the scheduler, so they
/// can schedule follow-up events.
pub struct Scheduler<W> {
    now: SimTime,
    next_seq: u64,
    executed: u64,
    heap: BinaryHeap<Reverse<ScheduledEvent<W>>>,
}

impl<W> Scheduler<W> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            executed: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events executed so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        action: impl FnOnce(&mut W, &mut Scheduler<W>) + 'static,
    ) -> Result<(), NetSimError> {
        if at < self.now {
            return Err(NetSimError::TimeTravel { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(ScheduledEvent {
            fire_at: at,
            seq,
            action: Box::new(action),
        }));
        Ok(())
    }

    pub fn schedule_in(
        &mut self,
        delay_us: u64,
        action: impl FnOnce(&mut W, &mut Scheduler<W>) + 'static,
    ) {
        let at = self.now.plus_us(delay_us);
        self.schedule(at, action).expect("future time");
    }

    /// Run until the queue is empty. Returns the final virtual time.
    pub fn run_until_quiescent(&mut self, world: &mut W) -> SimTime {
        while let Some(Reverse(ev)) = self.heap.pop() {
            self.now = ev.fire_at;
            self.executed += 1;
            (ev.action)(world, self);
        }
        self.now
    }

    /// Run all events with `fire_at <= deadline`, in order, then advance
    /// the clock to the deadline.
    pub fn run_until(&mut self, world: &mut W, deadline: SimTime) -> SimTime {
        while let Some(Reverse(ev)) = self.heap.peek() {
            if ev.fire_at > deadline {
                break;
            }
            let Reverse(ev) = self.heap.pop().expect("peeked");
            self.now = ev.fire_at;
            self.executed += 1;
            (ev.action)(world, self);
        }
        if deadline > self.now {
            self.now = deadline;
        }
        self.now
    }
}

impl<W> Default for Scheduler<W> {
    fn default() -> Self {
        Self::new()
    }
}

/// A single-server FIFO processing queue. A node processes one job at a
/// time; a job admitted at `arrival` starts when the server frees up and
/// completes after its service time.
#[derive(Debug, Clone, Copy, Default)]
pub struct FifoServer {
    busy_until: SimTime,
}

impl FifoServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Admit a job; returns its completion time and occupies the server
    /// until then.
    pub fn admit(&mut self, arrival: SimTime, service_us: u64) -> SimTime {
        let start = self.busy_until.max(arrival);
        let done = start.plus_us(service_us);
        self.busy_until = done;
        done
    }

    /// Unfinished work as of `now`, in microseconds.
    pub fn backlog_us(&self, now: SimTime) -> u64 {
        self.busy_until.since(now)
    }
}

/// The one random number generator of a simulation. ChaCha8, seeded from
/// a 64-bit value: identical seed, identical stream, on every platform.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Derive an independent child generator; used to give each submitter
    /// or sweep point its own stream.
    pub fn fork(&mut self, label: u64) -> SimRng {
        SimRng::new(self.0.gen::<u64>() ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.gen()
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn gen_range_usize(&mut self, upper: usize) -> usize {
        self.0.gen_range(0..upper)
    }

    /// Uniform in [lo, hi].
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }

    /// Exponentially distributed with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        let u: f64 = self.next_f64();
        -mean * (1.0 - u).ln()
    }
}

/// Per-node service times, in microseconds. These are calibration knobs
/// describing hardware classes, not measured claims; endorsement and
/// commit share one server per peer, which is what makes heavy endorsement
/// traffic slow the commit stage down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub endorse_service_us: u64,
    /// Fixed commit-stage work per transaction (revalidation, state
    /// writes).
    pub commit_service_us_per_tx: u64,
    /// Commit-stage work per endorsement carried by a transaction
    /// (signature verification), so wider endorsement policies make
    /// commits costlier.
    pub commit_service_us_per_endorsement: u64,
    pub order_service_us: u64,
    /// Client-side cost of dispatching one proposal or envelope; fanning
    /// out to many endorsers serializes on this.
    pub submit_overhead_us: u64,
}

impl NodeProfile {
    /// Server-class hardware.
    pub fn server() -> Self {
        NodeProfile {
            endorse_service_us: 2_000,
            commit_service_us_per_tx: 600,
            commit_service_us_per_endorsement: 200,
            order_service_us: 1_000,
            submit_overhead_us: 500,
        }
    }

    /// Raspberry-Pi-class hardware: an order of magnitude slower.
    pub fn pi() -> Self {
        NodeProfile {
            endorse_service_us: 30_000,
            commit_service_us_per_tx: 6_000,
            commit_service_us_per_endorsement: 3_000,
            order_service_us: 5_000,
            submit_overhead_us: 1_000,
        }
    }

    /// Commit-stage service time for one transaction carrying
    /// `endorsements` signatures.
    pub fn commit_service_us(&self, endorsements: usize) -> u64 {
        self.commit_service_us_per_tx
            + self.commit_service_us_per_endorsement * endorsements as u64
    }
}

/// Directed link latencies between named nodes: a network-wide default
/// plus optional per-pair overrides. Message size never affects latency.
#[derive(Debug, Clone, Default)]
pub struct Links {
    pub default_us: u64,
    overrides: std::collections::BTreeMap<(String, String), u64>,
}

impl Links {
    pub fn uniform(default_us: u64) -> Self {
        Links {
            default_us,
            overrides: Default::default(),
        }
    }

    pub fn set(&mut self, from: &str, to: &str, latency_us: u64) {
        self.overrides
            .insert((from.to_string(), to.to_string()), latency_us);
    }

    pub fn latency_us(&self, from: &str, to: &str) -> u64 {
        self.overrides
            .get(&(from.to_string(), to.to_string()))
            .copied()
            .unwrap_or(self.default_us)
    }
}
