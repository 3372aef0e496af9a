//! Discrete-event engine.
//!
//! Events are kept in a binary heap ordered by `(fire_at, seq)` so equal
//! timestamps dispatch in scheduling order. In [`ClockMode::Realtime`] the
//! loop sleeps until wall-clock time catches up with each event and drains
//! a thread-safe injection queue fed by I/O threads.

mod transport;

pub use transport::{LinkParams, NodeId, Transport};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Virtual time in seconds.
pub type SimTime = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("event time is before the current clock")]
    PastTime,
    #[error("no route between nodes")]
    Unroutable,
    #[error("unknown node")]
    UnknownNode,
    #[error("invalid link parameters")]
    BadLink,
    #[error("operation requires the realtime clock")]
    ModeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    Virtual,
    /// Wall-clock paced dispatch. Events dispatched more than `max_lag`
    /// behind their due time are reported via `log::warn!`.
    Realtime { max_lag: Duration },
}

impl ClockMode {
    pub fn realtime() -> Self {
        ClockMode::Realtime { max_lag: Duration::from_millis(50) }
    }

    pub fn is_realtime(&self) -> bool {
        matches!(self, ClockMode::Realtime { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(&self) -> u64 {
        self.0
    }
}

/// An event popped from the queue and handed to the dispatch callback.
#[derive(Debug)]
pub struct Delivered<P> {
    pub time: SimTime,
    pub target: NodeId,
    pub handle: EventHandle,
    pub payload: P,
}

struct Entry<P> {
    fire_at: SimTime,
    seq: u64,
    target: NodeId,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // Reversed so the std max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .total_cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A message injected from outside the loop thread.
#[derive(Debug)]
pub struct Injected<P> {
    pub target: NodeId,
    pub payload: P,
    pub arrived: Instant,
}

/// Cloneable, `Send` handle used by I/O threads to feed the event loop.
#[derive(Debug)]
pub struct Injector<P> {
    tx: mpsc::Sender<Injected<P>>,
}

impl<P> Clone for Injector<P> {
    fn clone(&self) -> Self {
        Injector { tx: self.tx.clone() }
    }
}

impl<P> Injector<P> {
    /// Returns false once the kernel has been dropped.
    pub fn inject(&self, target: NodeId, payload: P) -> bool {
        self.tx
            .send(Injected { target, payload, arrived: Instant::now() })
            .is_ok()
    }
}

pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Entry<P>>,
    pending: HashSet<u64>,
    transport: Transport,
    mode: ClockMode,
    wall_origin: Option<Instant>,
    inject_tx: mpsc::Sender<Injected<P>>,
    inject_rx: mpsc::Receiver<Injected<P>>,
    dispatched: u64,
    lagged: u64,
}

impl<P> Kernel<P> {
    pub fn new(mode: ClockMode) -> Self {
        let (inject_tx, inject_rx) = mpsc::channel();
        Kernel {
            now: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            transport: Transport::default(),
            mode,
            wall_origin: None,
            inject_tx,
            inject_rx,
            dispatched: 0,
            lagged: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut Transport {
        &mut self.transport
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.transport.add_node(name)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Total number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Events dispatched later than the realtime lag threshold.
    pub fn lagged(&self) -> u64 {
        self.lagged
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: NodeId, payload: P) -> Result<EventHandle, KernelError> {
        if !(fire_at >= self.now) {
            return Err(KernelError::PastTime);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry { fire_at, seq, target, payload });
        self.pending.insert(seq);
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, payload: P) -> Result<EventHandle, KernelError> {
        self.schedule(self.now + delay, target, payload)
    }

    /// Returns true iff the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Schedule delivery of `payload` at `dst` along the minimum-delay path.
    pub fn send_message(&mut self, src: NodeId, dst: NodeId, payload: P, bits: u64) -> Result<EventHandle, KernelError> {
        let path = self.transport.route(src, dst, bits).ok_or(KernelError::Unroutable)?;
        let arrival = self.transport.traverse(&path, self.now, bits);
        self.schedule(arrival, dst, payload)
    }

    /// Delay a message of `bits` bits would currently experience, or `None`
    /// if unroutable.
    pub fn path_delay(&self, src: NodeId, dst: NodeId, bits: u64) -> Option<SimTime> {
        let path = self.transport.route(src, dst, bits)?;
        Some(
            path.windows(2)
                .map(|h| {
                    let p = self.transport.link(h[0], h[1]).unwrap();
                    p.latency + p.bitrate.map_or(0.0, |r| bits as f64 / r)
                })
                .sum(),
        )
    }

    pub fn injector(&self) -> Result<Injector<P>, KernelError> {
        if !self.mode.is_realtime() {
            return Err(KernelError::ModeMismatch);
        }
        Ok(Injector { tx: self.inject_tx.clone() })
    }

    fn pop_live(&mut self) -> Option<Entry<P>> {
        while let Some(entry) = self.queue.pop() {
            if self.pending.remove(&entry.seq) {
                return Some(entry);
            }
        }
        None
    }

    fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.queue.peek() {
            if self.pending.contains(&top.seq) {
                return Some(top.fire_at);
            }
            self.queue.pop();
        }
        None
    }

    /// Pop the next event due at or before `until` and advance the clock.
    /// Virtual mode only; realtime runs go through [`Kernel::run`].
    pub fn next_event(&mut self, until: Option<SimTime>) -> Option<Delivered<P>> {
        let t = self.peek_time()?;
        if until.is_some_and(|u| t > u) {
            return None;
        }
        let entry = self.pop_live()?;
        self.now = entry.fire_at;
        self.dispatched += 1;
        Some(Delivered {
            time: entry.fire_at,
            target: entry.target,
            handle: EventHandle(entry.seq),
            payload: entry.payload,
        })
    }

    /// Dispatch every event with `fire_at <= until` (or until the queue is
    /// exhausted when `until` is `None`). Returns the number dispatched.
    /// When `until` is given the clock finishes at `until`.
    pub fn run<F>(&mut self, until: Option<SimTime>, mut handler: F) -> u64
    where
        F: FnMut(&mut Kernel<P>, Delivered<P>),
    {
        let count = match self.mode {
            ClockMode::Virtual => {
                let mut count = 0;
                while let Some(ev) = self.next_event(until) {
                    handler(self, ev);
                    count += 1;
                }
                count
            }
            ClockMode::Realtime { max_lag } => self.run_realtime(until, max_lag, &mut handler),
        };
        if let Some(u) = until {
            if u > self.now {
                self.now = u;
            }
        }
        count
    }

    fn wall_elapsed(&mut self) -> SimTime {
        let origin = *self
            .wall_origin
            .get_or_insert_with(|| Instant::now() - Duration::from_secs_f64(self.now));
        origin.elapsed().as_secs_f64()
    }

    fn accept_injection(&mut self, inj: Injected<P>) {
        let origin = self.wall_origin.expect("wall origin set before injections are drained");
        let stamp = inj.arrived.saturating_duration_since(origin).as_secs_f64();
        let at = stamp.max(self.now);
        // `at >= now` holds by construction.
        let _ = self.schedule(at, inj.target, inj.payload);
    }

    fn run_realtime<F>(&mut self, until: Option<SimTime>, max_lag: Duration, handler: &mut F) -> u64
    where
        F: FnMut(&mut Kernel<P>, Delivered<P>),
    {
        let mut count = 0;
        loop {
            let elapsed = self.wall_elapsed();
            while let Ok(inj) = self.inject_rx.try_recv() {
                self.accept_injection(inj);
            }
            let next = self.peek_time().filter(|&t| until.is_none_or(|u| t <= u));
            let deadline = match (next, until) {
                (Some(t), _) => t,
                (None, Some(u)) => u,
                (None, None) => break,
            };
            if elapsed < deadline {
                let wait = Duration::from_secs_f64(deadline - elapsed);
                if let Ok(inj) = self.inject_rx.recv_timeout(wait) {
                    self.accept_injection(inj);
                }
                continue;
            }
            match next {
                Some(_) => {
                    let ev = self.pop_live().expect("peeked event is live");
                    self.now = ev.fire_at;
                    self.dispatched += 1;
                    let lag = self.wall_elapsed() - ev.fire_at;
                    if lag > max_lag.as_secs_f64() {
                        self.lagged += 1;
                        log::warn!("realtime dispatch lagging by {:.1} ms at t={:.6}", lag * 1e3, ev.fire_at);
                    }
                    handler(
                        self,
                        Delivered {
                            time: ev.fire_at,
                            target: ev.target,
                            handle: EventHandle(ev.seq),
                            payload: ev.payload,
                        },
                    );
                    count += 1;
                }
                None => break,
            }
        }
        count
    }
}
