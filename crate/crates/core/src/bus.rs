//! Discrete-event virtual process bus.
//!
//! Frames and timers live in one priority queue ordered by `(time, seq)`,
//! where `seq` is a global scheduling counter. Each subscriber of a frame gets
//! its own latency draw from the bus-owned seeded generator; a capture tap
//! sees every frame as one more subscriber, so capture order is delivery
//! order.

use std::any::Any;
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::{Add, Sub};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, MacAddress};
use crate::events::{LogEntry, LogEvent};

/// Nanoseconds since scenario start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:09}s",
            self.0 / 1_000_000_000,
            self.0 % 1_000_000_000
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubscriptionId(pub usize);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("publish at {now} is past the scenario horizon {horizon}")]
    PastHorizon { now: SimTime, horizon: SimTime },
    #[error("timer for {device} at {at} is in the past (now {now})")]
    TimerInPast {
        device: String,
        at: SimTime,
        now: SimTime,
    },
    #[error("subscriptions are closed once the bus is running")]
    AlreadyRunning,
    #[error("unknown device id {0}")]
    UnknownDevice(usize),
    #[error("device {device} faulted: {message}")]
    DeviceFault { device: String, message: String },
}

/// Error a device handler raises to abort the run.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct DeviceFault(pub String);

impl DeviceFault {
    pub fn new(msg: impl Into<String>) -> Self {
        DeviceFault(msg.into())
    }
}

impl From<BusError> for DeviceFault {
    fn from(e: BusError) -> Self {
        DeviceFault(e.to_string())
    }
}

impl From<codec::CodecError> for DeviceFault {
    fn from(e: codec::CodecError) -> Self {
        DeviceFault(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct LatencyModel {
    pub fixed_ns: u64,
    /// Half-width of the uniform jitter band.
    pub jitter_ns: u64,
    pub seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            fixed_ns: 100_000,
            jitter_ns: 0,
            seed: 0,
        }
    }
}

impl LatencyModel {
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.jitter_ns == 0 {
            return self.fixed_ns;
        }
        let j = self.jitter_ns as i64;
        let u = rng.gen_range(-j..=j);
        (self.fixed_ns as i64 + u).max(0) as u64
    }
}

/// Ethertype and optional destination filter. An empty ethertype set matches
/// any ethertype.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubscriptionFilter {
    pub ethertypes: BTreeSet<u16>,
    pub destinations: Option<BTreeSet<MacAddress>>,
}

impl SubscriptionFilter {
    pub fn ethertypes(types: &[u16]) -> Self {
        SubscriptionFilter {
            ethertypes: types.iter().copied().collect(),
            destinations: None,
        }
    }

    pub fn with_destinations(mut self, macs: &[MacAddress]) -> Self {
        self.destinations = Some(macs.iter().copied().collect());
        self
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        if !self.ethertypes.is_empty() {
            match codec::ethertype(bytes) {
                Some(t) if self.ethertypes.contains(&t) => {}
                _ => return false,
            }
        }
        match (&self.destinations, codec::destination(bytes)) {
            (None, _) => true,
            (Some(set), Some(d)) => set.contains(&d),
            (Some(_), None) => false,
        }
    }
}

/// A frame as handed to a subscriber.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub publish_seq: u64,
    pub publish_at: SimTime,
    pub deliver_at: SimTime,
    pub publisher: DeviceId,
    pub bytes: Arc<[u8]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaptureRecord {
    pub publish_seq: u64,
    pub publish_at: SimTime,
    pub deliver_at: SimTime,
    pub publisher: String,
    #[serde(with = "hex_bytes")]
    pub frame: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunStats {
    pub now: SimTime,
    pub events_processed: u64,
    pub frames_published: u64,
    pub frames_delivered: u64,
    pub timers_fired: u64,
}

/// Handler interface for everything attached to the bus. `W` is the shared
/// physical world (the feeder and breaker in a full scenario).
pub trait Device<W>: Any {
    fn name(&self) -> &str;

    fn start(&mut self, _ctx: &mut Ctx<'_, W>) -> Result<(), DeviceFault> {
        Ok(())
    }

    fn on_frame(&mut self, _ctx: &mut Ctx<'_, W>, _frame: &Delivery) -> Result<(), DeviceFault> {
        Ok(())
    }

    fn on_timer(&mut self, _ctx: &mut Ctx<'_, W>, _tag: u64) -> Result<(), DeviceFault> {
        Ok(())
    }
}

#[derive(Debug)]
enum Target {
    Device(usize),
    Tap,
}

#[derive(Debug)]
enum EventKind {
    Deliver { target: Target, delivery: Delivery },
    Timer { device: usize, tag: u64 },
}

#[derive(Debug)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct Subscription {
    device: usize,
    filter: SubscriptionFilter,
}

struct Core {
    now: SimTime,
    next_seq: u64,
    next_publish: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    rng: ChaCha8Rng,
    latency: LatencyModel,
    horizon: Option<SimTime>,
    capture: Vec<CaptureRecord>,
    log: Vec<LogEntry>,
    names: Vec<String>,
    stats: RunStats,
}

impl Core {
    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, kind }));
    }

    fn publish(
        &mut self,
        subs: &[Subscription],
        bytes: &[u8],
        publisher: usize,
    ) -> Result<u64, BusError> {
        if let Some(h) = self.horizon {
            if self.now > h {
                return Err(BusError::PastHorizon {
                    now: self.now,
                    horizon: h,
                });
            }
        }
        let publish_seq = self.next_publish;
        self.next_publish += 1;
        self.stats.frames_published += 1;
        let bytes: Arc<[u8]> = Arc::from(bytes);
        let mut targets = vec![Target::Tap];
        targets.extend(
            subs.iter()
                .filter(|s| s.device != publisher && s.filter.matches(&bytes))
                .map(|s| Target::Device(s.device)),
        );
        for target in targets {
            let deliver_at = self.now + self.latency.draw(&mut self.rng);
            let delivery = Delivery {
                publish_seq,
                publish_at: self.now,
                deliver_at,
                publisher: DeviceId(publisher),
                bytes: bytes.clone(),
            };
            self.schedule(deliver_at, EventKind::Deliver { target, delivery });
        }
        Ok(publish_seq)
    }

    fn set_timer(&mut self, device: usize, at: SimTime, tag: u64) -> Result<(), BusError> {
        if at < self.now {
            return Err(BusError::TimerInPast {
                device: self.names[device].clone(),
                at,
                now: self.now,
            });
        }
        self.schedule(at, EventKind::Timer { device, tag });
        Ok(())
    }
}

/// What a handler may do while it runs.
pub struct Ctx<'a, W> {
    core: &'a mut Core,
    subs: &'a [Subscription],
    pub world: &'a mut W,
    me: usize,
}

impl<W> Ctx<'_, W> {
    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn me(&self) -> DeviceId {
        DeviceId(self.me)
    }

    pub fn device_name(&self, id: DeviceId) -> &str {
        self.core.names.get(id.0).map(String::as_str).unwrap_or("?")
    }

    /// Publishes now; returns the publication sequence number.
    pub fn publish(&mut self, bytes: &[u8]) -> Result<u64, BusError> {
        self.core.publish(self.subs, bytes, self.me)
    }

    pub fn set_timer(&mut self, at: SimTime, tag: u64) -> Result<(), BusError> {
        self.core.set_timer(self.me, at, tag)
    }

    pub fn log(&mut self, event: LogEvent) {
        let entry = LogEntry {
            at_ns: self.core.now,
            device: self.core.names[self.me].clone(),
            event,
        };
        self.core.log.push(entry);
    }
}

pub struct Bus<W> {
    core: Core,
    world: W,
    devices: Vec<Box<dyn Device<W>>>,
    subs: Vec<Subscription>,
    started: bool,
    pacing: Option<(f64, Instant)>,
}

impl<W: 'static> Bus<W> {
    pub fn new(world: W, latency: LatencyModel, horizon: Option<SimTime>) -> Self {
        Bus {
            core: Core {
                now: SimTime::ZERO,
                next_seq: 0,
                next_publish: 0,
                queue: BinaryHeap::new(),
                rng: ChaCha8Rng::seed_from_u64(latency.seed),
                latency,
                horizon,
                capture: Vec::new(),
                log: Vec::new(),
                names: Vec::new(),
                stats: RunStats::default(),
            },
            world,
            devices: Vec::new(),
            subs: Vec::new(),
            started: false,
            pacing: None,
        }
    }

    /// Sleep so that SimTime advances no faster than `speed` × wall clock.
    /// Event order is unaffected.
    pub fn set_realtime_pacing(&mut self, speed: f64) {
        self.pacing = Some((speed, Instant::now()));
    }

    pub fn add_device(&mut self, device: Box<dyn Device<W>>) -> DeviceId {
        self.core.names.push(device.name().to_string());
        self.devices.push(device);
        DeviceId(self.devices.len() - 1)
    }

    pub fn subscribe(
        &mut self,
        device: DeviceId,
        filter: SubscriptionFilter,
    ) -> Result<SubscriptionId, BusError> {
        if self.started {
            return Err(BusError::AlreadyRunning);
        }
        if device.0 >= self.devices.len() {
            return Err(BusError::UnknownDevice(device.0));
        }
        self.subs.push(Subscription {
            device: device.0,
            filter,
        });
        Ok(SubscriptionId(self.subs.len() - 1))
    }

    pub fn now(&self) -> SimTime {
        self.core.now
    }

    /// Publishes on behalf of `publisher` at the current time.
    pub fn publish(&mut self, bytes: &[u8], publisher: DeviceId) -> Result<u64, BusError> {
        if publisher.0 >= self.devices.len() {
            return Err(BusError::UnknownDevice(publisher.0));
        }
        self.core.publish(&self.subs, bytes, publisher.0)
    }

    pub fn set_timer(&mut self, device: DeviceId, at: SimTime, tag: u64) -> Result<(), BusError> {
        if device.0 >= self.devices.len() {
            return Err(BusError::UnknownDevice(device.0));
        }
        self.core.set_timer(device.0, at, tag)
    }

    fn start(&mut self) -> Result<(), BusError> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        for i in 0..self.devices.len() {
            let mut ctx = Ctx {
                core: &mut self.core,
                subs: &self.subs,
                world: &mut self.world,
                me: i,
            };
            self.devices[i]
                .start(&mut ctx)
                .map_err(|f| BusError::DeviceFault {
                    device: self.core.names[i].clone(),
                    message: f.0,
                })?;
        }
        Ok(())
    }

    /// Processes every event with time ≤ `until` in `(time, seq)` order.
    pub fn run_until(&mut self, until: SimTime) -> Result<RunStats, BusError> {
        self.start()?;
        while let Some(Reverse(head)) = self.core.queue.peek() {
            if head.at > until {
                break;
            }
            let Reverse(ev) = self.core.queue.pop().expect("peeked");
            debug_assert!(ev.at >= self.core.now);
            self.core.now = ev.at;
            self.pace(ev.at);
            self.core.stats.events_processed += 1;
            let (device, result) = match ev.kind {
                EventKind::Deliver {
                    target: Target::Tap,
                    delivery,
                } => {
                    let record = CaptureRecord {
                        publish_seq: delivery.publish_seq,
                        publish_at: delivery.publish_at,
                        deliver_at: delivery.deliver_at,
                        publisher: self.core.names[delivery.publisher.0].clone(),
                        frame: delivery.bytes.to_vec(),
                    };
                    self.core.capture.push(record);
                    continue;
                }
                EventKind::Deliver {
                    target: Target::Device(d),
                    delivery,
                } => {
                    self.core.stats.frames_delivered += 1;
                    let mut ctx = Ctx {
                        core: &mut self.core,
                        subs: &self.subs,
                        world: &mut self.world,
                        me: d,
                    };
                    (d, self.devices[d].on_frame(&mut ctx, &delivery))
                }
                EventKind::Timer { device, tag } => {
                    self.core.stats.timers_fired += 1;
                    let mut ctx = Ctx {
                        core: &mut self.core,
                        subs: &self.subs,
                        world: &mut self.world,
                        me: device,
                    };
                    (device, self.devices[device].on_timer(&mut ctx, tag))
                }
            };
            result.map_err(|f| BusError::DeviceFault {
                device: self.core.names[device].clone(),
                message: f.0,
            })?;
        }
        if until > self.core.now {
            self.core.now = until;
        }
        self.core.stats.now = self.core.now;
        Ok(self.core.stats)
    }

    fn pace(&self, at: SimTime) {
        if let Some((speed, start)) = self.pacing {
            let target = Duration::from_nanos((at.0 as f64 / speed) as u64);
            let elapsed = start.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
    }

    pub fn stats(&self) -> RunStats {
        self.core.stats
    }

    pub fn capture(&self) -> &[CaptureRecord] {
        &self.core.capture
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.core.log
    }

    pub fn world(&self) -> &W {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut W {
        &mut self.world
    }

    pub fn device_name(&self, id: DeviceId) -> Option<&str> {
        self.core.names.get(id.0).map(String::as_str)
    }

    /// Typed access to a device after (or between) runs.
    pub fn device<T: Device<W>>(&self, id: DeviceId) -> Option<&T> {
        let d: &dyn Any = self.devices.get(id.0)?.as_ref();
        d.downcast_ref::<T>()
    }

    pub fn into_parts(self) -> (W, Vec<CaptureRecord>, Vec<LogEntry>) {
        (self.world, self.core.capture, self.core.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ETHERTYPE_GOOSE, ETHERTYPE_SV};

    fn frame(ethertype: u16, tag: u8) -> Vec<u8> {
        let mut f = vec![0x01, 0x0C, 0xCD, 0x04, 0x00, 0x03, 0, 0, 0, 0, 0, 1];
        f.extend_from_slice(&ethertype.to_be_bytes());
        f.push(tag);
        f
    }

    /// Records deliveries and timer firings.
    #[derive(Default)]
    struct Probe {
        name: String,
        got: Vec<(SimTime, Vec<u8>)>,
        timers: Vec<(SimTime, u64)>,
        order: Vec<&'static str>,
        echo_latency_check: bool,
        periodic: Option<u64>,
    }

    impl Probe {
        fn named(n: &str) -> Self {
            Probe {
                name: n.into(),
                ..Default::default()
            }
        }
    }

    impl Device<()> for Probe {
        fn name(&self) -> &str {
            &self.name
        }
        fn on_frame(&mut self, ctx: &mut Ctx<'_, ()>, d: &Delivery) -> Result<(), DeviceFault> {
            self.got.push((ctx.now(), d.bytes.to_vec()));
            self.order.push("frame");
            if self.echo_latency_check && d.bytes[14] == 1 {
                ctx.publish(&frame(ETHERTYPE_GOOSE, 2))?;
            }
            if d.bytes[14] == 0xEE {
                return Err(DeviceFault::new("boom"));
            }
            Ok(())
        }
        fn on_timer(&mut self, ctx: &mut Ctx<'_, ()>, tag: u64) -> Result<(), DeviceFault> {
            self.timers.push((ctx.now(), tag));
            self.order.push("timer");
            if let Some(period_n) = self.periodic {
                let next = period_n + 1;
                self.periodic = Some(next);
                ctx.set_timer(SimTime((next as u128 * 1_000_000_000 / 4800) as u64), tag)?;
            }
            Ok(())
        }
    }

    fn bus() -> Bus<()> {
        Bus::new((), LatencyModel::default(), None)
    }

    #[test]
    fn empty_bus_processes_nothing() {
        let mut b = bus();
        let s = b.run_until(SimTime::from_millis(1000)).unwrap();
        assert_eq!(s.events_processed, 0);
    }

    #[test]
    fn fixed_latency_delivery() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(p, SubscriptionFilter::ethertypes(&[ETHERTYPE_SV]))
            .unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0), src).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        let probe = b.device::<Probe>(p).unwrap();
        assert_eq!(probe.got.len(), 1);
        assert_eq!(probe.got[0].0, SimTime::from_micros(100));
        assert_eq!(b.capture().len(), 1);
    }

    #[test]
    fn same_time_publications_keep_order() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(p, SubscriptionFilter::default()).unwrap();
        for i in 0..5 {
            b.publish(&frame(ETHERTYPE_SV, i), src).unwrap();
        }
        b.run_until(SimTime::from_millis(1)).unwrap();
        let tags: Vec<u8> = b
            .device::<Probe>(p)
            .unwrap()
            .got
            .iter()
            .map(|g| g.1[14])
            .collect();
        assert_eq!(tags, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ethertype_filter() {
        let mut b = bus();
        let g = b.add_device(Box::new(Probe::named("goose-only")));
        let all = b.add_device(Box::new(Probe::named("all")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(g, SubscriptionFilter::ethertypes(&[ETHERTYPE_GOOSE]))
            .unwrap();
        b.subscribe(
            all,
            SubscriptionFilter::ethertypes(&[ETHERTYPE_SV, ETHERTYPE_GOOSE]),
        )
        .unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0), src).unwrap();
        b.publish(&frame(ETHERTYPE_GOOSE, 0), src).unwrap();
        b.publish(&frame(0x0800, 0), src).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        assert_eq!(b.device::<Probe>(g).unwrap().got.len(), 1);
        assert_eq!(b.device::<Probe>(all).unwrap().got.len(), 2);
        assert_eq!(b.capture().len(), 3);
    }

    #[test]
    fn destination_filter() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(
            p,
            SubscriptionFilter::ethertypes(&[ETHERTYPE_SV])
                .with_destinations(&[MacAddress::GOOSE_DEFAULT]),
        )
        .unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0), src).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        assert!(b.device::<Probe>(p).unwrap().got.is_empty());
    }

    #[test]
    fn subscribers_draw_independent_latencies() {
        let lat = LatencyModel {
            fixed_ns: 100_000,
            jitter_ns: 50_000,
            seed: 7,
        };
        let mut b = Bus::new((), lat, None);
        let a = b.add_device(Box::new(Probe::named("a")));
        let c = b.add_device(Box::new(Probe::named("c")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(a, SubscriptionFilter::default()).unwrap();
        b.subscribe(c, SubscriptionFilter::default()).unwrap();
        for i in 0..20 {
            b.publish(&frame(ETHERTYPE_SV, i), src).unwrap();
        }
        b.run_until(SimTime::from_millis(1)).unwrap();
        let ta: Vec<_> = b
            .device::<Probe>(a)
            .unwrap()
            .got
            .iter()
            .map(|g| g.0)
            .collect();
        let tc: Vec<_> = b
            .device::<Probe>(c)
            .unwrap()
            .got
            .iter()
            .map(|g| g.0)
            .collect();
        assert_eq!(ta.len(), 20);
        assert_eq!(tc.len(), 20);
        assert_ne!(ta, tc);
        for t in ta.iter().chain(&tc) {
            assert!(t.0 >= 50_000 && t.0 <= 150_000);
        }
    }

    #[test]
    fn handler_publication_is_delivered_in_same_run() {
        let mut b = bus();
        let mut echo = Probe::named("echo");
        echo.echo_latency_check = true;
        let e = b.add_device(Box::new(echo));
        let sink = b.add_device(Box::new(Probe::named("sink")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(e, SubscriptionFilter::ethertypes(&[ETHERTYPE_SV]))
            .unwrap();
        b.subscribe(sink, SubscriptionFilter::ethertypes(&[ETHERTYPE_GOOSE]))
            .unwrap();
        b.publish(&frame(ETHERTYPE_SV, 1), src).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        let got = &b.device::<Probe>(sink).unwrap().got;
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, SimTime::from_micros(200));
    }

    #[test]
    fn timers_fire_exactly_and_tie_break_by_seq() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(p, SubscriptionFilter::default()).unwrap();
        b.set_timer(p, SimTime(208_333), 9).unwrap();
        // timer scheduled before a frame landing at the same instant
        b.set_timer(p, SimTime::from_micros(100), 1).unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0), src).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        let probe = b.device::<Probe>(p).unwrap();
        assert_eq!(probe.timers[0], (SimTime::from_micros(100), 1));
        assert_eq!(probe.timers[1], (SimTime(208_333), 9));
        assert_eq!(probe.order[..2], ["timer", "frame"]);
    }

    #[test]
    fn periodic_timer_fires_4800_times_per_second() {
        let mut b = bus();
        let mut probe = Probe::named("tick");
        probe.periodic = Some(0);
        let p = b.add_device(Box::new(probe));
        b.set_timer(p, SimTime::ZERO, 0).unwrap();
        b.run_until(SimTime(999_999_999)).unwrap();
        assert_eq!(b.device::<Probe>(p).unwrap().timers.len(), 4800);
    }

    #[test]
    fn past_timer_and_late_subscribe_rejected() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        b.run_until(SimTime::from_millis(5)).unwrap();
        assert!(matches!(
            b.set_timer(p, SimTime::from_millis(1), 0),
            Err(BusError::TimerInPast { .. })
        ));
        assert_eq!(
            b.subscribe(p, SubscriptionFilter::default()),
            Err(BusError::AlreadyRunning)
        );
    }

    #[test]
    fn publishing_past_horizon_rejected() {
        let mut b = Bus::new((), LatencyModel::default(), Some(SimTime::from_millis(1)));
        let p = b.add_device(Box::new(Probe::named("p")));
        b.run_until(SimTime::from_millis(2)).unwrap();
        assert!(matches!(
            b.publish(&frame(ETHERTYPE_SV, 0), p),
            Err(BusError::PastHorizon { .. })
        ));
    }

    #[test]
    fn device_fault_aborts_with_name() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("victim")));
        let src = b.add_device(Box::new(Probe::named("src")));
        b.subscribe(p, SubscriptionFilter::default()).unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0xEE), src).unwrap();
        match b.run_until(SimTime::from_millis(1)) {
            Err(BusError::DeviceFault { device, message }) => {
                assert_eq!(device, "victim");
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn publisher_does_not_receive_its_own_frames() {
        let mut b = bus();
        let p = b.add_device(Box::new(Probe::named("p")));
        b.subscribe(p, SubscriptionFilter::default()).unwrap();
        b.publish(&frame(ETHERTYPE_SV, 0), p).unwrap();
        b.run_until(SimTime::from_millis(1)).unwrap();
        assert!(b.device::<Probe>(p).unwrap().got.is_empty());
        assert_eq!(b.capture().len(), 1);
    }
}
