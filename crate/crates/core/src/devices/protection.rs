use serde::{Deserialize, Serialize};

use super::{
    current_from_wire, default_retransmission_ms, on_retransmit, publish_state, tag_kind,
    timer_tag, GoosePublisher, GooseStreamConfig, World, TAG_RETRANSMIT,
};
use crate::bus::{Ctx, Delivery, Device, DeviceFault, SimTime};
use crate::codec::{self, MacAddress, SMP_CNT_MODULUS};
use crate::events::LogEvent;
use crate::power::{self, Phase};

/// Processing-delay profile of the protection & control IED.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PcProfile {
    /// Commercial relay.
    Original,
    /// Open-source relay on a Linux host, 5 ms slower.
    SimulatedIed,
}

impl PcProfile {
    pub fn default_processing_delay_ns(self) -> u64 {
        match self {
            PcProfile::Original => 12_800_000,
            PcProfile::SimulatedIed => 17_800_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct PcConfig {
    pub profile: PcProfile,
    /// Overrides the profile's processing delay when set.
    pub processing_delay_ns: Option<u64>,
    pub pickup_rms_a: f64,
    pub subscribed_sv_id: String,
    pub go_id: String,
    pub gocb_ref: String,
    pub dat_set: String,
    pub dst: MacAddress,
    pub src: MacAddress,
    pub app_id: u16,
    pub retransmission_ms: Vec<u64>,
}

impl Default for PcConfig {
    fn default() -> Self {
        PcConfig {
            profile: PcProfile::Original,
            processing_delay_ns: None,
            pickup_rms_a: 1000.0,
            subscribed_sv_id: "MU01".into(),
            go_id: "PC1_Trip".into(),
            gocb_ref: "PC1CTRL/LLN0$GO$gcbTrip".into(),
            dat_set: "PC1CTRL/LLN0$dsTrip".into(),
            dst: MacAddress::GOOSE_DEFAULT,
            src: MacAddress([0x00, 0x1A, 0x4C, 0x00, 0x00, 0x11]),
            app_id: 0x0001,
            retransmission_ms: default_retransmission_ms(),
        }
    }
}

impl PcConfig {
    pub fn processing_delay_ns(&self) -> u64 {
        self.processing_delay_ns
            .unwrap_or_else(|| self.profile.default_processing_delay_ns())
    }

    pub fn stream(&self) -> GooseStreamConfig {
        GooseStreamConfig {
            go_id: self.go_id.clone(),
            gocb_ref: self.gocb_ref.clone(),
            dat_set: self.dat_set.clone(),
            dst: self.dst,
            src: self.src,
            app_id: self.app_id,
            conf_rev: 1,
            time_allowed_to_live_ms: 2000,
            retransmission_ms: self.retransmission_ms.clone(),
        }
    }
}

const TAG_TRIP: u8 = 1;
/// Window slots older than this are treated as missing.
const SLOT_MAX_AGE_NS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy)]
struct Slot {
    currents: [f64; 3],
    at: SimTime,
}

/// Protection & control IED: MMXU windowed RMS, instantaneous PTOC, and a
/// CSWI trip GOOSE.
///
/// The measurement window is aligned on smpCnt: each received frame writes
/// its slot, and the one-cycle window ending at the received counter is
/// evaluated. PTOC operates `processing_delay` after the start element first
/// saw an instantaneous sample above `pickup · √2`, or at pickup if later.
pub struct ProtectionIed {
    name: String,
    config: PcConfig,
    publisher: GoosePublisher,
    slots: Vec<Option<Slot>>,
    window: usize,
    excursion_start: Option<SimTime>,
    quiet_frames: usize,
    trip_pending: bool,
    tripped: bool,
    /// (time, per-phase RMS) at every full-window evaluation.
    pub rms_trace: Vec<(SimTime, [f64; 3])>,
    pub unsubscribed: u64,
    pub malformed: u64,
    pub trips: u64,
}

impl ProtectionIed {
    pub fn new(name: impl Into<String>, config: PcConfig, samples_per_cycle: usize) -> Self {
        let publisher = GoosePublisher::new(config.stream());
        ProtectionIed {
            name: name.into(),
            config,
            publisher,
            slots: vec![None; SMP_CNT_MODULUS as usize],
            window: samples_per_cycle,
            excursion_start: None,
            quiet_frames: 0,
            trip_pending: false,
            tripped: false,
            rms_trace: Vec::new(),
            unsubscribed: 0,
            malformed: 0,
            trips: 0,
        }
    }

    pub fn config(&self) -> &PcConfig {
        &self.config
    }

    pub fn is_tripped(&self) -> bool {
        self.tripped
    }

    pub fn publisher(&self) -> &GoosePublisher {
        &self.publisher
    }

    /// Per-phase RMS over the window ending at `smp_cnt`, if every slot is
    /// present and fresh.
    fn window_rms(&self, smp_cnt: u16, now: SimTime) -> Option<[f64; 3]> {
        let m = SMP_CNT_MODULUS as usize;
        let mut per_phase = [
            Vec::with_capacity(self.window),
            Vec::with_capacity(self.window),
            Vec::with_capacity(self.window),
        ];
        for k in 0..self.window {
            let idx = (smp_cnt as usize + m - (self.window - 1 - k)) % m;
            let slot = self.slots[idx]?;
            if now - slot.at >= SLOT_MAX_AGE_NS {
                return None;
            }
            for (phase, i) in per_phase.iter_mut().zip(slot.currents) {
                phase.push(i);
            }
        }
        let mut out = [0.0; 3];
        for p in 0..3 {
            out[p] = power::rms(&per_phase[p], self.window).ok()?;
        }
        Some(out)
    }

    fn on_sv(&mut self, ctx: &mut Ctx<'_, World>, bytes: &[u8]) -> Result<(), DeviceFault> {
        let Ok(frame) = codec::decode_sv(bytes) else {
            self.malformed += 1;
            return Ok(());
        };
        if frame.sv_id != self.config.subscribed_sv_id {
            self.unsubscribed += 1;
            return Ok(());
        }
        let now = ctx.now();
        let currents = [
            current_from_wire(frame.samples[0].value),
            current_from_wire(frame.samples[1].value),
            current_from_wire(frame.samples[2].value),
        ];
        self.slots[frame.smp_cnt as usize] = Some(Slot { currents, at: now });

        // Start element on instantaneous values.
        let threshold = self.config.pickup_rms_a * std::f64::consts::SQRT_2;
        if currents.iter().any(|i| i.abs() > threshold) {
            self.quiet_frames = 0;
            self.excursion_start.get_or_insert(now);
        } else {
            self.quiet_frames += 1;
            if self.quiet_frames > self.window && !self.trip_pending && !self.tripped {
                self.excursion_start = None;
            }
        }

        let Some(rms) = self.window_rms(frame.smp_cnt, now) else {
            return Ok(());
        };
        self.rms_trace.push((now, rms));
        let (phase, worst) =
            Phase::ALL
                .iter()
                .map(|p| (*p, rms[p.index()]))
                .fold(
                    (Phase::A, f64::MIN),
                    |acc, x| if x.1 > acc.1 { x } else { acc },
                );

        if !self.tripped && !self.trip_pending && worst > self.config.pickup_rms_a {
            let anchor = self.excursion_start.unwrap_or(now);
            let fire_at = (anchor + self.config.processing_delay_ns()).max(now);
            ctx.log(LogEvent::PtocPickup {
                phase,
                rms_a: worst,
                anchor_ns: anchor,
            });
            self.trip_pending = true;
            ctx.set_timer(fire_at, timer_tag(TAG_TRIP, 0))?;
        } else if self.tripped && worst <= self.config.pickup_rms_a {
            self.tripped = false;
            self.excursion_start = None;
            self.publish(ctx, false)?;
        }
        Ok(())
    }

    fn publish(&mut self, ctx: &mut Ctx<'_, World>, trip: bool) -> Result<(), DeviceFault> {
        let epoch = ctx.world.epoch_seconds;
        let seq = publish_state(ctx, &mut self.publisher, vec![trip], epoch)?;
        ctx.log(LogEvent::GooseBuffered {
            go_id: self.config.go_id.clone(),
            st_num: self.publisher.st_num,
            value: trip,
            publish_seq: seq,
        });
        Ok(())
    }
}

impl Device<World> for ProtectionIed {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        self.publish(ctx, false)
    }

    fn on_frame(&mut self, ctx: &mut Ctx<'_, World>, d: &Delivery) -> Result<(), DeviceFault> {
        match codec::classify_frame(&d.bytes) {
            codec::FrameKind::Sv => self.on_sv(ctx, &d.bytes),
            _ => Ok(()),
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        match tag_kind(tag) {
            TAG_TRIP => {
                self.trip_pending = false;
                self.tripped = true;
                self.trips += 1;
                self.publish(ctx, true)
            }
            TAG_RETRANSMIT => on_retransmit(ctx, &mut self.publisher, tag),
            _ => Ok(()),
        }
    }
}
