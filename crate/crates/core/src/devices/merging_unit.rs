use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{current_to_wire, tag_kind, tag_payload, timer_tag, voltage_to_wire, World};
use crate::bus::{Ctx, Delivery, Device, DeviceFault, SimTime};
use crate::codec::{self, MacAddress, SvFrame, SvSample, SMP_CNT_MODULUS};
use crate::events::LogEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MuConfig {
    pub sv_id: String,
    pub dst: MacAddress,
    pub src: MacAddress,
    pub app_id: u16,
    pub conf_rev: u32,
    pub sampling_rate: u32,
    /// Sample instant to SV publication.
    pub sv_processing_delay_ns: u64,
    /// Trip GOOSE receipt to breaker open over the hardwired contact.
    pub goose_to_trip_delay_ns: u64,
    pub subscribed_go_id: String,
}

impl Default for MuConfig {
    fn default() -> Self {
        MuConfig {
            sv_id: "MU01".into(),
            dst: MacAddress::SV_DEFAULT,
            src: MacAddress([0x00, 0x1A, 0x4C, 0x00, 0x00, 0x01]),
            app_id: 0x4000,
            conf_rev: 1,
            sampling_rate: 4800,
            sv_processing_delay_ns: 0,
            goose_to_trip_delay_ns: 6_000_000,
            subscribed_go_id: "PC1_Trip".into(),
        }
    }
}

const TAG_SAMPLE: u8 = 1;
const TAG_PUBLISH: u8 = 2;
const TAG_TRIP: u8 = 3;

/// Merging unit: samples the feeder every 1/Fs, publishes SV, and drives the
/// breaker's hardwired trip input when a trip GOOSE arrives.
pub struct MergingUnit {
    name: String,
    config: MuConfig,
    hardwired: bool,
    next_sample: u64,
    pending_sv: VecDeque<Vec<u8>>,
    last_st_num: BTreeMap<String, u32>,
    pending_trips: BTreeMap<u64, u64>,
    next_trip_id: u64,
    pub sv_published: u64,
    pub unknown_go_id: u64,
    pub malformed: u64,
    pub trips_issued: u64,
}

impl MergingUnit {
    /// `hardwired` is false when the breaker subscribes to GOOSE itself.
    pub fn new(name: impl Into<String>, config: MuConfig, hardwired: bool) -> Self {
        MergingUnit {
            name: name.into(),
            config,
            hardwired,
            next_sample: 0,
            pending_sv: VecDeque::new(),
            last_st_num: BTreeMap::new(),
            pending_trips: BTreeMap::new(),
            next_trip_id: 0,
            sv_published: 0,
            unknown_go_id: 0,
            malformed: 0,
            trips_issued: 0,
        }
    }

    pub fn config(&self) -> &MuConfig {
        &self.config
    }

    fn build_frame(&self, world: &World, n: u64) -> SvFrame {
        let (i, v) = world.plant.channels(n);
        let mut samples = [SvSample::default(); 8];
        for k in 0..4 {
            samples[k].value = current_to_wire(i[k]);
            samples[k + 4].value = voltage_to_wire(v[k]);
        }
        SvFrame {
            dst: self.config.dst,
            src: self.config.src,
            vlan: None,
            app_id: self.config.app_id,
            sv_id: self.config.sv_id.clone(),
            smp_cnt: (n % SMP_CNT_MODULUS as u64) as u16,
            conf_rev: self.config.conf_rev,
            smp_synch: 2,
            samples,
        }
    }

    fn sample_tick(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        let n = self.next_sample;
        let bytes = codec::encode_sv(&self.build_frame(ctx.world, n))?;
        if self.config.sv_processing_delay_ns == 0 {
            ctx.publish(&bytes)?;
            self.sv_published += 1;
        } else {
            self.pending_sv.push_back(bytes);
            let at = ctx.now() + self.config.sv_processing_delay_ns;
            ctx.set_timer(at, timer_tag(TAG_PUBLISH, 0))?;
        }
        self.next_sample = n + 1;
        let next = ctx.world.plant.feeder.sample_time(self.next_sample);
        ctx.set_timer(next, timer_tag(TAG_SAMPLE, 0))?;
        Ok(())
    }
}

impl Device<World> for MergingUnit {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        if self.config.sampling_rate != ctx.world.plant.feeder.sampling_rate {
            return Err(DeviceFault::new("MU sampling rate differs from feeder Fs"));
        }
        ctx.set_timer(SimTime::ZERO, timer_tag(TAG_SAMPLE, 0))?;
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        match tag_kind(tag) {
            TAG_SAMPLE => self.sample_tick(ctx),
            TAG_PUBLISH => {
                if let Some(bytes) = self.pending_sv.pop_front() {
                    ctx.publish(&bytes)?;
                    self.sv_published += 1;
                }
                Ok(())
            }
            TAG_TRIP => {
                let Some(seq) = self.pending_trips.remove(&tag_payload(tag)) else {
                    return Ok(());
                };
                ctx.log(LogEvent::HardwiredTrip { publish_seq: seq });
                let now = ctx.now();
                if ctx.world.plant.set_breaker(false, now) {
                    ctx.log(LogEvent::BreakerOperated {
                        closed: false,
                        trigger_publish_seq: Some(seq),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn on_frame(&mut self, ctx: &mut Ctx<'_, World>, d: &Delivery) -> Result<(), DeviceFault> {
        let Ok(frame) = codec::decode_goose(&d.bytes) else {
            self.malformed += 1;
            return Ok(());
        };
        if frame.go_id != self.config.subscribed_go_id {
            self.unknown_go_id += 1;
            return Ok(());
        }
        // Act on a new state carrying a trip; retransmissions of a known
        // state are ignored. The MU has no way to tell stale from fresh.
        let new_state = self.last_st_num.get(&frame.go_id) != Some(&frame.st_num);
        self.last_st_num.insert(frame.go_id.clone(), frame.st_num);
        if !self.hardwired || !new_state || !frame.all_data[0] {
            return Ok(());
        }
        ctx.log(LogEvent::TripReceived {
            go_id: frame.go_id.clone(),
            st_num: frame.st_num,
            sq_num: frame.sq_num,
            publish_seq: d.publish_seq,
            published_ns: d.publish_at,
            publisher: ctx.device_name(d.publisher).to_string(),
        });
        let id = self.next_trip_id;
        self.next_trip_id += 1;
        self.pending_trips.insert(id, d.publish_seq);
        self.trips_issued += 1;
        let at = ctx.now() + self.config.goose_to_trip_delay_ns;
        ctx.set_timer(at, timer_tag(TAG_TRIP, id))?;
        Ok(())
    }
}
