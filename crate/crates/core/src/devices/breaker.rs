use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    on_retransmit, publish_state, tag_kind, tag_payload, timer_tag, GoosePublisher,
    GooseStreamConfig, World, TAG_RETRANSMIT,
};
use crate::bus::{Ctx, Delivery, Device, DeviceFault};
use crate::codec::{self, MacAddress};
use crate::events::LogEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BreakerMode {
    /// Trip reaches XCBR1 through the merging unit's hardwired output.
    HardwiredViaMu,
    /// XCBR1 subscribes to the trip GOOSE itself and publishes its status.
    DirectGooseBreakerIed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BreakerIedConfig {
    pub mode: BreakerMode,
    pub direct_goose_delay_ns: u64,
    pub subscribed_go_id: String,
    pub status: GooseStreamConfig,
}

impl Default for BreakerIedConfig {
    fn default() -> Self {
        BreakerIedConfig {
            mode: BreakerMode::HardwiredViaMu,
            direct_goose_delay_ns: 2_000_000,
            subscribed_go_id: "PC1_Trip".into(),
            status: GooseStreamConfig {
                go_id: "XCBR1_Status".into(),
                gocb_ref: "XCBR1CTRL/LLN0$GO$gcbStatus".into(),
                dat_set: "XCBR1CTRL/LLN0$dsStatus".into(),
                dst: MacAddress([0x01, 0x0C, 0xCD, 0x01, 0x00, 0x02]),
                src: MacAddress([0x00, 0x1A, 0x4C, 0x00, 0x00, 0x21]),
                app_id: 0x0002,
                conf_rev: 1,
                time_allowed_to_live_ms: 2000,
                retransmission_ms: super::default_retransmission_ms(),
            },
        }
    }
}

const TAG_OPEN: u8 = 1;

/// XCBR1 operating as a breaker IED. Status GOOSE `allData[0]` is `true`
/// while the breaker is closed.
pub struct BreakerIed {
    name: String,
    config: BreakerIedConfig,
    publisher: GoosePublisher,
    last_st_num: BTreeMap<String, u32>,
    pending: BTreeMap<u64, u64>,
    next_id: u64,
    pub unknown_go_id: u64,
    pub malformed: u64,
}

impl BreakerIed {
    pub fn new(name: impl Into<String>, config: BreakerIedConfig) -> Self {
        let publisher = GoosePublisher::new(config.status.clone());
        BreakerIed {
            name: name.into(),
            config,
            publisher,
            last_st_num: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_id: 0,
            unknown_go_id: 0,
            malformed: 0,
        }
    }

    pub fn publisher(&self) -> &GoosePublisher {
        &self.publisher
    }

    fn publish_status(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        let closed = ctx.world.plant.breaker.closed;
        let epoch = ctx.world.epoch_seconds;
        let seq = publish_state(ctx, &mut self.publisher, vec![closed], epoch)?;
        ctx.log(LogEvent::GooseBuffered {
            go_id: self.config.status.go_id.clone(),
            st_num: self.publisher.st_num,
            value: closed,
            publish_seq: seq,
        });
        Ok(())
    }
}

impl Device<World> for BreakerIed {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        self.publish_status(ctx)
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
        let new_state = self.last_st_num.get(&frame.go_id) != Some(&frame.st_num);
        self.last_st_num.insert(frame.go_id.clone(), frame.st_num);
        if !new_state || !frame.all_data[0] {
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
        let id = self.next_id;
        self.next_id += 1;
        self.pending.insert(id, d.publish_seq);
        let at = ctx.now() + self.config.direct_goose_delay_ns;
        ctx.set_timer(at, timer_tag(TAG_OPEN, id))?;
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        match tag_kind(tag) {
            TAG_OPEN => {
                let Some(seq) = self.pending.remove(&tag_payload(tag)) else {
                    return Ok(());
                };
                let now = ctx.now();
                if ctx.world.plant.set_breaker(false, now) {
                    ctx.log(LogEvent::BreakerOperated {
                        closed: false,
                        trigger_publish_seq: Some(seq),
                    });
                    self.publish_status(ctx)?;
                }
                Ok(())
            }
            TAG_RETRANSMIT => on_retransmit(ctx, &mut self.publisher, tag),
            _ => Ok(()),
        }
    }
}
