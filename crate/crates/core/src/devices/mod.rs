//! Virtual substation devices wired to the process bus.

mod breaker;
mod merging_unit;
mod protection;
mod sequencer;

pub use breaker::{BreakerIed, BreakerIedConfig, BreakerMode};
pub use merging_unit::{MergingUnit, MuConfig};
pub use protection::{PcConfig, PcProfile, ProtectionIed};
pub use sequencer::{OperatorAction, PlantSequencer};

use serde::{Deserialize, Serialize};

use crate::bus::{Ctx, DeviceFault, SimTime};
use crate::codec::{self, GooseFrame, MacAddress, UtcTimestamp};
use crate::power::Plant;

/// Shared state every device sees: the physical plant and the clock epoch.
#[derive(Debug, Clone)]
pub struct World {
    pub plant: Plant,
    pub epoch_seconds: u32,
}

/// mA per ampere on the SV wire.
pub const CURRENT_SCALE: f64 = 1000.0;
/// 10 mV units per volt on the SV wire.
pub const VOLTAGE_SCALE: f64 = 100.0;

pub fn current_to_wire(amps: f64) -> i32 {
    (amps * CURRENT_SCALE)
        .round()
        .clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn voltage_to_wire(volts: f64) -> i32 {
    (volts * VOLTAGE_SCALE)
        .round()
        .clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn current_from_wire(v: i32) -> f64 {
    v as f64 / CURRENT_SCALE
}

pub fn voltage_from_wire(v: i32) -> f64 {
    v as f64 / VOLTAGE_SCALE
}

/// Timer tags carry a kind in the top byte and a payload below it.
pub(crate) const fn timer_tag(kind: u8, payload: u64) -> u64 {
    ((kind as u64) << 56) | (payload & 0x00FF_FFFF_FFFF_FFFF)
}

pub(crate) const fn tag_kind(tag: u64) -> u8 {
    (tag >> 56) as u8
}

pub(crate) const fn tag_payload(tag: u64) -> u64 {
    tag & 0x00FF_FFFF_FFFF_FFFF
}

pub fn default_retransmission_ms() -> Vec<u64> {
    vec![2, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000]
}

/// Identity and schedule of one published GOOSE control block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GooseStreamConfig {
    pub go_id: String,
    pub gocb_ref: String,
    pub dat_set: String,
    pub dst: MacAddress,
    pub src: MacAddress,
    pub app_id: u16,
    #[serde(default = "one")]
    pub conf_rev: u32,
    #[serde(default = "default_tal")]
    pub time_allowed_to_live_ms: u32,
    /// Gaps after a state change; the last entry repeats.
    #[serde(default = "default_retransmission_ms")]
    pub retransmission_ms: Vec<u64>,
}

fn one() -> u32 {
    1
}

fn default_tal() -> u32 {
    2000
}

impl GooseStreamConfig {
    pub fn validate(&self, key: &str) -> Result<(), String> {
        if self.retransmission_ms.is_empty() || self.retransmission_ms.contains(&0) {
            return Err(format!(
                "{key}.retransmissionMs: intervals must be strictly positive"
            ));
        }
        if !self.go_id.is_ascii() || self.go_id.is_empty() {
            return Err(format!("{key}.goId: must be non-empty ASCII"));
        }
        Ok(())
    }
}

/// Publisher-side sequence discipline of one GOOSE stream: stNum steps on
/// every state change (sqNum back to 0, fresh `t`); each retransmission bumps
/// sqNum and keeps `t`.
#[derive(Debug, Clone)]
pub struct GoosePublisher {
    pub config: GooseStreamConfig,
    pub st_num: u32,
    pub sq_num: u32,
    pub all_data: Vec<bool>,
    pub t: UtcTimestamp,
    pub last_state_change_at: SimTime,
    schedule_idx: usize,
    generation: u64,
}

impl GoosePublisher {
    pub fn new(config: GooseStreamConfig) -> Self {
        GoosePublisher {
            config,
            st_num: 0,
            sq_num: 0,
            all_data: Vec::new(),
            t: UtcTimestamp::from_nanos(0, 0),
            last_state_change_at: SimTime::ZERO,
            schedule_idx: 0,
            generation: 0,
        }
    }

    pub fn frame(&self) -> GooseFrame {
        GooseFrame {
            dst: self.config.dst,
            src: self.config.src,
            vlan: None,
            app_id: self.config.app_id,
            gocb_ref: self.config.gocb_ref.clone(),
            time_allowed_to_live: self.config.time_allowed_to_live_ms,
            dat_set: self.config.dat_set.clone(),
            go_id: self.config.go_id.clone(),
            t: self.t,
            st_num: self.st_num,
            sq_num: self.sq_num,
            simulation: false,
            conf_rev: self.config.conf_rev,
            nds_com: false,
            all_data: self.all_data.clone(),
        }
    }

    pub fn change_state(&mut self, all_data: Vec<bool>, now: SimTime, epoch: u32) -> GooseFrame {
        self.st_num = self.st_num.wrapping_add(1).max(1);
        self.sq_num = 0;
        self.all_data = all_data;
        self.t = UtcTimestamp::from_nanos(epoch, now.0);
        self.last_state_change_at = now;
        self.schedule_idx = 0;
        self.generation += 1;
        self.frame()
    }

    pub fn retransmit(&mut self) -> GooseFrame {
        self.sq_num = self.sq_num.wrapping_add(1);
        self.frame()
    }

    /// Next retransmission gap in ns; advances through the schedule.
    pub fn next_interval_ns(&mut self) -> u64 {
        let s = &self.config.retransmission_ms;
        let ms = s[self.schedule_idx.min(s.len() - 1)];
        self.schedule_idx += 1;
        ms * 1_000_000
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

pub(crate) const TAG_RETRANSMIT: u8 = 0xF0;

/// Publishes a state change and arms the first retransmission.
pub(crate) fn publish_state<W>(
    ctx: &mut Ctx<'_, W>,
    publisher: &mut GoosePublisher,
    all_data: Vec<bool>,
    epoch: u32,
) -> Result<u64, DeviceFault> {
    let frame = publisher.change_state(all_data, ctx.now(), epoch);
    let seq = ctx.publish(&codec::encode_goose(&frame)?)?;
    arm_retransmit(ctx, publisher)?;
    Ok(seq)
}

fn arm_retransmit<W>(
    ctx: &mut Ctx<'_, W>,
    publisher: &mut GoosePublisher,
) -> Result<(), DeviceFault> {
    let at = ctx.now() + publisher.next_interval_ns();
    ctx.set_timer(at, timer_tag(TAG_RETRANSMIT, publisher.generation()))?;
    Ok(())
}

/// Handles a retransmission timer; stale generations are dropped.
pub(crate) fn on_retransmit<W>(
    ctx: &mut Ctx<'_, W>,
    publisher: &mut GoosePublisher,
    tag: u64,
) -> Result<(), DeviceFault> {
    if tag_payload(tag) != publisher.generation() || publisher.st_num == 0 {
        return Ok(());
    }
    let frame = publisher.retransmit();
    ctx.publish(&codec::encode_goose(&frame)?)?;
    arm_retransmit(ctx, publisher)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GooseStreamConfig {
        GooseStreamConfig {
            go_id: "PC1_Trip".into(),
            gocb_ref: "PC1/LLN0$GO$gcb".into(),
            dat_set: "PC1/LLN0$ds".into(),
            dst: MacAddress::GOOSE_DEFAULT,
            src: MacAddress([0, 1, 2, 3, 4, 5]),
            app_id: 1,
            conf_rev: 1,
            time_allowed_to_live_ms: 2000,
            retransmission_ms: default_retransmission_ms(),
        }
    }

    #[test]
    fn state_change_and_retransmission_discipline() {
        let mut p = GoosePublisher::new(cfg());
        let f1 = p.change_state(vec![false], SimTime::ZERO, 100);
        assert_eq!((f1.st_num, f1.sq_num), (1, 0));
        let r1 = p.retransmit();
        let r2 = p.retransmit();
        assert_eq!((r2.st_num, r1.sq_num, r2.sq_num), (1, 1, 2));
        assert_eq!(r1.t, f1.t);
        assert_eq!(r2.t, f1.t);
        let f2 = p.change_state(vec![true], SimTime::from_millis(5), 100);
        assert_eq!((f2.st_num, f2.sq_num), (2, 0));
        assert_ne!(f2.t, f1.t);
    }

    #[test]
    fn schedule_runs_then_repeats_last() {
        let mut p = GoosePublisher::new(cfg());
        p.change_state(vec![false], SimTime::ZERO, 0);
        let gaps: Vec<u64> = (0..13).map(|_| p.next_interval_ns() / 1_000_000).collect();
        assert_eq!(
            gaps,
            vec![2, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000, 1000, 1000]
        );
        p.change_state(vec![true], SimTime::from_millis(1), 0);
        assert_eq!(p.next_interval_ns(), 2_000_000);
    }

    #[test]
    fn wire_scaling() {
        assert_eq!(current_to_wire(20_000.0), 20_000_000);
        assert_eq!(voltage_to_wire(-1.234), -123);
        assert_eq!(current_from_wire(current_to_wire(223.5)), 223.5);
        assert_eq!(current_to_wire(1e12), i32::MAX);
    }

    #[test]
    fn tags_round_trip() {
        let t = timer_tag(0xF0, 12345);
        assert_eq!(tag_kind(t), 0xF0);
        assert_eq!(tag_payload(t), 12345);
    }
}
