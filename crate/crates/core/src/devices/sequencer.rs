use serde::{Deserialize, Serialize};

use super::{tag_kind, tag_payload, timer_tag, World};
use crate::bus::{Ctx, Device, DeviceFault, SimTime};
use crate::events::LogEvent;

/// Station-level breaker command (HMI/RTU stand-in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OperatorAction {
    pub at_ns: SimTime,
    pub close_breaker: bool,
}

const TAG_FAULT_ON: u8 = 1;
const TAG_FAULT_OFF: u8 = 2;
const TAG_OPERATOR: u8 = 3;

/// Logs fault inception/clearing at the sampling instants where they take
/// effect and executes operator breaker commands.
pub struct PlantSequencer {
    actions: Vec<OperatorAction>,
}

impl PlantSequencer {
    pub fn new(actions: Vec<OperatorAction>) -> Self {
        PlantSequencer { actions }
    }
}

impl Device<World> for PlantSequencer {
    fn name(&self) -> &str {
        "PLANT"
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        let feeder = ctx.world.plant.feeder.clone();
        let snap = |t: SimTime| feeder.sample_time(feeder.sample_index_at_or_after(t));
        let faults = ctx.world.plant.faults.clone();
        for (i, f) in faults.iter().enumerate() {
            ctx.set_timer(snap(f.inception_ns), timer_tag(TAG_FAULT_ON, i as u64))?;
            if let Some(c) = f.clear_ns {
                ctx.set_timer(snap(c), timer_tag(TAG_FAULT_OFF, i as u64))?;
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            ctx.set_timer(a.at_ns, timer_tag(TAG_OPERATOR, i as u64))?;
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        let i = tag_payload(tag) as usize;
        match tag_kind(tag) {
            TAG_FAULT_ON => {
                let f = &ctx.world.plant.faults[i];
                let ev = LogEvent::FaultInception {
                    phase: f.phase,
                    fault_current_peak_a: f.fault_current_peak_a,
                };
                ctx.log(ev);
            }
            TAG_FAULT_OFF => {
                let phase = ctx.world.plant.faults[i].phase;
                ctx.log(LogEvent::FaultCleared { phase });
            }
            TAG_OPERATOR => {
                let close = self.actions[i].close_breaker;
                let now = ctx.now();
                if ctx.world.plant.set_breaker(close, now) {
                    ctx.log(LogEvent::BreakerOperated {
                        closed: close,
                        trigger_publish_seq: None,
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }
}
