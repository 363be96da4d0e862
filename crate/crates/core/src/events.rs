//! Scenario event log (events.jsonl).

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bus::SimTime;
use crate::power::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AttackKind {
    SvFdi,
    GooseReplay,
    GooseSpoof,
}

impl AttackKind {
    pub fn is_goose(self) -> bool {
        !matches!(self, AttackKind::SvFdi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "camelCase",
    rename_all_fields = "camelCase"
)]
pub enum LogEvent {
    FaultInception {
        phase: Phase,
        fault_current_peak_a: f64,
    },
    FaultCleared {
        phase: Phase,
    },
    AttackStarted {
        label: String,
        attack: AttackKind,
    },
    /// PTOC picked up on windowed RMS.
    PtocPickup {
        phase: Phase,
        rms_a: f64,
        /// Start-element anchor the operate delay is measured from.
        anchor_ns: SimTime,
    },
    /// A GOOSE state change entered the publish buffer.
    GooseBuffered {
        go_id: String,
        st_num: u32,
        value: bool,
        publish_seq: u64,
    },
    /// A trip GOOSE was accepted by the merging unit or breaker IED.
    TripReceived {
        go_id: String,
        st_num: u32,
        sq_num: u32,
        publish_seq: u64,
        published_ns: SimTime,
        publisher: String,
    },
    /// The merging unit asserted its hardwired trip contact.
    HardwiredTrip {
        publish_seq: u64,
    },
    BreakerOperated {
        closed: bool,
        /// Publication that caused the operation, if any.
        trigger_publish_seq: Option<u64>,
    },
    Alert {
        rule_id: String,
        stream_id: String,
        detect_at_ns: SimTime,
        latency_ns: u64,
        frame_seq: u64,
        detail: String,
    },
    AlertPublished {
        st_num: u32,
        publish_seq: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEntry {
    pub at_ns: SimTime,
    pub device: String,
    #[serde(flatten)]
    pub event: LogEvent,
}

pub fn write_jsonl<W: Write>(entries: &[LogEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|err| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {err}", i + 1))
        })?;
        out.push(e);
    }
    Ok(out)
}
