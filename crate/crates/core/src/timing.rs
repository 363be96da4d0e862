//! Trip-latency decomposition from the event log and detection-window
//! arithmetic.
//!
//! A chain runs backwards from a breaker opening: the opening names the
//! publication that triggered it, the matching `TripReceived` gives the
//! GOOSE publish and receipt times, and the latest fault inception or attack
//! start at or before the publication is the origin.
//!
//! - T_a: origin to GOOSE publication
//! - T_b: publication to receipt by the tripping device
//! - T_c: receipt to breaker open
//! - T_p = T_a + T_b + T_c

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::SimTime;
use crate::events::{AttackKind, LogEntry, LogEvent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("incomplete chain: no breaker opening caused by a GOOSE trip")]
    NoBreakerOpening,
    #[error("incomplete chain: no TripReceived for publication {publish_seq} at {device}")]
    MissingTripReceipt { publish_seq: u64, device: String },
    #[error("incomplete chain: no fault inception or attack start before publication {publish_seq} at {published_ns}")]
    MissingOrigin {
        publish_seq: u64,
        published_ns: SimTime,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "camelCase",
    rename_all_fields = "camelCase"
)]
pub enum ChainOrigin {
    Fault,
    Attack { label: String, attack: AttackKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingReport {
    #[serde(rename = "T_a_ns")]
    pub t_a_ns: u64,
    #[serde(rename = "T_b_ns")]
    pub t_b_ns: u64,
    #[serde(rename = "T_c_ns")]
    pub t_c_ns: u64,
    #[serde(rename = "T_p_ns")]
    pub t_p_ns: u64,
    pub origin: ChainOrigin,
    #[serde(rename = "originAtNs")]
    pub origin_at: SimTime,
    #[serde(rename = "publishedAtNs")]
    pub published_at: SimTime,
    #[serde(rename = "receivedAtNs")]
    pub received_at: SimTime,
    #[serde(rename = "openedAtNs")]
    pub opened_at: SimTime,
    #[serde(rename = "triggerPublishSeq")]
    pub trigger_publish_seq: u64,
    #[serde(rename = "tripDevice")]
    pub trip_device: String,
}

fn chain(log: &[LogEntry], idx: usize) -> Result<TimingReport, TimingError> {
    let open = &log[idx];
    let LogEvent::BreakerOperated {
        closed: false,
        trigger_publish_seq: Some(seq),
    } = open.event
    else {
        return Err(TimingError::NoBreakerOpening);
    };
    let (received_at, published_at) = log[..idx]
        .iter()
        .rev()
        .find_map(|e| match &e.event {
            LogEvent::TripReceived {
                publish_seq,
                published_ns,
                ..
            } if *publish_seq == seq && e.device == open.device => Some((e.at_ns, *published_ns)),
            _ => None,
        })
        .ok_or_else(|| TimingError::MissingTripReceipt {
            publish_seq: seq,
            device: open.device.clone(),
        })?;
    let (origin_at, origin) = log
        .iter()
        .rev()
        .filter(|e| e.at_ns <= published_at)
        .filter_map(|e| match &e.event {
            LogEvent::FaultInception { .. } => Some((e.at_ns, ChainOrigin::Fault)),
            LogEvent::AttackStarted { label, attack } => Some((
                e.at_ns,
                ChainOrigin::Attack {
                    label: label.clone(),
                    attack: *attack,
                },
            )),
            _ => None,
        })
        .next()
        .ok_or(TimingError::MissingOrigin {
            publish_seq: seq,
            published_ns: published_at,
        })?;
    let t_a_ns = published_at - origin_at;
    let t_b_ns = received_at - published_at;
    let t_c_ns = open.at_ns - received_at;
    Ok(TimingReport {
        t_a_ns,
        t_b_ns,
        t_c_ns,
        t_p_ns: t_a_ns + t_b_ns + t_c_ns,
        origin,
        origin_at,
        published_at,
        received_at,
        opened_at: open.at_ns,
        trigger_publish_seq: seq,
        trip_device: open.device.clone(),
    })
}

/// Every GOOSE-triggered breaker opening in the log, in log order.
pub fn decompose_all(log: &[LogEntry]) -> Result<Vec<TimingReport>, TimingError> {
    let opens: Vec<usize> = log
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            matches!(
                e.event,
                LogEvent::BreakerOperated {
                    closed: false,
                    trigger_publish_seq: Some(_)
                }
            )
        })
        .map(|(i, _)| i)
        .collect();
    if opens.is_empty() {
        return Err(TimingError::NoBreakerOpening);
    }
    opens.into_iter().map(|i| chain(log, i)).collect()
}

/// The first trip chain of the log.
pub fn decompose(log: &[LogEntry]) -> Result<TimingReport, TimingError> {
    decompose_all(log).map(|mut v| v.swap_remove(0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowAnalysis {
    pub attack_kind: AttackKind,
    pub available_window_ns: u64,
    pub detection_latency_ns: u64,
    pub mitigation_deploy_time_ns: u64,
    pub blocked: bool,
}

/// SV attacks must be stopped before the trip GOOSE exists (window T_a);
/// GOOSE attacks between receipt and actuation (window T_c).
pub fn analyze_window(
    attack_kind: AttackKind,
    report: &TimingReport,
    detection_latency_ns: u64,
    mitigation_deploy_time_ns: u64,
) -> WindowAnalysis {
    let available_window_ns = if attack_kind.is_goose() {
        report.t_c_ns
    } else {
        report.t_a_ns
    };
    WindowAnalysis {
        attack_kind,
        available_window_ns,
        detection_latency_ns,
        mitigation_deploy_time_ns,
        blocked: detection_latency_ns.saturating_add(mitigation_deploy_time_ns)
            < available_window_ns,
    }
}

/// Timing block of report.json.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    #[serde(flatten)]
    pub primary: Option<TimingReport>,
    pub chains: Vec<TimingReport>,
    pub windows: Vec<WindowAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
