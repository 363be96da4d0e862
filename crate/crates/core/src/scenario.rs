//! Scenario files, built-in experiments, run orchestration and artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attacker::{AttackSpec, AttackerDevice, InjectionRecord, ReplaySource};
use crate::bus::{
    Bus, BusError, CaptureRecord, LatencyModel, RunStats, SimTime, SubscriptionFilter,
};
use crate::capture;
use crate::codec::{self, FrameKind, ETHERTYPE_GOOSE, ETHERTYPE_SV};
use crate::devices::{
    BreakerIed, BreakerIedConfig, BreakerMode, MergingUnit, MuConfig, OperatorAction, PcConfig,
    PcProfile, PlantSequencer, ProtectionIed, World,
};
use crate::events::{self, AttackKind, LogEntry};
use crate::nids::{self, Alert, DetectionSummary, NidsConfig, NidsDevice, RuleId};
use crate::power::{FaultSpec, FeederConfig, Phase, Plant};
use crate::timing::{self, TimingSection, WindowAnalysis};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown built-in scenario {0:?}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("run failed: {0}")]
    Run(#[from] BusError),
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub fixed_latency_ns: u64,
    pub jitter_ns: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            fixed_latency_ns: 100_000,
            jitter_ns: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub mitigation_deploy_time_ns: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            mitigation_deploy_time_ns: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct OutputOptions {
    pub pcap: bool,
    pub report: bool,
}

/// Checks evaluated after a run; the exit code is 0 only if all hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Expectations {
    /// T_p of the first trip chain.
    pub trip_time_ms: Option<f64>,
    pub trip_time_tolerance_ms: f64,
    pub breaker_opens: Option<bool>,
    /// Some opening happened while the feeder carried load current only.
    pub opens_under_normal_load: Option<bool>,
    pub alert_count: Option<usize>,
    /// Exactly this set of rules fired at least once.
    pub rules_fired: Option<BTreeSet<RuleId>>,
    pub max_detection_with_transfer_ns: Option<u64>,
    pub missed_attacks: Option<Vec<String>>,
}

impl Default for Expectations {
    fn default() -> Self {
        Expectations {
            trip_time_ms: None,
            trip_time_tolerance_ms: 1.0,
            breaker_opens: None,
            opens_under_normal_load: None,
            alert_count: None,
            rules_fired: None,
            max_detection_with_transfer_ns: None,
            missed_attacks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub duration_ns: u64,
    /// Station clock seconds at simulation time zero.
    pub epoch_seconds: u32,
    pub network: NetworkConfig,
    pub feeder: FeederConfig,
    pub faults: Vec<FaultSpec>,
    pub operator: Vec<OperatorAction>,
    pub mu: MuConfig,
    pub pc: PcConfig,
    pub breaker: BreakerIedConfig,
    pub nids: NidsConfig,
    pub attacks: Vec<AttackSpec>,
    pub analysis: AnalysisConfig,
    pub expect: Expectations,
    pub output: OutputOptions,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "custom".into(),
            description: String::new(),
            seed: 1,
            duration_ns: 300_000_000,
            epoch_seconds: 1_700_000_000,
            network: NetworkConfig::default(),
            feeder: FeederConfig::default(),
            faults: Vec::new(),
            operator: Vec::new(),
            mu: MuConfig::default(),
            pc: PcConfig::default(),
            breaker: BreakerIedConfig::default(),
            nids: NidsConfig::default(),
            attacks: Vec::new(),
            analysis: AnalysisConfig::default(),
            expect: Expectations::default(),
            output: OutputOptions::default(),
        }
    }
}

/// Phase-A peak sample (n = 500) of the default feeder.
pub const BUILTIN_FAULT_NS: u64 = 104_166_666;

fn fault_scenario(name: &str, description: &str, trip_ms: f64) -> Scenario {
    Scenario {
        name: name.into(),
        description: description.into(),
        faults: vec![FaultSpec {
            phase: Phase::A,
            inception_ns: SimTime(BUILTIN_FAULT_NS),
            fault_current_peak_a: 20_000.0,
            clear_ns: None,
        }],
        expect: Expectations {
            trip_time_ms: Some(trip_ms),
            breaker_opens: Some(true),
            alert_count: Some(0),
            ..Expectations::default()
        },
        ..Scenario::default()
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "s1_fault_trip",
    "s2_simulated_ied",
    "s3_breaker_ied",
    "s4_sv_fdi",
    "s5_goose_replay",
    "s6_goose_spoof",
];

pub fn builtin(name: &str) -> Option<Scenario> {
    let s = match name {
        "s1_fault_trip" => fault_scenario(
            name,
            "Phase-A fault, original P&C profile, hardwired trip via the merging unit",
            19.0,
        ),
        "s2_simulated_ied" => {
            let mut s = fault_scenario(
                name,
                "Phase-A fault, simulated-IED P&C profile, hardwired trip",
                24.0,
            );
            s.pc.profile = PcProfile::SimulatedIed;
            s
        }
        "s3_breaker_ied" => {
            let mut s = fault_scenario(
                name,
                "Phase-A fault, breaker IED subscribing to the trip GOOSE directly",
                15.0,
            );
            s.breaker.mode = BreakerMode::DirectGooseBreakerIed;
            s
        }
        "s4_sv_fdi" => Scenario {
            name: name.into(),
            description: "False data injection of a 20 kA SV stream under normal load".into(),
            duration_ns: 400_000_000,
            attacks: vec![AttackSpec::SvFdi {
                target_sv_id: "MU01".into(),
                injected_peak_a: 20_000.0,
                inter_packet_ns: 208_334,
                start_at_ns: SimTime::from_millis(200),
                duration_ns: 100_000_000,
            }],
            expect: Expectations {
                breaker_opens: Some(true),
                opens_under_normal_load: Some(true),
                rules_fired: Some([RuleId::R4].into_iter().collect()),
                missed_attacks: Some(Vec::new()),
                ..Expectations::default()
            },
            ..Scenario::default()
        },
        "s5_goose_replay" => Scenario {
            name: name.into(),
            description: "Trip GOOSE captured during a fault, replayed under normal load".into(),
            duration_ns: 600_000_000,
            faults: vec![FaultSpec {
                phase: Phase::A,
                inception_ns: SimTime(BUILTIN_FAULT_NS),
                fault_current_peak_a: 20_000.0,
                clear_ns: Some(SimTime::from_millis(200)),
            }],
            operator: vec![OperatorAction {
                at_ns: SimTime::from_millis(300),
                close_breaker: true,
            }],
            attacks: vec![AttackSpec::GooseReplay {
                source: ReplaySource::FirstObserved {
                    go_id: "PC1_Trip".into(),
                    trip: true,
                },
                inject_at_ns: SimTime::from_millis(500),
            }],
            expect: Expectations {
                breaker_opens: Some(true),
                opens_under_normal_load: Some(true),
                rules_fired: Some([RuleId::R2].into_iter().collect()),
                max_detection_with_transfer_ns: Some(500_000),
                missed_attacks: Some(Vec::new()),
                ..Expectations::default()
            },
            ..Scenario::default()
        },
        "s6_goose_spoof" => Scenario {
            name: name.into(),
            description: "Protocol-conformant trip GOOSE spoof under normal load".into(),
            duration_ns: 1_000_000_000,
            attacks: vec![AttackSpec::GooseSpoof {
                target_go_id: "PC1_Trip".into(),
                all_data: vec![true],
                conformant: true,
                inject_at_ns: SimTime::from_millis(600),
            }],
            expect: Expectations {
                breaker_opens: Some(true),
                opens_under_normal_load: Some(true),
                alert_count: Some(0),
                missed_attacks: Some(vec!["gooseSpoof#1".into()]),
                ..Expectations::default()
            },
            ..Scenario::default()
        },
        _ => return None,
    };
    Some(s)
}

pub fn builtins() -> Vec<Scenario> {
    BUILTIN_NAMES.iter().filter_map(|n| builtin(n)).collect()
}

pub fn attack_label(index: usize, kind: AttackKind) -> String {
    let k = match kind {
        AttackKind::SvFdi => "svFdi",
        AttackKind::GooseReplay => "gooseReplay",
        AttackKind::GooseSpoof => "gooseSpoof",
    };
    format!("{k}#{}", index + 1)
}

/// Parses scenario JSON. A document whose `name` is a built-in is applied as
/// a merge patch over that built-in, any other over the defaults.
pub fn load_str(text: &str) -> Result<Scenario, ScenarioError> {
    let patch: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: "$".into(),
        message: e.to_string(),
    })?;
    if !patch.is_object() {
        return Err(ScenarioError::Parse {
            path: "$".into(),
            message: "scenario must be a JSON object".into(),
        });
    }
    let base = patch
        .get("name")
        .and_then(Value::as_str)
        .and_then(builtin)
        .unwrap_or_default();
    let mut doc = serde_json::to_value(&base).expect("scenario serializes");
    json_patch::merge(&mut doc, &patch);
    let scenario: Scenario =
        serde_path_to_error::deserialize(doc).map_err(|e| ScenarioError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    load_str(&fs::read_to_string(path)?)
}

/// A built-in name or a path to a scenario file.
pub fn resolve(spec: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin(spec) {
        return Ok(s);
    }
    let p = Path::new(spec);
    if p.exists() {
        return load(p);
    }
    Err(ScenarioError::UnknownBuiltin(spec.to_string()))
}

impl Scenario {
    fn goose_ids(&self) -> BTreeSet<String> {
        let mut ids: BTreeSet<String> = [self.pc.go_id.clone()].into_iter().collect();
        if self.breaker.mode == BreakerMode::DirectGooseBreakerIed {
            ids.insert(self.breaker.status.go_id.clone());
        }
        if self.nids.enabled {
            ids.insert(self.nids.alert_stream.go_id.clone());
        }
        ids
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_ns == 0 {
            return Err(invalid("durationNs", "must be positive"));
        }
        self.feeder
            .validate()
            .map_err(|e| invalid("feeder", e.to_string()))?;
        if !(self.pc.pickup_rms_a.is_finite() && self.pc.pickup_rms_a > 0.0) {
            return Err(invalid(
                "pc.pickupRmsA",
                format!(
                    "must be a positive number of amperes, got {}",
                    self.pc.pickup_rms_a
                ),
            ));
        }
        self.pc
            .stream()
            .validate("pc")
            .map_err(|m| invalid("pc", m))?;
        if self.breaker.mode == BreakerMode::DirectGooseBreakerIed {
            self.breaker
                .status
                .validate("breaker.status")
                .map_err(|m| invalid("breaker.status", m))?;
        }
        self.nids.validate().map_err(|m| invalid("nids", m))?;
        if self.mu.sampling_rate != self.feeder.sampling_rate {
            return Err(invalid(
                "mu.samplingRate",
                format!(
                    "{} differs from feeder.samplingRate {}",
                    self.mu.sampling_rate, self.feeder.sampling_rate
                ),
            ));
        }
        if self.pc.subscribed_sv_id != self.mu.sv_id {
            return Err(invalid(
                "pc.subscribedSvId",
                format!(
                    "{:?} is not published by any device",
                    self.pc.subscribed_sv_id
                ),
            ));
        }
        let goose = self.goose_ids();
        if !goose.contains(&self.mu.subscribed_go_id) {
            return Err(invalid(
                "mu.subscribedGoId",
                format!(
                    "{:?} is not published by any device",
                    self.mu.subscribed_go_id
                ),
            ));
        }
        if self.breaker.mode == BreakerMode::DirectGooseBreakerIed
            && !goose.contains(&self.breaker.subscribed_go_id)
        {
            return Err(invalid(
                "breaker.subscribedGoId",
                format!(
                    "{:?} is not published by any device",
                    self.breaker.subscribed_go_id
                ),
            ));
        }
        for (i, f) in self.faults.iter().enumerate() {
            if !(f.fault_current_peak_a.is_finite() && f.fault_current_peak_a >= 0.0) {
                return Err(invalid(
                    format!("faults[{i}].faultCurrentPeakA"),
                    "must be finite and non-negative",
                ));
            }
            if f.clear_ns.is_some_and(|c| c <= f.inception_ns) {
                return Err(invalid(
                    format!("faults[{i}].clearNs"),
                    "must follow inceptionNs",
                ));
            }
        }
        for (i, a) in self.attacks.iter().enumerate() {
            a.validate()
                .map_err(|e| invalid(format!("attacks[{i}]"), e.to_string()))?;
            let (key, id, known) = match a {
                AttackSpec::SvFdi { target_sv_id, .. } => {
                    ("targetSvId", target_sv_id, *target_sv_id == self.mu.sv_id)
                }
                AttackSpec::GooseSpoof { target_go_id, .. } => {
                    ("targetGoId", target_go_id, goose.contains(target_go_id))
                }
                AttackSpec::GooseReplay {
                    source: ReplaySource::FirstObserved { go_id, .. },
                    ..
                } => ("source.firstObserved.goId", go_id, goose.contains(go_id)),
                AttackSpec::GooseReplay { .. } => continue,
            };
            if !known {
                return Err(invalid(
                    format!("attacks[{i}].{key}"),
                    format!("{id:?} is not published by any configured device"),
                ));
            }
        }
        Ok(())
    }

    /// Whitelist derived from the configured publishers when none is given.
    pub fn effective_nids(&self) -> NidsConfig {
        let mut n = self.nids.clone();
        if n.whitelist.is_empty() {
            n.whitelist.sv_ids.insert(self.mu.sv_id.clone());
            n.whitelist.go_ids.insert(self.pc.go_id.clone());
            n.whitelist.gocb_refs.insert(self.pc.gocb_ref.clone());
            if self.breaker.mode == BreakerMode::DirectGooseBreakerIed {
                n.whitelist.go_ids.insert(self.breaker.status.go_id.clone());
                n.whitelist
                    .gocb_refs
                    .insert(self.breaker.status.gocb_ref.clone());
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakerOperation {
    pub at_ns: SimTime,
    pub closed: bool,
    pub device: String,
    pub trigger_publish_seq: Option<u64>,
    /// Worst-phase feeder RMS over the cycle before the operation.
    pub feeder_rms_before_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaptureSummary {
    pub frames: usize,
    pub sv_frames: usize,
    pub goose_frames: usize,
    pub pcap_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtectionSummary {
    pub trips: u64,
    pub max_window_rms_a: f64,
    pub unsubscribed_sv: u64,
    pub malformed_sv: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectationResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub scenario: Scenario,
    pub stats: RunStats,
    pub timing: TimingSection,
    pub detection: DetectionSummary,
    pub breaker: Vec<BreakerOperation>,
    pub injections: Vec<InjectionRecord>,
    pub protection: ProtectionSummary,
    pub capture: CaptureSummary,
    pub expectations: Vec<ExpectationResult>,
    pub passed: bool,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub capture: Vec<CaptureRecord>,
    pub log: Vec<LogEntry>,
    pub alerts: Vec<Alert>,
    /// (time, per-phase window RMS) seen by the protection IED.
    pub pc_rms_trace: Vec<(SimTime, [f64; 3])>,
    pub pcap: Vec<u8>,
}

pub fn run(scenario: &Scenario) -> Result<RunOutcome, ScenarioError> {
    scenario.validate()?;
    let mut scenario = scenario.clone();
    scenario.nids = scenario.effective_nids();

    let plant = Plant::new(scenario.feeder.clone(), scenario.faults.clone());
    let world = World {
        plant,
        epoch_seconds: scenario.epoch_seconds,
    };
    let latency = LatencyModel {
        fixed_ns: scenario.network.fixed_latency_ns,
        jitter_ns: scenario.network.jitter_ns,
        seed: scenario.seed,
    };
    let horizon = SimTime(scenario.duration_ns);
    let mut bus = Bus::new(world, latency, Some(horizon));
    let sv = SubscriptionFilter::ethertypes(&[ETHERTYPE_SV]);
    let goose = SubscriptionFilter::ethertypes(&[ETHERTYPE_GOOSE]);
    let both = SubscriptionFilter::ethertypes(&[ETHERTYPE_SV, ETHERTYPE_GOOSE]);

    bus.add_device(Box::new(PlantSequencer::new(scenario.operator.clone())));
    let direct = scenario.breaker.mode == BreakerMode::DirectGooseBreakerIed;
    let mu = bus.add_device(Box::new(MergingUnit::new(
        "MU1",
        scenario.mu.clone(),
        !direct,
    )));
    bus.subscribe(mu, goose.clone())?;
    let pc = bus.add_device(Box::new(ProtectionIed::new(
        "PC1",
        scenario.pc.clone(),
        scenario.feeder.samples_per_cycle(),
    )));
    bus.subscribe(pc, sv)?;
    if direct {
        let xcbr = bus.add_device(Box::new(BreakerIed::new("XCBR1", scenario.breaker.clone())));
        bus.subscribe(xcbr, goose)?;
    }
    let nids_id = if scenario.nids.enabled {
        let id = bus.add_device(Box::new(NidsDevice::new("NIDS1", scenario.nids.clone())));
        bus.subscribe(id, both.clone())?;
        Some(id)
    } else {
        None
    };
    let atk_id = if scenario.attacks.is_empty() {
        None
    } else {
        let specs = scenario
            .attacks
            .iter()
            .enumerate()
            .map(|(i, a)| (attack_label(i, a.kind()), a.clone()))
            .collect();
        let id = bus.add_device(Box::new(AttackerDevice::new("ATK1", specs)));
        bus.subscribe(id, both)?;
        Some(id)
    };

    let stats = bus.run_until(horizon)?;

    let pc_dev = bus
        .device::<ProtectionIed>(pc)
        .expect("PC1 is a ProtectionIed");
    let pc_rms_trace = pc_dev.rms_trace.clone();
    let protection = ProtectionSummary {
        trips: pc_dev.trips,
        max_window_rms_a: pc_rms_trace
            .iter()
            .flat_map(|(_, r)| r.iter().copied())
            .fold(0.0, f64::max),
        unsubscribed_sv: pc_dev.unsubscribed,
        malformed_sv: pc_dev.malformed,
    };
    let (alerts, alert_pubs) = nids_id
        .and_then(|id| bus.device::<NidsDevice>(id))
        .map(|n| (n.alerts.clone(), n.published.clone()))
        .unwrap_or_default();
    let injections = atk_id
        .and_then(|id| bus.device::<AttackerDevice>(id))
        .map(|a| a.injections.clone())
        .unwrap_or_default();
    let (world, capture, log) = bus.into_parts();

    // Offending frame delivery to NIDS vs. alert GOOSE delivery on the tap.
    let tap_delivery: BTreeMap<u64, SimTime> = capture
        .iter()
        .map(|r| (r.publish_seq, r.deliver_at))
        .collect();
    let offending: BTreeMap<u64, SimTime> = alerts
        .iter()
        .map(|a| (a.frame_seq, a.deliver_at_ns))
        .collect();
    let transfer: Vec<(u64, SimTime, SimTime)> = alert_pubs
        .iter()
        .filter_map(|(frame_seq, pub_seq)| {
            Some((
                *frame_seq,
                *offending.get(frame_seq)?,
                *tap_delivery.get(pub_seq)?,
            ))
        })
        .collect();
    let attacks: Vec<(String, Vec<u64>)> = injections
        .iter()
        .map(|r| (r.label.clone(), r.publish_seqs.clone()))
        .collect();
    let detection = nids::summarize(&alerts, &attacks, &transfer);

    let timing = timing_section(&scenario, &log, &injections, &alerts);

    let breaker = log
        .iter()
        .filter_map(|e| match e.event {
            events::LogEvent::BreakerOperated {
                closed,
                trigger_publish_seq,
            } => Some(BreakerOperation {
                at_ns: e.at_ns,
                closed,
                device: e.device.clone(),
                trigger_publish_seq,
                feeder_rms_before_a: world.plant.feeder_rms_before(e.at_ns),
            }),
            _ => None,
        })
        .collect::<Vec<_>>();

    let pcap = capture::pcap_bytes(&capture, scenario.epoch_seconds);
    let kinds: Vec<FrameKind> = capture
        .iter()
        .map(|r| codec::classify_frame(&r.frame))
        .collect();
    let capture_summary = CaptureSummary {
        frames: capture.len(),
        sv_frames: kinds.iter().filter(|k| **k == FrameKind::Sv).count(),
        goose_frames: kinds.iter().filter(|k| **k == FrameKind::Goose).count(),
        pcap_sha256: hex::encode(Sha256::digest(&pcap)),
    };

    let mut report = RunReport {
        scenario,
        stats,
        timing,
        detection,
        breaker,
        injections,
        protection,
        capture: capture_summary,
        expectations: Vec::new(),
        passed: false,
    };
    report.expectations = evaluate(&report);
    report.passed = report.expectations.iter().all(|e| e.passed);
    Ok(RunOutcome {
        report,
        capture,
        log,
        alerts,
        pc_rms_trace,
        pcap,
    })
}

fn timing_section(
    scenario: &Scenario,
    log: &[LogEntry],
    injections: &[InjectionRecord],
    alerts: &[Alert],
) -> TimingSection {
    let chains = match timing::decompose_all(log) {
        Ok(c) => c,
        Err(e) => {
            return TimingSection {
                error: Some(e.to_string()),
                ..TimingSection::default()
            }
        }
    };
    let deploy = scenario.analysis.mitigation_deploy_time_ns;
    let mut windows: Vec<WindowAnalysis> = Vec::new();
    for inj in injections {
        let seqs: BTreeSet<u64> = inj.publish_seqs.iter().copied().collect();
        let chain = chains.iter().find(|c| match c.origin {
            timing::ChainOrigin::Attack { ref label, .. } if inj.kind == AttackKind::SvFdi => {
                *label == inj.label
            }
            _ => seqs.contains(&c.trigger_publish_seq),
        });
        let first_alert = alerts.iter().find(|a| seqs.contains(&a.frame_seq));
        let first_delivery = alerts
            .iter()
            .filter(|a| seqs.contains(&a.frame_seq))
            .map(|a| a.deliver_at_ns)
            .min();
        if let (Some(chain), Some(alert), Some(first_seen)) = (chain, first_alert, first_delivery) {
            // For a stream attack, latency runs from the first malicious
            // frame the NIDS flagged or saw, whichever came first.
            let start = inj
                .started_at
                .map(|s| s + scenario.network.fixed_latency_ns)
                .unwrap_or(first_seen)
                .min(first_seen);
            windows.push(timing::analyze_window(
                inj.kind,
                chain,
                alert.detect_at_ns - start,
                deploy,
            ));
        }
    }
    TimingSection {
        primary: chains.first().cloned(),
        chains,
        windows,
        error: None,
    }
}

fn evaluate(r: &RunReport) -> Vec<ExpectationResult> {
    let e = &r.scenario.expect;
    let mut out = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        out.push(ExpectationResult {
            name: name.into(),
            passed,
            detail,
        })
    };
    if let Some(ms) = e.trip_time_ms {
        match &r.timing.primary {
            Some(t) => {
                let got = t.t_p_ns as f64 / 1e6;
                check(
                    "tripTimeMs",
                    (got - ms).abs() <= e.trip_time_tolerance_ms,
                    format!(
                        "T_p {got:.3} ms, expected {ms} ± {} ms",
                        e.trip_time_tolerance_ms
                    ),
                );
            }
            None => check(
                "tripTimeMs",
                false,
                r.timing
                    .error
                    .clone()
                    .unwrap_or_else(|| "no trip chain".into()),
            ),
        }
    }
    let opens: Vec<&BreakerOperation> = r.breaker.iter().filter(|b| !b.closed).collect();
    if let Some(want) = e.breaker_opens {
        check(
            "breakerOpens",
            want == !opens.is_empty(),
            format!("{} opening(s)", opens.len()),
        );
    }
    if let Some(want) = e.opens_under_normal_load {
        let pickup = r.scenario.pc.pickup_rms_a;
        let normal = opens
            .iter()
            .filter(|b| b.feeder_rms_before_a <= pickup)
            .count();
        check(
            "opensUnderNormalLoad",
            want == (normal > 0),
            format!("{normal} opening(s) with feeder RMS at or below {pickup} A"),
        );
    }
    if let Some(n) = e.alert_count {
        check(
            "alertCount",
            r.detection.total_alerts == n,
            format!("{} alert(s), expected {n}", r.detection.total_alerts),
        );
    }
    if let Some(want) = &e.rules_fired {
        let fired: BTreeSet<RuleId> = r
            .detection
            .per_rule
            .iter()
            .filter(|(_, c)| **c > 0)
            .map(|(r, _)| *r)
            .collect();
        check(
            "rulesFired",
            &fired == want,
            format!("fired {fired:?}, expected {want:?}"),
        );
    }
    if let Some(max) = e.max_detection_with_transfer_ns {
        let got = r.detection.max_latency_with_transfer_ns;
        check(
            "maxDetectionWithTransferNs",
            got.is_some_and(|g| g < max),
            format!("{got:?} ns, bound {max} ns"),
        );
    }
    if let Some(want) = &e.missed_attacks {
        check(
            "missedAttacks",
            &r.detection.missed_attacks == want,
            format!("missed {:?}, expected {want:?}", r.detection.missed_attacks),
        );
    }
    out
}

/// Writes events.jsonl, plus report.json and capture.pcap when asked.
pub fn write_artifacts(
    outcome: &RunOutcome,
    dir: &Path,
    options: OutputOptions,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let events_path = dir.join("events.jsonl");
    let mut w = BufWriter::new(fs::File::create(&events_path)?);
    events::write_jsonl(&outcome.log, &mut w)?;
    w.flush()?;
    written.push(events_path);
    if options.report {
        let p = dir.join("report.json");
        let mut w = BufWriter::new(fs::File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, &outcome.report)?;
        w.write_all(b"\n")?;
        w.flush()?;
        written.push(p);
    }
    if options.pcap {
        let p = dir.join("capture.pcap");
        fs::write(&p, &outcome.pcap)?;
        written.push(p);
    }
    Ok(written)
}
