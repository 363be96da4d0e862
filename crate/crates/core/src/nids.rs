//! Rule-based intrusion detection over SV and GOOSE traffic.
//!
//! Rules:
//! - R1: unknown stream id, or a frame that does not decode.
//! - R2: GOOSE sequence violation.
//! - R3: GOOSE timestamp violation.
//! - R4: SV counter duplicate with a different payload, or a counter gap.
//! - R5: SV arrival rate outside tolerance over a 10-frame window.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bus::{Ctx, Delivery, Device, DeviceFault, SimTime};
use crate::codec::{self, Frame, FrameKind, GooseFrame, MacAddress, SvFrame, UtcTimestamp};
use crate::devices::{
    default_retransmission_ms, on_retransmit, publish_state, tag_kind, tag_payload, timer_tag,
    GoosePublisher, GooseStreamConfig, World, TAG_RETRANSMIT,
};
use crate::events::LogEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl RuleId {
    pub const ALL: [RuleId; 5] = [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4, RuleId::R5];
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Stream identities the NIDS accepts. An empty `gocb_refs` set disables the
/// gocbRef check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Whitelist {
    pub sv_ids: BTreeSet<String>,
    pub go_ids: BTreeSet<String>,
    pub gocb_refs: BTreeSet<String>,
}

impl Whitelist {
    pub fn is_empty(&self) -> bool {
        self.sv_ids.is_empty() && self.go_ids.is_empty() && self.gocb_refs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct NidsConfig {
    pub enabled: bool,
    pub rules: BTreeSet<RuleId>,
    /// Left empty, it is filled from the configured devices.
    pub whitelist: Whitelist,
    pub processing_delay_ns: u64,
    pub timestamp_skew_tolerance_ns: u64,
    pub sv_nominal_interval_ns: u64,
    pub sv_rate_tolerance: f64,
    pub rate_window: usize,
    /// How many recent (smpCnt, digest) pairs R4 remembers per stream.
    pub duplicate_window: usize,
    pub alert_stream: GooseStreamConfig,
}

impl Default for NidsConfig {
    fn default() -> Self {
        NidsConfig {
            enabled: true,
            rules: [RuleId::R1, RuleId::R2, RuleId::R3, RuleId::R4]
                .into_iter()
                .collect(),
            whitelist: Whitelist::default(),
            processing_delay_ns: 300_000,
            timestamp_skew_tolerance_ns: 2_000_000_000,
            sv_nominal_interval_ns: 208_333,
            sv_rate_tolerance: 0.2,
            rate_window: 10,
            duplicate_window: 160,
            alert_stream: GooseStreamConfig {
                go_id: "NIDS_Alert".into(),
                gocb_ref: "NIDS1CTRL/LLN0$GO$gcbAlert".into(),
                dat_set: "NIDS1CTRL/LLN0$dsAlert".into(),
                dst: MacAddress([0x01, 0x0C, 0xCD, 0x01, 0x00, 0x0F]),
                src: MacAddress([0x00, 0x1A, 0x4C, 0x00, 0x00, 0x31]),
                app_id: 0x000F,
                conf_rev: 1,
                time_allowed_to_live_ms: 2000,
                retransmission_ms: default_retransmission_ms(),
            },
        }
    }
}

impl NidsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sv_rate_tolerance > 0.0 && self.sv_rate_tolerance < 1.0) {
            return Err("nids.svRateTolerance: must be in (0, 1)".into());
        }
        if self.rate_window < 2 {
            return Err("nids.rateWindow: must be at least 2".into());
        }
        if self.duplicate_window == 0 {
            return Err("nids.duplicateWindow: must be positive".into());
        }
        if self.sv_nominal_interval_ns == 0 {
            return Err("nids.svNominalIntervalNs: must be positive".into());
        }
        self.alert_stream.validate("nids.alertStream")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Alert {
    pub rule_id: RuleId,
    pub stream_id: String,
    pub deliver_at_ns: SimTime,
    pub detect_at_ns: SimTime,
    /// Publication sequence of the offending frame.
    pub frame_seq: u64,
    pub detail: String,
}

impl Alert {
    pub fn latency_ns(&self) -> u64 {
        self.detect_at_ns - self.deliver_at_ns
    }
}

#[derive(Debug, Clone, Default)]
struct SvState {
    expected: Option<u16>,
    last_arrival: Option<SimTime>,
    recent: VecDeque<(u16, u64)>,
    intervals: VecDeque<u64>,
}

#[derive(Debug, Clone)]
struct GooseState {
    st_num: u32,
    sq_num: u32,
    t: UtcTimestamp,
    last_arrival: SimTime,
}

/// Stream key used to partition NIDS state: `sv:<svId>` / `goose:<goId>`,
/// or `undecodable` for frames that do not parse.
pub fn stream_key(bytes: &[u8]) -> String {
    match codec::decode_any(bytes) {
        Ok(Some(Frame::Sv(f))) => format!("sv:{}", f.sv_id),
        Ok(Some(Frame::Goose(f))) => format!("goose:{}", f.go_id),
        Ok(None) => "other".into(),
        Err(_) => "undecodable".into(),
    }
}

/// Detection engine. Per-stream state is independent, so feeding each
/// stream to its own instance gives the same alerts as one shared instance.
#[derive(Debug, Clone)]
pub struct Nids {
    config: NidsConfig,
    sv: BTreeMap<String, SvState>,
    goose: BTreeMap<String, GooseState>,
    frames_seen: u64,
}

impl Nids {
    pub fn new(config: NidsConfig) -> Self {
        Nids {
            config,
            sv: BTreeMap::new(),
            goose: BTreeMap::new(),
            frames_seen: 0,
        }
    }

    pub fn config(&self) -> &NidsConfig {
        &self.config
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    fn enabled(&self, rule: RuleId) -> bool {
        self.config.rules.contains(&rule)
    }

    /// Evaluates all rules on one delivered frame, then updates state.
    pub fn on_frame(&mut self, bytes: &[u8], deliver_at: SimTime, frame_seq: u64) -> Vec<Alert> {
        self.frames_seen += 1;
        let mut found: Vec<(RuleId, String, String)> = Vec::new();
        match codec::decode_any(bytes) {
            Ok(Some(Frame::Sv(f))) => self.check_sv(&f, deliver_at, &mut found),
            Ok(Some(Frame::Goose(f))) => self.check_goose(&f, deliver_at, &mut found),
            Ok(None) => {}
            Err(e) => {
                let kind = match codec::classify_frame(bytes) {
                    FrameKind::Sv => "sv",
                    FrameKind::Goose => "goose",
                    FrameKind::Other => "other",
                };
                found.push((
                    RuleId::R1,
                    "undecodable".into(),
                    format!("{kind} frame: {e}"),
                ));
            }
        }
        let detect_at = deliver_at + self.config.processing_delay_ns;
        found
            .into_iter()
            .filter(|(r, _, _)| self.enabled(*r))
            .map(|(rule_id, stream_id, detail)| Alert {
                rule_id,
                stream_id,
                deliver_at_ns: deliver_at,
                detect_at_ns: detect_at,
                frame_seq,
                detail,
            })
            .collect()
    }

    fn check_sv(&mut self, f: &SvFrame, at: SimTime, out: &mut Vec<(RuleId, String, String)>) {
        let id = format!("sv:{}", f.sv_id);
        if !self.config.whitelist.sv_ids.contains(&f.sv_id) {
            out.push((
                RuleId::R1,
                id,
                format!("svId {:?} not whitelisted", f.sv_id),
            ));
            return;
        }
        let digest = f.samples_digest();
        let cfg = &self.config;
        let st = self.sv.entry(f.sv_id.clone()).or_default();

        let conflict = st
            .recent
            .iter()
            .any(|&(c, d)| c == f.smp_cnt && d != digest);
        if conflict {
            out.push((
                RuleId::R4,
                id.clone(),
                format!("smpCnt {} repeated with different samples", f.smp_cnt),
            ));
        } else if let Some(exp) = st.expected {
            if f.smp_cnt != exp {
                out.push((
                    RuleId::R4,
                    id.clone(),
                    format!("smpCnt {} where {} was expected", f.smp_cnt, exp),
                ));
            }
        }

        if let Some(prev) = st.last_arrival {
            st.intervals.push_back(at - prev);
            while st.intervals.len() > cfg.rate_window {
                st.intervals.pop_front();
            }
            if st.intervals.len() == cfg.rate_window {
                let mean = st.intervals.iter().sum::<u64>() as f64 / cfg.rate_window as f64;
                let nominal = cfg.sv_nominal_interval_ns as f64;
                if (mean - nominal).abs() > cfg.sv_rate_tolerance * nominal {
                    out.push((
                        RuleId::R5,
                        id,
                        format!("mean inter-arrival {mean:.0} ns vs nominal {nominal:.0} ns"),
                    ));
                }
            }
        }

        st.expected = Some((f.smp_cnt + 1) % codec::SMP_CNT_MODULUS);
        st.last_arrival = Some(at);
        st.recent.push_back((f.smp_cnt, digest));
        while st.recent.len() > cfg.duplicate_window {
            st.recent.pop_front();
        }
    }

    fn check_goose(
        &mut self,
        f: &GooseFrame,
        at: SimTime,
        out: &mut Vec<(RuleId, String, String)>,
    ) {
        if f.go_id == self.config.alert_stream.go_id {
            return;
        }
        let id = format!("goose:{}", f.go_id);
        let wl = &self.config.whitelist;
        if !wl.go_ids.contains(&f.go_id)
            || (!wl.gocb_refs.is_empty() && !wl.gocb_refs.contains(&f.gocb_ref))
        {
            out.push((
                RuleId::R1,
                id,
                format!(
                    "goId {:?} / gocbRef {:?} not whitelisted",
                    f.go_id, f.gocb_ref
                ),
            ));
            return;
        }
        let skew = self.config.timestamp_skew_tolerance_ns;
        let Some(st) = self.goose.get_mut(&f.go_id) else {
            self.goose.insert(
                f.go_id.clone(),
                GooseState {
                    st_num: f.st_num,
                    sq_num: f.sq_num,
                    t: f.t,
                    last_arrival: at,
                },
            );
            return;
        };

        let seq_detail = if f.st_num < st.st_num {
            Some(format!("stNum {} after {}", f.st_num, st.st_num))
        } else if f.st_num == st.st_num && f.sq_num <= st.sq_num {
            Some(format!(
                "sqNum {} after {} within stNum {}",
                f.sq_num, st.sq_num, f.st_num
            ))
        } else if f.st_num > st.st_num && f.sq_num != 0 {
            Some(format!("stNum {} opened with sqNum {}", f.st_num, f.sq_num))
        } else {
            None
        };
        if let Some(d) = seq_detail {
            out.push((RuleId::R2, id.clone(), d));
        }

        let t_new = f.t.as_nanos();
        let t_old = st.t.as_nanos();
        let t_detail = if f.st_num == st.st_num && f.t != st.t {
            Some(format!("t changed within stNum {}", f.st_num))
        } else if f.st_num != st.st_num && f.t == st.t {
            Some(format!(
                "t unchanged across stNum {} -> {}",
                st.st_num, f.st_num
            ))
        } else if t_new + skew < t_old {
            Some(format!("t {} ns older than last seen {} ns", t_new, t_old))
        } else {
            None
        };
        if let Some(d) = t_detail {
            out.push((RuleId::R3, id, d));
        }

        // Only forward progress moves the reference point, so a stale frame
        // cannot make the genuine stream look out of order afterwards.
        if (f.st_num, f.sq_num) > (st.st_num, st.sq_num) {
            st.st_num = f.st_num;
            st.sq_num = f.sq_num;
            st.t = f.t;
        }
        st.last_arrival = at;
    }
}

const TAG_ALERT: u8 = 1;

/// NIDS attached to the bus. Alerts are logged at detection time; every
/// alerting frame produces one alert-GOOSE state change (`allData = [true]`).
pub struct NidsDevice {
    name: String,
    engine: Nids,
    publisher: GoosePublisher,
    pending: BTreeMap<u64, Vec<Alert>>,
    next_id: u64,
    pub alerts: Vec<Alert>,
    /// (offending frame seq, alert GOOSE publish seq)
    pub published: Vec<(u64, u64)>,
}

impl NidsDevice {
    pub fn new(name: impl Into<String>, config: NidsConfig) -> Self {
        let publisher = GoosePublisher::new(config.alert_stream.clone());
        NidsDevice {
            name: name.into(),
            engine: Nids::new(config),
            publisher,
            pending: BTreeMap::new(),
            next_id: 0,
            alerts: Vec::new(),
            published: Vec::new(),
        }
    }

    pub fn engine(&self) -> &Nids {
        &self.engine
    }
}

impl Device<World> for NidsDevice {
    fn name(&self) -> &str {
        &self.name
    }

    fn start(&mut self, ctx: &mut Ctx<'_, World>) -> Result<(), DeviceFault> {
        let epoch = ctx.world.epoch_seconds;
        publish_state(ctx, &mut self.publisher, vec![false], epoch)?;
        Ok(())
    }

    fn on_frame(&mut self, ctx: &mut Ctx<'_, World>, d: &Delivery) -> Result<(), DeviceFault> {
        let alerts = self.engine.on_frame(&d.bytes, d.deliver_at, d.publish_seq);
        if alerts.is_empty() {
            return Ok(());
        }
        let id = self.next_id;
        self.next_id += 1;
        let at = alerts[0].detect_at_ns;
        self.pending.insert(id, alerts);
        ctx.set_timer(at, timer_tag(TAG_ALERT, id))?;
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_, World>, tag: u64) -> Result<(), DeviceFault> {
        match tag_kind(tag) {
            TAG_ALERT => {
                let Some(alerts) = self.pending.remove(&tag_payload(tag)) else {
                    return Ok(());
                };
                for a in &alerts {
                    ctx.log(LogEvent::Alert {
                        rule_id: a.rule_id.to_string(),
                        stream_id: a.stream_id.clone(),
                        detect_at_ns: a.detect_at_ns,
                        latency_ns: a.latency_ns(),
                        frame_seq: a.frame_seq,
                        detail: a.detail.clone(),
                    });
                }
                let epoch = ctx.world.epoch_seconds;
                let seq = publish_state(ctx, &mut self.publisher, vec![true], epoch)?;
                ctx.log(LogEvent::AlertPublished {
                    st_num: self.publisher.st_num,
                    publish_seq: seq,
                });
                self.published.push((alerts[0].frame_seq, seq));
                self.alerts.extend(alerts);
                Ok(())
            }
            TAG_RETRANSMIT => on_retransmit(ctx, &mut self.publisher, tag),
            _ => Ok(()),
        }
    }
}

/// Per-run detection outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionSummary {
    pub total_alerts: usize,
    pub per_rule: BTreeMap<RuleId, usize>,
    pub alerts: Vec<AlertRecord>,
    pub max_latency_ns: Option<u64>,
    /// Offending frame delivery to alert GOOSE delivery, worst case.
    pub max_latency_with_transfer_ns: Option<u64>,
    pub detected_attacks: Vec<String>,
    pub missed_attacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlertRecord {
    pub rule_id: RuleId,
    pub stream_id: String,
    pub detect_at_ns: SimTime,
    pub latency_ns: u64,
    pub frame_seq: u64,
    pub detail: String,
}

/// Builds the summary. `attacks` maps each attack label to the publication
/// sequences it injected; `alert_transfer` pairs each offending frame seq with
/// the delivery time of the resulting alert GOOSE.
pub fn summarize(
    alerts: &[Alert],
    attacks: &[(String, Vec<u64>)],
    alert_transfer: &[(u64, SimTime, SimTime)],
) -> DetectionSummary {
    let mut per_rule = BTreeMap::new();
    for r in RuleId::ALL {
        per_rule.insert(r, 0);
    }
    for a in alerts {
        *per_rule.entry(a.rule_id).or_insert(0) += 1;
    }
    let flagged: BTreeSet<u64> = alerts.iter().map(|a| a.frame_seq).collect();
    let mut detected = Vec::new();
    let mut missed = Vec::new();
    for (label, seqs) in attacks {
        if seqs.iter().any(|s| flagged.contains(s)) {
            detected.push(label.clone());
        } else {
            missed.push(label.clone());
        }
    }
    DetectionSummary {
        total_alerts: alerts.len(),
        per_rule,
        alerts: alerts
            .iter()
            .map(|a| AlertRecord {
                rule_id: a.rule_id,
                stream_id: a.stream_id.clone(),
                detect_at_ns: a.detect_at_ns,
                latency_ns: a.latency_ns(),
                frame_seq: a.frame_seq,
                detail: a.detail.clone(),
            })
            .collect(),
        max_latency_ns: alerts.iter().map(Alert::latency_ns).max(),
        max_latency_with_transfer_ns: alert_transfer
            .iter()
            .map(|&(_, offending, alert_delivered)| alert_delivered - offending)
            .max(),
        detected_attacks: detected,
        missed_attacks: missed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_goose, encode_sv, SvSample};

    fn config() -> NidsConfig {
        let mut c = NidsConfig::default();
        c.whitelist.sv_ids.insert("MU01".into());
        c.whitelist.go_ids.insert("PC1_Trip".into());
        c
    }

    fn goose(st: u32, sq: u32, t_ns: u64) -> Vec<u8> {
        encode_goose(&GooseFrame {
            dst: MacAddress::GOOSE_DEFAULT,
            src: MacAddress([0, 1, 2, 3, 4, 5]),
            vlan: None,
            app_id: 1,
            gocb_ref: "PC1CTRL/LLN0$GO$gcbTrip".into(),
            time_allowed_to_live: 2000,
            dat_set: "PC1CTRL/LLN0$dsTrip".into(),
            go_id: "PC1_Trip".into(),
            t: UtcTimestamp::from_nanos(1_700_000_000, t_ns),
            st_num: st,
            sq_num: sq,
            simulation: false,
            conf_rev: 1,
            nds_com: false,
            all_data: vec![true],
        })
        .unwrap()
    }

    fn sv(id: &str, cnt: u16, value: i32) -> Vec<u8> {
        let mut samples = [SvSample::default(); 8];
        samples[0].value = value;
        encode_sv(&SvFrame {
            dst: MacAddress::SV_DEFAULT,
            src: MacAddress([0, 1, 2, 3, 4, 6]),
            vlan: None,
            app_id: 0x4000,
            sv_id: id.into(),
            smp_cnt: cnt,
            conf_rev: 1,
            smp_synch: 2,
            samples,
        })
        .unwrap()
    }

    fn rules(alerts: &[Alert]) -> Vec<RuleId> {
        alerts.iter().map(|a| a.rule_id).collect()
    }

    #[test]
    fn stale_replay_is_r2() {
        let mut n = Nids::new(config());
        let t0 = SimTime::ZERO;
        assert!(n.on_frame(&goose(4, 0, 1000), t0, 1).is_empty());
        assert!(n.on_frame(&goose(4, 1, 1000), t0 + 1, 2).is_empty());
        let a = n.on_frame(&goose(2, 5, 500), t0 + 2, 3);
        assert_eq!(rules(&a), vec![RuleId::R2]);
        // The genuine stream continues without further alerts.
        assert!(n.on_frame(&goose(4, 2, 1000), t0 + 3, 4).is_empty());
    }

    #[test]
    fn conformant_next_state_is_silent() {
        let mut n = Nids::new(config());
        n.on_frame(&goose(3, 7, 1000), SimTime::ZERO, 1);
        assert!(n.on_frame(&goose(4, 0, 2000), SimTime(10), 2).is_empty());
    }

    #[test]
    fn sequence_rule_variants() {
        let mut n = Nids::new(config());
        n.on_frame(&goose(3, 2, 1000), SimTime::ZERO, 1);
        assert_eq!(
            rules(&n.on_frame(&goose(3, 2, 1000), SimTime(1), 2)),
            vec![RuleId::R2]
        );
        assert_eq!(
            rules(&n.on_frame(&goose(4, 3, 2000), SimTime(2), 3)),
            vec![RuleId::R2]
        );
    }

    #[test]
    fn timestamp_rule_variants() {
        let mut n = Nids::new(config());
        n.on_frame(&goose(3, 0, 1000), SimTime::ZERO, 1);
        assert_eq!(
            rules(&n.on_frame(&goose(3, 1, 9999), SimTime(1), 2)),
            vec![RuleId::R3]
        );

        let mut n = Nids::new(config());
        n.on_frame(&goose(3, 0, 1000), SimTime::ZERO, 1);
        assert_eq!(
            rules(&n.on_frame(&goose(4, 0, 1000), SimTime(2), 2)),
            vec![RuleId::R3]
        );

        let mut n = Nids::new(config());
        n.on_frame(&goose(3, 0, 5_000_000_000), SimTime::ZERO, 1);
        let a = n.on_frame(&goose(4, 0, 1_000_000_000), SimTime(1), 2);
        assert_eq!(rules(&a), vec![RuleId::R3]);
    }

    #[test]
    fn unknown_and_undecodable_are_r1() {
        let mut n = Nids::new(config());
        let a = n.on_frame(&sv("MU99", 0, 1), SimTime::ZERO, 1);
        assert_eq!(rules(&a), vec![RuleId::R1]);
        let mut bad = goose(1, 0, 0);
        bad.pop();
        let a = n.on_frame(&bad, SimTime::ZERO, 2);
        assert_eq!(rules(&a), vec![RuleId::R1]);
        assert_eq!(a[0].stream_id, "undecodable");
    }

    #[test]
    fn sv_duplicate_and_gap_are_r4() {
        let mut n = Nids::new(config());
        for c in 0..5 {
            assert!(n
                .on_frame(&sv("MU01", c, 100), SimTime(c as u64 * 208_333), c as u64)
                .is_empty());
        }
        let a = n.on_frame(&sv("MU01", 3, 999), SimTime(1_000_000), 10);
        assert_eq!(rules(&a), vec![RuleId::R4]);
        assert!(a[0].detail.contains("different samples"));
        let mut n = Nids::new(config());
        n.on_frame(&sv("MU01", 10, 1), SimTime::ZERO, 1);
        assert_eq!(
            rules(&n.on_frame(&sv("MU01", 12, 1), SimTime(1), 2)),
            vec![RuleId::R4]
        );
    }

    #[test]
    fn smp_cnt_wrap_is_continuous() {
        let mut n = Nids::new(config());
        n.on_frame(&sv("MU01", 4799, 1), SimTime::ZERO, 1);
        assert!(n
            .on_frame(&sv("MU01", 0, 1), SimTime(208_333), 2)
            .is_empty());
    }

    #[test]
    fn rate_rule_needs_full_window_and_is_opt_in() {
        let mut cfg = config();
        let mut n = Nids::new(cfg.clone());
        for c in 0..20u16 {
            assert!(n
                .on_frame(&sv("MU01", c, 1), SimTime(c as u64 * 100_000), c as u64)
                .is_empty());
        }
        cfg.rules.insert(RuleId::R5);
        let mut n = Nids::new(cfg);
        let mut fired_at = None;
        for c in 0..20u16 {
            let a = n.on_frame(&sv("MU01", c, 1), SimTime(c as u64 * 100_000), c as u64);
            if fired_at.is_none() && a.iter().any(|a| a.rule_id == RuleId::R5) {
                fired_at = Some(c);
            }
        }
        assert_eq!(fired_at, Some(10));
    }

    #[test]
    fn default_latency_is_processing_delay() {
        let mut n = Nids::new(config());
        let a = n.on_frame(&sv("X", 0, 0), SimTime(5_000), 1);
        assert_eq!(a[0].latency_ns(), 300_000);
        assert_eq!(a[0].detect_at_ns, SimTime(305_000));
    }

    #[test]
    fn own_alert_stream_is_exempt() {
        let cfg = config();
        let mut p = GoosePublisher::new(cfg.alert_stream.clone());
        let f = p.change_state(vec![true], SimTime::ZERO, 0);
        let mut n = Nids::new(cfg);
        assert!(n
            .on_frame(&encode_goose(&f).unwrap(), SimTime::ZERO, 1)
            .is_empty());
    }

    #[test]
    fn summary_attributes_attacks_by_frame() {
        let alert = Alert {
            rule_id: RuleId::R2,
            stream_id: "goose:PC1_Trip".into(),
            deliver_at_ns: SimTime(100),
            detect_at_ns: SimTime(400),
            frame_seq: 7,
            detail: String::new(),
        };
        let s = summarize(
            &[alert],
            &[("replay".into(), vec![7]), ("spoof".into(), vec![9])],
            &[(7, SimTime(100), SimTime(500))],
        );
        assert_eq!(s.detected_attacks, vec!["replay".to_string()]);
        assert_eq!(s.missed_attacks, vec!["spoof".to_string()]);
        assert_eq!(s.per_rule[&RuleId::R2], 1);
        assert_eq!(s.max_latency_with_transfer_ns, Some(400));
    }
}
