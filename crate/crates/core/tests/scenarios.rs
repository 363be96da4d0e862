mod common;

use substation_testbed::attacker::{AttackSpec, ReplaySource};
use substation_testbed::bus::SimTime;
use substation_testbed::codec;
use substation_testbed::events::{AttackKind, LogEvent};
use substation_testbed::nids::RuleId;
use substation_testbed::scenario::{self, Scenario, ScenarioError};
use substation_testbed::timing;

fn builtin(name: &str) -> Scenario {
    scenario::builtin(name).unwrap()
}

fn openings(o: &scenario::RunOutcome) -> usize {
    o.log
        .iter()
        .filter(|e| matches!(e.event, LogEvent::BreakerOperated { closed: false, .. }))
        .count()
}

#[test]
fn every_builtin_meets_its_expectations() {
    for s in scenario::builtins() {
        let o = scenario::run(&s).unwrap();
        assert!(o.report.passed, "{}: {:?}", s.name, o.report.expectations);
        assert_eq!(o.report.exit_code(), 0);
    }
}

#[test]
fn one_second_of_sampled_values() {
    let s = Scenario {
        duration_ns: 1_000_000_000,
        ..Scenario::default()
    };
    let o = scenario::run(&s).unwrap();
    let sv: Vec<_> = o
        .capture
        .iter()
        .filter(|r| r.publisher == "MU1" && r.publish_at.0 < 1_000_000_000)
        .map(|r| codec::decode_sv(&r.frame).unwrap())
        .collect();
    assert_eq!(sv.len(), 4800);
    for (i, f) in sv.iter().enumerate() {
        assert_eq!(f.smp_cnt as usize, i);
    }
    assert_eq!(o.report.detection.total_alerts, 0);
    assert!(o.report.breaker.is_empty());
}

#[test]
fn mu_opens_six_ms_after_trip_receipt() {
    let o = scenario::run(&builtin("s1_fault_trip")).unwrap();
    let c = timing::decompose(&o.log).unwrap();
    assert_eq!(c.trip_device, "MU1");
    assert_eq!(c.t_c_ns, 6_000_000);
}

#[test]
fn spoof_surfaces_when_genuine_heartbeat_returns() {
    // The genuine publisher's next retransmission (1022 ms) carries the old
    // stNum, which now looks like a regression.
    let mut s = builtin("s6_goose_spoof");
    s.duration_ns = 1_100_000_000;
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    let r2: Vec<_> = o
        .alerts
        .iter()
        .filter(|a| a.rule_id == RuleId::R2)
        .collect();
    assert!(!r2.is_empty());
    assert!(r2.iter().all(|a| a.stream_id.contains("PC1_Trip")));
    assert!(r2[0].detect_at_ns.0 > 1_000_000_000);
    // Detection comes far too late: the breaker opened 400 ms earlier.
    let open = o.report.breaker.iter().find(|b| !b.closed).unwrap();
    assert!(open.at_ns.0 < 700_000_000);
}

#[test]
fn fdi_at_normal_peak_is_harmless() {
    let mut s = builtin("s4_sv_fdi");
    if let AttackSpec::SvFdi {
        injected_peak_a, ..
    } = &mut s.attacks[0]
    {
        *injected_peak_a = 315.37;
    }
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    let start = o.report.injections[0].started_at.unwrap();
    let worst = o
        .pc_rms_trace
        .iter()
        .filter(|(t, _)| *t >= start)
        .map(|(_, r)| r[0])
        .fold(0.0f64, f64::max);
    assert!((worst - 223.0).abs() / 223.0 < 0.01, "rms {worst}");
    assert!(o.report.breaker.is_empty());
}

#[test]
fn stale_spoof_is_detected() {
    let mut s = builtin("s6_goose_spoof");
    if let AttackSpec::GooseSpoof { conformant, .. } = &mut s.attacks[0] {
        *conformant = false;
    }
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    assert!(o.report.detection.total_alerts > 0);
    assert_eq!(
        o.report.detection.detected_attacks,
        vec!["gooseSpoof#1".to_string()]
    );
    assert!(o.report.detection.missed_attacks.is_empty());
}

#[test]
fn replaying_a_non_trip_frame_does_nothing() {
    let mut s = builtin("s5_goose_replay");
    s.attacks = vec![AttackSpec::GooseReplay {
        source: ReplaySource::FirstObserved {
            go_id: "PC1_Trip".into(),
            trip: false,
        },
        inject_at_ns: SimTime::from_millis(500),
    }];
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    // Only the genuine fault opening.
    assert_eq!(openings(&o), 1);
    assert!(o.report.injections[0].started_at.is_some());
}

#[test]
fn breaker_ignores_trip_while_open() {
    let mut s = builtin("s5_goose_replay");
    s.operator.clear();
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    assert_eq!(openings(&o), 1);
}

#[test]
fn replay_chain_starts_at_attack() {
    let o = scenario::run(&builtin("s5_goose_replay")).unwrap();
    let chains = timing::decompose_all(&o.log).unwrap();
    assert_eq!(chains.len(), 2);
    let c = &chains[1];
    assert!(matches!(
        &c.origin,
        timing::ChainOrigin::Attack {
            attack: AttackKind::GooseReplay,
            ..
        }
    ));
    assert_eq!(c.t_a_ns, 0);
    assert_eq!(c.t_p_ns, 6_100_000);
}

#[test]
fn sv_fdi_trips_within_a_cycle_and_a_half() {
    let o = scenario::run(&builtin("s4_sv_fdi")).unwrap();
    let start = o.report.injections[0].started_at.unwrap();
    let open = o.report.breaker.iter().find(|b| !b.closed).unwrap();
    assert!(open.feeder_rms_before_a < 250.0);
    assert!(open.at_ns.0 - start.0 < 25_000_000);
    // Every malicious frame is flagged.
    assert_eq!(
        o.report.detection.per_rule[&RuleId::R4],
        o.report.injections[0].publish_seqs.len()
    );
}

#[test]
fn nids_disabled_reports_nothing() {
    let mut s = builtin("s4_sv_fdi");
    s.nids.enabled = false;
    s.expect = Default::default();
    let o = scenario::run(&s).unwrap();
    assert_eq!(o.report.detection.total_alerts, 0);
    assert_eq!(
        o.report.detection.missed_attacks,
        vec!["svFdi#1".to_string()]
    );
}

#[test]
fn patch_over_builtin() {
    let s = scenario::load_str(r#"{"name": "s2_simulated_ied", "durationNs": 50000000}"#).unwrap();
    assert_eq!(s.duration_ns, 50_000_000);
    assert_eq!(s.pc.processing_delay_ns(), 17_800_000);
}

#[test]
fn errors_name_the_offending_key() {
    let cases = [
        (r#"{"pc": {"pickupRmsA": -3}}"#, "pc.pickupRmsA"),
        (r#"{"network": {"jitterNs": "lots"}}"#, "network.jitterNs"),
        (
            r#"{"faults": [{"phase": "A", "inceptionNs": 5, "faultCurrentPeakA": 1, "clearNs": 2}]}"#,
            "faults[0].clearNs",
        ),
        (
            r#"{"attacks": [{"type": "gooseSpoof", "targetGoId": "nope", "allData": [true], "injectAtNs": 1}]}"#,
            "attacks[0].targetGoId",
        ),
        (r#"{"pc": {"pickupRmsA": 1000, "bogus": 1}}"#, "pc"),
    ];
    for (text, key) in cases {
        let e = scenario::load_str(text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains(key), "{text}: {msg}");
        assert!(matches!(
            e,
            ScenarioError::Parse { .. } | ScenarioError::Invalid { .. }
        ));
    }
    assert!(scenario::load_str("[1]").is_err());
    assert!(scenario::resolve("no_such_scenario").is_err());
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = scenario::run(&builtin("s1_fault_trip")).unwrap();
    scenario::write_artifacts(
        &o,
        dir.path(),
        scenario::OutputOptions {
            pcap: true,
            report: true,
        },
    )
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["timing"]["T_p_ns"], 19_000_000);
    let pcap = std::fs::read(dir.path().join("capture.pcap")).unwrap();
    let packets = substation_testbed::capture::read_pcap(&pcap).unwrap();
    assert_eq!(packets.len(), o.capture.len());
    let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), o.log.len());
}

#[test]
fn attack_frames_break_stream_invariants_by_design() {
    for name in ["s4_sv_fdi", "s5_goose_replay"] {
        let o = scenario::run(&builtin(name)).unwrap();
        assert!(
            common::protocol_violations(&o.capture, true).is_empty(),
            "{name}"
        );
        assert!(
            !common::protocol_violations(&o.capture, false).is_empty(),
            "{name}"
        );
    }
}
