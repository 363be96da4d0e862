//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always show up in `cargo test` output.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use substation_testbed::codec;
use substation_testbed::events::{AttackKind, LogEvent};
use substation_testbed::nids::RuleId;
use substation_testbed::power::{self, FeederConfig, Plant};
use substation_testbed::scenario::{self, RunOutcome};
use substation_testbed::timing::{self, ChainOrigin};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_builtin(name: &str) -> Result<(RunOutcome, Duration), String> {
    let s = scenario::builtin(name).ok_or_else(|| format!("no builtin {name}"))?;
    let t = Instant::now();
    let o = scenario::run(&s).map_err(|e| format!("{name}: {e}"))?;
    Ok((o, t.elapsed()))
}

fn c1_codec_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    let t = Instant::now();
    for i in 0..10_000 {
        let f = common::random_sv(&mut rng);
        let b = codec::encode_sv(&f).map_err(|e| format!("sv #{i}: encode {e}"))?;
        let d = codec::decode_sv(&b).map_err(|e| format!("sv #{i}: decode {e}"))?;
        ensure(d == f, || format!("sv #{i}: fields differ"))?;
        let b2 = codec::encode_sv(&d).map_err(|e| e.to_string())?;
        ensure(b2 == b, || format!("sv #{i}: re-encode differs"))?;

        let g = common::random_goose(&mut rng);
        let b = codec::encode_goose(&g).map_err(|e| format!("goose #{i}: encode {e}"))?;
        let d = codec::decode_goose(&b).map_err(|e| format!("goose #{i}: decode {e}"))?;
        ensure(d == g, || format!("goose #{i}: fields differ"))?;
        let b2 = codec::encode_goose(&d).map_err(|e| e.to_string())?;
        ensure(b2 == b, || format!("goose #{i}: re-encode differs"))?;
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(5), || format!("took {el:?}"))?;
    Ok(format!("10000 SV + 10000 GOOSE frames in {el:.2?}"))
}

fn c2_waveform_rms() -> Outcome {
    let cfg = FeederConfig::default();
    let (f, fs) = (cfg.frequency_hz as f64, cfg.sampling_rate as f64);
    let mut worst = 0.0f64;
    for &peak in &[1.0, 315.37, 20_000.0] {
        for &phi in &[0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0, 0.3] {
            for n in (0..200_000u64).step_by(7) {
                let direct = peak * (2.0 * PI * f * n as f64 / fs + phi).sin();
                let got = cfg.waveform(peak, n, phi);
                worst = worst.max((got - direct).abs() / peak);
            }
        }
    }
    ensure(worst <= 1e-9, || {
        format!("waveform relative error {worst:e}")
    })?;

    // Through the plant as the merging unit samples it.
    let plant = Plant::new(cfg.clone(), vec![]);
    for n in 0..4800u64 {
        let (i, _) = plant.channels(n);
        let direct = cfg.normal_current_peak_a * (2.0 * PI * f * n as f64 / fs).sin();
        ensure(
            (i[0] - direct).abs() <= 1e-9 * cfg.normal_current_peak_a,
            || format!("plant sample {n}: {} vs {direct}", i[0]),
        )?;
    }

    let spc = cfg.samples_per_cycle();
    let mut worst_rms = 0.0f64;
    for &peak in &[1.0, 315.37, 1234.5, 20_000.0] {
        for start in [0u64, 13, 4799] {
            for &phi in &[0.0, 1.0, -2.0 * PI / 3.0] {
                let w: Vec<f64> = (start..start + spc as u64)
                    .map(|n| cfg.waveform(peak, n, phi))
                    .collect();
                let r = power::rms(&w, spc).map_err(|e| e.to_string())?;
                worst_rms = worst_rms.max((r - peak / 2f64.sqrt()).abs() / peak);
            }
        }
    }
    ensure(worst_rms <= 1e-6, || {
        format!("RMS relative error {worst_rms:e}")
    })?;

    let w: Vec<f64> = (0..spc as u64)
        .map(|n| cfg.waveform(20_000.0, n, 0.0))
        .collect();
    let r20k = power::rms(&w, spc).map_err(|e| e.to_string())?;
    ensure((r20k - 14_142.1).abs() <= 1.0, || {
        format!("20 kA peak -> {r20k} A RMS")
    })?;
    let w: Vec<f64> = (0..spc as u64)
        .map(|n| cfg.waveform(315.37, n, 0.0))
        .collect();
    let rn = power::rms(&w, spc).map_err(|e| e.to_string())?;
    ensure((rn - 223.0).abs() <= 0.5, || {
        format!("normal load {rn} A RMS")
    })?;
    Ok(format!(
        "waveform err {worst:.1e}, RMS err {worst_rms:.1e}, 20 kA -> {r20k:.1} A, load {rn:.1} A"
    ))
}

fn c3_trip_times() -> Outcome {
    let mut parts = Vec::new();
    for (name, want_ms) in [
        ("s1_fault_trip", 19.0),
        ("s2_simulated_ied", 24.0),
        ("s3_breaker_ied", 15.0),
    ] {
        let (o, el) = run_builtin(name)?;
        ensure(el < Duration::from_secs(2), || {
            format!("{name} took {el:?}")
        })?;
        let fault = o
            .log
            .iter()
            .find(|e| matches!(e.event, LogEvent::FaultInception { .. }))
            .ok_or(format!("{name}: no fault inception"))?
            .at_ns;
        let open = o
            .log
            .iter()
            .find(|e| matches!(e.event, LogEvent::BreakerOperated { closed: false, .. }))
            .ok_or(format!("{name}: breaker never opened"))?
            .at_ns;
        let chain = timing::decompose(&o.log).map_err(|e| format!("{name}: {e}"))?;
        // The trip GOOSE on the capture is the one the chain names.
        let rec = o
            .capture
            .iter()
            .find(|r| r.publish_seq == chain.trigger_publish_seq)
            .ok_or(format!("{name}: trip GOOSE not on capture"))?;
        ensure(rec.publish_at == chain.published_at, || {
            format!(
                "{name}: capture publish {} vs chain {}",
                rec.publish_at, chain.published_at
            )
        })?;
        let trip = codec::decode_goose(&rec.frame).map_err(|e| e.to_string())?;
        ensure(trip.all_data == vec![true], || {
            format!("{name}: trip frame carries {:?}", trip.all_data)
        })?;
        let measured_ms = (open - fault) as f64 / 1e6;
        ensure((measured_ms - want_ms).abs() <= 1.0, || {
            format!("{name}: fault->open {measured_ms} ms, expected {want_ms} ± 1")
        })?;
        ensure(
            chain.t_p_ns == chain.t_a_ns + chain.t_b_ns + chain.t_c_ns,
            || format!("{name}: T_p != T_a + T_b + T_c"),
        )?;
        ensure(chain.t_p_ns == open - fault, || {
            format!("{name}: T_p differs from capture timeline")
        })?;
        if name == "s1_fault_trip" {
            let ab = chain.t_a_ns + chain.t_b_ns;
            ensure(ab.abs_diff(13_000_000) <= 1_000, || {
                format!("T_a + T_b = {ab} ns")
            })?;
            ensure(chain.t_c_ns.abs_diff(6_000_000) <= 1_000, || {
                format!("T_c = {} ns", chain.t_c_ns)
            })?;
        }
        parts.push(format!(
            "{name} {measured_ms:.3} ms (T_a {:.1} + T_b {:.1} + T_c {:.1}) in {el:.0?}",
            chain.t_a_ns as f64 / 1e6,
            chain.t_b_ns as f64 / 1e6,
            chain.t_c_ns as f64 / 1e6
        ));
    }
    Ok(parts.join("; "))
}

fn c4_sv_fdi() -> Outcome {
    let (o, _) = run_builtin("s4_sv_fdi")?;
    let inj = o
        .report
        .injections
        .iter()
        .find(|i| i.kind == AttackKind::SvFdi)
        .ok_or("no FDI injection recorded")?;
    let start = inj.started_at.ok_or("FDI never started")?;
    let cycle_ns = 1_000_000_000 / 60;
    let first_high = o
        .pc_rms_trace
        .iter()
        .find(|(t, r)| *t >= start && r.iter().any(|x| *x > 14_000.0))
        .map(|(t, _)| *t)
        .ok_or("P&C window RMS never exceeded 14 000 A")?;
    let after = first_high - start;
    ensure(after <= cycle_ns, || {
        format!("RMS > 14 kA only {after} ns after injection start")
    })?;
    let trip = o.log.iter().any(|e| {
        e.at_ns >= start
            && e.device == "PC1"
            && matches!(e.event, LogEvent::GooseBuffered { value: true, .. })
    });
    ensure(trip, || "no trip GOOSE after injection".into())?;
    let first_r4 = o
        .alerts
        .iter()
        .find(|a| a.rule_id == RuleId::R4)
        .ok_or("R4 never fired")?;
    let pos = inj
        .publish_seqs
        .iter()
        .position(|s| *s == first_r4.frame_seq)
        .ok_or("first R4 alert is not on a malicious frame")?;
    ensure(pos < 3, || {
        format!("R4 fired on malicious packet #{}", pos + 1)
    })?;
    Ok(format!(
        "RMS > 14 kA {:.3} ms after start; R4 on malicious packet #{}",
        after as f64 / 1e6,
        pos + 1
    ))
}

fn c5_goose_replay() -> Outcome {
    let (o, _) = run_builtin("s5_goose_replay")?;
    let r = &o.report;
    let replay = r
        .injections
        .iter()
        .find(|i| i.kind == AttackKind::GooseReplay)
        .ok_or("no replay recorded")?;
    let seq = replay.publish_seqs[0];
    let open = r
        .breaker
        .iter()
        .find(|b| !b.closed && b.trigger_publish_seq == Some(seq))
        .ok_or("replayed frame did not open the breaker")?;
    ensure(open.feeder_rms_before_a < 1.05 * 223.0, || {
        format!(
            "feeder RMS {} A at replay opening",
            open.feeder_rms_before_a
        )
    })?;
    let fired: BTreeSet<RuleId> = r
        .detection
        .per_rule
        .iter()
        .filter(|(_, c)| **c > 0)
        .map(|(k, _)| *k)
        .collect();
    ensure(!fired.is_empty(), || "no alerts".into())?;
    ensure(
        fired.iter().all(|k| matches!(k, RuleId::R2 | RuleId::R3)),
        || format!("rules fired: {fired:?}"),
    )?;
    let lat = r
        .detection
        .max_latency_with_transfer_ns
        .ok_or("no alert GOOSE delivered")?;
    ensure(lat < 500_000, || format!("detection + transfer {lat} ns"))?;
    Ok(format!(
        "opened at {:.1} A RMS; rules {fired:?}; detection + transfer {:.3} ms",
        open.feeder_rms_before_a,
        lat as f64 / 1e6
    ))
}

fn c6_conformant_spoof() -> Outcome {
    let (o, _) = run_builtin("s6_goose_spoof")?;
    let r = &o.report;
    ensure(r.breaker.iter().any(|b| !b.closed), || {
        "breaker did not open".into()
    })?;
    ensure(r.detection.total_alerts == 0, || {
        format!("{} alerts", r.detection.total_alerts)
    })?;
    Ok(format!(
        "breaker opened, 0 alerts, missed {:?}",
        r.detection.missed_attacks
    ))
}

fn c7_determinism() -> Outcome {
    let mut n = 0;
    for name in scenario::BUILTIN_NAMES {
        for jitter in [0u64, 20_000] {
            let mut s = scenario::builtin(name).ok_or("missing builtin")?;
            s.network.jitter_ns = jitter;
            s.seed = 7;
            let a = scenario::run(&s).map_err(|e| e.to_string())?;
            let b = scenario::run(&s).map_err(|e| e.to_string())?;
            ensure(
                a.report.capture.pcap_sha256 == b.report.capture.pcap_sha256,
                || format!("{name}: capture hash differs"),
            )?;
            let ja = serde_json::to_string(&a.report).map_err(|e| e.to_string())?;
            let jb = serde_json::to_string(&b.report).map_err(|e| e.to_string())?;
            ensure(ja == jb, || format!("{name}: report JSON differs"))?;
            n += 1;
        }
    }
    Ok(format!(
        "{n} scenario/jitter combinations reproduced bit-for-bit"
    ))
}

fn c8_protocol_invariants() -> Outcome {
    let mut frames = 0;
    for name in scenario::BUILTIN_NAMES {
        let (o, _) = run_builtin(name)?;
        let v = common::protocol_violations(&o.capture, true);
        ensure(v.is_empty(), || {
            format!("{name}: {}", v[..v.len().min(3)].join("; "))
        })?;
        frames += o.capture.len();
    }
    Ok(format!(
        "{frames} captured frames across 6 scenarios conform per publisher"
    ))
}

fn c9_window_analysis() -> Outcome {
    let (s5, _) = run_builtin("s5_goose_replay")?;
    let replay_chain = timing::decompose_all(&s5.log)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|c| matches!(c.origin, ChainOrigin::Attack { .. }))
        .ok_or("no replay chain")?;
    ensure(replay_chain.t_c_ns == 6_000_000, || {
        format!("replay T_c {}", replay_chain.t_c_ns)
    })?;
    let w = timing::analyze_window(AttackKind::GooseReplay, &replay_chain, 300_000, 1_000_000);
    ensure(w.blocked, || format!("replay window {w:?}"))?;

    let (s3, _) = run_builtin("s3_breaker_ied")?;
    let c3 = timing::decompose(&s3.log).map_err(|e| e.to_string())?;
    ensure(c3.t_c_ns == 2_000_000, || {
        format!("breaker-IED T_c {}", c3.t_c_ns)
    })?;
    let w2 = timing::analyze_window(AttackKind::GooseReplay, &c3, 300_000, 2_000_000);
    ensure(!w2.blocked, || format!("breaker-IED window {w2:?}"))?;
    Ok(format!(
        "T_c 6 ms/0.3/1 -> blocked={}; T_c 2 ms/0.3/2 -> blocked={}",
        w.blocked, w2.blocked
    ))
}

fn c10_zero_false_positives() -> Outcome {
    let mut parts = Vec::new();
    for name in ["s1_fault_trip", "s2_simulated_ied", "s3_breaker_ied"] {
        let (o, _) = run_builtin(name)?;
        let n = o.report.detection.total_alerts;
        ensure(n == 0, || format!("{name}: {n} alerts"))?;
        parts.push(format!("{name} 0"));
    }
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("codec round-trip", c1_codec_round_trip),
        ("waveform/RMS oracle", c2_waveform_rms),
        ("S1-S3 trip times", c3_trip_times),
        ("S4 SV false data injection", c4_sv_fdi),
        ("S5 GOOSE replay", c5_goose_replay),
        ("S6 conformant spoof", c6_conformant_spoof),
        ("determinism", c7_determinism),
        ("protocol invariants", c8_protocol_invariants),
        ("window analysis", c9_window_analysis),
        ("zero false positives", c10_zero_false_positives),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
