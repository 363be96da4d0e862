#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use substation_testbed::bus::CaptureRecord;
use substation_testbed::codec::{
    self, Frame, GooseFrame, MacAddress, SvFrame, SvSample, UtcTimestamp, VlanTag,
};

fn mac<R: Rng>(rng: &mut R) -> MacAddress {
    MacAddress(rng.gen())
}

fn vlan<R: Rng>(rng: &mut R) -> Option<VlanTag> {
    rng.gen_bool(0.3).then(|| VlanTag {
        priority: rng.gen_range(0..8),
        id: rng.gen_range(0..0x1000),
    })
}

fn visible<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n)
        .map(|_| rng.gen_range(0x20u8..0x7F) as char)
        .collect()
}

pub fn random_sv<R: Rng>(rng: &mut R) -> SvFrame {
    let mut samples = [SvSample::default(); 8];
    for s in &mut samples {
        s.value = rng.gen();
        s.quality = rng.gen();
    }
    SvFrame {
        dst: mac(rng),
        src: mac(rng),
        vlan: vlan(rng),
        app_id: rng.gen(),
        sv_id: visible(rng, 1, 64),
        smp_cnt: rng.gen_range(0..4800),
        conf_rev: rng.gen(),
        smp_synch: rng.gen_range(0..3),
        samples,
    }
}

pub fn random_goose<R: Rng>(rng: &mut R) -> GooseFrame {
    // Occasionally long enough to need two-byte TLV lengths.
    let entries = if rng.gen_bool(0.1) {
        rng.gen_range(60..200)
    } else {
        rng.gen_range(1..8)
    };
    GooseFrame {
        dst: mac(rng),
        src: mac(rng),
        vlan: vlan(rng),
        app_id: rng.gen(),
        gocb_ref: visible(rng, 0, 130),
        time_allowed_to_live: rng.gen(),
        dat_set: visible(rng, 0, 70),
        go_id: visible(rng, 0, 65),
        t: UtcTimestamp {
            seconds: rng.gen(),
            fraction: rng.gen_range(0..1 << 24),
            quality: rng.gen(),
        },
        st_num: rng.gen_range(1..=u32::MAX),
        sq_num: rng.gen(),
        simulation: rng.gen(),
        conf_rev: rng.gen(),
        nds_com: rng.gen(),
        all_data: (0..entries).map(|_| rng.gen()).collect(),
    }
}

/// Publisher-side protocol discipline over a capture, grouped per
/// (stream id, publishing device).
pub fn protocol_violations(capture: &[CaptureRecord], per_publisher: bool) -> Vec<String> {
    let mut sv: BTreeMap<(String, String), u16> = BTreeMap::new();
    let mut goose: BTreeMap<(String, String), GooseFrame> = BTreeMap::new();
    let mut out = Vec::new();
    for r in capture {
        let who = if per_publisher {
            r.publisher.clone()
        } else {
            String::new()
        };
        match codec::decode_any(&r.frame) {
            Ok(Some(Frame::Sv(f))) => {
                let key = (f.sv_id.clone(), who);
                if let Some(prev) = sv.insert(key.clone(), f.smp_cnt) {
                    if f.smp_cnt != (prev + 1) % 4800 {
                        out.push(format!("{key:?}: smpCnt {prev} -> {}", f.smp_cnt));
                    }
                }
            }
            Ok(Some(Frame::Goose(f))) => {
                let key = (f.go_id.clone(), who);
                if let Some(p) = goose.get(&key) {
                    if f.st_num < p.st_num {
                        out.push(format!("{key:?}: stNum {} -> {}", p.st_num, f.st_num));
                    } else if f.st_num > p.st_num {
                        if f.sq_num != 0 {
                            out.push(format!(
                                "{key:?}: new stNum {} with sqNum {}",
                                f.st_num, f.sq_num
                            ));
                        }
                    } else {
                        if f.sq_num != p.sq_num + 1 {
                            out.push(format!("{key:?}: sqNum {} -> {}", p.sq_num, f.sq_num));
                        }
                        if f.t != p.t {
                            out.push(format!("{key:?}: t changed within stNum {}", f.st_num));
                        }
                    }
                } else if f.sq_num != 0 {
                    out.push(format!("{key:?}: first frame has sqNum {}", f.sq_num));
                }
                goose.insert(key, f);
            }
            Ok(None) => {}
            Err(e) => out.push(format!("undecodable frame {}: {e}", r.publish_seq)),
        }
    }
    out
}
