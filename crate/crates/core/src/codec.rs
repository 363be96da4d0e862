//! SV and GOOSE Ethernet frame codec.
//!
//! The wire format is a definite-length TLV subset that follows the 9-2LE and
//! 8-1 tag numbering:
//!
//! ```text
//! dst(6) src(6) [0x8100 TCI(2)] ethertype(2) APPID(2) Length(2) Reserved1(2) Reserved2(2) APDU
//! ```
//!
//! All multi-byte integers are big-endian and every integer field has a fixed
//! width, so a frame has exactly one encoding. The decoder is strict: unknown
//! tags, non-minimal length forms, non-zero reserved words and trailing bytes
//! are all rejected, which makes `encode(decode(b)) == b` hold for every
//! accepted input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const ETHERTYPE_SV: u16 = 0x88BA;
pub const ETHERTYPE_GOOSE: u16 = 0x88B8;
pub const ETHERTYPE_VLAN: u16 = 0x8100;

/// smpCnt wraps at the 4800 samples/s protection rate.
pub const SMP_CNT_MODULUS: u16 = 4800;
pub const SV_CHANNELS: usize = 8;
const SV_SAMPLES_LEN: usize = SV_CHANNELS * 8;
const SV_ID_MAX: usize = 64;
const VISIBLE_STRING_MAX: usize = 255;

const TAG_SV_PDU: u8 = 0x60;
const TAG_GOOSE_PDU: u8 = 0x61;

/// Quality octet stamped on timestamps produced by this testbed (10 bits of
/// accuracy, clock synchronised).
pub const TIME_QUALITY_DEFAULT: u8 = 0x0A;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("offset {offset}: expected ethertype {expected:#06x}, found {found:#06x}")]
    WrongEthertype {
        offset: usize,
        expected: u16,
        found: u16,
    },
    #[error("offset {offset}: truncated {what} (needs {needed} bytes, {available} available)")]
    Truncated {
        offset: usize,
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("offset {offset}: Length field says {declared}, frame carries {actual}")]
    LengthMismatch {
        offset: usize,
        declared: usize,
        actual: usize,
    },
    #[error("offset {offset}: expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag {
        offset: usize,
        expected: u8,
        found: u8,
    },
    #[error("offset {offset}: unsupported or non-canonical length form")]
    BadLength { offset: usize },
    #[error("offset {offset}: {field} has {actual} bytes, expected {expected}")]
    FieldSize {
        offset: usize,
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("offset {offset}: {field}: {reason}")]
    InvalidValue {
        offset: usize,
        field: &'static str,
        reason: String,
    },
    #[error("offset {offset}: {count} unexpected trailing bytes")]
    TrailingBytes { offset: usize, count: usize },
}

impl CodecError {
    /// Byte offset the decoder error points at; `None` for encoder errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            CodecError::InvalidField { .. } => None,
            CodecError::WrongEthertype { offset, .. }
            | CodecError::Truncated { offset, .. }
            | CodecError::LengthMismatch { offset, .. }
            | CodecError::UnexpectedTag { offset, .. }
            | CodecError::BadLength { offset }
            | CodecError::FieldSize { offset, .. }
            | CodecError::InvalidValue { offset, .. }
            | CodecError::TrailingBytes { offset, .. } => Some(*offset),
        }
    }

    fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        CodecError::InvalidField {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    /// 01:0C:CD:04:00:03, the SV destination used by the merging unit.
    pub const SV_DEFAULT: MacAddress = MacAddress([0x01, 0x0C, 0xCD, 0x04, 0x00, 0x03]);
    pub const GOOSE_DEFAULT: MacAddress = MacAddress([0x01, 0x0C, 0xCD, 0x01, 0x00, 0x01]);

    pub fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 == 0x01
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed MAC address {0:?}")]
pub struct MacParseError(String);

impl FromStr for MacAddress {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for slot in out.iter_mut() {
            let part = parts.next().ok_or_else(|| MacParseError(s.to_string()))?;
            if part.len() != 2 {
                return Err(MacParseError(s.to_string()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| MacParseError(s.to_string()))?;
        }
        if parts.next().is_some() {
            return Err(MacParseError(s.to_string()));
        }
        Ok(MacAddress(out))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 802.1Q tag. The DEI bit is not modelled and must be zero on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VlanTag {
    pub priority: u8,
    pub id: u16,
}

impl VlanTag {
    fn tci(&self) -> Result<u16, CodecError> {
        if self.priority > 7 {
            return Err(CodecError::invalid("vlan.priority", "must fit in 3 bits"));
        }
        if self.id > 0x0FFF {
            return Err(CodecError::invalid("vlan.id", "must fit in 12 bits"));
        }
        Ok(((self.priority as u16) << 13) | self.id)
    }
}

/// IEC 61850 UtcTime: seconds since epoch, 24-bit binary fraction, quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UtcTimestamp {
    pub seconds: u32,
    pub fraction: u32,
    pub quality: u8,
}

impl UtcTimestamp {
    pub const FRACTION_LIMIT: u32 = 1 << 24;

    /// Timestamp for `nanos` of simulation time on top of an epoch offset.
    pub fn from_nanos(epoch_seconds: u32, nanos: u64) -> Self {
        let secs = nanos / 1_000_000_000;
        let sub = nanos % 1_000_000_000;
        UtcTimestamp {
            seconds: epoch_seconds.wrapping_add(secs as u32),
            fraction: ((sub << 24) / 1_000_000_000) as u32,
            quality: TIME_QUALITY_DEFAULT,
        }
    }

    /// Nanoseconds since the Unix epoch (fraction truncated to ns).
    pub fn as_nanos(&self) -> u64 {
        self.seconds as u64 * 1_000_000_000 + ((self.fraction as u64 * 1_000_000_000) >> 24)
    }

    fn validate(&self) -> Result<(), CodecError> {
        if self.fraction >= Self::FRACTION_LIMIT {
            return Err(CodecError::invalid("t.fraction", "must be below 2^24"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SvSample {
    pub value: i32,
    pub quality: u32,
}

/// One 9-2LE ASDU: four currents (mA) then four voltages (10 mV).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SvFrame {
    pub dst: MacAddress,
    pub src: MacAddress,
    pub vlan: Option<VlanTag>,
    pub app_id: u16,
    pub sv_id: String,
    pub smp_cnt: u16,
    pub conf_rev: u32,
    pub smp_synch: u8,
    pub samples: [SvSample; SV_CHANNELS],
}

impl SvFrame {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.smp_cnt >= SMP_CNT_MODULUS {
            return Err(CodecError::invalid(
                "smpCnt",
                format!("{} is outside [0, 4799]", self.smp_cnt),
            ));
        }
        check_visible("svId", &self.sv_id, 1, SV_ID_MAX)?;
        if let Some(v) = &self.vlan {
            v.tci()?;
        }
        Ok(())
    }

    /// Payload digest over the 64-byte samples field (FNV-1a).
    pub fn samples_digest(&self) -> u64 {
        let mut bytes = [0u8; SV_SAMPLES_LEN];
        write_samples(&mut bytes, &self.samples);
        fnv1a(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GooseFrame {
    pub dst: MacAddress,
    pub src: MacAddress,
    pub vlan: Option<VlanTag>,
    pub app_id: u16,
    pub gocb_ref: String,
    pub time_allowed_to_live: u32,
    pub dat_set: String,
    pub go_id: String,
    pub t: UtcTimestamp,
    pub st_num: u32,
    pub sq_num: u32,
    pub simulation: bool,
    pub conf_rev: u32,
    pub nds_com: bool,
    pub all_data: Vec<bool>,
}

impl GooseFrame {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.st_num == 0 {
            return Err(CodecError::invalid("stNum", "must be at least 1"));
        }
        if self.all_data.is_empty() {
            return Err(CodecError::invalid(
                "allData",
                "must hold at least one entry",
            ));
        }
        // Each entry costs 3 bytes; keep the container within a 2-byte length.
        if self.all_data.len() > 0xFFFF / 3 {
            return Err(CodecError::invalid("allData", "too many entries"));
        }
        check_visible("gocbRef", &self.gocb_ref, 0, VISIBLE_STRING_MAX)?;
        check_visible("datSet", &self.dat_set, 0, VISIBLE_STRING_MAX)?;
        check_visible("goId", &self.go_id, 0, VISIBLE_STRING_MAX)?;
        self.t.validate()?;
        if let Some(v) = &self.vlan {
            v.tci()?;
        }
        Ok(())
    }
}

fn check_visible(field: &'static str, s: &str, min: usize, max: usize) -> Result<(), CodecError> {
    if !s.is_ascii() {
        return Err(CodecError::invalid(field, "must be ASCII"));
    }
    if s.len() < min || s.len() > max {
        return Err(CodecError::invalid(
            field,
            format!("length {} outside [{min}, {max}]", s.len()),
        ));
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Sv,
    Goose,
    Other,
}

/// Ethertype after an optional 802.1Q tag, if the frame is long enough.
pub fn ethertype(bytes: &[u8]) -> Option<u16> {
    let outer = u16::from_be_bytes([*bytes.get(12)?, *bytes.get(13)?]);
    if outer == ETHERTYPE_VLAN {
        Some(u16::from_be_bytes([*bytes.get(16)?, *bytes.get(17)?]))
    } else {
        Some(outer)
    }
}

/// Destination MAC of a raw frame, if present.
pub fn destination(bytes: &[u8]) -> Option<MacAddress> {
    let d: [u8; 6] = bytes.get(..6)?.try_into().ok()?;
    Some(MacAddress(d))
}

pub fn classify_frame(bytes: &[u8]) -> FrameKind {
    match ethertype(bytes) {
        Some(ETHERTYPE_SV) => FrameKind::Sv,
        Some(ETHERTYPE_GOOSE) => FrameKind::Goose,
        _ => FrameKind::Other,
    }
}

// ---------------------------------------------------------------- encoding

fn push_len(out: &mut Vec<u8>, len: usize, field: &'static str) -> Result<(), CodecError> {
    if len < 0x80 {
        out.push(len as u8);
    } else if len <= 0xFF {
        out.extend_from_slice(&[0x81, len as u8]);
    } else if len <= 0xFFFF {
        out.extend_from_slice(&[0x82, (len >> 8) as u8, len as u8]);
    } else {
        return Err(CodecError::invalid(
            field,
            "encoded length exceeds 65535 bytes",
        ));
    }
    Ok(())
}

fn push_tlv(
    out: &mut Vec<u8>,
    tag: u8,
    value: &[u8],
    field: &'static str,
) -> Result<(), CodecError> {
    out.push(tag);
    push_len(out, value.len(), field)?;
    out.extend_from_slice(value);
    Ok(())
}

fn write_samples(dst: &mut [u8; SV_SAMPLES_LEN], samples: &[SvSample; SV_CHANNELS]) {
    for (chunk, s) in dst.chunks_exact_mut(8).zip(samples) {
        chunk[..4].copy_from_slice(&s.value.to_be_bytes());
        chunk[4..].copy_from_slice(&s.quality.to_be_bytes());
    }
}

fn encode_frame(
    dst: MacAddress,
    src: MacAddress,
    vlan: Option<VlanTag>,
    ethertype: u16,
    app_id: u16,
    apdu: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let length = 8 + apdu.len();
    if length > 0xFFFF {
        return Err(CodecError::invalid(
            "Length",
            "APDU too large for 16-bit Length",
        ));
    }
    let mut out = Vec::with_capacity(26 + apdu.len());
    out.extend_from_slice(&dst.0);
    out.extend_from_slice(&src.0);
    if let Some(tag) = vlan {
        out.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        out.extend_from_slice(&tag.tci()?.to_be_bytes());
    }
    out.extend_from_slice(&ethertype.to_be_bytes());
    out.extend_from_slice(&app_id.to_be_bytes());
    out.extend_from_slice(&(length as u16).to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    out.extend_from_slice(apdu);
    Ok(out)
}

pub fn encode_sv(frame: &SvFrame) -> Result<Vec<u8>, CodecError> {
    frame.validate()?;
    let mut samples = [0u8; SV_SAMPLES_LEN];
    write_samples(&mut samples, &frame.samples);

    let mut asdu = Vec::with_capacity(96);
    push_tlv(&mut asdu, 0x80, frame.sv_id.as_bytes(), "svId")?;
    push_tlv(&mut asdu, 0x82, &frame.smp_cnt.to_be_bytes(), "smpCnt")?;
    push_tlv(&mut asdu, 0x83, &frame.conf_rev.to_be_bytes(), "confRev")?;
    push_tlv(&mut asdu, 0x85, &[frame.smp_synch], "smpSynch")?;
    push_tlv(&mut asdu, 0x87, &samples, "samples")?;

    let mut seq = Vec::with_capacity(asdu.len() + 3);
    push_tlv(&mut seq, 0x30, &asdu, "ASDU")?;
    let mut pdu = Vec::with_capacity(seq.len() + 6);
    push_tlv(&mut pdu, 0x80, &[1], "noASDU")?;
    push_tlv(&mut pdu, 0xA2, &seq, "seqASDU")?;
    let mut apdu = Vec::with_capacity(pdu.len() + 3);
    push_tlv(&mut apdu, TAG_SV_PDU, &pdu, "savPdu")?;

    encode_frame(
        frame.dst,
        frame.src,
        frame.vlan,
        ETHERTYPE_SV,
        frame.app_id,
        &apdu,
    )
}

pub fn encode_goose(frame: &GooseFrame) -> Result<Vec<u8>, CodecError> {
    frame.validate()?;
    let mut t = [0u8; 8];
    t[..4].copy_from_slice(&frame.t.seconds.to_be_bytes());
    t[4..7].copy_from_slice(&frame.t.fraction.to_be_bytes()[1..]);
    t[7] = frame.t.quality;

    let mut data = Vec::with_capacity(frame.all_data.len() * 3);
    for v in &frame.all_data {
        push_tlv(&mut data, 0x83, &[*v as u8], "allData")?;
    }

    let mut pdu = Vec::with_capacity(128 + data.len());
    push_tlv(&mut pdu, 0x80, frame.gocb_ref.as_bytes(), "gocbRef")?;
    push_tlv(
        &mut pdu,
        0x81,
        &frame.time_allowed_to_live.to_be_bytes(),
        "timeAllowedToLive",
    )?;
    push_tlv(&mut pdu, 0x82, frame.dat_set.as_bytes(), "datSet")?;
    push_tlv(&mut pdu, 0x83, frame.go_id.as_bytes(), "goId")?;
    push_tlv(&mut pdu, 0x84, &t, "t")?;
    push_tlv(&mut pdu, 0x85, &frame.st_num.to_be_bytes(), "stNum")?;
    push_tlv(&mut pdu, 0x86, &frame.sq_num.to_be_bytes(), "sqNum")?;
    push_tlv(&mut pdu, 0x87, &[frame.simulation as u8], "simulation")?;
    push_tlv(&mut pdu, 0x88, &frame.conf_rev.to_be_bytes(), "confRev")?;
    push_tlv(&mut pdu, 0x89, &[frame.nds_com as u8], "ndsCom")?;
    push_tlv(
        &mut pdu,
        0x8A,
        &(frame.all_data.len() as u32).to_be_bytes(),
        "numDatSetEntries",
    )?;
    push_tlv(&mut pdu, 0xAB, &data, "allData")?;

    let mut apdu = Vec::with_capacity(pdu.len() + 4);
    push_tlv(&mut apdu, TAG_GOOSE_PDU, &pdu, "goosePdu")?;

    encode_frame(
        frame.dst,
        frame.src,
        frame.vlan,
        ETHERTYPE_GOOSE,
        frame.app_id,
        &apdu,
    )
}

// ---------------------------------------------------------------- decoding

/// Cursor over `buf[pos..end]`; offsets reported in errors are absolute.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    end: usize,
}

struct Tlv {
    tag_offset: usize,
    value_offset: usize,
    declared: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], pos: usize, end: usize) -> Self {
        Reader { buf, pos, end }
    }

    fn remaining(&self) -> usize {
        self.end - self.pos
    }

    fn header(&mut self, tag: u8, what: &str) -> Result<Tlv, CodecError> {
        let tag_offset = self.pos;
        if self.remaining() < 2 {
            return Err(CodecError::Truncated {
                offset: tag_offset,
                what: format!("{what} (tag {tag:#04x})"),
                needed: 2,
                available: self.remaining(),
            });
        }
        let found = self.buf[self.pos];
        if found != tag {
            return Err(CodecError::UnexpectedTag {
                offset: tag_offset,
                expected: tag,
                found,
            });
        }
        self.pos += 1;
        let first = self.buf[self.pos];
        self.pos += 1;
        let declared = match first {
            l if l < 0x80 => l as usize,
            0x81 => {
                let l = self.byte(tag_offset, what)? as usize;
                if l < 0x80 {
                    return Err(CodecError::BadLength {
                        offset: tag_offset + 1,
                    });
                }
                l
            }
            0x82 => {
                let hi = self.byte(tag_offset, what)? as usize;
                let lo = self.byte(tag_offset, what)? as usize;
                let l = (hi << 8) | lo;
                if l <= 0xFF {
                    return Err(CodecError::BadLength {
                        offset: tag_offset + 1,
                    });
                }
                l
            }
            _ => {
                return Err(CodecError::BadLength {
                    offset: tag_offset + 1,
                })
            }
        };
        Ok(Tlv {
            tag_offset,
            value_offset: self.pos,
            declared,
        })
    }

    fn byte(&mut self, tag_offset: usize, what: &str) -> Result<u8, CodecError> {
        if self.pos >= self.end {
            return Err(CodecError::Truncated {
                offset: tag_offset,
                what: format!("{what} length"),
                needed: 1,
                available: 0,
            });
        }
        let b = self.buf[self.pos];
        self.pos += 1;
        Ok(b)
    }

    /// Primitive TLV whose value must be fully present.
    fn primitive(&mut self, tag: u8, what: &str) -> Result<(usize, &'a [u8]), CodecError> {
        let tlv = self.header(tag, what)?;
        let available = self.end - tlv.value_offset;
        if tlv.declared > available {
            return Err(CodecError::Truncated {
                offset: tlv.tag_offset,
                what: format!("{what} (tag {tag:#04x})"),
                needed: tlv.declared,
                available,
            });
        }
        self.pos = tlv.value_offset + tlv.declared;
        Ok((tlv.tag_offset, &self.buf[tlv.value_offset..self.pos]))
    }

    fn fixed<const N: usize>(
        &mut self,
        tag: u8,
        field: &'static str,
    ) -> Result<(usize, [u8; N]), CodecError> {
        let (offset, v) = self.primitive(tag, field)?;
        let arr: [u8; N] = v.try_into().map_err(|_| CodecError::FieldSize {
            offset,
            field,
            expected: N,
            actual: v.len(),
        })?;
        Ok((offset, arr))
    }

    fn boolean(&mut self, tag: u8, field: &'static str) -> Result<bool, CodecError> {
        let (offset, [b]) = self.fixed::<1>(tag, field)?;
        match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(CodecError::InvalidValue {
                offset,
                field,
                reason: format!("boolean octet {other:#04x} is not canonical"),
            }),
        }
    }

    fn string(
        &mut self,
        tag: u8,
        field: &'static str,
        min: usize,
        max: usize,
    ) -> Result<String, CodecError> {
        let (offset, v) = self.primitive(tag, field)?;
        if !v.is_ascii() || v.len() < min || v.len() > max {
            return Err(CodecError::InvalidValue {
                offset,
                field,
                reason: format!("expected {min}..={max} ASCII bytes"),
            });
        }
        // ASCII was checked above, so this cannot fail.
        Ok(String::from_utf8_lossy(v).into_owned())
    }

    /// Opens a constructed TLV. When the declared length runs past the end of
    /// the buffer, the child reader is clipped so the innermost damaged field
    /// is reported; `finish_container` reports the container otherwise.
    fn container(&mut self, tag: u8, what: &str) -> Result<(Reader<'a>, Tlv), CodecError> {
        let tlv = self.header(tag, what)?;
        let available = self.end - tlv.value_offset;
        let child_end = tlv.value_offset + tlv.declared.min(available);
        self.pos = child_end;
        Ok((Reader::new(self.buf, tlv.value_offset, child_end), tlv))
    }

    fn finish_container(
        &self,
        child: &Reader<'a>,
        tlv: &Tlv,
        what: &str,
    ) -> Result<(), CodecError> {
        if child.remaining() > 0 {
            return Err(CodecError::TrailingBytes {
                offset: child.pos,
                count: child.remaining(),
            });
        }
        let available = child.end - tlv.value_offset;
        if tlv.declared > available {
            return Err(CodecError::Truncated {
                offset: tlv.tag_offset,
                what: what.to_string(),
                needed: tlv.declared,
                available,
            });
        }
        Ok(())
    }
}

struct Header {
    dst: MacAddress,
    src: MacAddress,
    vlan: Option<VlanTag>,
    app_id: u16,
    length_offset: usize,
    declared_length: usize,
    apdu_offset: usize,
}

fn decode_header(bytes: &[u8], expected: u16) -> Result<Header, CodecError> {
    let need = |offset: usize, n: usize, what: &str| -> Result<(), CodecError> {
        if bytes.len() < offset + n {
            Err(CodecError::Truncated {
                offset,
                what: what.to_string(),
                needed: n,
                available: bytes.len().saturating_sub(offset),
            })
        } else {
            Ok(())
        }
    };
    need(0, 14, "Ethernet header")?;
    let dst = MacAddress(bytes[0..6].try_into().expect("6 bytes"));
    let src = MacAddress(bytes[6..12].try_into().expect("6 bytes"));
    let mut pos = 12;
    let mut vlan = None;
    if u16::from_be_bytes([bytes[12], bytes[13]]) == ETHERTYPE_VLAN {
        need(14, 4, "802.1Q tag")?;
        let tci = u16::from_be_bytes([bytes[14], bytes[15]]);
        if tci & 0x1000 != 0 {
            return Err(CodecError::InvalidValue {
                offset: 14,
                field: "vlan",
                reason: "DEI bit set".into(),
            });
        }
        vlan = Some(VlanTag {
            priority: (tci >> 13) as u8,
            id: tci & 0x0FFF,
        });
        pos = 16;
    }
    let found = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]);
    if found != expected {
        return Err(CodecError::WrongEthertype {
            offset: pos,
            expected,
            found,
        });
    }
    pos += 2;
    need(pos, 8, "APPID/Length/Reserved header")?;
    let app_id = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]);
    let length_offset = pos + 2;
    let declared_length = u16::from_be_bytes([bytes[pos + 2], bytes[pos + 3]]) as usize;
    for (i, name) in [(pos + 4, "reserved1"), (pos + 6, "reserved2")] {
        if bytes[i] != 0 || bytes[i + 1] != 0 {
            return Err(CodecError::InvalidValue {
                offset: i,
                field: name,
                reason: "must be 0x0000".into(),
            });
        }
    }
    Ok(Header {
        dst,
        src,
        vlan,
        app_id,
        length_offset,
        declared_length,
        apdu_offset: pos + 8,
    })
}

fn check_length(bytes: &[u8], h: &Header) -> Result<(), CodecError> {
    let actual = 8 + (bytes.len() - h.apdu_offset);
    if h.declared_length != actual {
        return Err(CodecError::LengthMismatch {
            offset: h.length_offset,
            declared: h.declared_length,
            actual,
        });
    }
    Ok(())
}

pub fn decode_sv(bytes: &[u8]) -> Result<SvFrame, CodecError> {
    let h = decode_header(bytes, ETHERTYPE_SV)?;
    let mut top = Reader::new(bytes, h.apdu_offset, bytes.len());

    let (mut pdu, pdu_tlv) = top.container(TAG_SV_PDU, "savPdu")?;
    let (no_asdu_off, [no_asdu]) = pdu.fixed::<1>(0x80, "noASDU")?;
    if no_asdu != 1 {
        return Err(CodecError::InvalidValue {
            offset: no_asdu_off,
            field: "noASDU",
            reason: format!("only one ASDU per frame is supported, got {no_asdu}"),
        });
    }
    let (mut seq, seq_tlv) = pdu.container(0xA2, "seqASDU")?;
    let (mut asdu, asdu_tlv) = seq.container(0x30, "ASDU")?;

    let sv_id = asdu.string(0x80, "svId", 1, SV_ID_MAX)?;
    let (cnt_off, cnt) = asdu.fixed::<2>(0x82, "smpCnt")?;
    let smp_cnt = u16::from_be_bytes(cnt);
    if smp_cnt >= SMP_CNT_MODULUS {
        return Err(CodecError::InvalidValue {
            offset: cnt_off,
            field: "smpCnt",
            reason: format!("{smp_cnt} is outside [0, 4799]"),
        });
    }
    let (_, rev) = asdu.fixed::<4>(0x83, "confRev")?;
    let (_, [smp_synch]) = asdu.fixed::<1>(0x85, "smpSynch")?;
    let (sam_off, raw) = asdu.primitive(0x87, "samples")?;
    if raw.len() != SV_SAMPLES_LEN {
        return Err(CodecError::FieldSize {
            offset: sam_off,
            field: "samples",
            expected: SV_SAMPLES_LEN,
            actual: raw.len(),
        });
    }
    let mut samples = [SvSample::default(); SV_CHANNELS];
    for (s, chunk) in samples.iter_mut().zip(raw.chunks_exact(8)) {
        s.value = i32::from_be_bytes(chunk[..4].try_into().expect("4 bytes"));
        s.quality = u32::from_be_bytes(chunk[4..].try_into().expect("4 bytes"));
    }

    seq.finish_container(&asdu, &asdu_tlv, "ASDU")?;
    pdu.finish_container(&seq, &seq_tlv, "seqASDU")?;
    top.finish_container(&pdu, &pdu_tlv, "savPdu")?;
    if top.remaining() > 0 {
        return Err(CodecError::TrailingBytes {
            offset: top.pos,
            count: top.remaining(),
        });
    }
    check_length(bytes, &h)?;

    Ok(SvFrame {
        dst: h.dst,
        src: h.src,
        vlan: h.vlan,
        app_id: h.app_id,
        sv_id,
        smp_cnt,
        conf_rev: u32::from_be_bytes(rev),
        smp_synch,
        samples,
    })
}

pub fn decode_goose(bytes: &[u8]) -> Result<GooseFrame, CodecError> {
    let h = decode_header(bytes, ETHERTYPE_GOOSE)?;
    let mut top = Reader::new(bytes, h.apdu_offset, bytes.len());

    let (mut pdu, pdu_tlv) = top.container(TAG_GOOSE_PDU, "goosePdu")?;
    let gocb_ref = pdu.string(0x80, "gocbRef", 0, VISIBLE_STRING_MAX)?;
    let (_, tal) = pdu.fixed::<4>(0x81, "timeAllowedToLive")?;
    let dat_set = pdu.string(0x82, "datSet", 0, VISIBLE_STRING_MAX)?;
    let go_id = pdu.string(0x83, "goId", 0, VISIBLE_STRING_MAX)?;
    let (_, traw) = pdu.fixed::<8>(0x84, "t")?;
    let t = UtcTimestamp {
        seconds: u32::from_be_bytes(traw[..4].try_into().expect("4 bytes")),
        fraction: u32::from_be_bytes([0, traw[4], traw[5], traw[6]]),
        quality: traw[7],
    };
    let (st_off, st) = pdu.fixed::<4>(0x85, "stNum")?;
    let st_num = u32::from_be_bytes(st);
    if st_num == 0 {
        return Err(CodecError::InvalidValue {
            offset: st_off,
            field: "stNum",
            reason: "must be at least 1".into(),
        });
    }
    let (_, sq) = pdu.fixed::<4>(0x86, "sqNum")?;
    let simulation = pdu.boolean(0x87, "simulation")?;
    let (_, rev) = pdu.fixed::<4>(0x88, "confRev")?;
    let nds_com = pdu.boolean(0x89, "ndsCom")?;
    let (n_off, n) = pdu.fixed::<4>(0x8A, "numDatSetEntries")?;
    let declared_entries = u32::from_be_bytes(n) as usize;

    let (mut data, data_tlv) = pdu.container(0xAB, "allData")?;
    let mut all_data = Vec::new();
    while data.remaining() > 0 {
        all_data.push(data.boolean(0x83, "allData entry")?);
    }
    pdu.finish_container(&data, &data_tlv, "allData")?;
    top.finish_container(&pdu, &pdu_tlv, "goosePdu")?;
    if top.remaining() > 0 {
        return Err(CodecError::TrailingBytes {
            offset: top.pos,
            count: top.remaining(),
        });
    }
    if all_data.is_empty() || declared_entries != all_data.len() {
        return Err(CodecError::InvalidValue {
            offset: n_off,
            field: "numDatSetEntries",
            reason: format!(
                "declares {declared_entries} entries, allData carries {}",
                all_data.len()
            ),
        });
    }
    check_length(bytes, &h)?;

    Ok(GooseFrame {
        dst: h.dst,
        src: h.src,
        vlan: h.vlan,
        app_id: h.app_id,
        gocb_ref,
        time_allowed_to_live: u32::from_be_bytes(tal),
        dat_set,
        go_id,
        t,
        st_num,
        sq_num: u32::from_be_bytes(sq),
        simulation,
        conf_rev: u32::from_be_bytes(rev),
        nds_com,
        all_data,
    })
}

/// Either decoded message type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Sv(SvFrame),
    Goose(GooseFrame),
}

/// Decodes by ethertype; `Ok(None)` for frames that are neither SV nor GOOSE.
pub fn decode_any(bytes: &[u8]) -> Result<Option<Frame>, CodecError> {
    match classify_frame(bytes) {
        FrameKind::Sv => decode_sv(bytes).map(|f| Some(Frame::Sv(f))),
        FrameKind::Goose => decode_goose(bytes).map(|f| Some(Frame::Goose(f))),
        FrameKind::Other => Ok(None),
    }
}
