//! Capture export: classic pcap (microsecond, Ethernet) and JSON lines.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::bus::CaptureRecord;

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const LINKTYPE_ETHERNET: u32 = 1;
const SNAPLEN: u32 = 65_535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureFormat {
    Pcap,
    Jsonl,
}

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("pcap file is {0} bytes, shorter than the 24-byte header")]
    ShortHeader(usize),
    #[error("unsupported pcap magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported link type {0}")]
    LinkType(u32),
    #[error("record at offset {offset} is truncated")]
    Truncated { offset: usize },
}

/// One packet read back from a pcap file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapPacket {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub data: Vec<u8>,
}

impl PcapPacket {
    pub fn timestamp_ns(&self) -> u64 {
        self.ts_sec as u64 * 1_000_000_000 + self.ts_usec as u64 * 1_000
    }
}

/// Writes records in the order given. Timestamps are `epoch_seconds` plus
/// each record's delivery time, truncated to microseconds.
pub fn write_pcap<W: Write>(
    records: &[CaptureRecord],
    epoch_seconds: u32,
    mut out: W,
) -> io::Result<()> {
    out.write_all(&PCAP_MAGIC.to_le_bytes())?;
    out.write_all(&2u16.to_le_bytes())?;
    out.write_all(&4u16.to_le_bytes())?;
    out.write_all(&0i32.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    out.write_all(&SNAPLEN.to_le_bytes())?;
    out.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
    for r in records {
        let ns = r.deliver_at.0;
        let sec = epoch_seconds as u64 + ns / 1_000_000_000;
        let usec = (ns % 1_000_000_000) / 1_000;
        let len = r.frame.len() as u32;
        out.write_all(&(sec as u32).to_le_bytes())?;
        out.write_all(&(usec as u32).to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&r.frame)?;
    }
    Ok(())
}

pub fn pcap_bytes(records: &[CaptureRecord], epoch_seconds: u32) -> Vec<u8> {
    let mut buf = Vec::with_capacity(24 + records.len() * 120);
    write_pcap(records, epoch_seconds, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn write_capture_jsonl<W: Write>(records: &[CaptureRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn export_capture(
    records: &[CaptureRecord],
    path: &Path,
    format: CaptureFormat,
    epoch_seconds: u32,
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        CaptureFormat::Pcap => write_pcap(records, epoch_seconds, &mut w)?,
        CaptureFormat::Jsonl => write_capture_jsonl(records, &mut w)?,
    }
    w.flush()
}

/// Reads little-endian microsecond pcap files with Ethernet link type.
pub fn read_pcap(bytes: &[u8]) -> Result<Vec<PcapPacket>, PcapError> {
    if bytes.len() < 24 {
        return Err(PcapError::ShortHeader(bytes.len()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let magic = u32_at(0);
    if magic != PCAP_MAGIC {
        return Err(PcapError::BadMagic(magic));
    }
    let link = u32_at(20);
    if link != LINKTYPE_ETHERNET {
        return Err(PcapError::LinkType(link));
    }
    let mut out = Vec::new();
    let mut pos = 24;
    while pos < bytes.len() {
        if bytes.len() - pos < 16 {
            return Err(PcapError::Truncated { offset: pos });
        }
        let ts_sec = u32_at(pos);
        let ts_usec = u32_at(pos + 4);
        let incl = u32_at(pos + 8) as usize;
        let start = pos + 16;
        if bytes.len() - start < incl {
            return Err(PcapError::Truncated { offset: pos });
        }
        out.push(PcapPacket {
            ts_sec,
            ts_usec,
            data: bytes[start..start + incl].to_vec(),
        });
        pos = start + incl;
    }
    Ok(out)
}
