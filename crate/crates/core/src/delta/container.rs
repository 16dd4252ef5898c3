//! `HSDL` delta container.
//!
//! ```text
//! header (16 bytes, uncompressed):
//!   "HSDL" | version u16 = 1 | superclass_id u32 | mode u8 | qat_bits u8 | base_fingerprint u32
//! DEFLATE stream (raw RFC 1951, level 9) of:
//!   entry_count u32
//!   per entry: name (u32 len + UTF-8) | ndim u32 | dims u32… | kind u8 | payload
//!     kind 0: u16 binary16 deltas
//!     kind 1: f32 scale, i16 grid-index deltas
//!     kind 2: f32 values
//!     kind 3: f32 scale, f32 values
//!     kind 4: u32 XOR of f32 bit patterns
//! CRC-32C of the compressed stream (u32)
//! ```

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::{DeltaEntry, DeltaMode, DeltaPack, Payload};
use crate::codec::{self, checked_len, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const DELTA_MAGIC: &[u8; 4] = b"HSDL";
pub const DELTA_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// Serialized, compressed delta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedDelta {
    pub bytes: Vec<u8>,
    /// Container size before compression (header + entries + checksum).
    pub raw_size: usize,
}

impl PackedDelta {
    pub fn packed_size(&self) -> usize {
        self.bytes.len()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let raw_size = HEADER_LEN + inflate_checked(&bytes)?.len() + 4;
        Ok(PackedDelta { bytes, raw_size })
    }
}

fn encode_entries(entries: &[DeltaEntry]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u32(entries.len() as u32);
    for e in entries {
        w.str(&e.name);
        w.u32(e.shape.len() as u32);
        for &d in &e.shape {
            w.u32(d as u32);
        }
        w.u8(e.payload.kind());
        match &e.payload {
            Payload::F16Delta(bits) => bits.iter().for_each(|&b| w.u16(b)),
            Payload::IntDelta { scale, values } => {
                w.f32(*scale);
                values.iter().for_each(|&v| w.bytes(&v.to_le_bytes()));
            }
            Payload::Full(values) => w.f32s(values),
            Payload::XorDelta(bits) => bits.iter().for_each(|&b| w.u32(b)),
            Payload::FullScaled { scale, values } => {
                w.f32(*scale);
                w.f32s(values);
            }
        }
    }
    w.buf
}

pub fn pack(d: &DeltaPack) -> PackedDelta {
    let mut w = ByteWriter::new();
    w.bytes(DELTA_MAGIC);
    w.u16(DELTA_VERSION);
    w.u32(d.superclass_id);
    w.u8(d.mode.code());
    w.u8(d.qat_bits);
    w.u32(d.base_fingerprint);
    debug_assert_eq!(w.buf.len(), HEADER_LEN);

    let raw = encode_entries(&d.entries);
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(&raw).expect("writing to a Vec cannot fail");
    let compressed = enc.finish().expect("writing to a Vec cannot fail");
    w.bytes(&compressed);
    let crc = codec::crc32c(&compressed);
    w.u32(crc);
    PackedDelta {
        bytes: w.buf,
        raw_size: HEADER_LEN + raw.len() + 4,
    }
}

fn read_header(bytes: &[u8]) -> Result<(u32, DeltaMode, u8, u32)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(DELTA_MAGIC)?;
    r.expect_version(DELTA_VERSION)?;
    let superclass_id = r.u32()?;
    let mode_at = r.offset();
    let mode = DeltaMode::from_code(r.u8()?).ok_or_else(|| Error::format(mode_at, "unknown delta mode"))?;
    let qat_bits = r.u8()?;
    let fingerprint = r.u32()?;
    Ok((superclass_id, mode, qat_bits, fingerprint))
}

fn inflate_checked(bytes: &[u8]) -> Result<Vec<u8>> {
    read_header(bytes)?;
    let framed = codec::verify_trailing_crc(bytes, HEADER_LEN)?;
    let mut raw = Vec::new();
    DeflateDecoder::new(&framed[HEADER_LEN..])
        .read_to_end(&mut raw)
        .map_err(|e| Error::format(HEADER_LEN, format!("decompression failed: {e}")))?;
    Ok(raw)
}

/// Inverse of [`pack`]; nothing is returned unless the whole container checks out.
pub fn unpack(bytes: &[u8]) -> Result<DeltaPack> {
    let (superclass_id, mode, qat_bits, base_fingerprint) = read_header(bytes)?;
    let raw = inflate_checked(bytes)?;
    // offsets below are positions in the decompressed entry stream
    let mut r = ByteReader::new(&raw);
    let count = r.u32()? as usize;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name = r.str()?;
        let ndim_at = r.offset();
        let ndim = r.u32()? as usize;
        if ndim > r.remaining() / 4 {
            return Err(Error::format(ndim_at, format!("implausible rank {ndim}")));
        }
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .ok_or_else(|| Error::format(ndim_at, "shape overflow"))?;
        let kind_at = r.offset();
        let payload = match r.u8()? {
            0 => {
                let b = r.take(checked_len(n, 2, kind_at)?)?;
                Payload::F16Delta(b.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
            }
            1 => {
                let scale = r.f32()?;
                let b = r.take(checked_len(n, 2, kind_at)?)?;
                Payload::IntDelta {
                    scale,
                    values: b.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
                }
            }
            2 => Payload::Full(r.f32s(n)?),
            3 => {
                let scale = r.f32()?;
                Payload::FullScaled {
                    scale,
                    values: r.f32s(n)?,
                }
            }
            4 => {
                let b = r.take(checked_len(n, 4, kind_at)?)?;
                Payload::XorDelta(
                    b.chunks_exact(4)
                        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                )
            }
            other => return Err(Error::format(kind_at, format!("unknown payload kind {other}"))),
        };
        entries.push(DeltaEntry { name, shape, payload });
    }
    r.expect_end()?;
    Ok(DeltaPack {
        superclass_id,
        mode,
        qat_bits,
        base_fingerprint,
        entries,
    })
}
