//! IQD v1 container.
//!
//! ```text
//! header (24 bytes, little-endian)
//!   0  magic        "IQD1"
//!   4  version      u16 = 1
//!   6  feature_dim  u16 = 256
//!   8  frame_count  u64
//!  16  seed         u64
//! per frame (1028 bytes)
//!   +0 label u8 | +1 snr_db i8 | +2 split u8 (0 train, 1 test) | +3 pad u8 = 0
//!   +4 256 × f32 features
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::dataset::{Dataset, IqFrame, Split};
use super::scheme::ModulationScheme;
use super::synth::snr_index;
use super::FEATURE_DIM;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IQD1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const FRAME_LEN: usize = 4 + 4 * FEATURE_DIM;

pub fn encode_iqd(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.len() * FRAME_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u16).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&dataset.seed().to_le_bytes());
    for (frame, split) in dataset.frames().iter().zip(dataset.split()) {
        out.push(frame.label().code());
        out.push(frame.snr_db() as u8);
        out.push(split.code());
        out.push(0);
        for v in frame.iq() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode_iqd(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated header: expected {HEADER_LEN} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u16_at(4);
    if version != VERSION {
        return Err(format_err(4, format!("unknown version {version}")));
    }
    let dim = u16_at(6) as usize;
    if dim != FEATURE_DIM {
        return Err(format_err(
            6,
            format!("feature_dim {dim}, expected {FEATURE_DIM}"),
        ));
    }
    let count = u64_at(8);
    let seed = u64_at(16);

    let expected = (count as u128) * FRAME_LEN as u128 + HEADER_LEN as u128;
    if (bytes.len() as u128) < expected {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated: header declares {count} frames ({expected} bytes), file has {} bytes",
                bytes.len()
            ),
        ));
    }
    if (bytes.len() as u128) > expected {
        return Err(format_err(
            expected as usize,
            format!(
                "{} trailing bytes after {count} frames",
                bytes.len() as u128 - expected
            ),
        ));
    }

    let count = count as usize;
    let mut frames = Vec::with_capacity(count);
    let mut split = Vec::with_capacity(count);
    for k in 0..count {
        let base = HEADER_LEN + k * FRAME_LEN;
        let label = ModulationScheme::from_code(bytes[base])
            .ok_or_else(|| format_err(base, format!("label code {} > 7", bytes[base])))?;
        let snr = bytes[base + 1] as i8;
        if snr_index(i32::from(snr)).is_none() {
            return Err(format_err(base + 1, format!("SNR {snr} dB off the grid")));
        }
        let s = Split::from_code(bytes[base + 2])
            .ok_or_else(|| format_err(base + 2, format!("split flag {}", bytes[base + 2])))?;
        if bytes[base + 3] != 0 {
            return Err(format_err(base + 3, "nonzero pad byte"));
        }
        let mut iq = Vec::with_capacity(FEATURE_DIM);
        for j in 0..FEATURE_DIM {
            let o = base + 4 + 4 * j;
            let v = f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(format_err(o, "non-finite feature value"));
            }
            iq.push(v);
        }
        frames.push(IqFrame::new(iq, label, snr)?);
        split.push(s);
    }
    Dataset::new(frames, split, seed)
}

pub fn write_iqd(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_iqd(dataset))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_iqd(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_iqd(&bytes)
}
