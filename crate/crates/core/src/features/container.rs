//! Binary and CSV serialization of feature matrices.
//!
//! Layout, little-endian: 4-byte magic `FEAT`, kind (u8, 0 = melfb,
//! 1 = lnfb), spliced flag (u8), two reserved bytes, frames (u32), dims (u32),
//! sample rate (u32), frame and hop length in ms (f32 each), then
//! `frames x dims` f32 values in row-major order.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"FEAT";
pub const HEADER_LEN: usize = 28;

pub fn write_features(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let too_big = |what: &str| Error::InvalidParameter(format!("{what} exceeds u32"));
    let frames = u32::try_from(f.num_frames()).map_err(|_| too_big("frame count"))?;
    let dims = u32::try_from(f.dims()).map_err(|_| too_big("dimension"))?;
    out.write_all(&FEATURE_MAGIC)?;
    out.write_all(&[
        match f.kind {
            FeatureKind::Melfb => 0,
            FeatureKind::Lnfb => 1,
        },
        f.spliced as u8,
        0,
        0,
    ])?;
    out.write_all(&frames.to_le_bytes())?;
    out.write_all(&dims.to_le_bytes())?;
    out.write_all(&f.sample_rate_hz.to_le_bytes())?;
    out.write_all(&(f.frame_ms as f32).to_le_bytes())?;
    out.write_all(&(f.hop_ms as f32).to_le_bytes())?;
    for v in f.data.iter() {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let malformed = |m: &str| Error::MalformedFeatures(m.into());
    if bytes.len() < HEADER_LEN || bytes[..4] != FEATURE_MAGIC {
        return Err(malformed("missing header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let f32_at = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let kind = match bytes[4] {
        0 => FeatureKind::Melfb,
        1 => FeatureKind::Lnfb,
        _ => return Err(malformed("unknown feature kind")),
    };
    let spliced = match bytes[5] {
        0 => false,
        1 => true,
        _ => return Err(malformed("bad spliced flag")),
    };
    let frames = u32_at(8) as usize;
    let dims = u32_at(12) as usize;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != frames.checked_mul(dims).and_then(|n| n.checked_mul(4)) {
        return Err(malformed("payload size does not match header"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let data = Array2::from_shape_vec((frames, dims), values)
        .map_err(|e| Error::MalformedFeatures(e.to_string()))?;
    Ok(FeatureMatrix {
        data,
        kind,
        spliced,
        sample_rate_hz: u32_at(16),
        frame_ms: f32_at(20) as f64,
        hop_ms: f32_at(24) as f64,
    })
}

/// One row per frame, comma-separated, with a `c0,c1,...` header line.
pub fn write_csv(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..f.dims()).map(|d| format!("c{d}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in f.data.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
