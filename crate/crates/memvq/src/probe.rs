//! Lossless-compressibility probe over code-id streams: serialize codes at
//! their storage width, run DEFLATE at its default level, and report
//! raw/compressed ratios per subspace and for the joint row-major stream.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::memstore;
use crate::pq::CodeMatrix;

/// Recorded alongside ratios so results name the exact compressor used.
pub const COMPRESSOR_LABEL: &str = "deflate/flate2 (default level)";

fn check_width(codes: &CodeMatrix, width_bits: u8) -> Result<()> {
    if !matches!(width_bits, 8 | 16 | 32) {
        return Err(Error::Config(format!(
            "code width must be 8, 16, or 32 bits, got {width_bits}"
        )));
    }
    let limit = 1u64 << width_bits;
    if let Some(&bad) = codes.view().iter().find(|&&id| u64::from(id) >= limit) {
        return Err(Error::CorruptCodes(format!(
            "code id {bad} does not fit in {width_bits} bits"
        )));
    }
    Ok(())
}

fn deflate_ratio(raw: &[u8]) -> Result<f64> {
    if raw.is_empty() {
        return Ok(1.0);
    }
    let mut encoder = DeflateEncoder::new(Vec::new(), Compression::default());
    encoder.write_all(raw)?;
    let compressed = encoder.finish()?;
    Ok(raw.len() as f64 / compressed.len() as f64)
}

/// Compress each subspace's code column independently; one ratio per subspace.
pub fn probe_per_subspace(codes: &CodeMatrix, width_bits: u8) -> Result<Vec<f64>> {
    check_width(codes, width_bits)?;
    (0..codes.subspaces())
        .into_par_iter()
        .map(|j| {
            let mut raw = Vec::with_capacity(codes.rows() * usize::from(width_bits / 8));
            for &id in codes.view().column(j) {
                memstore::encode_id(&mut raw, id, width_bits);
            }
            deflate_ratio(&raw)
        })
        .collect()
}

/// Compress the full row-major code stream as one block.
pub fn probe_joint(codes: &CodeMatrix, width_bits: u8) -> Result<f64> {
    check_width(codes, width_bits)?;
    let mut raw = Vec::with_capacity(codes.rows() * codes.subspaces() * usize::from(width_bits / 8));
    for row in codes.view().rows() {
        for &id in row {
            memstore::encode_id(&mut raw, id, width_bits);
        }
    }
    deflate_ratio(&raw)
}
