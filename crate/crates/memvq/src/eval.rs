//! Reconstruction-error evaluation: MSE through the codec, two zero-fill
//! truncation baselines, and a quality/compression sweep over codec shapes.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pq::{self, PqModel};
use crate::training::{self, TrainConfig};

/// Uncompressed scalars are 16-bit; all compression rates are quoted
/// against that representation.
pub const BYTES_PER_SCALAR: u64 = 2;

/// Mean squared elementwise error of `decompress(compress(vectors))`.
pub fn recon_mse(model: &PqModel, vectors: ArrayView2<'_, f32>) -> Result<f64> {
    let codes = pq::compress(model, vectors)?;
    let recon = pq::decompress(model, &codes)?;
    if vectors.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0f64;
    for (&a, &b) in vectors.iter().zip(recon.iter()) {
        let diff = f64::from(a) - f64::from(b);
        sum += diff * diff;
    }
    Ok(sum / vectors.len() as f64)
}

/// Baseline that keeps the first `keep` coordinates of every vector and
/// zeroes the rest. Returns `(rate, mse)` with `rate = d / keep`.
pub fn baseline_dim_truncation(vectors: ArrayView2<'_, f32>, keep: usize) -> Result<(f64, f64)> {
    let d = vectors.ncols();
    if keep == 0 || keep > d {
        return Err(Error::Config(format!(
            "keep must lie in 1..={d}, got {keep}"
        )));
    }
    let rate = d as f64 / keep as f64;
    if vectors.is_empty() {
        return Ok((rate, 0.0));
    }
    let mut sum = 0.0f64;
    for row in vectors.rows() {
        for &v in row.iter().skip(keep) {
            sum += f64::from(v) * f64::from(v);
        }
    }
    Ok((rate, sum / vectors.len() as f64))
}

/// Baseline that keeps the first `keep_k` token vectors of each passage and
/// zeroes the remainder. Passages shorter than `keep_k` are kept whole.
/// Returns `(rate, mse)` with `rate = total tokens / kept tokens`.
pub fn baseline_token_truncation(
    passages: &[Array2<f32>],
    keep_k: usize,
) -> Result<(f64, f64)> {
    if keep_k == 0 {
        return Err(Error::Config("keep_k must be positive".into()));
    }
    if passages.is_empty() {
        return Err(Error::Config("at least one passage is required".into()));
    }
    let d = passages[0].ncols();
    let mut total_tokens = 0u64;
    let mut kept_tokens = 0u64;
    let mut sum = 0.0f64;
    let mut elements = 0u64;
    for (i, passage) in passages.iter().enumerate() {
        if passage.ncols() != d {
            return Err(Error::Shape(format!(
                "passage {i} has dimension {}, expected {d}",
                passage.ncols()
            )));
        }
        let t = passage.nrows();
        total_tokens += t as u64;
        kept_tokens += t.min(keep_k) as u64;
        elements += (t * d) as u64;
        for row in passage.rows().into_iter().skip(keep_k) {
            for &v in row {
                sum += f64::from(v) * f64::from(v);
            }
        }
    }
    if total_tokens == 0 {
        return Err(Error::Config("passages contain no tokens".into()));
    }
    let rate = total_tokens as f64 / kept_tokens as f64;
    Ok((rate, sum / elements as f64))
}

/// One sweep configuration and its outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub g: usize,
    pub c: usize,
    pub rate: f64,
    pub mse: f64,
}

/// Train one codec per (g, C) pair — all from the same seed — and report
/// each pair's compression rate and reconstruction MSE.
pub fn sweep(
    vectors: ArrayView2<'_, f32>,
    g_list: &[usize],
    c_list: &[usize],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if g_list.is_empty() || c_list.is_empty() {
        return Err(Error::Config("sweep lists must be nonempty".into()));
    }
    let d = vectors.ncols() as u64;
    let pairs: Vec<(usize, usize)> = g_list
        .iter()
        .flat_map(|&g| c_list.iter().map(move |&c| (g, c)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(g, c)| {
            let run_config = TrainConfig { g, c, ..*config };
            let (model, _) = training::fit_matrix(vectors, &run_config)?;
            Ok(SweepRow {
                g,
                c,
                rate: pq::compression_rate(d, BYTES_PER_SCALAR, g as u64, c as u64),
                mse: recon_mse(&model, vectors)?,
            })
        })
        .collect()
}
