//! Storage accounting for the three memory regimes: token ids alone (16 bits
//! per token), full token-memory vectors (16 bits per dimension), and
//! product-quantized codes (g*ceil(log2 C) bits per token). Totals are exact
//! integer arithmetic; rendering to human units comes in both decimal and
//! binary conventions.

use crate::error::{Error, Result};
use crate::pq;

/// Exact per-token and corpus-level storage for all three regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub n: u64,
    pub d: u64,
    pub g: u64,
    pub c: u64,
    pub fid_bits_per_token: u64,
    pub lumen_bits_per_token: u64,
    pub lumen_vq_bits_per_token: u64,
    pub fid_total_bits: u128,
    pub lumen_total_bits: u128,
    pub lumen_vq_total_bits: u128,
    pub fid_total_bytes: u128,
    pub lumen_total_bytes: u128,
    pub lumen_vq_total_bytes: u128,
    /// Per-token vector bits over per-token quantized bits.
    pub compression_rate_vs_lumen: f64,
}

/// Compute exact storage for a corpus of N tokens at dimension d, quantized
/// with g subspaces and C codes per subspace.
pub fn storage_report(n: u64, d: u64, g: u64, c: u64) -> Result<StorageReport> {
    if n == 0 || d == 0 || g == 0 || c == 0 {
        return Err(Error::Config(format!(
            "all storage parameters must be positive, got N={n}, d={d}, g={g}, C={c}"
        )));
    }
    let fid_bits_per_token = 16u64;
    let lumen_bits_per_token = 16 * d;
    let lumen_vq_bits_per_token = g * u64::from(pq::ceil_log2(c));

    let fid_total_bits = u128::from(fid_bits_per_token) * u128::from(n);
    let lumen_total_bits = u128::from(lumen_bits_per_token) * u128::from(n);
    let lumen_vq_total_bits = u128::from(lumen_vq_bits_per_token) * u128::from(n);

    Ok(StorageReport {
        n,
        d,
        g,
        c,
        fid_bits_per_token,
        lumen_bits_per_token,
        lumen_vq_bits_per_token,
        fid_total_bits,
        lumen_total_bits,
        lumen_vq_total_bits,
        fid_total_bytes: fid_total_bits.div_ceil(8),
        lumen_total_bytes: lumen_total_bits.div_ceil(8),
        lumen_vq_total_bytes: lumen_vq_total_bits.div_ceil(8),
        compression_rate_vs_lumen: lumen_bits_per_token as f64 / lumen_vq_bits_per_token as f64,
    })
}

/// Unit convention for human-readable byte counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitConvention {
    /// Powers of 1000: KB, MB, GB, ...
    Decimal,
    /// Powers of 1024: KiB, MiB, GiB, ...
    Binary,
}

/// Render a byte count with a unit prefix at three significant digits.
pub fn render_human(bytes: u128, convention: UnitConvention) -> String {
    if bytes == 0 {
        return "0 B".to_string();
    }
    let (base, units): (f64, &[&str]) = match convention {
        UnitConvention::Decimal => (1e3, &["B", "KB", "MB", "GB", "TB", "PB", "EB", "ZB", "YB"]),
        UnitConvention::Binary => (
            1024.0,
            &["B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB", "ZiB", "YiB"],
        ),
    };
    let mut value = bytes as f64;
    let mut k = 0;
    while value >= base && k + 1 < units.len() {
        value /= base;
        k += 1;
    }
    let decimals = |v: f64| if v < 10.0 { 2 } else if v < 100.0 { 1 } else { 0 };
    let mut dp = decimals(value);
    let scale = 10f64.powi(dp as i32);
    // Rounding can carry across the prefix boundary (999.9 KB → 1.00 MB).
    if (value * scale).round() / scale >= base && k + 1 < units.len() {
        value /= base;
        k += 1;
        dp = decimals(value);
    }
    format!("{value:.dp$} {}", units[k])
}
