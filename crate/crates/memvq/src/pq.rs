//! Product quantization over g subspaces: zero-padded partitioning, batch
//! compress/decompress, and the exact storage arithmetic for quantized codes.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::vq::{self, Assignments, Codebook};

/// How a d-dimensional vector is split into g contiguous subspaces.
///
/// When g does not divide d, vectors are padded with zeros up to `padded_d`,
/// the smallest multiple of g at or above d. Padding columns take part in
/// assignment distances on compress and are dropped on decompress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspacePartition {
    d: usize,
    g: usize,
    s: usize,
    padded_d: usize,
}

impl SubspacePartition {
    /// Partition a d-dimensional space into g zero-padded subspaces.
    pub fn new(d: usize, g: usize) -> Result<Self> {
        if d == 0 || g == 0 {
            return Err(Error::Config(format!(
                "dimension and subspace count must be positive, got d={d}, g={g}"
            )));
        }
        let padded_d = d.div_ceil(g) * g;
        Ok(Self {
            d,
            g,
            s: padded_d / g,
            padded_d,
        })
    }

    /// Original vector dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of subspaces.
    pub fn subspaces(&self) -> usize {
        self.g
    }

    /// Per-subspace dimension.
    pub fn subspace_dim(&self) -> usize {
        self.s
    }

    /// Dimension after zero padding; always `subspaces * subspace_dim`.
    pub fn padded_dim(&self) -> usize {
        self.padded_d
    }

    /// Column range covered by subspace `j`.
    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        j * self.s..(j + 1) * self.s
    }

    /// Columns of subspace `j` that map back to real (unpadded) dimensions.
    pub(crate) fn real_cols(&self, j: usize) -> usize {
        self.d.saturating_sub(j * self.s).min(self.s)
    }
}

/// The full codec: a partition plus one codebook per subspace, all sharing
/// the same code count C and subspace dimension s.
#[derive(Debug, Clone, PartialEq)]
pub struct PqModel {
    partition: SubspacePartition,
    codebooks: Vec<Codebook>,
}

impl PqModel {
    pub fn new(partition: SubspacePartition, codebooks: Vec<Codebook>) -> Result<Self> {
        if codebooks.len() != partition.subspaces() {
            return Err(Error::Shape(format!(
                "{} codebooks for {} subspaces",
                codebooks.len(),
                partition.subspaces()
            )));
        }
        let c = codebooks[0].code_count();
        for (j, cb) in codebooks.iter().enumerate() {
            if cb.code_count() != c {
                return Err(Error::Shape(format!(
                    "subspace {j} has {} codes, expected {c}",
                    cb.code_count()
                )));
            }
            if cb.dim() != partition.subspace_dim() {
                return Err(Error::Shape(format!(
                    "subspace {j} codebook dimension {} does not match partition s={}",
                    cb.dim(),
                    partition.subspace_dim()
                )));
            }
        }
        Ok(Self { partition, codebooks })
    }

    pub fn partition(&self) -> &SubspacePartition {
        &self.partition
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    /// Codes per subspace, C.
    pub fn code_count(&self) -> usize {
        self.codebooks[0].code_count()
    }
}

/// N×g integer code ids, one row per compressed vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    codes: Array2<u32>,
}

impl CodeMatrix {
    pub fn new(codes: Array2<u32>) -> Self {
        Self { codes }
    }

    /// Number of compressed vectors, N.
    pub fn rows(&self) -> usize {
        self.codes.nrows()
    }

    /// Number of subspaces, g.
    pub fn subspaces(&self) -> usize {
        self.codes.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, u32> {
        self.codes.view()
    }

    /// Check that every entry is a valid id for `model`.
    pub fn validate_for(&self, model: &PqModel) -> Result<()> {
        if self.subspaces() != model.partition().subspaces() {
            return Err(Error::Shape(format!(
                "code matrix has {} columns but model has {} subspaces",
                self.subspaces(),
                model.partition().subspaces()
            )));
        }
        let c = model.code_count() as u32;
        if let Some(bad) = self.codes.iter().find(|&&id| id >= c) {
            return Err(Error::CorruptCodes(format!(
                "code id {bad} out of range for C={c}"
            )));
        }
        Ok(())
    }
}

/// Zero-pad rows of `vectors` out to the partition's padded dimension.
pub(crate) fn pad_rows(vectors: ArrayView2<'_, f32>, partition: &SubspacePartition) -> Array2<f32> {
    let n = vectors.nrows();
    let mut padded = Array2::zeros((n, partition.padded_dim()));
    padded.slice_mut(s![.., ..partition.dim()]).assign(&vectors);
    padded
}

/// Compress each row: zero-pad, split into g contiguous blocks of width s,
/// and assign every block against its subspace codebook.
pub fn compress(model: &PqModel, vectors: ArrayView2<'_, f32>) -> Result<CodeMatrix> {
    let partition = model.partition();
    if vectors.ncols() != partition.dim() {
        return Err(Error::Shape(format!(
            "input has {} columns but model dimension is {}",
            vectors.ncols(),
            partition.dim()
        )));
    }
    let n = vectors.nrows();
    let g = partition.subspaces();
    if n == 0 {
        return Ok(CodeMatrix::new(Array2::zeros((0, g))));
    }
    let padded = pad_rows(vectors, partition);

    let per_subspace: Vec<Assignments> = (0..g)
        .into_par_iter()
        .map(|j| {
            let block = padded.slice(s![.., partition.block(j)]);
            vq::assign(block, &model.codebooks()[j])
        })
        .collect::<Result<_>>()?;

    let mut codes = Array2::zeros((n, g));
    for (j, ids) in per_subspace.iter().enumerate() {
        for (i, &id) in ids.ids().iter().enumerate() {
            codes[[i, j]] = id;
        }
    }
    Ok(CodeMatrix::new(codes))
}

/// Concatenate per-subspace code lookups and drop the padding columns.
pub fn decompress(model: &PqModel, codes: &CodeMatrix) -> Result<Array2<f32>> {
    codes.validate_for(model)?;
    let partition = model.partition();
    let n = codes.rows();
    let mut out = Array2::zeros((n, partition.dim()));
    for j in 0..partition.subspaces() {
        let ids = Assignments::new(codes.view().column(j).to_vec());
        let block = vq::lookup(&model.codebooks()[j], &ids)?;
        let keep = partition.real_cols(j);
        if keep == 0 {
            continue;
        }
        let start = j * partition.subspace_dim();
        out.slice_mut(s![.., start..start + keep])
            .assign(&block.slice(s![.., ..keep]));
    }
    Ok(out)
}

/// Bits needed to encode ids in `[0, c)`: the ceiling of log2(c).
pub fn ceil_log2(c: u64) -> u32 {
    debug_assert!(c >= 1);
    u64::BITS - (c - 1).leading_zeros()
}

/// Storage in bits for N quantized vectors: `g * ceil(log2 C) * N`.
pub fn storage_bits(g: u64, c: u64, n: u64) -> u128 {
    u128::from(g) * u128::from(ceil_log2(c)) * u128::from(n)
}

/// Ratio of uncompressed bits per vector to quantized bits per vector:
/// `(d * bytes_per_scalar * 8) / (g * ceil(log2 C))`.
pub fn compression_rate(d: u64, bytes_per_scalar: u64, g: u64, c: u64) -> f64 {
    (d * bytes_per_scalar * 8) as f64 / (g * u64::from(ceil_log2(c))) as f64
}
