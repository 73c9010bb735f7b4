//! Codec training: per-subspace kmeans++ initialization, EMA codebook
//! updates with per-epoch dead-code resets, the straight-through gradient
//! contract, and a toy encoder/quantizer/decoder pipeline for joint-training
//! ablations.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pq::{self, PqModel, SubspacePartition};
use crate::vq::{self, Assignments, Codebook, TrainerState};

// Salt namespaces keep derived seeds disjoint across uses of the same base.
const SALT_SHUFFLE: u64 = 1 << 40;
const SALT_RESET: u64 = 2 << 40;
const SALT_RANDOM_INIT: u64 = 3 << 40;
const SALT_TOY: u64 = 4 << 40;

const TOY_LR: f32 = 1e-2;

/// Codec shape and training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub g: usize,
    pub c: usize,
    /// EMA decay for cluster statistics.
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Codes whose EMA cluster size falls below this are reset each epoch.
    pub usage_threshold: f64,
    pub seed: u64,
    /// Weight of the commitment term; 0 disables it entirely.
    pub commitment_beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            g: 256,
            c: 65536,
            gamma: 0.999,
            epochs: 10,
            batch_size: 1024,
            usage_threshold: 0.1,
            seed: 0,
            commitment_beta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g == 0 || self.c == 0 {
            return Err(Error::Config(format!(
                "codec shape must be positive, got g={}, C={}",
                self.g, self.c
            )));
        }
        if self.c > u32::MAX as usize {
            return Err(Error::Config(format!("C={} exceeds the 32-bit id space", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !self.usage_threshold.is_finite() || self.usage_threshold < 0.0 {
            return Err(Error::Config(format!(
                "usage threshold must be a nonnegative finite value, got {}",
                self.usage_threshold
            )));
        }
        if !self.commitment_beta.is_finite() || self.commitment_beta < 0.0 {
            return Err(Error::Config(format!(
                "commitment beta must be a nonnegative finite value, got {}",
                self.commitment_beta
            )));
        }
        Ok(())
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Corpus reconstruction MSE after each epoch, over real (unpadded) columns.
    pub epoch_mse: Vec<f64>,
    /// Fraction of codes with cluster size at or above the usage threshold.
    pub epoch_utilization: Vec<f64>,
    /// Total dead codes replaced across all subspaces and epochs.
    pub codes_reset: u64,
}

/// Train a codec from a stream of d-dimensional vectors. The stream is
/// materialized once; epochs then revisit it in shuffled batches.
pub fn fit<I>(corpus: I, d: usize, config: &TrainConfig) -> Result<(PqModel, FitReport)>
where
    I: IntoIterator<Item = Result<Vec<f32>>>,
{
    if d == 0 {
        return Err(Error::Config("corpus dimension must be positive".into()));
    }
    let mut values = Vec::new();
    let mut n = 0usize;
    for row in corpus {
        let row = row?;
        if row.len() != d {
            return Err(Error::Shape(format!(
                "corpus row {n} has {} values, expected {d}",
                row.len()
            )));
        }
        values.extend_from_slice(&row);
        n += 1;
    }
    let matrix = Array2::from_shape_vec((n, d), values)
        .expect("row lengths were checked individually");
    fit_matrix(matrix.view(), config)
}

/// Train a codec over an in-memory N×d corpus.
///
/// Per subspace: kmeans++ init on the corpus block, then per epoch assign and
/// EMA-update over shuffled batches followed by one dead-code reset pass.
/// Subspaces train independently in parallel; all randomness derives from
/// `config.seed`, so equal inputs give bit-identical models.
pub fn fit_matrix(
    vectors: ArrayView2<'_, f32>,
    config: &TrainConfig,
) -> Result<(PqModel, FitReport)> {
    config.validate()?;
    let n = vectors.nrows();
    if n < config.c {
        return Err(Error::InsufficientSample {
            needed: config.c,
            got: n,
        });
    }
    let partition = SubspacePartition::new(vectors.ncols(), config.g)?;
    let padded = pq::pad_rows(vectors, &partition);
    let g = partition.subspaces();
    let s = partition.subspace_dim();

    // One batch order per epoch, shared by every subspace.
    let orders: Vec<Vec<usize>> = (0..config.epochs)
        .map(|e| {
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(vq::mix_seed(config.seed, SALT_SHUFFLE + e as u64));
            idx.shuffle(&mut rng);
            idx
        })
        .collect();

    struct SubspaceRun {
        codebook: Codebook,
        sse: Vec<f64>,
        used: Vec<f64>,
        resets: u64,
    }

    let runs: Vec<SubspaceRun> = (0..g)
        .into_par_iter()
        .map(|j| -> Result<SubspaceRun> {
            let block = padded.slice(s![.., partition.block(j)]);
            let init_seed = vq::mix_seed(config.seed, j as u64);
            let mut codebook = vq::kmeanspp_init(block, config.c, init_seed)?;
            let mut state = TrainerState::new(&codebook, config.gamma)?;
            let mut sse = Vec::with_capacity(config.epochs);
            let mut used = Vec::with_capacity(config.epochs);
            let mut resets = 0u64;
            let real = partition.real_cols(j);
            for (e, order) in orders.iter().enumerate() {
                for chunk in order.chunks(config.batch_size) {
                    let mut batch = Array2::zeros((chunk.len(), s));
                    for (bi, &row) in chunk.iter().enumerate() {
                        batch.row_mut(bi).assign(&block.row(row));
                    }
                    let ids = vq::assign(batch.view(), &codebook)?;
                    vq::ema_update(&mut state, &mut codebook, batch.view(), &ids)?;
                }
                resets += vq::reset_dead_codes(
                    &mut state,
                    &mut codebook,
                    block,
                    config.usage_threshold,
                    vq::mix_seed(init_seed, SALT_RESET + e as u64),
                )? as u64;
                sse.push(subspace_sse(block, &codebook, real)?);
                used.push(state.utilization(config.usage_threshold));
            }
            Ok(SubspaceRun {
                codebook,
                sse,
                used,
                resets,
            })
        })
        .collect::<Result<_>>()?;

    let mut codebooks = Vec::with_capacity(g);
    let mut epoch_mse = vec![0.0; config.epochs];
    let mut epoch_utilization = vec![0.0; config.epochs];
    let mut codes_reset = 0u64;
    for run in runs {
        for (e, v) in run.sse.iter().enumerate() {
            epoch_mse[e] += v;
        }
        for (e, v) in run.used.iter().enumerate() {
            epoch_utilization[e] += v;
        }
        codes_reset += run.resets;
        codebooks.push(run.codebook);
    }
    let elements = (n * partition.dim()) as f64;
    for v in &mut epoch_mse {
        *v /= elements;
    }
    for v in &mut epoch_utilization {
        *v /= g as f64;
    }
    let model = PqModel::new(partition, codebooks)?;
    Ok((
        model,
        FitReport {
            epoch_mse,
            epoch_utilization,
            codes_reset,
        },
    ))
}

/// Sum of squared reconstruction error for one subspace block, counting only
/// its first `real_cols` (unpadded) columns.
fn subspace_sse(block: ArrayView2<'_, f32>, codebook: &Codebook, real_cols: usize) -> Result<f64> {
    if real_cols == 0 {
        return Ok(0.0);
    }
    let ids = vq::assign(block, codebook)?;
    let recon = vq::lookup(codebook, &ids)?;
    let mut sum = 0.0f64;
    for (row, rec) in block.rows().into_iter().zip(recon.rows()) {
        for k in 0..real_cols {
            let diff = f64::from(row[k]) - f64::from(rec[k]);
            sum += diff * diff;
        }
    }
    Ok(sum)
}

/// Untrained baseline: each subspace codebook is a uniform random sample of
/// C corpus rows (no kmeans++, no EMA updates).
pub fn random_codebook_model(
    vectors: ArrayView2<'_, f32>,
    g: usize,
    c: usize,
    seed: u64,
) -> Result<PqModel> {
    if c == 0 {
        return Err(Error::Config("C must be positive".into()));
    }
    let n = vectors.nrows();
    if n < c {
        return Err(Error::InsufficientSample { needed: c, got: n });
    }
    let partition = SubspacePartition::new(vectors.ncols(), g)?;
    let padded = pq::pad_rows(vectors, &partition);
    let s = partition.subspace_dim();
    let codebooks = (0..g)
        .map(|j| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(vq::mix_seed(seed, SALT_RANDOM_INIT + j as u64));
            let picks = rand::seq::index::sample(&mut rng, n, c);
            let block = padded.slice(s![.., partition.block(j)]);
            let mut codes = Array2::zeros((c, s));
            for (k, idx) in picks.into_iter().enumerate() {
                codes.row_mut(k).assign(&block.row(idx));
            }
            Codebook::new(codes)
        })
        .collect::<Result<Vec<_>>>()?;
    PqModel::new(partition, codebooks)
}

/// Straight-through gradient of quantization: the upstream gradient passes
/// through unchanged.
pub fn st_backward(upstream: ArrayView2<'_, f32>) -> Array2<f32> {
    upstream.to_owned()
}

/// `beta` times the mean over rows of the squared distance between each
/// vector and its quantized counterpart. Zero beta short-circuits to zero.
pub fn commitment_loss(
    vectors: ArrayView2<'_, f32>,
    quantized: ArrayView2<'_, f32>,
    beta: f64,
) -> Result<f64> {
    if vectors.shape() != quantized.shape() {
        return Err(Error::Shape(format!(
            "vectors {:?} and quantized {:?} differ in shape",
            vectors.shape(),
            quantized.shape()
        )));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Config(format!(
            "commitment beta must be a nonnegative finite value, got {beta}"
        )));
    }
    if beta == 0.0 || vectors.nrows() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    for (v, q) in vectors.rows().into_iter().zip(quantized.rows()) {
        for (&a, &b) in v.iter().zip(q.iter()) {
            let diff = f64::from(a) - f64::from(b);
            total += diff * diff;
        }
    }
    Ok(beta * total / vectors.nrows() as f64)
}

/// Which parts of the toy pipeline receive gradient updates. Codebooks train
/// by EMA in every mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMode {
    /// Update encoder and decoder.
    Joint,
    /// Update the decoder only.
    FrozenEncoder,
    /// Update neither linear map.
    FrozenAll,
}

/// Loss trajectory of a toy run: the loss before any step, then the full-
/// dataset loss after each optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainRun {
    pub initial_loss: f64,
    pub losses: Vec<f64>,
}

/// Train a linear encoder → PQ quantizer (straight-through) → linear decoder
/// pipeline on squared error with handwritten gradients. Codebooks update by
/// EMA on every batch regardless of mode; the linear maps update per `mode`
/// with plain gradient descent.
pub fn toy_joint_train(
    inputs: ArrayView2<'_, f32>,
    targets: ArrayView2<'_, f32>,
    hidden: usize,
    config: &TrainConfig,
    mode: ToyMode,
) -> Result<ToyTrainRun> {
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::Shape("toy dataset must be nonempty".into()));
    }
    if targets.nrows() != n {
        return Err(Error::Shape(format!(
            "{} inputs but {} targets",
            n,
            targets.nrows()
        )));
    }
    let p = inputs.ncols();
    let q = targets.ncols();
    if p == 0 || q == 0 || hidden == 0 {
        return Err(Error::Shape(
            "input, target, and hidden dimensions must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(vq::mix_seed(config.seed, SALT_TOY));
    let we_scale = (1.0 / p as f32).sqrt();
    let mut w_e =
        Array2::from_shape_fn((hidden, p), |_| (rng.random::<f32>() * 2.0 - 1.0) * we_scale);
    let wd_scale = (1.0 / hidden as f32).sqrt();
    let mut w_d =
        Array2::from_shape_fn((q, hidden), |_| (rng.random::<f32>() * 2.0 - 1.0) * wd_scale);

    let partition = SubspacePartition::new(hidden, config.g)?;
    let z0 = inputs.dot(&w_e.t());
    let z0_padded = pq::pad_rows(z0.view(), &partition);
    let mut codebooks = Vec::with_capacity(config.g);
    let mut states = Vec::with_capacity(config.g);
    for j in 0..config.g {
        let block = z0_padded.slice(s![.., partition.block(j)]);
        let cb = vq::kmeanspp_init(
            block,
            config.c,
            vq::mix_seed(config.seed, SALT_TOY + 1 + j as u64),
        )?;
        states.push(TrainerState::new(&cb, config.gamma)?);
        codebooks.push(cb);
    }

    // Quantize rows of z: returns real-width codes plus the padded input and
    // per-subspace assignments (both needed for EMA updates).
    let quantize = |codebooks: &[Codebook],
                    z: ArrayView2<'_, f32>|
     -> Result<(Array2<f32>, Array2<f32>, Vec<Assignments>)> {
        let zp = pq::pad_rows(z, &partition);
        let mut qp = Array2::zeros(zp.raw_dim());
        let mut assignments = Vec::with_capacity(codebooks.len());
        for (j, cb) in codebooks.iter().enumerate() {
            let block = zp.slice(s![.., partition.block(j)]);
            let ids = vq::assign(block, cb)?;
            let rec = vq::lookup(cb, &ids)?;
            qp.slice_mut(s![.., partition.block(j)]).assign(&rec);
            assignments.push(ids);
        }
        let qz = qp.slice(s![.., ..hidden]).to_owned();
        Ok((qz, zp, assignments))
    };

    let dataset_loss = |codebooks: &[Codebook], w_e: &Array2<f32>, w_d: &Array2<f32>| -> Result<f64> {
        let z = inputs.dot(&w_e.t());
        let (qz, _, _) = quantize(codebooks, z.view())?;
        let yhat = qz.dot(&w_d.t());
        let mut recon = 0.0f64;
        for (&a, &b) in yhat.iter().zip(targets.iter()) {
            let diff = f64::from(a) - f64::from(b);
            recon += diff * diff;
        }
        recon /= (n * q) as f64;
        Ok(recon + commitment_loss(z.view(), qz.view(), config.commitment_beta)?)
    };

    let initial_loss = dataset_loss(&codebooks, &w_e, &w_d)?;
    let mut losses = Vec::new();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(vq::mix_seed(
            config.seed,
            SALT_TOY + SALT_SHUFFLE + epoch as u64,
        ));
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(config.batch_size) {
            let m = chunk.len();
            let mut x = Array2::zeros((m, p));
            let mut y = Array2::zeros((m, q));
            for (bi, &row) in chunk.iter().enumerate() {
                x.row_mut(bi).assign(&inputs.row(row));
                y.row_mut(bi).assign(&targets.row(row));
            }

            let z = x.dot(&w_e.t());
            let (qz, zp, assignments) = quantize(&codebooks, z.view())?;
            let yhat = qz.dot(&w_d.t());

            let grad_y = (&yhat - &y) * (2.0 / (m * q) as f32);
            let grad_wd = grad_y.t().dot(&qz);
            let grad_qz = grad_y.dot(&w_d);
            let mut grad_z = st_backward(grad_qz.view());
            if config.commitment_beta > 0.0 {
                let commit = (&z - &qz) * (2.0 * config.commitment_beta as f32 / m as f32);
                grad_z += &commit;
            }
            let grad_we = grad_z.t().dot(&x);

            for (j, ids) in assignments.iter().enumerate() {
                let block = zp.slice(s![.., partition.block(j)]);
                vq::ema_update(&mut states[j], &mut codebooks[j], block, ids)?;
            }
            if mode != ToyMode::FrozenAll {
                w_d -= &(grad_wd * TOY_LR);
            }
            if mode == ToyMode::Joint {
                w_e -= &(grad_we * TOY_LR);
            }

            losses.push(dataset_loss(&codebooks, &w_e, &w_d)?);
        }
    }

    Ok(ToyTrainRun {
        initial_loss,
        losses,
    })
}
