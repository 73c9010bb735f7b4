//! Single-subspace vector quantization: codebooks, nearest-code assignment,
//! EMA code learning, D²-sampling initialization, and dead-code reset.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// D² sampling runs over a uniform subsample of at most this many rows.
const INIT_POOL_CAP: usize = 1 << 16;

/// Derive a child seed from a base seed and a salt (splitmix64 step).
pub(crate) fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A set of `C` code vectors for one subspace, stored as a C×s matrix.
///
/// Rows are the lossy dictionary entries; an input vector is represented by
/// the integer id of its nearest row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codes: Array2<f32>,
}

impl Codebook {
    /// Wrap a C×s matrix as a codebook, validating the type invariants.
    pub fn new(codes: Array2<f32>) -> Result<Self> {
        if codes.nrows() == 0 || codes.ncols() == 0 {
            return Err(Error::Shape(format!(
                "codebook must have at least one code and one dimension, got {}x{}",
                codes.nrows(),
                codes.ncols()
            )));
        }
        if !codes.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("codebook entry is NaN or infinite".into()));
        }
        Ok(Self { codes })
    }

    /// Number of codes C.
    pub fn code_count(&self) -> usize {
        self.codes.nrows()
    }

    /// Subspace dimension s.
    pub fn dim(&self) -> usize {
        self.codes.ncols()
    }

    pub fn codes(&self) -> ArrayView2<'_, f32> {
        self.codes.view()
    }

    fn rows(&self) -> &[f32] {
        self.codes
            .as_slice()
            .expect("codebook matrix is owned and row-major")
    }
}

/// Nearest-code ids for a batch, each in `[0, C)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignments {
    ids: Vec<u32>,
}

impl Assignments {
    /// Wrap raw ids. Range validation against a codebook happens at use sites.
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// EMA accumulators for one codebook: per-code assignment-count and
/// assigned-vector-sum averages whose ratio defines the code values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    cluster_size: Array1<f64>,
    cluster_sum: Array2<f64>,
    gamma: f64,
    steps: u64,
}

impl TrainerState {
    /// Fresh state for `codebook`: every count starts at 1 and every sum at
    /// the current code value, so the first update never divides by zero.
    pub fn new(codebook: &Codebook, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!(
                "EMA factor must be strictly between 0 and 1, got {gamma}"
            )));
        }
        let cluster_sum = codebook.codes().map(|&v| f64::from(v));
        Ok(Self {
            cluster_size: Array1::ones(codebook.code_count()),
            cluster_sum,
            gamma,
            steps: 0,
        })
    }

    /// EMA of per-batch assignment counts, one entry per code.
    pub fn cluster_size(&self) -> &Array1<f64> {
        &self.cluster_size
    }

    /// EMA of per-batch assigned-vector sums, one row per code.
    pub fn cluster_sum(&self) -> &Array2<f64> {
        &self.cluster_sum
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of `ema_update` calls applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Fraction of codes whose EMA count is at or above `threshold`.
    pub fn utilization(&self, threshold: f64) -> f64 {
        let alive = self.cluster_size.iter().filter(|&&n| n >= threshold).count();
        alive as f64 / self.cluster_size.len() as f64
    }
}

fn check_batch(vectors: ArrayView2<'_, f32>, dim: usize) -> Result<()> {
    if vectors.ncols() != dim {
        return Err(Error::Shape(format!(
            "batch has {} columns but codebook dimension is {}",
            vectors.ncols(),
            dim
        )));
    }
    if vectors.nrows() == 0 {
        return Err(Error::Shape("batch must contain at least one vector".into()));
    }
    if !vectors.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("batch entry is NaN or infinite".into()));
    }
    Ok(())
}

/// Squared Euclidean distance with f64 accumulation, abandoning the scan as
/// soon as the partial sum reaches `bound`.
#[inline]
fn sq_dist_bounded(a: &[f32], b: &[f32], bound: f64) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let diff = f64::from(x) - f64::from(y);
        acc += diff * diff;
        if acc >= bound {
            return acc;
        }
    }
    acc
}

fn nearest_code(vector: &[f32], codes: &[f32], s: usize) -> (u32, f64) {
    let mut best = f64::INFINITY;
    let mut best_id = 0u32;
    for (i, code) in codes.chunks_exact(s).enumerate() {
        let d = sq_dist_bounded(vector, code, best);
        // Strict < keeps the lowest index on exact ties.
        if d < best {
            best = d;
            best_id = i as u32;
        }
    }
    (best_id, best)
}

/// Assign each row of `vectors` the id of its nearest code by squared
/// Euclidean distance. Ties break to the lowest code index.
pub fn assign(vectors: ArrayView2<'_, f32>, codebook: &Codebook) -> Result<Assignments> {
    check_batch(vectors, codebook.dim())?;
    let s = codebook.dim();
    let codes = codebook.rows();
    let n = vectors.nrows();
    // Below this much scan work, thread dispatch costs more than it saves.
    let parallel = n >= 2 && n * codebook.code_count() * s >= (1 << 18);

    let ids = match vectors.as_slice() {
        Some(flat) => {
            if parallel {
                flat.par_chunks_exact(s)
                    .map(|row| nearest_code(row, codes, s).0)
                    .collect()
            } else {
                flat.chunks_exact(s)
                    .map(|row| nearest_code(row, codes, s).0)
                    .collect()
            }
        }
        None => {
            let rows: Vec<Vec<f32>> = vectors.rows().into_iter().map(|r| r.to_vec()).collect();
            if parallel {
                rows.par_iter().map(|r| nearest_code(r, codes, s).0).collect()
            } else {
                rows.iter().map(|r| nearest_code(r, codes, s).0).collect()
            }
        }
    };
    Ok(Assignments::new(ids))
}

/// Sum over rows of the squared distance to the nearest code.
#[cfg(test)]
pub(crate) fn nearest_sq_dist_sum(vectors: ArrayView2<'_, f32>, codebook: &Codebook) -> f64 {
    let s = codebook.dim();
    let codes = codebook.rows();
    vectors
        .rows()
        .into_iter()
        .map(|row| {
            let owned;
            let r: &[f32] = match row.as_slice() {
                Some(sl) => sl,
                None => {
                    owned = row.to_vec();
                    &owned
                }
            };
            nearest_code(r, codes, s).1
        })
        .sum()
}

/// Look up code values for `ids`, returning one row per id.
pub fn lookup(codebook: &Codebook, ids: &Assignments) -> Result<Array2<f32>> {
    let c = codebook.code_count();
    let s = codebook.dim();
    let mut out = Array2::zeros((ids.len(), s));
    for (mut row, &id) in out.rows_mut().into_iter().zip(ids.ids()) {
        if id as usize >= c {
            return Err(Error::CorruptCodes(format!(
                "code id {id} out of range for codebook with {c} codes"
            )));
        }
        row.assign(&codebook.codes.row(id as usize));
    }
    Ok(out)
}

/// Apply one EMA step: counts and sums decay by `gamma` and absorb the batch
/// statistics, then every code is rewritten as `cluster_sum / cluster_size`.
pub fn ema_update(
    state: &mut TrainerState,
    codebook: &mut Codebook,
    vectors: ArrayView2<'_, f32>,
    ids: &Assignments,
) -> Result<()> {
    let s = codebook.dim();
    let c = codebook.code_count();
    check_batch(vectors, s)?;
    if ids.len() != vectors.nrows() {
        return Err(Error::Shape(format!(
            "{} assignments for a batch of {} vectors",
            ids.len(),
            vectors.nrows()
        )));
    }
    if state.cluster_size.len() != c || state.cluster_sum.ncols() != s {
        return Err(Error::Shape("trainer state does not match codebook".into()));
    }

    let mut counts = vec![0.0f64; c];
    let mut sums = Array2::<f64>::zeros((c, s));
    for (row, &id) in vectors.rows().into_iter().zip(ids.ids()) {
        let i = id as usize;
        if i >= c {
            return Err(Error::CorruptCodes(format!(
                "code id {id} out of range for codebook with {c} codes"
            )));
        }
        counts[i] += 1.0;
        let mut sum_row = sums.row_mut(i);
        for (acc, &v) in sum_row.iter_mut().zip(row) {
            *acc += f64::from(v);
        }
    }

    let gamma = state.gamma;
    for i in 0..c {
        state.cluster_size[i] = gamma * state.cluster_size[i] + (1.0 - gamma) * counts[i];
        let mut sum_row = state.cluster_sum.row_mut(i);
        for (acc, &batch) in sum_row.iter_mut().zip(sums.row(i)) {
            *acc = gamma * *acc + (1.0 - gamma) * batch;
        }
        let size = state.cluster_size[i];
        let mut code_row = codebook.codes.row_mut(i);
        for (code, &sum) in code_row.iter_mut().zip(state.cluster_sum.row(i)) {
            *code = (sum / size) as f32;
        }
    }
    state.steps += 1;
    Ok(())
}

/// Draw an index from `pool` with probability proportional to `weights`,
/// falling back to a uniform draw over `fallback` when all weights vanish.
fn weighted_draw(
    rng: &mut ChaCha8Rng,
    weights: &[f64],
    fallback: impl Fn(&mut ChaCha8Rng) -> usize,
) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return fallback(rng);
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return i;
            }
        }
    }
    // Rounding pushed the target past the final cumulative sum.
    last_positive.expect("total > 0 implies a positive weight")
}

fn subsample_rows(
    sample: ArrayView2<'_, f32>,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> (Array2<f32>, bool) {
    if sample.nrows() <= cap {
        return (sample.to_owned(), false);
    }
    let picked = rand::seq::index::sample(rng, sample.nrows(), cap);
    let mut out = Array2::zeros((cap, sample.ncols()));
    for (mut row, idx) in out.rows_mut().into_iter().zip(picked.iter()) {
        row.assign(&sample.row(idx));
    }
    (out, true)
}

/// k-means++-style codebook initialization by D² sampling.
///
/// The first center is uniform over the sample; each further center is drawn
/// with probability proportional to its squared distance to the nearest
/// already-chosen center. Rows of the result are distinct sample indices.
/// Huge samples are first thinned to a pool of at most 2^16 rows.
pub fn kmeanspp_init(sample: ArrayView2<'_, f32>, c: usize, seed: u64) -> Result<Codebook> {
    if c == 0 {
        return Err(Error::Config("code count must be at least 1".into()));
    }
    if sample.nrows() < c {
        return Err(Error::InsufficientSample {
            needed: c,
            got: sample.nrows(),
        });
    }
    check_batch(sample, sample.ncols())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pool, _) = subsample_rows(sample, INIT_POOL_CAP.max(c), &mut rng);
    let m = pool.nrows();
    let s = pool.ncols();
    let flat = pool.as_slice().expect("owned pool is contiguous");

    let mut chosen = Vec::with_capacity(c);
    let mut taken = vec![false; m];
    let first = rng.random_range(0..m);
    chosen.push(first);
    taken[first] = true;

    // weights[i] = squared distance to the nearest chosen center.
    let mut weights: Vec<f64> = (0..m)
        .map(|i| sq_dist_bounded(&flat[i * s..(i + 1) * s], &flat[first * s..(first + 1) * s], f64::INFINITY))
        .collect();

    while chosen.len() < c {
        let next = weighted_draw(&mut rng, &weights, |r| {
            // All remaining weights are zero (duplicate-heavy sample): keep the
            // distinct-index contract with a uniform draw over unchosen rows.
            let free: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
            free[r.random_range(0..free.len())]
        });
        chosen.push(next);
        taken[next] = true;
        let center = &flat[next * s..(next + 1) * s];
        for (i, w) in weights.iter_mut().enumerate() {
            if *w > 0.0 {
                let d = sq_dist_bounded(&flat[i * s..(i + 1) * s], center, *w);
                if d < *w {
                    *w = d;
                }
            }
        }
        weights[next] = 0.0;
    }

    let mut codes = Array2::zeros((c, s));
    for (mut row, &idx) in codes.rows_mut().into_iter().zip(&chosen) {
        row.assign(&pool.row(idx));
    }
    Codebook::new(codes)
}

/// Replace every code whose EMA count sits below `usage_threshold` with a
/// point drawn from `sample` by D² sampling against the surviving codes;
/// each replacement joins the survivor set before the next draw. Reset codes
/// restart with count 1 and sum equal to the new code value. Returns the
/// number of codes replaced.
pub fn reset_dead_codes(
    state: &mut TrainerState,
    codebook: &mut Codebook,
    sample: ArrayView2<'_, f32>,
    usage_threshold: f64,
    seed: u64,
) -> Result<usize> {
    let s = codebook.dim();
    if sample.nrows() == 0 {
        return Err(Error::Shape("reset sample must contain at least one vector".into()));
    }
    check_batch(sample, s)?;
    if state.cluster_size.len() != codebook.code_count() {
        return Err(Error::Shape("trainer state does not match codebook".into()));
    }

    let dead: Vec<usize> = state
        .cluster_size
        .iter()
        .enumerate()
        .filter(|(_, &n)| n < usage_threshold)
        .map(|(i, _)| i)
        .collect();
    if dead.is_empty() {
        return Ok(0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pool, _) = subsample_rows(sample, INIT_POOL_CAP, &mut rng);
    let m = pool.nrows();
    let flat = pool.as_slice().expect("owned pool is contiguous");

    let survivors: Vec<usize> = (0..codebook.code_count()).filter(|i| !dead.contains(i)).collect();
    let mut weights = vec![f64::INFINITY; m];
    for (i, w) in weights.iter_mut().enumerate() {
        let row = &flat[i * s..(i + 1) * s];
        for &code in &survivors {
            let owned: Vec<f32> = codebook.codes.row(code).iter().copied().collect();
            let d = sq_dist_bounded(row, &owned, *w);
            if d < *w {
                *w = d;
            }
        }
    }

    for &code in &dead {
        let pick = if survivors.is_empty() && weights.iter().all(|w| w.is_infinite()) {
            // No surviving code yet: the first replacement is a uniform draw.
            rng.random_range(0..m)
        } else {
            let finite: Vec<f64> = weights.iter().map(|w| if w.is_finite() { *w } else { 0.0 }).collect();
            weighted_draw(&mut rng, &finite, |r| r.random_range(0..m))
        };
        let value = &flat[pick * s..(pick + 1) * s];
        let mut code_row = codebook.codes.row_mut(code);
        for (dst, &v) in code_row.iter_mut().zip(value) {
            *dst = v;
        }
        state.cluster_size[code] = 1.0;
        let mut sum_row = state.cluster_sum.row_mut(code);
        for (dst, &v) in sum_row.iter_mut().zip(value) {
            *dst = f64::from(v);
        }
        for (i, w) in weights.iter_mut().enumerate() {
            let bound = if w.is_finite() { *w } else { f64::INFINITY };
            let d = sq_dist_bounded(&flat[i * s..(i + 1) * s], value, bound);
            if d < *w {
                *w = d;
            }
        }
    }
    Ok(dead.len())
}
