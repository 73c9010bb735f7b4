//! Acceptance gate: one test per release criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (visible with `cargo test --test acceptance --
//! --nocapture`). Every check is an independent oracle: brute-force scans,
//! big-integer arithmetic, scalar recomputation, or finite differences.

use std::process::Command;

use ndarray::{concatenate, Array2, Axis};
use num_bigint::BigUint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use memvq::pq::{self, CodeMatrix, PqModel, SubspacePartition};
use memvq::training::{self, ToyMode, TrainConfig};
use memvq::vq::{self, Codebook, TrainerState};
use memvq::{costcalc, eval, memstore, probe};

fn check(name: &str, result: Result<(), String>) {
    match result {
        Ok(()) => println!("[PASS] {name}"),
        Err(why) => {
            println!("[FAIL] {name}: {why}");
            panic!("{name}: {why}");
        }
    }
}

fn fail(why: impl Into<String>) -> Result<(), String> {
    Err(why.into())
}

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f32 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

/// Gaussian mixture: `components` centers uniform in [-5, 5]^d, noise 0.3.
fn mixture(seed: u64, n: usize, d: usize, components: usize) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers =
        Array2::from_shape_fn((components, d), |_| rng.random::<f32>() * 10.0 - 5.0);
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let k = rng.random_range(0..components);
        for j in 0..d {
            out[[i, j]] = centers[[k, j]] + 0.3 * normal(&mut rng);
        }
    }
    out
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f32, hi: f32) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

// -- 1 ----------------------------------------------------------------------

#[test]
fn c01_storage_arithmetic() {
    check("criterion 01 — reference corpus storage costs are exact", (|| {
        let output = Command::new(env!("CARGO_BIN_EXE_memvq"))
            .args([
                "cost",
                "--tokens",
                "4000000000",
                "--dim",
                "4096",
                "--subspaces",
                "256",
                "--codes",
                "65536",
            ])
            .output()
            .map_err(|e| format!("could not run the CLI: {e}"))?;
        if !output.status.success() {
            return fail(format!("cost exited with {:?}", output.status.code()));
        }
        let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
        for needle in [
            "per-token bits: 16 / 65536 / 4096 (FiD / LUMEN / LUMEN-VQ)",
            "per-token: 2 B / 8192 B / 512 B",
            "total FiD: 8000000000 B",
            "total LUMEN: 32768000000000 B",
            "total LUMEN-VQ: 2048000000000 B",
            "compression rate vs LUMEN: 16",
        ] {
            if !stdout.contains(needle) {
                return fail(format!("missing `{needle}` in:\n{stdout}"));
            }
        }
        Ok(())
    })());
}

// -- 2 ----------------------------------------------------------------------

/// Smallest w with 2^w >= c, recomputed with big integers only.
fn big_ceil_log2(c: u64) -> u32 {
    let target = BigUint::from(c);
    let mut w = 0u32;
    while (BigUint::from(1u8) << w) < target {
        w += 1;
    }
    w
}

#[test]
fn c02_formula_coverage() {
    check("criterion 02 — storage formulas match big-integer recomputation on 1000 tuples", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..1000u32 {
            let n = rng.random_range(1..=1u64 << 48);
            let d = rng.random_range(1..=1u64 << 20);
            let g = rng.random_range(1..=1u64 << 16);
            let c = rng.random_range(2..=1u64 << 32);
            let w = big_ceil_log2(c);

            let expected_vq = BigUint::from(g) * w * n;
            let got_vq = BigUint::from(pq::storage_bits(g, c, n));
            if got_vq != expected_vq {
                return fail(format!(
                    "trial {trial}: storage_bits(g={g}, C={c}, N={n}) = {got_vq}, expected {expected_vq}"
                ));
            }

            let report = costcalc::storage_report(n, d, g, c).map_err(|e| e.to_string())?;
            let expected_fid = BigUint::from(16u8) * n;
            let expected_lumen = BigUint::from(16u8) * d * n;
            if BigUint::from(report.fid_total_bits) != expected_fid
                || BigUint::from(report.lumen_total_bits) != expected_lumen
                || BigUint::from(report.lumen_vq_total_bits) != expected_vq
            {
                return fail(format!(
                    "trial {trial}: totals for (N={n}, d={d}, g={g}, C={c}) disagree with 16N / 16dN / gwN"
                ));
            }

            let expected_rate = (16 * d) as f64 / (g * u64::from(w)) as f64;
            for (label, got) in [
                ("storage_report", report.compression_rate_vs_lumen),
                ("compression_rate", pq::compression_rate(d, 2, g, c)),
            ] {
                if ((got - expected_rate) / expected_rate).abs() > 1e-12 {
                    return fail(format!(
                        "trial {trial}: {label} rate {got} vs expected {expected_rate}"
                    ));
                }
            }
        }
        Ok(())
    })());
}

// -- 3 ----------------------------------------------------------------------

#[test]
fn c03_codec_against_brute_force() {
    check("criterion 03 — compress/decompress agree with the brute-force oracle on 500 instances", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..500u32 {
            let d = rng.random_range(1..=32usize);
            let g = rng.random_range(1..=8usize);
            let c = rng.random_range(1..=64usize);
            let b = rng.random_range(1..=64usize);

            let partition = SubspacePartition::new(d, g).map_err(|e| e.to_string())?;
            let s = partition.subspace_dim();
            let codebooks: Vec<Codebook> = (0..g)
                .map(|_| Codebook::new(uniform_matrix(&mut rng, c, s, -1.0, 1.0)).unwrap())
                .collect();
            let model = PqModel::new(partition, codebooks).map_err(|e| e.to_string())?;
            let vectors = uniform_matrix(&mut rng, b, d, -1.0, 1.0);

            let codes = pq::compress(&model, vectors.view()).map_err(|e| e.to_string())?;
            let recon = pq::decompress(&model, &codes).map_err(|e| e.to_string())?;

            let partition = model.partition();
            for row in 0..b {
                let mut padded = vec![0.0f32; partition.padded_dim()];
                for col in 0..d {
                    padded[col] = vectors[[row, col]];
                }
                for j in 0..g {
                    let block = &padded[partition.block(j)];
                    let mut best = f64::INFINITY;
                    let mut best_id = 0u32;
                    for (i, code) in model.codebooks()[j].codes().rows().into_iter().enumerate()
                    {
                        let dist: f64 = block
                            .iter()
                            .zip(code.iter())
                            .map(|(&x, &y)| {
                                let diff = f64::from(x) - f64::from(y);
                                diff * diff
                            })
                            .sum();
                        if dist < best {
                            best = dist;
                            best_id = i as u32;
                        }
                    }
                    let got = codes.view()[[row, j]];
                    if got != best_id {
                        return fail(format!(
                            "trial {trial}: row {row} subspace {j} assigned {got}, oracle {best_id}"
                        ));
                    }
                    let code = model.codebooks()[j].codes();
                    for k in 0..partition.block(j).len() {
                        let col = j * partition.subspace_dim() + k;
                        if col >= d {
                            break;
                        }
                        if recon[[row, col]] != code[[best_id as usize, k]] {
                            return fail(format!(
                                "trial {trial}: reconstruction at ({row}, {col}) is not the code entry"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    })());
}

// -- 4 ----------------------------------------------------------------------

#[test]
fn c04_ema_oracle() {
    check("criterion 04 — EMA updates match scalar recomputation and converge on a stationary stream", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (c, s, gamma) = (8usize, 3usize, 0.95f64);
        let mut codebook =
            Codebook::new(uniform_matrix(&mut rng, c, s, -1.0, 1.0)).unwrap();
        let mut state = TrainerState::new(&codebook, gamma).map_err(|e| e.to_string())?;

        let mut size = vec![1.0f64; c];
        let mut sum: Vec<Vec<f64>> = codebook
            .codes()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| f64::from(v)).collect())
            .collect();

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        for step in 0..20u32 {
            let batch = uniform_matrix(&mut rng, 32, s, -1.0, 1.0);
            let ids = vq::assign(batch.view(), &codebook).map_err(|e| e.to_string())?;

            let mut counts = vec![0.0f64; c];
            let mut batch_sums = vec![vec![0.0f64; s]; c];
            for (row, &id) in batch.rows().into_iter().zip(ids.ids()) {
                counts[id as usize] += 1.0;
                for (acc, &v) in batch_sums[id as usize].iter_mut().zip(row.iter()) {
                    *acc += f64::from(v);
                }
            }
            for i in 0..c {
                size[i] = gamma * size[i] + (1.0 - gamma) * counts[i];
                for k in 0..s {
                    sum[i][k] = gamma * sum[i][k] + (1.0 - gamma) * batch_sums[i][k];
                }
            }

            vq::ema_update(&mut state, &mut codebook, batch.view(), &ids)
                .map_err(|e| e.to_string())?;

            for i in 0..c {
                if rel(state.cluster_size()[i], size[i]) > 1e-6 {
                    return fail(format!(
                        "step {step}: cluster size {i}: {} vs oracle {}",
                        state.cluster_size()[i],
                        size[i]
                    ));
                }
                for k in 0..s {
                    if rel(state.cluster_sum()[[i, k]], sum[i][k]) > 1e-6 {
                        return fail(format!("step {step}: cluster sum ({i}, {k}) diverged"));
                    }
                    let expected_code = sum[i][k] / size[i];
                    if rel(f64::from(codebook.codes()[[i, k]]), expected_code) > 1e-6 {
                        return fail(format!("step {step}: code ({i}, {k}) diverged"));
                    }
                }
            }
        }

        // Stationary stream: a single code fed the same batch for 10^4 steps
        // must land on the batch mean.
        let batch = uniform_matrix(&mut rng, 256, s, 0.0, 1.0);
        let mut codebook = Codebook::new(Array2::ones((1, s))).unwrap();
        let mut state = TrainerState::new(&codebook, 0.999).map_err(|e| e.to_string())?;
        let ids = vq::assign(batch.view(), &codebook).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            vq::ema_update(&mut state, &mut codebook, batch.view(), &ids)
                .map_err(|e| e.to_string())?;
        }
        let distance: f64 = (0..s)
            .map(|k| {
                let mean: f64 =
                    batch.column(k).iter().map(|&v| f64::from(v)).sum::<f64>() / 256.0;
                (f64::from(codebook.codes()[[0, k]]) - mean).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if distance >= 1e-6 {
            return fail(format!("stationary code is {distance} from the batch mean"));
        }
        Ok(())
    })());
}

// -- 5 ----------------------------------------------------------------------

#[test]
fn c05_training_efficacy() {
    check("criterion 05 — trained codec halves the frozen-random-codebook MSE on 9 of 10 seeds", (|| {
        let mut wins = 0;
        let mut ratios = Vec::new();
        for seed in 0..10u64 {
            let data = mixture(500 + seed, 2000, 8, 10);
            let config = TrainConfig {
                g: 2,
                c: 16,
                epochs: 50,
                batch_size: 256,
                seed,
                ..TrainConfig::default()
            };
            let (model, _) =
                training::fit_matrix(data.view(), &config).map_err(|e| e.to_string())?;
            let trained = eval::recon_mse(&model, data.view()).map_err(|e| e.to_string())?;
            let frozen_model = training::random_codebook_model(data.view(), 2, 16, seed)
                .map_err(|e| e.to_string())?;
            let frozen =
                eval::recon_mse(&frozen_model, data.view()).map_err(|e| e.to_string())?;
            ratios.push(trained / frozen);
            if trained <= 0.5 * frozen {
                wins += 1;
            }
        }
        if wins < 9 {
            return fail(format!("only {wins}/10 seeds met the 0.5x margin: {ratios:?}"));
        }
        Ok(())
    })());
}

// -- 6 ----------------------------------------------------------------------

#[test]
fn c06_dead_code_reset() {
    check("criterion 06 — reset recovers utilization and reaches a newly injected cluster on 99 of 100 seeds", (|| {
        let mut successes = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            // First cluster: 8 distinct points, each repeated 8 times. With
            // C=16 the surplus codes tie against an identical twin, win
            // nothing, and starve.
            let jitter = (rng.random::<f32>() - 0.5) * 0.1;
            let mut first = Array2::zeros((64, 2));
            for k in 0..8 {
                for copy in 0..8 {
                    first[[k * 8 + copy, 0]] = 0.25 * k as f32 + jitter;
                    first[[k * 8 + copy, 1]] = 1.0 + 0.125 * k as f32 - jitter;
                }
            }
            let mut codebook =
                vq::kmeanspp_init(first.view(), 16, seed).map_err(|e| e.to_string())?;
            let mut state = TrainerState::new(&codebook, 0.9).map_err(|e| e.to_string())?;
            for _ in 0..40 {
                let ids = vq::assign(first.view(), &codebook).map_err(|e| e.to_string())?;
                vq::ema_update(&mut state, &mut codebook, first.view(), &ids)
                    .map_err(|e| e.to_string())?;
            }
            if state.utilization(0.1) >= 1.0 {
                return fail(format!("seed {seed}: no code ever starved; the scenario is vacuous"));
            }

            // Second, distant cluster appears; one reset pass must move the
            // dead codes into it.
            let second = Array2::from_shape_fn((64, 2), |(_, _)| {
                100.0 + rng.random::<f32>() - 0.5
            });
            let mixed = concatenate(Axis(0), &[first.view(), second.view()]).unwrap();
            let revived =
                vq::reset_dead_codes(&mut state, &mut codebook, mixed.view(), 0.1, seed)
                    .map_err(|e| e.to_string())?;

            let (lo, hi) = second.iter().fold((f32::MAX, f32::MIN), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let inside = codebook
                .codes()
                .rows()
                .into_iter()
                .any(|code| code.iter().all(|&v| v >= lo && v <= hi));
            if revived > 0 && state.utilization(0.1) >= 0.9 && inside {
                successes += 1;
            }
        }
        if successes < 99 {
            return fail(format!("only {successes}/100 seeds recovered"));
        }
        Ok(())
    })());
}

// -- 7 ----------------------------------------------------------------------

#[test]
fn c07_straight_through_contract() {
    check("criterion 07 — straight-through gradients match finite differences on 100 points", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = 4usize;
        let codebook = Codebook::new(uniform_matrix(&mut rng, 16, s, -1.0, 1.0)).unwrap();
        let eps = 1e-4f64;

        let mut accepted = 0;
        while accepted < 100 {
            let point = uniform_matrix(&mut rng, 1, s, -1.0, 1.0);
            // Interior check: the nearest code must win by a clear margin so
            // the assignment is locally constant.
            let mut dists: Vec<f64> = codebook
                .codes()
                .rows()
                .into_iter()
                .map(|code| {
                    code.iter()
                        .zip(point.row(0).iter())
                        .map(|(&c, &x)| (f64::from(x) - f64::from(c)).powi(2))
                        .sum()
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if dists[1] - dists[0] < 1e-3 {
                continue;
            }
            accepted += 1;

            let ids = vq::assign(point.view(), &codebook).map_err(|e| e.to_string())?;
            let q0: Vec<f64> = codebook
                .codes()
                .row(ids.ids()[0] as usize)
                .iter()
                .map(|&v| f64::from(v))
                .collect();

            // Random quadratic loss L(v) = sum_k w_k v_k^2 + b_k v_k.
            let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();
            let b: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |v: &[f64]| -> f64 {
                v.iter()
                    .zip(&w)
                    .zip(&b)
                    .map(|((&vk, &wk), &bk)| wk * vk * vk + bk * vk)
                    .sum()
            };

            let upstream = Array2::from_shape_fn((1, s), |(_, k)| {
                (2.0 * w[k] * q0[k] + b[k]) as f32
            });
            let ste = training::st_backward(upstream.view());

            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for k in 0..s {
                let mut plus = q0.clone();
                let mut minus = q0.clone();
                plus[k] += eps;
                minus[k] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                num += (f64::from(ste[[0, k]]) - fd).powi(2);
                den += fd * fd;
            }
            let rel = (num / den.max(1e-30)).sqrt();
            if rel >= 1e-5 {
                return fail(format!("point {accepted}: relative error {rel}"));
            }
        }
        Ok(())
    })());
}

// -- 8 ----------------------------------------------------------------------

#[test]
fn c08_joint_training_ordering() {
    check("criterion 08 — median toy loss orders joint <= frozen-encoder <= frozen-all", (|| {
        let mut finals = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
            let map = uniform_matrix(&mut rng, 4, 6, -1.0, 1.0);
            let inputs = uniform_matrix(&mut rng, 256, 6, -1.0, 1.0);
            let targets = inputs.dot(&map.t());
            let config = TrainConfig {
                g: 4,
                c: 32,
                epochs: 100,
                batch_size: 64,
                seed,
                ..TrainConfig::default()
            };
            for (slot, mode) in [ToyMode::Joint, ToyMode::FrozenEncoder, ToyMode::FrozenAll]
                .into_iter()
                .enumerate()
            {
                let run = training::toy_joint_train(
                    inputs.view(),
                    targets.view(),
                    8,
                    &config,
                    mode,
                )
                .map_err(|e| e.to_string())?;
                finals[slot].push(*run.losses.last().unwrap());
            }
        }
        let median = |values: &mut Vec<f64>| -> f64 {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (values[4] + values[5]) / 2.0
        };
        let joint = median(&mut finals[0]);
        let frozen_encoder = median(&mut finals[1]);
        let frozen_all = median(&mut finals[2]);
        if !(joint <= frozen_encoder && frozen_encoder <= frozen_all && joint < frozen_all) {
            return fail(format!(
                "medians violate the ordering: joint {joint}, frozen-encoder {frozen_encoder}, frozen-all {frozen_all}"
            ));
        }
        Ok(())
    })());
}

// -- 9 ----------------------------------------------------------------------

#[test]
fn c09_rate_quality_tradeoff() {
    check("criterion 09 — MSE grows with rate and beats truncation baselines at rates 2 and 4", (|| {
        let data = mixture(900, 2048, 8, 10);
        let config = TrainConfig {
            g: 8,
            c: 256,
            epochs: 30,
            batch_size: 256,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut rows =
            eval::sweep(data.view(), &[8, 4, 2, 1], &[256], &config).map_err(|e| e.to_string())?;
        rows.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap());
        let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
        if rates != [2.0, 4.0, 8.0, 16.0] {
            return fail(format!("unexpected rate ladder {rates:?}"));
        }
        for pair in rows.windows(2) {
            if pair[1].mse < pair[0].mse {
                return fail(format!(
                    "MSE decreased with rate: {} at rate {} vs {} at rate {}",
                    pair[1].mse, pair[1].rate, pair[0].mse, pair[0].rate
                ));
            }
        }

        let passages: Vec<Array2<f32>> = (0..16)
            .map(|p| data.slice(ndarray::s![p * 128..(p + 1) * 128, ..]).to_owned())
            .collect();
        for (rate, keep_dims, keep_tokens) in [(2.0, 4usize, 64usize), (4.0, 2, 32)] {
            let vq_mse = rows
                .iter()
                .find(|r| r.rate == rate)
                .expect("rate is on the ladder")
                .mse;
            let (dim_rate, dim_mse) = eval::baseline_dim_truncation(data.view(), keep_dims)
                .map_err(|e| e.to_string())?;
            let (tok_rate, tok_mse) = eval::baseline_token_truncation(&passages, keep_tokens)
                .map_err(|e| e.to_string())?;
            if dim_rate != rate || tok_rate != rate {
                return fail(format!(
                    "baseline rates {dim_rate}/{tok_rate} do not match VQ rate {rate}"
                ));
            }
            if vq_mse >= dim_mse || vq_mse >= tok_mse {
                return fail(format!(
                    "at rate {rate}: VQ {vq_mse} vs dim-truncation {dim_mse}, token-truncation {tok_mse}"
                ));
            }
        }
        Ok(())
    })());
}

// -- 10 ---------------------------------------------------------------------

#[test]
fn c10_codebook_size_effect() {
    check("criterion 10 — a 256-code codebook never loses to a 16-code codebook", (|| {
        for seed in 0..5u64 {
            let data = mixture(1000 + seed, 2048, 8, 10);
            let mut mses = [0.0f64; 2];
            for (slot, c) in [16usize, 256].into_iter().enumerate() {
                let config = TrainConfig {
                    g: 2,
                    c,
                    epochs: 25,
                    batch_size: 256,
                    seed,
                    ..TrainConfig::default()
                };
                let (model, _) =
                    training::fit_matrix(data.view(), &config).map_err(|e| e.to_string())?;
                mses[slot] = eval::recon_mse(&model, data.view()).map_err(|e| e.to_string())?;
            }
            let [small, large] = mses;
            if large > small {
                return fail(format!(
                    "seed {seed}: C=256 gives {large}, worse than C=16 at {small}"
                ));
            }
        }
        Ok(())
    })());
}

// -- 11 ---------------------------------------------------------------------

fn random_shard(rng: &mut ChaCha8Rng) -> (PqModel, CodeMatrix) {
    let d = rng.random_range(1..=16usize);
    let g = rng.random_range(1..=4usize);
    let c = rng.random_range(1..=300usize);
    let n = rng.random_range(1..=64usize);
    let partition = SubspacePartition::new(d, g).unwrap();
    let s = partition.subspace_dim();
    let codebooks: Vec<Codebook> = (0..g)
        .map(|_| Codebook::new(uniform_matrix(rng, c, s, -10.0, 10.0)).unwrap())
        .collect();
    let model = PqModel::new(partition, codebooks).unwrap();
    let codes = CodeMatrix::new(Array2::from_shape_fn((n, g), |_| {
        rng.random_range(0..c as u32)
    }));
    (model, codes)
}

#[test]
fn c11_shard_format() {
    check("criterion 11 — shards round-trip bit-exactly and reject corruption", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("shard.mvq");
        for trial in 0..200u32 {
            let (model, codes) = random_shard(&mut rng);
            memstore::write_shard(&path, &model, &codes).map_err(|e| e.to_string())?;

            let header = memstore::read_shard_header(&path).map_err(|e| e.to_string())?;
            let width = u128::from(memstore::code_width_bits(model.code_count() as u64).unwrap());
            let expected_code_bytes =
                u128::from(codes.rows() as u64) * codes.subspaces() as u128 * width / 8;
            if header.code_section_len() != expected_code_bytes {
                return fail(format!(
                    "trial {trial}: code section is {} bytes, expected N*g*width/8 = {expected_code_bytes}",
                    header.code_section_len()
                ));
            }

            let (model2, codes2) = memstore::read_shard(&path).map_err(|e| e.to_string())?;
            if model2 != model || codes2 != codes {
                return fail(format!("trial {trial}: round trip is not bit-exact"));
            }

            // One random payload byte set to a different value must always
            // surface as an error.
            let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            let pos = rng.random_range(33..bytes.len());
            let old = bytes[pos];
            let mut new = old;
            while new == old {
                new = rng.random::<u8>();
            }
            bytes[pos] = new;
            std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
            if memstore::read_shard(&path).is_ok() {
                return fail(format!(
                    "trial {trial}: payload byte {pos} changed {old} -> {new} went undetected"
                ));
            }
        }

        // Header sanity on one shard: flipping any header byte must error.
        let (model, codes) = random_shard(&mut rng);
        memstore::write_shard(&path, &model, &codes).map_err(|e| e.to_string())?;
        let clean = std::fs::read(&path).map_err(|e| e.to_string())?;
        for pos in 0..33 {
            let mut bytes = clean.clone();
            bytes[pos] ^= 0xFF;
            std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
            if memstore::read_shard(&path).is_ok() {
                return fail(format!("header byte {pos} flip went undetected"));
            }
        }
        Ok(())
    })());
}

// -- 12 ---------------------------------------------------------------------

#[test]
fn c12_entropy_probe() {
    check("criterion 12 — probe separates incompressible, constant, and cyclic code streams", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (n, g) = (4096usize, 4usize);
        let width = 16u8;

        let uniform = CodeMatrix::new(Array2::from_shape_fn((n, g), |_| {
            rng.random_range(0..65536u32)
        }));
        let per = probe::probe_per_subspace(&uniform, width).map_err(|e| e.to_string())?;
        let joint = probe::probe_joint(&uniform, width).map_err(|e| e.to_string())?;
        for (j, ratio) in per.iter().chain(std::iter::once(&joint)).enumerate() {
            if !(0.95..=1.05).contains(ratio) {
                return fail(format!("uniform stream {j} compressed at {ratio}"));
            }
        }

        let constant = CodeMatrix::new(Array2::from_elem((n, g), 7u32));
        let per = probe::probe_per_subspace(&constant, width).map_err(|e| e.to_string())?;
        if let Some(ratio) = per.iter().find(|&&r| r < 50.0) {
            return fail(format!("constant column compressed at only {ratio}"));
        }

        let cyclic = CodeMatrix::new(Array2::from_shape_fn((n, g), |(i, _)| (i % 4) as u32));
        let per = probe::probe_per_subspace(&cyclic, width).map_err(|e| e.to_string())?;
        if let Some(ratio) = per.iter().find(|&&r| r < 2.0) {
            return fail(format!("4-value cyclic column compressed at only {ratio}"));
        }
        Ok(())
    })());
}
