//! Command-line surface for the memvq codec: train, compress, decompress,
//! inspect shards, account storage, probe code compressibility, evaluate
//! against baselines, and run the toy joint-training pipeline.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memvq::costcalc::{render_human, storage_report, UnitConvention};
use memvq::error::{Error, Result};
use memvq::{eval, memstore, pq, probe, training};

#[derive(Parser)]
#[command(
    name = "memvq",
    version,
    about = "Product-quantization codec with EMA-trained codebooks for embedding corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a codec on raw vectors and write a shard with their codes
    Fit(FitArgs),
    /// Compress raw vectors with the codec from an existing shard
    Compress(CompressArgs),
    /// Reconstruct vectors from a shard as raw little-endian f32 rows
    Decompress(DecompressArgs),
    /// Print a shard's header fields and code utilization
    Stats(StatsArgs),
    /// Report exact storage costs for the three memory regimes
    Cost(CostArgs),
    /// Measure lossless compressibility of a shard's code stream
    Probe(ProbeArgs),
    /// Sweep codec shapes and compare against truncation baselines
    Eval(EvalArgs),
    /// Train the toy encoder/quantizer/decoder pipeline on synthetic data
    ToyTrain(ToyTrainArgs),
}

#[derive(Args)]
struct TrainFlags {
    /// Number of subspaces g
    #[arg(long, default_value_t = 256)]
    subspaces: usize,
    /// Codes per subspace C
    #[arg(long, default_value_t = 65536)]
    codes: usize,
    /// EMA decay for cluster statistics
    #[arg(long, default_value_t = 0.999)]
    ema: f64,
    /// Training epochs
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Batch size
    #[arg(long = "batch", default_value_t = 1024)]
    batch: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cluster-size floor below which a code is reset
    #[arg(long = "usage-threshold", default_value_t = 0.1)]
    usage_threshold: f64,
    /// Commitment term weight (0 disables it)
    #[arg(long = "commitment-beta", default_value_t = 0.0)]
    commitment_beta: f64,
}

impl TrainFlags {
    fn to_config(&self) -> training::TrainConfig {
        training::TrainConfig {
            g: self.subspaces,
            c: self.codes,
            gamma: self.ema,
            epochs: self.epochs,
            batch_size: self.batch,
            usage_threshold: self.usage_threshold,
            seed: self.seed,
            commitment_beta: self.commitment_beta,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Raw vector corpus (headerless little-endian f32 rows)
    #[arg(long)]
    input: PathBuf,
    /// Vector dimension of the corpus
    #[arg(long)]
    dim: usize,
    /// Output shard path
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct CompressArgs {
    /// Raw vector corpus to compress
    #[arg(long)]
    input: PathBuf,
    /// Shard providing the trained codec
    #[arg(long)]
    model: PathBuf,
    /// Output shard path
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    /// Input shard
    #[arg(long)]
    input: PathBuf,
    /// Output raw vector file; omit to stream to stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Input shard
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct CostArgs {
    /// Corpus size N in tokens
    #[arg(long)]
    tokens: u64,
    /// Memory vector dimension d
    #[arg(long)]
    dim: u64,
    /// Number of subspaces g
    #[arg(long, default_value_t = 256)]
    subspaces: u64,
    /// Codes per subspace C
    #[arg(long, default_value_t = 65536)]
    codes: u64,
}

#[derive(Args)]
struct ProbeArgs {
    /// Input shard
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Raw vector corpus
    #[arg(long)]
    input: PathBuf,
    /// Vector dimension of the corpus
    #[arg(long)]
    dim: usize,
    /// Subspace counts to sweep
    #[arg(long = "g-list", value_delimiter = ',', default_values_t = vec![256usize])]
    g_list: Vec<usize>,
    /// Codebook sizes to sweep
    #[arg(long = "c-list", value_delimiter = ',', default_values_t = vec![65536usize])]
    c_list: Vec<usize>,
    /// Dimension-truncation baseline: coordinates to keep
    #[arg(long = "dim-keep", value_delimiter = ',')]
    dim_keep: Vec<usize>,
    /// Token-truncation baseline: tokens to keep per passage
    #[arg(long = "token-keep", value_delimiter = ',')]
    token_keep: Vec<usize>,
    /// Passage length used to split the corpus for token truncation
    #[arg(long = "passage-len")]
    passage_len: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ToyModeArg {
    Joint,
    FrozenEncoder,
    FrozenAll,
}

impl From<ToyModeArg> for training::ToyMode {
    fn from(mode: ToyModeArg) -> Self {
        match mode {
            ToyModeArg::Joint => training::ToyMode::Joint,
            ToyModeArg::FrozenEncoder => training::ToyMode::FrozenEncoder,
            ToyModeArg::FrozenAll => training::ToyMode::FrozenAll,
        }
    }
}

#[derive(Args)]
struct ToyTrainArgs {
    /// Which pipeline parts receive gradient updates
    #[arg(long, value_enum, default_value_t = ToyModeArg::Joint)]
    mode: ToyModeArg,
    /// Synthetic dataset size
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Input dimension of the synthetic data
    #[arg(long = "input-dim", default_value_t = 6)]
    input_dim: usize,
    /// Target dimension of the synthetic data
    #[arg(long = "target-dim", default_value_t = 4)]
    target_dim: usize,
    /// Hidden (encoder output) dimension
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    /// Number of subspaces g
    #[arg(long, default_value_t = 4)]
    subspaces: usize,
    /// Codes per subspace C
    #[arg(long, default_value_t = 32)]
    codes: usize,
    /// EMA decay for cluster statistics
    #[arg(long, default_value_t = 0.999)]
    ema: f64,
    /// Training epochs
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Batch size
    #[arg(long = "batch", default_value_t = 64)]
    batch: usize,
    /// Seed for all randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Commitment term weight (0 disables it)
    #[arg(long = "commitment-beta", default_value_t = 0.0)]
    commitment_beta: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// MEMVQ_THREADS caps the rayon pool; unset means rayon's default.
fn init_thread_pool() -> Result<()> {
    match std::env::var("MEMVQ_THREADS") {
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                Error::Config(format!("MEMVQ_THREADS must be a positive integer, got {raw:?}"))
            })?;
            if n == 0 {
                return Err(Error::Config("MEMVQ_THREADS must be a positive integer".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))
        }
        Err(_) => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => run_fit(args),
        Command::Compress(args) => run_compress(args),
        Command::Decompress(args) => run_decompress(args),
        Command::Stats(args) => run_stats(args),
        Command::Cost(args) => run_cost(args),
        Command::Probe(args) => run_probe(args),
        Command::Eval(args) => run_eval(args),
        Command::ToyTrain(args) => run_toy_train(args),
    }
}

fn run_fit(args: FitArgs) -> Result<()> {
    let config = args.train.to_config();
    let reader = memstore::RawVectorReader::open(&args.input, args.dim)?;
    let (model, report) = training::fit(reader, args.dim, &config)?;

    println!("epoch\tmse\tutilization");
    for (e, (mse, used)) in report
        .epoch_mse
        .iter()
        .zip(&report.epoch_utilization)
        .enumerate()
    {
        println!("{e}\t{mse:.6e}\t{used:.4}");
    }
    println!("codes_reset: {}", report.codes_reset);

    let vectors = memstore::read_raw_matrix(&args.input, args.dim)?;
    let codes = pq::compress(&model, vectors.view())?;
    let written = memstore::write_shard(&args.output, &model, &codes)?;
    println!("vectors: {}", codes.rows());
    println!("wrote {written} bytes to {}", args.output.display());
    Ok(())
}

fn run_compress(args: CompressArgs) -> Result<()> {
    let (model, _) = memstore::read_shard(&args.model)?;
    let vectors = memstore::read_raw_matrix(&args.input, model.partition().dim())?;
    let codes = pq::compress(&model, vectors.view())?;
    let written = memstore::write_shard(&args.output, &model, &codes)?;
    println!("vectors: {}", codes.rows());
    println!("wrote {written} bytes to {}", args.output.display());
    Ok(())
}

fn run_decompress(args: DecompressArgs) -> Result<()> {
    let (model, codes) = memstore::read_shard(&args.input)?;
    let vectors = pq::decompress(&model, &codes)?;
    match args.output {
        Some(path) => {
            let written = memstore::write_raw_vectors(&path, vectors.view())?;
            eprintln!("wrote {written} bytes to {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut out = std::io::BufWriter::new(stdout.lock());
            for &v in vectors.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn run_stats(args: StatsArgs) -> Result<()> {
    let header = memstore::read_shard_header(&args.input)?;
    let (model, codes) = memstore::read_shard(&args.input)?;

    // Fraction of codes that the stored ids actually reference.
    let c = model.code_count();
    let g = model.partition().subspaces();
    let mut used = 0usize;
    for j in 0..g {
        let mut seen = vec![false; c];
        for &id in codes.view().column(j) {
            seen[id as usize] = true;
        }
        used += seen.iter().filter(|&&b| b).count();
    }
    let utilization = used as f64 / (g * c) as f64;

    println!("version: {}", header.version);
    println!("d: {}", header.d);
    println!("g: {}", header.g);
    println!("C: {}", header.c);
    println!("code_width_bits: {}", header.code_width_bits);
    println!("N: {}", header.n);
    println!("checksum: {:#018x}", header.checksum);
    println!("codebook_bytes: {}", header.codebook_section_len()?);
    println!("code_bytes: {}", header.code_section_len());
    println!("utilization: {utilization:.4}");
    Ok(())
}

fn run_cost(args: CostArgs) -> Result<()> {
    let report = storage_report(args.tokens, args.dim, args.subspaces, args.codes)?;
    println!(
        "parameters: N={} d={} g={} C={}",
        report.n, report.d, report.g, report.c
    );
    println!(
        "per-token bits: {} / {} / {} (FiD / LUMEN / LUMEN-VQ)",
        report.fid_bits_per_token, report.lumen_bits_per_token, report.lumen_vq_bits_per_token
    );
    println!(
        "per-token: {} B / {} B / {} B",
        u128::from(report.fid_bits_per_token).div_ceil(8),
        u128::from(report.lumen_bits_per_token).div_ceil(8),
        u128::from(report.lumen_vq_bits_per_token).div_ceil(8),
    );
    for (name, bytes) in [
        ("FiD", report.fid_total_bytes),
        ("LUMEN", report.lumen_total_bytes),
        ("LUMEN-VQ", report.lumen_vq_total_bytes),
    ] {
        println!(
            "total {name}: {bytes} B ({}, {})",
            render_human(bytes, UnitConvention::Decimal),
            render_human(bytes, UnitConvention::Binary),
        );
    }
    println!("compression rate vs LUMEN: {}", report.compression_rate_vs_lumen);
    Ok(())
}

fn run_probe(args: ProbeArgs) -> Result<()> {
    let (model, codes) = memstore::read_shard(&args.input)?;
    let width = memstore::code_width_bits(model.code_count() as u64)?;
    let per_subspace = probe::probe_per_subspace(&codes, width)?;
    let joint = probe::probe_joint(&codes, width)?;

    println!("compressor: {}", probe::COMPRESSOR_LABEL);
    println!("subspace\tratio");
    for (j, ratio) in per_subspace.iter().enumerate() {
        println!("{j}\t{ratio:.4}");
    }
    println!("joint\t{joint:.4}");
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let vectors = memstore::read_raw_matrix(&args.input, args.dim)?;
    let config = args.train.to_config();

    println!("kind\tg\tc\tkeep\trate\tmse");
    let rows = eval::sweep(vectors.view(), &args.g_list, &args.c_list, &config)?;
    for row in rows {
        println!("vq\t{}\t{}\t-\t{}\t{:.6e}", row.g, row.c, row.rate, row.mse);
    }

    for &keep in &args.dim_keep {
        let (rate, mse) = eval::baseline_dim_truncation(vectors.view(), keep)?;
        println!("dim-trunc\t-\t-\t{keep}\t{rate}\t{mse:.6e}");
    }

    if !args.token_keep.is_empty() {
        let t = args.passage_len.ok_or_else(|| {
            Error::Config("--token-keep requires --passage-len".into())
        })?;
        if t == 0 {
            return Err(Error::Config("--passage-len must be positive".into()));
        }
        let passages: Vec<Array2<f32>> = (0..vectors.nrows())
            .step_by(t)
            .map(|start| {
                let end = (start + t).min(vectors.nrows());
                vectors.slice(ndarray::s![start..end, ..]).to_owned()
            })
            .collect();
        for &keep in &args.token_keep {
            let (rate, mse) = eval::baseline_token_truncation(&passages, keep)?;
            println!("token-trunc\t-\t-\t{keep}\t{rate}\t{mse:.6e}");
        }
    }
    Ok(())
}

fn run_toy_train(args: ToyTrainArgs) -> Result<()> {
    let config = training::TrainConfig {
        g: args.subspaces,
        c: args.codes,
        gamma: args.ema,
        epochs: args.epochs,
        batch_size: args.batch,
        usage_threshold: 0.1,
        seed: args.seed,
        commitment_beta: args.commitment_beta,
    };

    // Linearly generated synthetic dataset, seeded independently of the
    // training seed path so --seed varies both together deterministically.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(0x0DA7A5E7));
    let map = Array2::from_shape_fn((args.target_dim, args.input_dim), |_| {
        rng.random::<f32>() * 2.0 - 1.0
    });
    let inputs = Array2::from_shape_fn((args.samples, args.input_dim), |_| {
        rng.random::<f32>() * 2.0 - 1.0
    });
    let targets = inputs.dot(&map.t());

    let run = training::toy_joint_train(
        inputs.view(),
        targets.view(),
        args.hidden,
        &config,
        args.mode.into(),
    )?;

    println!("mode: {:?}", args.mode);
    println!("initial_loss: {:.6e}", run.initial_loss);
    println!("step\tloss");
    for (i, loss) in run.losses.iter().enumerate() {
        println!("{}\t{loss:.6e}", i + 1);
    }
    match run.losses.last() {
        Some(last) => println!("final_loss: {last:.6e}"),
        None => println!("final_loss: {:.6e}", run.initial_loss),
    }
    Ok(())
}
