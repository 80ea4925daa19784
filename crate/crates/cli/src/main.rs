//! `coli`: compress images into `.coli` files, decode them, score them, and
//! compare weight compressors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coli_core::bench::{self, BenchConfig};
use coli_core::container::{decode_file, encode_file, ColiFile, ImageMeta, Payload, PayloadKind, FORMAT_VERSION};
use coli_core::hypercodec::{compress, CodecConfig};
use coli_core::inr_net::{Arch, NetConfig, Weights};
use coli_core::pixel_io::{load_image, save_image, split_patches, stitch, PatchGrid};
use coli_core::quality_metrics::MetricsReport;
use coli_core::trainer::{evaluate, train, TrainConfig};
use coli_core::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "coli", version, about = "Image compression by fitting a patch-indexed neural network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a network to an image and store it as a .coli file.
    Compress(CompressArgs),
    /// Render a .coli file back to an image (PNG, PGM or PPM by extension).
    Decompress(DecompressArgs),
    /// Score a .coli file against the original image.
    Eval(EvalArgs),
    /// Train once, then compare every weight compressor (CSV + JSON).
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Small,
    Medium,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Small => Arch::Small,
            ArchArg::Medium => Arch::Medium,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Square patch size; defaults to the architecture's native size.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "small")]
    arch: ArchArg,
    /// Patches per optimizer step.
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Stop early once training PSNR reaches this many dB.
    #[arg(long)]
    target_psnr: Option<f64>,
    /// Start from the weights of an existing .coli file.
    #[arg(long, value_name = "DONOR.coli")]
    init: Option<PathBuf>,
    /// Log progress every N epochs (shown with RUST_LOG=info).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long, default_value_t = 2)]
    group_size: usize,
    #[arg(long, default_value_t = 16)]
    k_bits: u32,
}

impl CodecArgs {
    fn config(&self) -> CodecConfig {
        CodecConfig { group_size: self.group_size, k_bits: self.k_bits, ..CodecConfig::default() }
    }
}

#[derive(Args)]
struct CompressArgs {
    image: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    codec: CodecArgs,
    /// Code the weights with trajectory indices (default).
    #[arg(long, overrides_with = "no_hc")]
    hc: bool,
    /// Store raw f32 weights.
    #[arg(long, overrides_with = "hc")]
    no_hc: bool,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    input: PathBuf,
    /// The original image.
    reference: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    image: PathBuf,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(short, long, default_value = "bench")]
    out: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    codec: CodecArgs,
    /// Variants evaluated in parallel; 0 uses every available thread.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = 0.3)]
    prune_ratio: f64,
    #[arg(long, default_value_t = 0.5)]
    rank_fraction: f64,
}

struct Failure {
    stage: &'static str,
    error: Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self.error {
            Error::Config(_) if self.stage != "evaluate" => 2,
            ref e if e.is_numeric() => 4,
            _ => 3,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| Failure { stage, error: e.into() })
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("COLI_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn read_coli(path: &Path) -> CliResult<ColiFile> {
    let bytes = std::fs::read(path).stage("read")?;
    decode_file(&bytes).stage("decode")
}

fn load_grid(path: &Path, t: &TrainArgs) -> CliResult<(PatchGrid, NetConfig)> {
    let img = load_image(path).stage("load")?;
    let arch = Arch::from(t.arch);
    let patch = t.patch.unwrap_or(arch.default_patch());
    let net = arch.config(patch, img.channels()).stage("config")?;
    let grid = split_patches(&img, patch, patch).stage("split")?;
    Ok((grid, net))
}

fn fit(grid: &PatchGrid, net: &NetConfig, t: &TrainArgs) -> CliResult<(Weights, usize, f64)> {
    let donor = match &t.init {
        Some(path) => {
            let file = read_coli(path)?;
            if file.net != *net {
                return Err(Error::Config("donor network differs from the requested architecture".into()))
                    .stage("init");
            }
            Some(file.weights().stage("init")?)
        }
        None => None,
    };
    let t_cfg = TrainConfig {
        epochs: t.epochs,
        lr: t.lr,
        seed: t.seed,
        batch_patches: t.batch.min(grid.len()),
        target_psnr: t.target_psnr,
        log_every: t.log_every,
        ..TrainConfig::default()
    };
    let clock = Instant::now();
    let (w, history) = train(grid, net, &t_cfg, donor.as_ref()).stage("train")?;
    Ok((w, history.len(), clock.elapsed().as_secs_f64()))
}

fn kind_name(kind: PayloadKind) -> &'static str {
    match kind {
        PayloadKind::RawWeights => "raw_weights",
        PayloadKind::Hyper => "hyper",
    }
}

fn with_metrics(mut report: Value, metrics: &MetricsReport) -> Value {
    if let (Value::Object(map), Ok(Value::Object(extra))) = (&mut report, serde_json::to_value(metrics)) {
        map.extend(extra);
    }
    report
}

fn cmd_compress(a: &CompressArgs) -> CliResult<Value> {
    let codec = a.codec.config();
    if !a.no_hc {
        codec.validate().stage("config")?;
    }
    let (grid, net) = load_grid(&a.image, &a.train)?;
    let (w, epochs_run, seconds) = fit(&grid, &net, &a.train)?;
    let trained_psnr = evaluate(&w, &net, &grid).stage("evaluate")?.psnr_db;
    let payload =
        if a.no_hc { Payload::RawWeights(w) } else { Payload::Hyper(compress(&w, &codec).stage("hypercodec")?) };
    let file = ColiFile { meta: ImageMeta::of_grid(&grid), net, payload };
    let bytes = encode_file(&file).stage("encode")?;
    std::fs::write(&a.out, &bytes).stage("write")?;
    let original = stitch(&grid).stage("evaluate")?;
    let recon = file.render().stage("evaluate")?;
    let metrics = MetricsReport::measure(&original, &recon, bytes.len() as u64).stage("evaluate")?;
    let report = json!({
        "format_version": FORMAT_VERSION,
        "command": "compress",
        "input": a.image,
        "output": a.out,
        "width": file.meta.width,
        "height": file.meta.height,
        "channels": file.meta.channels,
        "patch": file.meta.patch_h,
        "params": file.net.param_count(),
        "payload_kind": kind_name(file.payload.kind()),
        "epochs_run": epochs_run,
        "train_seconds": seconds,
        "trained_psnr_db": trained_psnr,
        "file_bytes": bytes.len(),
    });
    Ok(with_metrics(report, &metrics))
}

fn cmd_decompress(a: &DecompressArgs) -> CliResult<Value> {
    let file = read_coli(&a.input)?;
    let img = file.render().stage("render")?;
    save_image(&img, &a.out).stage("write")?;
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "command": "decompress",
        "input": a.input,
        "output": a.out,
        "width": img.width(),
        "height": img.height(),
        "channels": img.channels(),
        "payload_kind": kind_name(file.payload.kind()),
    }))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<Value> {
    let bytes = std::fs::read(&a.input).stage("read")?;
    let file = decode_file(&bytes).stage("decode")?;
    let reference = load_image(&a.reference).stage("load")?;
    let recon = file.render().stage("render")?;
    let metrics = MetricsReport::measure(&reference, &recon, bytes.len() as u64).stage("evaluate")?;
    let report = json!({
        "format_version": FORMAT_VERSION,
        "command": "eval",
        "input": a.input,
        "reference": a.reference,
        "payload_kind": kind_name(file.payload.kind()),
    });
    Ok(with_metrics(report, &metrics))
}

fn cmd_bench(a: &BenchArgs) -> CliResult<Value> {
    let (grid, net) = load_grid(&a.image, &a.train)?;
    let (w, epochs_run, seconds) = fit(&grid, &net, &a.train)?;
    let jobs = match (a.jobs, thread_cap()) {
        (0, cap) => cap.unwrap_or(0),
        (j, Some(cap)) => j.min(cap),
        (j, None) => j,
    };
    let cfg = BenchConfig { prune_ratio: a.prune_ratio, rank_fraction: a.rank_fraction, codec: a.codec.config(), jobs };
    let rows = bench::run(&grid, &net, &w, &cfg).stage("bench")?;
    let csv_path = a.out.with_extension("csv");
    let json_path = a.out.with_extension("json");
    let rows_json = serde_json::to_value(&rows).expect("rows serialize");
    let table = json!({ "format_version": FORMAT_VERSION, "image": a.image, "rows": rows_json });
    std::fs::write(&csv_path, bench::to_csv(&rows)).stage("write")?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&table).expect("table serializes")).stage("write")?;
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "command": "bench",
        "input": a.image,
        "csv": csv_path,
        "json": json_path,
        "epochs_run": epochs_run,
        "train_seconds": seconds,
        "rows": rows_json,
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = thread_cap() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("COLI_THREADS ignored: {e}");
        }
    }
    let result = match &cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Decompress(a) => cmd_decompress(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
