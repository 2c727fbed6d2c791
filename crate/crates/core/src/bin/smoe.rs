use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smoe::codec::{
    analyze_image, decode_stream, encode_image, BlockEncoder, BlockPlan, EncodeConfig, QuantSpec,
    DEFAULT_VARIANCE_THRESHOLD,
};
use smoe::eval::{
    benchmark, format_psnr, psnr, rd_sweep, resample, ssim, write_rd_csv, SweepEntry,
};
use smoe::gd::GdConfig;
use smoe::neural::{
    self, desk_layers, full_layers, load_dataset, load_model, save_model, AeMode, AeModel,
    TrainConfig,
};
use smoe::{read_pgm, write_pgm, Error, DEFAULT_BANDWIDTH, DEFAULT_BLOCK_SIZE, DEFAULT_KERNELS};

#[derive(Debug, Parser)]
#[command(
    name = "smoe",
    version,
    about = "Steered Mixture-of-Experts block image codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a PGM image into an .smoe stream.
    Encode(EncodeArgs),
    /// Decode an .smoe stream to PGM, optionally at a different resolution.
    Decode(DecodeArgs),
    /// Fit unquantized SMoE parameters with gradient descent and export them as CSV.
    Fit(FitArgs),
    /// Train an autoencoder on a PGM directory or .smbk block pack.
    Train(TrainArgs),
    /// Compare two PGM images.
    Eval(EvalArgs),
    /// Rate-distortion sweep over the quantizer grid.
    Sweep(SweepArgs),
    /// Time encoders and decoders.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderKind {
    Gd,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    SmoeAe,
    CAe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
struct GdArgs {
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncoderKind::Gd)]
    encoder: EncoderKind,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    gd: GdArgs,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=4))]
    center_bits: u8,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(4..=5))]
    expert_bits: u8,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gd: GdArgs,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::SmoeAe)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ArchArg::Desk)]
    arch: ArchArg,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gd: GdArgs,
    /// Record wall-clock times (otherwise the time columns are zero).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[command(flatten)]
    gd: GdArgs,
}

fn gd_config(args: &GdArgs) -> GdConfig {
    GdConfig {
        iterations: args.iters,
        learning_rate: args.lr,
        seed: args.seed,
        ..GdConfig::default()
    }
}

fn neural_config(model: &AeModel) -> EncodeConfig<'_> {
    let enc = model.encoder();
    EncodeConfig {
        block_size: enc.block_size(),
        kernels: enc.kernels(),
        bandwidth: model.bandwidth(),
        ..EncodeConfig::new(BlockEncoder::Neural(enc))
    }
}

fn load_ae(path: &Option<PathBuf>) -> smoe::Result<Option<AeModel>> {
    path.as_ref().map(load_model).transpose()
}

fn run(cli: Cli) -> smoe::Result<()> {
    eprintln!(
        "resolved config: K={DEFAULT_KERNELS} S={DEFAULT_BANDWIDTH} B={DEFAULT_BLOCK_SIZE} {:?}",
        cli.command
    );
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Encode(a) => {
            let image = read_pgm(&a.input)?;
            let model = load_ae(&a.model)?;
            let mut cfg = match a.encoder {
                EncoderKind::Gd => EncodeConfig::new(BlockEncoder::Gd(gd_config(&a.gd))),
                EncoderKind::Neural => {
                    let m = model
                        .as_ref()
                        .ok_or_else(|| Error::Input("--encoder neural needs --model".into()))?;
                    neural_config(m)
                }
            };
            cfg.quant = QuantSpec::new(a.center_bits, a.expert_bits)?;
            cfg.variance_threshold = a.threshold;
            let encoded = encode_image(&image, &cfg)?;
            fs::write(&a.out, &encoded.bytes)?;
            writeln!(
                stdout,
                "bpp={:.6} bytes={} textured={} flat={} encode_s={:.3}",
                encoded.bpp,
                encoded.bytes.len(),
                encoded.textured_blocks,
                encoded.flat_blocks,
                encoded.elapsed.as_secs_f64()
            )?;
        }
        Command::Decode(a) => {
            let stream = decode_stream(&fs::read(&a.input)?)?;
            let image = match a.scale {
                Some(scale) => resample(&stream, scale)?,
                None => stream.render(),
            };
            write_pgm(&a.out, &image)?;
            writeln!(stdout, "width={} height={}", image.width(), image.height())?;
        }
        Command::Fit(a) => {
            let image = read_pgm(&a.input)?;
            let mut cfg = EncodeConfig::new(BlockEncoder::Gd(gd_config(&a.gd)));
            cfg.variance_threshold = a.threshold;
            let analysis = analyze_image(&image, &cfg)?;
            let mut w = csv::Writer::from_path(&a.out)?;
            w.write_record([
                "block",
                "origin_row",
                "origin_col",
                "kind",
                "kernel",
                "center_row",
                "center_col",
                "expert",
            ])?;
            for (i, (block, plan)) in analysis.blocks.iter().zip(&analysis.plans).enumerate() {
                let (r, c) = block.origin();
                let head = [i.to_string(), r.to_string(), c.to_string()];
                match plan {
                    BlockPlan::Flat => {
                        w.write_record(head.iter().cloned().chain([
                            "flat".into(),
                            String::new(),
                            String::new(),
                            String::new(),
                            format!("{:.9}", block.mean()),
                        ]))?;
                    }
                    BlockPlan::Textured(m) => {
                        for (k, (mu, e)) in m.centers().iter().zip(m.experts()).enumerate() {
                            w.write_record(head.iter().cloned().chain([
                                "textured".into(),
                                k.to_string(),
                                format!("{:.9}", mu[0]),
                                format!("{:.9}", mu[1]),
                                format!("{e:.9}"),
                            ]))?;
                        }
                    }
                }
            }
            w.flush()?;
            let recon = analysis.reconstruct();
            writeln!(
                stdout,
                "psnr={} ssim={:.6} textured={} encode_s={:.3}",
                format_psnr(psnr(&image, &recon)?),
                ssim(&image, &recon)?,
                analysis.textured_count(),
                analysis.elapsed.as_secs_f64()
            )?;
        }
        Command::Train(a) => {
            let blocks = load_dataset(&a.data, DEFAULT_BLOCK_SIZE)?;
            let cfg = TrainConfig {
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch,
                mode: match a.mode {
                    ModeArg::SmoeAe => AeMode::SmoeAe,
                    ModeArg::CAe => AeMode::CAe,
                },
                bandwidth: DEFAULT_BANDWIDTH,
                seed: a.seed,
            };
            let layers = match a.arch {
                ArchArg::Desk => desk_layers(DEFAULT_KERNELS),
                ArchArg::Full => full_layers(DEFAULT_KERNELS),
            };
            let outcome = neural::train(&blocks, &cfg, layers)?;
            save_model(&outcome.model, &a.out)?;
            for (i, loss) in outcome.history.iter().enumerate() {
                writeln!(stdout, "epoch={} loss={loss:.9}", i + 1)?;
            }
        }
        Command::Eval(a) => {
            let reference = read_pgm(&a.reference)?;
            let test = read_pgm(&a.test)?;
            writeln!(
                stdout,
                "psnr={} ssim={:.6}",
                format_psnr(psnr(&reference, &test)?),
                ssim(&reference, &test)?
            )?;
        }
        Command::Sweep(a) => {
            let image = read_pgm(&a.input)?;
            let model = load_ae(&a.model)?;
            let mut entries = vec![SweepEntry {
                label: "smoe-gd".into(),
                config: EncodeConfig::new(BlockEncoder::Gd(gd_config(&a.gd))),
            }];
            if let Some(m) = &model {
                entries.push(SweepEntry {
                    label: "smoe-ae".into(),
                    config: neural_config(m),
                });
            }
            let records = rd_sweep(&image, &entries, &QuantSpec::sweep_grid(), a.timing)?;
            write_rd_csv(&records, fs::File::create(&a.out)?)?;
            write_rd_csv(&records, &mut stdout)?;
        }
        Command::Bench(a) => {
            let image = read_pgm(&a.input)?;
            let model = load_ae(&a.model)?;
            let mut entries = vec![(
                "smoe-gd".to_string(),
                EncodeConfig::new(BlockEncoder::Gd(gd_config(&a.gd))),
            )];
            if let Some(m) = &model {
                entries.push(("smoe-ae".to_string(), neural_config(m)));
            }
            let report = benchmark(&image, &entries, a.reps)?;
            for row in &report.rows {
                writeln!(
                    stdout,
                    "codec={} encode_s={:.6} decode_s={:.6} bpp={:.6}",
                    row.label, row.encode_s, row.decode_s, row.bpp
                )?;
            }
            if let Some(s) = report.speedup("smoe-gd", "smoe-ae") {
                writeln!(stdout, "speedup={s:.2}")?;
            }
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Input(_) | Error::Config(_) | Error::Io(_) | Error::Csv(_) => 1,
        Error::Stream(_) | Error::ModelFile(_) => 2,
        Error::InvalidKernel(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
