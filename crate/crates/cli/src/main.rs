use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use duc_hdc::formats::{pgm, to_json_string};
use duc_hdc::pipeline::{self, EvalReport, RunConfig, Seeds};
use duc_hdc::report::{rf_table, CheckReport, FootprintReport, SearchEntry};
use duc_hdc_core::conv::{conv2d_forward, transposed_conv_forward, ConvSpec, TransposedConv};
use duc_hdc_core::hdc::{footprint, schedule_search, DilationSchedule};
use duc_hdc_core::train::{Confusion, DecoderKind, SgdConfig, ThinStructureConfig, ToyNetConfig};
use duc_hdc_core::upsample::{duc_from_transposed, duc_rearrange, duc_rearrange_inverse};
use duc_hdc_core::{tensor::he_init, Rng, Shape};

const OUT_ENV: &str = "DUC_HDC_OUT";

#[derive(Parser)]
#[command(name = "duc-hdc", version, about = "Dilated-convolution schedule analysis, DUC demos and toy segmentation training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the max-distance test on a dilation schedule. Exits 2 if holes are predicted.
    Check(ScheduleArgs),
    /// Render the receptive-field footprint of a schedule.
    Footprint(FootprintArgs),
    /// Receptive-field increase of a schedule, or the ResNet variant table.
    Rf(RfArgs),
    /// Enumerate hole-free schedules reaching a receptive-field target.
    Search(SearchArgs),
    /// Show that DUC reproduces a non-overlapping transposed convolution.
    DucDemo(DucDemoArgs),
    /// Train a toy segmentation net on generated thin-structure images.
    Train(TrainArgs),
    /// Evaluate a trained net on its held-out set.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// Comma-separated dilation rates, first layer first.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FootprintFormat {
    Pgm,
    Csv,
    Json,
}

impl FootprintFormat {
    fn extension(self) -> &'static str {
        match self {
            FootprintFormat::Pgm => "pgm",
            FootprintFormat::Csv => "csv",
            FootprintFormat::Json => "json",
        }
    }
}

#[derive(Args)]
struct FootprintArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, value_enum, default_value = "pgm")]
    format: FootprintFormat,
    /// Output file. Defaults to `footprint.<ext>` under $DUC_HDC_OUT or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RfArgs {
    /// Rates to sum; without it the ResNet variant table is printed.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    layers: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long)]
    rf_target: usize,
}

#[derive(Args)]
struct DucDemoArgs {
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    /// Side of the low-resolution input.
    #[arg(long, default_value_t = 3)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "duc")]
    decoder: String,
    /// Dilation rates of the encoder's context layers.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    schedule: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Encoder downsampling factor (power of two).
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// DUC cell size.
    #[arg(long, default_value_t = 1)]
    cell: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the network initialisation seed (default: seed + 1).
    #[arg(long)]
    init_seed: Option<u64>,
    /// Override the minibatch order seed (default: seed + 2).
    #[arg(long)]
    sgd_seed: Option<u64>,
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Loss reduction over pixels: sum or mean.
    #[arg(long, default_value = "sum")]
    reduction: String,
    #[arg(long, default_value_t = 200)]
    train_size: usize,
    #[arg(long, default_value_t = 50)]
    eval_size: usize,
    /// Side of the generated square images.
    #[arg(long, default_value_t = 32)]
    image_size: usize,
    #[arg(long, default_value_t = 1)]
    thickness: usize,
    /// Also write PGM image, label and prediction maps of the eval set.
    #[arg(long)]
    write_samples: bool,
    /// Output directory. Defaults to $DUC_HDC_OUT or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    net: PathBuf,
    /// Score the labels against themselves instead of running the net.
    #[arg(long)]
    oracle: bool,
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    print!("{}", to_json_string(value)?);
    Ok(())
}

fn schedule(args: &ScheduleArgs) -> anyhow::Result<DilationSchedule> {
    Ok(DilationSchedule::new(args.rates.clone(), args.kernel)?)
}

fn check(args: &ScheduleArgs) -> anyhow::Result<ExitCode> {
    let report = CheckReport::new(&schedule(args)?);
    print_json(&report)?;
    Ok(if report.valid { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

#[derive(Serialize)]
struct FootprintFile<'a> {
    #[serde(flatten)]
    report: &'a FootprintReport,
    counts: Vec<&'a [u64]>,
}

fn footprint_cmd(args: &FootprintArgs) -> anyhow::Result<ExitCode> {
    let s = schedule(&args.schedule)?;
    let fp = footprint(&s);
    let report = FootprintReport::new(&s, &fp);
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| default_out().join(format!("footprint.{}", args.format.extension())));
    let bytes = match args.format {
        FootprintFormat::Pgm => pgm::footprint_pgm(&fp).to_p2(),
        FootprintFormat::Csv => pgm::footprint_csv(&fp),
        FootprintFormat::Json => to_json_string(&FootprintFile { report: &report, counts: fp.rows().collect() })?,
    };
    write(&path, bytes.as_bytes())?;
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct RfOne {
    rates: Vec<usize>,
    #[serde(rename = "K")]
    kernel: usize,
    rf_increase: usize,
}

fn rf(args: &RfArgs) -> anyhow::Result<ExitCode> {
    match &args.rates {
        Some(rates) => {
            let s = DilationSchedule::new(rates.clone(), args.kernel)?;
            print_json(&RfOne { rates: rates.clone(), kernel: args.kernel, rf_increase: s.rf_increase() })?;
        }
        None => {
            if args.kernel.is_multiple_of(2) || args.kernel == 0 {
                bail!("kernel must be odd, got {}", args.kernel);
            }
            print_json(&rf_table(args.kernel))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn search(args: &SearchArgs) -> anyhow::Result<ExitCode> {
    let found = schedule_search(args.layers, args.kernel, args.rf_target)?;
    print_json(&found.iter().map(SearchEntry::new).collect::<Vec<_>>())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DucDemoReport {
    d: usize,
    classes: usize,
    in_channels: usize,
    input_shape: [usize; 4],
    duc_channels: usize,
    output_shape: [usize; 4],
    duc_params: usize,
    transposed_params: usize,
    max_abs_diff: f64,
    bitwise_equal: bool,
    rearrange_roundtrip: bool,
}

fn duc_demo(args: &DucDemoArgs) -> anyhow::Result<ExitCode> {
    let mut rng = Rng::new(args.seed);
    let spec = ConvSpec::new(args.d, 1, args.d, 0, args.channels, args.classes)?;
    let mut t = TransposedConv::he(spec, &mut rng);
    for b in &mut t.bias {
        *b = rng.normal();
    }
    let x = he_init(Shape::new(1, args.channels, args.size, args.size)?, 2, &mut rng)?;
    let reference = transposed_conv_forward(&x, &t)?;
    let (duc_spec, layer) = duc_from_transposed(&t)?;
    let features = conv2d_forward(&x, &layer)?;
    let out = duc_rearrange(&features, &duc_spec)?;
    let max_abs_diff = out.data().iter().zip(reference.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bitwise_equal = out.shape() == reference.shape()
        && out.data().iter().zip(reference.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    let back = duc_rearrange_inverse(&out, &duc_spec)?;
    let rearrange_roundtrip = back.data().iter().zip(features.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    print_json(&DucDemoReport {
        d: args.d,
        classes: args.classes,
        in_channels: args.channels,
        input_shape: x.shape().dims(),
        duc_channels: duc_spec.channels(),
        output_shape: out.shape().dims(),
        duc_params: layer.param_count(),
        transposed_params: t.param_count(),
        max_abs_diff,
        bitwise_equal,
        rearrange_roundtrip,
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TrainSummary {
    decoder: String,
    iters: usize,
    param_count: usize,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    per_class_iou: Vec<Option<f64>>,
    miou: f64,
}

fn train_cmd(args: &TrainArgs) -> anyhow::Result<ExitCode> {
    let decoder: DecoderKind = args.decoder.parse()?;
    let net = ToyNetConfig {
        width: args.width,
        d: args.d,
        rates: args.schedule.clone(),
        kernel: args.kernel,
        decoder,
        cell: args.cell,
        ..ToyNetConfig::default()
    };
    let data = ThinStructureConfig {
        height: args.image_size,
        width: args.image_size,
        thickness: args.thickness,
        ..ThinStructureConfig::default()
    };
    let sgd = SgdConfig {
        base_lr: args.lr,
        max_iter: args.iters,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        batch: args.batch,
        ..SgdConfig::default()
    };
    let mut seeds = Seeds::from_base(args.seed);
    seeds.init = args.init_seed.unwrap_or(seeds.init);
    seeds.sgd = args.sgd_seed.unwrap_or(seeds.sgd);
    let reduction = pipeline::parse_reduction(&args.reduction)?;
    let cfg = RunConfig::new(&net, &data, args.train_size, args.eval_size, &sgd, reduction, seeds);
    let outcome = pipeline::run(&cfg)?;
    let out = args.out.clone().unwrap_or_else(default_out);
    pipeline::save_run(&out, &cfg, &outcome)?;
    if args.write_samples {
        let (_, eval_set) = pipeline::datasets(&cfg)?;
        let dir = out.join("samples");
        pipeline::write_samples(&dir, "eval", &eval_set)?;
        for (i, s) in eval_set.iter().enumerate() {
            let pred = outcome.net.predict(&s.image)?;
            pgm::label_pgm(&pred[0]).write(&dir.join(format!("eval_{i:04}_pred.pgm")))?;
        }
    }
    print_json(&TrainSummary {
        decoder: decoder.name().to_string(),
        iters: args.iters,
        param_count: outcome.net.param_count(),
        first_loss: outcome.report.loss.first().copied(),
        final_loss: outcome.report.loss.last().copied(),
        per_class_iou: outcome.iou.per_class.clone(),
        miou: outcome.iou.mean,
    })?;
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let (cfg, net) = pipeline::load_net(&args.net)?;
    let (_, eval_set) = pipeline::datasets(&cfg)?;
    let mut confusion = Confusion::new(cfg.net.classes);
    for s in &eval_set {
        if args.oracle {
            confusion.add(&s.labels, &s.labels)?;
        } else {
            confusion.add(&net.predict(&s.image)?[0], &s.labels)?;
        }
    }
    let decoder = if args.oracle { "oracle" } else { cfg.net.decoder.as_str() };
    print_json(&EvalReport::new(decoder, &confusion))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Check(a) => check(a),
        Command::Footprint(a) => footprint_cmd(a),
        Command::Rf(a) => rf(a),
        Command::Search(a) => search(a),
        Command::DucDemo(a) => duc_demo(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
