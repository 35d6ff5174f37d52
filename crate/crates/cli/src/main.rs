//! Command-line harness wiring the reconstruction pipeline into
//! reproducible experiments.

mod config;
mod experiment;
mod manifest;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use maskdiff::recon::{write_trace_csv, DcPlacement, MaskRanges, Recombine, ReconConfig};
use maskdiff::ScoreModel;
use maskdiff::sde::save_scm1;
use maskdiff::{
    augment, dsm_loss, evaluate, generate_masks, generate_pattern, io as mio, metrics, phantom,
    stack_hybrid, train, ChannelLayout, LowSlot, MetricsRow, NoiseSchedule, PatternSpec,
    ThresholdRange, TinyDenoiser, TrainingConfig, WaveletFamily, WaveletSpec,
};

use config::{substream, Settings};
use experiment::{
    parse_pattern, parse_phantom, run_experiment, MeasurementPlan, ModelChoice, TruthSource,
};
use manifest::{atomic_write, resolve_out_dir, RunManifest};

#[derive(Parser)]
#[command(
    name = "maskdiff",
    version,
    about = "Adaptive mask-guided k-space diffusion reconstruction experiments"
)]
struct Cli {
    /// Flat key = value configuration file; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; stages derive named deterministic sub-streams from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset directory.
    GenData(GenDataArgs),
    /// Emit adaptive masks and wavelet residual maps for a k-space file.
    GenMask(GenMaskArgs),
    /// Emit an undersampling pattern.
    GenPattern(GenPatternArgs),
    /// Train a score model on a dataset directory.
    Train(TrainArgs),
    /// Run the closed-loop reconstruction on a measurement.
    Recon(ReconCmdArgs),
    /// Compare a reconstruction to a reference and print a metrics cell.
    Eval(EvalArgs),
    /// Run reconstructions across acceleration factors, patterns, and
    /// channel counts; emit comparison and channel-ablation tables.
    Sweep(SweepArgs),
    /// Rerun a reconstruction logging per-iteration metrics curves.
    Convergence(ReconCmdArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// shepp-logan | gaussian-blobs | smooth-random
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    /// Add horizontal/vertical flips.
    #[arg(long)]
    flips: bool,
    /// Add 90/180/270 degree rotations.
    #[arg(long)]
    rotations: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WaveletArgs {
    /// haar | db4
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// quantile | absolute
    #[arg(long)]
    threshold_mode: Option<String>,
    /// Low-mask range as "lo,hi" (hi may be inf in absolute mode).
    #[arg(long)]
    low_range: Option<String>,
    /// High-mask range as "lo,hi"; repeat once per high mask.
    #[arg(long = "high-range")]
    high_ranges: Vec<String>,
    /// Number of high masks when no explicit ranges are given.
    #[arg(long)]
    n_high: Option<usize>,
}

#[derive(Args)]
struct GenMaskArgs {
    /// Input k-space (KSP1, one channel).
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    wavelet: WaveletArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenPatternArgs {
    /// random2d | poisson | radial
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    accel: Option<f64>,
    #[arg(long)]
    center_fraction: Option<f64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    n_scales: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory from gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Slot of the low channel: before | middle | after.
    #[arg(long)]
    layout: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    wavelet: WaveletArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    /// Phantom ground truth: shepp-logan | gaussian-blobs | smooth-random.
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    /// Ground-truth image file (KSP1) instead of a phantom.
    #[arg(long)]
    input: Option<PathBuf>,
    /// random2d | poisson | radial
    #[arg(long)]
    pattern: Option<String>,
    /// Pre-generated sampling mask (KSP1).
    #[arg(long)]
    pattern_file: Option<PathBuf>,
    #[arg(long)]
    accel: Option<f64>,
    #[arg(long)]
    center_fraction: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,

    /// Use the analytic Gaussian surrogate score built from the truth
    /// (the default when no checkpoints are given).
    #[arg(long)]
    analytic_score: bool,
    #[arg(long)]
    base_var: Option<f64>,
    #[arg(long)]
    model_d1: Option<PathBuf>,
    #[arg(long)]
    model_d2: Option<PathBuf>,
    /// One checkpoint reused for both cascade stages.
    #[arg(long)]
    model: Option<PathBuf>,

    #[arg(long)]
    outer_steps: Option<usize>,
    #[arg(long)]
    corrector_loops: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// per-iteration | final
    #[arg(long)]
    dc: Option<String>,
    /// mean | mask-weighted
    #[arg(long)]
    recombine: Option<String>,
    /// before | middle | after
    #[arg(long)]
    layout_d1: Option<String>,
    #[arg(long)]
    layout_d2: Option<String>,

    #[command(flatten)]
    wavelet: WaveletArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct ReconCmdArgs {
    #[command(flatten)]
    recon: ReconArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstruction image (KSP1).
    #[arg(long)]
    recon: PathBuf,
    /// Reference image (KSP1).
    #[arg(long)]
    reference: PathBuf,
    /// Append "recon,reference,psnr/ssim/mse" to this file.
    #[arg(long)]
    append: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    recon: ReconArgs,
    /// Channel counts, e.g. 4,6,8 (each maps to n_high = C/2 − 1).
    #[arg(long)]
    channels: Option<String>,
    /// Acceleration factors, e.g. 4,8.
    #[arg(long)]
    accels: Option<String>,
    /// Pattern kinds, e.g. random2d,poisson.
    #[arg(long)]
    patterns: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.resolve(cli.seed, "seed", 0u64)?;
    match cli.command {
        Command::GenData(args) => gen_data(args, &settings, seed),
        Command::GenMask(args) => gen_mask(args, &settings, seed),
        Command::GenPattern(args) => gen_pattern(args, &settings, seed),
        Command::Train(args) => train_cmd(args, &settings, seed),
        Command::Recon(args) => recon_cmd(args, &settings, seed, false),
        Command::Convergence(args) => recon_cmd(args, &settings, seed, true),
        Command::Eval(args) => eval_cmd(args),
        Command::Sweep(args) => sweep_cmd(args, &settings, seed),
    }
}

fn parse_family(name: &str) -> Result<WaveletFamily> {
    Ok(match name {
        "haar" => WaveletFamily::Haar,
        "db4" => WaveletFamily::Daubechies4,
        other => bail!("unknown wavelet family {other}"),
    })
}

fn parse_low_slot(name: &str) -> Result<LowSlot> {
    Ok(match name {
        "before" => LowSlot::Before,
        "middle" => LowSlot::Middle,
        "after" => LowSlot::After,
        other => bail!("unknown layout slot {other}"),
    })
}

fn parse_range(text: &str, mode: &str) -> Result<ThresholdRange> {
    let Some((lo, hi)) = text.split_once(',') else {
        bail!("range {text} must be lo,hi");
    };
    let lo: f64 = lo.trim().parse().context("range lo")?;
    let hi: f64 = if hi.trim() == "inf" {
        f64::INFINITY
    } else {
        hi.trim().parse().context("range hi")?
    };
    Ok(match mode {
        "quantile" => ThresholdRange::quantile(lo, hi)?,
        "absolute" => ThresholdRange::absolute(lo, hi)?,
        other => bail!("unknown threshold mode {other}"),
    })
}

fn resolve_wavelet(args: &WaveletArgs, settings: &Settings) -> Result<WaveletSpec> {
    let family = settings.resolve(args.family.clone(), "family", "haar".to_string())?;
    let levels = settings.resolve(args.levels, "levels", 2usize)?;
    Ok(WaveletSpec::new(parse_family(&family)?, levels)?)
}

fn resolve_ranges(args: &ThresholdArgs, settings: &Settings) -> Result<MaskRanges> {
    let mode = settings.resolve(
        args.threshold_mode.clone(),
        "threshold_mode",
        "quantile".to_string(),
    )?;
    let n_high = if args.high_ranges.is_empty() {
        settings.resolve(args.n_high, "n_high", 2usize)?
    } else {
        args.high_ranges.len()
    };
    let mut ranges = MaskRanges::defaults(n_high)?;
    if mode == "absolute" && (args.low_range.is_none() || args.high_ranges.is_empty()) {
        bail!("absolute threshold mode requires explicit --low-range and --high-range flags");
    }
    if let Some(low) = settings.resolve_opt(args.low_range.clone(), "low_range")? {
        ranges.low = parse_range(&low, &mode)?;
    }
    if !args.high_ranges.is_empty() {
        ranges.highs = args
            .high_ranges
            .iter()
            .map(|r| parse_range(r, &mode))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(ranges)
}

fn resolve_schedule(args: &ScheduleArgs, settings: &Settings) -> Result<NoiseSchedule> {
    let sigma_min = settings.resolve(args.sigma_min, "sigma_min", 0.01)?;
    let sigma_max = settings.resolve(args.sigma_max, "sigma_max", 378.0)?;
    let n_scales = settings.resolve(args.n_scales, "n_scales", 1000usize)?;
    Ok(NoiseSchedule::new(sigma_min, sigma_max, n_scales)?)
}

fn gen_data(args: GenDataArgs, settings: &Settings, seed: u64) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::new("gen-data");
    let kind = settings.resolve(args.kind, "kind", "gaussian-blobs".to_string())?;
    let count = settings.resolve(args.count, "count", 16usize)?;
    let size = settings.resolve(args.size, "size", 64usize)?;
    let data_seed = substream(seed, "data");
    let ds = manifest.time_stage("generate", || {
        Ok(phantom::make_dataset(
            parse_phantom(&kind)?,
            count,
            size,
            data_seed,
        )?)
    })?;
    let ds = if args.flips || args.rotations {
        augment(&ds, args.flips, args.rotations)?
    } else {
        ds
    };
    manifest.time_stage("write", || Ok(phantom::save_dataset(&ds, &out)?))?;
    manifest.set("kind", &kind);
    manifest.set("count", ds.len());
    manifest.set("size", size);
    manifest.set("seed", seed);
    manifest.set("seed.data", data_seed);
    manifest.set("flips", args.flips);
    manifest.set("rotations", args.rotations);
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!("wrote {} items to {}", ds.len(), out.display());
    Ok(())
}

fn gen_mask(args: GenMaskArgs, settings: &Settings, seed: u64) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::new("gen-mask");
    let spec = resolve_wavelet(&args.wavelet, settings)?;
    let ranges = resolve_ranges(&args.thresholds, settings)?;
    let k = mio::read_grid(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (low_res, high_res) = maskdiff::frequency_residuals(&k, &spec)?;
    let masks = manifest.time_stage("generate", || {
        Ok(generate_masks(&k, &spec, &ranges.low, &ranges.highs)?)
    })?;
    for warning in masks.warnings() {
        eprintln!("warning: {warning}");
        manifest.set("warning", &warning);
    }
    let as_grid = |r: &ndarray::Array2<f64>| -> Result<maskdiff::ComplexGrid> {
        Ok(maskdiff::ComplexGrid::new(
            r.mapv(|v| num_complex::Complex64::new(v, 0.0)),
        )?)
    };
    mio::write_grid(&out.join("residual_low.ksp1"), &as_grid(&low_res)?)?;
    mio::write_grid(&out.join("residual_high.ksp1"), &as_grid(&high_res)?)?;
    let write_mask = |name: String, grid: &ndarray::Array2<u8>| -> Result<()> {
        mio::write_pgm(&out.join(format!("{name}.pgm")), grid)?;
        let complex = maskdiff::ComplexGrid::new(
            grid.mapv(|v| num_complex::Complex64::new(v as f64, 0.0)),
        )?;
        mio::write_grid(&out.join(format!("{name}.ksp1")), &complex)?;
        Ok(())
    };
    write_mask("mask_low".to_string(), masks.low.grid())?;
    for (i, m) in masks.highs.iter().enumerate() {
        write_mask(format!("mask_high_{}", i + 1), m.grid())?;
    }
    manifest.set("input", args.input.display());
    manifest.set("family", format!("{:?}", spec.family));
    manifest.set("levels", spec.levels);
    manifest.set("n_high", masks.n_high());
    manifest.set("low.popcount", masks.low.popcount());
    manifest.set("seed", seed);
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!(
        "wrote low mask ({} px) and {} high masks to {}",
        masks.low.popcount(),
        masks.highs.len(),
        out.display()
    );
    Ok(())
}

fn gen_pattern(args: GenPatternArgs, settings: &Settings, seed: u64) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::new("gen-pattern");
    let kind = settings.resolve(args.kind, "pattern", "random2d".to_string())?;
    let accel = settings.resolve(args.accel, "accel", 4.0)?;
    let cf = settings.resolve(args.center_fraction, "center_fraction", 0.04)?;
    let height = settings.resolve(args.height, "height", 64usize)?;
    let width = settings.resolve(args.width, "width", 64usize)?;
    let pattern_seed = substream(seed, "pattern");
    let spec = PatternSpec::new(parse_pattern(&kind)?, accel, cf, pattern_seed)?;
    let mask = manifest.time_stage("generate", || Ok(generate_pattern(&spec, height, width)?))?;
    mio::write_sampling_mask(&out.join("pattern.ksp1"), &mask)?;
    mio::write_pgm(&out.join("pattern.pgm"), mask.entries())?;
    manifest.set("kind", &kind);
    manifest.set("accel.target", accel);
    manifest.set("accel.achieved", format!("{:.4}", mask.acceleration()));
    manifest.set("center_fraction", cf);
    manifest.set("height", height);
    manifest.set("width", width);
    manifest.set("seed", seed);
    manifest.set("seed.pattern", pattern_seed);
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!(
        "pattern {} with {} samples (AF {:.3}) written to {}",
        kind,
        mask.popcount(),
        mask.acceleration(),
        out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs, settings: &Settings, seed: u64) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::new("train");
    let spec = resolve_wavelet(&args.wavelet, settings)?;
    let ranges = resolve_ranges(&args.thresholds, settings)?;
    let schedule = resolve_schedule(&args.schedule, settings)?;
    let slot = settings.resolve(args.layout.clone(), "layout", "middle".to_string())?;
    let layout = ChannelLayout::new(parse_low_slot(&slot)?, ranges.n_high())?;
    let hidden = settings.resolve(args.hidden, "hidden", 16usize)?;
    let cfg = TrainingConfig {
        learning_rate: settings.resolve(args.lr, "lr", 1e-3)?,
        beta1: settings.resolve(args.beta1, "beta1", 0.9)?,
        beta2: settings.resolve(args.beta2, "beta2", 0.999)?,
        batch_size: settings.resolve(args.batch_size, "batch_size", 2usize)?,
        steps: settings.resolve(args.steps, "steps", 2000usize)?,
        weighting: maskdiff::sde::Weighting::SigmaSq,
    };

    let ds = phantom::load_dataset(&args.data)
        .with_context(|| format!("stage data: loading {}", args.data.display()))?;
    let tensors = manifest.time_stage("stack", || {
        ds.items
            .iter()
            .map(|img| {
                let k = maskdiff::fft2c(img)?;
                let masks = generate_masks(&k, &spec, &ranges.low, &ranges.highs)?;
                Ok(stack_hybrid(&k, &masks, &layout)?.into_data())
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut model = TinyDenoiser::new(
        layout.n_planes(),
        hidden,
        schedule,
        substream(seed, "init"),
    )?;
    let eval_seed = substream(seed, "eval");
    let eval_count = tensors.len().min(32);
    let before = dsm_loss(&model, &tensors[..eval_count], &schedule, eval_seed)?;
    let trace = manifest.time_stage("train", || {
        Ok(train(
            &mut model,
            &tensors,
            &cfg,
            &schedule,
            substream(seed, "train"),
        )?)
    })?;
    let after = dsm_loss(&model, &tensors[..eval_count], &schedule, eval_seed)?;

    save_scm1(&out.join("model.scm1"), &model.parameters())?;
    mio::write_loss_trace(&out.join("loss.csv"), &trace)?;
    manifest.set("data", args.data.display());
    manifest.set("items", tensors.len());
    manifest.set("channels", layout.n_planes());
    manifest.set("hidden", hidden);
    manifest.set("layout", &slot);
    manifest.set("lr", cfg.learning_rate);
    manifest.set("beta1", cfg.beta1);
    manifest.set("beta2", cfg.beta2);
    manifest.set("batch_size", cfg.batch_size);
    manifest.set("steps", cfg.steps);
    manifest.set("sigma_min", schedule.sigma_min);
    manifest.set("sigma_max", schedule.sigma_max);
    manifest.set("n_scales", schedule.n_scales);
    manifest.set("seed", seed);
    manifest.set("loss.eval_before", format!("{before:.4}"));
    manifest.set("loss.eval_after", format!("{after:.4}"));
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!(
        "trained {} steps: eval loss {before:.1} -> {after:.1}; checkpoint at {}",
        cfg.steps,
        out.join("model.scm1").display()
    );
    Ok(())
}

struct ResolvedRecon {
    plan: MeasurementPlan,
    models: ModelChoice,
    cfg: ReconConfig,
    model_desc: String,
}

fn resolve_recon(args: &ReconArgs, settings: &Settings, seed: u64) -> Result<ResolvedRecon> {
    let ranges = resolve_ranges(&args.thresholds, settings)?;
    let n_high = ranges.n_high();
    let truth = match (&args.input, &args.phantom) {
        (Some(path), None) => TruthSource::File(path.clone()),
        (None, phantom) => TruthSource::Phantom {
            kind: parse_phantom(&settings.resolve(
                phantom.clone(),
                "phantom",
                "shepp-logan".to_string(),
            )?)?,
            size: settings.resolve(args.size, "size", 64usize)?,
        },
        (Some(_), Some(_)) => bail!("--input and --phantom are mutually exclusive"),
    };
    let pattern_kind = match &args.pattern_file {
        Some(_) => None,
        None => Some(parse_pattern(&settings.resolve(
            args.pattern.clone(),
            "pattern",
            "random2d".to_string(),
        )?)?),
    };
    let plan = MeasurementPlan {
        truth,
        pattern_kind,
        pattern_file: args.pattern_file.clone(),
        accel: settings.resolve(args.accel, "accel", 4.0)?,
        center_fraction: settings.resolve(args.center_fraction, "center_fraction", 0.04)?,
        noise_std: settings.resolve(args.noise_std, "noise_std", 0.0)?,
        seed,
    };

    let (models, model_desc) = match (&args.model, &args.model_d1, &args.model_d2) {
        (Some(single), None, None) => (
            ModelChoice::Single(single.clone()),
            format!("single:{}", single.display()),
        ),
        (None, Some(d1), Some(d2)) => (
            ModelChoice::Checkpoints {
                d1: d1.clone(),
                d2: d2.clone(),
            },
            format!("checkpoints:{},{}", d1.display(), d2.display()),
        ),
        (None, None, None) => {
            let base_var = settings.resolve(args.base_var, "base_var", 1e-6)?;
            (
                ModelChoice::Analytic { base_var },
                format!("analytic:base_var={base_var}"),
            )
        }
        _ => bail!("use either --model, or --model-d1 with --model-d2"),
    };

    let dc = match settings
        .resolve(args.dc.clone(), "dc", "per-iteration".to_string())?
        .as_str()
    {
        "per-iteration" => DcPlacement::PerIteration,
        "final" => DcPlacement::FinalOnly,
        other => bail!("unknown dc placement {other}"),
    };
    let recombine = match settings
        .resolve(args.recombine.clone(), "recombine", "mean".to_string())?
        .as_str()
    {
        "mean" => Recombine::Mean,
        "mask-weighted" => Recombine::MaskWeighted,
        other => bail!("unknown recombine mode {other}"),
    };
    let d1_slot = settings.resolve(args.layout_d1.clone(), "layout_d1", "middle".to_string())?;
    let d2_slot = settings.resolve(args.layout_d2.clone(), "layout_d2", "before".to_string())?;

    let cfg = ReconConfig {
        mu: settings.resolve(args.mu, "mu", 0.0)?,
        outer_steps: settings.resolve(args.outer_steps, "outer_steps", 200usize)?,
        corrector_loops: settings.resolve(args.corrector_loops, "corrector_loops", 1usize)?,
        snr: settings.resolve(args.snr, "snr", 0.16)?,
        schedule: resolve_schedule(&args.schedule, settings)?,
        wavelet: resolve_wavelet(&args.wavelet, settings)?,
        mask_ranges: ranges,
        layout_d1: ChannelLayout::new(parse_low_slot(&d1_slot)?, n_high)?,
        layout_d2: ChannelLayout::new(parse_low_slot(&d2_slot)?, n_high)?,
        recombine,
        dc,
        seed: substream(seed, "sampler"),
    };
    cfg.validate()?;
    Ok(ResolvedRecon {
        plan,
        models,
        cfg,
        model_desc,
    })
}

fn describe_recon_manifest(manifest: &mut RunManifest, r: &ResolvedRecon, seed: u64) {
    manifest.set("seed", seed);
    manifest.set("seed.sampler", r.cfg.seed);
    manifest.set("model", &r.model_desc);
    manifest.set("mu", r.cfg.mu);
    manifest.set("outer_steps", r.cfg.outer_steps);
    manifest.set("corrector_loops", r.cfg.corrector_loops);
    manifest.set("snr", r.cfg.snr);
    manifest.set("sigma_min", r.cfg.schedule.sigma_min);
    manifest.set("sigma_max", r.cfg.schedule.sigma_max);
    manifest.set("n_scales", r.cfg.schedule.n_scales);
    manifest.set("dc", format!("{:?}", r.cfg.dc));
    manifest.set("recombine", format!("{:?}", r.cfg.recombine));
    manifest.set("n_high", r.cfg.mask_ranges.n_high());
    manifest.set("accel.target", r.plan.accel);
    manifest.set("center_fraction", r.plan.center_fraction);
    manifest.set("noise_std", r.plan.noise_std);
    manifest.set(
        "metrics.normalization",
        "magnitude images scaled by 1/max(|reference|)",
    );
}

fn recon_cmd(args: ReconCmdArgs, settings: &Settings, seed: u64, convergence: bool) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let command = if convergence { "convergence" } else { "recon" };
    let mut manifest = RunManifest::new(command);
    let resolved = resolve_recon(&args.recon, settings, seed)?;
    let result = manifest.time_stage("recon", || {
        run_experiment(&resolved.plan, &resolved.models, &resolved.cfg)
    })?;

    mio::write_grid(&out.join("image.ksp1"), &result.output.image)?;
    mio::write_grid(&out.join("kspace.ksp1"), &result.output.kspace)?;
    mio::write_sampling_mask(&out.join("pattern.ksp1"), &result.built.pattern)?;
    mio::write_pgm(&out.join("pattern.pgm"), result.built.pattern.entries())?;
    let trace_name = if convergence {
        "convergence.csv"
    } else {
        "metrics.csv"
    };
    write_trace_csv(&out.join(trace_name), &result.output.state.trace)?;

    describe_recon_manifest(&mut manifest, &resolved, seed);
    manifest.set(
        "accel.achieved",
        format!("{:.4}", result.built.pattern.acceleration()),
    );
    manifest.set("iterations", result.output.state.iterations);
    manifest.set("metrics.zero_filled", result.zero_filled.cell());
    manifest.set("metrics.final", result.final_metrics.cell());
    for w in &result.output.state.mask_warnings {
        manifest.set("warning", w);
    }
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!(
        "zero-filled {} | reconstruction {} | artifacts in {}",
        result.zero_filled.cell(),
        result.final_metrics.cell(),
        out.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let recon = mio::read_grid(&args.recon)
        .with_context(|| format!("reading {}", args.recon.display()))?;
    let reference = mio::read_grid(&args.reference)
        .with_context(|| format!("reading {}", args.reference.display()))?;
    let row = evaluate(&recon, &reference)?;
    println!("{}", row.cell());
    if let Some(path) = args.append {
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        writeln!(
            file,
            "{},{},{}",
            args.recon.display(),
            args.reference.display(),
            row.cell()
        )?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} entry {s}: {e}"))
        })
        .collect()
}

struct SweepCell {
    pattern: String,
    accel: f64,
    channels: usize,
    zero_filled: MetricsRow,
    metrics: MetricsRow,
}

fn sweep_cmd(args: SweepArgs, settings: &Settings, seed: u64) -> Result<()> {
    let out = resolve_out_dir(&args.out);
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::new("sweep");
    let channels: Vec<usize> = parse_list(
        &settings.resolve(args.channels, "channels", "4,6,8".to_string())?,
        "channel count",
    )?;
    for c in &channels {
        if c % 2 != 0 || *c < 4 {
            bail!("channel counts must be even and at least 4, got {c}");
        }
    }
    let accels: Vec<f64> = parse_list(
        &settings.resolve(args.accels, "accels", "4".to_string())?,
        "acceleration",
    )?;
    let patterns: Vec<String> = parse_list(
        &settings.resolve(args.patterns, "patterns", "random2d".to_string())?,
        "pattern",
    )?;

    let mut jobs = Vec::new();
    for pattern in &patterns {
        for &accel in &accels {
            for &ch in &channels {
                jobs.push((pattern.clone(), accel, ch));
            }
        }
    }
    let results: Vec<Result<SweepCell>> = manifest.time_stage("sweep", || {
        Ok(jobs
            .par_iter()
            .map(|(pattern, accel, ch)| -> Result<SweepCell> {
                let n_high = ch / 2 - 1;
                let mut cell_args = clone_recon_args(&args.recon);
                cell_args.pattern = Some(pattern.clone());
                cell_args.accel = Some(*accel);
                cell_args.thresholds.n_high = Some(n_high);
                cell_args.thresholds.high_ranges = Vec::new();
                let cell_seed = substream(seed, &format!("sweep/{pattern}/{accel}/{ch}"));
                let resolved = resolve_recon(&cell_args, settings, cell_seed)?;
                let result = run_experiment(&resolved.plan, &resolved.models, &resolved.cfg)?;
                Ok(SweepCell {
                    pattern: pattern.clone(),
                    accel: *accel,
                    channels: *ch,
                    zero_filled: result.zero_filled,
                    metrics: result.final_metrics,
                })
            })
            .collect())
    })?;
    let cells: Vec<SweepCell> = results.into_iter().collect::<Result<Vec<_>>>()?;

    // comparison table across every grid cell
    let mut rows =
        vec!["pattern,accel,channels,psnr,ssim,mse_x1e4,zero_filled_cell,cell".to_string()];
    for c in &cells {
        rows.push(format!(
            "{},{},{},{:.4},{:.6},{:.4},{},{}",
            c.pattern,
            c.accel,
            c.channels,
            c.metrics.psnr,
            c.metrics.ssim,
            c.metrics.mse * 1e4,
            c.zero_filled.cell(),
            c.metrics.cell()
        ));
    }
    atomic_write(&out.join("table.csv"), (rows.join("\n") + "\n").as_bytes())?;

    // channel-ablation table for the first pattern × accel combination
    let (p0, a0) = (&patterns[0], accels[0]);
    let ablation: Vec<&SweepCell> = cells
        .iter()
        .filter(|c| &c.pattern == p0 && c.accel == a0)
        .collect();
    let mut ab_rows = vec![format!(
        "metric,{}",
        ablation
            .iter()
            .map(|c| format!("{}-ch", c.channels))
            .collect::<Vec<_>>()
            .join(",")
    )];
    type CellFmt<'a> = &'a dyn Fn(&MetricsRow) -> String;
    let psnr_fmt = |m: &MetricsRow| format!("{:.2}", m.psnr);
    let ssim_fmt = |m: &MetricsRow| format!("{:.4}", m.ssim);
    let mse_fmt = |m: &MetricsRow| format!("{:.3}", m.mse * 1e4);
    let row_defs: [(&str, CellFmt); 3] = [
        ("PSNR", &psnr_fmt),
        ("SSIM", &ssim_fmt),
        ("MSE", &mse_fmt),
    ];
    for (label, f) in row_defs {
        ab_rows.push(format!(
            "{label},{}",
            ablation
                .iter()
                .map(|c| f(&c.metrics))
                .collect::<Vec<_>>()
                .join(",")
        ));
    }
    atomic_write(
        &out.join("ablation.csv"),
        (ab_rows.join("\n") + "\n").as_bytes(),
    )?;

    let text = metrics::format_table(
        &ablation
            .iter()
            .map(|c| format!("{}-ch", c.channels))
            .collect::<Vec<_>>(),
        &[(
            format!("{p0} R={a0}"),
            ablation.iter().map(|c| c.metrics).collect(),
        )],
    );
    atomic_write(&out.join("ablation.txt"), text.as_bytes())?;

    let winner = ablation
        .iter()
        .max_by(|a, b| a.metrics.psnr.total_cmp(&b.metrics.psnr))
        .map(|c| c.channels)
        .unwrap_or(0);
    manifest.set("seed", seed);
    manifest.set("channels", format!("{channels:?}"));
    manifest.set("accels", format!("{accels:?}"));
    manifest.set("patterns", format!("{patterns:?}"));
    manifest.set("cells", cells.len());
    manifest.set("ablation.observed_best_channels", winner);
    manifest.set_path("out", &out);
    manifest.write(&out)?;
    println!("{text}");
    println!(
        "sweep of {} cells complete; observed best channel count {winner}; tables in {}",
        cells.len(),
        out.display()
    );
    Ok(())
}

fn clone_recon_args(a: &ReconArgs) -> ReconArgs {
    ReconArgs {
        phantom: a.phantom.clone(),
        size: a.size,
        input: a.input.clone(),
        pattern: a.pattern.clone(),
        pattern_file: a.pattern_file.clone(),
        accel: a.accel,
        center_fraction: a.center_fraction,
        noise_std: a.noise_std,
        analytic_score: a.analytic_score,
        base_var: a.base_var,
        model_d1: a.model_d1.clone(),
        model_d2: a.model_d2.clone(),
        model: a.model.clone(),
        outer_steps: a.outer_steps,
        corrector_loops: a.corrector_loops,
        snr: a.snr,
        mu: a.mu,
        dc: a.dc.clone(),
        recombine: a.recombine.clone(),
        layout_d1: a.layout_d1.clone(),
        layout_d2: a.layout_d2.clone(),
        wavelet: WaveletArgs {
            family: a.wavelet.family.clone(),
            levels: a.wavelet.levels,
        },
        thresholds: ThresholdArgs {
            threshold_mode: a.thresholds.threshold_mode.clone(),
            low_range: a.thresholds.low_range.clone(),
            high_ranges: a.thresholds.high_ranges.clone(),
            n_high: a.thresholds.n_high,
        },
        schedule: ScheduleArgs {
            sigma_min: a.schedule.sigma_min,
            sigma_max: a.schedule.sigma_max,
            n_scales: a.schedule.n_scales,
        },
    }
}
