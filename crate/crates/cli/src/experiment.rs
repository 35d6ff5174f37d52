//! Shared assembly for the recon-style commands: build the ground truth and
//! measurement, construct the cascade score models, and run the loop.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maskdiff::recon::analytic_surrogate_models;
use maskdiff::sde::load_scm1;
use maskdiff::{
    apply_sampling, fft2c, generate_pattern, io as mio, make_phantom, reconstruct, zero_filled,
    ComplexGrid, Measurement, MetricsRow, PatternKind, PatternSpec, PhantomKind, ReconConfig,
    ReconOutput, SamplingMask, ScoreModel, TinyDenoiser,
};

use crate::config::substream;

pub fn parse_phantom(name: &str) -> Result<PhantomKind> {
    Ok(match name {
        "shepp-logan" => PhantomKind::SheppLogan,
        "gaussian-blobs" => PhantomKind::GaussianBlobs,
        "smooth-random" => PhantomKind::SmoothRandom,
        other => bail!("unknown phantom kind {other}"),
    })
}

pub fn parse_pattern(name: &str) -> Result<PatternKind> {
    Ok(match name {
        "random2d" => PatternKind::Random2D,
        "poisson" => PatternKind::Poisson,
        "radial" => PatternKind::Radial,
        other => bail!("unknown pattern kind {other}"),
    })
}

/// Where the ground-truth image comes from.
pub enum TruthSource {
    Phantom { kind: PhantomKind, size: usize },
    File(PathBuf),
}

pub struct MeasurementPlan {
    pub truth: TruthSource,
    pub pattern_kind: Option<PatternKind>,
    pub pattern_file: Option<PathBuf>,
    pub accel: f64,
    pub center_fraction: f64,
    pub noise_std: f64,
    pub seed: u64,
}

pub struct BuiltMeasurement {
    pub truth_image: ComplexGrid,
    pub truth_kspace: ComplexGrid,
    pub pattern: SamplingMask,
    pub meas: Measurement,
}

impl MeasurementPlan {
    pub fn build(&self) -> Result<BuiltMeasurement> {
        let truth_image = match &self.truth {
            TruthSource::Phantom { kind, size } => {
                make_phantom(*kind, *size, substream(self.seed, "data"))
                    .context("stage phantom")?
            }
            TruthSource::File(path) => mio::read_grid(path)
                .with_context(|| format!("stage input: reading {}", path.display()))?,
        };
        let truth_kspace = fft2c(&truth_image).context("stage fft")?;
        let (h, w) = truth_image.dim();
        let pattern = match (&self.pattern_file, self.pattern_kind) {
            (Some(path), _) => mio::read_sampling_mask(path)
                .with_context(|| format!("stage pattern: reading {}", path.display()))?,
            (None, Some(kind)) => generate_pattern(
                &PatternSpec::new(kind, self.accel, self.center_fraction,
                    substream(self.seed, "pattern"))?,
                h,
                w,
            )
            .context("stage pattern")?,
            (None, None) => bail!("stage pattern: need --pattern or --pattern-file"),
        };
        let meas = apply_sampling(
            &truth_kspace,
            &pattern,
            self.noise_std,
            substream(self.seed, "noise"),
        )
        .context("stage sampling")?;
        Ok(BuiltMeasurement {
            truth_image,
            truth_kspace,
            pattern,
            meas,
        })
    }
}

/// Which score models drive the cascade.
pub enum ModelChoice {
    Analytic { base_var: f64 },
    Checkpoints { d1: PathBuf, d2: PathBuf },
    Single(PathBuf),
}

impl ModelChoice {
    pub fn build(
        &self,
        truth_kspace: &ComplexGrid,
        cfg: &ReconConfig,
    ) -> Result<(Box<dyn ScoreModel>, Box<dyn ScoreModel>)> {
        match self {
            ModelChoice::Analytic { base_var } => {
                let (d1, d2) = analytic_surrogate_models(truth_kspace, cfg, *base_var)
                    .context("stage models")?;
                Ok((Box::new(d1), Box::new(d2)))
            }
            ModelChoice::Checkpoints { d1, d2 } => {
                Ok((load_denoiser(d1, cfg)?, load_denoiser(d2, cfg)?))
            }
            ModelChoice::Single(path) => {
                let model = load_denoiser(path, cfg)?;
                let again = load_denoiser(path, cfg)?;
                Ok((model, again))
            }
        }
    }
}

fn load_denoiser(path: &Path, cfg: &ReconConfig) -> Result<Box<dyn ScoreModel>> {
    let params = load_scm1(path)
        .with_context(|| format!("stage models: reading {}", path.display()))?;
    let net = TinyDenoiser::from_parameters(&params, cfg.schedule)
        .with_context(|| format!("stage models: rebuilding from {}", path.display()))?;
    if net.channels() != cfg.layout_d1.n_planes() {
        bail!(
            "stage models: checkpoint {} has {} input planes, layout needs {}",
            path.display(),
            net.channels(),
            cfg.layout_d1.n_planes()
        );
    }
    Ok(Box::new(net))
}

pub struct ExperimentResult {
    pub built: BuiltMeasurement,
    pub output: ReconOutput,
    pub zero_filled: MetricsRow,
    pub final_metrics: MetricsRow,
}

/// Build the measurement, run the reconstruction, and score both the result
/// and the zero-filled baseline against the ground truth.
pub fn run_experiment(
    plan: &MeasurementPlan,
    models: &ModelChoice,
    cfg: &ReconConfig,
) -> Result<ExperimentResult> {
    let built = plan.build()?;
    let (d1, d2) = models.build(&built.truth_kspace, cfg)?;
    let output = reconstruct(&built.meas, d1.as_ref(), d2.as_ref(), cfg, Some(&built.truth_image))
        .context("stage recon")?;
    let zf = zero_filled(&built.meas).context("stage zero-filled")?;
    let zero_metrics = maskdiff::evaluate(&zf, &built.truth_image).context("stage metrics")?;
    let final_metrics =
        maskdiff::evaluate(&output.image, &built.truth_image).context("stage metrics")?;
    Ok(ExperimentResult {
        built,
        output,
        zero_filled: zero_metrics,
        final_metrics,
    })
}
