//! Reproducible generation runs: resolved parameters in, latent tensor and
//! manifest out, and replay of a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    AnalyticGaussian, Capabilities, Denoiser, Endpoint, ExternalDenoiser, JointContext, MockDenoiser, NoiseSchedule,
    SamplerConfig, ScheduleConfig, ZeroDenoiser,
};
use crate::error::{Error, Result};
use crate::layout::{parse_scene_layout, Canvas, SceneLayout};
use crate::pyramid::{pppi, PhaseInputs, PhaseRecord, PyramidConfig};
use crate::tensor::{sha256_hex, LatentTensor};
use crate::view::{rasterize_to_grid, ConditionSet, Dims, PlanSpec, RasterConfig, RasterGrid};

pub const MANIFEST_FORMAT: &str = "dts.run.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Analytic { mean: f64, std: f64 },
    Mock,
    Zero,
    External { endpoint: String },
}

impl BackendChoice {
    pub fn connect(&self) -> Result<Box<dyn Denoiser>> {
        Ok(match self {
            BackendChoice::Analytic { mean, std } => {
                if !(std.is_finite() && *std > 0.0) {
                    return Err(Error::Config(format!("prior std {std} must be positive")));
                }
                Box::new(AnalyticGaussian::new(*mean, *std))
            }
            BackendChoice::Mock => Box::new(MockDenoiser),
            BackendChoice::Zero => Box::new(ZeroDenoiser),
            BackendChoice::External { endpoint } => Box::new(ExternalDenoiser::connect(endpoint.parse::<Endpoint>()?)?),
        })
    }
}

/// Every setting that determines a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub layout: Option<PathBuf>,
    /// Final canvas in pixels; defaults to the layout's canvas.
    pub canvas: Option<Canvas>,
    pub latent_scale: u32,
    /// Window edge and stride in pixels; both must be multiples of `latent_scale`.
    pub window: usize,
    pub stride: usize,
    pub channels: usize,
    pub schedule: ScheduleConfig,
    pub sampler: SamplerConfig,
    pub backend: BackendChoice,
    pub seed: u64,
    /// `None` runs the base joint pass only.
    pub pyramid: Option<PyramidConfig>,
    pub raster: RasterConfig,
}

impl Default for GenerateParams {
    fn default() -> Self {
        Self {
            layout: None,
            canvas: None,
            latent_scale: 8,
            window: 512,
            stride: 256,
            channels: 4,
            schedule: ScheduleConfig::default(),
            sampler: SamplerConfig::default(),
            backend: BackendChoice::Analytic { mean: 0.0, std: 1.0 },
            seed: 0,
            pyramid: Some(PyramidConfig::default()),
            raster: RasterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
    /// `[height, width, channels]` in latent cells.
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub params: GenerateParams,
    pub backend: Capabilities,
    pub input: Option<FileDigest>,
    pub output: OutputRecord,
    /// Latent size of the requested canvas and of the first phase.
    pub latent_canvas: Dims,
    pub base: Dims,
    pub phases: Vec<PhaseRecord>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Schema(format!("unsupported manifest format {:?}", m.format)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Manifest path next to a latent output: `out.dtxl` -> `out.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn cells(px: usize, scale: u32, what: &str) -> Result<usize> {
    let s = scale as usize;
    if px == 0 || !px.is_multiple_of(s) {
        return Err(Error::Config(format!(
            "{what} of {px} px must be a positive multiple of the latent scale {scale}"
        )));
    }
    Ok(px / s)
}

/// Base latent size for a target: `round(target / alpha^P)` per axis, at least 1.
pub fn base_dims(target: Dims, pyramid: Option<&PyramidConfig>) -> Dims {
    match pyramid {
        None => target,
        Some(cfg) => {
            let f = cfg.alpha.powi(cfg.phases as i32);
            let s = |n: usize| ((n as f64 / f).round() as usize).max(1);
            Dims::new(s(target.height), s(target.width))
        }
    }
}

fn read_layout(path: &Path) -> Result<(SceneLayout, FileDigest)> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Schema("layout is not UTF-8".into()))?;
    let layout = parse_scene_layout(&text)?;
    Ok((
        layout,
        FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        },
    ))
}

/// Run with an already-connected backend.
pub fn generate_with(params: &GenerateParams, backend: &dyn Denoiser, out: &Path) -> Result<RunManifest> {
    if params.latent_scale == 0 || params.channels == 0 {
        return Err(Error::Config("latent scale and channel count must be positive".into()));
    }
    let (layout, input) = match &params.layout {
        Some(p) => {
            let (l, d) = read_layout(p)?;
            (Some(l), Some(d))
        }
        None => (None, None),
    };
    let canvas = params
        .canvas
        .or(layout.as_ref().map(|l| l.canvas))
        .ok_or_else(|| Error::Config("a layout or an explicit canvas is required".into()))?;
    let s = params.latent_scale;
    let latent_canvas = Dims::new(
        canvas.height.div_ceil(s) as usize,
        canvas.width.div_ceil(s) as usize,
    );
    let window = cells(params.window, s, "window")?;
    let stride = cells(params.stride, s, "stride")?;
    let spec = PlanSpec {
        window: Dims::new(window, window),
        stride,
    };
    let pyramid = params
        .pyramid
        .clone()
        .unwrap_or_else(|| PyramidConfig::with_phases(0));
    let base = base_dims(latent_canvas, params.pyramid.as_ref());
    let sched = NoiseSchedule::from_config(&params.schedule)?;

    let raster = params.raster;
    let channels = raster.keypoint_channels.max(1);
    let conditions = |dims: Dims| -> Result<ConditionSet> {
        match &layout {
            Some(l) => Ok(rasterize_to_grid(l, &RasterGrid::fit(l, dims), &raster)),
            None => Ok(ConditionSet::empty(dims, channels)),
        }
    };
    let plan = |dims: Dims| spec.plan_for(dims);
    let ctx = JointContext {
        sampler: params.sampler,
        ..JointContext::new(params.seed)
    };
    let result = pppi(
        base,
        params.channels,
        &pyramid,
        &PhaseInputs {
            conditions: &conditions,
            plan: &plan,
        },
        backend,
        &sched,
        &ctx,
    )?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    result.latent.save(out)?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        params: params.clone(),
        backend: backend.capabilities(),
        input,
        output: OutputRecord {
            path: out.to_path_buf(),
            sha256: result.latent.digest(),
            shape: [result.latent.height(), result.latent.width(), result.latent.channels()],
        },
        latent_canvas,
        base,
        phases: result.phases,
    };
    manifest.save(manifest_path_for(out))?;
    Ok(manifest)
}

/// Connect the configured backend, run, and write the latent and manifest.
pub fn run_generate(params: &GenerateParams, out: &Path) -> Result<RunManifest> {
    let backend = params.backend.connect()?;
    generate_with(params, backend.as_ref(), out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub expected: String,
    pub actual: String,
    pub output: PathBuf,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Re-run a manifest into `out` and compare output digests. The recorded
/// layout must still hash to its recorded digest.
pub fn replay(manifest: &RunManifest, out: &Path, endpoint_override: Option<&str>) -> Result<ReplayReport> {
    if let Some(input) = &manifest.input {
        let now = sha256_hex(&fs::read(&input.path)?);
        if now != input.sha256 {
            return Err(Error::Config(format!(
                "layout {} changed since the run (sha256 {now}, recorded {})",
                input.path.display(),
                input.sha256
            )));
        }
    }
    let mut params = manifest.params.clone();
    if let (BackendChoice::External { endpoint }, Some(e)) = (&mut params.backend, endpoint_override) {
        *endpoint = e.to_string();
    }
    let rerun = run_generate(&params, out)?;
    Ok(ReplayReport {
        expected: manifest.output.sha256.clone(),
        actual: rerun.output.sha256,
        output: out.to_path_buf(),
    })
}

/// Digest of a stored latent file.
pub fn latent_digest(path: &Path) -> Result<String> {
    Ok(LatentTensor::load(path)?.digest())
}
