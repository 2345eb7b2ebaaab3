//! Command-line front end. `dts` dispatches here; tests drive [`run_cli`]
//! in-process with captured output.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::diffusion::{SamplerConfig, ScheduleConfig};
use crate::error::{Error, Result};
use crate::layout::{
    build_instruction_prompts, inclusion_check, numerical_matching, parse_scene_layout, spatial_matching,
    synthesize_layout_procedural, Canvas, CategoryMatch, ExpectedCounts, SpatialCondition, SynthRequest,
};
use crate::pyramid::{InterpMethod, PyramidConfig};
use crate::render::render_png;
use crate::run::{manifest_path_for, replay, run_generate, BackendChoice, GenerateParams, RunManifest};
use crate::tensor::LatentTensor;
use crate::view::{HumanMask, RasterConfig};
use crate::wire::{mock_response, serve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Kv,
    Json,
}

/// Ordered key/value report, printed as `key=value` lines or one JSON object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report(Vec<(String, Value)>);

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.0.push((key.into(), serde_json::to_value(value).expect("report value")));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Kv => self
                .0
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}={s}\n"),
                    other => format!("{k}={other}\n"),
                })
                .collect(),
            ReportFormat::Json => {
                let map: Map<String, Value> = self.0.iter().cloned().collect();
                format!("{}\n", Value::Object(map))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dts", version, about = "Layout-conditioned large-scene latent generation")]
pub struct Cli {
    /// Report format for stdout.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Kv)]
    pub report: ReportFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, score, synthesize, or prompt from scene layouts.
    #[command(subcommand)]
    Layout(LayoutCommand),
    /// Generate a latent tensor and its run manifest.
    Generate(Box<GenerateArgs>),
    /// Render a tensor file to an 8-bit PNG.
    Render {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a manifest and compare the output digest.
    Replay {
        manifest: PathBuf,
        /// Output path; defaults to `<recorded output>.replay.dtxl`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Serve the reference mock denoiser over the wire protocol.
    ServeMock {
        /// `host:port` to listen on; stdin/stdout when absent.
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LayoutCommand {
    /// Check structure and geometry; exits 1 on the first violation.
    Validate { file: PathBuf },
    /// Count matching against expected counts, plus optional spatial and inclusion checks.
    Metrics {
        file: PathBuf,
        /// Expected counts such as `humans=3` or `groups=1,objects=2`.
        #[arg(long, required = true)]
        expected: Vec<String>,
        #[arg(long)]
        spatial: Option<SpatialCondition>,
    },
    /// Procedural layout with the requested counts; identical seeds give identical bytes.
    Synth {
        #[arg(long, default_value_t = 0)]
        groups: usize,
        #[arg(long, default_value_t = 0)]
        humans: usize,
        #[arg(long, default_value_t = 0)]
        objects: usize,
        #[arg(long, default_value = "1024x768", value_parser = parse_canvas)]
        canvas: Canvas,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the layout here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Instruction prompts for the three grounding stages.
    Prompts { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Analytic,
    Mock,
    Zero,
    External,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Target canvas `WxH` in pixels; defaults to the layout canvas.
    #[arg(long, value_parser = parse_canvas)]
    pub canvas: Option<Canvas>,
    /// Window edge in pixels.
    #[arg(long, default_value_t = 512)]
    pub window: usize,
    /// Window stride in pixels.
    #[arg(long, default_value_t = 256)]
    pub stride: usize,
    #[arg(long, default_value_t = 8)]
    pub latent_scale: u32,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    /// Sampler steps.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = BackendKind::Analytic)]
    pub backend: BackendKind,
    /// `tcp://host:port` or `stdio:<command>`; `DTS_ENDPOINT` takes precedence.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub prior_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub pyramid_phases: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma_pert: f64,
    #[arg(long, default_value_t = 1)]
    pub d_pert: usize,
    /// Normalized refinement start times, comma separated; one value applies to every phase.
    #[arg(long, default_value = "0.5", value_delimiter = ',')]
    pub tp: Vec<f64>,
    #[arg(long, value_parser = parse_interp, default_value = "bilinear")]
    pub interp: InterpMethod,
    /// Base joint pass only.
    #[arg(long)]
    pub no_pyramid: bool,
    /// Stamp radius, in latent cells, for skeleton lines.
    #[arg(long, default_value_t = 0)]
    pub line_radius: usize,
    /// Use dilated skeletons instead of boxes as human masks.
    #[arg(long)]
    pub skeleton_masks: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub keypoint_channels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_canvas(s: &str) -> std::result::Result<Canvas, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("canvas {s:?} is not WxH"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("canvas {s:?} is empty"));
    }
    Ok(Canvas::new(w, h))
}

fn parse_interp(s: &str) -> std::result::Result<InterpMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `humans=3`, `groups=1,objects=2`; later entries win.
pub fn parse_expected(items: &[String]) -> Result<ExpectedCounts> {
    let mut out = ExpectedCounts::default();
    for part in items.iter().flat_map(|s| s.split(',')).filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected count {part:?} is not key=value")))?;
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("count {v:?} is not a nonnegative integer")))?;
        match k.trim() {
            "groups" => out.groups = Some(n),
            "humans" => out.humans = Some(n),
            "objects" => out.objects = Some(n),
            other => return Err(Error::Config(format!("unknown category {other:?}"))),
        }
    }
    Ok(out)
}

impl GenerateArgs {
    pub fn to_params(&self, env_endpoint: Option<String>) -> Result<GenerateParams> {
        let backend = match self.backend {
            BackendKind::Analytic => BackendChoice::Analytic {
                mean: self.prior_mean,
                std: self.prior_std,
            },
            BackendKind::Mock => BackendChoice::Mock,
            BackendKind::Zero => BackendChoice::Zero,
            BackendKind::External => BackendChoice::External {
                endpoint: env_endpoint
                    .or_else(|| self.endpoint.clone())
                    .ok_or_else(|| Error::Config("external backend needs --endpoint or DTS_ENDPOINT".into()))?,
            },
        };
        let pyramid = if self.no_pyramid {
            None
        } else {
            let p = self.pyramid_phases;
            let refine_tp = match self.tp.len() {
                1 => vec![self.tp[0]; p],
                n if n == p => self.tp.clone(),
                n => return Err(Error::Config(format!("--tp has {n} values for {p} phases"))),
            };
            let cfg = PyramidConfig {
                alpha: self.alpha,
                gamma: self.gamma_pert,
                d: self.d_pert,
                refine_tp,
                method: self.interp,
                ..PyramidConfig::with_phases(p)
            };
            cfg.validate()?;
            Some(cfg)
        };
        Ok(GenerateParams {
            layout: self.layout.clone(),
            canvas: self.canvas,
            latent_scale: self.latent_scale,
            window: self.window,
            stride: self.stride,
            channels: self.channels,
            schedule: ScheduleConfig {
                steps: self.steps,
                ..Default::default()
            },
            sampler: SamplerConfig { eta: self.eta },
            backend,
            seed: self.seed,
            pyramid,
            raster: RasterConfig {
                line_radius: self.line_radius,
                keypoint_channels: self.keypoint_channels,
                human_mask: match self.skeleton_masks {
                    Some(radius) => HumanMask::Skeleton { radius },
                    None => HumanMask::Bbox,
                },
            },
        })
    }
}

fn push_category(report: &mut Report, name: &str, c: &Option<CategoryMatch>) {
    if let Some(c) = c {
        report.push(format!("{name}.expected"), c.expected);
        report.push(format!("{name}.generated"), c.generated);
        report.push(format!("{name}.precision"), c.precision);
        report.push(format!("{name}.recall"), c.recall);
        report.push(format!("{name}.f1"), c.f1);
    }
}

fn load_layout(path: &Path) -> Result<crate::layout::SceneLayout> {
    parse_scene_layout(&fs::read_to_string(path)?)
}

fn cmd_layout(cmd: &LayoutCommand, out: &mut dyn Write) -> Result<Report> {
    let mut r = Report::default();
    match cmd {
        LayoutCommand::Validate { file } => {
            let l = load_layout(file)?;
            r.push("valid", true);
            r.push("groups", l.groups.len());
            r.push("instances", l.instances.len());
        }
        LayoutCommand::Metrics {
            file,
            expected,
            spatial,
        } => {
            let l = load_layout(file)?;
            let m = numerical_matching(&parse_expected(expected)?, &l);
            r.push("precision", m.precision);
            r.push("recall", m.recall);
            r.push("f1", m.f1);
            push_category(&mut r, "groups", &m.groups);
            push_category(&mut r, "humans", &m.humans);
            push_category(&mut r, "objects", &m.objects);
            if let Some(cond) = spatial {
                r.push("spatial", *cond);
                r.push("spatial_accuracy", spatial_matching(&l, *cond));
            }
            r.push("inclusion", inclusion_check(&l));
        }
        LayoutCommand::Synth {
            groups,
            humans,
            objects,
            canvas,
            seed,
            out: path,
        } => {
            let l = synthesize_layout_procedural(&SynthRequest {
                groups: *groups,
                humans: *humans,
                objects: *objects,
                canvas: *canvas,
                seed: *seed,
            })?;
            let json = l.to_json();
            match path {
                Some(p) => {
                    fs::write(p, &json)?;
                    r.push("out", p.display().to_string());
                    r.push("sha256", crate::tensor::sha256_hex(json.as_bytes()));
                }
                None => {
                    out.write_all(json.as_bytes())?;
                    return Ok(Report::default());
                }
            }
        }
        LayoutCommand::Prompts { file } => {
            let p = build_instruction_prompts(&load_layout(file)?);
            r.push("nat2hier", p.nat2hier);
            r.push("global_grounding", p.global_grounding);
            r.push("local_grounding", p.local_grounding);
        }
    }
    Ok(r)
}

fn manifest_report(r: &mut Report, m: &RunManifest) {
    r.push("out", m.output.path.display().to_string());
    r.push("manifest", manifest_path_for(&m.output.path).display().to_string());
    r.push("sha256", &m.output.sha256);
    r.push("shape", m.output.shape);
    r.push("backend", &m.backend.name);
    r.push("latent_width", m.latent_canvas.width);
    r.push("latent_height", m.latent_canvas.height);
    for p in &m.phases {
        r.push(format!("phase.{}.latent_width", p.phase), p.dims.width);
        r.push(format!("phase.{}.latent_height", p.phase), p.dims.height);
        r.push(format!("phase.{}.windows", p.phase), p.windows.len());
        r.push(format!("phase.{}.t_start", p.phase), p.t_start);
    }
}

fn serve_mock(listen: Option<&str>) -> Result<()> {
    match listen {
        None => {
            let stdin = io::stdin();
            let mut reader = stdin.lock();
            let mut writer = BufWriter::new(io::stdout().lock());
            serve(&mut reader, &mut writer, mock_response)
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                std::thread::spawn(move || -> Result<()> {
                    let mut reader = BufReader::new(stream.try_clone()?);
                    let mut writer = BufWriter::new(stream);
                    serve(&mut reader, &mut writer, mock_response)
                });
            }
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<Report> {
    match &cli.command {
        Command::Layout(cmd) => cmd_layout(cmd, out),
        Command::Generate(args) => {
            let params = args.to_params(std::env::var("DTS_ENDPOINT").ok().filter(|s| !s.is_empty()))?;
            let m = run_generate(&params, &args.out)?;
            let mut r = Report::default();
            manifest_report(&mut r, &m);
            Ok(r)
        }
        Command::Render { input, out: path } => {
            let t = LatentTensor::load(input)?;
            render_png(&t, path)?;
            let mut r = Report::default();
            r.push("out", path.display().to_string());
            r.push("width", t.width());
            r.push("height", t.height());
            r.push("channels", t.channels());
            Ok(r)
        }
        Command::Replay {
            manifest,
            out: path,
            endpoint,
        } => {
            let m = RunManifest::load(manifest)?;
            let target = path
                .clone()
                .unwrap_or_else(|| m.output.path.with_extension("replay.dtxl"));
            let env = std::env::var("DTS_ENDPOINT").ok().filter(|s| !s.is_empty());
            let rep = replay(&m, &target, env.as_deref().or(endpoint.as_deref()))?;
            let mut r = Report::default();
            r.push("out", rep.output.display().to_string());
            r.push("expected", &rep.expected);
            r.push("actual", &rep.actual);
            r.push("match", rep.matches());
            if !rep.matches() {
                return Err(Error::Config(format!(
                    "replay digest {} differs from recorded {}",
                    rep.actual, rep.expected
                )));
            }
            Ok(r)
        }
        Command::ServeMock { listen } => {
            serve_mock(listen.as_deref())?;
            Ok(Report::default())
        }
    }
}

/// Parse `args` (including the program name) and run. Returns the exit code:
/// 0 on success, 1 on a failed command, 2 on a usage error.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(r) => {
            let _ = out.write_all(r.render(cli.report).as_bytes());
            0
        }
        Err(e) => {
            let mut r = Report::default();
            r.push("ok", false);
            r.push("error", e.to_string());
            let _ = out.write_all(r.render(cli.report).as_bytes());
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
