//! `bokeh` subcommands.

use std::error::Error as StdError;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use bokeh_core::aperture::build_kernel;
use bokeh_core::errormap::{analyze_disparity, ErrorMapConfig};
use bokeh_core::eval::{run_benchmark, run_corruption, BenchOptions, CorruptionKind, FocusPolicy, Method};
use bokeh_core::fusion::{render, RenderMode, RenderRequest};
use bokeh_core::imgcore::{
    encode_gray_png, load_disparity, load_image, normalize_disparity, resize_bilinear, save_image, save_pfm,
};
use bokeh_core::neuralpipe::{CoreConfig, NrMode};
use bokeh_core::oracle::{generate_dataset, generate_scene, DatasetSpec, TwoPlaneScene};
use bokeh_core::{ApertureSpec, DisparityMap, Plane, RenderParams};

use crate::focus::Focus;
use crate::service::{self, ServiceConfig};

pub type CmdResult = Result<(), Box<dyn StdError + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "bokeh", version, about = "Hybrid depth-of-field renderer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a shallow depth-of-field image from an image and its disparity.
    Render(RenderArgs),
    /// Write the error map and its α, β variables for a disparity map.
    Errormap(ErrorMapArgs),
    /// Generate a synthetic two-plane dataset with ground-truth renders.
    Dataset(DatasetArgs),
    /// Score renderers against the ground-truth renderer on generated scenes.
    Bench(BenchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write an aperture kernel as a grayscale PNG.
    Kernel(KernelArgs),
}

/// Disparity input shared by `render` and `errormap`.
#[derive(Debug, Args)]
pub struct DisparityArgs {
    /// Disparity map: PFM, or 8/16-bit grayscale PNG. Larger is nearer.
    #[arg(long)]
    pub disparity: PathBuf,
    /// Use disparity values as given instead of stretching them to [0, 1].
    #[arg(long)]
    pub raw_disparity: bool,
}

impl DisparityArgs {
    fn load(&self, dims: Option<(usize, usize)>) -> Result<DisparityMap, bokeh_core::Error> {
        let mut d = load_disparity(&self.disparity)?;
        if let Some((w, h)) = dims {
            if d.dims() != (w, h) {
                d = DisparityMap::new(resize_bilinear(&d, w, h));
            }
        }
        Ok(if self.raw_disparity { d } else { normalize_disparity(&d) })
    }
}

/// Lens controls shared by `render` and `errormap`.
#[derive(Debug, Args)]
pub struct LensArgs {
    /// Blur parameter K: blur radius in pixels per unit of disparity.
    #[arg(long = "K", short = 'K', default_value_t = 20.0)]
    pub blur: f64,
    /// Focus disparity in [0, 1], or "x,y" to focus on the median disparity around a pixel.
    #[arg(long, default_value = "0.5")]
    pub focus: Focus,
    #[arg(long, default_value_t = 2.2)]
    pub gamma: f64,
    /// Aperture blades; 0 is a circle.
    #[arg(long, default_value_t = 0)]
    pub blades: u32,
    /// Aperture rotation in degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rotation: f64,
}

impl LensArgs {
    fn params(&self, d: &DisparityMap) -> Result<RenderParams, bokeh_core::Error> {
        let focus = self.focus.resolve(d)?;
        let params = RenderParams::new(self.blur, focus, self.gamma)
            .with_aperture(ApertureSpec::polygon(self.blades, self.rotation.to_radians()));
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub disparity: DisparityArgs,
    #[command(flatten)]
    pub lens: LensArgs,
    /// hybrid, classical_only or neural_only.
    #[arg(long, default_value = "hybrid", conflicts_with = "classical_only")]
    pub mode: RenderMode,
    /// Shorthand for `--mode classical_only`.
    #[arg(long)]
    pub classical_only: bool,
    /// Pipeline preset: full, sfuse, clip, noclip or bilinear.
    #[arg(long, default_value = "full")]
    pub nr_mode: NrMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the classical render, the pipeline render and the error map
    /// next to the output.
    #[arg(long)]
    pub dump_intermediates: bool,
}

#[derive(Debug, Args)]
pub struct ErrorMapArgs {
    #[command(flatten)]
    pub disparity: DisparityArgs,
    #[command(flatten)]
    pub lens: LensArgs,
    /// Minimum disparity jump treated as a depth edge.
    #[arg(long, default_value_t = ErrorMapConfig::default().tau)]
    pub tau: f64,
    #[arg(long, default_value_t = ErrorMapConfig::default().delta1)]
    pub delta1: f64,
    #[arg(long, default_value_t = ErrorMapConfig::default().delta2)]
    pub delta2: f64,
    /// Directory receiving error.pfm, alpha.pfm, beta.pfm and error.png.
    /// alpha.pfm holds 1e30 where no depth edge is within reach.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 150)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Square scene size in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Aperture samples per pixel of the ground-truth renderer.
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Blur parameters, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [12.0, 24.0])]
    pub blur: Vec<f64>,
    /// Gamma values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0])]
    pub gamma: Vec<f64>,
    /// Focus disparities, comma separated; defaults to 0.05, 0.10, ..., 1.
    #[arg(long, value_delimiter = ',')]
    pub focus: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub scenes: usize,
    #[arg(long, default_value_t = 5000)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Blur levels; level n uses K = 10·n.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5])]
    pub levels: Vec<u32>,
    /// Methods: hybrid, classical_only, neural_only, or nr_<preset> for the
    /// pipeline alone.
    #[arg(long, value_delimiter = ',', default_values_t = [Method::HYBRID, Method::CLASSICAL, Method::NEURAL])]
    pub methods: Vec<Method>,
    /// background, foreground or a fixed disparity.
    #[arg(long, default_value = "background")]
    pub focus: String,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    /// Also corrupt the disparity with 5 levels of blur, dilation and erosion
    /// at the blur level given here.
    #[arg(long)]
    pub corruption: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Concurrent renders; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Minutes of inactivity before a session is dropped.
    #[arg(long, default_value_t = 30)]
    pub idle_minutes: u64,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub blades: u32,
    /// Degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rotation: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Render(a) => cmd_render(&a),
        Command::Errormap(a) => cmd_errormap(&a),
        Command::Dataset(a) => cmd_dataset(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Kernel(a) => cmd_kernel(&a),
    }
}

fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn cmd_render(a: &RenderArgs) -> CmdResult {
    let image = load_image(&a.image)?;
    let disparity = a.disparity.load(Some(image.dims()))?;
    let params = a.lens.params(&disparity)?;
    let mode = if a.classical_only { RenderMode::ClassicalOnly } else { a.mode };
    let req = RenderRequest::new(image, disparity, params)
        .with_mode(mode)
        .with_config(CoreConfig::for_mode(a.nr_mode));
    let start = Instant::now();
    let out = render(&req)?;
    save_image(&out.image, &a.out)?;
    if a.dump_intermediates {
        if let Some(cr) = &out.classical {
            save_image(cr, with_suffix(&a.out, "classical", "png"))?;
        }
        if let Some(nr) = &out.neural {
            save_image(&nr.image, with_suffix(&a.out, "neural", "png"))?;
        }
        save_pfm(out.error.as_plane(), with_suffix(&a.out, "error", "pfm"))?;
        fs::write(with_suffix(&a.out, "error", "png"), encode_gray_png(out.error.as_plane()))?;
    }
    let (w, h) = out.image.dims();
    eprintln!(
        "rendered {w}x{h} K={} d_f={:.4} mode={mode} in {:.2} s -> {}",
        params.blur,
        params.focus,
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

/// α written for pixels with no depth edge in reach (α is infinite there);
/// any α ≥ 1 already means a zero error weight.
pub const NO_BOUNDARY_ALPHA: f64 = 1e30;

fn cmd_errormap(a: &ErrorMapArgs) -> CmdResult {
    let d = a.disparity.load(None)?;
    let params = a.lens.params(&d)?;
    let cfg = ErrorMapConfig {
        tau: a.tau,
        delta1: a.delta1,
        delta2: a.delta2,
    };
    let analysis = analyze_disparity(&d, &params, &cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    save_pfm(analysis.improved.as_plane(), a.out_dir.join("error.pfm"))?;
    save_pfm(&analysis.alpha.map(|v| v.min(NO_BOUNDARY_ALPHA)), a.out_dir.join("alpha.pfm"))?;
    save_pfm(&analysis.beta, a.out_dir.join("beta.pfm"))?;
    fs::write(a.out_dir.join("error.png"), encode_gray_png(analysis.improved.as_plane()))?;
    let covered = analysis.improved.data().iter().filter(|&&v| v > 0.01).count();
    eprintln!(
        "error map {}x{}: {covered} pixels above 0.01, written to {}",
        d.width(),
        d.height(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_dataset(a: &DatasetArgs) -> CmdResult {
    let mut spec = DatasetSpec {
        scene_count: a.scenes,
        blur_grid: a.blur.clone(),
        gamma_grid: a.gamma.clone(),
        seed: a.seed,
        width: a.size,
        height: a.size,
        samples: a.samples,
        ..DatasetSpec::default()
    };
    if !a.focus.is_empty() {
        spec.focus_grid = a.focus.clone();
    }
    let manifest = generate_dataset(&spec, &a.out)?;
    eprintln!(
        "{} scenes x {} renders written to {}",
        manifest.scenes.len(),
        spec.renders_per_scene(),
        a.out.display()
    );
    Ok(())
}

fn parse_policy(s: &str) -> Result<FocusPolicy, bokeh_core::Error> {
    match s {
        "background" => Ok(FocusPolicy::Background),
        "foreground" => Ok(FocusPolicy::Foreground),
        other => other
            .parse()
            .map(FocusPolicy::Fixed)
            .map_err(|_| bokeh_core::Error::Validation(format!("unknown focus policy {other:?}"))),
    }
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    if a.scenes == 0 {
        return Err("bench needs at least one scene".into());
    }
    let opts = BenchOptions {
        focus: parse_policy(&a.focus)?,
        samples: a.samples,
        ..BenchOptions::default()
    };
    let scenes: Vec<TwoPlaneScene> = (0..a.scenes as u64)
        .map(|i| generate_scene(a.seed + i, a.size, a.size))
        .collect();
    let mut report = run_benchmark(&scenes, &a.methods, &a.levels, &opts)?;
    if let Some(level) = a.corruption {
        report.merge(run_corruption(&scenes, &a.methods, &CorruptionKind::ALL, &[1, 2, 3, 4, 5], level, &opts)?);
    }
    report.write(&a.out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> CmdResult {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse()?;
    let mut cfg = ServiceConfig {
        idle: Duration::from_secs(a.idle_minutes * 60),
        ..ServiceConfig::default()
    };
    if let Some(w) = a.workers {
        cfg.workers = w.max(1);
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(addr, cfg))?;
    Ok(())
}

fn cmd_kernel(a: &KernelArgs) -> CmdResult {
    let spec = ApertureSpec::polygon(a.blades, a.rotation.to_radians());
    spec.validate()?;
    if !(a.radius >= 0.0 && a.radius.is_finite()) {
        return Err(format!("radius must be >= 0, got {}", a.radius).into());
    }
    let k = build_kernel(a.radius, &spec);
    let peak = k.weights().iter().cloned().fold(0.0, f64::max);
    let n = k.size();
    let plane = Plane::new(n, n, k.weights().iter().map(|w| w / peak).collect())?;
    fs::write(&a.out, encode_gray_png(&plane))?;
    eprintln!("{n}x{n} kernel, radius {} -> {}", a.radius, a.out.display());
    Ok(())
}
