//! Command-line surface for the cross-view projection engine.
//!
//! Subcommands: `project` (satellite to panorama), `align` (batch shift
//! search), `eval` (batch image metrics), `synth-scene` (reproducible test
//! fixtures). Configuration comes from an optional JSON file plus flag
//! overrides; `RUST_LOG` controls log verbosity.

mod config;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

use config::{ConfigArgs, Mode, RunConfig};
use crossview::align::{align_pair, ShiftGrid};
use crossview::metrics::{evaluate, MetricReport};
use crossview::mpi::{
    build_satellite_mpi, composite_ordered_with_coverage, composite_with_coverage, SatelliteMpi,
};
use crossview::oracle::sample_scene;
use crossview::project::{ground_plane_project, polar_transform, project_depthwise, project_heightwise};
use crossview::raster::{load_height_png, load_png, save_png, save_png16, ImageBuffer, Mask};
use crossview::volume::{heightmap_to_distribution, HeightProbabilityVolume};

/// Pixels absorbing less than this fraction of the ray count as empty in
/// the output validity mask.
const COVERAGE_THRESHOLD: f32 = 1e-3;

/// Height PNG encoding: 16-bit gray, value = (height_m + 10) * 1000, i.e.
/// millimeters biased 10 m so sub-ground heights stay positive.
const HEIGHT_PNG_SCALE: f64 = 1e-3;
const HEIGHT_PNG_OFFSET: f64 = -10.0;

#[derive(Parser)]
#[command(name = "crossview", version, about = "Cross-view satellite-to-street projection")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Project a satellite image into a street-view panorama.
    Project(ProjectArgs),
    /// Recover per-pair satellite/panorama shifts from a manifest.
    Align(AlignArgs),
    /// Compute image similarity metrics over a manifest of pairs.
    Eval(EvalArgs),
    /// Generate a reproducible synthetic scene bundle.
    SynthScene(SynthArgs),
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Input satellite image (RGB PNG).
    #[arg(long, value_name = "FILE")]
    sat: PathBuf,
    /// Height source: probability volume (HPV1).
    #[arg(long, value_name = "FILE")]
    volume: Option<PathBuf>,
    /// Height source: 16-bit gray PNG, decoded as value * height-scale + height-offset.
    #[arg(long, value_name = "FILE")]
    heights: Option<PathBuf>,
    /// Meters per height PNG unit.
    #[arg(long, default_value_t = HEIGHT_PNG_SCALE)]
    height_scale: f64,
    /// Height PNG bias in meters.
    #[arg(long, default_value_t = HEIGHT_PNG_OFFSET)]
    height_offset: f64,
    /// Output panorama PNG.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Output validity mask PNG; defaults to "<out>-mask.png".
    #[arg(long, value_name = "FILE")]
    mask_out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Input manifest CSV with columns: id, sat_path, pano_path.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Output offsets CSV (id, du_m, dv_m, ssim, flag).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Candidate grid points per axis.
    #[arg(long, default_value_t = 40)]
    grid_n: usize,
    /// Candidate grid extent in meters.
    #[arg(long, default_value_t = 11.25)]
    grid_extent: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Input manifest CSV with columns: id, a_path, b_path.
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Output JSON report; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Scene seed; the bundle is byte-identical for identical seed + config.
    #[arg(long)]
    seed: u64,
    /// Output directory for the bundle.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn missing(path: &Path) -> Self {
        Self { code: 2, message: format!("missing input file: {}", path.display()) }
    }

    fn other(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_exists(path)?;
            RunConfig::load(path).map_err(CliError::other)?
        }
        None => RunConfig::default(),
    };
    cfg.apply(args);
    Ok(cfg)
}

fn load_rgb(path: &Path) -> Result<ImageBuffer, CliError> {
    require_exists(path)?;
    let img = load_png(path).map_err(|e| CliError::other(e.to_string()))?;
    if img.channels() != 3 {
        return Err(CliError::other(format!("{}: expected an RGB image", path.display())));
    }
    Ok(img)
}

fn write_png(img: &ImageBuffer, path: &Path) -> Result<(), CliError> {
    save_png(img, path).map_err(|e| CliError::other(e.to_string()))
}

fn mask_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}-mask.png"))
}

/// Builds the satellite MPI from whichever height source was given.
fn load_mpi(args: &ProjectArgs, cfg: &RunConfig, sat: &ImageBuffer) -> Result<SatelliteMpi, CliError> {
    let volume = match (&args.volume, &args.heights) {
        (Some(vp), None) => {
            require_exists(vp)?;
            HeightProbabilityVolume::load(vp)
                .map_err(|e| CliError::other(format!("{}: {e}", vp.display())))?
        }
        (None, Some(hp)) => {
            require_exists(hp)?;
            let h = load_height_png(hp, args.height_scale, args.height_offset)
                .map_err(|e| CliError::other(e.to_string()))?;
            let planes = cfg.recipe().plane_heights();
            heightmap_to_distribution(&h, &planes)
                .map_err(|e| CliError::other(format!("{}: {e}", hp.display())))?
        }
        _ => unreachable!("height source validated by the caller"),
    };
    build_satellite_mpi(sat, &volume).map_err(|e| CliError::other(e.to_string()))
}

fn cmd_project(args: ProjectArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    let sat = load_rgb(&args.sat)?;
    let cam = cfg.camera_for(sat.width(), sat.height()).map_err(CliError::other)?;
    let g = cfg.geometry().map_err(CliError::other)?;

    let has_height_source = args.volume.is_some() || args.heights.is_some();
    match cfg.mode {
        Mode::Ground | Mode::Polar if has_height_source => {
            return Err(CliError::other(format!("{} mode takes no height source", cfg.mode)));
        }
        Mode::Depthwise | Mode::Heightwise
            if args.volume.is_some() == args.heights.is_some() =>
        {
            return Err(CliError::other(
                "depthwise and heightwise modes need exactly one height source \
                 (--volume or --heights)",
            ));
        }
        _ => {}
    }

    let mpi = match cfg.mode {
        Mode::Depthwise | Mode::Heightwise => Some(load_mpi(&args, &cfg, &sat)?),
        _ => None,
    };
    let n_planes = mpi.as_ref().map_or(1, SatelliteMpi::n_planes);

    let t0 = Instant::now();
    let (color, mask) = match cfg.mode {
        Mode::Ground => {
            let out = ground_plane_project(&sat, &g, &cam);
            (out.image, out.mask)
        }
        Mode::Polar => {
            let img = polar_transform(&sat, cfg.pano_width, cfg.pano_height, &cam);
            (img, Mask::new_filled(cfg.pano_width, cfg.pano_height, true))
        }
        Mode::Depthwise => {
            let street = project_depthwise(
                mpi.as_ref().unwrap(),
                &g,
                cfg.m_planes,
                cfg.max_radius_for(sat.width()),
                &cam,
            );
            let out = composite_with_coverage(&street).map_err(|e| CliError::other(e.to_string()))?;
            let mask = out.mask(COVERAGE_THRESHOLD);
            (out.color, mask)
        }
        Mode::Heightwise => {
            let stack = project_heightwise(mpi.as_ref().unwrap(), &g, &cam);
            let out =
                composite_ordered_with_coverage(&stack).map_err(|e| CliError::other(e.to_string()))?;
            let mask = out.mask(COVERAGE_THRESHOLD);
            (out.color, mask)
        }
    };
    let dt = t0.elapsed().as_secs_f64();
    log::info!(
        "rendered {}x{} {} panorama in {dt:.3} s (N = {n_planes}, M = {})",
        color.width(),
        color.height(),
        cfg.mode,
        cfg.m_planes,
    );

    write_png(&color, &args.out)?;
    let mask_path = args.mask_out.clone().unwrap_or_else(|| mask_path_for(&args.out));
    write_png(&mask.to_image(), &mask_path)
}

#[derive(Deserialize)]
struct AlignRow {
    id: String,
    sat_path: PathBuf,
    pano_path: PathBuf,
}

#[derive(Serialize)]
struct OffsetRow {
    id: String,
    du_m: f64,
    dv_m: f64,
    ssim: f64,
    flag: &'static str,
}

fn cmd_align(args: AlignArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    require_exists(&args.manifest)?;
    let mut reader = csv::Reader::from_path(&args.manifest)
        .map_err(|e| CliError::other(format!("{}: {e}", args.manifest.display())))?;
    let mut writer = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::other(format!("{}: {e}", args.out.display())))?;
    let grid = ShiftGrid { n_u: args.grid_n, n_v: args.grid_n, extent: args.grid_extent };

    for row in reader.deserialize::<AlignRow>() {
        let row = row.map_err(|e| CliError::other(format!("{}: {e}", args.manifest.display())))?;
        let sat = load_rgb(&row.sat_path)?;
        let pano = load_rgb(&row.pano_path)?;
        let cam = cfg.camera_for(sat.width(), sat.height()).map_err(CliError::other)?;
        let g = cfg.geometry_for(pano.width(), pano.height()).map_err(CliError::other)?;
        let r = align_pair(&sat, &pano, &cam, &g, &grid)
            .map_err(|e| CliError::other(format!("pair {}: {e}", row.id)))?;
        let flag = if r.degenerate {
            "degenerate"
        } else if r.unalignable {
            "unalignable"
        } else {
            "ok"
        };
        log::info!(
            "pair {}: shift ({:+.3}, {:+.3}) m, ssim {:.4}, {flag}",
            row.id,
            r.best_shift.0,
            r.best_shift.1,
            r.best_score,
        );
        writer
            .serialize(OffsetRow {
                id: row.id,
                du_m: r.best_shift.0,
                dv_m: r.best_shift.1,
                ssim: r.best_score,
                flag,
            })
            .map_err(|e| CliError::other(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::other(e.to_string()))
}

#[derive(Deserialize)]
struct EvalRow {
    id: String,
    a_path: PathBuf,
    b_path: PathBuf,
}

#[derive(Serialize)]
struct EvalEntry {
    id: String,
    #[serde(flatten)]
    metrics: MetricReport,
}

#[derive(Serialize)]
struct EvalReport {
    pairs: Vec<EvalEntry>,
    /// Per-metric means over pairs with finite values (PSNR and sharpness
    /// difference are infinite for identical inputs).
    mean: MeanReport,
}

#[derive(Default, Serialize)]
struct MeanReport {
    rmse: Option<f64>,
    ssim: Option<f64>,
    psnr: Option<f64>,
    sd: Option<f64>,
    pairs: usize,
}

fn finite_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.filter(|v| v.is_finite()) {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    require_exists(&args.pairs)?;
    let mut reader = csv::Reader::from_path(&args.pairs)
        .map_err(|e| CliError::other(format!("{}: {e}", args.pairs.display())))?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<EvalRow>() {
        let row = row.map_err(|e| CliError::other(format!("{}: {e}", args.pairs.display())))?;
        let a = load_rgb(&row.a_path)?;
        let b = load_rgb(&row.b_path)?;
        let metrics = evaluate(&a, &b, None)
            .map_err(|e| CliError::other(format!("pair {}: {e}", row.id)))?;
        log::info!(
            "pair {}: rmse {:.4}, ssim {:.4}, psnr {:.2}, sd {:.2}",
            row.id,
            metrics.rmse,
            metrics.ssim,
            metrics.psnr,
            metrics.sd,
        );
        entries.push(EvalEntry { id: row.id, metrics });
    }
    let mean = MeanReport {
        rmse: finite_mean(entries.iter().map(|e| e.metrics.rmse)),
        ssim: finite_mean(entries.iter().map(|e| e.metrics.ssim)),
        psnr: finite_mean(entries.iter().map(|e| e.metrics.psnr)),
        sd: finite_mean(entries.iter().map(|e| e.metrics.sd)),
        pairs: entries.len(),
    };
    let report = EvalReport { pairs: entries, mean };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::other(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::other(format!("{}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

/// Quantizes unit-range samples exactly as the 8-bit PNG writer will, so
/// downstream renders of an in-memory image and of its PNG agree.
fn quantize_unit(img: &ImageBuffer) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .map(|&v| (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as f32 / 255.0)
        .collect();
    ImageBuffer::from_vec(img.width(), img.height(), img.channels(), data)
}

fn cmd_synth_scene(args: SynthArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    let recipe = cfg.recipe();
    let scene = sample_scene(&recipe, args.seed);
    let size = cfg.sat_size;
    let cam = cfg.camera_for(size, size).map_err(CliError::other)?;
    let g = cfg.geometry().map_err(CliError::other)?;

    let sat = scene.render_satellite(&cam, size, size);
    let heights = scene.render_heights(&cam, size, size);
    let planes = recipe.plane_heights();
    let volume = heightmap_to_distribution(&heights, &planes)
        .map_err(|e| CliError::other(e.to_string()))?;

    // The reference panorama is rendered from the PNG-quantized satellite
    // so re-projecting the written bundle reproduces it byte for byte.
    let sat_q = quantize_unit(&sat);
    let mpi = build_satellite_mpi(&sat_q, &volume).map_err(|e| CliError::other(e.to_string()))?;
    let t0 = Instant::now();
    let street =
        project_depthwise(&mpi, &g, cfg.m_planes, cfg.max_radius_for(size), &cam);
    let out = composite_with_coverage(&street).map_err(|e| CliError::other(e.to_string()))?;
    let dt = t0.elapsed().as_secs_f64();
    log::info!(
        "scene {}: {} boxes, reference panorama in {dt:.3} s (N = {}, M = {})",
        args.seed,
        scene.boxes.len(),
        planes.len(),
        cfg.m_planes,
    );

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::other(format!("{}: {e}", args.out_dir.display())))?;
    let dir = &args.out_dir;
    write_png(&sat, &dir.join("satellite.png"))?;
    let encoded_heights = ImageBuffer::from_vec(
        heights.width(),
        heights.height(),
        1,
        heights
            .data()
            .iter()
            .map(|&h| ((f64::from(h) - HEIGHT_PNG_OFFSET) * HEIGHT_PNG_SCALE.recip() / 65535.0) as f32)
            .collect(),
    );
    save_png16(&encoded_heights, dir.join("heights.png"))
        .map_err(|e| CliError::other(e.to_string()))?;
    volume
        .save(dir.join("volume.hpv"))
        .map_err(|e| CliError::other(e.to_string()))?;
    write_png(&out.color, &dir.join("panorama.png"))?;
    write_png(&out.mask(COVERAGE_THRESHOLD).to_image(), &dir.join("panorama-mask.png"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Project(a) => cmd_project(a),
        Cmd::Align(a) => cmd_align(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::SynthScene(a) => cmd_synth_scene(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
