use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use rayon::prelude::*;

use flow360::augment::{augment_flow_to, augment_image_to, CorrectionMode};
use flow360::eval::{epe, latitude_band_report, wrapped_epe, MetricReport};
use flow360::raster::{
    flow_to_color, read_flo, read_image, write_flo, write_image, FlowField, Image,
};
use flow360::sphconv::{
    fit_transform, rowgroup_partition, write_kernel, write_projection_set, Correspondence,
    FeatureMap, FitMethod, FitOptions, Kernel,
};
use flow360::sphere::{rotate_equirect, rotation_flow, textured_sphere_image, SphereRotation};
use flow360::warp::{backward_warp, occlusion_masks, OcclusionMask};

use crate::config::Config;
use crate::error::CliError;
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    if let Some(jobs) = cfg.resolve_opt(cli.jobs, "jobs")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|err| CliError::Usage(format!("thread pool: {err}")))?;
    }
    let ctx = Context {
        cfg,
        strict: cli.strict,
        print_config: cli.print_config,
    };
    match cli.command {
        Command::Synth(args) => synth(args, &ctx),
        Command::Augment(args) => augment(args, &ctx),
        Command::Warp(args) => warp(args, &ctx),
        Command::Occlusion(args) => occlusion(args, &ctx),
        Command::Eval(args) => eval(args, &ctx),
        Command::Colorize(args) => colorize(args, &ctx),
        Command::Fit(args) => fit(args, &ctx),
    }
}

struct Context {
    cfg: Config,
    strict: bool,
    print_config: bool,
}

impl Context {
    /// Strict-config check, then the `--print-config` exit. Returns
    /// `true` when the command should stop without doing any work.
    fn finish(&self, settings: &[(&str, String)]) -> Result<bool, CliError> {
        self.cfg.finish(self.strict)?;
        if self.print_config {
            for (key, value) in settings {
                println!("{key} = {value}");
            }
            return Ok(true);
        }
        Ok(false)
    }
}

fn show<T: Display>(value: &Option<T>) -> String {
    match value {
        Some(v) => v.to_string(),
        None => "(unset)".into(),
    }
}

fn show_path(value: &Option<PathBuf>) -> String {
    match value {
        Some(p) => p.display().to_string(),
        None => "(unset)".into(),
    }
}

fn missing(key: &str) -> CliError {
    CliError::Usage(format!("missing required option --{key}"))
}

/// Write through a dotfile in the same directory and rename into place,
/// so an interrupted run never leaves a truncated output. The temp name
/// ends with the real file name because image writers dispatch on the
/// extension.
fn commit(path: &Path, write: impl FnOnce(&Path) -> Result<(), CliError>) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{}: not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp.{}",
        std::process::id(),
        file_name.to_string_lossy()
    ));
    match write(&tmp) {
        Ok(()) => fs::rename(&tmp, path)
            .map_err(|err| CliError::Io(format!("{}: {err}", path.display()))),
        Err(err) => {
            let _ = fs::remove_file(&tmp);
            Err(err)
        }
    }
}

fn commit_image(img: &Image, path: &Path) -> Result<(), CliError> {
    commit(path, |tmp| write_image(img, tmp).map_err(Into::into))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn commit_flow(flow: &FlowField, path: &Path) -> Result<(), CliError> {
    commit(path, |tmp| write_flo(flow, tmp).map_err(Into::into))?;
    info!("wrote {}", path.display());
    Ok(())
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct SynthArgs {
    /// Frame height in pixels; the width is always twice the height
    /// (default 64).
    #[arg(long)]
    height: Option<usize>,
    /// Texture seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Rotation about the vertical axis, degrees (default 0).
    #[arg(long)]
    yaw: Option<f64>,
    /// Rotation toward the poles, degrees (default 0).
    #[arg(long)]
    pitch: Option<f64>,
    /// Rotation about the view axis, degrees (default 0).
    #[arg(long)]
    roll: Option<f64>,
    /// Output path for the unrotated frame.
    #[arg(long)]
    first: Option<PathBuf>,
    /// Output path for the rotated frame.
    #[arg(long)]
    second: Option<PathBuf>,
    /// Output path for the ground-truth forward flow (.flo).
    #[arg(long)]
    flow: Option<PathBuf>,
}

fn synth(args: SynthArgs, ctx: &Context) -> Result<(), CliError> {
    let height = ctx.cfg.resolve(args.height, "height", 64)?;
    let seed = ctx.cfg.resolve(args.seed, "seed", 0)?;
    let yaw = ctx.cfg.resolve(args.yaw, "yaw", 0.0)?;
    let pitch = ctx.cfg.resolve(args.pitch, "pitch", 0.0)?;
    let roll = ctx.cfg.resolve(args.roll, "roll", 0.0)?;
    let first = ctx.cfg.resolve_opt(args.first, "first")?;
    let second = ctx.cfg.resolve_opt(args.second, "second")?;
    let flow = ctx.cfg.resolve_opt(args.flow, "flow")?;
    let settings = [
        ("height", height.to_string()),
        ("seed", seed.to_string()),
        ("yaw", yaw.to_string()),
        ("pitch", pitch.to_string()),
        ("roll", roll.to_string()),
        ("first", show_path(&first)),
        ("second", show_path(&second)),
        ("flow", show_path(&flow)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    if height == 0 {
        return Err(CliError::Usage("--height must be at least 1".into()));
    }
    if first.is_none() && second.is_none() && flow.is_none() {
        return Err(CliError::Usage(
            "nothing to do: pass at least one of --first, --second, --flow".into(),
        ));
    }
    let width = 2 * height;
    let rotation = SphereRotation::from_ypr_degrees(yaw, pitch, roll);
    let frame = textured_sphere_image(height, width, 3, seed);
    if let Some(path) = &first {
        commit_image(&frame, path)?;
    }
    if let Some(path) = &second {
        let rotated = rotate_equirect(&frame, &rotation)?;
        commit_image(&rotated, path)?;
    }
    if let Some(path) = &flow {
        let field = rotation_flow(&rotation, height, width);
        commit_flow(&field, path)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Images (.ppm/.pgm/.png) and flow fields (.flo), told apart by
    /// extension.
    #[arg(value_name = "INPUT")]
    inputs: Vec<PathBuf>,
    /// Output path; only valid with exactly one input.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory; each input keeps its name with a `_360` suffix.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output height (width follows 2:1); default keeps each input's
    /// height.
    #[arg(long)]
    out_height: Option<usize>,
    /// Flow correction: `both` scales u and v, `horizontal` only u
    /// (default both).
    #[arg(long)]
    mode: Option<String>,
}

fn parse_mode(raw: &str) -> Result<CorrectionMode, CliError> {
    match raw {
        "both" => Ok(CorrectionMode::BothAxes),
        "horizontal" => Ok(CorrectionMode::HorizontalOnly),
        _ => Err(CliError::Usage(format!(
            "--mode must be 'both' or 'horizontal', got '{raw}'"
        ))),
    }
}

fn suffixed_name(input: &Path) -> Result<String, CliError> {
    let stem = input
        .file_stem()
        .ok_or_else(|| CliError::Usage(format!("{}: not a file path", input.display())))?
        .to_string_lossy();
    Ok(match input.extension() {
        Some(ext) => format!("{stem}_360.{}", ext.to_string_lossy()),
        None => format!("{stem}_360"),
    })
}

fn augment_one(
    input: &Path,
    out: &Path,
    out_height: Option<usize>,
    mode: CorrectionMode,
) -> Result<(), CliError> {
    let is_flow = input
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("flo"));
    if is_flow {
        let field = read_flo(input)?;
        let out_height = out_height.unwrap_or(field.height());
        let projected = augment_flow_to(&field, out_height, mode);
        commit_flow(&projected, out)
    } else {
        let img = read_image(input)?;
        let out_height = out_height.unwrap_or(img.height());
        let projected = augment_image_to(&img, out_height);
        commit_image(&projected, out)
    }
}

fn augment(args: AugmentArgs, ctx: &Context) -> Result<(), CliError> {
    let out_dir = ctx.cfg.resolve_opt(args.out_dir, "out-dir")?;
    let out_height = ctx.cfg.resolve_opt(args.out_height, "out-height")?;
    let mode_raw = ctx.cfg.resolve(args.mode, "mode", "both".to_string())?;
    let settings = [
        ("mode", mode_raw.clone()),
        ("out", show_path(&args.out)),
        ("out-dir", show_path(&out_dir)),
        ("out-height", show(&out_height)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    let mode = parse_mode(&mode_raw)?;
    if out_height == Some(0) {
        return Err(CliError::Usage("--out-height must be at least 1".into()));
    }
    if args.inputs.is_empty() {
        return Err(CliError::Usage("no inputs given".into()));
    }
    let jobs: Vec<(PathBuf, PathBuf)> = if let Some(out) = args.out {
        if args.inputs.len() != 1 {
            return Err(CliError::Usage(format!(
                "--out takes exactly one input, got {}",
                args.inputs.len()
            )));
        }
        vec![(args.inputs[0].clone(), out)]
    } else {
        let dir = out_dir.ok_or_else(|| missing("out-dir"))?;
        let mut seen = BTreeSet::new();
        let mut jobs = Vec::with_capacity(args.inputs.len());
        for input in &args.inputs {
            let name = suffixed_name(input)?;
            if !seen.insert(name.clone()) {
                return Err(CliError::Usage(format!(
                    "output name collision: two inputs map to {name}"
                )));
            }
            jobs.push((input.clone(), dir.join(name)));
        }
        fs::create_dir_all(&dir).map_err(|err| CliError::Io(format!("{}: {err}", dir.display())))?;
        jobs
    };
    let results: Vec<Result<(), CliError>> = jobs
        .par_iter()
        .map(|(input, out)| augment_one(input, out, out_height, mode))
        .collect();
    for result in results {
        result?;
    }
    Ok(())
}

#[derive(Args)]
pub struct WarpArgs {
    /// Image to pull samples from (the second frame).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Forward flow of the first frame (.flo).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Output path for the reconstructed first frame.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn warp(args: WarpArgs, ctx: &Context) -> Result<(), CliError> {
    let image = ctx.cfg.resolve_opt(args.image, "image")?;
    let flow = ctx.cfg.resolve_opt(args.flow, "flow")?;
    let out = ctx.cfg.resolve_opt(args.out, "out")?;
    let settings = [
        ("image", show_path(&image)),
        ("flow", show_path(&flow)),
        ("out", show_path(&out)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    let image = read_image(&image.ok_or_else(|| missing("image"))?)?;
    let field = read_flo(&flow.ok_or_else(|| missing("flow"))?)?;
    let out = out.ok_or_else(|| missing("out"))?;
    let warped = backward_warp(&image, &field)?;
    commit_image(&warped, &out)
}

#[derive(Args)]
pub struct OcclusionArgs {
    /// Forward flow (.flo).
    #[arg(long)]
    forward: Option<PathBuf>,
    /// Backward flow (.flo).
    #[arg(long)]
    backward: Option<PathBuf>,
    /// Motion threshold in pixels: flow at or below it counts as static
    /// (default 0.5).
    #[arg(long)]
    eps: Option<f64>,
    /// Output mask for pixels leaving view forward in time (255 =
    /// occluded).
    #[arg(long)]
    out_forward: Option<PathBuf>,
    /// Output mask for pixels entering view (255 = occluded).
    #[arg(long)]
    out_backward: Option<PathBuf>,
}

fn mask_image(mask: &OcclusionMask) -> Image {
    let data = mask.data().iter().map(|&m| m as f32).collect();
    Image::from_data(mask.height(), mask.width(), 1, data).expect("mask dims are valid")
}

fn occlusion(args: OcclusionArgs, ctx: &Context) -> Result<(), CliError> {
    let forward = ctx.cfg.resolve_opt(args.forward, "forward")?;
    let backward = ctx.cfg.resolve_opt(args.backward, "backward")?;
    let eps = ctx.cfg.resolve(args.eps, "eps", 0.5)?;
    let out_forward = ctx.cfg.resolve_opt(args.out_forward, "out-forward")?;
    let out_backward = ctx.cfg.resolve_opt(args.out_backward, "out-backward")?;
    let settings = [
        ("backward", show_path(&backward)),
        ("eps", eps.to_string()),
        ("forward", show_path(&forward)),
        ("out-backward", show_path(&out_backward)),
        ("out-forward", show_path(&out_forward)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    if eps < 0.0 {
        return Err(CliError::Usage("--eps must be non-negative".into()));
    }
    let flow_fw = read_flo(&forward.ok_or_else(|| missing("forward"))?)?;
    let flow_bw = read_flo(&backward.ok_or_else(|| missing("backward"))?)?;
    let (occ_fw, occ_bw) = occlusion_masks(&flow_fw, &flow_bw, eps)?;
    let pixels = flow_fw.height() * flow_fw.width();
    for (name, mask, out) in [
        ("occlusion_coverage_forward", &occ_fw, &out_forward),
        ("occlusion_coverage_backward", &occ_bw, &out_backward),
    ] {
        if let Some(path) = out {
            commit_image(&mask_image(mask), path)?;
        }
        let report = MetricReport {
            name: name.into(),
            value: mask.coverage(),
            count: pixels,
            band_index: None,
        };
        println!("{}", report.json_line());
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted flow (.flo).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth flow (.flo).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Mask image; nonzero pixels are excluded from the averages (an
    /// occlusion mask fits directly).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Also report the wrapped error per horizontal band; the value must
    /// divide the flow height.
    #[arg(long)]
    bands: Option<usize>,
}

fn eval(args: EvalArgs, ctx: &Context) -> Result<(), CliError> {
    let pred = ctx.cfg.resolve_opt(args.pred, "pred")?;
    let gt = ctx.cfg.resolve_opt(args.gt, "gt")?;
    let mask_path = ctx.cfg.resolve_opt(args.mask, "mask")?;
    let bands = ctx.cfg.resolve_opt(args.bands, "bands")?;
    let settings = [
        ("bands", show(&bands)),
        ("gt", show_path(&gt)),
        ("mask", show_path(&mask_path)),
        ("pred", show_path(&pred)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    let pred = read_flo(&pred.ok_or_else(|| missing("pred"))?)?;
    let gt = read_flo(&gt.ok_or_else(|| missing("gt"))?)?;
    let mask = match &mask_path {
        Some(path) => {
            let img = read_image(path)?;
            let mut mask = OcclusionMask::new(img.height(), img.width());
            for i in 0..img.height() {
                for j in 0..img.width() {
                    mask.set(i, j, u8::from(img.get(i, j, 0) > 0.0));
                }
            }
            Some(mask)
        }
        None => None,
    };
    println!("{}", epe(&pred, &gt, mask.as_ref())?.json_line());
    println!("{}", wrapped_epe(&pred, &gt, mask.as_ref())?.json_line());
    if let Some(bands) = bands {
        for report in latitude_band_report(&pred, &gt, bands)? {
            println!("{}", report.json_line());
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct ColorizeArgs {
    /// Flow field to render (.flo).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Output image (.ppm/.png).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Magnitude mapped to full saturation: a number, or `auto` for the
    /// 99th percentile (default auto).
    #[arg(long)]
    max_magnitude: Option<String>,
}

fn colorize(args: ColorizeArgs, ctx: &Context) -> Result<(), CliError> {
    let flow = ctx.cfg.resolve_opt(args.flow, "flow")?;
    let out = ctx.cfg.resolve_opt(args.out, "out")?;
    let max_raw = ctx
        .cfg
        .resolve(args.max_magnitude, "max-magnitude", "auto".to_string())?;
    let settings = [
        ("flow", show_path(&flow)),
        ("max-magnitude", max_raw.clone()),
        ("out", show_path(&out)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    let max_magnitude = if max_raw == "auto" {
        None
    } else {
        let value: f64 = max_raw
            .parse()
            .map_err(|_| CliError::Usage(format!("--max-magnitude: '{max_raw}' is not a number")))?;
        if !value.is_finite() || value <= 0.0 {
            return Err(CliError::Usage("--max-magnitude must be positive".into()));
        }
        Some(value)
    };
    let field = read_flo(&flow.ok_or_else(|| missing("flow"))?)?;
    let out = out.ok_or_else(|| missing("out"))?;
    commit_image(&flow_to_color(&field, max_magnitude), &out)
}

#[derive(Args)]
pub struct FitArgs {
    /// Synthetic training frames to render (default 4).
    #[arg(long)]
    count: Option<usize>,
    /// Frame height; width is twice the height (default 32).
    #[arg(long)]
    height: Option<usize>,
    /// Texture seed for the frames (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for the random source kernel (default 1).
    #[arg(long)]
    kernel_seed: Option<u64>,
    /// Source kernel spatial size, odd (default 3).
    #[arg(long)]
    kernel_size: Option<usize>,
    /// Kernel output channels (default 1).
    #[arg(long)]
    out_channels: Option<usize>,
    /// Rows per group; must divide the height (default: height/4 when
    /// that divides, else height/2, else height).
    #[arg(long)]
    group_rows: Option<usize>,
    /// Overlap rows blended between neighbouring groups (default 1).
    #[arg(long)]
    interleave: Option<usize>,
    /// `ls` for the direct normal-equation solve, `gd` for gradient
    /// descent (default ls).
    #[arg(long)]
    method: Option<String>,
    /// Gradient-descent iterations (default 200).
    #[arg(long)]
    iterations: Option<usize>,
    /// Gradient-descent step; default picks one from the curvature.
    #[arg(long)]
    step: Option<f64>,
    /// Projected kernel spatial size, odd (default: same as the source).
    #[arg(long)]
    target_size: Option<usize>,
    /// Output path for the projection matrices.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional output path for the source kernel.
    #[arg(long)]
    out_kernel: Option<PathBuf>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic kernel in [-0.5, 0.5] per tap.
fn random_kernel(size: usize, c_in: usize, c_out: usize, seed: u64) -> Result<Kernel, CliError> {
    let n = size * size * c_in * c_out;
    let data = (0..n)
        .map(|k| {
            let bits = splitmix(seed.wrapping_mul(0x100000001B3).wrapping_add(k as u64));
            ((bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5) as f32
        })
        .collect();
    Kernel::from_data(size, size, c_in, c_out, data).map_err(Into::into)
}

fn default_group_rows(height: usize) -> usize {
    for candidate in [height / 4, height / 2, height] {
        if candidate >= 1 && height.is_multiple_of(candidate) {
            return candidate;
        }
    }
    height
}

fn fit(args: FitArgs, ctx: &Context) -> Result<(), CliError> {
    let count = ctx.cfg.resolve(args.count, "count", 4)?;
    let height = ctx.cfg.resolve(args.height, "height", 32)?;
    let seed = ctx.cfg.resolve(args.seed, "seed", 0)?;
    let kernel_seed = ctx.cfg.resolve(args.kernel_seed, "kernel-seed", 1)?;
    let kernel_size = ctx.cfg.resolve(args.kernel_size, "kernel-size", 3)?;
    let out_channels = ctx.cfg.resolve(args.out_channels, "out-channels", 1)?;
    let group_rows = ctx.cfg.resolve_opt(args.group_rows, "group-rows")?;
    let interleave = ctx.cfg.resolve(args.interleave, "interleave", 1)?;
    let method_raw = ctx.cfg.resolve(args.method, "method", "ls".to_string())?;
    let iterations = ctx.cfg.resolve(args.iterations, "iterations", 200)?;
    let step = ctx.cfg.resolve_opt(args.step, "step")?;
    let target_size = ctx.cfg.resolve_opt(args.target_size, "target-size")?;
    let out = ctx.cfg.resolve_opt(args.out, "out")?;
    let out_kernel = ctx.cfg.resolve_opt(args.out_kernel, "out-kernel")?;
    let settings = [
        ("count", count.to_string()),
        ("group-rows", show(&group_rows)),
        ("height", height.to_string()),
        ("interleave", interleave.to_string()),
        ("iterations", iterations.to_string()),
        ("kernel-seed", kernel_seed.to_string()),
        ("kernel-size", kernel_size.to_string()),
        ("method", method_raw.clone()),
        ("out", show_path(&out)),
        ("out-channels", out_channels.to_string()),
        ("out-kernel", show_path(&out_kernel)),
        ("seed", seed.to_string()),
        ("step", show(&step)),
        ("target-size", show(&target_size)),
    ];
    if ctx.finish(&settings)? {
        return Ok(());
    }
    if height == 0 || count == 0 {
        return Err(CliError::Usage(
            "--height and --count must be at least 1".into(),
        ));
    }
    let method = match method_raw.as_str() {
        "ls" => FitMethod::LeastSquares,
        "gd" => FitMethod::GradientDescent,
        _ => {
            return Err(CliError::Usage(format!(
                "--method must be 'ls' or 'gd', got '{method_raw}'"
            )))
        }
    };
    let out = out.ok_or_else(|| missing("out"))?;
    let group_rows = group_rows.unwrap_or_else(|| default_group_rows(height));
    let plan = rowgroup_partition(height, group_rows, interleave)
        .map_err(|err| CliError::Usage(err.to_string()))?;
    let kernel = random_kernel(kernel_size, 3, out_channels, kernel_seed)?;

    let width = 2 * height;
    let mut sources = Vec::with_capacity(count);
    let mut augmented = Vec::with_capacity(count);
    for index in 0..count {
        let frame = textured_sphere_image(height, width, 3, seed.wrapping_add(index as u64));
        let projected = flow360::augment::augment_image(&frame);
        sources.push(FeatureMap::from_image(&frame));
        augmented.push(FeatureMap::from_image(&projected));
    }
    let opts = FitOptions {
        method,
        correspondence: Correspondence::Projection,
        target_size: target_size.map(|t| (t, t)),
        iterations,
        step,
        ..FitOptions::default()
    };
    let result = fit_transform(&sources, &augmented, &kernel, &plan, &opts)?;
    commit(&out, |tmp| {
        write_projection_set(&result.projections, tmp).map_err(Into::into)
    })?;
    info!("wrote {}", out.display());
    if let Some(path) = &out_kernel {
        commit(path, |tmp| write_kernel(&kernel, tmp).map_err(Into::into))?;
        info!("wrote {}", path.display());
    }
    let reports = [
        MetricReport {
            name: "fit_final_loss".into(),
            value: result.final_loss,
            count: result.loss_trace.len(),
            band_index: None,
        },
        MetricReport {
            name: "fit_degenerate".into(),
            value: f64::from(u8::from(result.degenerate)),
            count: plan.group_count(),
            band_index: None,
        },
    ];
    for report in &reports {
        println!("{}", report.json_line());
    }
    Ok(())
}
