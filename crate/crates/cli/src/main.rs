mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hrd_core::alignment::build_index_map;
use hrd_core::config::Config;
use hrd_core::distribution::DepthRange;
use hrd_core::grid::Grid;
use hrd_core::io;
use hrd_core::metrics::{evaluate_masked, MetricReport};
use hrd_core::pipeline::run_oracle;
use hrd_core::resample::{extract_patches, geometric_fuse_with_coverage, FusionWeighting, TangentPatchSet};
use hrd_core::sphere::{ErpGeometry, PatchLayout, SphereDir};
use hrd_core::synth::{oracle_direction_features, oracle_patch_vectors, render_depth, RNG_NAME};

#[derive(Parser)]
#[command(name = "hrd", version, about = "Tangent-patch geometry and depth-distribution tools for 360-degree depth maps")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "HRD_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample tangent patches from an equirectangular image.
    Project(ProjectArgs),
    /// Merge a patch directory back to an equirectangular map.
    Backproject(BackprojectArgs),
    /// Render a scene and run the holistic and regional paths with oracle features.
    Pipeline(PipelineArgs),
    /// Compare a predicted depth map with ground truth.
    Eval(EvalArgs),
    /// Fit histogram bins to depth samples.
    Binfit(BinfitArgs),
    /// Build a patch index map from features.
    Indexmap(IndexmapArgs),
    /// Render a synthetic ground-truth depth map.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ProjectArgs {
    /// Input map (.pfm, .png or .hdt).
    #[arg(long = "in")]
    input: PathBuf,
    /// Built-in patch count or a TOML file with a [layout] table.
    #[arg(long)]
    layout: Option<String>,
    /// Patch field of view in degrees.
    #[arg(long)]
    fov_deg: Option<f64>,
    /// Patch side length in pixels.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Output directory for patches and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Cosine,
    Uniform,
}

impl From<WeightingArg> for FusionWeighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Cosine => FusionWeighting::CosineFalloff,
            WeightingArg::Uniform => FusionWeighting::Uniform,
        }
    }
}

#[derive(Args)]
struct BackprojectArgs {
    /// Directory written by `project`.
    #[arg(long)]
    patches: PathBuf,
    /// Per-patch blending weights.
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
    /// Output map (.pfm, .png or .hdt).
    #[arg(long)]
    out: PathBuf,
    /// Coverage mask PNG; defaults to `<out>.coverage.png`.
    #[arg(long)]
    coverage: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
}

#[derive(Args)]
struct PipelineArgs {
    /// Scene TOML; its tables override the config.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Source of features for the two paths.
    #[arg(long, value_enum, default_value = "oracle")]
    mode: Mode,
    /// Output report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted depth map.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth map; non-positive or non-finite pixels are invalid.
    #[arg(long)]
    gt: PathBuf,
    /// Fraction of rows dropped at each pole.
    #[arg(long)]
    mask_frac: Option<f64>,
    /// Lower clamp for predictions.
    #[arg(long)]
    dmin: Option<f64>,
    /// Upper clamp for predictions.
    #[arg(long)]
    dmax: Option<f64>,
    /// Metrics CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BinfitArgs {
    /// CSV with one depth per line in the first column.
    #[arg(long)]
    samples: PathBuf,
    /// Number of bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Depth range as `min,max`.
    #[arg(long, value_parser = parse_range)]
    range: Option<(f64, f64)>,
    /// Maximum optimizer steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Maximum step size.
    #[arg(long)]
    lr: Option<f64>,
    /// Trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Final histogram CSV; defaults to `<out stem>_histogram.csv`.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Loss curve; defaults to `<out stem>_loss.svg`.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct IndexmapArgs {
    /// Per-pixel features, HDT `[h, w, c]`.
    #[arg(long, requires = "vectors", conflicts_with = "oracle_height")]
    features: Option<PathBuf>,
    /// Per-patch vectors, HDT `[n, c]`.
    #[arg(long, requires = "features")]
    vectors: Option<PathBuf>,
    /// Use direction features at this ERP height with the configured layout.
    #[arg(long)]
    oracle_height: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene TOML; its tables override the config.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output height; width is twice this.
    #[arg(long)]
    erp_height: Option<usize>,
    /// Output depth (.pfm, .png or .hdt).
    #[arg(long)]
    out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `min,max`")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn load_config(cli: &Cli, extra: Option<&Path>) -> Result<Config> {
    let paths: Vec<&Path> = cli.config.as_deref().into_iter().chain(extra).collect();
    let mut cfg = if paths.is_empty() { Config::default() } else { Config::load_layered(&paths)? };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn read_map(path: &Path, cfg: &Config) -> Result<Grid> {
    let g = match extension(path).as_str() {
        "pfm" => io::read_pfm(path),
        "png" => io::read_png_image(path, cfg.io.png_depth_scale),
        "hdt" => io::load_grid_hdt(path),
        other => bail!("{}: unsupported extension '{other}'", path.display()),
    };
    with_context(g, path)
}

fn write_map(path: &Path, g: &Grid, cfg: &Config) -> Result<()> {
    let r = match extension(path).as_str() {
        "pfm" => io::write_pfm(path, g),
        "png" => io::write_png16(path, g, cfg.io.png_depth_scale),
        "hdt" => io::save_grid_hdt(path, g),
        other => bail!("{}: unsupported extension '{other}'", path.display()),
    };
    with_context(r, path)
}

fn with_context<T>(r: hrd_core::Result<T>, path: &Path) -> Result<T> {
    r.with_context(|| path.display().to_string())
}

fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    base.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    erp_width: usize,
    erp_height: usize,
    channels: usize,
    fov_deg: f64,
    fov_rad: f64,
    patch_size: usize,
    /// `[theta, phi]` in degrees.
    centers_deg: Vec<[f64; 2]>,
    centers_rad: Vec<[f64; 2]>,
    patches: Vec<String>,
}

fn resolve_layout(cfg: &Config, layout: Option<&str>, fov_deg: Option<f64>, patch_size: Option<usize>) -> Result<PatchLayout> {
    let mut lc = cfg.layout.clone();
    if let Some(spec) = layout {
        if let Ok(n) = spec.parse::<usize>() {
            lc.patches = n;
            lc.latitudes_deg = None;
            lc.counts = None;
        } else {
            lc = with_context(Config::load(spec), Path::new(spec))?.layout;
        }
    }
    if let Some(f) = fov_deg {
        lc.fov_deg = f;
    }
    if let Some(p) = patch_size {
        lc.patch_size = p;
    }
    Ok(lc.build()?)
}

fn project(cli: &Cli, a: &ProjectArgs) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let layout = resolve_layout(&cfg, a.layout.as_deref(), a.fov_deg, a.patch_size)?;
    let src = read_map(&a.input, &cfg)?;
    let g = with_context(src.erp_geometry(), &a.input)?;
    let set = extract_patches(&src, &layout)?;
    fs::create_dir_all(&a.out)?;
    let ext = if matches!(src.channels(), 1 | 3) { "pfm" } else { "hdt" };
    let mut names = Vec::with_capacity(layout.len());
    for (k, patch) in set.patches().iter().enumerate() {
        let name = format!("patch_{k:03}.{ext}");
        write_map(&a.out.join(&name), patch, &cfg)?;
        names.push(name);
    }
    let manifest = Manifest {
        erp_width: g.width,
        erp_height: g.height,
        channels: src.channels(),
        fov_deg: layout.fov().to_degrees(),
        fov_rad: layout.fov(),
        patch_size: layout.patch_size(),
        centers_deg: layout.centers().iter().map(|c| [c.theta.to_degrees(), c.phi.to_degrees()]).collect(),
        centers_rad: layout.centers().iter().map(|c| [c.theta, c.phi]).collect(),
        patches: names,
    };
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("wrote {} patches to {}", layout.len(), a.out.display());
    Ok(())
}

fn backproject(cli: &Cli, a: &BackprojectArgs) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let manifest_path = a.patches.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).with_context(|| manifest_path.display().to_string())?;
    let m: Manifest = serde_json::from_str(&text).with_context(|| manifest_path.display().to_string())?;
    if m.centers_rad.len() != m.patches.len() {
        bail!("manifest lists {} centers for {} patches", m.centers_rad.len(), m.patches.len());
    }
    let centers = m.centers_rad.iter().map(|&[t, p]| SphereDir { theta: t, phi: p }).collect();
    let layout = PatchLayout::new(centers, m.fov_rad, m.patch_size)?;
    let patches = m
        .patches
        .iter()
        .map(|name| read_map(&a.patches.join(name), &cfg))
        .collect::<Result<Vec<_>>>()?;
    if patches.iter().any(|p| p.channels() != m.channels) {
        bail!("patch channels disagree with the manifest ({})", m.channels);
    }
    let set = TangentPatchSet::new(layout, patches)?;
    let g = ErpGeometry::new(m.erp_width, m.erp_height)?;
    let weighting = a.weighting.map_or(cfg.fusion.weighting, FusionWeighting::from);
    let fused = geometric_fuse_with_coverage(&set, g, weighting);
    write_map(&a.out, &fused.grid, &cfg)?;
    let coverage = a.coverage.clone().unwrap_or_else(|| sibling(&a.out, ".coverage.png"));
    io::write_mask_png(&coverage, g.width, g.height, fused.coverage.iter().map(|&c| c > 0))?;
    let uncovered = fused.coverage.iter().filter(|&&c| c == 0).count();
    println!("fused {} patches into {}x{} ({uncovered} uncovered pixels)", set.patches().len(), g.width, g.height);
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    mode: &'a str,
    seed: u64,
    rng: &'a str,
    erp_width: usize,
    erp_height: usize,
    patches: usize,
    bins: usize,
    fusion_weights: [f64; 2],
    loss_depth: f64,
    loss_histogram: f64,
    loss_total: f64,
    fit_iterations: usize,
    fit_initial_loss: f64,
    fit_final_loss: f64,
    metrics: Vec<(&'a str, MetricReport)>,
}

fn pipeline(cli: &Cli, a: &PipelineArgs) -> Result<()> {
    let Mode::Oracle = a.mode;
    let cfg = load_config(cli, a.scene.as_deref())?;
    let scene = cfg.scene_spec()?;
    let run = run_oracle(&cfg, &scene)?;
    fs::create_dir_all(&a.out)?;
    let out = |name: &str| a.out.join(name);
    io::write_pfm(out("gt.pfm"), &run.gt)?;
    io::write_pfm(out("depth_holistic.pfm"), &run.holistic)?;
    io::write_pfm(out("depth_regional.pfm"), &run.regional)?;
    io::write_pfm(out("depth_fused.pfm"), &run.fused)?;
    if run.index_map.patch_count() <= 256 {
        io::write_index_png(out("index_map.png"), &run.index_map)?;
    }
    io::index_map_to_hdt(&run.index_map).save(out("index_map.hdt"))?;
    fs::write(out("index_freq.csv"), io::index_frequency_csv(&run.index_map))?;
    fs::write(out("histogram_holistic.csv"), io::histogram_csv(&run.holistic_fit.histogram))?;

    let mut csv = format!("map,{}\n", MetricReport::csv_header());
    let mut table = String::new();
    for (name, m) in &run.metrics {
        writeln!(csv, "{name},{}", m.csv_row())?;
        writeln!(table, "[{name}]\n{}\n", m.table())?;
    }
    fs::write(out("metrics.csv"), csv)?;
    fs::write(out("metrics.txt"), &table)?;

    let record = RunRecord {
        mode: "oracle",
        seed: cfg.seed,
        rng: RNG_NAME,
        erp_width: run.geometry.width,
        erp_height: run.geometry.height,
        patches: run.layout.len(),
        bins: cfg.depth.bins,
        fusion_weights: {
            let (w0, w1) = cfg.fusion.weights().effective();
            [w0, w1]
        },
        loss_depth: run.loss.depth,
        loss_histogram: run.loss.histogram,
        loss_total: run.loss.total,
        fit_iterations: run.holistic_fit.steps.len() - 1,
        fit_initial_loss: run.holistic_fit.initial_loss(),
        fit_final_loss: run.holistic_fit.final_loss(),
        metrics: run.metrics.to_vec(),
    };
    fs::write(out("run.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    print!("{table}");
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let pred = read_map(&a.pred, &cfg)?;
    let gt = read_map(&a.gt, &cfg)?;
    let range = DepthRange::new(a.dmin.unwrap_or(cfg.depth.d_min), a.dmax.unwrap_or(cfg.depth.d_max))?;
    let frac = a.mask_frac.unwrap_or(cfg.eval.mask_frac);
    let report = evaluate_masked(&pred, &gt, frac, frac, range)?;
    fs::write(&a.out, format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row()))?;
    println!("{}", report.table());
    Ok(())
}

fn binfit(cli: &Cli, a: &BinfitArgs) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let text = fs::read_to_string(&a.samples).with_context(|| a.samples.display().to_string())?;
    let samples = with_context(io::parse_samples_csv(&text), &a.samples)?;
    let (lo, hi) = a.range.unwrap_or((cfg.depth.d_min, cfg.depth.d_max));
    let range = DepthRange::new(lo, hi)?;
    let mut fit = cfg.fit_config();
    if let Some(b) = a.bins {
        fit.bins = b;
    }
    if let Some(s) = a.steps {
        fit.steps = s;
    }
    if let Some(lr) = a.lr {
        fit.lr = lr;
    }
    let trace = hrd_core::binfit::fit_bins(&samples, range, &fit, cfg.seed)?;

    let mut csv = String::from("iteration,loss,step,halvings\n");
    for s in &trace.steps {
        writeln!(csv, "{},{:.12e},{:.6e},{}", s.iteration, s.loss, s.step, s.halvings)?;
    }
    fs::write(&a.out, csv)?;
    let hist_path = a.histogram.clone().unwrap_or_else(|| sibling(&a.out, "_histogram.csv"));
    fs::write(&hist_path, io::histogram_csv(&trace.histogram))?;
    let svg_path = a.svg.clone().unwrap_or_else(|| sibling(&a.out, "_loss.svg"));
    let points: Vec<(usize, f64)> = trace.steps.iter().map(|s| (s.iteration, s.loss)).collect();
    fs::write(&svg_path, plot::loss_curve_svg(&format!("Chamfer loss, B = {}", fit.bins), &points))?;
    println!(
        "{} iterations, loss {:.6e} -> {:.6e} ({:.2}% of initial)",
        trace.steps.len() - 1,
        trace.initial_loss(),
        trace.final_loss(),
        100.0 * trace.final_loss() / trace.initial_loss()
    );
    Ok(())
}

fn indexmap(cli: &Cli, a: &IndexmapArgs) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let m = match (&a.features, &a.vectors, a.oracle_height) {
        (Some(f), Some(v), None) => {
            let features = io::load_grid_hdt(f).with_context(|| f.display().to_string())?;
            let vectors = io::HdtTensor::load(v)
                .and_then(|t| io::patch_vectors_from_hdt(&t))
                .with_context(|| v.display().to_string())?;
            build_index_map(&features, &vectors)?
        }
        (None, None, Some(h)) => {
            let layout = cfg.layout.build()?;
            build_index_map(&oracle_direction_features(ErpGeometry::from_height(h)?), &oracle_patch_vectors(&layout))?
        }
        _ => bail!("give either --features and --vectors, or --oracle-height"),
    };
    fs::create_dir_all(&a.out)?;
    if m.patch_count() <= 256 {
        io::write_index_png(a.out.join("index_map.png"), &m)?;
    }
    io::index_map_to_hdt(&m).save(a.out.join("index_map.hdt"))?;
    fs::write(a.out.join("index_freq.csv"), io::index_frequency_csv(&m))?;
    println!("{}x{} index map over {} patches", m.width(), m.height(), m.patch_count());
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut cfg = load_config(cli, a.scene.as_deref())?;
    if let Some(h) = a.erp_height {
        cfg.scene.erp_height = h;
    }
    let scene = cfg.scene_spec()?;
    let g = ErpGeometry::from_height(cfg.scene.erp_height)?;
    write_map(&a.out, &render_depth(&scene, g), &cfg)?;
    println!("rendered {}x{} depth to {}", g.width, g.height, a.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Project(a) => project(cli, a),
        Command::Backproject(a) => backproject(cli, a),
        Command::Pipeline(a) => pipeline(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Binfit(a) => binfit(cli, a),
        Command::Indexmap(a) => indexmap(cli, a),
        Command::Synth(a) => synth(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
