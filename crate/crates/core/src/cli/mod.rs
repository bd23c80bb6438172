//! The `xplore` command line: one subcommand per pipeline stage, each
//! reading and writing the binary file formats.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cluster::{clustering_metrics, kmeans_fit, read_cluster_model, write_cluster_model, ClusterModel};
use crate::data::{
    extract_trivial_features, fit_pca, generate_synthetic_dataset, l2_normalize_rows, project_pca, read_features,
    read_images, write_features, write_images, ImageSet,
};
use crate::error::{Result, XploreError};
use crate::montage::{emit_montage, grid_for, stack};
use crate::nets::NoiseMode;
use crate::norm::ConditionMode;
use crate::selftest::run_selftest;
use crate::train::{
    config_hash, load_checkpoint, parse_metrics, resume, train, translate, Preset, TrainConfig,
};
pub use config::{PipelineConfig, SEED_ENV};

/// Cluster count when neither flag nor config gives one, suited to 256×256 inputs.
pub const DEFAULT_K: usize = 50;

#[derive(Parser, Debug)]
#[command(name = "xplore", version, about = "Discover attributes by clustering, then translate images between clusters")]
pub struct Cli {
    /// Pipeline configuration (TOML); flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a labeled colored-shapes dataset to XIM1.
    Synth(SynthArgs),
    /// Trivial features, L2 normalization and PCA, written as XFV1.
    Features(FeaturesArgs),
    /// k-means pseudo-labels, written as XCM1.
    Cluster(ClusterArgs),
    /// Per-cluster montages and a table of sizes and spreads.
    InspectClusters(InspectArgs),
    /// Train the translation networks; writes XCK1 checkpoints and metrics.tsv.
    Train(TrainArgs),
    /// Translate images toward one cluster, written as XIM1.
    Translate(TranslateArgs),
    /// Summarize a metrics log and/or a checkpoint.
    Report(ReportArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// `NxM` (first N color-shape combinations, M images each) or `red-circle:10,blue-square:5`.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Average-pooling factor for the spatial part of the features.
    #[arg(long)]
    pub factor: Option<usize>,
    /// PCA output dimension (clamped to min(n, d)).
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of clusters [default: 50].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image file with truth labels, for NMI and ARI.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Images per cluster montage.
    #[arg(long, default_value_t = 16)]
    pub per_cluster: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `desk` or `paper`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `mu-sigma`, `mu-only` or `label-embed`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from this checkpoint up to `--steps`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Target cluster index.
    #[arg(long)]
    pub cluster: usize,
    /// Inject decoder noise from this seed; off when absent.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a PPM with inputs on top and translations below.
    #[arg(long)]
    pub montage: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// status: 0 on success, 1 for invalid input, 2 for aborted computation.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_err(e: std::io::Error) -> XploreError {
    XploreError::Io(e)
}

fn need(flag: Option<&PathBuf>, file: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(file).cloned().ok_or_else(|| XploreError::InvalidArgument(format!("--{name} is required")))
}

fn parse_preset(s: Option<&str>) -> Result<Option<Preset>> {
    match s {
        None => Ok(None),
        Some("desk") => Ok(Some(Preset::Desk)),
        Some("paper") => Ok(Some(Preset::Paper)),
        Some(o) => Err(XploreError::InvalidArgument(format!("unknown preset {o:?}"))),
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let env_seed = cfg.effective_seed()?;
    let seed = |flag: Option<u64>| flag.or(env_seed).unwrap_or(0);
    let paths = &cfg.paths;
    match &cli.command {
        Command::Synth(a) => {
            let spec = a.spec.clone().or(cfg.synth.spec.clone()).unwrap_or_else(|| "6x100".into());
            let size = a.size.or(cfg.synth.size).unwrap_or(16);
            let path = need(a.out.as_ref(), paths.images.as_ref(), "out")?;
            let images = generate_synthetic_dataset(&spec.parse()?, size, seed(a.seed))?;
            write_images(&path, &images)?;
            writeln!(out, "wrote {} images of {size}x{size} to {}", images.count, path.display()).map_err(io_err)?;
        }
        Command::Features(a) => {
            let images = read_images(&need(a.images.as_ref(), paths.images.as_ref(), "images")?)?;
            let factor = a.factor.or(cfg.features.factor).unwrap_or(4);
            let path = need(a.out.as_ref(), paths.features.as_ref(), "out")?;
            let feats = l2_normalize_rows(&extract_trivial_features(&images, factor)?)?;
            let want = a.pca_dim.or(cfg.features.pca_dim).unwrap_or(256);
            let r = crate::data::effective_rank(want, &feats);
            let reduced = project_pca(&fit_pca(&feats, r)?, &feats)?;
            write_features(&path, &reduced)?;
            writeln!(out, "features {}x{} -> {}x{} written to {}", feats.rows, feats.cols, reduced.rows, reduced.cols, path.display())
                .map_err(io_err)?;
        }
        Command::Cluster(a) => {
            let feats = read_features(&need(a.features.as_ref(), paths.features.as_ref(), "features")?)?;
            let k = a.k.or(cfg.clustering.k).unwrap_or(DEFAULT_K);
            let mut opts = cfg.clustering_options(seed(a.seed));
            if let Some(r) = a.restarts {
                opts.restarts = r;
            }
            let path = need(a.out.as_ref(), paths.clusters.as_ref(), "out")?;
            let model = kmeans_fit(&feats, k, &opts)?;
            write_cluster_model(&path, &model)?;
            writeln!(out, "k = {k}, inertia {}, sizes {:?}", model.inertia, model.sizes()).map_err(io_err)?;
            if let Some(ip) = a.images.as_ref().or(paths.images.as_ref()) {
                let images = read_images(ip)?;
                if let Some(truth) = &images.truth_labels {
                    let truth: Vec<usize> = truth.iter().map(|&t| t as usize).collect();
                    let m = clustering_metrics(&model.assignments, &truth)?;
                    writeln!(out, "NMI {:.4}  ARI {:.4}", m.nmi, m.ari).map_err(io_err)?;
                }
            }
        }
        Command::InspectClusters(a) => {
            let images = read_images(&need(a.images.as_ref(), paths.images.as_ref(), "images")?)?;
            let model = read_cluster_model(&need(a.clusters.as_ref(), paths.clusters.as_ref(), "clusters")?)?;
            let dir = need(a.out_dir.as_ref(), paths.out_dir.as_ref(), "out-dir")?;
            inspect_clusters(&images, &model, a.per_cluster, &dir, out)?;
        }
        Command::Train(a) => {
            let images = read_images(&need(a.images.as_ref(), paths.images.as_ref(), "images")?)?;
            let model = read_cluster_model(&need(a.clusters.as_ref(), paths.clusters.as_ref(), "clusters")?)?;
            let dir = need(a.out_dir.as_ref(), paths.out_dir.as_ref(), "out-dir")?;
            let preset = parse_preset(a.preset.as_deref())?.or(cfg.train.preset).unwrap_or(Preset::Desk);
            let mut tc: TrainConfig = cfg.train_config(preset);
            tc.seed = seed(a.seed);
            if let Some(s) = a.steps {
                tc.steps = s;
            }
            if let Some(m) = &a.mode {
                tc.mode = m.parse::<ConditionMode>()?;
            }
            if let Some(c) = a.checkpoint_every {
                tc.checkpoint_every = c;
            }
            if images.height != images.width {
                return Err(XploreError::InvalidArgument(format!("images must be square, got {}x{}", images.height, images.width)));
            }
            let net = cfg.net_config(preset, images.channels, images.height, model.k, tc.mode.dim(model.k, model.dim));
            let run = match &a.resume {
                Some(ck) => resume(ck, &images, &model, &net, &tc, tc.steps, &dir)?,
                None => train(&images, &model, &net, &tc, &dir)?,
            };
            if let Some((s, r)) = run.log.last() {
                writeln!(out, "step {s}: L_D {}  L_G {}  rec {}", r.total_d, r.total_g, r.rec).map_err(io_err)?;
            }
            if let Some(p) = &run.final_checkpoint {
                writeln!(out, "checkpoint {}", p.display()).map_err(io_err)?;
            }
        }
        Command::Translate(a) => {
            let ck = need(a.checkpoint.as_ref(), paths.checkpoint.as_ref(), "checkpoint")?;
            let images = read_images(&need(a.images.as_ref(), paths.images.as_ref(), "images")?)?;
            let path = a.out.clone().ok_or_else(|| XploreError::InvalidArgument("--out is required".into()))?;
            let state = load_checkpoint(&ck, None)?;
            let noise = a.noise_seed.map_or(NoiseMode::Off, NoiseMode::Seeded);
            let y = translate(&state, &images, a.cluster, noise)?;
            write_images(&path, &y)?;
            if let Some(m) = &a.montage {
                let n = images.count.min(16);
                let idx: Vec<usize> = (0..n).collect();
                let both = stack(&images.select(&idx), &y.select(&idx))?;
                emit_montage(&both, 2, n, m)?;
            }
            writeln!(out, "translated {} images toward cluster {} into {}", y.count, a.cluster, path.display()).map_err(io_err)?;
        }
        Command::Report(a) => {
            if a.metrics.is_none() && a.checkpoint.is_none() && paths.checkpoint.is_none() {
                return Err(XploreError::InvalidArgument("give --metrics and/or --checkpoint".into()));
            }
            if let Some(m) = &a.metrics {
                report_metrics(m, out)?;
            }
            if let Some(ck) = a.checkpoint.as_ref().or(paths.checkpoint.as_ref()) {
                let s = load_checkpoint(ck, None)?;
                writeln!(
                    out,
                    "checkpoint {}: step {}, k {}, mode {:?}, hash {:016x}, {} generator and {} critic parameters",
                    ck.display(),
                    s.step,
                    s.net.k,
                    s.train.mode,
                    config_hash(&s.net, s.train.mode),
                    s.g.params.numel(),
                    s.d.params.numel()
                )
                .map_err(io_err)?;
            }
        }
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                writeln!(out, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail).map_err(io_err)?;
            }
            return Ok(if results.iter().all(|r| r.passed) { 0 } else { 2 });
        }
    }
    Ok(0)
}

fn inspect_clusters(images: &ImageSet, model: &ClusterModel, per: usize, dir: &Path, out: &mut dyn Write) -> Result<()> {
    if model.assignments.len() != images.count {
        return Err(XploreError::InvalidArgument(format!(
            "cluster model labels {} images, image file has {}",
            model.assignments.len(),
            images.count
        )));
    }
    if per == 0 {
        return Err(XploreError::InvalidArgument("--per-cluster must be positive".into()));
    }
    fs::create_dir_all(dir)?;
    writeln!(out, "cluster\tsize\tsigma_mean\tsigma_norm").map_err(io_err)?;
    for j in 0..model.k {
        let members: Vec<usize> = (0..images.count).filter(|&i| model.assignments[i] == j).collect();
        let s = model.std(j);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        writeln!(out, "{j}\t{}\t{mean:.6}\t{norm:.6}", members.len()).map_err(io_err)?;
        if members.is_empty() {
            continue;
        }
        let shown = &members[..members.len().min(per)];
        let (rows, cols) = grid_for(shown.len());
        emit_montage(&images.select(shown), rows, cols, &dir.join(format!("cluster-{j:03}.ppm")))?;
    }
    Ok(())
}

fn report_metrics(path: &Path, out: &mut dyn Write) -> Result<()> {
    let log = parse_metrics(&fs::read_to_string(path)?)?;
    let (Some(first), Some(last)) = (log.first(), log.last()) else {
        return Err(XploreError::InvalidArgument(format!("{} has no rows", path.display())));
    };
    writeln!(out, "{} rows, steps {}..{}", log.len(), first.0, last.0).map_err(io_err)?;
    writeln!(out, "column\tfirst\tlast\tmin\tmax").map_err(io_err)?;
    for (c, name) in crate::losses::LossReport::COLUMNS.iter().enumerate() {
        let vals: Vec<f64> = log.iter().map(|(_, r)| r.values()[c]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        writeln!(out, "{name}\t{:.6}\t{:.6}\t{lo:.6}\t{hi:.6}", vals[0], vals[vals.len() - 1]).map_err(io_err)?;
    }
    Ok(())
}
