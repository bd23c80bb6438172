use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use xplore_tensor::Tensor;

use crate::cluster::ClusterModel;
use crate::data::ImageSet;
use crate::error::{invalid, Result, XploreError};
use crate::losses::LossReport;
use crate::nets::{DecoderNorm, GenCondition, NetConfig, NoiseMode};
use crate::train::checkpoint::{load_checkpoint, save_checkpoint};
use crate::train::config::TrainConfig;
use crate::train::state::{init_state, sample_batch, step_rng, train_step, TrainState};

/// Images per generator call in [`translate`].
pub const TRANSLATE_CHUNK: usize = 32;

pub struct RunOutput {
    pub state: TrainState,
    /// `(step, report)` for every step taken by this call.
    pub log: Vec<(u64, LossReport)>,
    pub final_checkpoint: Option<PathBuf>,
}

/// `step` then the nine report values, tab separated.
pub fn format_metrics_line(step: u64, r: &LossReport) -> String {
    let mut s = step.to_string();
    for v in r.values() {
        s.push('\t');
        s.push_str(&v.to_string());
    }
    s
}

pub fn parse_metrics(text: &str) -> Result<Vec<(u64, LossReport)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(XploreError::Format(format!("metrics line {}: {} columns", ln + 1, cols.len())));
        }
        let bad = |_| XploreError::Format(format!("metrics line {}: bad number", ln + 1));
        let step = cols[0].parse::<u64>().map_err(|_| XploreError::Format(format!("metrics line {}: bad step", ln + 1)))?;
        let mut v = [0.0; 9];
        for (slot, c) in v.iter_mut().zip(&cols[1..]) {
            *slot = c.parse::<f64>().map_err(bad)?;
        }
        out.push((step, LossReport::from_values(v)));
    }
    Ok(out)
}

fn labels_for(images: &ImageSet, cluster: &ClusterModel) -> Result<Vec<usize>> {
    if images.count == 0 {
        return invalid("empty dataset");
    }
    if cluster.assignments.len() != images.count {
        return invalid(format!(
            "cluster model labels {} images but the dataset has {}",
            cluster.assignments.len(),
            images.count
        ));
    }
    Ok(cluster.assignments.clone())
}

fn check_images(images: &ImageSet, net: &NetConfig) -> Result<()> {
    if images.channels != net.channels || images.height != net.image_size || images.width != net.image_size {
        return invalid(format!(
            "images are {}x{}x{}, network expects {}x{}x{}",
            images.channels, images.height, images.width, net.channels, net.image_size, net.image_size
        ));
    }
    Ok(())
}

/// Advances `state` to step `until`, calling `sink` after every step.
fn run_steps(
    state: &mut TrainState,
    images: &ImageSet,
    labels: &[usize],
    until: u64,
    mut sink: impl FnMut(&TrainState, &LossReport) -> Result<()>,
) -> Result<()> {
    let cfg = state.train.clone();
    while state.step < until {
        let mut rng = step_rng(cfg.seed, state.step + 1);
        let batch = sample_batch(images, labels, state, cfg.batch, &mut rng)?;
        let report = train_step(state, &batch, &cfg)?;
        sink(state, &report)?;
    }
    Ok(())
}

/// Trains from scratch without touching the filesystem.
pub fn train_in_memory(images: &ImageSet, cluster: &ClusterModel, net: &NetConfig, cfg: &TrainConfig) -> Result<RunOutput> {
    check_images(images, net)?;
    let labels = labels_for(images, cluster)?;
    let mut state = init_state(net, cfg, cluster)?;
    let mut log = Vec::new();
    run_steps(&mut state, images, &labels, cfg.steps, |s, r| {
        log.push((s.step, *r));
        Ok(())
    })?;
    Ok(RunOutput { state, log, final_checkpoint: None })
}

fn drive(mut state: TrainState, images: &ImageSet, labels: &[usize], out_dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out_dir)?;
    let mut metrics = OpenOptions::new().create(true).append(true).open(out_dir.join("metrics.tsv"))?;
    let every = state.train.checkpoint_every;
    let until = state.train.steps;
    let mut log = Vec::new();
    run_steps(&mut state, images, labels, until, |s, r| {
        writeln!(metrics, "{}", format_metrics_line(s.step, r))?;
        log.push((s.step, *r));
        if every > 0 && s.step % every == 0 && s.step < until {
            save_checkpoint(&out_dir.join(format!("step-{:08}.xck", s.step)), s)?;
        }
        Ok(())
    })?;
    metrics.flush()?;
    let path = out_dir.join("final.xck");
    save_checkpoint(&path, &state)?;
    Ok(RunOutput { state, log, final_checkpoint: Some(path) })
}

/// Trains from scratch, appending to `out_dir/metrics.tsv` and writing
/// `step-NNNNNNNN.xck` at the configured cadence and `final.xck` at the end.
pub fn train(images: &ImageSet, cluster: &ClusterModel, net: &NetConfig, cfg: &TrainConfig, out_dir: &Path) -> Result<RunOutput> {
    check_images(images, net)?;
    let labels = labels_for(images, cluster)?;
    drive(init_state(net, cfg, cluster)?, images, &labels, out_dir)
}

/// Continues a checkpointed run up to `until` steps.
///
/// The checkpoint must match `net` and `cfg.mode`; the stored training
/// configuration is kept apart from the step target so the continuation
/// replays the uninterrupted run.
pub fn resume(
    checkpoint: &Path,
    images: &ImageSet,
    cluster: &ClusterModel,
    net: &NetConfig,
    cfg: &TrainConfig,
    until: u64,
    out_dir: &Path,
) -> Result<RunOutput> {
    check_images(images, net)?;
    let labels = labels_for(images, cluster)?;
    let mut state = load_checkpoint(checkpoint, Some((net, cfg.mode)))?;
    if until < state.step {
        return invalid(format!("checkpoint is at step {}, past the requested {until}", state.step));
    }
    state.train.steps = until;
    drive(state, images, &labels, out_dir)
}

/// Translates every image toward `target` with the perceptron-conditioned decoder.
pub fn translate(state: &TrainState, images: &ImageSet, target: usize, noise: NoiseMode) -> Result<ImageSet> {
    if target >= state.net.k {
        return Err(XploreError::ClusterOutOfRange { cluster: target, k: state.net.k });
    }
    if state.net.decoder_norm != DecoderNorm::Asin {
        return invalid("this generator is conditioned on style images; use translate_styled");
    }
    check_images(images, &state.net)?;
    let mut out = Vec::with_capacity(images.pixels.len());
    for (c, idx) in chunks(images.count).enumerate() {
        let cond = state.conditions(&vec![target; idx.len()])?;
        let y = state.g.forward(&images.batch_tensor(&idx), &GenCondition::Vector(&cond), chunk_noise(noise, c))?.0;
        out.extend(y.data().iter().map(|&v| v as f32));
    }
    finish(images, out)
}

/// Translates image `i` using `styles` image `i` (or the only one) as the AdaIN reference.
pub fn translate_styled(state: &TrainState, images: &ImageSet, styles: &ImageSet, noise: NoiseMode) -> Result<ImageSet> {
    check_images(images, &state.net)?;
    check_images(styles, &state.net)?;
    if styles.count != 1 && styles.count != images.count {
        return invalid(format!("{} style images for {} inputs", styles.count, images.count));
    }
    let mut out = Vec::with_capacity(images.pixels.len());
    for (c, idx) in chunks(images.count).enumerate() {
        let sidx: Vec<usize> = idx.iter().map(|&i| if styles.count == 1 { 0 } else { i }).collect();
        let s: Tensor = styles.batch_tensor(&sidx);
        let y = state.g.forward(&images.batch_tensor(&idx), &GenCondition::Style(&s), chunk_noise(noise, c))?.0;
        out.extend(y.data().iter().map(|&v| v as f32));
    }
    finish(images, out)
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(TRANSLATE_CHUNK).map(move |s| (s..(s + TRANSLATE_CHUNK).min(n)).collect())
}

fn chunk_noise(noise: NoiseMode, chunk: usize) -> NoiseMode {
    match noise {
        NoiseMode::Off => NoiseMode::Off,
        NoiseMode::Seeded(s) => NoiseMode::Seeded(s.wrapping_add(chunk as u64)),
    }
}

fn finish(images: &ImageSet, pixels: Vec<f32>) -> Result<ImageSet> {
    let pixels = pixels.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    ImageSet::new(images.count, images.channels, images.height, images.width, pixels, images.truth_labels.clone())
}
