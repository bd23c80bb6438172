//! Image batches and the colored-shapes synthetic dataset.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use xplore_tensor::Tensor;

use crate::error::{invalid, Result, XploreError};

/// `count` images of `channels × height × width` pixels in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub truth_labels: Option<Vec<u32>>,
}

impl ImageSet {
    pub fn new(
        count: usize,
        channels: usize,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
        truth_labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if count * channels * height * width != pixels.len() {
            return invalid(format!(
                "{count}x{channels}x{height}x{width} images need {} pixels, got {}",
                count * channels * height * width,
                pixels.len()
            ));
        }
        if let Some(i) = pixels.iter().position(|p| !(-1.0..=1.0).contains(p)) {
            return Err(XploreError::Format(format!("pixel {i} = {} outside [-1, 1]", pixels[i])));
        }
        if let Some(l) = &truth_labels {
            if l.len() != count {
                return invalid(format!("{} labels for {count} images", l.len()));
            }
        }
        Ok(Self { count, channels, height, width, pixels, truth_labels })
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Stacks the selected images into an `(N, C, H, W)` tensor.
    pub fn batch_tensor(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&p| p as f64));
        }
        Tensor::new(data, &[indices.len(), self.channels, self.height, self.width])
    }

    pub fn all_tensor(&self) -> Tensor {
        self.batch_tensor(&(0..self.count).collect::<Vec<_>>())
    }

    /// Builds an image set from an `(N, C, H, W)` tensor, clamping to `[-1, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[n, c, h, w] = t.shape() else {
            return invalid(format!("expected (N, C, H, W), got {:?}", t.shape()));
        };
        let pixels = t.data().iter().map(|&v| (v as f32).clamp(-1.0, 1.0)).collect();
        Self::new(n, c, h, w, pixels, None)
    }

    /// Subset in the given order, keeping truth labels.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        Self {
            count: indices.len(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            pixels,
            truth_labels: self
                .truth_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Per-channel mean of image `i`.
    pub fn channel_means(&self, i: usize) -> Vec<f64> {
        let hw = self.height * self.width;
        self.image(i)
            .chunks(hw)
            .map(|c| c.iter().map(|&v| v as f64).sum::<f64>() / hw as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Square,
}

impl Color {
    pub const ALL: [Color; 6] = [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Cyan, Color::Magenta];

    fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.8, -0.7, -0.7],
            Color::Green => [-0.7, 0.8, -0.7],
            Color::Blue => [-0.7, -0.7, 0.8],
            Color::Yellow => [0.7, 0.7, -0.7],
            Color::Cyan => [-0.7, 0.7, 0.7],
            Color::Magenta => [0.7, -0.7, 0.7],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
        }
    }
}

impl Shape {
    pub const ALL: [Shape; 2] = [Shape::Circle, Shape::Square];

    fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
        }
    }
}

/// One attribute combination: background color and foreground shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Combo {
    pub color: Color,
    pub shape: Shape,
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.color.name(), self.shape.name())
    }
}

impl FromStr for Combo {
    type Err = XploreError;

    fn from_str(s: &str) -> Result<Self> {
        let (c, sh) = s
            .split_once('-')
            .ok_or_else(|| XploreError::InvalidArgument(format!("combination {s:?} is not color-shape")))?;
        let color = Color::ALL
            .into_iter()
            .find(|x| x.name() == c)
            .ok_or_else(|| XploreError::InvalidArgument(format!("unknown color {c:?}")))?;
        let shape = Shape::ALL
            .into_iter()
            .find(|x| x.name() == sh)
            .ok_or_else(|| XploreError::InvalidArgument(format!("unknown shape {sh:?}")))?;
        Ok(Combo { color, shape })
    }
}

/// Image counts per attribute combination.
///
/// Parses either an explicit list (`red-circle:2,blue-square:2`) or
/// `NxM`, meaning the first `N` combinations (colors outer, shapes inner)
/// with `M` images each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub combos: Vec<(Combo, usize)>,
}

impl SynthSpec {
    pub fn all_combos() -> Vec<Combo> {
        Color::ALL
            .into_iter()
            .flat_map(|color| Shape::ALL.into_iter().map(move |shape| Combo { color, shape }))
            .collect()
    }

    pub fn uniform(n_combos: usize, per: usize) -> Result<Self> {
        let all = Self::all_combos();
        if n_combos > all.len() {
            return invalid(format!("at most {} combinations available", all.len()));
        }
        Ok(Self { combos: all[..n_combos].iter().map(|&c| (c, per)).collect() })
    }

    pub fn total(&self) -> usize {
        self.combos.iter().map(|(_, n)| n).sum()
    }
}

impl FromStr for SynthSpec {
    type Err = XploreError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('x') {
            if let (Ok(n), Ok(m)) = (a.parse::<usize>(), b.parse::<usize>()) {
                return Self::uniform(n, m);
            }
        }
        let combos = s
            .split(',')
            .map(|part| {
                let (name, count) = part
                    .split_once(':')
                    .ok_or_else(|| XploreError::InvalidArgument(format!("{part:?} is not combo:count")))?;
                let count = count
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| XploreError::InvalidArgument(format!("bad count in {part:?}")))?;
                Ok((name.trim().parse::<Combo>()?, count))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { combos })
    }
}

const SUPERSAMPLE: usize = 4;
const FOREGROUND: f32 = 0.9;

/// Renders the colored-shapes dataset. Label `i` is the index of the
/// combination in `spec`; images are emitted grouped by combination.
pub fn generate_synthetic_dataset(spec: &SynthSpec, image_size: usize, seed: u64) -> Result<ImageSet> {
    if spec.combos.len() < 2 {
        return invalid("need at least two attribute combinations");
    }
    if image_size < 8 {
        return invalid(format!("image size {image_size} < 8"));
    }
    if let Some((c, _)) = spec.combos.iter().find(|(_, n)| *n == 0) {
        return invalid(format!("combination {c} has zero count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 0.05).expect("valid std");
    let s = image_size;
    let mut pixels = Vec::with_capacity(spec.total() * 3 * s * s);
    let mut labels = Vec::with_capacity(spec.total());
    for (label, &(combo, count)) in spec.combos.iter().enumerate() {
        for _ in 0..count {
            let bg = combo.color.rgb();
            let shade: f32 = rng.random_range(-0.05..0.05);
            let jitter = s as f32 / 32.0;
            let cx = s as f32 / 2.0 + rng.random_range(-jitter..jitter);
            let cy = s as f32 / 2.0 + rng.random_range(-jitter..jitter);
            let radius = s as f32 * rng.random_range(0.27..0.29);
            let mut img = vec![0.0f32; 3 * s * s];
            for y in 0..s {
                for x in 0..s {
                    let mut hits = 0;
                    for sy in 0..SUPERSAMPLE {
                        for sx in 0..SUPERSAMPLE {
                            let dx = x as f32 + (sx as f32 + 0.5) / SUPERSAMPLE as f32 - cx;
                            let dy = y as f32 + (sy as f32 + 0.5) / SUPERSAMPLE as f32 - cy;
                            let inside = match combo.shape {
                                Shape::Circle => dx * dx + dy * dy <= radius * radius,
                                Shape::Square => dx.abs() <= radius && dy.abs() <= radius,
                            };
                            hits += inside as usize;
                        }
                    }
                    let cover = hits as f32 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
                    for c in 0..3 {
                        let back = bg[c] + shade;
                        let base = back + cover * (FOREGROUND - back);
                        img[(c * s + y) * s + x] = (base + noise.sample(&mut rng)).clamp(-1.0, 1.0);
                    }
                }
            }
            pixels.extend_from_slice(&img);
            labels.push(label as u32);
        }
    }
    ImageSet::new(spec.total(), 3, s, s, pixels, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_spec() {
        let spec: SynthSpec = "red-circle:2,blue-square:2".parse().unwrap();
        let set = generate_synthetic_dataset(&spec, 16, 7).unwrap();
        assert_eq!(set.count, 4);
        assert_eq!(set.truth_labels, Some(vec![0, 0, 1, 1]));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec: SynthSpec = "red-circle:2,blue-square:2".parse().unwrap();
        let a = generate_synthetic_dataset(&spec, 16, 7).unwrap();
        let b = generate_synthetic_dataset(&spec, 16, 7).unwrap();
        let bits = |s: &ImageSet| s.pixels.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn six_by_hundred() {
        let spec: SynthSpec = "6x100".parse().unwrap();
        let set = generate_synthetic_dataset(&spec, 16, 1).unwrap();
        assert_eq!(set.count, 600);
        let mut labels = set.truth_labels.unwrap();
        labels.dedup();
        assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
        assert!(set.pixels.iter().all(|p| (-1.0..=1.0).contains(p)));
    }

    #[test]
    fn rejects_bad_specs() {
        let zero: SynthSpec = "red-circle:0,blue-square:2".parse().unwrap();
        assert!(generate_synthetic_dataset(&zero, 16, 1).is_err());
        let single: SynthSpec = "red-circle:3".parse().unwrap();
        assert!(generate_synthetic_dataset(&single, 16, 1).is_err());
        let two: SynthSpec = "2x3".parse().unwrap();
        assert!(generate_synthetic_dataset(&two, 4, 1).is_err());
        assert!("purple-circle:1".parse::<SynthSpec>().is_err());
    }
}
