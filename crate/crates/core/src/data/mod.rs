//! Image datasets and the three sources of SGD noise: initialization, data
//! ordering and augmentation, each driven by its own seed.

mod formats;

use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Batch;
use crate::numerics::{split_rng, Matrix, Real, Rng, Stream};

pub use formats::{load_cifar, load_cifar_binary, load_idx, load_mnist, CifarVariant};

/// Maximum translation, in pixels, per axis.
pub const TRANSLATE_MAX: i64 = 2;
pub const FLIP_PROBABILITY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{0}: truncated payload")]
    Truncated(PathBuf),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {len} bytes is not a multiple of the {record}-byte record")]
    RecordSize { path: PathBuf, len: usize, record: usize },
    #[error("dataset file not found: {0}")]
    Missing(PathBuf),
    #[error("class {class} has {available} samples, {requested} requested")]
    Insufficient {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Pixel storage. Byte images are scaled by 1/255 on access.
#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    Bytes(Vec<u8>),
    Real(Vec<f64>),
}

impl Pixels {
    fn len(&self) -> usize {
        match self {
            Pixels::Bytes(v) => v.len(),
            Pixels::Real(v) => v.len(),
        }
    }
}

/// Labelled images, channel-major (`C×H×W`) per sample, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pixels: Pixels,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        (channels, height, width): (usize, usize, usize),
        classes: usize,
        pixels: Pixels,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        let sample = channels * height * width;
        if sample == 0 || pixels.len() != sample * labels.len() {
            return Err(DataError::Shape(format!(
                "{} pixel values for {} samples of {channels}x{height}x{width}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::Label { label, classes });
        }
        Ok(Self {
            name: name.into(),
            split,
            channels,
            height,
            width,
            classes,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Values per sample, `C·H·W`.
    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Raw bytes of sample `i`, for byte-backed datasets.
    pub fn raw_bytes(&self, i: usize) -> Option<&[u8]> {
        let s = self.sample_len();
        match &self.pixels {
            Pixels::Bytes(v) => Some(&v[i * s..(i + 1) * s]),
            Pixels::Real(_) => None,
        }
    }

    fn write_image<T: Real>(&self, i: usize, out: &mut [T]) {
        let s = self.sample_len();
        match &self.pixels {
            Pixels::Bytes(v) => {
                for (o, &b) in out.iter_mut().zip(&v[i * s..(i + 1) * s]) {
                    *o = T::of(b as f64 / 255.0);
                }
            }
            Pixels::Real(v) => {
                for (o, &x) in out.iter_mut().zip(&v[i * s..(i + 1) * s]) {
                    *o = T::of(x);
                }
            }
        }
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.sample_len()];
        self.write_image(i, &mut out);
        out
    }

    /// Samples `range` as an input matrix, one row each.
    pub fn inputs_range<T: Real>(&self, range: Range<usize>) -> Matrix<T> {
        let s = self.sample_len();
        let mut m = Matrix::zeros(range.len(), s);
        for (r, i) in range.enumerate() {
            self.write_image(i, m.row_mut(r));
        }
        m
    }

    /// Batch of the given sample indices. With `augment`, each image is
    /// transformed in index order, consuming draws from the stream.
    pub fn batch<T: Real>(&self, indices: &[usize], augment: Option<(&mut Rng, Augmentation)>) -> Batch<T> {
        let s = self.sample_len();
        let mut m = Matrix::zeros(indices.len(), s);
        let mut scratch = vec![T::zero(); s];
        let mut augment = augment;
        for (r, &i) in indices.iter().enumerate() {
            match augment.as_mut() {
                Some((rng, policy)) if *policy != Augmentation::None => {
                    self.write_image(i, &mut scratch);
                    let dims = (self.channels, self.height, self.width);
                    augment_into(&scratch, dims, rng, *policy, m.row_mut(r));
                }
                _ => self.write_image(i, m.row_mut(r)),
            }
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Batch::new(m, labels).expect("rows match labels")
    }

    /// The whole dataset as one batch.
    pub fn full_batch<T: Real>(&self) -> Batch<T> {
        Batch::new(self.inputs_range(0..self.len()), self.labels.clone()).expect("rows match labels")
    }

    /// Samples `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let s = self.sample_len();
        let pixels = match &self.pixels {
            Pixels::Bytes(v) => Pixels::Bytes(indices.iter().flat_map(|&i| v[i * s..(i + 1) * s].iter().copied()).collect()),
            Pixels::Real(v) => Pixels::Real(indices.iter().flat_map(|&i| v[i * s..(i + 1) * s].iter().copied()).collect()),
        };
        Dataset {
            name: self.name.clone(),
            split: self.split,
            channels: self.channels,
            height: self.height,
            width: self.width,
            classes: self.classes,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Seeds for the three randomness sources of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedTriple {
    /// Parameter initialization.
    pub trainer: u64,
    /// Per-epoch sample order.
    pub loader: u64,
    /// Augmentation draws.
    pub augmentation: u64,
}

impl SeedTriple {
    pub fn new(trainer: u64, loader: u64, augmentation: u64) -> Self {
        Self {
            trainer,
            loader,
            augmentation,
        }
    }

    pub fn init_rng(&self) -> Rng {
        split_rng(self.trainer, Stream::Init)
    }

    pub fn ordering_rng(&self, epoch: usize) -> Rng {
        split_rng(self.loader, Stream::Ordering).at_block(epoch as u64)
    }

    pub fn augmentation_rng(&self, epoch: usize) -> Rng {
        split_rng(self.augmentation, Stream::Augmentation).at_block(epoch as u64)
    }
}

/// Permutation of `0..n` for `epoch` under `loader_seed`: a Fisher–Yates
/// shuffle of the identity driven by the ordering stream at block `epoch`.
pub fn epoch_order(loader_seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    split_rng(loader_seed, Stream::Ordering)
        .at_block(epoch as u64)
        .shuffle(&mut order);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    #[default]
    None,
    /// Horizontal flip with probability 1/2, then an integer shift in
    /// `[-2, 2]` per axis with zero fill.
    TranslateFlip,
}

/// Mirrors each row of every channel.
pub fn flip_horizontal<T: Copy>(image: &[T], (channels, height, width): (usize, usize, usize)) -> Vec<T> {
    assert_eq!(image.len(), channels * height * width);
    let mut out = image.to_vec();
    for row in out.chunks_exact_mut(width) {
        row.reverse();
    }
    out
}

/// Applies `policy` to one channel-major image.
///
/// Draw order per image: flip (`uniform() < 0.5`), then `dy`, then `dx`, each
/// `below(5) − 2`. Output pixel `(y, x)` takes the (possibly flipped) source
/// pixel `(y − dy, x − dx)`, or zero outside the frame.
pub fn augment<T: Real>(image: &[T], dims: (usize, usize, usize), rng: &mut Rng, policy: Augmentation) -> Vec<T> {
    let mut out = vec![T::zero(); image.len()];
    augment_into(image, dims, rng, policy, &mut out);
    out
}

fn augment_into<T: Real>(
    image: &[T],
    (channels, height, width): (usize, usize, usize),
    rng: &mut Rng,
    policy: Augmentation,
    out: &mut [T],
) {
    if policy == Augmentation::None {
        out.copy_from_slice(image);
        return;
    }
    let flip = rng.bernoulli(FLIP_PROBABILITY);
    let span = 2 * TRANSLATE_MAX as u64 + 1;
    let dy = rng.below(span) as i64 - TRANSLATE_MAX;
    let dx = rng.below(span) as i64 - TRANSLATE_MAX;
    let (h, w) = (height as i64, width as i64);
    for c in 0..channels {
        let plane = c * height * width;
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = (y - dy, x - dx);
                let v = if (0..h).contains(&sy) && (0..w).contains(&sx) {
                    let sx = if flip { w - 1 - sx } else { sx };
                    image[plane + (sy * w + sx) as usize]
                } else {
                    T::zero()
                };
                out[plane + (y * w + x) as usize] = v;
            }
        }
    }
}

/// Class-balanced subsample: `per_class` samples from every class, chosen
/// by a seeded shuffle of each class's indices and returned in original order.
pub fn subset(dataset: &Dataset, per_class: usize, seed: u64) -> Result<Dataset, DataError> {
    let mut by_class = vec![Vec::new(); dataset.classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = split_rng(seed, Stream::Subset);
    let mut keep = Vec::with_capacity(per_class * dataset.classes);
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < per_class {
            return Err(DataError::Insufficient {
                class,
                available: idx.len(),
                requested: per_class,
            });
        }
        rng.shuffle(&mut idx);
        keep.extend_from_slice(&idx[..per_class]);
    }
    keep.sort_unstable();
    Ok(dataset.select(&keep))
}

/// Parameters of the Gaussian-blob toy dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub per_class: usize,
    /// Standard deviation around each class prototype.
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn small() -> Self {
        Self {
            channels: 1,
            height: 8,
            width: 8,
            classes: 4,
            per_class: 64,
            noise: 0.25,
        }
    }
}

/// Blob images: every class has a uniform random prototype in `[0, 1]`,
/// samples add Gaussian noise and clamp to `[0, 1]`. Prototypes depend only
/// on `seed`; train and test draw their noise from different blocks.
pub fn synthetic(spec: &SyntheticSpec, seed: u64, split: Split) -> Dataset {
    let sample = spec.channels * spec.height * spec.width;
    let mut rng = split_rng(seed, Stream::Synthetic);
    let prototypes: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..sample).map(|_| rng.uniform()).collect())
        .collect();
    let block = match split {
        Split::Train => 1,
        Split::Test => 2,
    };
    let mut rng = split_rng(seed, Stream::Synthetic).at_block(block);
    let mut pixels = Vec::with_capacity(sample * spec.classes * spec.per_class);
    let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
    for _ in 0..spec.per_class {
        for (class, proto) in prototypes.iter().enumerate() {
            pixels.extend(proto.iter().map(|&p| (p + spec.noise * rng.normal()).clamp(0.0, 1.0)));
            labels.push(class);
        }
    }
    Dataset::new(
        "synthetic",
        split,
        (spec.channels, spec.height, spec.width),
        spec.classes,
        Pixels::Real(pixels),
        labels,
    )
    .expect("consistent by construction")
}
