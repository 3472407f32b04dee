use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{DataError, Dataset, Pixels, Split};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_PIXELS: usize = 3 * 32 * 32;

/// Reads a file, transparently inflating gzip (detected by its magic bytes).
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| DataError::Truncated(path.to_path_buf()))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image/label file pair (plain or gzipped). Pixels are kept
/// as bytes and scaled by 1/255 when batches are built.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let img = read_maybe_gz(images)?;
    check_magic(&img, IDX_IMAGES, images)?;
    let n = be_u32(&img, 4, images)? as usize;
    let height = be_u32(&img, 8, images)? as usize;
    let width = be_u32(&img, 12, images)? as usize;
    let payload = &img[16.min(img.len())..];
    if payload.len() != n * height * width {
        return Err(DataError::Truncated(images.to_path_buf()));
    }

    let lab = read_maybe_gz(labels)?;
    check_magic(&lab, IDX_LABELS, labels)?;
    let m = be_u32(&lab, 4, labels)? as usize;
    let label_bytes = &lab[8.min(lab.len())..];
    if label_bytes.len() != m {
        return Err(DataError::Truncated(labels.to_path_buf()));
    }
    if m != n {
        return Err(DataError::CountMismatch { images: n, labels: m });
    }
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    Dataset::new(
        "mnist",
        Split::Train,
        (1, height, width),
        classes,
        Pixels::Bytes(payload.to_vec()),
        labels,
    )
}

/// Which CIFAR binary layout a file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    /// One label byte per record.
    Cifar10,
    /// Coarse then fine label byte; the fine label (100 classes) is used.
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "cifar10",
            CifarVariant::Cifar100 => "cifar100",
        }
    }
}

/// Parses and concatenates CIFAR binary batch files (channel-major 3×32×32).
pub fn load_cifar_binary(paths: &[PathBuf], variant: CifarVariant) -> Result<Dataset, DataError> {
    let record = variant.label_bytes() + CIFAR_PIXELS;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let raw = read_maybe_gz(path)?;
        if raw.is_empty() || raw.len() % record != 0 {
            return Err(DataError::RecordSize {
                path: path.clone(),
                len: raw.len(),
                record,
            });
        }
        for rec in raw.chunks_exact(record) {
            let (head, body) = rec.split_at(variant.label_bytes());
            labels.push(*head.last().unwrap() as usize);
            pixels.extend_from_slice(body);
        }
    }
    Dataset::new(
        variant.name(),
        Split::Train,
        (3, 32, 32),
        variant.classes(),
        Pixels::Bytes(pixels),
        labels,
    )
}

fn first_existing(candidates: &[PathBuf]) -> Result<PathBuf, DataError> {
    candidates
        .iter()
        .find(|p| p.exists())
        .cloned()
        .ok_or_else(|| DataError::Missing(candidates[0].clone()))
}

/// Loads `<root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
pub fn load_mnist(root: &Path, split: Split) -> Result<Dataset, DataError> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let dir = root.join("mnist");
    let find = |kind: &str| {
        let base = format!("{prefix}-{kind}-ubyte");
        first_existing(&[dir.join(format!("{base}.gz")), dir.join(&base)])
    };
    let mut ds = load_idx(&find("images-idx3")?, &find("labels-idx1")?)?;
    ds.split = split;
    Ok(ds)
}

/// Loads the standard CIFAR binary distribution under `root`
/// (`cifar-10-batches-bin/` or `cifar-100-binary/`).
pub fn load_cifar(root: &Path, variant: CifarVariant, split: Split) -> Result<Dataset, DataError> {
    let paths: Vec<PathBuf> = match (variant, split) {
        (CifarVariant::Cifar10, Split::Train) => (1..=5)
            .map(|i| root.join("cifar-10-batches-bin").join(format!("data_batch_{i}.bin")))
            .collect(),
        (CifarVariant::Cifar10, Split::Test) => vec![root.join("cifar-10-batches-bin/test_batch.bin")],
        (CifarVariant::Cifar100, Split::Train) => vec![root.join("cifar-100-binary/train.bin")],
        (CifarVariant::Cifar100, Split::Test) => vec![root.join("cifar-100-binary/test.bin")],
    };
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(DataError::Missing(missing.clone()));
    }
    let mut ds = load_cifar_binary(&paths, variant)?;
    ds.split = split;
    Ok(ds)
}
