//! MNIST-family datasets: IDX parsing (raw or gzip), normalization to
//! `[0, 1]`, train/test scenarios and per-class partitioning.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const GZIP_MAGIC: [u8; 2] = [0x1F, 0x8B];

/// Pixel matrix from an IDX image file, one image per row, values 0..=255.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub image_rows: usize,
    pub image_cols: usize,
    pub pixels: Matrix,
}

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("bad gzip stream: {e}")))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let word = bytes.get(at..at + 4).ok_or(Error::Length {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::Format(format!("IDX magic {magic:#010x}, expected {want:#010x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let expected = header + len;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after IDX payload",
            bytes.len() - expected
        )));
    }
    Ok(&bytes[header..])
}

/// Parses an IDX image file (`0x00000803`, big-endian N, rows, cols, then
/// N*rows*cols unsigned bytes). Gzip input is detected by its magic bytes.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let bytes = maybe_gunzip(bytes)?;
    check_magic(&bytes, IDX_IMAGES_MAGIC)?;
    let count = read_be_u32(&bytes, 4)? as usize;
    let image_rows = read_be_u32(&bytes, 8)? as usize;
    let image_cols = read_be_u32(&bytes, 12)? as usize;
    let width = image_rows * image_cols;
    let raw = payload(&bytes, 16, count * width)?;
    let pixels = Matrix::from_vec(count, width, raw.iter().map(|&b| b as f32).collect())?;
    Ok(IdxImages {
        image_rows,
        image_cols,
        pixels,
    })
}

/// Parses an IDX label file (`0x00000801`, big-endian N, then N bytes).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let bytes = maybe_gunzip(bytes)?;
    check_magic(&bytes, IDX_LABELS_MAGIC)?;
    let count = read_be_u32(&bytes, 4)? as usize;
    Ok(payload(&bytes, 8, count)?.iter().map(|&b| b as usize).collect())
}

/// Serializes pixel values (integers 0..=255) back into an uncompressed IDX
/// image file.
pub fn write_idx_images(images: &IdxImages) -> Result<Vec<u8>> {
    let p = &images.pixels;
    if p.cols() != images.image_rows * images.image_cols {
        return Err(Error::Shape {
            op: "write_idx_images",
            left: p.shape(),
            right: (images.image_rows, images.image_cols),
        });
    }
    let mut out = Vec::with_capacity(16 + p.as_slice().len());
    for word in [
        IDX_IMAGES_MAGIC,
        p.rows() as u32,
        images.image_rows as u32,
        images.image_cols as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for &v in p.as_slice() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::Value(format!("pixel {v} is not a byte value")));
        }
        out.push(v as u8);
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::Value(format!("label {l} exceeds 255")))?);
    }
    Ok(out)
}

/// Divides raw pixel values by 255. Inputs must already be raw bytes; a
/// second application is a caller bug and is not detected.
pub fn normalize(raw: &Matrix) -> Result<Matrix> {
    if let Some(bad) = raw.as_slice().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::Value(format!("raw pixel {bad} outside [0, 255]")));
    }
    Ok(raw.map(|v| v / 255.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    /// Class count inferred as `max(label) + 1`.
    pub fn new(images: Matrix, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::with_classes(images, labels, classes)
    }

    pub fn with_classes(images: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Consistency(format!("label {bad} outside 0..{classes}")));
        }
        if let Some(bad) = images.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Value(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self {
            images,
            labels,
            classes,
        })
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.images.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of class `k` and of every other class, each in dataset order.
    pub fn class_indices(&self, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if k >= self.classes {
            return Err(Error::Param(format!(
                "class {k} out of range for {} classes",
                self.classes
            )));
        }
        Ok((0..self.len()).partition(|&i| self.labels[i] == k))
    }

    /// The first `per_class` samples of every class, kept in dataset order.
    pub fn stratified_subset(&self, per_class: usize) -> LabeledDataset {
        let mut taken = vec![0usize; self.classes];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let l = self.labels[i];
                taken[l] += 1;
                taken[l] <= per_class
            })
            .collect();
        self.subset(&keep)
    }

    /// Rows in the given order; the class count is preserved.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

/// `(in_class, out_of_class)` rows for class `k`, each in dataset order.
pub fn split_by_class(d: &LabeledDataset, k: usize) -> Result<(Matrix, Matrix)> {
    let (inside, outside) = d.class_indices(k)?;
    Ok((d.images.select_rows(&inside), d.images.select_rows(&outside)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Fashion,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
        }
    }

    pub fn class_names(self) -> [&'static str; 10] {
        match self {
            DatasetKind::Mnist => ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"],
            DatasetKind::Fashion => [
                "t-shirt/top",
                "trouser",
                "pullover",
                "dress",
                "coat",
                "sandal",
                "shirt",
                "sneaker",
                "bag",
                "ankle boot",
            ],
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion" | "fashion-mnist" | "fashion_mnist" => Ok(DatasetKind::Fashion),
            other => Err(Error::Param(format!("unknown dataset '{other}'"))),
        }
    }
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub swapped: bool,
}

/// Finds `name` (or `name.gz`) directly in `dir` or in `dir/<dataset>`.
pub fn locate_file(kind: DatasetKind, dir: &Path, name: &str) -> Result<PathBuf> {
    let gz = format!("{name}.gz");
    let sub = dir.join(kind.name());
    for base in [dir, sub.as_path()] {
        for file in [name, gz.as_str()] {
            let p = base.join(file);
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::io(
        dir.join(name),
        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
    ))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads one image/label file pair and normalizes the images.
pub fn load_pair(kind: DatasetKind, dir: &Path, images: &str, labels: &str) -> Result<LabeledDataset> {
    let img_path = locate_file(kind, dir, images)?;
    let lab_path = locate_file(kind, dir, labels)?;
    let imgs = parse_idx_images(&read_file(&img_path)?)?;
    let labs = parse_idx_labels(&read_file(&lab_path)?)?;
    if imgs.pixels.rows() != labs.len() {
        return Err(Error::Consistency(format!(
            "{} has {} images but {} has {} labels",
            img_path.display(),
            imgs.pixels.rows(),
            lab_path.display(),
            labs.len()
        )));
    }
    LabeledDataset::new(normalize(&imgs.pixels)?, labs)
}

/// Train/test split with standard file names. With `swapped`, the 10K test
/// files become the training set and the 60K training files the test set.
/// The class count comes from the training labels.
pub fn load_scenario(kind: DatasetKind, dir: &Path, swapped: bool) -> Result<ScenarioSplit> {
    let a = load_pair(kind, dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let b = load_pair(kind, dir, TEST_IMAGES, TEST_LABELS)?;
    let (train, test) = if swapped { (b, a) } else { (a, b) };
    if train.input_dim() != test.input_dim() {
        return Err(Error::Consistency(format!(
            "train images have {} pixels, test images {}",
            train.input_dim(),
            test.input_dim()
        )));
    }
    let k = train.classes();
    let LabeledDataset { images, labels, .. } = test;
    let test = LabeledDataset::with_classes(images, labels, k)?;
    Ok(ScenarioSplit { train, test, swapped })
}
