//! Banks of associative autoencoders.
//!
//! Autoencoder `k` is trained on every training sample: samples of class
//! `k` are their own targets, all other samples are paired with fixed
//! uniform noise drawn once before training. A test sample is assigned to
//! the class whose autoencoder reconstructs it with the smallest Euclidean
//! distance.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{split_by_class, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{mix_seed, rowwise_l2, uniform_matrix, Matrix, Rng};
use crate::nn::{
    adam_step, backward, forward, init_params, l1_activity_penalty, mse_loss, reconstruct, AdamConfig, AdamState,
    AutoencoderParams,
};

pub const DEFAULT_EPOCHS: usize = 125;
pub const DEFAULT_BATCH: usize = 250;
pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_L1: f64 = 1e-5;

/// Rows per forward pass when computing distances.
const DISTANCE_CHUNK: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    /// L1 activity coefficient; only applied when `regularize` is set.
    pub alpha: f64,
    pub regularize: bool,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            epochs: DEFAULT_EPOCHS,
            batch: DEFAULT_BATCH,
            alpha: DEFAULT_L1,
            regularize: false,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Param("hidden dimension must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Param("epochs must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Param("batch size must be >= 1".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Param(format!("l1 coefficient must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Penalty weight actually used by the trainer.
    pub fn effective_alpha(&self) -> f64 {
        if self.regularize {
            self.alpha
        } else {
            0.0
        }
    }
}

/// Inputs and targets for one class: self-targets first, noise-targets after.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociativeTrainingSet {
    pub inputs: Matrix,
    pub targets: Matrix,
    /// Number of leading rows whose target is the input itself.
    pub in_class: usize,
}

impl AssociativeTrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Stacks class `k` above all other samples. The other samples get targets
/// drawn uniformly from `[0, 1)`, once, in row-major order.
pub fn build_training_set(train: &LabeledDataset, k: usize, rng: &mut Rng) -> Result<AssociativeTrainingSet> {
    let (inside, outside) = split_by_class(train, k)?;
    if inside.rows() == 0 {
        return Err(Error::DegenerateClass(k));
    }
    let noise = if outside.rows() == 0 {
        Matrix::zeros(0, inside.cols())
    } else {
        uniform_matrix(rng, outside.rows(), outside.cols(), 0.0, 1.0)?
    };
    Ok(AssociativeTrainingSet {
        inputs: inside.vstack(&outside)?,
        targets: inside.vstack(&noise)?,
        in_class: inside.rows(),
    })
}

#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub params: AutoencoderParams,
    /// Mean training objective (MSE plus any L1 term) of each epoch, weighted
    /// by batch size.
    pub epoch_losses: Vec<f64>,
}

/// Trains one autoencoder with mini-batch Adam.
///
/// The generator is consumed in a fixed order: initial weights, then one
/// Fisher-Yates shuffle of `0..N` per epoch. Batches are contiguous slices
/// of the shuffled order; the last one may be short.
pub fn train_one(ts: &AssociativeTrainingSet, cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainedAutoencoder> {
    cfg.validate()?;
    if ts.is_empty() {
        return Err(Error::Param("empty training set".into()));
    }
    if ts.inputs.shape() != ts.targets.shape() {
        return Err(Error::Shape {
            op: "train_one",
            left: ts.inputs.shape(),
            right: ts.targets.shape(),
        });
    }
    let alpha = cfg.effective_alpha();
    let mut params = init_params(ts.inputs.cols(), cfg.hidden, rng)?;
    let mut adam = AdamState::for_params(cfg.adam, &params);
    let n_rows = ts.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_rows).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0f64;
        for (bi, idx) in order.chunks(cfg.batch).enumerate() {
            let x = ts.inputs.select_rows(idx);
            let t = ts.targets.select_rows(idx);
            let trace = forward(&params, &x)?;
            let loss = mse_loss(&trace.output, &t)? + l1_activity_penalty(&trace.hidden, alpha);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss is {loss} at epoch {epoch}, batch {bi}")));
            }
            total += loss * idx.len() as f64;
            let grads = backward(&params, &trace, &t, alpha)?;
            adam_step(&mut params, &grads, &mut adam).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("{msg} (epoch {epoch}, batch {bi})")),
                other => other,
            })?;
        }
        epoch_losses.push(total / n_rows as f64);
    }
    Ok(TrainedAutoencoder { params, epoch_losses })
}

/// Generator for class `k`: seeded with `mix_seed(seed, k)`, so each class
/// is reproducible on its own regardless of scheduling.
pub fn class_rng(seed: u64, k: usize) -> Rng {
    Rng::new(mix_seed(seed, k as u64))
}

/// Builds the training set for class `k` and trains its autoencoder.
pub fn train_class(train: &LabeledDataset, cfg: &TrainConfig, k: usize) -> Result<TrainedAutoencoder> {
    let wrap = |e: Error| Error::Training {
        class: k,
        source: Box::new(e),
    };
    let mut rng = class_rng(cfg.seed, k);
    let ts = build_training_set(train, k, &mut rng).map_err(wrap)?;
    train_one(&ts, cfg, &mut rng).map_err(wrap)
}

/// Trains all classes, at most `workers` at a time, and returns the bank
/// together with each class's per-epoch losses.
pub fn train_bank_detailed(
    train: &LabeledDataset,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<(FilterBank, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let k = train.classes();
    if k == 0 {
        return Err(Error::Param("training set has no classes".into()));
    }
    if let Some(empty) = train.class_counts().iter().position(|&c| c == 0) {
        return Err(Error::DegenerateClass(empty));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Param(format!("cannot start worker pool: {e}")))?;
    let trained: Vec<Result<TrainedAutoencoder>> =
        pool.install(|| (0..k).into_par_iter().map(|c| train_class(train, cfg, c)).collect());

    let mut params = Vec::with_capacity(k);
    let mut losses = Vec::with_capacity(k);
    for t in trained {
        let t = t?;
        params.push(t.params);
        losses.push(t.epoch_losses);
    }
    Ok((FilterBank::new(params, Some(cfg.clone()))?, losses))
}

pub fn train_bank(train: &LabeledDataset, cfg: &TrainConfig, workers: usize) -> Result<FilterBank> {
    train_bank_detailed(train, cfg, workers).map(|(bank, _)| bank)
}

/// One autoencoder per class, all with the same input and hidden widths.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    input_dim: usize,
    hidden_dim: usize,
    params: Vec<AutoencoderParams>,
    /// Training settings, when known; not persisted.
    config: Option<TrainConfig>,
}

impl FilterBank {
    pub fn new(params: Vec<AutoencoderParams>, config: Option<TrainConfig>) -> Result<Self> {
        let first = params
            .first()
            .ok_or_else(|| Error::Param("a filter bank needs at least one autoencoder".into()))?;
        let (n, m) = (first.input_dim(), first.hidden_dim());
        if let Some(bad) = params.iter().position(|p| p.input_dim() != n || p.hidden_dim() != m) {
            return Err(Error::Consistency(format!(
                "autoencoder {bad} has shape ({}, {}), expected ({n}, {m})",
                params[bad].input_dim(),
                params[bad].hidden_dim()
            )));
        }
        Ok(Self {
            input_dim: n,
            hidden_dim: m,
            params,
            config,
        })
    }

    pub fn classes(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params(&self) -> &[AutoencoderParams] {
        &self.params
    }

    pub fn config(&self) -> Option<&TrainConfig> {
        self.config.as_ref()
    }

    /// Reconstructions of `samples` by autoencoder `k`.
    pub fn reconstruct(&self, k: usize, samples: &Matrix) -> Result<Matrix> {
        let p = self
            .params
            .get(k)
            .ok_or_else(|| Error::Param(format!("class {k} out of range for {} classes", self.classes())))?;
        reconstruct(p, samples)
    }
}

/// `M x K` reconstruction distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub d: Matrix,
}

/// Euclidean distance between every sample and its reconstruction under
/// every autoencoder of the bank.
pub fn distances(bank: &FilterBank, samples: &Matrix) -> Result<DistanceMatrix> {
    if samples.cols() != bank.input_dim {
        return Err(Error::Shape {
            op: "distances",
            left: samples.shape(),
            right: (bank.classes(), bank.input_dim),
        });
    }
    let m = samples.rows();
    let k = bank.classes();
    let columns: Vec<Result<Vec<f32>>> = bank
        .params
        .par_iter()
        .map(|p| {
            let mut col = Vec::with_capacity(m);
            let mut start = 0;
            while start < m {
                let end = (start + DISTANCE_CHUNK).min(m);
                let x = samples.row_range(start, end);
                col.extend(rowwise_l2(&x, &reconstruct(p, &x)?)?);
                start = end;
            }
            Ok(col)
        })
        .collect();
    let mut d = Matrix::zeros(m, k);
    for (c, col) in columns.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            d.set(i, c, v);
        }
    }
    Ok(DistanceMatrix { d })
}

/// Index of the smallest distance in each row; ties go to the lowest index.
pub fn classify(d: &DistanceMatrix) -> Vec<usize> {
    d.d.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Percentage of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Param(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Param("accuracy of an empty set is undefined".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Classifies a labelled set and returns its accuracy in percent.
pub fn evaluate(bank: &FilterBank, data: &LabeledDataset) -> Result<f64> {
    if data.classes() > bank.classes() {
        return Err(Error::Consistency(format!(
            "dataset has {} classes, bank has {}",
            data.classes(),
            bank.classes()
        )));
    }
    let d = distances(bank, data.images())?;
    accuracy(&classify(&d), data.labels())
}

const BANK_MAGIC: &[u8; 4] = b"AAEF";
const BANK_VERSION: u16 = 1;
const BANK_HEADER: usize = 4 + 2 + 3 * 4;

/// Serializes a bank:
///
/// ```text
/// "AAEF" | u16 version = 1 | u32 K | u32 n | u32 n_star
/// | for k in 0..K: w_enc (n_star x n), b_enc (n_star), w_dec (n x n_star), b_dec (n)
/// | u32 CRC-32 of every preceding byte
/// ```
///
/// All integers and `f32` values are little-endian, matrices row-major.
pub fn encode_bank(bank: &FilterBank) -> Vec<u8> {
    let per_class: usize = bank.params.first().map_or(0, |p| p.param_count());
    let mut out = Vec::with_capacity(BANK_HEADER + 4 * per_class * bank.classes() + 4);
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&BANK_VERSION.to_le_bytes());
    for v in [bank.classes(), bank.input_dim, bank.hidden_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for p in &bank.params {
        for block in p.blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_bank(bytes: &[u8]) -> Result<FilterBank> {
    let bad = |msg: String| Error::Format(format!("model file: {msg}"));
    if bytes.len() < BANK_HEADER + 4 {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != BANK_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BANK_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (k, n, m) = (word(6), word(10), word(14));
    if k == 0 || n == 0 || m == 0 {
        return Err(bad(format!("degenerate shape K={k}, n={n}, n_star={m}")));
    }
    let per_class = (2 * n * m + n + m) as u64;
    let expected = BANK_HEADER as u64 + 4 * per_class * k as u64 + 4;
    if bytes.len() as u64 != expected {
        return Err(bad(format!(
            "length {} does not match K={k}, n={n}, n_star={m} (expected {expected})",
            bytes.len()
        )));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(bad("checksum mismatch".into()));
    }

    let mut floats = bytes[BANK_HEADER..body_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = |len: usize| -> Vec<f32> { floats.by_ref().take(len).collect() };
    let mut params = Vec::with_capacity(k);
    for _ in 0..k {
        let enc_w = Matrix::from_vec(m, n, take(m * n))?;
        let enc_b = take(m);
        let dec_w = Matrix::from_vec(n, m, take(n * m))?;
        let dec_b = take(n);
        params.push(AutoencoderParams::from_parts(enc_w, enc_b, dec_w, dec_b).map_err(|e| bad(e.to_string()))?);
    }
    FilterBank::new(params, None)
}

pub fn save_bank(bank: &FilterBank, path: &Path) -> Result<()> {
    fs::write(path, encode_bank(bank)).map_err(|e| Error::io(path, e))
}

pub fn load_bank(path: &Path) -> Result<FilterBank> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bank(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mse_loss;

    fn toy_dataset(per_class: usize, classes: usize, width: usize, seed: u64) -> LabeledDataset {
        // each class lights up its own band of pixels
        let mut rng = Rng::new(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..per_class * classes {
            let c = i % classes;
            let row: Vec<f32> = (0..width)
                .map(|j| {
                    let on = j * classes / width == c;
                    let base = if on { 0.8 } else { 0.05 };
                    (base + 0.1 * rng.next_f32()).min(1.0)
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
        LabeledDataset::with_classes(Matrix::from_rows(&rows).unwrap(), labels, classes).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            epochs: 20,
            batch: 16,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_set_layout() {
        let images = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]).unwrap();
        let d = LabeledDataset::new(images, vec![0, 1, 0]).unwrap();
        let ts = build_training_set(&d, 0, &mut Rng::new(1)).unwrap();
        assert_eq!(ts.in_class, 2);
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.inputs.row(0), &[0.1, 0.2]);
        assert_eq!(ts.inputs.row(1), &[0.5, 0.6]);
        assert_eq!(ts.inputs.row(2), &[0.3, 0.4]);
        assert_eq!(ts.targets.row_range(0, 2), ts.inputs.row_range(0, 2));
        assert_ne!(ts.targets.row(2), ts.inputs.row(2));
    }

    #[test]
    fn noise_targets_are_uniform_unit_values() {
        let d = toy_dataset(50, 4, 30, 2);
        let ts = build_training_set(&d, 1, &mut Rng::new(3)).unwrap();
        let noise = ts.targets.row_range(ts.in_class, ts.len());
        let s = noise.as_slice();
        assert!(s.iter().all(|&v| (0.0..1.0).contains(&v)));
        let mean = s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "noise mean {mean}");
        let inputs = ts.inputs.row_range(ts.in_class, ts.len());
        let equal = s.iter().zip(inputs.as_slice()).filter(|(a, b)| a == b).count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn empty_class_is_degenerate() {
        let d = LabeledDataset::with_classes(Matrix::zeros(2, 3), vec![0, 2], 3).unwrap();
        assert!(matches!(
            build_training_set(&d, 1, &mut Rng::new(1)),
            Err(Error::DegenerateClass(1))
        ));
        assert!(matches!(
            train_bank(&d, &small_cfg(), 1),
            Err(Error::DegenerateClass(1))
        ));
    }

    #[test]
    fn zero_epochs_rejected() {
        let d = toy_dataset(4, 2, 6, 1);
        let ts = build_training_set(&d, 0, &mut Rng::new(1)).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        assert!(matches!(train_one(&ts, &cfg, &mut Rng::new(1)), Err(Error::Param(_))));
        let cfg = TrainConfig {
            batch: 0,
            ..small_cfg()
        };
        assert!(train_one(&ts, &cfg, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn self_target_training_halves_loss() {
        let x = toy_dataset(16, 4, 32, 8).images().clone();
        let ts = AssociativeTrainingSet {
            inputs: x.clone(),
            targets: x.clone(),
            in_class: 64,
        };
        let cfg = TrainConfig {
            hidden: 16,
            epochs: 50,
            batch: 8,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut init_rng = Rng::new(99);
        let p0 = init_params(32, 16, &mut init_rng.clone()).unwrap();
        let before = mse_loss(&reconstruct(&p0, &x).unwrap(), &x).unwrap();
        let trained = train_one(&ts, &cfg, &mut init_rng).unwrap();
        let after = mse_loss(&reconstruct(&trained.params, &x).unwrap(), &x).unwrap();
        assert!(after < 0.5 * before, "before {before} after {after}");
        assert_eq!(trained.epoch_losses.len(), 50);
    }

    #[test]
    fn training_is_deterministic() {
        let d = toy_dataset(10, 3, 12, 4);
        let a = train_bank(&d, &small_cfg(), 1).unwrap();
        let b = train_bank(&d, &small_cfg(), 3).unwrap();
        assert_eq!(encode_bank(&a), encode_bank(&b));
        let other = TrainConfig { seed: 6, ..small_cfg() };
        assert_ne!(encode_bank(&a), encode_bank(&train_bank(&d, &other, 1).unwrap()));
    }

    #[test]
    fn class_order_does_not_matter() {
        let d = toy_dataset(10, 3, 12, 4);
        let cfg = small_cfg();
        let bank = train_bank(&d, &cfg, 1).unwrap();
        let mut by_class: Vec<Option<AutoencoderParams>> = vec![None; 3];
        for k in [2, 0, 1] {
            by_class[k] = Some(train_class(&d, &cfg, k).unwrap().params);
        }
        let permuted = FilterBank::new(by_class.into_iter().map(Option::unwrap).collect(), Some(cfg)).unwrap();
        assert_eq!(bank, permuted);
    }

    #[test]
    fn two_class_toy_bank_separates() {
        let train = toy_dataset(40, 2, 16, 10);
        let test = toy_dataset(20, 2, 16, 11);
        let cfg = TrainConfig {
            hidden: 6,
            epochs: 40,
            batch: 10,
            seed: 2,
            ..TrainConfig::default()
        };
        let bank = train_bank(&train, &cfg, 2).unwrap();
        assert_eq!(bank.classes(), 2);
        assert!(evaluate(&bank, &test).unwrap() > 90.0);
    }

    #[test]
    fn distances_match_composition() {
        let mut rng = Rng::new(13);
        let params: Vec<_> = (0..3).map(|_| init_params(10, 4, &mut rng).unwrap()).collect();
        let bank = FilterBank::new(params, None).unwrap();
        let x = uniform_matrix(&mut rng, 7, 10, 0.0, 1.0).unwrap();
        let d = distances(&bank, &x).unwrap();
        assert_eq!(d.d.shape(), (7, 3));
        for k in 0..3 {
            let y = reconstruct(&bank.params()[k], &x).unwrap();
            for i in 0..7 {
                let mut s = 0.0f64;
                for j in 0..10 {
                    s += (x.get(i, j) as f64 - y.get(i, j) as f64).powi(2);
                }
                let want = s.sqrt();
                assert!(((d.d.get(i, k) as f64 - want) / want).abs() <= 1e-6);
            }
        }
        assert!(d.d.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn perfect_reconstruction_has_zero_distance() {
        // zero weights reconstruct every pixel as sigmoid(0) = 0.5
        let bank = FilterBank::new(
            vec![
                AutoencoderParams::zeros(4, 2),
                init_params(4, 2, &mut Rng::new(1)).unwrap(),
            ],
            None,
        )
        .unwrap();
        let x = Matrix::filled(1, 4, 0.5);
        assert_eq!(distances(&bank, &x).unwrap().d.get(0, 0), 0.0);
    }

    #[test]
    fn empty_sample_set() {
        let bank = FilterBank::new(vec![AutoencoderParams::zeros(4, 2); 3], None).unwrap();
        let d = distances(&bank, &Matrix::zeros(0, 4)).unwrap();
        assert_eq!(d.d.shape(), (0, 3));
        assert!(distances(&bank, &Matrix::zeros(2, 5)).is_err());
    }

    #[test]
    fn classify_rules() {
        let d = DistanceMatrix {
            d: Matrix::from_rows(&[[0.5, 0.2, 0.9], [0.3, 0.3, 0.4]]).unwrap(),
        };
        assert_eq!(classify(&d), vec![1, 0]);
        let scaled = DistanceMatrix {
            d: d.d.map(|v| v * 7.5),
        };
        assert_eq!(classify(&scaled), classify(&d));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!((accuracy(&[0, 1, 2], &[0, 9, 2]).unwrap() - 66.667).abs() < 1e-3);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn bank_bytes_round_trip() {
        let mut rng = Rng::new(21);
        let params: Vec<_> = (0..4).map(|_| init_params(9, 3, &mut rng).unwrap()).collect();
        let bank = FilterBank::new(params, None).unwrap();
        let bytes = encode_bank(&bank);
        assert_eq!(&bytes[..4], b"AAEF");
        assert_eq!(bytes.len(), 18 + 4 * 4 * (2 * 27 + 12) + 4);
        let back = decode_bank(&bytes).unwrap();
        assert_eq!(back, bank);

        let probe = uniform_matrix(&mut rng, 5, 9, 0.0, 1.0).unwrap();
        assert_eq!(distances(&bank, &probe).unwrap(), distances(&back, &probe).unwrap());
    }

    #[test]
    fn bank_decode_rejects_damage() {
        let bank = FilterBank::new(vec![init_params(5, 2, &mut Rng::new(1)).unwrap(); 2], None).unwrap();
        let bytes = encode_bank(&bank);
        assert!(matches!(decode_bank(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_bank(&bytes[..10]), Err(Error::Format(_))));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_bank(&bad_magic), Err(Error::Format(_))));

        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_bank(&bad_version), Err(Error::Format(_))));

        let mut flipped = bytes.clone();
        flipped[40] ^= 0x01;
        assert!(matches!(decode_bank(&flipped), Err(Error::Format(_))));

        let mut zero_k = bytes[..18].to_vec();
        zero_k[6..10].copy_from_slice(&0u32.to_le_bytes());
        let crc = crc32fast::hash(&zero_k);
        zero_k.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_bank(&zero_k), Err(Error::Format(_))));
    }

    #[test]
    fn bank_rejects_mixed_shapes() {
        let mut rng = Rng::new(1);
        let a = init_params(5, 2, &mut rng).unwrap();
        let b = init_params(5, 3, &mut rng).unwrap();
        assert!(FilterBank::new(vec![a, b], None).is_err());
        assert!(FilterBank::new(vec![], None).is_err());
    }

    mod props {
        use super::super::*;
        use crate::linalg::Rng as SeededRng;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn argmin_survives_monotone_maps(rows in proptest::collection::vec(proptest::collection::vec(0.0f32..10.0, 1..6), 1..20)) {
                let k = rows[0].len();
                let rows: Vec<Vec<f32>> = rows.into_iter().filter(|r| r.len() == k).collect();
                let d = DistanceMatrix { d: Matrix::from_rows(&rows).unwrap() };
                let base = classify(&d);
                prop_assert_eq!(&classify(&DistanceMatrix { d: d.d.map(|v| v * v) }), &base);
                prop_assert_eq!(&classify(&DistanceMatrix { d: d.d.map(|v| 3.0 * v + 1.0) }), &base);
            }

            #[test]
            fn self_target_prefix(seed in any::<u64>(), k in 0usize..3) {
                let mut rng = SeededRng::new(seed);
                let labels: Vec<usize> = (0..30).map(|i| if i < 3 { i } else { rng.below(3) }).collect();
                let images = uniform_matrix(&mut rng, 30, 5, 0.0, 1.0).unwrap();
                let d = LabeledDataset::with_classes(images, labels, 3).unwrap();
                let ts = build_training_set(&d, k, &mut rng).unwrap();
                prop_assert_eq!(ts.targets.row_range(0, ts.in_class), ts.inputs.row_range(0, ts.in_class));
                prop_assert_eq!(ts.inputs.rows(), ts.targets.rows());
            }
        }
    }
}
