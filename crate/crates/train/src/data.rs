//! Datasets: IDX and CSV loading, synthetic group-sparse regression,
//! minibatching and normalization.

use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use wgsef_nn::{Targets, Tensor};

use crate::error::{Result, TrainError};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Global mean and standard deviation applied as `(x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, ...sample shape]`.
    pub inputs: Tensor,
    pub targets: Targets,
    /// Number of classes for labelled data.
    pub classes: Option<usize>,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Targets, classes: Option<usize>) -> Result<Self> {
        if inputs.ndim() < 2 {
            return Err(TrainError::InvalidData(format!("inputs of shape {:?} have no sample axis", inputs.shape())));
        }
        if inputs.shape()[0] != targets.len() {
            return Err(TrainError::CountMismatch { images: inputs.shape()[0], labels: targets.len() });
        }
        if let (Targets::Labels(l), Some(k)) = (&targets, classes) {
            if let Some(bad) = l.iter().find(|&&y| y >= k) {
                return Err(TrainError::InvalidData(format!("label {bad} outside {k} classes")));
            }
        }
        Ok(Self { inputs, targets, classes, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.gather_rows(idx),
            targets: self.targets.select(idx),
            classes: self.classes,
            normalization: self.normalization,
        }
    }

    /// Deterministic split: the last `ceil(fraction * N)` samples form the second part.
    pub fn split_last(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        let n = self.len();
        let tail = ((fraction * n as f64).ceil() as usize).min(n);
        if tail == 0 || tail == n {
            return Err(TrainError::InvalidData(format!("cannot split {n} samples with fraction {fraction}")));
        }
        let head: Vec<usize> = (0..n - tail).collect();
        let rest: Vec<usize> = (n - tail..n).collect();
        Ok((self.subset(&head), self.subset(&rest)))
    }

    /// Mean and standard deviation over every input value.
    pub fn fit_normalization(&self) -> Normalization {
        let d = self.inputs.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64;
        Normalization { mean, std: if var > 0.0 { var.sqrt() } else { 1.0 } }
    }

    pub fn normalize(&mut self, norm: Normalization) {
        for v in self.inputs.data_mut() {
            *v = (*v - norm.mean) / norm.std;
        }
        self.normalization = Some(norm);
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| TrainError::TruncatedFile(format!("{what} header")))
}

/// Parses an IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(TrainError::BadMagic { expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "image")? as usize;
    let rows = be_u32(bytes, 8, "image")? as usize;
    let cols = be_u32(bytes, 12, "image")? as usize;
    let body = &bytes[16..];
    let need = n * rows * cols;
    if body.len() < need {
        return Err(TrainError::TruncatedFile(format!("{need} pixel bytes announced, {} present", body.len())));
    }
    Ok((n, rows, cols, &body[..need]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(TrainError::BadMagic { expected: IDX_LABELS_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(TrainError::TruncatedFile(format!("{n} labels announced, {} present", body.len())));
    }
    Ok(&body[..n])
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx(images_path: &Path, labels_path: &Path, rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> Result<()> {
    std::fs::write(images_path, encode_idx_images(rows, cols, pixels))?;
    std::fs::write(labels_path, encode_idx_labels(labels))?;
    Ok(())
}

/// Images scaled to `[0, 1]`, zero-padded (centered) to `pad_to x pad_to`
/// when they are smaller, with 10 classes.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], pad_to: Option<usize>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if n != labels.len() {
        return Err(TrainError::CountMismatch { images: n, labels: labels.len() });
    }
    if n == 0 {
        return Err(TrainError::DataEmpty);
    }
    let side = pad_to.unwrap_or(0);
    let (h, w) = (rows.max(side), cols.max(side));
    let (top, left) = ((h - rows) / 2, (w - cols) / 2);
    let mut data = vec![0.0; n * h * w];
    for i in 0..n {
        for r in 0..rows {
            for c in 0..cols {
                data[i * h * w + (r + top) * w + c + left] = pixels[(i * rows + r) * cols + c] as f64 / 255.0;
            }
        }
    }
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1).max(10);
    Dataset::new(
        Tensor::new(vec![n, 1, h, w], data)?,
        Targets::Labels(labels.iter().map(|&l| l as usize).collect()),
        Some(classes),
    )
}

/// Loads an IDX image/label pair, padding MNIST-sized images to 32x32.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    load_idx_padded(images, labels, Some(32))
}

pub fn load_idx_padded(images: &Path, labels: &Path, pad_to: Option<usize>) -> Result<Dataset> {
    dataset_from_idx(&std::fs::read(images)?, &std::fs::read(labels)?, pad_to)
}

/// CSV with a header row and a `label` column; every other column is a feature.
/// Labels are class indices when `classes` is given, real targets otherwise.
pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| TrainError::InvalidData("CSV has no \"label\" column".into()))?;
    let features = headers.len() - 1;
    if features == 0 {
        return Err(TrainError::InvalidData("CSV has no feature columns".into()));
    }
    let mut inputs = Vec::new();
    let mut raw_labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| TrainError::InvalidData(format!("row {}: {field:?} is not a number", line + 2)))?;
            if i == label_col {
                raw_labels.push(v);
            } else {
                inputs.push(v);
            }
        }
    }
    let n = raw_labels.len();
    if n == 0 {
        return Err(TrainError::DataEmpty);
    }
    let targets = match classes {
        Some(k) => {
            let mut labels = Vec::with_capacity(n);
            for v in raw_labels {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= k {
                    return Err(TrainError::InvalidData(format!("label {v} is not a class index below {k}")));
                }
                labels.push(v as usize);
            }
            Targets::Labels(labels)
        }
        None => Targets::Values(Tensor::new(vec![n, 1], raw_labels)?),
    };
    Dataset::new(Tensor::new(vec![n, features], inputs)?, targets, classes)
}

/// Synthetic regression `y = X w* + sigma * noise` whose coefficients are
/// split into `m` contiguous groups, `support` of them nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGroupSpec {
    pub n: usize,
    pub m: usize,
    pub support: usize,
    pub sigma: f64,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub data: Dataset,
    /// Planted nonzero groups, ascending.
    pub support: Vec<usize>,
    pub w_star: Vec<f64>,
    /// Feature indices of each group.
    pub groups: Vec<Vec<usize>>,
}

impl SyntheticGroupSpec {
    /// Contiguous groups of near-equal size: group `j` is `[j n / m, (j + 1) n / m)`.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        (0..self.m).map(|j| (j * self.n / self.m..(j + 1) * self.n / self.m).collect()).collect()
    }
}

pub fn gen_group_sparse(spec: &SyntheticGroupSpec) -> Result<SyntheticProblem> {
    if spec.n == 0 || spec.m == 0 || spec.m > spec.n || spec.support > spec.m || spec.samples == 0 || !(spec.sigma >= 0.0) {
        return Err(TrainError::ConfigInvalid(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups = spec.groups();
    let mut support: Vec<usize> = sample(&mut rng, spec.m, spec.support).into_vec();
    support.sort_unstable();
    let mut w_star = vec![0.0; spec.n];
    for &j in &support {
        for &i in &groups[j] {
            w_star[i] = StandardNormal.sample(&mut rng);
        }
    }
    let x: Vec<f64> = (0..spec.samples * spec.n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = x
        .chunks(spec.n)
        .map(|row| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            row.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>() + spec.sigma * noise
        })
        .collect();
    let data = Dataset::new(
        Tensor::new(vec![spec.samples, spec.n], x)?,
        Targets::Values(Tensor::new(vec![spec.samples, 1], y)?),
        None,
    )?;
    Ok(SyntheticProblem { data, support, w_star, groups })
}

/// One epoch of minibatch indices: a shuffle of `0..n` by `epoch_seed`, cut
/// into batches of `b` with the last partial batch kept.
pub fn batches(n: usize, b: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    order.chunks(b.max(1)).map(<[usize]>::to_vec).collect()
}
