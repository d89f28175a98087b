//! Run configuration: one JSON document, unknown keys rejected.
//!
//! Relative dataset paths are looked up next to the config file first and
//! then under `$WGSEF_DATA_DIR`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgsef_core::envelope::EnvelopeParams;
use wgsef_core::groups::DEFAULT_ZERO_TOL;
use wgsef_core::optim::{derive_seed, MomentumSchedule, RegScope, Regularizer, StepSchedule, SwitchCondition};
use wgsef_nn::{make_groups, Architecture, GroupingScheme, Model, ModelSpec, Targets};
use wgsef_train::data::{gen_group_sparse, load_csv, load_idx_padded, SyntheticGroupSpec};
use wgsef_train::train::streams;
use wgsef_train::{Dataset, HspgConfig, TrainConfig};

use crate::error::{CliError, Result};

pub const DATA_DIR_ENV: &str = "WGSEF_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Input shape and output count are taken from the dataset.
    pub model: Architecture,
    pub data: DataSource,
    /// Required unless the data is synthetic, whose planted groups are the default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingScheme>,
    #[serde(default)]
    pub include_bias: bool,
    /// `null` trains without a regularizer.
    #[serde(default)]
    pub regularizer: Option<RegConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub step: StepSchedule,
    #[serde(default)]
    pub momentum: MomentumSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prune_at_end: bool,
    #[serde(default)]
    pub weighted_prune: bool,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_zero_tol() -> f64 {
    DEFAULT_ZERO_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// IDX image/label files. With `dir` set, missing file names default to
    /// the standard MNIST names inside it.
    Idx {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_labels: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_pad")]
        pad_to: Option<usize>,
        #[serde(default = "yes")]
        normalize: bool,
        /// Use only the first `train_limit` training images.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        /// Class count for labelled data; regression targets when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        #[serde(default)]
        normalize: bool,
    },
    /// Planted group-sparse regression, generated from the run seed.
    Synthetic {
        n: usize,
        m: usize,
        support: usize,
        sigma: f64,
        samples: usize,
        #[serde(default = "default_val_fraction")]
        validation_fraction: f64,
    },
}

fn default_pad() -> Option<usize> {
    Some(32)
}

fn yes() -> bool {
    true
}

fn default_val_fraction() -> f64 {
    0.1
}

/// A single value for every layer or one value per grouped layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLayer<T> {
    One(T),
    Each(Vec<T>),
}

impl<T: Copy> PerLayer<T> {
    fn expand(&self, layers: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerLayer::One(v) => Ok(vec![*v; layers]),
            PerLayer::Each(v) if v.len() == layers => Ok(v.clone()),
            PerLayer::Each(v) => Err(CliError::Config(format!("{} values of {what} for {layers} grouped layers", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    #[default]
    PerLayer,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    pub lambda: PerLayer<f64>,
    /// Falls back to the grouping scheme's own per-layer levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<PerLayer<usize>>,
    #[serde(default)]
    pub scope: ScopeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    #[default]
    ProxSgd,
    Hspg {
        #[serde(default)]
        switch: SwitchCondition,
        #[serde(default)]
        epsilon: f64,
    },
}

/// Everything a run needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub train: Dataset,
    pub eval: Dataset,
    pub model: Model,
    pub reg: Regularizer<f64>,
    pub planted: Option<Planted>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub support: Vec<usize>,
    /// Flat parameter indices of every planted group.
    pub groups: Vec<Vec<usize>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.epochs, self.batch_size, self.step, self.seed);
        cfg.momentum = self.momentum;
        cfg.prune_at_end = self.prune_at_end;
        cfg.weighted_prune = self.weighted_prune;
        cfg.zero_tol = self.zero_tol;
        cfg.checkpoint_every = self.checkpoint_every;
        cfg
    }

    pub fn hspg_config(&self) -> Option<HspgConfig> {
        match self.optimizer {
            OptimizerConfig::ProxSgd => None,
            OptimizerConfig::Hspg { switch, epsilon } => Some(HspgConfig { switch, epsilon }),
        }
    }

    fn check(&self) -> Result<()> {
        if self.epochs == 0 && self.prune_at_end {
            return Err(CliError::Config("prune_at_end needs at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(CliError::Config(format!("zero_tol must be >= 0, got {}", self.zero_tol)));
        }
        Ok(())
    }

    /// Loads the data, builds the model and resolves the regularizer.
    /// `base` is the directory relative dataset paths are resolved against.
    pub fn prepare(&self, base: &Path) -> Result<Experiment> {
        self.check()?;
        let (train, eval, planted_groups) = self.load_data(base)?;
        let outputs = match (&train.targets, train.classes) {
            (Targets::Labels(_), Some(k)) => k,
            (Targets::Labels(l), None) => l.iter().max().map_or(1, |m| m + 1),
            (Targets::Values(v), _) => v.shape()[1],
        };
        let spec = ModelSpec {
            architecture: self.model.clone(),
            input_shape: train.sample_shape().to_vec(),
            outputs,
            seed: derive_seed(self.seed, streams::INIT),
        };
        let model = Model::build(&spec)?;
        let planted = match (planted_groups, &self.model) {
            (Some((support, groups)), Architecture::Linear) => Some(Planted { support, groups }),
            _ => None,
        };
        let scheme = match (&self.grouping, &planted) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => GroupingScheme::Custom { groups: p.groups.clone(), weights: None },
            (None, None) => return Err(CliError::Config("grouping is required for this dataset".into())),
        };
        let reg = match &self.regularizer {
            None => Regularizer::default(),
            Some(rc) => {
                let regions = make_groups(&model, &scheme, self.include_bias)?;
                let layers = regions.len();
                let scope = match rc.scope {
                    ScopeKind::PerLayer => {
                        let lambdas = rc.lambda.expand(layers, "lambda")?;
                        let ks = match (&rc.k, scheme.per_layer_k()) {
                            (Some(k), _) => k.expand(layers, "k")?,
                            (None, Some(k)) => k.to_vec(),
                            (None, None) => return Err(CliError::Config("regularizer.k is required".into())),
                        };
                        let params = ks
                            .into_iter()
                            .zip(lambdas)
                            .map(|(k, l)| EnvelopeParams::new(k, l))
                            .collect::<Result<Vec<_>, _>>()?;
                        RegScope::PerLayer(params)
                    }
                    ScopeKind::Global => {
                        let (PerLayer::One(lambda), Some(PerLayer::One(k))) = (&rc.lambda, &rc.k) else {
                            return Err(CliError::Config("a global scope takes one lambda and one k".into()));
                        };
                        RegScope::Global(EnvelopeParams::new(*k, *lambda)?)
                    }
                };
                Regularizer::resolve(&scope, regions).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        Ok(Experiment { config: self.clone(), train, eval, model, reg, planted })
    }

    #[allow(clippy::type_complexity)]
    fn load_data(&self, base: &Path) -> Result<(Dataset, Dataset, Option<(Vec<usize>, Vec<Vec<usize>>)>)> {
        match &self.data {
            DataSource::Idx {
                dir,
                train_images,
                train_labels,
                test_images,
                test_labels,
                pad_to,
                normalize,
                train_limit,
            } => {
                let dir = dir.as_ref().map(|d| resolve(base, d)).transpose()?;
                let file = |given: &Option<PathBuf>, default: &str| -> Result<PathBuf> {
                    match (given, &dir) {
                        (Some(p), _) => resolve(base, p),
                        (None, Some(d)) => existing(d.join(default)),
                        (None, None) => Err(CliError::Config(format!("no path for {default} and no data.dir"))),
                    }
                };
                let paths = [
                    file(train_images, "train-images-idx3-ubyte")?,
                    file(train_labels, "train-labels-idx1-ubyte")?,
                    file(test_images, "t10k-images-idx3-ubyte")?,
                    file(test_labels, "t10k-labels-idx1-ubyte")?,
                ];
                let mut train = load_idx_padded(&paths[0], &paths[1], *pad_to)?;
                let mut test = load_idx_padded(&paths[2], &paths[3], *pad_to)?;
                if let Some(limit) = *train_limit {
                    train = train.subset(&(0..limit.min(train.len())).collect::<Vec<_>>());
                }
                if *normalize {
                    let norm = train.fit_normalization();
                    train.normalize(norm);
                    test.normalize(norm);
                }
                Ok((train, test, None))
            }
            DataSource::Csv { train, test, classes, normalize } => {
                let mut tr = load_csv(&resolve(base, train)?, *classes)?;
                let mut te = load_csv(&resolve(base, test)?, *classes)?;
                if *normalize {
                    let norm = tr.fit_normalization();
                    tr.normalize(norm);
                    te.normalize(norm);
                }
                Ok((tr, te, None))
            }
            DataSource::Synthetic { n, m, support, sigma, samples, validation_fraction } => {
                let spec = SyntheticGroupSpec {
                    n: *n,
                    m: *m,
                    support: *support,
                    sigma: *sigma,
                    samples: *samples,
                    seed: derive_seed(self.seed, streams::DATA),
                };
                let problem = gen_group_sparse(&spec)?;
                let (train, val) = problem.data.split_last(*validation_fraction)?;
                Ok((train, val, Some((problem.support, problem.groups))))
            }
        }
    }
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Config(format!("dataset path {} does not exist", path.display())))
    }
}

/// Absolute paths as given; relative ones next to the config, then under `$WGSEF_DATA_DIR`.
pub fn resolve(base: &Path, path: &Path) -> Result<PathBuf> {
    if path.is_absolute() {
        return existing(path.to_path_buf());
    }
    let local = base.join(path);
    if local.exists() {
        return Ok(local);
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(CliError::Config(format!(
        "dataset path {} not found under {} or ${DATA_DIR_ENV}",
        path.display(),
        base.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"{
        "model": {"kind": "linear"},
        "data": {"kind": "synthetic", "n": 20, "m": 5, "support": 2, "sigma": 0.01, "samples": 100},
        "regularizer": {"lambda": 0.1, "k": 2, "scope": "global"},
        "step": {"kind": "constant", "rate": 0.01},
        "epochs": 2,
        "batch_size": 10,
        "seed": 3
    }"#;

    #[test]
    fn synthetic_defaults_to_planted_groups() {
        let cfg = RunConfig::from_json(SYNTH).unwrap();
        assert_eq!(cfg.optimizer, OptimizerConfig::ProxSgd);
        assert_eq!(cfg.momentum, MomentumSchedule::default());
        let exp = cfg.prepare(Path::new(".")).unwrap();
        let planted = exp.planted.unwrap();
        assert_eq!(planted.groups.len(), 5);
        assert_eq!(planted.support.len(), 2);
        assert_eq!(exp.reg.total_groups(), 5);
        assert_eq!(exp.reg.terms[0].params.k, 2);
        assert_eq!((exp.train.len(), exp.eval.len()), (90, 10));
        assert_eq!(exp.model.spec.input_shape, vec![20]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SYNTH.replace("\"epochs\"", "\"epoch\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Config(_))));
        let nested = SYNTH.replace("\"scope\": \"global\"", "\"scope\": \"global\", \"extra\": 1");
        assert!(RunConfig::from_json(&nested).is_err());
    }

    #[test]
    fn k_out_of_range_is_a_config_error() {
        let cfg = RunConfig::from_json(&SYNTH.replace("\"k\": 2", "\"k\": 6")).unwrap();
        assert!(matches!(cfg.prepare(Path::new(".")), Err(CliError::Config(_))));
    }

    #[test]
    fn per_layer_lists_must_match_layers() {
        let text = SYNTH
            .replace("\"scope\": \"global\"", "\"scope\": \"per_layer\"")
            .replace("\"lambda\": 0.1", "\"lambda\": [0.1, 0.2]");
        let cfg = RunConfig::from_json(&text).unwrap();
        assert!(matches!(cfg.prepare(Path::new(".")), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_paths_are_reported() {
        let text = r#"{
            "model": {"kind": "lenet5"},
            "data": {"kind": "idx", "dir": "no/such/dir"},
            "grouping": {"kind": "per_layer_filters", "k": [3, 8]},
            "step": {"kind": "constant", "rate": 0.01},
            "epochs": 1,
            "batch_size": 32
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let err = cfg.prepare(Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
