use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadKind, HeadsConfig};
use crate::nn::{Preset, Tap, TrainConfig};
use crate::scope::{TagRule, Upsample, DEFAULT_TOP_K};
use crate::synth::{SceneSpec, DEFAULT_GRID_STRIDE, DEFAULT_TAU};

/// Scenes and patch counts of the train and test splits. Scenes are split
/// whole: no scene contributes to both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene: SceneSpec,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// Patches per class in the training split, spread evenly over its scenes.
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub tau: f64,
    pub grid_stride: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            scene: SceneSpec::default(),
            train_scenes: 10,
            test_scenes: 5,
            train_per_class: 1000,
            test_per_class: 500,
            tau: DEFAULT_TAU,
            grid_stride: DEFAULT_GRID_STRIDE,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, scenes, per_class) in [
            ("train", self.train_scenes, self.train_per_class),
            ("test", self.test_scenes, self.test_per_class),
        ] {
            if scenes == 0 || per_class == 0 {
                return Err(Error::Config(format!("dataset.{name}: needs scenes and patches")));
            }
            if per_class % scenes != 0 {
                return Err(Error::Config(format!(
                    "dataset.{name}_per_class = {per_class} is not divisible by {scenes} scenes"
                )));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("dataset.tau = {} outside (0, 1]", self.tau)));
        }
        if self.grid_stride == 0 {
            return Err(Error::Config("dataset.grid_stride must be >= 1".into()));
        }
        Ok(())
    }
}

fn default_tap() -> Tap {
    Tap::Fc1
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

fn default_heads() -> Vec<HeadKind> {
    HeadKind::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_seed() -> u64 {
    42
}

/// Everything an experiment depends on besides its output directory.
///
/// `seed` drives scene generation, weight init, training order and head
/// fitting; seed fields inside nested sections are replaced by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Preset,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Feature tap of the classifier comparison.
    #[serde(default = "default_tap")]
    pub tap: Tap,
    /// Patches kept per channel in rankings and galleries.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_heads")]
    pub heads: Vec<HeadKind>,
    #[serde(default)]
    pub head_config: HeadsConfig,
    /// Size of the three selected feature sets; `None` uses the number of
    /// channels tagged tumor or lymphocyte.
    #[serde(default)]
    pub selection_size: Option<usize>,
    /// Seeds over which selection results are averaged.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tag_rule: TagRule,
    #[serde(default)]
    pub upsample: Upsample,
    /// Channel tag file for selection; relative paths resolve against the
    /// config file. `None` uses the tags suggested by the gallery stage.
    #[serde(default)]
    pub tags: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: Preset) -> Self {
        ExperimentConfig {
            model,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            tap: default_tap(),
            k: default_k(),
            heads: default_heads(),
            head_config: HeadsConfig::default(),
            selection_size: None,
            seeds: default_seeds(),
            seed: default_seed(),
            tag_rule: TagRule::default(),
            upsample: Upsample::default(),
            tags: None,
        }
    }

    /// Reads a JSON config. Missing or unknown keys are config errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(tags), Some(dir)) = (&cfg.tags, path.parent()) {
            if tags.is_relative() {
                cfg.tags = Some(dir.join(tags));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.heads.is_empty() {
            return Err(Error::Config("heads must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.selection_size == Some(0) {
            return Err(Error::Config("selection_size must be >= 1".into()));
        }
        if self.tap == Tap::Gap {
            return Err(Error::Config("tap: gap exists only on the reduced model".into()));
        }
        let model = self.model.build(0);
        model
            .tap_point(self.tap)
            .map_err(|e| Error::Config(format!("tap: {e}")))?;
        let [_, h, w] = self.model.input_shape();
        self.dataset
            .scene
            .validate(h.max(w))
            .map_err(|e| Error::Config(format!("dataset.scene: {e}")))?;
        Ok(())
    }

    /// Copy with every nested seed set to `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.dataset.scene.seed = seed;
        cfg.train.seed = seed;
        cfg.head_config = heads_with_seed(&self.head_config, seed);
        cfg
    }
}

pub fn heads_with_seed(cfg: &HeadsConfig, seed: u64) -> HeadsConfig {
    let mut out = cfg.clone();
    out.logistic.seed = seed;
    out.svm.seed = seed;
    out.forest.seed = seed;
    out
}
