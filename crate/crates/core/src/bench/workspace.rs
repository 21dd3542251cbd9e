use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::heads::FeatureMatrix;
use crate::jsonio::{load_json, save_json};
use crate::nn::{extract_features, train_sgd, Model, Preset, Tap, TrainConfig};
use crate::parallel::Execution;
use crate::synth::{
    generate_scenes, read_dataset, read_scenes, sample_split, write_dataset, write_scenes, AnnotatedScene,
    DatasetManifest, PatchRequest, Split, SUMMARY_FILE,
};

const STAMP_FILE: &str = "workspace.json";
const MODEL_FILE: &str = "model/cnn.asm";
const TRAINING_FILE: &str = "model/training.json";
const TRAINING_TIME_FILE: &str = "model/timing.json";

/// The part of a config that shared artifacts depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    model: Preset,
    dataset: DatasetConfig,
    train: TrainConfig,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub loss_curve: Vec<f64>,
}

/// Train and test features of one tap.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeatures {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub struct Datasets {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
}

/// An output directory holding the pipeline stages of one `(config, seed)`.
///
/// Each stage is computed on first use, written to disk and reused by later
/// stages and later runs.
pub struct Workspace {
    root: PathBuf,
    cfg: ExperimentConfig,
    exec: Execution,
    scenes: OnceLock<Vec<AnnotatedScene>>,
    datasets: OnceLock<Datasets>,
    model: OnceLock<Model<f32>>,
}

fn cached<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

impl Workspace {
    /// Opens `root` for `cfg`, whose nested seeds are aligned to `cfg.seed`.
    /// Fails when `root` already holds stages built from a different config.
    pub fn open(root: impl AsRef<Path>, cfg: &ExperimentConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.with_seed(cfg.seed);
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let stamp = Stamp {
            model: cfg.model,
            dataset: cfg.dataset.clone(),
            train: cfg.train.clone(),
            seed: cfg.seed,
        };
        let path = root.join(STAMP_FILE);
        if path.exists() {
            let existing: Stamp = load_json(&path)?;
            if existing != stamp {
                return Err(Error::Config(format!(
                    "{} holds stages built from a different config or seed",
                    root.display()
                )));
            }
        } else {
            save_json(&stamp, &path)?;
        }
        Ok(Workspace {
            root,
            cfg,
            exec,
            scenes: OnceLock::new(),
            datasets: OnceLock::new(),
            model: OnceLock::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn exec(&self) -> Execution {
        self.exec
    }

    /// Directory for one experiment's outputs, created on demand.
    pub fn experiment_dir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(name);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Training scenes followed by test scenes, ids `0..train+test`.
    pub fn scenes(&self) -> Result<&[AnnotatedScene]> {
        cached(&self.scenes, || {
            let dir = self.root.join("scenes");
            if dir.join(crate::synth::SCENES_FILE).exists() {
                return read_scenes(&dir);
            }
            let d = &self.cfg.dataset;
            let scenes = generate_scenes(&d.scene, 0, d.train_scenes + d.test_scenes, self.exec)?;
            write_scenes(&scenes, &dir)?;
            Ok(scenes)
        })
        .map(Vec::as_slice)
    }

    pub fn datasets(&self) -> Result<&Datasets> {
        cached(&self.datasets, || {
            let train_dir = self.root.join("data/train");
            let test_dir = self.root.join("data/test");
            if train_dir.join(SUMMARY_FILE).exists() && test_dir.join(SUMMARY_FILE).exists() {
                return Ok(Datasets {
                    train: read_dataset(&train_dir)?,
                    test: read_dataset(&test_dir)?,
                });
            }
            let d = &self.cfg.dataset;
            let scenes = self.scenes()?;
            let (train_scenes, test_scenes) = scenes.split_at(d.train_scenes);
            let [_, patch, _] = self.cfg.model.input_shape();
            let request = |split, per_class: usize, count: usize| PatchRequest {
                patch_size: patch,
                n_pos: per_class / count,
                n_neg: per_class / count,
                tau: d.tau,
                grid_stride: d.grid_stride,
                seed: self.cfg.seed,
                split,
            };
            let train = sample_split(train_scenes, &request(Split::Train, d.train_per_class, d.train_scenes))?;
            let test = sample_split(test_scenes, &request(Split::Test, d.test_per_class, d.test_scenes))?;
            write_dataset(&train, &train_dir)?;
            write_dataset(&test, &test_dir)?;
            Ok(Datasets { train, test })
        })
    }

    /// The end-to-end CNN trained on the training split.
    pub fn model(&self) -> Result<&Model<f32>> {
        cached(&self.model, || {
            let path = self.root.join(MODEL_FILE);
            if path.exists() {
                return Model::load(&path);
            }
            let data = self.datasets()?;
            let start = Instant::now();
            let outcome = train_sgd(self.cfg.model.build(self.cfg.seed), &data.train, &self.cfg.train)?;
            let seconds = start.elapsed().as_secs_f64();
            fs::create_dir_all(self.root.join("model"))?;
            outcome.model.save(&path)?;
            save_json(
                &TrainingLog {
                    loss_curve: outcome.loss_curve,
                },
                self.root.join(TRAINING_FILE),
            )?;
            save_json(
                &serde_json::json!({ "train_seconds": seconds }),
                self.root.join(TRAINING_TIME_FILE),
            )?;
            Ok(outcome.model)
        })
    }

    pub fn training_log(&self) -> Result<TrainingLog> {
        self.model()?;
        load_json(self.root.join(TRAINING_FILE))
    }

    /// The trained model with its last pooling layer replaced by a global
    /// average pool.
    pub fn reduced_model(&self) -> Result<Model<f32>> {
        let model = self.model()?;
        let pool = model
            .last_pool_index()
            .ok_or_else(|| Error::InvalidArgument(format!("model `{}` has no pooling layer", model.name())))?;
        model.swap_pooling(pool)
    }

    /// Train and test features at `tap`; `gap` reads the reduced model.
    pub fn features(&self, tap: Tap) -> Result<SplitFeatures> {
        let dir = self.root.join("features");
        let path = |split: Split| dir.join(format!("{}_{}.afm", split.as_str(), tap.as_str()));
        if path(Split::Train).exists() && path(Split::Test).exists() {
            return Ok(SplitFeatures {
                train: FeatureMatrix::load(path(Split::Train))?,
                test: FeatureMatrix::load(path(Split::Test))?,
            });
        }
        let reduced;
        let model = if tap == Tap::Gap {
            reduced = self.reduced_model()?;
            &reduced
        } else {
            self.model()?
        };
        let data = self.datasets()?;
        let train = extract_features(model, tap, &data.train, self.exec)?;
        let test = extract_features(model, tap, &data.test, self.exec)?;
        fs::create_dir_all(&dir)?;
        train.save(path(Split::Train))?;
        test.save(path(Split::Test))?;
        Ok(SplitFeatures { train, test })
    }
}
