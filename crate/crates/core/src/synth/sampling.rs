use std::fmt;

use image::{GenericImageView, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motif::{BBox, MotifClass};
use super::scene::AnnotatedScene;
use crate::error::{Error, Result};
use crate::nn::{PatchSource, Tensor};

/// Default lesion-overlap threshold for positive patches.
pub const DEFAULT_TAU: f64 = 0.8;
/// Default spacing of candidate top-left coordinates.
pub const DEFAULT_GRID_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A sampled patch with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub scene_id: u32,
    pub y: usize,
    pub x: usize,
    pub label: Label,
    /// Fraction of patch pixels inside the lesion mask.
    pub overlap: f64,
    pub split: Split,
    pub image: RgbImage,
}

impl PatchRecord {
    pub fn rect(&self) -> BBox {
        BBox {
            y: self.y as i64,
            x: self.x as i64,
            h: self.image.height() as i64,
            w: self.image.width() as i64,
        }
    }

    /// Channel-major `[3, h, w]` tensor scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        image_to_tensor(&self.image)
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}_{}_{}.png", self.scene_id, self.y, self.x, self.label)
    }
}

pub fn image_to_tensor(image: &RgbImage) -> Tensor<f32> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, p) in image.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("sized")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

/// Ordered patch corpus for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<PatchRecord>,
    pub split: Split,
    pub tau: f64,
    pub seed: u64,
    pub patch_size: usize,
    pub grid_stride: usize,
}

impl DatasetManifest {
    pub fn counts(&self) -> ClassCounts {
        let positive = self.records.iter().filter(|r| r.label == Label::Positive).count();
        ClassCounts {
            positive,
            negative: self.records.len() - positive,
        }
    }

    pub fn is_balanced(&self) -> bool {
        let c = self.counts();
        c.positive == c.negative
    }

    /// Concatenates manifests of the same split and sampling parameters.
    pub fn concat(parts: Vec<DatasetManifest>) -> Result<DatasetManifest> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or(Error::EmptyDataset)?;
        for p in iter {
            if p.split != out.split || p.patch_size != out.patch_size || p.tau != out.tau {
                return Err(Error::InvalidArgument(
                    "cannot merge manifests with different split, patch size or tau".into(),
                ));
            }
            out.records.extend(p.records);
        }
        Ok(out)
    }
}

impl PatchSource for DatasetManifest {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn patch(&self, index: usize) -> Tensor<f32> {
        self.records[index].to_tensor()
    }

    fn label(&self, index: usize) -> usize {
        self.records[index].label.as_index()
    }
}

/// How many patches to draw from one scene, and under which rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRequest {
    pub patch_size: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub tau: f64,
    pub grid_stride: usize,
    pub seed: u64,
    pub split: Split,
}

/// Summed-area table of the lesion mask.
struct MaskIntegral {
    w: usize,
    sums: Vec<u32>,
}

impl MaskIntegral {
    fn new(scene: &AnnotatedScene) -> Self {
        let (h, w) = (scene.height(), scene.width());
        let mut sums = vec![0u32; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += scene.mask.get_pixel(x as u32, y as u32).0[0] as u32;
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        MaskIntegral { w, sums }
    }

    fn count(&self, y: usize, x: usize, size: usize) -> u32 {
        let s = |yy: usize, xx: usize| self.sums[yy * (self.w + 1) + xx];
        s(y + size, x + size) + s(y, x) - s(y, x + size) - s(y + size, x)
    }
}

/// Lesion-overlap fraction of the `size x size` window at `(y, x)`.
pub fn overlap_fraction(scene: &AnnotatedScene, y: usize, x: usize, size: usize) -> f64 {
    MaskIntegral::new(scene).count(y, x, size) as f64 / (size * size) as f64
}

/// Candidate top-lefts of `scene` split into eligible positives
/// (overlap ≥ τ) and negatives (overlap = 0), in row-major order.
pub fn eligible_coordinates(
    scene: &AnnotatedScene,
    patch_size: usize,
    tau: f64,
    grid_stride: usize,
) -> (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>) {
    let integral = MaskIntegral::new(scene);
    let area = (patch_size * patch_size) as f64;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for y in (0..=scene.height() - patch_size).step_by(grid_stride) {
        for x in (0..=scene.width() - patch_size).step_by(grid_stride) {
            let count = integral.count(y, x, patch_size);
            let overlap = count as f64 / area;
            if count == 0 {
                neg.push((y, x, 0.0));
            } else if overlap >= tau {
                pos.push((y, x, overlap));
            }
        }
    }
    (pos, neg)
}

/// Draws `n_pos` positive and `n_neg` negative patches from one scene
/// without replacement. Patches with overlap strictly between 0 and τ are
/// never emitted. Records come out sorted by `(y, x)`.
pub fn sample_patches(scene: &AnnotatedScene, req: &PatchRequest) -> Result<DatasetManifest> {
    if req.patch_size == 0 || req.patch_size > scene.height() || req.patch_size > scene.width() {
        return Err(Error::InvalidArgument(format!(
            "patch size {} does not fit a {}x{} scene",
            req.patch_size,
            scene.height(),
            scene.width()
        )));
    }
    if !(req.tau > 0.0 && req.tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {} outside (0, 1]", req.tau)));
    }
    if req.grid_stride == 0 {
        return Err(Error::InvalidArgument("grid stride must be >= 1".into()));
    }
    let (mut pos, mut neg) = eligible_coordinates(scene, req.patch_size, req.tau, req.grid_stride);
    if pos.len() < req.n_pos || neg.len() < req.n_neg {
        return Err(Error::InsufficientPatches {
            requested_pos: req.n_pos,
            requested_neg: req.n_neg,
            achievable_pos: pos.len(),
            achievable_neg: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    rng.set_stream(scene.id as u64);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut picked: Vec<(usize, usize, f64, Label)> = pos[..req.n_pos]
        .iter()
        .map(|&(y, x, o)| (y, x, o, Label::Positive))
        .chain(neg[..req.n_neg].iter().map(|&(y, x, o)| (y, x, o, Label::Negative)))
        .collect();
    picked.sort_by_key(|&(y, x, _, _)| (y, x));
    let ps = req.patch_size as u32;
    let records = picked
        .into_iter()
        .map(|(y, x, overlap, label)| PatchRecord {
            scene_id: scene.id,
            y,
            x,
            label,
            overlap,
            split: req.split,
            image: scene.image.view(x as u32, y as u32, ps, ps).to_image(),
        })
        .collect();
    Ok(DatasetManifest {
        records,
        split: req.split,
        tau: req.tau,
        seed: req.seed,
        patch_size: req.patch_size,
        grid_stride: req.grid_stride,
    })
}

/// Samples every scene with the same per-scene request and concatenates
/// the results in scene order.
pub fn sample_split(scenes: &[AnnotatedScene], req: &PatchRequest) -> Result<DatasetManifest> {
    let parts = scenes
        .iter()
        .map(|s| sample_patches(s, req))
        .collect::<Result<Vec<_>>>()?;
    DatasetManifest::concat(parts)
}

/// Whether the patch rectangle contains a planted motif of `class`.
///
/// A lymphocyte dot counts when its center lies inside the rectangle; other
/// classes count when at least one of their covered pixels does.
pub fn patch_contains(scene: &AnnotatedScene, rect: &BBox, class: MotifClass) -> bool {
    scene.motifs_of(class).any(|m| {
        if class == MotifClass::LymphocyteDot {
            return rect.contains_point(m.center.0, m.center.1);
        }
        if m.bbox.area() == 0 || !m.bbox.intersects(rect) {
            return false;
        }
        let (y0, y1) = (m.bbox.y.max(rect.y), (m.bbox.y + m.bbox.h).min(rect.y + rect.h));
        let (x0, x1) = (m.bbox.x.max(rect.x), (m.bbox.x + m.bbox.w).min(rect.x + rect.w));
        (y0..y1).any(|y| (x0..x1).any(|x| m.covers(y, x)))
    })
}
