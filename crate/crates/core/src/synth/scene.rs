use std::f32::consts::PI;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::motif::{Motif, MotifClass, Shape};
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};

/// Count and size range of one motif class. `size` is a radius for
/// blobs, dots and lumens and a half-width for collagen stripes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotifRecipe {
    pub count: usize,
    pub size: (f32, f32),
}

impl MotifRecipe {
    pub const fn new(count: usize, lo: f32, hi: f32) -> Self {
        MotifRecipe { count, size: (lo, hi) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub tumor_blob: MotifRecipe,
    pub lymphocyte_dot: MotifRecipe,
    pub collagen_stripe: MotifRecipe,
    pub lumen_hole: MotifRecipe,
    /// Placement attempts per motif before giving up.
    pub max_attempts: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            height: 512,
            width: 512,
            seed: 42,
            tumor_blob: MotifRecipe::new(3, 56.0, 84.0),
            lymphocyte_dot: MotifRecipe::new(48, 2.5, 4.5),
            collagen_stripe: MotifRecipe::new(10, 2.0, 4.0),
            lumen_hole: MotifRecipe::new(6, 10.0, 22.0),
            max_attempts: 4000,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self, min_side: usize) -> Result<()> {
        if self.height < min_side || self.width < min_side {
            return Err(Error::InvalidArgument(format!(
                "scene {}x{} cannot hold a {min_side}px patch",
                self.height, self.width
            )));
        }
        for (name, r) in self.recipes() {
            if !(r.size.0 > 0.0 && r.size.0 <= r.size.1) {
                return Err(Error::InvalidArgument(format!(
                    "{name}: size range {:?} is not a positive interval",
                    r.size
                )));
            }
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    fn recipes(&self) -> [(MotifClass, MotifRecipe); 4] {
        [
            (MotifClass::TumorBlob, self.tumor_blob),
            (MotifClass::LumenHole, self.lumen_hole),
            (MotifClass::CollagenStripe, self.collagen_stripe),
            (MotifClass::LymphocyteDot, self.lymphocyte_dot),
        ]
    }
}

/// Synthetic tissue image with its lesion mask and planted-motif inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedScene {
    pub id: u32,
    pub image: RgbImage,
    /// 1 inside a planted tumor blob, else 0.
    pub mask: GrayImage,
    pub inventory: Vec<Motif>,
}

impl AnnotatedScene {
    pub fn height(&self) -> usize {
        self.image.height() as usize
    }

    pub fn width(&self) -> usize {
        self.image.width() as usize
    }

    pub fn lesion_area(&self) -> usize {
        self.mask.pixels().filter(|p| p.0[0] == 1).count()
    }

    pub fn motifs_of(&self, class: MotifClass) -> impl Iterator<Item = &Motif> {
        self.inventory.iter().filter(move |m| m.class == class)
    }
}

/// Per-scene generator: the spec seed selects the key, the scene id the
/// ChaCha stream.
pub fn scene_rng(seed: u64, scene_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_id as u64);
    rng
}

fn jitter(rng: &mut ChaCha8Rng, amount: f32) -> f32 {
    rng.gen_range(-amount..=amount)
}

fn shade(base: [f32; 3], delta: f32) -> Rgb<u8> {
    Rgb(base.map(|c| (c + delta).round().clamp(0.0, 255.0) as u8))
}

fn blend(dst: &mut Rgb<u8>, color: [f32; 3], alpha: f32) {
    for (d, c) in dst.0.iter_mut().zip(color) {
        *d = (*d as f32 * (1.0 - alpha) + c * alpha).round().clamp(0.0, 255.0) as u8;
    }
}

const STROMA: [f32; 3] = [232.0, 182.0, 206.0];
const CYTOPLASM: [f32; 3] = [214.0, 190.0, 222.0];
const HALO: [f32; 3] = [244.0, 236.0, 244.0];
const TUMOR_NUCLEUS: [f32; 3] = [92.0, 38.0, 122.0];
const LYMPHOCYTE: [f32; 3] = [44.0, 40.0, 142.0];
const COLLAGEN: [f32; 3] = [206.0, 112.0, 152.0];
const LUMEN: [f32; 3] = [250.0, 248.0, 250.0];

fn draw_shape(image: &mut RgbImage, motif: &Motif, mut paint: impl FnMut(&mut Rgb<u8>, i64, i64)) {
    let (h, w) = (image.height() as i64, image.width() as i64);
    let b = motif.bbox;
    for y in b.y.max(0)..(b.y + b.h).min(h) {
        for x in b.x.max(0)..(b.x + b.w).min(w) {
            if motif.covers(y, x) {
                paint(image.get_pixel_mut(x as u32, y as u32), y, x);
            }
        }
    }
}

/// Fills a tumor blob with packed tumor cells: a dark irregular nucleus
/// inside a pale cleared halo on lavender cytoplasm.
fn render_tumor(image: &mut RgbImage, blob: &Motif, rng: &mut ChaCha8Rng) {
    draw_shape(image, blob, |p, _, _| {
        *p = shade(CYTOPLASM, 0.0);
    });
    let r = blob.shape.bounding_radius();
    let spacing = 11.0f32;
    let steps = (r / spacing).ceil() as i32 + 1;
    for gy in -steps..=steps {
        for gx in -steps..=steps {
            let cy = blob.center.0 + gy as f32 * spacing + jitter(rng, 2.5);
            let cx =
                blob.center.1 + gx as f32 * spacing + jitter(rng, 2.5) + if gy % 2 == 0 { 0.0 } else { spacing / 2.0 };
            if !blob.covers(cy.round() as i64, cx.round() as i64) {
                continue;
            }
            let nucleus_r = rng.gen_range(3.2f32..5.2);
            let nucleus = Shape::Blob {
                radius: nucleus_r,
                depth: rng.gen_range(0.1..0.35),
                lobes: rng.gen_range(2..5),
                phase: rng.gen_range(0.0..2.0 * PI),
            };
            let halo_r = nucleus_r + 2.5;
            let tone = jitter(rng, 12.0);
            let y0 = (cy - halo_r).floor() as i64;
            let x0 = (cx - halo_r).floor() as i64;
            let y1 = (cy + halo_r).ceil() as i64;
            let x1 = (cx + halo_r).ceil() as i64;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if y < 0 || x < 0 || y >= image.height() as i64 || x >= image.width() as i64 {
                        continue;
                    }
                    if !blob.covers(y, x) {
                        continue;
                    }
                    let dy = y as f32 - cy;
                    let dx = x as f32 - cx;
                    let p = image.get_pixel_mut(x as u32, y as u32);
                    if nucleus.contains(dy, dx) {
                        *p = shade(TUMOR_NUCLEUS, tone);
                    } else if dy * dy + dx * dx < halo_r * halo_r {
                        *p = shade(HALO, tone / 3.0);
                    }
                }
            }
        }
    }
}

fn sample_shape(class: MotifClass, recipe: &MotifRecipe, rng: &mut ChaCha8Rng) -> Shape {
    let (lo, hi) = recipe.size;
    let size = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    match class {
        MotifClass::TumorBlob => Shape::Blob {
            radius: size,
            depth: rng.gen_range(0.08..0.2),
            lobes: rng.gen_range(3..6),
            phase: rng.gen_range(0.0..2.0 * PI),
        },
        MotifClass::LymphocyteDot => Shape::Disc { radius: size },
        MotifClass::CollagenStripe => Shape::Stripe {
            length: rng.gen_range(60.0..160.0),
            angle: rng.gen_range(0.0..PI),
            amplitude: rng.gen_range(3.0..7.0),
            wavelength: rng.gen_range(25.0..45.0),
            half_width: size,
            phase: rng.gen_range(0.0..2.0 * PI),
        },
        MotifClass::LumenHole => Shape::Ellipse {
            semi_major: size,
            semi_minor: size * rng.gen_range(0.5..0.9),
            angle: rng.gen_range(0.0..PI),
        },
        MotifClass::Background => unreachable!("background is not planted"),
    }
}

/// Generates scene `scene_id` of `spec`. Deterministic in `(spec, scene_id)`.
pub fn generate_scene(spec: &SceneSpec, scene_id: u32) -> Result<AnnotatedScene> {
    spec.validate(1)?;
    let mut rng = scene_rng(spec.seed, scene_id);
    let (h, w) = (spec.height, spec.width);
    let mut inventory: Vec<Motif> = Vec::new();
    let margin = 3.0;

    for (class, recipe) in spec.recipes() {
        for _ in 0..recipe.count {
            let mut placed = None;
            for _ in 0..spec.max_attempts {
                let shape = sample_shape(class, &recipe, &mut rng);
                let r = shape.bounding_radius();
                // stripes may run off the scene edge, everything else fits
                let fit = if class == MotifClass::CollagenStripe { 0.0 } else { r };
                if 2.0 * fit >= h.min(w) as f32 {
                    continue;
                }
                let cy = rng.gen_range(fit..h as f32 - fit).round();
                let cx = rng.gen_range(fit..w as f32 - fit).round();
                let clear = inventory
                    .iter()
                    .filter(|m| m.class == MotifClass::TumorBlob)
                    .all(|t| t.distance_to(cy, cx) >= t.shape.bounding_radius() + r + margin);
                if clear {
                    placed = Some(Motif::new(class, (cy, cx), shape));
                    break;
                }
            }
            match placed {
                Some(m) => inventory.push(m),
                None => {
                    return Err(Error::Placement {
                        class: class.to_string(),
                        attempts: spec.max_attempts,
                    })
                }
            }
        }
    }

    let mut image = RgbImage::new(w as u32, h as u32);
    let waves: Vec<(f32, f32, f32)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.01..0.04),
                rng.gen_range(0.01..0.04),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    for (x, y, p) in image.enumerate_pixels_mut() {
        let low: f32 = waves
            .iter()
            .map(|&(fy, fx, ph)| (fy * y as f32 + fx * x as f32 + ph).sin())
            .sum::<f32>()
            * 4.0;
        *p = shade(STROMA, low + jitter(&mut rng, 10.0));
    }

    for class in [
        MotifClass::CollagenStripe,
        MotifClass::LumenHole,
        MotifClass::LymphocyteDot,
    ] {
        for m in inventory.iter().filter(|m| m.class == class) {
            match class {
                MotifClass::CollagenStripe => {
                    draw_shape(&mut image, m, |p, _, _| blend(p, COLLAGEN, 0.85));
                }
                MotifClass::LumenHole => {
                    let tone = jitter(&mut rng, 3.0);
                    draw_shape(&mut image, m, |p, _, _| *p = shade(LUMEN, tone));
                }
                _ => {
                    let tone = jitter(&mut rng, 10.0);
                    draw_shape(&mut image, m, |p, _, _| *p = shade(LYMPHOCYTE, tone));
                }
            }
        }
    }
    let blobs: Vec<Motif> = inventory
        .iter()
        .filter(|m| m.class == MotifClass::TumorBlob)
        .cloned()
        .collect();
    for blob in &blobs {
        render_tumor(&mut image, blob, &mut rng);
    }

    let mut mask = GrayImage::new(w as u32, h as u32);
    for blob in &blobs {
        let b = blob.bbox;
        for y in b.y.max(0)..(b.y + b.h).min(h as i64) {
            for x in b.x.max(0)..(b.x + b.w).min(w as i64) {
                if blob.covers(y, x) {
                    mask.put_pixel(x as u32, y as u32, Luma([1]));
                }
            }
        }
    }
    for m in &mut inventory {
        m.clip_bbox(h, w);
    }

    Ok(AnnotatedScene {
        id: scene_id,
        image,
        mask,
        inventory,
    })
}

/// Generates scenes `first_id..first_id + count`, in parallel when allowed.
pub fn generate_scenes(spec: &SceneSpec, first_id: u32, count: usize, exec: Execution) -> Result<Vec<AnnotatedScene>> {
    parallel::try_map_range(exec, count, |i| generate_scene(spec, first_id + i as u32))
}
