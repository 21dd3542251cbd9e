use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::geometry::FovBox;
use crate::error::{Error, Result};

/// Color of FOV box borders.
pub const BOX_COLOR: Rgb<u8> = Rgb([255, 255, 0]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsample {
    #[default]
    Bilinear,
    Nearest,
}

/// A channel map normalized to `[0, 1]` and resized to patch dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major values in `[0, 1]`.
    pub values: Vec<f32>,
    /// Range used for normalization.
    pub min: f32,
    pub max: f32,
}

impl Heatmap {
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// First maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }
}

/// Min-max normalization; a flat map becomes 0.5 everywhere.
pub fn normalize(map: &[f32]) -> (Vec<f32>, f32, f32) {
    let min = map.iter().copied().fold(f32::INFINITY, f32::min);
    let max = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let values = if max > min {
        map.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        vec![0.5; map.len()]
    };
    (values, min, max)
}

/// Source coordinate of output pixel `i` when resizing `src` cells to
/// `dst` pixels, aligning cell centers.
fn source_coord(i: usize, src: usize, dst: usize) -> f32 {
    (i as f32 + 0.5) * src as f32 / dst as f32 - 0.5
}

/// Bilinear sample of a `rows x cols` map at fractional cell coordinates,
/// clamped to the map. Integer coordinates return the cell value exactly.
pub fn sample_bilinear(map: &[f32], dims: (usize, usize), sy: f32, sx: f32) -> f32 {
    let (rows, cols) = dims;
    let sy = sy.clamp(0.0, (rows - 1) as f32);
    let sx = sx.clamp(0.0, (cols - 1) as f32);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
    let (fy, fx) = (sy - y0 as f32, sx - x0 as f32);
    let at = |y: usize, x: usize| map[y * cols + x];
    let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
    let bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
    top + (bottom - top) * fy
}

/// Normalizes a `map_dims` channel map and resizes it to `patch_dims`.
pub fn render_heatmap(
    map: &[f32],
    map_dims: (usize, usize),
    patch_dims: (usize, usize),
    mode: Upsample,
) -> Result<Heatmap> {
    let (rows, cols) = map_dims;
    let (height, width) = patch_dims;
    if rows * cols == 0 || map.len() != rows * cols {
        return Err(Error::InvalidArgument(format!(
            "{} map values for a {rows}x{cols} map",
            map.len()
        )));
    }
    if height * width == 0 {
        return Err(Error::InvalidArgument("empty patch".into()));
    }
    let (norm, min, max) = normalize(map);
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let v = match mode {
                Upsample::Bilinear => sample_bilinear(
                    &norm,
                    map_dims,
                    source_coord(y, rows, height),
                    source_coord(x, cols, width),
                ),
                Upsample::Nearest => {
                    let sy = ((y * rows) / height).min(rows - 1);
                    let sx = ((x * cols) / width).min(cols - 1);
                    norm[sy * cols + sx]
                }
            };
            values.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(Heatmap {
        height,
        width,
        values,
        min,
        max,
    })
}

/// Black-red-yellow-white ramp.
fn hot(v: f32) -> [f32; 3] {
    let c = |t: f32| t.clamp(0.0, 1.0) * 255.0;
    [c(3.0 * v), c(3.0 * v - 1.0), c(3.0 * v - 2.0)]
}

/// Alpha-blends the heatmap's color ramp onto a copy of the patch.
pub fn overlay(patch: &RgbImage, heatmap: &Heatmap, alpha: f32) -> Result<RgbImage> {
    if (patch.height() as usize, patch.width() as usize) != (heatmap.height, heatmap.width) {
        return Err(Error::InvalidArgument(format!(
            "heatmap {}x{} does not match patch {}x{}",
            heatmap.height,
            heatmap.width,
            patch.height(),
            patch.width()
        )));
    }
    let mut out = patch.clone();
    for (x, y, p) in out.enumerate_pixels_mut() {
        let color = hot(heatmap.get(y as usize, x as usize));
        for (d, c) in p.0.iter_mut().zip(color) {
            *d = (*d as f32 * (1.0 - alpha) + c * alpha).round() as u8;
        }
    }
    Ok(out)
}

/// Draws the one-pixel border of `fov` in [`BOX_COLOR`].
pub fn draw_box(image: &mut RgbImage, fov: &FovBox) {
    if fov.h == 0 || fov.w == 0 {
        return;
    }
    let (y1, x1) = (fov.y + fov.h - 1, fov.x + fov.w - 1);
    for x in fov.x..=x1 {
        image.put_pixel(x as u32, fov.y as u32, BOX_COLOR);
        image.put_pixel(x as u32, y1 as u32, BOX_COLOR);
    }
    for y in fov.y..=y1 {
        image.put_pixel(fov.x as u32, y as u32, BOX_COLOR);
        image.put_pixel(x1 as u32, y as u32, BOX_COLOR);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_map_is_half() {
        let h = render_heatmap(&[3.0; 4], (2, 2), (8, 8), Upsample::Bilinear).unwrap();
        assert!(h.values.iter().all(|&v| v == 0.5));
        assert_eq!((h.height, h.width), (8, 8));
    }

    #[test]
    fn nearest_replicates_cells() {
        let h = render_heatmap(&[0.0, 1.0, 2.0, 3.0], (2, 2), (4, 4), Upsample::Nearest).unwrap();
        assert_eq!(h.get(0, 0), 0.0);
        assert_eq!(h.get(1, 3), 1.0 / 3.0);
        assert_eq!(h.get(3, 3), 1.0);
    }

    #[test]
    fn bilinear_hits_cell_values_at_integer_coords() {
        let map = [0.0, 1.0, 0.25, 0.5];
        assert_eq!(sample_bilinear(&map, (2, 2), 1.0, 0.0), 0.25);
        assert_eq!(sample_bilinear(&map, (2, 2), 0.5, 0.5), 0.4375);
    }

    #[test]
    fn box_border_is_yellow() {
        let mut img = RgbImage::new(10, 10);
        draw_box(&mut img, &FovBox { y: 2, x: 3, h: 4, w: 5 });
        assert_eq!(*img.get_pixel(3, 2), BOX_COLOR);
        assert_eq!(*img.get_pixel(7, 5), BOX_COLOR);
        assert_eq!(*img.get_pixel(5, 3), Rgb([0, 0, 0]));
    }
}
