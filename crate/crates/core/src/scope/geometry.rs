use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerKind, Model, Scalar};
use crate::synth::BBox;

/// Receptive-field geometry of one layer's output map, in input pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub layer: usize,
    pub kind: LayerKind,
    /// Receptive field side.
    pub r: usize,
    /// Distance between FOV centers of adjacent neurons.
    pub j: usize,
    /// FOV center of neuron (0, 0); fractional for even fields.
    pub start: f64,
    /// Output map `(rows, cols)`.
    pub map: (usize, usize),
}

/// Geometry after every layer `0..=index`, by the recurrence
/// `r' = r + (k−1)·j`, `j' = j·s`, `start' = start + ((k−1)/2 − pad)·j`,
/// starting from `r = j = 1`, `start = 0` at the input. ReLU passes the
/// geometry through; pools are treated like convs.
pub fn layer_geometry<T: Scalar>(model: &Model<T>, index: usize) -> Result<Vec<LayerGeometry>> {
    let end = model.flatten_index().unwrap_or(model.layers().len());
    if index >= end {
        return Err(Error::NotSpatial { index });
    }
    let (mut r, mut j, mut start) = (1usize, 1usize, 0.0f64);
    let mut chain = Vec::with_capacity(index + 1);
    for (i, l) in model.layers()[..=index].iter().enumerate() {
        if l.is_windowed() {
            start += ((l.kernel as f64 - 1.0) / 2.0 - l.padding as f64) * j as f64;
            r += (l.kernel - 1) * j;
            j *= l.stride;
        }
        let shape = &model.shapes()[i];
        chain.push(LayerGeometry {
            layer: i,
            kind: l.kind,
            r,
            j,
            start,
            map: (shape[1], shape[2]),
        });
    }
    Ok(chain)
}

/// Geometry of layer `index` alone.
pub fn geometry_at<T: Scalar>(model: &Model<T>, index: usize) -> Result<LayerGeometry> {
    Ok(*layer_geometry(model, index)?.last().expect("non-empty chain"))
}

/// A FOV rectangle clipped to the patch, in input pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FovBox {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

impl FovBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y && y < self.y + self.h && x >= self.x && x < self.x + self.w
    }

    pub fn to_bbox(self) -> BBox {
        BBox {
            y: self.y as i64,
            x: self.x as i64,
            h: self.h as i64,
            w: self.w as i64,
        }
    }
}

fn check_neuron(geometry: &LayerGeometry, neuron: (usize, usize)) -> Result<()> {
    let (rows, cols) = geometry.map;
    if neuron.0 >= rows || neuron.1 >= cols {
        return Err(Error::NeuronOutOfRange {
            row: neuron.0,
            col: neuron.1,
            rows,
            cols,
        });
    }
    Ok(())
}

/// The `r x r` square centered on the neuron's FOV center, before clipping.
pub fn fov_unclipped(geometry: &LayerGeometry, neuron: (usize, usize)) -> Result<BBox> {
    check_neuron(geometry, neuron)?;
    let half = (geometry.r as f64 - 1.0) / 2.0;
    let top = |p: usize| (geometry.start + (p * geometry.j) as f64 - half).floor() as i64;
    Ok(BBox {
        y: top(neuron.0),
        x: top(neuron.1),
        h: geometry.r as i64,
        w: geometry.r as i64,
    })
}

/// FOV of `neuron` clipped to a `patch = (height, width)` input.
pub fn fov_box(geometry: &LayerGeometry, neuron: (usize, usize), patch: (usize, usize)) -> Result<FovBox> {
    let b = fov_unclipped(geometry, neuron)?;
    let clip = |lo: i64, len: i64, limit: usize| {
        let a = lo.clamp(0, limit as i64);
        let b = (lo + len).clamp(0, limit as i64);
        (a as usize, (b - a) as usize)
    };
    let (y, h) = clip(b.y, b.h, patch.0);
    let (x, w) = clip(b.x, b.w, patch.1);
    Ok(FovBox { y, x, h, w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Preset};

    #[test]
    fn single_conv_sees_its_kernel() {
        let layers = vec![
            LayerSpec::conv(1, 3, 1, 1),
            LayerSpec::flatten(),
            LayerSpec::fc(2),
            LayerSpec::softmax(),
        ];
        let m = Model::<f32>::new("one", [1, 8, 8], layers, 0).unwrap();
        let g = geometry_at(&m, 0).unwrap();
        assert_eq!((g.r, g.j, g.start), (3, 1, 0.0));
        let b = fov_box(&g, (0, 0), (8, 8)).unwrap();
        assert_eq!(b, FovBox { y: 0, x: 0, h: 2, w: 2 });
        assert_eq!(fov_box(&g, (4, 4), (8, 8)).unwrap(), FovBox { y: 3, x: 3, h: 3, w: 3 });
    }

    #[test]
    fn preset_values() {
        let mini = Preset::MiniAlex.build(0);
        let g = geometry_at(&mini, 7).unwrap();
        assert_eq!((g.r, g.j, g.start, g.map), (24, 4, 1.5, (16, 16)));
        let alex = Preset::Alexnet.build(0);
        let g = geometry_at(&alex, 11).unwrap();
        assert_eq!((g.r, g.j, g.start), (163, 16, 17.0));
        let g = geometry_at(&alex, 12).unwrap();
        assert_eq!((g.r, g.j), (195, 32));
    }

    #[test]
    fn past_flatten_is_an_error() {
        let mini = Preset::MiniAlex.build(0);
        assert!(matches!(layer_geometry(&mini, 9), Err(Error::NotSpatial { index: 9 })));
    }

    #[test]
    fn out_of_range_neuron() {
        let mini = Preset::MiniAlex.build(0);
        let g = geometry_at(&mini, 7).unwrap();
        assert!(matches!(
            fov_box(&g, (16, 0), (64, 64)),
            Err(Error::NeuronOutOfRange { row: 16, .. })
        ));
        let b = fov_box(&g, (8, 8), (64, 64)).unwrap();
        assert_eq!(
            b,
            FovBox {
                y: 22,
                x: 22,
                h: 24,
                w: 24
            }
        );
    }
}
