#![allow(dead_code)]

use std::collections::BTreeSet;

use activscope::nn::{Model, Preset, Tensor};
use activscope::parallel::{map_range, Execution};
use activscope::scope::{fov_box, geometry_at, rank_channels, score_patches, ChannelRanking, FovBox, LayerGeometry};
use activscope::synth::{
    generate_scenes, sample_split, AnnotatedScene, DatasetManifest, PatchRequest, SceneSpec, Split,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Copy of `model` with every weight 1 and every bias 0. On a non-negative
/// input a neuron is non-zero exactly when a non-zero pixel lies in its
/// receptive field.
pub fn support_model(model: &Model<f32>) -> Model<f32> {
    let mut m = model.clone();
    for p in m.params_mut().iter_mut().flatten() {
        p.weight.data_mut().fill(1.0);
        p.bias.data_mut().fill(0.0);
    }
    m
}

/// Input with the listed pixels set to 1 in every channel, 0 elsewhere.
pub fn pixels_on(model: &Model<f32>, pixels: impl IntoIterator<Item = (usize, usize)>) -> Tensor<f32> {
    let [c, h, w] = model.input_shape();
    let mut t = Tensor::zeros(vec![c, h, w]);
    for (y, x) in pixels {
        for ch in 0..c {
            t.data_mut()[(ch * h + y) * w + x] = 1.0;
        }
    }
    t
}

/// Value of channel 0 at `(y, x)` of layer `layer`'s output.
pub fn neuron(model: &Model<f32>, input: &Tensor<f32>, layer: usize, (y, x): (usize, usize)) -> f32 {
    let acts = model.forward_until(input, layer + 1).unwrap();
    let map = &acts.outputs[layer];
    map.data()[y * map.shape()[2] + x]
}

/// Bounding box of the input pixels each neuron of `layer` responds to, by
/// switching on one pixel at a time.
pub fn occlusion_boxes(model: &Model<f32>, layers: usize) -> Vec<Vec<Option<FovBox>>> {
    let probe = support_model(model);
    let [_, h, w] = model.input_shape();
    let hits = map_range(Execution::Parallel, h * w, |p| {
        let (y, x) = (p / w, p % w);
        let acts = probe.forward_until(&pixels_on(&probe, [(y, x)]), layers).unwrap();
        let mut out = Vec::new();
        for (l, map) in acts.outputs.iter().enumerate() {
            let area = map.shape()[1] * map.shape()[2];
            for (i, &v) in map.data()[..area].iter().enumerate() {
                if v > 0.0 {
                    out.push((l, i));
                }
            }
        }
        out
    });
    let mut boxes: Vec<Vec<Option<(usize, usize, usize, usize)>>> = (0..layers)
        .map(|l| vec![None; model.shapes()[l][1] * model.shapes()[l][2]])
        .collect();
    for (p, list) in hits.into_iter().enumerate() {
        let (y, x) = (p / w, p % w);
        for (l, i) in list {
            let b = boxes[l][i].get_or_insert((y, y, x, x));
            *b = (b.0.min(y), b.1.max(y), b.2.min(x), b.3.max(x));
        }
    }
    boxes
        .into_iter()
        .map(|layer| {
            layer
                .into_iter()
                .map(|b| {
                    b.map(|(y0, y1, x0, x1)| FovBox {
                        y: y0,
                        x: x0,
                        h: y1 - y0 + 1,
                        w: x1 - x0 + 1,
                    })
                })
                .collect()
        })
        .collect()
}

/// Checks `count` random neurons of `layer`: switching on every pixel
/// outside the FOV must leave the neuron at 0, and each of two opposite FOV
/// corners alone must reach it. Returns one message per violation.
pub fn fov_violations(model: &Model<f32>, probe: &Model<f32>, layer: usize, count: usize, seed: u64) -> Vec<String> {
    let g = geometry_at(model, layer).unwrap();
    let [c, rows, cols] = [model.shapes()[layer][0], g.map.0, g.map.1];
    let [_, h, w] = model.input_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neurons: Vec<(usize, usize, usize)> = (0..count)
        .map(|_| (rng.gen_range(0..c), rng.gen_range(0..rows), rng.gen_range(0..cols)))
        .collect();
    let positions: BTreeSet<(usize, usize)> = neurons.iter().map(|&(_, y, x)| (y, x)).collect();
    let minimal: BTreeSet<(usize, usize)> = positions.iter().copied().step_by(8).collect();
    let positions: Vec<(usize, usize)> = positions.into_iter().collect();
    map_range(Execution::Parallel, positions.len(), |i| {
        let pos = positions[i];
        let b = fov_box(&g, pos, (h, w)).unwrap();
        let outside = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| !b.contains(y, x));
        let acts = probe.forward_until(&pixels_on(probe, outside), layer + 1).unwrap();
        let map = &acts.outputs[layer];
        let mut out = Vec::new();
        let untouched = neurons
            .iter()
            .filter(|&&(_, y, x)| (y, x) == pos)
            .all(|&(ch, y, x)| map.data()[(ch * rows + y) * cols + x] == 0.0);
        if !untouched {
            out.push(format!("layer {layer} neuron {pos:?} responds outside its FOV"));
        }
        if minimal.contains(&pos) {
            for corner in [(b.y, b.x), (b.y + b.h - 1, b.x + b.w - 1)] {
                if neuron(probe, &pixels_on(probe, [corner]), layer, pos) <= 0.0 {
                    out.push(format!("layer {layer} neuron {pos:?} ignores FOV corner {corner:?}"));
                }
            }
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

/// MiniAlex with channel 0 of the assigned layer wired as a lymphocyte
/// detector: conv1 thresholds blue minus red, conv2 and conv3 sum the
/// thresholded response over their windows. All other weights are 0.
pub fn matched_filter_model() -> Model<f32> {
    let mut m = Preset::MiniAlex.build(0);
    for p in m.params_mut().iter_mut().flatten() {
        p.weight.data_mut().fill(0.0);
        p.bias.data_mut().fill(0.0);
    }
    let params = m.params_mut();
    {
        let p = params[0].as_mut().unwrap();
        let k = 5;
        let at = |ch: usize, y: usize, x: usize| (ch * k + y) * k + x;
        p.weight.data_mut()[at(2, 2, 2)] = 1.0;
        p.weight.data_mut()[at(0, 2, 2)] = -1.0;
        p.bias.data_mut()[0] = -0.2;
    }
    for layer in [3, 6] {
        let p = params[layer].as_mut().unwrap();
        let shape = p.weight.shape().to_vec();
        let per_in = shape[2] * shape[3];
        p.weight.data_mut()[..per_in].fill(1.0);
    }
    m
}

pub struct SyntheticSplit {
    pub scenes: Vec<AnnotatedScene>,
    pub data: DatasetManifest,
}

/// `scenes` default scenes sampled with `per_class` patches per class each.
pub fn synthetic_split(seed: u64, scenes: usize, per_class: usize) -> SyntheticSplit {
    let spec = SceneSpec {
        seed,
        ..SceneSpec::default()
    };
    let scenes = generate_scenes(&spec, 0, scenes, Execution::Parallel).unwrap();
    let req = PatchRequest {
        patch_size: 64,
        n_pos: per_class,
        n_neg: per_class,
        tau: 0.8,
        grid_stride: 8,
        seed,
        split: Split::Test,
    };
    let data = sample_split(&scenes, &req).unwrap();
    SyntheticSplit { scenes, data }
}

/// Top-`k` rankings of every channel of `layer`.
pub fn rank_layer(
    model: &Model<f32>,
    layer: usize,
    data: &DatasetManifest,
    k: usize,
) -> (LayerGeometry, Vec<ChannelRanking>) {
    let geometry = geometry_at(model, layer).unwrap();
    let scores = score_patches(model, layer, data, Execution::Parallel).unwrap();
    let channels = model.shapes()[layer][0];
    let dims = (data.patch_size, data.patch_size);
    let rankings = rank_channels(&scores, channels, k, &geometry, dims, Execution::Parallel).unwrap();
    (geometry, rankings)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

pub fn direct_conv(x: &Tensor<f32>, w: &Tensor<f32>, b: &Tensor<f32>, stride: usize, pad: usize) -> Vec<f32> {
    let [c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    let [o, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(o * ho * wo);
    for oc in 0..o {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = b.data()[oc] as f64;
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            let xv = x.data()[(ic * h + iy as usize) * wd + ix as usize] as f64;
                            let wv = w.data()[((oc * c + ic) * k + ky) * k + kx] as f64;
                            acc += xv * wv;
                        }
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    out
}

pub fn direct_pool(x: &Tensor<f32>, k: usize, stride: usize, max: bool) -> Vec<f32> {
    let [c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    let (ho, wo) = ((h - k) / stride + 1, (w - k) / stride + 1);
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let window = (0..k).flat_map(|ky| (0..k).map(move |kx| (oy * stride + ky, ox * stride + kx)));
                let values: Vec<f32> = window.map(|(y, xx)| x.data()[(ch * h + y) * w + xx]).collect();
                out.push(if max {
                    values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
                } else {
                    (values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64) as f32
                });
            }
        }
    }
    out
}
