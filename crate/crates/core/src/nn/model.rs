use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{infer_shapes, LayerKind, LayerSpec};
use super::ops::{self, Window};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Built-in layer schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 3x64x64 desk-scale network; conv3 is the assigned layer.
    MiniAlex,
    /// 3x227x227 AlexNet geometry without local response normalization.
    Alexnet,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::MiniAlex => "mini_alex",
            Preset::Alexnet => "alexnet",
        }
    }

    pub fn input_shape(self) -> [usize; 3] {
        match self {
            Preset::MiniAlex => [3, 64, 64],
            Preset::Alexnet => [3, 227, 227],
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        use LayerSpec as L;
        match self {
            Preset::MiniAlex => vec![
                L::conv(16, 5, 1, 2),
                L::relu(),
                L::max_pool(2, 2),
                L::conv(32, 5, 1, 2),
                L::relu(),
                L::max_pool(2, 2),
                L::conv(32, 3, 1, 1),
                L::relu(),
                L::max_pool(2, 2),
                L::flatten(),
                L::fc(128),
                L::relu(),
                L::fc(2),
                L::softmax(),
            ],
            Preset::Alexnet => vec![
                L::conv(96, 11, 4, 0),
                L::relu(),
                L::max_pool(3, 2),
                L::conv(256, 5, 1, 2),
                L::relu(),
                L::max_pool(3, 2),
                L::conv(384, 3, 1, 1),
                L::relu(),
                L::conv(384, 3, 1, 1),
                L::relu(),
                L::conv(256, 3, 1, 1),
                L::relu(),
                L::max_pool(3, 2),
                L::flatten(),
                L::fc(4096),
                L::relu(),
                L::fc(4096),
                L::relu(),
                L::fc(2),
                L::softmax(),
            ],
        }
    }

    pub fn build(self, seed: u64) -> Model<f32> {
        Model::new(self.name(), self.input_shape(), self.layers(), seed).expect("preset schedules are valid")
    }
}

/// Weights and bias of one conv or fc layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Params<T> {
    fn zeros_like(&self) -> Self {
        Params {
            weight: Tensor::zeros(self.weight.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
        }
    }
}

/// A layer schedule together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    name: String,
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<Params<T>>>,
    seed: u64,
}

/// Per-layer outputs of one forward pass; the last entry holds the class
/// probabilities.
#[derive(Debug, Clone)]
pub struct Activations<T = f32> {
    pub input: Tensor<T>,
    pub outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> Activations<T> {
    pub fn probabilities(&self) -> &[T] {
        self.outputs.last().expect("non-empty schedule").data()
    }

    /// Input to layer `index`.
    pub fn layer_input(&self, index: usize) -> &Tensor<T> {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.probabilities())
    }
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradients laid out like the model's parameters.
pub type Gradients<T> = Vec<Option<Params<T>>>;

fn he_uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("sized")
}

fn init_params<T: Scalar>(layer: &LayerSpec, input: &[usize], rng: &mut ChaCha8Rng) -> Option<Params<T>> {
    match layer.kind {
        LayerKind::Conv => {
            let c = input[0];
            let k = layer.kernel;
            Some(Params {
                weight: he_uniform(vec![layer.out_channels, c, k, k], c * k * k, rng),
                bias: Tensor::zeros(vec![layer.out_channels]),
            })
        }
        LayerKind::Fc => {
            let d = input[0];
            Some(Params {
                weight: he_uniform(vec![layer.out_channels, d], d, rng),
                bias: Tensor::zeros(vec![layer.out_channels]),
            })
        }
        _ => None,
    }
}

/// Generator for the parameters of layer `index`: one stream per layer so
/// re-initializing a single layer never disturbs the others.
fn layer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

impl<T: Scalar> Model<T> {
    /// Validates the schedule and draws He-uniform weights (zero biases)
    /// from `seed`.
    pub fn new(name: impl Into<String>, input_shape: [usize; 3], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        let params = layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let input = if i == 0 { &input_shape[..] } else { &shapes[i - 1][..] };
                init_params(l, input, &mut layer_rng(seed, i))
            })
            .collect();
        Ok(Model {
            name: name.into(),
            input_shape,
            layers,
            shapes,
            params,
            seed,
        })
    }

    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(
        name: impl Into<String>,
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        params: Vec<Option<Params<T>>>,
        seed: u64,
    ) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter slots for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            let input = if i == 0 { &input_shape[..] } else { &shapes[i - 1][..] };
            let expected = match layer.kind {
                LayerKind::Conv => Some((
                    vec![layer.out_channels, input[0], layer.kernel, layer.kernel],
                    layer.out_channels,
                )),
                LayerKind::Fc => Some((vec![layer.out_channels, input[0]], layer.out_channels)),
                _ => None,
            };
            match (expected, p) {
                (None, None) => {}
                (Some((w, b)), Some(p)) if p.weight.shape() == w && p.bias.shape() == [b] => {}
                (Some((w, _)), Some(p)) => {
                    return Err(Error::ShapeMismatch {
                        expected: w,
                        actual: p.weight.shape().to_vec(),
                    })
                }
                _ => {
                    return Err(Error::InvalidSchedule {
                        index: i,
                        reason: format!("parameter presence does not match {} layer", layer.kind),
                    })
                }
            }
        }
        Ok(Model {
            name: name.into(),
            input_shape,
            layers,
            shapes,
            params,
            seed,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of every layer.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn params(&self) -> &[Option<Params<T>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params<T>>] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    pub fn input_shape_of(&self, index: usize) -> &[usize] {
        if index == 0 {
            &self.input_shape
        } else {
            &self.shapes[index - 1]
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            name: self.name.clone(),
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weight: p.weight.cast(),
                        bias: p.bias.cast(),
                    })
                })
                .collect(),
            seed: self.seed,
        }
    }

    /// Index of the flatten layer.
    pub fn flatten_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.kind == LayerKind::Flatten)
    }

    /// The last spatial pooling layer before flatten.
    pub fn last_pool_index(&self) -> Option<usize> {
        let end = self.flatten_index().unwrap_or(self.layers.len());
        self.layers[..end]
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::MaxPool | LayerKind::AvgPool))
    }

    /// The "assigned" layer: output of the last conv block (post-ReLU), the
    /// map whose channels are ranked and visualized.
    pub fn assigned_layer(&self) -> Option<usize> {
        let pool = self.last_pool_index()?;
        if pool == 0 {
            return None;
        }
        let prev = pool - 1;
        matches!(self.layers[prev].kind, LayerKind::Relu | LayerKind::Conv).then_some(prev)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Activations<T>> {
        self.forward_until(input, self.layers.len())
    }

    /// Runs the first `count` layers only.
    pub fn forward_until(&self, input: &Tensor<T>, count: usize) -> Result<Activations<T>> {
        if input.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(count);
        for i in 0..count.min(self.layers.len()) {
            let x = if i == 0 { input } else { &outputs[i - 1] };
            let y = self.apply(i, x)?;
            outputs.push(y);
        }
        Ok(Activations {
            input: input.clone(),
            outputs,
        })
    }

    fn apply(&self, i: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let l = &self.layers[i];
        match l.kind {
            LayerKind::Conv => {
                let p = self.params[i].as_ref().expect("conv params");
                ops::conv2d(x, &p.weight, Some(&p.bias), l.stride, l.padding)
            }
            LayerKind::MaxPool => ops::max_pool(x, l.kernel, l.stride),
            LayerKind::AvgPool => ops::avg_pool(x, l.kernel, l.stride),
            LayerKind::Relu => Ok(ops::relu(x)),
            LayerKind::Flatten => x.clone().reshaped(vec![x.len()]),
            LayerKind::Fc => {
                let p = self.params[i].as_ref().expect("fc params");
                ops::fc(x, &p.weight, &p.bias)
            }
            LayerKind::Softmax => Ok(ops::softmax(x)),
        }
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.params.iter().map(|p| p.as_ref().map(Params::zeros_like)).collect()
    }

    /// Cross-entropy loss of a completed forward pass.
    pub fn loss(acts: &Activations<T>, label: usize) -> T {
        // log-sum-exp over the logits; stays finite where p underflows
        let logits = acts.layer_input(acts.outputs.len() - 1).data();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        lse - logits[label]
    }

    /// Backpropagates softmax cross-entropy for `label`, adding parameter
    /// gradients into `grads`. Returns the loss.
    pub fn backward(&self, acts: &Activations<T>, label: usize, grads: &mut Gradients<T>) -> Result<T> {
        let n = self.layers.len();
        if acts.outputs.len() != n {
            return Err(Error::InvalidArgument("backward needs a complete forward pass".into()));
        }
        let probs = acts.probabilities();
        if label >= probs.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                probs.len()
            )));
        }
        let loss = Self::loss(acts, label);
        // softmax + cross-entropy: dL/dlogits = p - onehot
        let mut grad: Vec<T> = probs.to_vec();
        grad[label] -= T::one();
        let first_param = self.params.iter().position(Option::is_some).unwrap_or(n);
        for i in (0..n - 1).rev() {
            let l = &self.layers[i];
            let x = acts.layer_input(i);
            let need_input = i > first_param;
            grad = match l.kind {
                LayerKind::Conv => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = grads[i].as_mut().expect("conv grads");
                    let win = Window {
                        kernel: l.kernel,
                        stride: l.stride,
                        padding: l.padding,
                    };
                    match ops::conv2d_backward(
                        x,
                        &p.weight,
                        win,
                        &grad,
                        g.weight.data_mut(),
                        g.bias.data_mut(),
                        need_input,
                    )? {
                        Some(d) => d.into_data(),
                        None => break,
                    }
                }
                LayerKind::Fc => {
                    let p = self.params[i].as_ref().expect("fc params");
                    let g = grads[i].as_mut().expect("fc grads");
                    match ops::fc_backward(x, &p.weight, &grad, g.weight.data_mut(), g.bias.data_mut(), need_input) {
                        Some(d) => d.into_data(),
                        None => break,
                    }
                }
                LayerKind::MaxPool => ops::max_pool_backward(x, l.kernel, l.stride, &grad)?.into_data(),
                LayerKind::AvgPool => ops::avg_pool_backward(x.shape(), l.kernel, l.stride, &grad)?.into_data(),
                LayerKind::Relu => ops::relu_backward(x, &grad).into_data(),
                LayerKind::Flatten => grad,
                LayerKind::Softmax => unreachable!("softmax is only the final layer"),
            };
            if i <= first_param {
                break;
            }
        }
        Ok(loss)
    }

    /// Replaces the max pool at `index` with an average pool spanning its
    /// whole input map, producing a `C x 1 x 1` output. Layers before the
    /// swap keep their parameters bit for bit; downstream fc layers whose
    /// input size changed are re-initialized from the model seed.
    pub fn swap_pooling(&self, index: usize) -> Result<Model<T>> {
        let layer = self.layers.get(index).ok_or(Error::InvalidSchedule {
            index,
            reason: "index past the end of the schedule".into(),
        })?;
        if layer.kind != LayerKind::MaxPool {
            return Err(Error::NotMaxPool {
                index,
                kind: layer.kind.to_string(),
            });
        }
        let input = self.input_shape_of(index);
        let &[_, h, w] = input else {
            return Err(Error::NotSpatial { index });
        };
        if h != w {
            return Err(Error::InvalidArgument(format!(
                "global average pool needs a square map, got {h}x{w}"
            )));
        }
        let mut layers = self.layers.clone();
        layers[index] = LayerSpec::avg_pool(h, h);
        let shapes = infer_shapes(self.input_shape, &layers)?;
        let mut params = self.params.clone();
        for i in index + 1..layers.len() {
            let new_in = &shapes[i - 1];
            let old_in = self.input_shape_of(i);
            if layers[i].has_params() && new_in.as_slice() != old_in {
                params[i] = init_params(&layers[i], new_in, &mut layer_rng(self.seed ^ 0x5A17, i));
            }
        }
        Ok(Model {
            name: format!("{}+gap", self.name),
            input_shape: self.input_shape,
            layers,
            shapes,
            params,
            seed: self.seed,
        })
    }

    /// Applies one SGD-with-momentum step: `v = μv + g + λw`, `w -= lr·v`.
    pub(crate) fn sgd_step(
        &mut self,
        grads: &Gradients<T>,
        velocity: &mut Gradients<T>,
        scale: T,
        lr: T,
        momentum: T,
        weight_decay: T,
    ) {
        for ((p, g), v) in self.params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            let (Some(p), Some(g), Some(v)) = (p.as_mut(), g.as_ref(), v.as_mut()) else {
                continue;
            };
            let groups = [
                (p.weight.data_mut(), g.weight.data(), v.weight.data_mut(), weight_decay),
                (p.bias.data_mut(), g.bias.data(), v.bias.data_mut(), T::zero()),
            ];
            for (w, g, v, decay) in groups {
                for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                    *v = momentum * *v + g * scale + decay * *w;
                    *w -= lr * *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mini_alex_shapes() {
        let m = Preset::MiniAlex.build(1);
        assert_eq!(m.shapes()[6], vec![32, 16, 16]);
        assert_eq!(m.shapes()[8], vec![32, 8, 8]);
        assert_eq!(m.shapes()[9], vec![2048]);
        assert_eq!(m.assigned_layer(), Some(7));
        assert_eq!(m.last_pool_index(), Some(8));
    }

    #[test]
    fn alexnet_schedule_reaches_6x6x256() {
        let shapes = infer_shapes(Preset::Alexnet.input_shape(), &Preset::Alexnet.layers()).unwrap();
        assert_eq!(shapes[12], vec![256, 6, 6]);
        assert_eq!(shapes[13], vec![9216]);
        assert_eq!(shapes[14], vec![4096]);
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(Preset::MiniAlex.build(9), Preset::MiniAlex.build(9));
        assert_ne!(Preset::MiniAlex.build(9), Preset::MiniAlex.build(10));
    }

    #[test]
    fn biases_start_at_zero() {
        let m = Preset::MiniAlex.build(2);
        for p in m.params().iter().flatten() {
            assert!(p.bias.data().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let m = Preset::MiniAlex.build(2);
        let x = Tensor::zeros(vec![3, 32, 32]);
        assert!(matches!(m.forward(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn swap_rejects_non_maxpool() {
        let m = Preset::MiniAlex.build(2);
        assert!(matches!(m.swap_pooling(6), Err(Error::NotMaxPool { index: 6, .. })));
    }

    #[test]
    fn swap_keeps_upstream_and_reinits_changed_fc() {
        let m = Preset::MiniAlex.build(2);
        let s = m.swap_pooling(8).unwrap();
        assert_eq!(s.layers()[8], LayerSpec::avg_pool(16, 16));
        assert_eq!(s.shapes()[8], vec![32, 1, 1]);
        assert_eq!(s.shapes()[9], vec![32]);
        for i in 0..8 {
            assert_eq!(s.params()[i], m.params()[i]);
            assert_eq!(s.layers()[i], m.layers()[i]);
        }
        assert_eq!(s.params()[10].as_ref().unwrap().weight.shape(), &[128, 32]);
        // fc2's input (128) is unchanged, so it keeps its weights
        assert_eq!(s.params()[12], m.params()[12]);
    }
}
