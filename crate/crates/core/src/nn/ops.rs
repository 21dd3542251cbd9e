//! Forward and backward kernels for every layer kind.
//!
//! Convolution lowers to a GEMM over an im2col buffer. Maps are
//! channel-major `[c, h, w]`; conv weights are `[out, in, k, k]` and fc
//! weights `[out, in]`.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    pub fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("kernel and stride must be >= 1".into()));
        }
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::ShapeMismatch {
                expected: vec![self.kernel, self.kernel],
                actual: vec![h + 2 * self.padding, w + 2 * self.padding],
            });
        }
        Ok(())
    }
}

/// Unfolds `[c, h, w]` into a `(c·k·k) x (ho·wo)` matrix, zero padded.
pub fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, win: Window) -> Vec<T> {
    let (k, s, p) = (win.kernel, win.stride, win.padding);
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let mut cols = vec![T::zero(); c * k * k * ho * wo];
    let mut row = 0;
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            *o = src[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the map.
pub fn col2im_add<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, win: Window, out: &mut [T]) {
    let (k, s, p) = (win.kernel, win.stride, win.padding);
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Cross-correlation of a `[c, h, w]` map with `[o, c, k, k]` kernels.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    let &[o, wc, k, k2] = weight.shape() else {
        return Err(Error::ShapeMismatch {
            expected: vec![0, c, 0, 0],
            actual: weight.shape().to_vec(),
        });
    };
    if wc != c || k != k2 {
        return Err(Error::ShapeMismatch {
            expected: vec![o, c, k, k],
            actual: weight.shape().to_vec(),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(Error::ShapeMismatch {
                expected: vec![o],
                actual: b.shape().to_vec(),
            });
        }
    }
    let win = Window {
        kernel: k,
        stride,
        padding,
    };
    win.check(h, w)?;
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let cols = im2col(input.data(), c, h, w, win);
    let mut out = vec![T::zero(); o * ho * wo];
    if let Some(b) = bias {
        for (plane, &bv) in out.chunks_mut(ho * wo).zip(b.data()) {
            plane.fill(bv);
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    T::gemm(
        o,
        c * k * k,
        ho * wo,
        weight.data(),
        false,
        &cols,
        false,
        &mut out,
        beta,
    );
    Tensor::new(vec![o, ho, wo], out)
}

/// Accumulates conv gradients. Returns the input gradient when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    win: Window,
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let (c, h, w) = input.dims3()?;
    let o = weight.shape()[0];
    let k = win.kernel;
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let hw = ho * wo;
    let ckk = c * k * k;
    let cols = im2col(input.data(), c, h, w, win);
    // dW += dY · colsᵀ
    T::gemm(o, hw, ckk, d_out, false, &cols, true, d_weight, T::one());
    for (db, plane) in d_bias.iter_mut().zip(d_out.chunks(hw)) {
        *db += plane.iter().copied().sum::<T>();
    }
    if !want_input_grad {
        return Ok(None);
    }
    let mut d_cols = vec![T::zero(); ckk * hw];
    T::gemm(ckk, o, hw, weight.data(), true, d_out, false, &mut d_cols, T::zero());
    let mut d_in = vec![T::zero(); c * h * w];
    col2im_add(&d_cols, c, h, w, win, &mut d_in);
    Ok(Some(Tensor::new(vec![c, h, w], d_in)?))
}

/// Max pooling; ties resolve to the row-major-first maximizer.
pub fn max_pool<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    pool(input, kernel, stride, PoolMode::Max)
}

pub fn avg_pool<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    pool(input, kernel, stride, PoolMode::Avg)
}

#[derive(Clone, Copy)]
enum PoolMode {
    Max,
    Avg,
}

fn pool<T: Scalar>(input: &Tensor<T>, k: usize, s: usize, mode: PoolMode) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    let win = Window {
        kernel: k,
        stride: s,
        padding: 0,
    };
    win.check(h, w)?;
    let (ho, wo) = (win.out_len(h), win.out_len(w));
    let scale = T::one() / T::of((k * k) as f64);
    let mut out = Vec::with_capacity(c * ho * wo);
    for ci in 0..c {
        let plane = input.channel(ci);
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = match mode {
                    PoolMode::Max => T::neg_infinity(),
                    PoolMode::Avg => T::zero(),
                };
                for ky in 0..k {
                    let row = &plane[(oy * s + ky) * w + ox * s..][..k];
                    for &v in row {
                        match mode {
                            PoolMode::Max => {
                                if v > acc {
                                    acc = v
                                }
                            }
                            PoolMode::Avg => acc += v,
                        }
                    }
                }
                out.push(match mode {
                    PoolMode::Max => acc,
                    PoolMode::Avg => acc * scale,
                });
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

pub fn max_pool_backward<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize, d_out: &[T]) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    let (ho, wo) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut d_in = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let plane = input.channel(ci);
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = T::neg_infinity();
                let mut at = 0;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = (oy * stride + ky) * w + ox * stride + kx;
                        if plane[idx] > best {
                            best = plane[idx];
                            at = idx;
                        }
                    }
                }
                d_in[ci * h * w + at] += d_out[(ci * ho + oy) * wo + ox];
            }
        }
    }
    Tensor::new(vec![c, h, w], d_in)
}

pub fn avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    kernel: usize,
    stride: usize,
    d_out: &[T],
) -> Result<Tensor<T>> {
    let &[c, h, w] = input_shape else {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0, 0],
            actual: input_shape.to_vec(),
        });
    };
    let (ho, wo) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let scale = T::one() / T::of((kernel * kernel) as f64);
    let mut d_in = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let g = d_out[(ci * ho + oy) * wo + ox] * scale;
                for ky in 0..kernel {
                    let base = ci * h * w + (oy * stride + ky) * w + ox * stride;
                    for v in &mut d_in[base..base + kernel] {
                        *v += g;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), d_in)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let data = input.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, d_out: &[T]) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(d_out)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// `W x + b` for `[out, in]` weights.
pub fn fc<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = input.len();
    let &[o, wd] = weight.shape() else {
        return Err(Error::ShapeMismatch {
            expected: vec![0, d],
            actual: weight.shape().to_vec(),
        });
    };
    if wd != d || bias.len() != o {
        return Err(Error::ShapeMismatch {
            expected: vec![o, d],
            actual: weight.shape().to_vec(),
        });
    }
    let mut out = bias.data().to_vec();
    T::gemm(o, d, 1, weight.data(), false, input.data(), false, &mut out, T::one());
    Tensor::new(vec![o], out)
}

pub fn fc_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Tensor<T>> {
    let d = input.len();
    let o = d_out.len();
    // dW += dy ⊗ x
    T::gemm(o, 1, d, d_out, false, input.data(), false, d_weight, T::one());
    for (db, &g) in d_bias.iter_mut().zip(d_out) {
        *db += g;
    }
    if !want_input_grad {
        return None;
    }
    let mut d_in = vec![T::zero(); d];
    T::gemm(d, o, 1, weight.data(), true, d_out, false, &mut d_in, T::zero());
    Some(Tensor::new(input.shape().to_vec(), d_in).expect("same shape"))
}

pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let max = input.data().iter().copied().fold(T::neg_infinity(), T::max);
    let exp: Vec<T> = input.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exp.iter().copied().sum();
    let data = exp.into_iter().map(|v| v / sum).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::<f32>::new(vec![1, 5, 5], (0..25).map(|v| v as f32).collect()).unwrap();
        let mut k = vec![0.0f32; 9];
        k[4] = 1.0;
        let kernel = Tensor::new(vec![1, 1, 3, 3], k).unwrap();
        let out = conv2d(&input, &kernel, None, 1, 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let input = Tensor::<f32>::filled(vec![1, 5, 5], 1.0);
        let kernel = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let out = conv2d(&input, &kernel, None, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f32>::zeros(vec![3, 8, 8]);
        let kernel = Tensor::zeros(vec![4, 2, 3, 3]);
        match conv2d(&input, &kernel, None, 1, 1) {
            Err(Error::ShapeMismatch { expected, actual }) => {
                assert_eq!(expected, vec![4, 3, 3, 3]);
                assert_eq!(actual, vec![4, 2, 3, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let win = Window {
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let x = random(vec![2, 7, 6], &mut rng);
        let cols = im2col(x.data(), 2, 7, 6, win);
        let y: Vec<f64> = (0..cols.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, 2, 7, 6, win, &mut back);
        let rhs: f64 = x.data().iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn max_pool_tie_goes_to_first() {
        let x = Tensor::<f64>::filled(vec![1, 2, 2], 1.0);
        let g = max_pool_backward(&x, 2, 2, &[5.0]).unwrap();
        assert_eq!(g.data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_normalizes() {
        let x = Tensor::<f64>::new(vec![3], vec![1000.0, 1000.0, -1000.0]).unwrap();
        let p = softmax(&x);
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.data()[0] - 0.5).abs() < 1e-12);
    }
}
