use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    MaxPool,
    AvgPool,
    Relu,
    Fc,
    Flatten,
    Softmax,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv => "conv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::Relu => "relu",
            LayerKind::Fc => "fc",
            LayerKind::Flatten => "flatten",
            LayerKind::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

/// One entry of a layer schedule. `kernel`, `stride` and `padding` only
/// matter for conv and pooling layers, `out_channels` for conv and fc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    fn plain(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            kernel: 1,
            stride: 1,
            padding: 0,
            out_channels: 0,
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding,
            out_channels,
        }
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kernel,
            stride,
            ..Self::plain(LayerKind::MaxPool)
        }
    }

    pub fn avg_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kernel,
            stride,
            ..Self::plain(LayerKind::AvgPool)
        }
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn fc(out_features: usize) -> Self {
        LayerSpec {
            out_channels: out_features,
            ..Self::plain(LayerKind::Fc)
        }
    }

    pub fn flatten() -> Self {
        Self::plain(LayerKind::Flatten)
    }

    pub fn softmax() -> Self {
        Self::plain(LayerKind::Softmax)
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::Fc)
    }

    /// Conv and pooling layers slide a window over a spatial map.
    pub fn is_windowed(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::MaxPool | LayerKind::AvgPool)
    }

    /// Output shape for a given input shape, validating the layer's
    /// parameters along the way.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: String| Error::InvalidSchedule { index, reason };
        match self.kind {
            LayerKind::Conv | LayerKind::MaxPool | LayerKind::AvgPool => {
                let &[c, h, w] = input else {
                    return Err(bad(format!("{} needs a [c, h, w] input, got {input:?}", self.kind)));
                };
                if self.kernel == 0 || self.stride == 0 {
                    return Err(bad("kernel and stride must be >= 1".into()));
                }
                if self.kind != LayerKind::Conv && self.padding != 0 {
                    return Err(bad("pooling layers take no padding".into()));
                }
                let out = |n: usize| -> Result<usize> {
                    let padded = n + 2 * self.padding;
                    if padded < self.kernel {
                        return Err(bad(format!(
                            "kernel {} larger than padded input {}",
                            self.kernel, padded
                        )));
                    }
                    Ok((padded - self.kernel) / self.stride + 1)
                };
                let channels = if self.kind == LayerKind::Conv {
                    if self.out_channels == 0 {
                        return Err(bad("conv needs out_channels >= 1".into()));
                    }
                    self.out_channels
                } else {
                    c
                };
                Ok(vec![channels, out(h)?, out(w)?])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Fc => {
                if input.len() != 1 {
                    return Err(bad(format!("fc needs a flat input, got {input:?}")));
                }
                if self.out_channels == 0 {
                    return Err(bad("fc needs out_channels >= 1".into()));
                }
                Ok(vec![self.out_channels])
            }
            LayerKind::Softmax => {
                if input.len() != 1 {
                    return Err(bad(format!("softmax needs a flat input, got {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Output shape of every layer of a schedule, checking that the schedule
/// chains and ends in its only softmax.
pub fn infer_shapes(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if layers.is_empty() {
        return Err(Error::InvalidSchedule {
            index: 0,
            reason: "empty schedule".into(),
        });
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        if layer.kind == LayerKind::Softmax && i + 1 != layers.len() {
            return Err(Error::InvalidSchedule {
                index: i,
                reason: "softmax must be the last layer".into(),
            });
        }
        current = layer.output_shape(i, &current)?;
        shapes.push(current.clone());
    }
    if layers.last().map(|l| l.kind) != Some(LayerKind::Softmax) {
        return Err(Error::InvalidSchedule {
            index: layers.len() - 1,
            reason: "schedule must end in a softmax".into(),
        });
    }
    Ok(shapes)
}
