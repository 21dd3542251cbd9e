use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layer::LayerKind;
use super::model::Model;
use super::train::PatchSource;
use crate::error::{Error, Result};
use crate::heads::FeatureMatrix;
use crate::parallel::{self, Execution};

/// Where features are read out of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    /// Flattened output of the last conv block.
    FlatConv,
    /// First fully connected layer, after its ReLU.
    Fc1,
    /// Global-average-pooled channels of a swapped model.
    Gap,
}

impl Tap {
    pub fn as_str(self) -> &'static str {
        match self {
            Tap::FlatConv => "flat_conv",
            Tap::Fc1 => "fc1",
            Tap::Gap => "gap",
        }
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_conv" => Ok(Tap::FlatConv),
            "fc1" => Ok(Tap::Fc1),
            "gap" => Ok(Tap::Gap),
            other => Err(Error::UnknownTap(other.to_string())),
        }
    }
}

/// Resolved tap: the layer whose output is read, plus column provenance.
#[derive(Debug, Clone)]
pub struct TapPoint {
    pub tap: Tap,
    pub layer: usize,
    pub provenance: Vec<(u32, u32)>,
}

impl TapPoint {
    pub fn dim(&self) -> usize {
        self.provenance.len()
    }
}

impl<T: crate::nn::Scalar> Model<T> {
    /// `true` when the last pooling stage averages the full map to 1x1.
    pub fn is_gap_model(&self) -> bool {
        self.last_pool_index()
            .is_some_and(|i| self.layers()[i].kind == LayerKind::AvgPool && self.shapes()[i][1..] == [1, 1])
    }

    pub fn tap_point(&self, tap: Tap) -> Result<TapPoint> {
        let layers = self.layers();
        match tap {
            Tap::FlatConv | Tap::Gap => {
                if tap == Tap::Gap && !self.is_gap_model() {
                    return Err(Error::UnknownTap(format!(
                        "gap (model `{}` has no global average pool)",
                        self.name()
                    )));
                }
                let flat = self.flatten_index().ok_or_else(|| Error::UnknownTap(tap.to_string()))?;
                let map = self.input_shape_of(flat);
                let plane: usize = map[1..].iter().product();
                let d = self.shapes()[flat][0];
                let provenance = (0..d).map(|i| ((i / plane) as u32, (i % plane) as u32)).collect();
                Ok(TapPoint {
                    tap,
                    layer: flat,
                    provenance,
                })
            }
            Tap::Fc1 => {
                let fc = layers
                    .iter()
                    .position(|l| l.kind == LayerKind::Fc)
                    .ok_or_else(|| Error::UnknownTap(tap.to_string()))?;
                if fc + 2 >= layers.len() {
                    // the only fc is the classifier itself
                    return Err(Error::UnknownTap(format!(
                        "fc1 (model `{}` has a single fc layer)",
                        self.name()
                    )));
                }
                let layer = if layers[fc + 1].kind == LayerKind::Relu {
                    fc + 1
                } else {
                    fc
                };
                let d = self.shapes()[layer][0];
                Ok(TapPoint {
                    tap,
                    layer,
                    provenance: (0..d as u32).map(|u| (u, 0)).collect(),
                })
            }
        }
    }
}

/// Reads the tap activation of every patch. Row `i` belongs to patch `i`.
pub fn extract_features<S: PatchSource + ?Sized>(
    model: &Model<f32>,
    tap: Tap,
    patches: &S,
    exec: Execution,
) -> Result<FeatureMatrix> {
    let point = model.tap_point(tap)?;
    let d = point.dim();
    let rows = parallel::try_map_range(exec, patches.len(), |i| {
        let acts = model.forward_until(&patches.patch(i), point.layer + 1)?;
        Ok::<_, Error>(acts.outputs[point.layer].data().to_vec())
    })?;
    let labels = (0..patches.len()).map(|i| patches.label(i) as u8).collect();
    let data = rows.into_iter().flatten().collect();
    FeatureMatrix::new(patches.len(), d, data, labels, tap.as_str(), point.provenance)
}
