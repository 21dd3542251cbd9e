//! Central finite-difference check of the backward pass, run in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Default pass threshold for the maximum relative error.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-3;

/// Coordinates probed per parameter group when a group is larger.
pub const PROBES_PER_GROUP: usize = 48;

/// Absolute floor of the relative-error denominator; keeps round-off on
/// near-zero gradients from reading as a large relative error.
const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub layer: usize,
    /// `"weight"` or `"bias"`.
    pub group: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backprop gradients with central differences for every
/// parameter group (each layer's weights and biases).
pub fn grad_check<T: Scalar>(
    model: &Model<T>,
    input: &Tensor<T>,
    label: usize,
    epsilon: f64,
) -> Result<GradCheckReport> {
    grad_check_with(model, input, label, epsilon, GRAD_CHECK_TOLERANCE, 0)
}

pub fn grad_check_with<T: Scalar>(
    model: &Model<T>,
    input: &Tensor<T>,
    label: usize,
    epsilon: f64,
    tolerance: f64,
    probe_seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-5..=1e-2).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-5, 1e-2]"
        )));
    }
    let mut m: Model<f64> = model.cast();
    let x: Tensor<f64> = input.cast();
    let acts = m.forward(&x)?;
    let mut grads = m.zero_gradients();
    m.backward(&acts, label, &mut grads)?;

    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let mut groups = Vec::new();
    for layer in 0..m.layers().len() {
        let Some(g) = grads[layer].clone() else {
            continue;
        };
        for (name, analytic) in [("weight", g.weight.data()), ("bias", g.bias.data())] {
            let len = analytic.len();
            let probes: Vec<usize> = if len <= PROBES_PER_GROUP {
                (0..len).collect()
            } else {
                let mut v = sample(&mut rng, len, PROBES_PER_GROUP).into_vec();
                v.sort_unstable();
                v
            };
            let mut worst = 0.0f64;
            for &idx in &probes {
                let numeric = {
                    let original = param_at(&m, layer, name, idx);
                    set_param(&mut m, layer, name, idx, original + epsilon);
                    let plus = Model::loss(&m.forward(&x)?, label);
                    set_param(&mut m, layer, name, idx, original - epsilon);
                    let minus = Model::loss(&m.forward(&x)?, label);
                    set_param(&mut m, layer, name, idx, original);
                    (plus - minus) / (2.0 * epsilon)
                };
                worst = worst.max(relative_error(analytic[idx], numeric));
            }
            groups.push(GroupError {
                layer,
                group: name.to_string(),
                checked: probes.len(),
                max_rel_error: worst,
            });
        }
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_rel_error,
        tolerance,
        pass: max_rel_error <= tolerance,
    })
}

fn param_at(m: &Model<f64>, layer: usize, group: &str, idx: usize) -> f64 {
    let p = m.params()[layer].as_ref().expect("param layer");
    match group {
        "weight" => p.weight.data()[idx],
        _ => p.bias.data()[idx],
    }
}

fn set_param(m: &mut Model<f64>, layer: usize, group: &str, idx: usize, value: f64) {
    let p = m.params_mut()[layer].as_mut().expect("param layer");
    match group {
        "weight" => p.weight.data_mut()[idx] = value,
        _ => p.bias.data_mut()[idx] = value,
    }
}
