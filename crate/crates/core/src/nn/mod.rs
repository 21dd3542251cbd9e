//! From-scratch CNN engine: tensors, layer kernels, presets, SGD training,
//! gradient checking, feature taps and pooling surgery.

mod features;
mod gradcheck;
mod layer;
mod model;
pub mod ops;
mod persist;
mod tensor;
mod train;

pub use features::{extract_features, Tap, TapPoint};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport, GroupError, GRAD_CHECK_TOLERANCE};
pub use layer::{infer_shapes, LayerKind, LayerSpec};
pub use model::{Activations, Gradients, Model, Params, Preset};
pub use ops::conv2d as conv2d_forward;
pub use persist::{read_model, write_model};
pub use tensor::{Scalar, Tensor};
pub use train::{model_accuracy, train_sgd, train_sgd_with, PatchSource, TrainConfig, TrainOutcome};
