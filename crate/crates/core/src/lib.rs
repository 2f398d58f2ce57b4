//! Inference engine for a small deterministic image generator whose
//! per-layer activation functions can be swapped for parametric families
//! (SinLU, ReLUN, ShiLU, sigmoid polynomials) at render time.

pub mod activation;
pub mod image;
pub mod kernels;
pub mod model;
pub mod patch;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod weights;

pub use activation::{
    eval_scalar, eval_tensor, param_schema, sample_curve, Activation, ActivationError,
    ActivationKind, ActivationSpec, ParamSchema,
};
pub use image::{to_image, ImageBuffer, ImageFormat};
pub use model::{build_toy_generator, GeneratorConfig, LayerDescriptor, ModelGraph};
pub use patch::{LatentEdits, PatchError, PatchSet, ValidationReport};
pub use render::{Engine, RenderError, Sweep};
pub use rng::{normal_vector, DeterministicRng};
pub use tensor::{Tensor, TensorError};
pub use weights::{random_init, WeightTable, WeightsError};
