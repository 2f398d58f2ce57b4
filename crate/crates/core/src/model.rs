//! The toy generator: a mapping MLP followed by progressive synthesis blocks
//! whose RGB outputs are upsampled and summed.
//!
//! Layer order (default config):
//!
//! ```text
//! map.0 .. map.3                      dense, LeakyReLU(0.2)
//! per block b = 0..3:
//!   syn.b.latent                      dense projection of the mapped latent, no activation
//!   syn.b.conv                        3×3 conv, LeakyReLU(0.2)
//!   syn.b.torgb                       1×1 projection to RGB, tanh
//! ```
//!
//! Block 0 starts from a learned constant feature map; block `b > 0` starts
//! from the upsampled features of block `b − 1`. Each block's input gets its
//! latent projection added per channel. The image accumulates as
//! `img = upsample(img) + rgb_b`.

use serde::Serialize;
use thiserror::Error;

use crate::activation::{Activation, ActivationSpec};
use crate::kernels::{self, add, add_channel_bias, conv2d_same, dense, pointwise_conv, upsample2x_nearest};
use crate::patch::{PatchSet, ValidationReport};
use crate::tensor::{Tensor, TensorError};
use crate::weights::WeightTable;

/// Post-activation clamp bound. Keeps extreme parameter settings finite.
pub const ACTIVATION_CLAMP: f32 = 1.0e6;

const CONST_INPUT: &str = "syn.const";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("missing weight {0}")]
    MissingWeight(String),
    #[error("weight {name} has shape {got:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("patch set failed validation with {} error(s)", .0.errors.len())]
    Validation(ValidationReport),
    #[error("latent has length {got}, expected {expected}")]
    LatentLength { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub mapping_layers: usize,
    pub mapping_width: usize,
    pub synthesis_blocks: usize,
    /// Channel count of block 0; halves per block, floored at 1.
    pub base_channels: usize,
    pub base_resolution: usize,
    /// Base activation of the dense and conv layers.
    pub hidden_activation: ActivationSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            mapping_layers: 4,
            mapping_width: 64,
            synthesis_blocks: 4,
            base_channels: 64,
            base_resolution: 4,
            hidden_activation: ActivationSpec::leaky_relu(0.2),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("latent_dim", self.latent_dim),
            ("mapping_layers", self.mapping_layers),
            ("mapping_width", self.mapping_width),
            ("synthesis_blocks", self.synthesis_blocks),
            ("base_channels", self.base_channels),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be >= 1")));
        }
        if !self.base_resolution.is_power_of_two() {
            return Err(ModelError::Config(format!(
                "base_resolution {} is not a power of two",
                self.base_resolution
            )));
        }
        if self.synthesis_blocks > 12 {
            return Err(ModelError::Config("too many synthesis blocks".into()));
        }
        self.hidden_activation
            .validate()
            .map_err(|v| ModelError::Config(format!("hidden activation: {}", v[0])))
    }

    pub fn block_channels(&self, block: usize) -> usize {
        (self.base_channels >> block).max(1)
    }

    fn block_input_channels(&self, block: usize) -> usize {
        if block == 0 {
            self.base_channels
        } else {
            self.block_channels(block - 1)
        }
    }

    pub fn block_resolution(&self, block: usize) -> usize {
        self.base_resolution << block
    }

    pub fn output_resolution(&self) -> usize {
        self.block_resolution(self.synthesis_blocks - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mapping,
    Synthesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv,
    Torgb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerDescriptor {
    pub id: String,
    pub stage: Stage,
    pub kind: LayerKind,
    /// `None` for the latent projections, which are linear.
    pub base_activation: Option<ActivationSpec>,
    pub enabled: bool,
    #[serde(skip)]
    pub weight_names: Vec<String>,
    pub output_shape: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    Zeros,
    Normal { std: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: WeightInit,
}

fn he(fan_in: usize) -> WeightInit {
    WeightInit::Normal {
        std: (2.0f64 / fan_in as f64).sqrt() as f32,
    }
}

fn layer_with_params(
    id: String,
    stage: Stage,
    kind: LayerKind,
    base: Option<ActivationSpec>,
    output_shape: Vec<usize>,
) -> LayerDescriptor {
    LayerDescriptor {
        weight_names: vec![format!("{id}.weight"), format!("{id}.bias")],
        id,
        stage,
        kind,
        base_activation: base,
        enabled: true,
        output_shape,
    }
}

/// Layers of `config` in forward order.
pub fn layer_layout(config: &GeneratorConfig) -> Vec<LayerDescriptor> {
    let hidden = config.hidden_activation.clone();
    let mut layers = Vec::new();
    for i in 0..config.mapping_layers {
        layers.push(layer_with_params(
            format!("map.{i}"),
            Stage::Mapping,
            LayerKind::Dense,
            Some(hidden.clone()),
            vec![config.mapping_width],
        ));
    }
    for b in 0..config.synthesis_blocks {
        let r = config.block_resolution(b);
        layers.push(layer_with_params(
            format!("syn.{b}.latent"),
            Stage::Synthesis,
            LayerKind::Dense,
            None,
            vec![config.block_input_channels(b)],
        ));
        layers.push(layer_with_params(
            format!("syn.{b}.conv"),
            Stage::Synthesis,
            LayerKind::Conv,
            Some(hidden.clone()),
            vec![1, config.block_channels(b), r, r],
        ));
        layers.push(layer_with_params(
            format!("syn.{b}.torgb"),
            Stage::Synthesis,
            LayerKind::Torgb,
            Some(ActivationSpec::tanh()),
            vec![1, 3, r, r],
        ));
    }
    layers
}

/// Every tensor the generator reads, in canonical order, with its init rule.
pub fn weight_manifest(config: &GeneratorConfig) -> Vec<WeightSpec> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: WeightInit| {
        out.push(WeightSpec { name, shape, init })
    };
    for i in 0..config.mapping_layers {
        let fan_in = if i == 0 {
            config.latent_dim
        } else {
            config.mapping_width
        };
        push(
            format!("map.{i}.weight"),
            vec![fan_in, config.mapping_width],
            he(fan_in),
        );
        push(format!("map.{i}.bias"), vec![config.mapping_width], WeightInit::Zeros);
    }
    let r0 = config.base_resolution;
    push(
        CONST_INPUT.to_string(),
        vec![1, config.base_channels, r0, r0],
        WeightInit::Normal { std: 1.0 },
    );
    for b in 0..config.synthesis_blocks {
        let cin = config.block_input_channels(b);
        let cout = config.block_channels(b);
        push(
            format!("syn.{b}.latent.weight"),
            vec![config.mapping_width, cin],
            he(config.mapping_width),
        );
        push(format!("syn.{b}.latent.bias"), vec![cin], WeightInit::Zeros);
        push(
            format!("syn.{b}.conv.weight"),
            vec![cout, cin, 3, 3],
            he(cin * 9),
        );
        push(format!("syn.{b}.conv.bias"), vec![cout], WeightInit::Zeros);
        push(format!("syn.{b}.torgb.weight"), vec![3, cout], he(cout));
        push(format!("syn.{b}.torgb.bias"), vec![3], WeightInit::Zeros);
    }
    out
}

/// An immutable, ready-to-run generator.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    config: GeneratorConfig,
    layers: Vec<LayerDescriptor>,
    resolutions: Vec<usize>,
    weights: WeightTable,
}

pub fn build_toy_generator(
    config: GeneratorConfig,
    weights: WeightTable,
) -> Result<ModelGraph, ModelError> {
    config.validate()?;
    for spec in weight_manifest(&config) {
        let t = weights
            .get(&spec.name)
            .ok_or_else(|| ModelError::MissingWeight(spec.name.clone()))?;
        if t.shape() != spec.shape.as_slice() {
            return Err(ModelError::WeightShape {
                name: spec.name,
                expected: spec.shape,
                got: t.shape().to_vec(),
            });
        }
    }
    Ok(ModelGraph {
        layers: layer_layout(&config),
        resolutions: (0..config.synthesis_blocks)
            .map(|b| config.block_resolution(b))
            .collect(),
        config,
        weights,
    })
}

/// Serializable graph description: one entry per layer.
#[derive(Debug, Serialize)]
pub struct GraphDescription<'a> {
    pub latent_dim: usize,
    pub resolution: usize,
    pub layers: &'a [LayerDescriptor],
}

impl ModelGraph {
    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn list_layers(&self) -> &[LayerDescriptor] {
        &self.layers
    }

    pub fn layer(&self, id: &str) -> Option<&LayerDescriptor> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn output_resolution(&self) -> usize {
        self.config.output_resolution()
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    /// The layer list as JSON: `[{id, stage, kind, base_activation, enabled, output_shape}, ...]`.
    pub fn layers_json(&self) -> String {
        serde_json::to_string(&self.layers).expect("layer descriptors serialize")
    }

    pub fn describe(&self) -> GraphDescription<'_> {
        GraphDescription {
            latent_dim: self.latent_dim(),
            resolution: self.output_resolution(),
            layers: &self.layers,
        }
    }

    fn w(&self, name: &str) -> &Tensor {
        self.weights
            .get(name)
            .expect("weights checked at build time")
    }

    /// Runs the generator. Returns `[1, 3, R, R]`.
    pub fn forward(&self, patches: &PatchSet, latent: &Tensor) -> Result<Tensor, ForwardError> {
        self.forward_traced(patches, latent, |_, _| {})
    }

    /// [`forward`](Self::forward), reporting each layer's output to `observe` in layer order.
    pub fn forward_traced(
        &self,
        patches: &PatchSet,
        latent: &Tensor,
        mut observe: impl FnMut(&str, &Tensor),
    ) -> Result<Tensor, ForwardError> {
        let report = patches.validate(self);
        if !report.is_ok() {
            return Err(ForwardError::Validation(report));
        }
        if latent.rank() != 1 || latent.numel() != self.latent_dim() {
            return Err(ForwardError::LatentLength {
                expected: self.latent_dim(),
                got: latent.numel(),
            });
        }

        let plan = LayerPlan::new(self, patches);
        let cfg = &self.config;

        let mut h = latent.clone();
        for i in 0..cfg.mapping_layers {
            let id = format!("map.{i}");
            h = match plan.get(&id) {
                Some(act) => {
                    let y = dense(&h, self.w(&format!("{id}.weight")), self.w(&format!("{id}.bias")))?;
                    activate(act, &y)
                }
                None => resize_vector(&h, cfg.mapping_width),
            };
            observe(&id, &h);
        }
        let mapped = h;

        let mut features: Option<Tensor> = None;
        let mut image: Option<Tensor> = None;
        for b in 0..cfg.synthesis_blocks {
            let mut x = match features.take() {
                None => self.w(CONST_INPUT).clone(),
                Some(prev) => upsample2x_nearest(&prev)?,
            };

            let id = format!("syn.{b}.latent");
            if let Some(act) = plan.get(&id) {
                let p = dense(
                    &mapped,
                    self.w(&format!("{id}.weight")),
                    self.w(&format!("{id}.bias")),
                )?;
                let p = activate(act, &p);
                observe(&id, &p);
                x = add_channel_bias(&x, &p)?;
            } else {
                observe(&id, &Tensor::zeros(&[cfg.block_input_channels(b)])?);
            }

            let id = format!("syn.{b}.conv");
            let y = match plan.get(&id) {
                Some(act) => activate(
                    act,
                    &conv2d_same(&x, self.w(&format!("{id}.weight")), self.w(&format!("{id}.bias")))?,
                ),
                None => resize_channels(&x, cfg.block_channels(b))?,
            };
            observe(&id, &y);

            let id = format!("syn.{b}.torgb");
            let rgb = match plan.get(&id) {
                Some(act) => activate(
                    act,
                    &pointwise_conv(&y, self.w(&format!("{id}.weight")), self.w(&format!("{id}.bias")))?,
                ),
                None => {
                    let r = cfg.block_resolution(b);
                    Tensor::zeros(&[1, 3, r, r])?
                }
            };
            observe(&id, &rgb);

            image = Some(match image.take() {
                None => rgb,
                Some(prev) => add(&upsample2x_nearest(&prev)?, &rgb)?,
            });
            features = Some(y);
        }
        Ok(image.expect("at least one synthesis block"))
    }
}

/// Effective per-layer behaviour after applying a patch set.
/// A `None` action means the layer is disabled.
struct LayerPlan {
    entries: Vec<(String, Option<LayerAct>)>,
}

/// `Identity` stands in for the linear latent projections.
#[derive(Clone)]
enum LayerAct {
    Identity,
    Act(Activation),
}

impl LayerPlan {
    fn new(graph: &ModelGraph, patches: &PatchSet) -> Self {
        let entries = graph
            .layers
            .iter()
            .map(|layer| {
                let enabled = patches
                    .enable_overrides
                    .get(&layer.id)
                    .copied()
                    .unwrap_or(layer.enabled);
                let spec = patches
                    .activation_overrides
                    .get(&layer.id)
                    .or(layer.base_activation.as_ref());
                let act = enabled.then(|| match spec {
                    Some(s) => LayerAct::Act(s.resolve().expect("validated before planning")),
                    None => LayerAct::Identity,
                });
                (layer.id.clone(), act)
            })
            .collect();
        Self { entries }
    }

    fn get(&self, id: &str) -> Option<LayerAct> {
        self.entries
            .iter()
            .find(|(lid, _)| lid == id)
            .and_then(|(_, act)| act.clone())
    }
}

fn clamp_activation(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP)
    }
}

fn activate(act: LayerAct, x: &Tensor) -> Tensor {
    match act {
        LayerAct::Identity => x.map(clamp_activation),
        LayerAct::Act(a) => x.map(|v| clamp_activation(a.eval(v))),
    }
}

/// Pass-through for a disabled dense layer: identity when widths agree,
/// otherwise truncate or zero-pad.
fn resize_vector(x: &Tensor, width: usize) -> Tensor {
    let mut data = x.data().to_vec();
    data.resize(width, 0.0);
    Tensor::from_vec(data)
}

/// Pass-through for a disabled conv layer: keeps the first `channels`
/// channels, zero-padding if there are fewer.
fn resize_channels(x: &Tensor, channels: usize) -> Result<Tensor, TensorError> {
    let [n, c, h, w] = kernels::dims4(x);
    if c == channels {
        return Ok(x.clone());
    }
    let plane = h * w;
    let mut out = vec![0.0f32; n * channels * plane];
    for ni in 0..n {
        for ci in 0..c.min(channels) {
            let src = &x.data()[(ni * c + ci) * plane..(ni * c + ci + 1) * plane];
            out[(ni * channels + ci) * plane..(ni * channels + ci + 1) * plane]
                .copy_from_slice(src);
        }
    }
    Tensor::new(&[n, channels, h, w], out)
}
