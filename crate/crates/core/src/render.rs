//! The single render path shared by the CLI and the service.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::activation::{ActivationKind, ActivationSpec};
use crate::image::{hstack, to_image, ImageBuffer, ImageError, ImageFormat};
use crate::model::{build_toy_generator, ForwardError, GeneratorConfig, ModelError, ModelGraph};
use crate::patch::{PatchSet, ValidationReport};
use crate::weights::WeightTable;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("patch set failed validation with {} error(s)", .0.errors.len())]
    Validation(ValidationReport),
    #[error(transparent)]
    Forward(ForwardError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

impl From<ForwardError> for RenderError {
    fn from(e: ForwardError) -> Self {
        match e {
            ForwardError::Validation(r) => RenderError::Validation(r),
            other => RenderError::Forward(other),
        }
    }
}

/// Cheap-to-clone handle on an immutable generator.
#[derive(Debug, Clone)]
pub struct Engine {
    graph: Arc<ModelGraph>,
}

impl Engine {
    pub fn new(graph: ModelGraph) -> Self {
        Self {
            graph: Arc::new(graph),
        }
    }

    pub fn from_weights(config: GeneratorConfig, weights: WeightTable) -> Result<Self, ModelError> {
        Ok(Self::new(build_toy_generator(config, weights)?))
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    /// Renders `patches`, sampling the latent from `seed` unless the patch carries its own.
    pub fn render(&self, patches: &PatchSet, seed: u64) -> Result<ImageBuffer, RenderError> {
        let report = patches.validate(&self.graph);
        if !report.is_ok() {
            return Err(RenderError::Validation(report));
        }
        let latent = patches.effective_latent(self.graph.latent_dim(), seed);
        let out = self.graph.forward(patches, &latent)?;
        Ok(to_image(&out)?)
    }

    pub fn render_bytes(
        &self,
        patches: &PatchSet,
        seed: u64,
        format: ImageFormat,
    ) -> Result<Vec<u8>, RenderError> {
        Ok(self.render(patches, seed)?.encode(format)?)
    }

    /// Renders a horizontal strip: the unswept baseline, then one cell per
    /// parameter value.
    pub fn sweep(
        &self,
        base: &PatchSet,
        seed: u64,
        sweep: &Sweep,
    ) -> Result<ImageBuffer, RenderError> {
        let mut cells = vec![self.render(base, seed)?];
        for spec in sweep.specs()? {
            let mut patches = base.clone();
            patches
                .activation_overrides
                .insert(sweep.layer.clone(), spec);
            cells.push(self.render(&patches, seed)?);
        }
        Ok(hstack(&cells)?)
    }
}

/// One parameter of one layer's override, stepped linearly over `[from, to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub layer: String,
    pub kind: ActivationKind,
    pub param: String,
    pub from: f32,
    pub to: f32,
    pub steps: usize,
    /// Other parameters; anything unset takes the schema default.
    pub fixed: BTreeMap<String, f32>,
}

impl Sweep {
    pub fn values(&self) -> Result<Vec<f32>, RenderError> {
        if self.steps < 2 {
            return Err(RenderError::Sweep(format!(
                "steps must be >= 2, got {}",
                self.steps
            )));
        }
        if !self.from.is_finite() || !self.to.is_finite() {
            return Err(RenderError::Sweep("sweep bounds must be finite".into()));
        }
        let (a, b) = (self.from as f64, self.to as f64);
        let last = self.steps - 1;
        Ok((0..self.steps)
            .map(|i| {
                if i == last {
                    self.to
                } else {
                    (a + (b - a) * i as f64 / last as f64) as f32
                }
            })
            .collect())
    }

    pub fn specs(&self) -> Result<Vec<ActivationSpec>, RenderError> {
        let probe = ActivationSpec::with_overrides(self.kind, &self.fixed);
        if probe.schema().get(&self.param).is_none() {
            return Err(RenderError::Sweep(format!(
                "{} has no parameter {:?}",
                self.kind, self.param
            )));
        }
        Ok(self
            .values()?
            .into_iter()
            .map(|v| {
                let mut params = self.fixed.clone();
                params.insert(self.param.clone(), v);
                ActivationSpec::with_overrides(self.kind, &params)
            })
            .collect())
    }
}
