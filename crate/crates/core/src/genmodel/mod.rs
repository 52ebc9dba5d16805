//! Sketch generators: a convolutional VAE per domain and a conditional VAE
//! over all domains, trained on one-hot sketch segments.

pub mod cvae;
pub mod layers;
pub mod loss;
pub mod train;
pub mod vae;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::DomainId;
use crate::error::{Error, Result};
use crate::sketch::{encode_onehot, SketchGrid};

pub use cvae::{Cvae, CvaeArch, CVAE_WINDOW};
pub use layers::Param;
pub use loss::reparameterize;
pub use train::{gradient_check, gradient_check_subset, train_cvae, train_vae, Adam, GradCheckReport};
pub use vae::{ConvVae, ConvVaeArch};

/// How the reconstruction term is scaled inside the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconScale {
    /// Mean cross-entropy per cell.
    PerCell,
    /// Cross-entropy summed over the cells of a sample (the usual ELBO).
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight on the KL term.
    pub kl_weight: f64,
    pub recon_scale: ReconScale,
    /// Training window `[height, width]`; `None` takes the corpus window.
    #[serde(default)]
    pub window: Option<[usize; 2]>,
    /// Sliding-window stride used to cut training segments.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 32,
            epochs: 5000,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            kl_weight: 1.0,
            recon_scale: ReconScale::PerSample,
            window: None,
            stride: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight must be finite and non-negative");
        }
        Ok(())
    }
}

/// A batch of one-hot encoded sketches, optionally with domain labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    /// `n` samples of `(3, height, width)`, channel-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_sketches(sketches: &[&SketchGrid]) -> Result<Self> {
        let first = sketches.first().ok_or(Error::EmptyTrainingSet)?;
        let (height, width) = first.dims();
        let mut inputs = Vec::with_capacity(sketches.len() * 3 * height * width);
        for s in sketches {
            if s.dims() != (height, width) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{height}x{width}"),
                    found: format!("{}x{}", s.height(), s.width()),
                });
            }
            inputs.extend(encode_onehot(s));
        }
        Ok(Batch {
            n: sketches.len(),
            height,
            width,
            inputs,
            labels: Vec::new(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Self {
        assert_eq!(labels.len(), self.n);
        self.labels = labels;
        self
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

/// Loss components for one batch. `recon` is the mean per-cell
/// cross-entropy and `kl` the batch-mean KL to the standard normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub recon: f64,
    pub kl: f64,
    pub objective: f64,
}

impl LossParts {
    /// The ELBO-style total `recon + kl`.
    pub fn total(&self) -> f64 {
        self.recon + self.kl
    }
}

/// Weights that turn [`LossParts`] into the scalar being minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub recon_weight: f64,
    pub kl_weight: f64,
}

impl Objective {
    pub fn new(config: &ModelConfig, cells: usize) -> Self {
        let recon_weight = match config.recon_scale {
            ReconScale::PerCell => 1.0,
            ReconScale::PerSample => cells as f64,
        };
        Objective {
            recon_weight,
            kl_weight: config.kl_weight,
        }
    }

    pub fn value(&self, recon: f64, kl: f64) -> f64 {
        self.recon_weight * recon + self.kl_weight * kl
    }
}

/// A named flat array used to persist weights and buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// One entry of the architecture descriptor written into model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub kind: String,
    pub in_units: usize,
    pub out_units: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<[usize; 2]>,
}

/// The operations training, sampling and gradient checks need from a model.
pub trait SketchModel: Clone {
    fn latent_dim(&self) -> usize;
    /// Output window `(height, width)`.
    fn window(&self) -> (usize, usize);
    fn set_training(&mut self, training: bool);
    /// Forward pass, and a backward pass into the parameter gradients when
    /// `backward` is set. `eps` holds `n * latent_dim` noise draws.
    fn run(&mut self, batch: &Batch, eps: &[f64], objective: Objective, backward: bool) -> Result<LossParts>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn state(&self) -> Vec<NamedArray>;
    fn load_state(&mut self, state: &[NamedArray]) -> Result<()>;
    fn layers(&self) -> Vec<LayerDesc>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Sample-weighted mean of the minibatch reconstruction losses.
    pub train_recon: f64,
    pub train_kl: f64,
    /// Reconstruction error over the whole training set after the epoch,
    /// measured in inference mode from the posterior mean.
    pub recon_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    ConvVae(ConvVaeArch),
    Cvae(CvaeArch),
}

/// A trained sketch generator as persisted on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub format_version: u32,
    pub architecture: Architecture,
    pub layers: Vec<LayerDesc>,
    pub config: ModelConfig,
    /// Domain the model was trained on (per-domain VAEs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_id: Option<DomainId>,
    /// Label order of a conditional model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domains: Vec<DomainId>,
    pub training_segments: usize,
    pub best_epoch: usize,
    pub best_recon_error: f64,
    pub history: Vec<EpochRecord>,
    pub weights: Vec<NamedArray>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl ModelParameters {
    pub fn window(&self) -> (usize, usize) {
        match &self.architecture {
            Architecture::ConvVae(a) => (a.height, a.width),
            Architecture::Cvae(a) => (a.height, a.width),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ModelParameters = serde_json::from_str(text).map_err(|e| Error::json("model file", e))?;
        if p.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                p.format_version
            )));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rebuilds the convolutional VAE this file describes.
    pub fn conv_vae(&self) -> Result<ConvVae> {
        match &self.architecture {
            Architecture::ConvVae(arch) => {
                let mut m = ConvVae::new(arch.clone(), 0);
                m.load_state(&self.weights)?;
                m.set_training(false);
                Ok(m)
            }
            Architecture::Cvae(_) => Err(Error::InvalidConfig("model is a conditional VAE".into())),
        }
    }

    pub fn cvae(&self) -> Result<Cvae> {
        match &self.architecture {
            Architecture::Cvae(arch) => {
                let mut m = Cvae::new(arch.clone(), 0);
                m.load_state(&self.weights)?;
                m.set_training(false);
                Ok(m)
            }
            Architecture::ConvVae(_) => Err(Error::InvalidConfig("model is not a conditional VAE".into())),
        }
    }
}

pub(crate) fn take_state(state: &[NamedArray], name: &str, len: usize) -> Result<Vec<f64>> {
    let arr = state
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| Error::ShapeMismatch {
            expected: format!("array {name}"),
            found: "missing".into(),
        })?;
    if arr.values.len() != len {
        return Err(Error::ShapeMismatch {
            expected: format!("{name} with {len} values"),
            found: format!("{} values", arr.values.len()),
        });
    }
    Ok(arr.values.clone())
}

/// Draws `n` sketches from a per-domain VAE: `z ~ N(0, I)`, decoded in
/// inference mode, argmax per cell.
pub fn sample_sketches(model: &ModelParameters, n: usize, seed: u64) -> Result<Vec<SketchGrid>> {
    let mut vae = model.conv_vae()?;
    Ok(vae.sample(n, seed))
}
