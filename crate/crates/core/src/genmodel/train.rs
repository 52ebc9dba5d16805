//! Training loop, optimizer and finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::cvae::{Cvae, CvaeArch, CVAE_WINDOW};
use super::layers::Param;
use super::vae::{ConvVae, ConvVaeArch};
use super::{
    Architecture, Batch, EpochRecord, LossParts, ModelConfig, ModelParameters, Objective, SketchModel,
    MODEL_FORMAT_VERSION,
};
use crate::corpus::DomainId;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};
use crate::sketch::SketchGrid;

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

fn subset(data: &Batch, idx: &[usize]) -> Batch {
    let per = 3 * data.cells();
    let mut inputs = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        inputs.extend_from_slice(&data.inputs[i * per..(i + 1) * per]);
    }
    Batch {
        n: idx.len(),
        height: data.height,
        width: data.width,
        inputs,
        labels: if data.labels.is_empty() {
            Vec::new()
        } else {
            idx.iter().map(|&i| data.labels[i]).collect()
        },
    }
}

/// Reconstruction error of the whole set in inference mode, decoding the
/// posterior mean (noise fixed at zero).
pub fn reconstruction_error<M: SketchModel>(model: &mut M, data: &Batch, chunk: usize) -> Result<f64> {
    model.set_training(false);
    let objective = Objective {
        recon_weight: 1.0,
        kl_weight: 1.0,
    };
    let mut total = 0.0;
    let all: Vec<usize> = (0..data.n).collect();
    for part in all.chunks(chunk.max(1)) {
        let b = subset(data, part);
        let eps = vec![0.0; b.n * model.latent_dim()];
        total += model.run(&b, &eps, objective, false)?.recon * b.n as f64;
    }
    Ok(total / data.n as f64)
}

pub(crate) struct Fitted<M> {
    pub best: M,
    pub best_epoch: usize,
    pub best_recon_error: f64,
    pub history: Vec<EpochRecord>,
}

/// Minibatch Adam training; keeps the weights of the epoch with the lowest
/// reconstruction error.
pub(crate) fn fit<M: SketchModel>(mut model: M, data: &Batch, config: &ModelConfig) -> Result<Fitted<M>> {
    if data.n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rng = rng_from(config.seed, &[stream::TRAIN]);
    let objective = Objective::new(config, data.cells());
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..data.n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(M, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        model.set_training(true);
        order.shuffle(&mut rng);
        let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
        for idx in order.chunks(config.batch_size) {
            let batch = subset(data, idx);
            let eps: Vec<f64> = (0..batch.n * model.latent_dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            model.zero_grad();
            let LossParts {
                recon,
                kl,
                objective: obj,
            } = model.run(&batch, &eps, objective, true)?;
            if !obj.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(model.params_mut());
            recon_sum += recon * batch.n as f64;
            kl_sum += kl * batch.n as f64;
        }
        let recon_error = reconstruction_error(&mut model, data, config.batch_size.max(64))?;
        if !recon_error.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_recon: recon_sum / data.n as f64,
            train_kl: kl_sum / data.n as f64,
            recon_error,
        });
        if best.as_ref().is_none_or(|b| recon_error < b.2) {
            best = Some((model.clone(), epoch, recon_error));
        }
    }
    let (mut best, best_epoch, best_recon_error) = best.expect("at least one epoch");
    best.set_training(false);
    Ok(Fitted {
        best,
        best_epoch,
        best_recon_error,
        history,
    })
}

fn check_dims<'a>(segments: impl Iterator<Item = &'a SketchGrid>, expected: (usize, usize)) -> Result<()> {
    for s in segments {
        if s.dims() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", expected.0, expected.1),
                found: format!("{}x{}", s.height(), s.width()),
            });
        }
    }
    Ok(())
}

/// Trains a per-domain convolutional VAE on filtered sketch segments.
pub fn train_vae(segments: &[SketchGrid], config: &ModelConfig) -> Result<ModelParameters> {
    config.validate()?;
    let first = segments.first().ok_or(Error::EmptyTrainingSet)?;
    let dims = first.dims();
    if let Some([h, w]) = config.window {
        if (h, w) != dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}"),
                found: format!("{}x{}", dims.0, dims.1),
            });
        }
    }
    check_dims(segments.iter(), dims)?;
    let arch = ConvVaeArch::new(dims.0, dims.1, config.latent_dim);
    let model = ConvVae::new(arch.clone(), derive_seed(config.seed, &[stream::INIT]));
    let refs: Vec<&SketchGrid> = segments.iter().collect();
    let data = Batch::from_sketches(&refs)?;
    let fitted = fit(model, &data, config)?;
    Ok(ModelParameters {
        format_version: MODEL_FORMAT_VERSION,
        architecture: Architecture::ConvVae(arch),
        layers: fitted.best.layers(),
        config: config.clone(),
        domain_id: None,
        domains: Vec::new(),
        training_segments: segments.len(),
        best_epoch: fitted.best_epoch,
        best_recon_error: fitted.best_recon_error,
        history: fitted.history,
        weights: fitted.best.state(),
    })
}

/// Trains the conditional VAE on labelled segments from several domains.
/// Labels index into `domains`. Every segment must match the configured
/// window (11x16 unless `config.window` overrides it).
pub fn train_cvae(
    segments: &[(SketchGrid, usize)],
    domains: &[DomainId],
    config: &ModelConfig,
) -> Result<ModelParameters> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let (h, w) = config.window.map(|[h, w]| (h, w)).unwrap_or(CVAE_WINDOW);
    for (s, label) in segments {
        if s.dims() != (h, w) {
            return Err(Error::DimensionViolation {
                expected_h: h,
                expected_w: w,
                found_h: s.height(),
                found_w: s.width(),
            });
        }
        if *label >= domains.len() {
            return Err(Error::LabelOutOfRange {
                label: *label,
                classes: domains.len(),
            });
        }
    }
    let arch = CvaeArch::new(h, w, domains.len(), config.latent_dim);
    let model = Cvae::new(arch.clone(), derive_seed(config.seed, &[stream::INIT]));
    let refs: Vec<&SketchGrid> = segments.iter().map(|(s, _)| s).collect();
    let data = Batch::from_sketches(&refs)?.with_labels(segments.iter().map(|(_, l)| *l).collect());
    let fitted = fit(model, &data, config)?;
    Ok(ModelParameters {
        format_version: MODEL_FORMAT_VERSION,
        architecture: Architecture::Cvae(arch),
        layers: fitted.best.layers(),
        config: config.clone(),
        domain_id: None,
        domains: domains.to_vec(),
        training_segments: segments.len(),
        best_epoch: fitted.best_epoch,
        best_recon_error: fitted.best_recon_error,
        history: fitted.history,
        weights: fitted.best.state(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares analytic gradients of `recon + kl` with central differences on
/// every parameter. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<M: SketchModel>(model: &M, batch: &Batch, eps: &[f64], h: f64) -> Result<GradCheckReport> {
    gradient_check_subset(model, batch, eps, h, usize::MAX)
}

/// As [`gradient_check`], but checks at most `per_tensor` evenly spaced
/// entries of each parameter tensor.
pub fn gradient_check_subset<M: SketchModel>(
    model: &M,
    batch: &Batch,
    eps: &[f64],
    h: f64,
    per_tensor: usize,
) -> Result<GradCheckReport> {
    let objective = Objective {
        recon_weight: 1.0,
        kl_weight: 1.0,
    };
    let mut m = model.clone();
    m.zero_grad();
    m.run(batch, eps, objective, true)?;
    let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (k, grads) in analytic.iter().enumerate() {
        let step = grads.len().div_ceil(per_tensor.max(1)).max(1);
        for i in (0..grads.len()).step_by(step) {
            let orig = m.params()[k].value[i];
            m.params_mut()[k].value[i] = orig + h;
            let plus = m.run(batch, eps, objective, false)?.objective;
            m.params_mut()[k].value[i] = orig - h;
            let minus = m.run(batch, eps, objective, false)?.objective;
            m.params_mut()[k].value[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grads[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked,
    })
}
