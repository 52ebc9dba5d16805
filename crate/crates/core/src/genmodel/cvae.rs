//! Conditional VAE over flattened sketch windows.
//!
//! The encoder sees the flattened one-hot window concatenated with a one-hot
//! domain label; the decoder sees the latent vector concatenated with the
//! same label. Both are two linear layers with a ReLU between them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{LeakyRelu, Linear, Param, Tensor};
use super::loss::{gaussian_kl, reparameterize, softmax_cross_entropy};
use super::{take_state, Batch, LayerDesc, LossParts, NamedArray, Objective, SketchModel};
use crate::error::{Error, Result};
use crate::sketch::{decode_argmax, encode_onehot, SketchGrid};

/// Window every domain is cut to for the conditional model.
pub const CVAE_WINDOW: (usize, usize) = (11, 16);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeArch {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub hidden: usize,
    pub latent_dim: usize,
}

impl CvaeArch {
    pub fn new(height: usize, width: usize, num_classes: usize, latent_dim: usize) -> Self {
        CvaeArch {
            height,
            width,
            num_classes,
            hidden: 256,
            latent_dim,
        }
    }

    /// Length of the encoder input: flattened one-hot window plus label.
    pub fn input_len(&self) -> usize {
        3 * self.height * self.width + self.num_classes
    }
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

/// Encoder input for one labelled sketch.
pub fn conditioned_input(sketch: &SketchGrid, label: usize, classes: usize) -> Vec<f64> {
    let mut v = encode_onehot(sketch);
    v.extend(one_hot(label, classes));
    v
}

#[derive(Debug, Clone)]
pub struct Cvae {
    pub arch: CvaeArch,
    enc1: Linear,
    enc_act: LeakyRelu,
    enc2: Linear,
    dec1: Linear,
    dec_act: LeakyRelu,
    dec2: Linear,
    cache: Option<(Vec<f64>, Vec<f64>)>,
}

impl Cvae {
    pub fn new(arch: CvaeArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells3 = 3 * arch.height * arch.width;
        Cvae {
            enc1: Linear::new(arch.input_len(), arch.hidden, &mut rng),
            enc_act: LeakyRelu::new(0.0),
            enc2: Linear::new(arch.hidden, 2 * arch.latent_dim, &mut rng),
            dec1: Linear::new(arch.latent_dim + arch.num_classes, arch.hidden, &mut rng),
            dec_act: LeakyRelu::new(0.0),
            dec2: Linear::new(arch.hidden, cells3, &mut rng),
            cache: None,
            arch,
        }
    }

    fn labels_onehot(&self, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
        labels
            .iter()
            .map(|&l| {
                if l >= self.arch.num_classes {
                    Err(Error::LabelOutOfRange {
                        label: l,
                        classes: self.arch.num_classes,
                    })
                } else {
                    Ok(one_hot(l, self.arch.num_classes))
                }
            })
            .collect()
    }

    fn decoder_input(&self, z: &[f64], labels: &[Vec<f64>]) -> Tensor {
        let d = self.arch.latent_dim;
        let k = self.arch.num_classes;
        let n = labels.len();
        let mut data = Vec::with_capacity(n * (d + k));
        for (s, label) in labels.iter().enumerate() {
            data.extend_from_slice(&z[s * d..(s + 1) * d]);
            data.extend_from_slice(label);
        }
        Tensor::from_vec(n, d + k, 1, 1, data)
    }

    fn decode_tensor(&mut self, input: Tensor) -> Tensor {
        let h = self.dec1.forward(input);
        let h = self.dec_act.forward(h);
        self.dec2.forward(h)
    }

    /// Decodes latent vectors under the given domain labels.
    pub fn decode(&mut self, z: &[f64], labels: &[usize]) -> Result<Vec<SketchGrid>> {
        let onehots = self.labels_onehot(labels)?;
        if z.len() != labels.len() * self.arch.latent_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} latent values", labels.len() * self.arch.latent_dim),
                found: z.len().to_string(),
            });
        }
        let input = self.decoder_input(z, &onehots);
        let (h, w) = (self.arch.height, self.arch.width);
        Ok(self
            .decode_tensor(input)
            .data
            .chunks(3 * h * w)
            .map(|s| decode_argmax(s, h, w))
            .collect())
    }

    /// Samples `n` sketches conditioned on one domain label.
    pub fn sample(&mut self, label: usize, n: usize, seed: u64) -> Result<Vec<SketchGrid>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n * self.arch.latent_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.decode(&z, &vec![label; n])
    }
}

impl SketchModel for Cvae {
    fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    fn window(&self) -> (usize, usize) {
        (self.arch.height, self.arch.width)
    }

    fn set_training(&mut self, _training: bool) {}

    fn run(&mut self, batch: &Batch, eps: &[f64], objective: Objective, backward: bool) -> Result<LossParts> {
        let (h, w) = (self.arch.height, self.arch.width);
        if (batch.height, batch.width) != (h, w) {
            return Err(Error::DimensionViolation {
                expected_h: h,
                expected_w: w,
                found_h: batch.height,
                found_w: batch.width,
            });
        }
        if batch.labels.len() != batch.n {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", batch.n),
                found: batch.labels.len().to_string(),
            });
        }
        let d = self.arch.latent_dim;
        if eps.len() != batch.n * d {
            return Err(Error::ShapeMismatch {
                expected: format!("{} noise values", batch.n * d),
                found: eps.len().to_string(),
            });
        }
        let n = batch.n;
        let cells3 = 3 * h * w;
        let onehots = self.labels_onehot(&batch.labels)?;
        let mut enc_in = Vec::with_capacity(n * self.arch.input_len());
        for (s, label) in onehots.iter().enumerate() {
            enc_in.extend_from_slice(&batch.inputs[s * cells3..(s + 1) * cells3]);
            enc_in.extend_from_slice(label);
        }
        let hidden = self
            .enc1
            .forward(Tensor::from_vec(n, self.arch.input_len(), 1, 1, enc_in));
        let hidden = self.enc_act.forward(hidden);
        let stats = self.enc2.forward(hidden);
        let mut mu = Vec::with_capacity(n * d);
        let mut logvar = Vec::with_capacity(n * d);
        for s in 0..n {
            mu.extend_from_slice(&stats.data[s * 2 * d..s * 2 * d + d]);
            logvar.extend_from_slice(&stats.data[s * 2 * d + d..(s + 1) * 2 * d]);
        }
        let z = reparameterize(&mu, &logvar, eps);
        let logits = self.decode_tensor(self.decoder_input(&z, &onehots));
        let (recon, dlogits) = softmax_cross_entropy(&logits.data, &batch.inputs, n, h * w);
        let (kl, dmu, dlv) = gaussian_kl(&mu, &logvar, n);
        self.cache = Some((logvar, eps.to_vec()));
        if backward {
            let (logvar, eps) = self.cache.clone().expect("cached");
            let dl: Vec<f64> = dlogits.iter().map(|g| g * objective.recon_weight).collect();
            let g = self.dec2.backward(&Tensor::from_vec(n, cells3, 1, 1, dl));
            let g = self.dec_act.backward(g);
            let dinput = self.dec1.backward(&g);
            let k = self.arch.num_classes;
            let mut dstats = vec![0.0; n * 2 * d];
            for s in 0..n {
                for j in 0..d {
                    let i = s * d + j;
                    let dz = dinput.data[s * (d + k) + j];
                    dstats[s * 2 * d + j] = objective.kl_weight * dmu[i] + dz;
                    dstats[s * 2 * d + d + j] =
                        objective.kl_weight * dlv[i] + dz * eps[i] * 0.5 * (0.5 * logvar[i]).exp();
                }
            }
            let g = self.enc2.backward(&Tensor::from_vec(n, 2 * d, 1, 1, dstats));
            let g = self.enc_act.backward(g);
            self.enc1.backward(&g);
        }
        Ok(LossParts {
            recon,
            kl,
            objective: objective.value(recon, kl),
        })
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for l in [&self.enc1, &self.enc2, &self.dec1, &self.dec2] {
            v.extend(l.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        v.extend(self.enc1.params_mut());
        v.extend(self.enc2.params_mut());
        v.extend(self.dec1.params_mut());
        v.extend(self.dec2.params_mut());
        v
    }

    fn state(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for (name, l) in [
            ("enc1", &self.enc1),
            ("enc2", &self.enc2),
            ("dec1", &self.dec1),
            ("dec2", &self.dec2),
        ] {
            out.push(NamedArray {
                name: format!("{name}.weight"),
                shape: vec![l.out_f, l.in_f],
                values: l.weight.value.clone(),
            });
            out.push(NamedArray {
                name: format!("{name}.bias"),
                shape: vec![l.out_f],
                values: l.bias.value.clone(),
            });
        }
        out
    }

    fn load_state(&mut self, state: &[NamedArray]) -> Result<()> {
        for (name, l) in [
            ("enc1", &mut self.enc1),
            ("enc2", &mut self.enc2),
            ("dec1", &mut self.dec1),
            ("dec2", &mut self.dec2),
        ] {
            l.weight.value = take_state(state, &format!("{name}.weight"), l.weight.value.len())?;
            l.bias.value = take_state(state, &format!("{name}.bias"), l.bias.value.len())?;
        }
        Ok(())
    }

    fn layers(&self) -> Vec<LayerDesc> {
        let lin = |name: &str, l: &Linear| LayerDesc {
            name: name.into(),
            kind: "linear".into(),
            in_units: l.in_f,
            out_units: l.out_f,
            kernel: None,
            stride: None,
            padding: None,
        };
        vec![
            lin("enc1", &self.enc1),
            lin("enc2", &self.enc2),
            lin("dec1", &self.dec1),
            lin("dec2", &self.dec2),
        ]
    }
}
