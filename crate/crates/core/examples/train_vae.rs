// Train a small per-domain VAE on fixture segments and sample from it.
// Epochs are kept low so the example runs in seconds.

use std::error::Error;

use sketchblend::genmodel::{sample_sketches, train_vae, ModelConfig};
use sketchblend::harness::sample_training_segments;
use sketchblend::sketch::sketch_to_text;
use sketchblend::synth::synthetic_corpus;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let set = synthetic_corpus()?;
    let x = set.get(&"X".into())?;
    let segments = sample_training_segments(x, 50, 1, 3)?;
    let config = ModelConfig {
        latent_dim: 8,
        epochs: 40,
        batch_size: 16,
        seed: 5,
        ..ModelConfig::default()
    };
    let model = train_vae(&segments, &config)?;
    let first = &model.history[0];
    println!(
        "{} segments; reconstruction error {:.3} at epoch 1, {:.3} at best epoch {}",
        model.training_segments, first.recon_error, model.best_recon_error, model.best_epoch
    );
    for s in sample_sketches(&model, 2, 9)? {
        println!("{}", sketch_to_text(&s));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
