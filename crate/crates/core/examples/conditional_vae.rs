// Train one conditional VAE over all three fixture domains and sample a
// sketch for each label.

use std::error::Error;

use sketchblend::genmodel::{train_cvae, ModelConfig};
use sketchblend::metrics::{density, WildcardRule};
use sketchblend::sketch::{corpus_segments_sized, sketch_to_text};
use sketchblend::synth::synthetic_corpus;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let set = synthetic_corpus()?;
    let domains = set.ids();
    let mut data = Vec::new();
    for (label, id) in domains.iter().enumerate() {
        let segs = corpus_segments_sized(set.get(id)?, 8, 8, 4)?;
        data.extend(segs.into_iter().take(40).map(|s| (s.grid, label)));
    }
    let config = ModelConfig {
        latent_dim: 8,
        epochs: 30,
        batch_size: 16,
        seed: 2,
        window: Some([8, 8]),
        ..ModelConfig::default()
    };
    let params = train_cvae(&data, &domains, &config)?;
    let mut model = params.cvae()?;
    println!(
        "trained on {} labelled segments, best epoch {}",
        params.training_segments, params.best_epoch
    );
    for (label, id) in domains.iter().enumerate() {
        let samples = model.sample(label, 20, 17)?;
        let mean: f64 = samples.iter().map(|s| density(s, WildcardRule::NotSolid)).sum::<f64>() / 20.0;
        println!("\n{id}: mean density {mean:.3}");
        print!("{}", sketch_to_text(&samples[0]));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
