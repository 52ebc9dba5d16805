// Load the synthetic fixture, project a level to a sketch and cut training
// segments from it.

use std::error::Error;
use std::path::Path;

use sketchblend::corpus::{CorpusSet, ElementCategory};
use sketchblend::sketch::{class_fraction, corpus_segments, project_sketch, sketch_to_text, SketchCell};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synth/manifest.json");
    let set = CorpusSet::load_manifest(&manifest)?;
    for corpus in &set.domains {
        let dist = corpus.element_distribution()?;
        let segments = corpus_segments(corpus, 1)?;
        println!(
            "{}: {} levels, {} tiles, {} segments of {}x{}",
            corpus.domain_id,
            corpus.levels.len(),
            corpus.total_tiles(),
            segments.len(),
            corpus.window_height,
            corpus.window_width
        );
        for e in ElementCategory::ALL {
            println!("  {:<13} {:.3}", e.name(), dist[e.index()]);
        }
    }

    let x = set.get(&"X".into())?;
    let sketch = project_sketch(&x.levels[0], &x.affordance)?;
    println!(
        "\nx-0 as a sketch ({:.1}% wildcards):",
        100.0 * class_fraction(&sketch, SketchCell::Wildcard)
    );
    print!("{}", sketch_to_text(&sketch));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
