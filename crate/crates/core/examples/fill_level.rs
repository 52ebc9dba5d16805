// Fill a vertical Z sketch with content from the other two fixture domains
// and check the result against its sketch.

use std::error::Error;

use sketchblend::corpus::level_to_text;
use sketchblend::edbsp::{domain_proportion, fill_sketch, validate_fill, FillConfig};
use sketchblend::seed::rng_from;
use sketchblend::sketch::{project_sketch, sketch_to_text};
use sketchblend::synth::synthetic_corpus;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let set = synthetic_corpus()?;
    let z = set.get(&"Z".into())?;
    let sketch = project_sketch(&z.levels[0], &z.affordance)?.window(0, 0, 16, 12);
    let corpora = set.select(&["X".into(), "Y".into()])?;

    let result = fill_sketch(&sketch, &corpora, &FillConfig::max_region(4), &mut rng_from(11, &[4]))?;
    validate_fill(&sketch, &result, &corpora)?;

    let sketch_rows: Vec<String> = sketch_to_text(&sketch).lines().map(String::from).collect();
    let level_rows: Vec<String> = level_to_text(&result.level).lines().map(String::from).collect();
    println!("sketch         filled");
    for (s, l) in sketch_rows.iter().zip(&level_rows) {
        println!("{s}   {l}");
    }
    println!("\n{} regions filled", result.regions.len());
    for (domain, share) in domain_proportion(&result.provenance) {
        println!("{domain}: {share:.3}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
