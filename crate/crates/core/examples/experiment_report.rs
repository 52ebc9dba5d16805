// Blend the fixture's Z levels from every other domain, then write the run
// directory: levels, provenance, reports and a manifest.

use std::error::Error;

use sketchblend::edbsp::StopRule;
use sketchblend::harness::{run_fill_existing, write_fill_run, write_run_manifest, SubsetDef};
use sketchblend::synth::synthetic_corpus;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let set = synthetic_corpus()?;
    let subset = SubsetDef {
        name: "ALL".into(),
        members: set.ids(),
    };
    let stop = StopRule::MaxRegion { size: Some(6) };
    let run = run_fill_existing(&"Z".into(), &subset, &set, 12, stop, 21)?;
    println!("filled {} levels from {:?}", run.levels.len(), run.fill_domains);
    for e in &run.table.entries {
        println!(
            "{:<28} {:<9} mean {:.4} sd {:.4} n {}",
            e.metric, e.sample, e.mean, e.std, e.n
        );
    }

    let dir = tempfile::tempdir()?;
    write_fill_run(dir.path(), &run)?;
    let manifest = write_run_manifest(dir.path(), "example", &(stop, 21u64))?;
    println!(
        "\nrun manifest:\n{}",
        std::fs::read_to_string(manifest)?
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
