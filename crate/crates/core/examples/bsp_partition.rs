// Partition a grid with recursive binary splits and draw the regions.

use std::error::Error;

use sketchblend::edbsp::{bsp_partition, StopRule};
use sketchblend::grid::Grid;
use sketchblend::seed::rng_from;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut rng = rng_from(7, &[1]);
    let p = bsp_partition((12, 20), 5, &mut rng);
    let mut labels = Grid::filled(p.height, p.width, '.');
    let glyphs: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    for (i, r) in p.regions.iter().enumerate() {
        for row in r.row..r.row + r.height {
            for col in r.col..r.col + r.width {
                labels.set(row, col, glyphs[i % glyphs.len()]);
            }
        }
    }
    println!("{} regions, none wider or taller than 5:", p.regions.len());
    for row in labels.rows() {
        println!("{}", row.iter().collect::<String>());
    }

    let by_count = StopRule::RegionCount { count: 4 }.partition((12, 20), &mut rng);
    println!("\nfour regions: {:?}", by_count.regions);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
