//! Example-driven binary space partitioning: split a sketch into regions,
//! find structurally matching windows in the training corpora and stitch
//! their full-resolution tiles together, recording where every tile came from.

pub mod matching;
pub mod partition;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{counts_to_distribution, DomainCorpus, DomainId, TileGrid};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sketch::SketchGrid;

pub use matching::{find_matches, sketch_match, MatchCandidate, MatchIndex};
pub use partition::{bsp_partition, bsp_partition_count, split_once, Partition, RegionRect, StopRule};

/// Source of one output tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceTile {
    pub domain_id: DomainId,
    pub level: usize,
    pub row: usize,
    pub col: usize,
}

pub type ProvenanceGrid = Grid<SourceTile>;

/// A region that was filled, and the window that filled it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledRegion {
    pub rect: RegionRect,
    pub source: MatchCandidate,
    /// Number of candidates the source was drawn from.
    pub candidates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FillConfig {
    #[serde(default)]
    pub stop: StopRule,
}

impl FillConfig {
    pub fn max_region(size: usize) -> Self {
        FillConfig {
            stop: StopRule::MaxRegion { size: Some(size) },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillResult {
    pub level: TileGrid,
    pub provenance: ProvenanceGrid,
    /// Initial BSP partition, before any no-match re-splits.
    pub partition: Partition,
    /// Regions as actually filled, in fill order.
    pub regions: Vec<FilledRegion>,
}

/// Fills `sketch` from `corpora`. Regions without any matching window are
/// split once more at random and each half retried; only an unmatched 1x1
/// region is an error.
pub fn fill_sketch(
    sketch: &SketchGrid,
    corpora: &[DomainCorpus],
    config: &FillConfig,
    rng: &mut impl Rng,
) -> Result<FillResult> {
    if corpora.is_empty() {
        return Err(Error::NoCorpora);
    }
    let index = MatchIndex::new(corpora)?;
    fill_with_index(sketch, &index, config, rng)
}

/// As [`fill_sketch`], reusing a prepared index across many fills.
pub fn fill_with_index(
    sketch: &SketchGrid,
    index: &MatchIndex<'_>,
    config: &FillConfig,
    rng: &mut impl Rng,
) -> Result<FillResult> {
    let corpora = index.corpora;
    if corpora.is_empty() {
        return Err(Error::NoCorpora);
    }
    let partition = config.stop.partition(sketch.dims(), rng);
    let mut level = Grid::filled(sketch.height(), sketch.width(), '\0');
    let mut cells: Vec<Option<SourceTile>> = vec![None; sketch.len()];
    let mut regions = Vec::new();

    for &rect in &partition.regions {
        let mut pending = vec![rect];
        while let Some(r) = pending.pop() {
            let target = sketch.window(r.row, r.col, r.height, r.width);
            let found = index.find(&target);
            if found.is_empty() {
                match split_once(&r, rng) {
                    Some((a, b)) => {
                        pending.push(b);
                        pending.push(a);
                        continue;
                    }
                    None => return Err(Error::UnfillableCell { row: r.row, col: r.col }),
                }
            }
            let pick = found[rng.random_range(0..found.len())].clone();
            let d = corpora
                .iter()
                .position(|c| c.domain_id == pick.domain_id)
                .expect("candidate domain is indexed");
            let src = &corpora[d].levels[pick.level];
            for i in 0..r.height {
                for j in 0..r.width {
                    let (sr, sc) = (pick.row + i, pick.col + j);
                    level.set(r.row + i, r.col + j, *src.get(sr, sc));
                    cells[(r.row + i) * sketch.width() + r.col + j] = Some(SourceTile {
                        domain_id: pick.domain_id.clone(),
                        level: pick.level,
                        row: sr,
                        col: sc,
                    });
                }
            }
            regions.push(FilledRegion {
                rect: r,
                source: pick,
                candidates: found.len(),
            });
        }
    }
    let cells = cells
        .into_iter()
        .map(|c| c.expect("partition covers every cell"))
        .collect();
    Ok(FillResult {
        level,
        provenance: Grid::from_cells(sketch.height(), sketch.width(), cells),
        partition,
        regions,
    })
}

fn corpus_for<'a>(corpora: &'a [DomainCorpus], id: &DomainId) -> Result<&'a DomainCorpus> {
    corpora
        .iter()
        .find(|c| &c.domain_id == id)
        .ok_or_else(|| Error::UnknownDomain(id.to_string()))
}

fn source_tile(corpora: &[DomainCorpus], s: &SourceTile) -> Result<char> {
    let c = corpus_for(corpora, &s.domain_id)?;
    let level = c
        .levels
        .get(s.level)
        .ok_or_else(|| Error::InvalidFill(format!("{} has no level {}", s.domain_id, s.level)))?;
    if s.row >= level.height() || s.col >= level.width() {
        return Err(Error::InvalidFill(format!(
            "source ({}, {}) outside {} level {}",
            s.row, s.col, s.domain_id, s.level
        )));
    }
    Ok(*level.get(s.row, s.col))
}

/// Rebuilds the output level from its provenance alone.
pub fn replay(provenance: &ProvenanceGrid, corpora: &[DomainCorpus]) -> Result<TileGrid> {
    let cells = provenance
        .cells()
        .iter()
        .map(|s| source_tile(corpora, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid::from_cells(provenance.height(), provenance.width(), cells))
}

/// Post-hoc check of a fill: dims agree, the regions tile the sketch, each
/// region's provenance is one contiguous source window, the copied tiles
/// project to classes that match the sketch, and replay reproduces the level.
pub fn validate_fill(sketch: &SketchGrid, result: &FillResult, corpora: &[DomainCorpus]) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidFill(m));
    if result.level.dims() != sketch.dims() || result.provenance.dims() != sketch.dims() {
        return bad("output dims differ from the sketch".into());
    }
    let mut marks = vec![0u8; sketch.len()];
    for fr in &result.regions {
        let r = fr.rect;
        if r.row + r.height > sketch.height() || r.col + r.width > sketch.width() {
            return bad(format!("region {r:?} leaves the sketch"));
        }
        for i in 0..r.height {
            for j in 0..r.width {
                marks[(r.row + i) * sketch.width() + r.col + j] += 1;
                let p = result.provenance.get(r.row + i, r.col + j);
                let s = &fr.source;
                if p.domain_id != s.domain_id || p.level != s.level || p.row != s.row + i || p.col != s.col + j {
                    return bad(format!(
                        "provenance of ({}, {}) is not from its region's window",
                        r.row + i,
                        r.col + j
                    ));
                }
                let c = corpus_for(corpora, &p.domain_id)?;
                let class = c.affordance.sketch_class(*result.level.get(r.row + i, r.col + j))?;
                if !sketch_match(*sketch.get(r.row + i, r.col + j), class) {
                    return bad(format!(
                        "tile at ({}, {}) does not match the sketch",
                        r.row + i,
                        r.col + j
                    ));
                }
            }
        }
    }
    if marks.iter().any(|&m| m != 1) {
        return bad("regions do not tile the sketch exactly once".into());
    }
    if replay(&result.provenance, corpora)? != result.level {
        return bad("replaying provenance does not reproduce the level".into());
    }
    Ok(())
}

/// Fraction of cells supplied by each domain.
pub fn domain_proportion(provenance: &ProvenanceGrid) -> BTreeMap<DomainId, f64> {
    let mut counts: BTreeMap<DomainId, usize> = BTreeMap::new();
    for s in provenance.cells() {
        *counts.entry(s.domain_id.clone()).or_default() += 1;
    }
    let total = provenance.len() as f64;
    counts.into_iter().map(|(k, v)| (k, v as f64 / total)).collect()
}

/// Element-category tallies of a blended level, classifying each tile with
/// the affordance map of the domain it came from.
pub fn blended_element_counts(
    level: &TileGrid,
    provenance: &ProvenanceGrid,
    corpora: &[DomainCorpus],
) -> Result<[u64; 6]> {
    let mut counts = [0u64; 6];
    for (tile, src) in level.cells().iter().zip(provenance.cells()) {
        let c = corpus_for(corpora, &src.domain_id)?;
        counts[c.affordance.element(*tile)?.index()] += 1;
    }
    Ok(counts)
}

pub fn blended_element_distribution(
    level: &TileGrid,
    provenance: &ProvenanceGrid,
    corpora: &[DomainCorpus],
) -> Result<[f64; 6]> {
    Ok(counts_to_distribution(&blended_element_counts(
        level, provenance, corpora,
    )?))
}
