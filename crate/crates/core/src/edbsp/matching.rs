//! Wildcard pattern matching of sketch regions against corpus windows.
//!
//! Each sketch row is stored as two bitsets, one for solid cells and one for
//! empty cells; wildcards set neither. A window conflicts with a region iff
//! some row has `(region_solid & level_empty) | (region_empty & level_solid)`
//! non-zero, so a match test is a handful of word operations per row.

use serde::{Deserialize, Serialize};

use crate::corpus::{DomainCorpus, DomainId};
use crate::error::Result;
use crate::sketch::{project_sketch, SketchCell, SketchGrid};

/// Wildcard-aware equality of two sketch cells.
pub fn sketch_match(a: SketchCell, b: SketchCell) -> bool {
    a == b || a == SketchCell::Wildcard || b == SketchCell::Wildcard
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub domain_id: DomainId,
    pub level: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
struct RowMasks {
    words: usize,
    solid: Vec<u64>,
    empty: Vec<u64>,
}

impl RowMasks {
    fn new(sketch: &SketchGrid) -> Self {
        let words = sketch.width().div_ceil(64);
        let mut solid = vec![0u64; sketch.height() * words];
        let mut empty = vec![0u64; sketch.height() * words];
        for (r, row) in sketch.rows().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let (w, b) = (r * words + c / 64, c % 64);
                match cell {
                    SketchCell::Solid => solid[w] |= 1 << b,
                    SketchCell::Empty => empty[w] |= 1 << b,
                    SketchCell::Wildcard => {}
                }
            }
        }
        RowMasks { words, solid, empty }
    }

    /// Bits `[start, start + len)` of row `r`, `len <= 64`.
    fn bits(masks: &[u64], words: usize, r: usize, start: usize, len: usize) -> u64 {
        let base = r * words;
        let (w, b) = (start / 64, start % 64);
        let mut v = masks[base + w] >> b;
        if b != 0 && w + 1 < words {
            v |= masks[base + w + 1] << (64 - b);
        }
        if len < 64 {
            v &= (1u64 << len) - 1;
        }
        v
    }
}

/// One level's projected sketch and its masks.
#[derive(Debug, Clone)]
pub struct PreparedLevel {
    pub sketch: SketchGrid,
    masks: RowMasks,
}

impl PreparedLevel {
    pub fn new(sketch: SketchGrid) -> Self {
        let masks = RowMasks::new(&sketch);
        PreparedLevel { sketch, masks }
    }

    /// Whether the window at `(row, col)` matches `region`.
    fn matches_at(&self, region: &RowMasks, h: usize, w: usize, row: usize, col: usize) -> bool {
        let lm = &self.masks;
        for i in 0..h {
            let mut start = 0;
            while start < w {
                let len = (w - start).min(64);
                let k = start / 64;
                let rs = region.solid[i * region.words + k];
                let re = region.empty[i * region.words + k];
                let ls = RowMasks::bits(&lm.solid, lm.words, row + i, col + start, len);
                let le = RowMasks::bits(&lm.empty, lm.words, row + i, col + start, len);
                if (rs & le) | (re & ls) != 0 {
                    return false;
                }
                start += 64;
            }
        }
        true
    }
}

/// Projected sketches of every corpus level, ready for matching.
#[derive(Debug, Clone)]
pub struct MatchIndex<'a> {
    pub corpora: &'a [DomainCorpus],
    levels: Vec<Vec<PreparedLevel>>,
}

impl<'a> MatchIndex<'a> {
    pub fn new(corpora: &'a [DomainCorpus]) -> Result<Self> {
        let levels = corpora
            .iter()
            .map(|c| {
                c.levels
                    .iter()
                    .map(|l| project_sketch(l, &c.affordance).map(PreparedLevel::new))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatchIndex { corpora, levels })
    }

    pub fn level_sketch(&self, domain: usize, level: usize) -> &SketchGrid {
        &self.levels[domain][level].sketch
    }

    /// Every matching window, in (domain, level, row, col) order.
    pub fn find(&self, region: &SketchGrid) -> Vec<MatchCandidate> {
        let (h, w) = region.dims();
        let masks = RowMasks::new(region);
        let mut out = Vec::new();
        for (d, corpus) in self.corpora.iter().enumerate() {
            for (li, level) in self.levels[d].iter().enumerate() {
                let (lh, lw) = level.sketch.dims();
                if h > lh || w > lw {
                    continue;
                }
                for row in 0..=lh - h {
                    for col in 0..=lw - w {
                        if level.matches_at(&masks, h, w, row, col) {
                            out.push(MatchCandidate {
                                domain_id: corpus.domain_id.clone(),
                                level: li,
                                row,
                                col,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Every stride-1 window of every level that matches `region` cell-wise.
pub fn find_matches(region: &SketchGrid, corpora: &[DomainCorpus]) -> Result<Vec<MatchCandidate>> {
    Ok(MatchIndex::new(corpora)?.find(region))
}
