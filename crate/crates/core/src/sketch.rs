//! The three-class structural abstraction of levels and the fixed-size
//! training segments cut from it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{AffordanceMap, DomainCorpus, DomainId, ElementCategory, TileGrid};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// A sketch-resolution cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchCell {
    /// `#`: solid or impassable.
    Solid,
    /// `-`: empty or passable.
    Empty,
    /// `?`: may be read as either solid or empty.
    Wildcard,
}

impl SketchCell {
    pub const ALL: [SketchCell; 3] = [SketchCell::Solid, SketchCell::Empty, SketchCell::Wildcard];

    /// One-hot channel index.
    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn from_channel(c: usize) -> Option<SketchCell> {
        Self::ALL.get(c).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            SketchCell::Solid => '#',
            SketchCell::Empty => '-',
            SketchCell::Wildcard => '?',
        }
    }

    pub fn from_symbol(c: char) -> Result<SketchCell> {
        match c {
            '#' => Ok(SketchCell::Solid),
            '-' => Ok(SketchCell::Empty),
            '?' => Ok(SketchCell::Wildcard),
            other => Err(Error::InvalidSketchSymbol(other)),
        }
    }

    pub fn default_element(self) -> ElementCategory {
        match self {
            SketchCell::Solid => ElementCategory::SolidObject,
            SketchCell::Empty => ElementCategory::EmptySpace,
            SketchCell::Wildcard => ElementCategory::Climbable,
        }
    }
}

impl fmt::Display for SketchCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

pub type SketchGrid = Grid<SketchCell>;

pub fn parse_sketch(text: &str) -> Result<SketchGrid> {
    let palette = SketchCell::ALL.iter().map(|c| c.symbol()).collect();
    let tiles = crate::corpus::parse_level(text, &palette)?;
    Ok(tiles.map(|&c| SketchCell::from_symbol(c).expect("palette-checked")))
}

pub fn sketch_to_text(sketch: &SketchGrid) -> String {
    crate::corpus::level_to_text(&sketch.map(|c| c.symbol()))
}

/// Maps every tile to its sketch class.
pub fn project_sketch(level: &TileGrid, affordance: &AffordanceMap) -> Result<SketchGrid> {
    let cells = level
        .cells()
        .iter()
        .map(|&s| affordance.sketch_class(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid::from_cells(level.height(), level.width(), cells))
}

/// Cells holding tiles the affordance map marks as out-of-level padding.
pub fn padding_mask(level: &TileGrid, affordance: &AffordanceMap) -> Grid<bool> {
    level.map(|&s| affordance.is_padding(s))
}

/// Fraction of cells in the given class.
pub fn class_fraction(sketch: &SketchGrid, class: SketchCell) -> f64 {
    if sketch.is_empty() {
        return 0.0;
    }
    sketch.cells().iter().filter(|&&c| c == class).count() as f64 / sketch.len() as f64
}

/// Where a segment was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSource {
    pub domain_id: DomainId,
    pub level: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub grid: SketchGrid,
    pub source: SegmentSource,
    /// True when the window covers at least one padding cell.
    pub touches_padding: bool,
}

/// Top-left offsets of every in-bounds `win_h x win_w` window at the given stride,
/// in row-major order.
pub fn window_offsets(dims: (usize, usize), win_h: usize, win_w: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    let (height, width) = dims;
    if win_h == 0 || win_w == 0 || win_h > height || win_w > width {
        return Err(Error::WindowTooLarge {
            win_h,
            win_w,
            height,
            width,
        });
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be at least 1".into()));
    }
    let mut out = Vec::new();
    for r in (0..=height - win_h).step_by(stride) {
        for c in (0..=width - win_w).step_by(stride) {
            out.push((r, c));
        }
    }
    Ok(out)
}

/// Slides a window over one sketch. Sources carry an empty domain id and
/// level 0; use [`corpus_segments`] to keep full provenance.
pub fn extract_segments(sketch: &SketchGrid, win_h: usize, win_w: usize, stride: usize) -> Result<Vec<Segment>> {
    extract_with_source(sketch, None, &DomainId::new(""), 0, win_h, win_w, stride)
}

fn extract_with_source(
    sketch: &SketchGrid,
    padding: Option<&Grid<bool>>,
    domain_id: &DomainId,
    level: usize,
    win_h: usize,
    win_w: usize,
    stride: usize,
) -> Result<Vec<Segment>> {
    let offsets = window_offsets(sketch.dims(), win_h, win_w, stride)?;
    Ok(offsets
        .into_iter()
        .map(|(row, col)| {
            let touches_padding =
                padding.is_some_and(|mask| (row..row + win_h).any(|r| (col..col + win_w).any(|c| *mask.get(r, c))));
            Segment {
                grid: sketch.window(row, col, win_h, win_w),
                source: SegmentSource {
                    domain_id: domain_id.clone(),
                    level,
                    row,
                    col,
                },
                touches_padding,
            }
        })
        .collect())
}

/// Drops degenerate training windows: those made entirely of empty cells and
/// those overlapping padding outside the level area. Order is preserved.
pub fn filter_segments(segments: Vec<Segment>) -> Vec<Segment> {
    segments
        .into_iter()
        .filter(|s| !s.touches_padding && s.grid.cells().iter().any(|&c| c != SketchCell::Empty))
        .collect()
}

/// Projects every level of a corpus and collects its filtered training
/// segments at the corpus window size.
pub fn corpus_segments(corpus: &DomainCorpus, stride: usize) -> Result<Vec<Segment>> {
    corpus_segments_sized(corpus, corpus.window_height, corpus.window_width, stride)
}

pub fn corpus_segments_sized(corpus: &DomainCorpus, win_h: usize, win_w: usize, stride: usize) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, level) in corpus.levels.iter().enumerate() {
        let sketch = project_sketch(level, &corpus.affordance)?;
        let mask = padding_mask(level, &corpus.affordance);
        out.extend(extract_with_source(
            &sketch,
            Some(&mask),
            &corpus.domain_id,
            i,
            win_h,
            win_w,
            stride,
        )?);
    }
    Ok(filter_segments(out))
}

/// One-hot encoding with shape `(3, height, width)`, channel-major.
pub fn encode_onehot(s: &SketchGrid) -> Vec<f64> {
    let plane = s.len();
    let mut out = vec![0.0; 3 * plane];
    for (i, c) in s.cells().iter().enumerate() {
        out[c.channel() * plane + i] = 1.0;
    }
    out
}

/// Per-cell argmax over a `(3, height, width)` channel-major array; ties go
/// to the lower channel.
pub fn decode_argmax(values: &[f64], height: usize, width: usize) -> SketchGrid {
    let plane = height * width;
    assert_eq!(values.len(), 3 * plane, "expected 3 channels of {height}x{width}");
    Grid::from_fn(height, width, |r, c| {
        let i = r * width + c;
        let mut best = 0;
        for ch in 1..3 {
            if values[ch * plane + i] > values[best * plane + i] {
                best = ch;
            }
        }
        SketchCell::from_channel(best).expect("channel < 3")
    })
}
