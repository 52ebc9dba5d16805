//! Binary space partitioning of a sketch rectangle.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl RegionRect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        RegionRect {
            row,
            col,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Splits before row `at` (relative to the region).
    pub fn split_rows(&self, at: usize) -> (RegionRect, RegionRect) {
        debug_assert!(at >= 1 && at < self.height);
        (
            RegionRect::new(self.row, self.col, at, self.width),
            RegionRect::new(self.row + at, self.col, self.height - at, self.width),
        )
    }

    /// Splits before column `at` (relative to the region).
    pub fn split_cols(&self, at: usize) -> (RegionRect, RegionRect) {
        debug_assert!(at >= 1 && at < self.width);
        (
            RegionRect::new(self.row, self.col, self.height, at),
            RegionRect::new(self.row, self.col + at, self.height, self.width - at),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub height: usize,
    pub width: usize,
    /// Regions in row-major order of their top-left corners.
    pub regions: Vec<RegionRect>,
}

/// How the BSP recursion decides to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StopRule {
    /// Split until no region side exceeds `size`; `None` uses the smaller
    /// sketch dimension.
    MaxRegion { size: Option<usize> },
    /// Split the largest region until there are `count` regions (or only
    /// single cells remain).
    RegionCount { count: usize },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::MaxRegion { size: None }
    }
}

/// Axis orientation of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Rows,
    Cols,
}

fn split(rect: &RegionRect, axis: Axis, rng: &mut impl Rng) -> (RegionRect, RegionRect) {
    match axis {
        Axis::Rows => rect.split_rows(rng.random_range(1..rect.height)),
        Axis::Cols => rect.split_cols(rng.random_range(1..rect.width)),
    }
}

/// Splits a region once along a random splittable axis at a random index.
/// Returns `None` for a 1x1 region.
pub fn split_once(rect: &RegionRect, rng: &mut impl Rng) -> Option<(RegionRect, RegionRect)> {
    let axis = match (rect.height > 1, rect.width > 1) {
        (false, false) => return None,
        (true, false) => Axis::Rows,
        (false, true) => Axis::Cols,
        (true, true) => {
            if rng.random_bool(0.5) {
                Axis::Rows
            } else {
                Axis::Cols
            }
        }
    };
    Some(split(rect, axis, rng))
}

fn finish(height: usize, width: usize, mut regions: Vec<RegionRect>) -> Partition {
    regions.sort();
    Partition { height, width, regions }
}

/// Size-bounded BSP: any region with a side longer than `max_region` is split
/// along that side (a random one if both are too long) at an index drawn
/// uniformly from `[1, side - 1]`.
pub fn bsp_partition(dims: (usize, usize), max_region: usize, rng: &mut impl Rng) -> Partition {
    assert!(max_region >= 1, "max_region must be at least 1");
    let (height, width) = dims;
    let mut pending = vec![RegionRect::new(0, 0, height, width)];
    let mut done = Vec::new();
    while let Some(rect) = pending.pop() {
        let axis = match (rect.height > max_region, rect.width > max_region) {
            (false, false) => {
                done.push(rect);
                continue;
            }
            (true, false) => Axis::Rows,
            (false, true) => Axis::Cols,
            (true, true) => {
                if rng.random_bool(0.5) {
                    Axis::Rows
                } else {
                    Axis::Cols
                }
            }
        };
        let (a, b) = split(&rect, axis, rng);
        pending.push(b);
        pending.push(a);
    }
    finish(height, width, done)
}

/// Count-bounded BSP: repeatedly splits the largest region (earliest on ties)
/// until `count` regions exist.
pub fn bsp_partition_count(dims: (usize, usize), count: usize, rng: &mut impl Rng) -> Partition {
    let (height, width) = dims;
    let mut regions = vec![RegionRect::new(0, 0, height, width)];
    while regions.len() < count.min(height * width) {
        let (i, _) = regions
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|(_, r)| r.area())
            .expect("non-empty");
        let rect = regions.remove(i);
        let (a, b) = split_once(&rect, rng).expect("largest region has area > 1");
        regions.insert(i, b);
        regions.insert(i, a);
    }
    finish(height, width, regions)
}

impl StopRule {
    pub fn partition(&self, dims: (usize, usize), rng: &mut impl Rng) -> Partition {
        match *self {
            StopRule::MaxRegion { size } => bsp_partition(dims, size.unwrap_or(dims.0.min(dims.1)).max(1), rng),
            StopRule::RegionCount { count } => bsp_partition_count(dims, count.max(1), rng),
        }
    }
}
